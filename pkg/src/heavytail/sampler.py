"""Epoch-wise instance sampling with a sinusoidal per-class threshold.

Each epoch every class is brought to the same count: classes above the
threshold are under-sampled without replacement, classes at or below it keep
all their originals and are topped up with augmented repeats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetError, LabeledExample, LongTailDataset, round_half_up


def threshold_schedule(epoch: int, total_epochs: int, n_min: int, n_max: int) -> int:
    """Per-class sample count after ``epoch`` of ``total_epochs`` epochs.

    Rises from ``n_min`` at epoch 0 to ``n_max`` at the last epoch along a
    half cosine, rounded half-up and clamped to ``[n_min, n_max]``.
    """
    if total_epochs < 1:
        raise ValueError(f"total_epochs must be >= 1, got {total_epochs}")
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    if n_min > n_max:
        raise ValueError(f"n_min ({n_min}) > n_max ({n_max})")
    value = n_max - 0.5 * (n_max - n_min) * (1.0 + math.cos(math.pi * epoch / total_epochs))
    # cos() noise must not push an exact .5 across the rounding boundary
    t = round_half_up(round(value, 9))
    return min(max(t, n_min), n_max)


@dataclass(frozen=True)
class SamplerSchedule:
    n_min: int
    n_max: int
    total_epochs: int
    thresholds: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        ts = tuple(threshold_schedule(t, self.total_epochs, self.n_min, self.n_max) for t in range(self.total_epochs + 1))
        object.__setattr__(self, "thresholds", ts)

    @classmethod
    def for_dataset(cls, ds: LongTailDataset, total_epochs: int) -> SamplerSchedule:
        return cls(ds.n_min, ds.n_max, total_epochs)

    def __call__(self, epoch: int) -> int:
        if not 0 <= epoch <= self.total_epochs:
            raise ValueError(f"epoch {epoch} outside [0, {self.total_epochs}]")
        return self.thresholds[epoch]


@dataclass(frozen=True)
class EpochPlan:
    """Concrete per-class selection for one epoch.

    ``selection[c]`` holds ``(example_id, is_augmented)`` pairs.
    """

    epoch: int
    threshold: int
    selection: dict[int, list[tuple[int, bool]]]

    def __len__(self) -> int:
        return sum(len(v) for v in self.selection.values())

    def sizes(self) -> list[int]:
        return [len(self.selection[c]) for c in sorted(self.selection)]

    def augmented_count(self, c: int) -> int:
        return sum(1 for _, aug in self.selection[c] if aug)

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        """All entries as ``(ids, is_augmented)`` arrays in class order."""
        ids, flags = [], []
        for c in sorted(self.selection):
            for i, a in self.selection[c]:
                ids.append(i)
                flags.append(a)
        return np.array(ids, dtype=np.int64), np.array(flags, dtype=bool)


def compose_epoch(ds: LongTailDataset, schedule: SamplerSchedule, epoch: int, seed: int) -> EpochPlan:
    threshold = schedule(epoch)
    rng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
    selection: dict[int, list[tuple[int, bool]]] = {}
    for c, ids in enumerate(ds.per_class_index):
        n = len(ids)
        if n == 0:
            raise DatasetError(f"class {c} has no examples; the sampler needs every class populated")
        if n > threshold:
            picked = rng.choice(ids, size=threshold, replace=False)
            selection[c] = [(int(i), False) for i in picked]
        else:
            extra = rng.choice(ids, size=threshold - n, replace=True)
            selection[c] = [(int(i), False) for i in ids] + [(int(i), True) for i in extra]
    return EpochPlan(epoch, threshold, selection)


@dataclass(frozen=True)
class AugmentConfig:
    """Feature-space mixing: ``lam * x + (1 - lam) * background`` plus jitter.

    ``lam`` is a Beta(alpha, alpha) draw folded onto [0.5, 1) and then mapped
    affinely onto ``[lam_min, 1)``.
    """

    alpha: float = 1.0
    sigma: float = 0.05
    lam_min: float = 0.5

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.5 <= self.lam_min <= 1.0:
            raise ValueError("lam_min must lie in [0.5, 1]")


def draw_lambda(rng: np.random.Generator, size: int, cfg: AugmentConfig) -> np.ndarray:
    raw = rng.beta(cfg.alpha, cfg.alpha, size=size)
    folded = np.maximum(raw, 1.0 - raw)
    folded = np.minimum(folded, np.nextafter(1.0, 0.0))
    return cfg.lam_min + (folded - 0.5) * (1.0 - cfg.lam_min) / 0.5


def augment_batch(
    features: np.ndarray, background: np.ndarray, rng: np.random.Generator, cfg: AugmentConfig = AugmentConfig()
) -> np.ndarray:
    """Row-wise mix of ``features`` with ``background`` (both ``[B, d]``)."""
    if features.shape != background.shape:
        raise ValueError(f"shape mismatch {features.shape} vs {background.shape}")
    lam = draw_lambda(rng, features.shape[0], cfg)[:, None]
    mixed = lam * features + (1.0 - lam) * background
    if cfg.sigma:
        mixed = mixed + cfg.sigma * rng.standard_normal(mixed.shape)
    return mixed


def augment(
    x: LabeledExample, background: LabeledExample, rng: np.random.Generator, cfg: AugmentConfig = AugmentConfig()
) -> LabeledExample:
    mixed = augment_batch(x.features[None, :], background.features[None, :], rng, cfg)[0]
    return LabeledExample(mixed, x.label)


def ros_epoch(ds: LongTailDataset, rng: np.random.Generator) -> np.ndarray:
    """Random over-sampling: every class repeated with replacement up to ``n_max``."""
    target = ds.n_max
    out = []
    for ids in ds.per_class_index:
        if len(ids) == 0:
            continue
        out.append(ids)
        if len(ids) < target:
            out.append(rng.choice(ids, size=target - len(ids), replace=True))
    return np.concatenate(out).astype(np.int64)


def rus_epoch(ds: LongTailDataset, rng: np.random.Generator) -> np.ndarray:
    """Random under-sampling: ``n_min`` distinct examples from every class."""
    target = ds.n_min
    out = [rng.choice(ids, size=target, replace=False) for ids in ds.per_class_index if len(ids)]
    return np.concatenate(out).astype(np.int64)
