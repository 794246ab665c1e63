"""Single-stage training loop and the resampling baselines."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import SGD
from .data import CountThreshold, HeadTailPartition, LongTailDataset, MedianSplit, partition_head_tail
from .losses import build_pairs, total_loss
from .model import Classifier, CosineHead
from .sampler import AugmentConfig, SamplerSchedule, augment_batch, compose_epoch, ros_epoch, rus_epoch

logger = logging.getLogger(__name__)

METHODS = ("baseline_ce", "ros", "rus", "ours")

# component ablation arms: (label, eis, cn, iloss)
ABLATION_ARMS = (
    ("baseline", False, False, False),
    ("EIS", True, False, False),
    ("CN", False, True, False),
    ("CN+I-Loss", False, True, True),
    ("EIS+CN+I-Loss", True, True, True),
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.1
    momentum: float = 0.0
    weight_decay: float = 0.0
    seed: int = 0
    method: str = "ours"
    eis: bool = True
    cn: bool = True
    iloss: bool = True
    widths: tuple[int, ...] = (64, 32)
    rule: str = "count_threshold"
    head_k: int = 20
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    tau_min: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.rule not in ("count_threshold", "median_split"):
            raise ConfigError(f"unknown head/tail rule {self.rule!r}")

    @property
    def components(self) -> tuple[bool, bool, bool]:
        """Effective (eis, cn, iloss); only ``ours`` honours the toggles."""
        if self.method == "ours":
            return self.eis, self.cn, self.iloss
        return False, False, False

    @property
    def label(self) -> str:
        if self.method != "ours":
            return self.method
        eis, cn, il = self.components
        parts = [n for n, on in (("EIS", eis), ("CN", cn), ("I-Loss", il)) if on]
        if len(parts) == 3:
            return "ours"
        return "+".join(parts) if parts else "baseline"

    def partition_rule(self):
        return CountThreshold(self.head_k) if self.rule == "count_threshold" else MedianSplit()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d


def arm_config(base: TrainConfig, eis: bool, cn: bool, iloss: bool) -> TrainConfig:
    return replace(base, method="ours", eis=eis, cn=cn, iloss=iloss)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    samples: int
    threshold: int | None
    ce: float
    intra: float | None
    inter: float | None
    tau: float | None


@dataclass
class RunRecord:
    label: str
    seed: int
    epochs: list[EpochRecord] = field(default_factory=list)
    checkpoint: str | None = None

    def to_jsonl(self) -> str:
        lines = []
        for e in self.epochs:
            rec = {"label": self.label, "seed": self.seed, **asdict(e)}
            if self.checkpoint is not None:
                rec["checkpoint"] = self.checkpoint
            lines.append(json.dumps(rec, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path) -> RunRecord:
        rows = [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
        if not rows:
            raise ValueError(f"{path}: empty run record")
        names = EpochRecord.__dataclass_fields__
        rec = cls(rows[0]["label"], rows[0]["seed"], checkpoint=rows[0].get("checkpoint"))
        rec.epochs = [EpochRecord(**{k: r[k] for k in names}) for r in rows]
        return rec


def cosine_lr(lr0: float, epoch: int, total: int) -> float:
    """``lr0 * (1 + cos(pi * epoch / total)) / 2`` with ``epoch`` counted from 0."""
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total))


def build_model(ds: LongTailDataset, cfg: TrainConfig) -> Classifier:
    _, cn, _ = cfg.components
    return Classifier.build(
        ds.feature_dim, ds.num_classes, cfg.widths, "cosine" if cn else "linear", seed=cfg.seed, tau_min=cfg.tau_min
    )


def resolve_partition(ds: LongTailDataset, cfg: TrainConfig) -> HeadTailPartition | None:
    """Head/tail split used for negative pairs; ``None`` for single-class data."""
    if ds.num_classes < 2:
        return None
    return partition_head_tail(ds, cfg.partition_rule())


def _epoch_sample(ds, cfg, schedule, epoch, rng):
    """Example ids, augmentation flags and (for EIS) the threshold for one epoch."""
    eis, _, _ = cfg.components
    if eis:
        # epochs are 1-based in the threshold schedule: the last epoch sees n_max
        plan = compose_epoch(ds, schedule, epoch + 1, seed=int(rng.integers(2**63)))
        ids, flags = plan.flat()
        return ids, flags, plan.threshold
    if cfg.method == "ros":
        ids = ros_epoch(ds, rng)
    elif cfg.method == "rus":
        ids = rus_epoch(ds, rng)
    else:
        ids = np.arange(len(ds), dtype=np.int64)
    return ids, np.zeros(len(ids), dtype=bool), None


def train(ds: LongTailDataset, cfg: TrainConfig) -> tuple[Classifier, RunRecord]:
    """Train one run; fully determined by ``(ds, cfg)``."""
    if len(ds) == 0:
        raise ConfigError("training set is empty")
    eis, cn, iloss = cfg.components
    part = resolve_partition(ds, cfg) if iloss else None
    if eis and np.any(ds.counts == 0):
        raise ConfigError("EIS needs every class to have at least one example")

    model = build_model(ds, cfg)
    model.meta = {"label": cfg.label, "seed": str(cfg.seed)}
    if part is not None:
        model.meta["head_classes"] = ",".join(str(c) for c in sorted(part.head))
    opt = SGD(model.parameters(), cfg.lr, cfg.momentum, cfg.weight_decay)
    schedule = SamplerSchedule.for_dataset(ds, cfg.epochs) if eis else None
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1000]))
    record = RunRecord(cfg.label, cfg.seed)

    for epoch in range(cfg.epochs):
        opt.lr = cosine_lr(cfg.lr, epoch, cfg.epochs)
        ids, flags, threshold = _epoch_sample(ds, cfg, schedule, epoch, rng)
        order = rng.permutation(len(ids))
        ids, flags = ids[order], flags[order]

        sums = {"ce": 0.0, "intra": 0.0, "inter": 0.0}
        for start in range(0, len(ids), cfg.batch_size):
            b_ids, b_aug = ids[start : start + cfg.batch_size], flags[start : start + cfg.batch_size]
            x = ds.features[b_ids].copy()
            if b_aug.any():
                bg = ds.features[rng.integers(len(ds), size=int(b_aug.sum()))]
                x[b_aug] = augment_batch(x[b_aug], bg, rng, cfg.augment)
            y = ds.labels[b_ids]
            pairs = build_pairs(b_ids, x, ds, part, rng) if iloss else None

            terms = total_loss(model, x, y, pairs)
            opt.zero_grad()
            terms.total.backward()
            opt.step()
            if isinstance(model.head, CosineHead):
                model.head.clamp()

            w = len(b_ids)
            sums["ce"] += terms.ce.item() * w
            if terms.intra is not None:
                sums["intra"] += terms.intra.item() * w
            if terms.inter is not None:
                sums["inter"] += terms.inter.item() * w

        n = len(ids)
        tau = model.head.tau.item() if isinstance(model.head, CosineHead) else None
        record.epochs.append(
            EpochRecord(
                epoch=epoch,
                lr=opt.lr,
                samples=n,
                threshold=threshold,
                ce=sums["ce"] / n,
                intra=sums["intra"] / n if iloss else None,
                inter=sums["inter"] / n if iloss and ds.num_classes > 1 else None,
                tau=tau,
            )
        )
        if tau is not None and not math.isfinite(tau):
            raise FloatingPointError(f"temperature diverged at epoch {epoch}")
        logger.debug("%s seed=%d epoch=%d ce=%.4f", cfg.label, cfg.seed, epoch, record.epochs[-1].ce)
    return model, record
