"""MLP feature extractor plus linear and cosine-normalized classifier heads."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _as_batch(x) -> tuple[Tensor, bool]:
    t = ad.as_tensor(x)
    if t.ndim == 1:
        return ad.reshape(t, (1, t.shape[0])), True
    return t, False


def _unbatch(t: Tensor, single: bool) -> Tensor:
    return ad.reshape(t, (t.shape[1],)) if single else t


class MlpExtractor:
    """Fully connected feature extractor; relu between layers, linear output."""

    def __init__(self, input_dim: int, widths: Sequence[int] = (64, 32), seed: int = 0):
        self.input_dim = int(input_dim)
        self.widths = tuple(int(w) for w in widths)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 10]))
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        fan_in = self.input_dim
        for w in self.widths:
            self.weights.append(_uniform(rng, (w, fan_in), fan_in))
            self.biases.append(_uniform(rng, (w,), fan_in))
            fan_in = w

    @property
    def out_dim(self) -> int:
        return self.widths[-1] if self.widths else self.input_dim

    def parameters(self) -> list[Tensor]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"extractor.{i}.weight"] = w
            out[f"extractor.{i}.bias"] = b
        return out

    def __call__(self, x) -> Tensor:
        return self.extract(x)

    def extract(self, x) -> Tensor:
        h, single = _as_batch(x)
        if h.shape[1] != self.input_dim:
            raise ad.ShapeError(f"extractor expects inputs of length {self.input_dim}, got {h.shape[1]}")
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.add_rowwise(ad.matmul(h, ad.transpose(w)), b)
            if i < last:
                h = ad.relu(h)
        return _unbatch(h, single)


class LinearHead:
    """``logits = W h + b``."""

    kind = "linear"

    def __init__(self, feature_dim: int, num_classes: int, seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 20]))
        self.weight = _uniform(rng, (num_classes, feature_dim), feature_dim)
        bias_rng = np.random.default_rng(np.random.SeedSequence([seed, 21]))
        self.bias = _uniform(bias_rng, (num_classes,), feature_dim)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def named_parameters(self) -> dict[str, Tensor]:
        return {"head.weight": self.weight, "head.bias": self.bias}

    def __call__(self, h) -> Tensor:
        return linear_logits(h, self)


class CosineHead:
    """``logits_i = tau * cos(W_i, h)``; no bias, learnable ``tau`` starting at 1."""

    kind = "cosine"

    def __init__(self, feature_dim: int, num_classes: int, seed: int = 0, tau: float = 1.0, tau_min: float | None = None):
        # same weight stream as LinearHead so ablation arms start from the same W
        rng = np.random.default_rng(np.random.SeedSequence([seed, 20]))
        self.weight = _uniform(rng, (num_classes, feature_dim), feature_dim)
        self.tau = Tensor(tau, requires_grad=True)
        self.tau_min = tau_min

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.tau]

    def named_parameters(self) -> dict[str, Tensor]:
        return {"head.weight": self.weight, "head.tau": self.tau}

    def clamp(self) -> None:
        if self.tau_min is not None and self.tau.data < self.tau_min:
            self.tau.data[...] = self.tau_min

    def __call__(self, h) -> Tensor:
        return cosine_logits(h, self)


def linear_logits(h, head: LinearHead) -> Tensor:
    hb, single = _as_batch(h)
    if hb.shape[1] != head.weight.shape[1]:
        raise ad.ShapeError(f"features of length {hb.shape[1]} do not fit head of width {head.weight.shape[1]}")
    out = ad.add_rowwise(ad.matmul(hb, ad.transpose(head.weight)), head.bias)
    return _unbatch(out, single)


def cosine_logits(h, head: CosineHead) -> Tensor:
    hb, single = _as_batch(h)
    if hb.shape[1] != head.weight.shape[1]:
        raise ad.ShapeError(f"features of length {hb.shape[1]} do not fit head of width {head.weight.shape[1]}")
    cos = ad.matmul(ad.l2_normalize(hb), ad.transpose(ad.l2_normalize(head.weight)))
    return _unbatch(ad.mul(head.tau, cos), single)


@dataclass
class Classifier:
    """Extractor and head trained together."""

    extractor: MlpExtractor
    head: LinearHead | CosineHead
    num_classes: int
    meta: dict[str, str] | None = None

    @classmethod
    def build(
        cls,
        input_dim: int,
        num_classes: int,
        widths: Sequence[int] = (64, 32),
        head: str = "cosine",
        seed: int = 0,
        tau_min: float | None = None,
    ) -> Classifier:
        ext = MlpExtractor(input_dim, widths, seed)
        if head == "cosine":
            h = CosineHead(ext.out_dim, num_classes, seed, tau_min=tau_min)
        elif head == "linear":
            h = LinearHead(ext.out_dim, num_classes, seed)
        else:
            raise ValueError(f"unknown head {head!r}")
        return cls(ext, h, num_classes)

    def parameters(self) -> list[Tensor]:
        return self.extractor.parameters() + self.head.parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        return {**self.extractor.named_parameters(), **self.head.named_parameters()}

    def features(self, x) -> Tensor:
        return self.extractor.extract(x)

    def logits(self, x) -> Tensor:
        return self.head(self.features(x))

    def predict(self, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        """Argmax class per row; ties go to the lowest index."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = [np.argmax(self.logits(x[i : i + batch_size]).data, axis=1) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.empty(0, dtype=np.int64)

    def describe(self) -> dict[str, str]:
        info = {
            "head": self.head.kind,
            "input_dim": str(self.extractor.input_dim),
            "widths": ",".join(str(w) for w in self.extractor.widths),
            "num_classes": str(self.num_classes),
        }
        if isinstance(self.head, CosineHead) and self.head.tau_min is not None:
            info["tau_min"] = repr(float(self.head.tau_min))
        info.update(self.meta or {})
        return info


# --- checkpoints ----------------------------------------------------------

CKPT_HEADER = "ckpt v1"


class CheckpointError(ValueError):
    pass


def _encode_meta(meta: dict[str, str]) -> str:
    for k, v in meta.items():
        if any(ch.isspace() or ch == "=" for ch in k) or any(ch.isspace() for ch in v):
            raise CheckpointError(f"metadata {k!r}={v!r} must not contain whitespace")
    return "meta " + " ".join(f"{k}={meta[k]}" for k in sorted(meta))


def dumps_checkpoint(tensors: dict[str, np.ndarray], meta: dict[str, str] | None = None) -> str:
    """Flat key -> tensor map; shape then row-major values, floats via ``repr``."""
    lines = [CKPT_HEADER, _encode_meta(meta or {})]
    for key in sorted(tensors):
        arr = np.asarray(tensors[key], dtype=np.float64)
        shape = ",".join(str(s) for s in arr.shape) or "-"
        values = " ".join(repr(float(v)) for v in arr.ravel())
        lines.append(f"tensor {key} {shape} {values}".rstrip())
    return "\n".join(lines) + "\n"


def loads_checkpoint(text: str) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != CKPT_HEADER:
        raise CheckpointError(f"line 1: expected {CKPT_HEADER!r}")
    if len(lines) < 2 or not lines[1].startswith("meta"):
        raise CheckpointError("line 2: expected metadata line")
    meta = {}
    for item in lines[1].split()[1:]:
        k, sep, v = item.partition("=")
        if not sep:
            raise CheckpointError(f"line 2: bad metadata item {item!r}")
        meta[k] = v
    tensors: dict[str, np.ndarray] = {}
    for n, line in enumerate(lines[2:], start=3):
        parts = line.split()
        if len(parts) < 3 or parts[0] != "tensor":
            raise CheckpointError(f"line {n}: expected 'tensor <key> <shape> <values...>'")
        key, shape_s = parts[1], parts[2]
        try:
            shape = () if shape_s == "-" else tuple(int(s) for s in shape_s.split(","))
            values = np.array([float(v) for v in parts[3:]], dtype=np.float64)
        except ValueError as e:
            raise CheckpointError(f"line {n}: {e}") from None
        if values.size != int(np.prod(shape)):
            raise CheckpointError(f"line {n}: {key} has {values.size} values for shape {shape}")
        tensors[key] = values.reshape(shape)
    return tensors, meta


def save_checkpoint(model: Classifier, path) -> None:
    state = {k: t.data for k, t in model.named_parameters().items()}
    Path(path).write_text(dumps_checkpoint(state, model.describe()), encoding="utf-8", newline="\n")


def load_checkpoint(path) -> Classifier:
    tensors, meta = loads_checkpoint(Path(path).read_text(encoding="utf-8"))
    try:
        widths = tuple(int(w) for w in meta["widths"].split(",") if w)
        tau_min = float(meta["tau_min"]) if "tau_min" in meta else None
        model = Classifier.build(int(meta["input_dim"]), int(meta["num_classes"]), widths, meta["head"], tau_min=tau_min)
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"{path}: incomplete metadata ({e})") from None
    params = model.named_parameters()
    if set(params) != set(tensors):
        raise CheckpointError(f"{path}: tensor keys {sorted(tensors)} do not match model {sorted(params)}")
    for k, t in params.items():
        if t.shape != tensors[k].shape:
            raise CheckpointError(f"{path}: {k} has shape {tensors[k].shape}, model expects {t.shape}")
        t.data[...] = tensors[k]
    known = {"head", "input_dim", "widths", "num_classes", "tau_min"}
    model.meta = {k: v for k, v in meta.items() if k not in known}
    return model
