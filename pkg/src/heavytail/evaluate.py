"""Top-1 evaluation with head/tail breakdown, comparison tables, embedding export."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .autodiff import l2_normalize
from .data import HeadTailPartition, LongTailDataset
from .model import Classifier


@dataclass
class EvalReport:
    method: str
    overall: float
    head: float
    tail: float
    per_class: list[float]
    confusion: list[list[int]]
    seeds: list[int] = field(default_factory=list)
    toggles: dict[str, bool] | None = None

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "overall": self.overall,
            "head": self.head,
            "tail": self.tail,
            "per_class": self.per_class,
            "confusion": self.confusion,
            "seeds": self.seeds,
        }
        if self.toggles is not None:
            d["toggles"] = self.toggles
        return d

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        return cls(
            d["method"], d["overall"], d["head"], d["tail"], d["per_class"], d["confusion"], d.get("seeds", []), d.get("toggles")
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> EvalReport:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def report_from_predictions(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    num_classes: int,
    part: HeadTailPartition,
    method: str = "",
    seeds: Sequence[int] = (),
) -> EvalReport:
    """Percent accuracies; head/tail are unweighted means over classes present in the test set."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    cm = confusion_matrix(y_true, y_pred, num_classes)
    support = cm.sum(axis=1)
    if len(set(support[support > 0].tolist())) > 1:
        warnings.warn("test set is not class-balanced; head/tail means are unweighted over classes", stacklevel=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(support > 0, 100.0 * np.diag(cm) / support, np.nan)

    def group_mean(classes) -> float:
        vals = [per_class[c] for c in sorted(classes) if support[c] > 0]
        return float(np.mean(vals)) if vals else float("nan")

    overall = 100.0 * float(np.trace(cm)) / float(cm.sum()) if cm.sum() else float("nan")
    return EvalReport(
        method=method,
        overall=overall,
        head=group_mean(part.head),
        tail=group_mean(part.tail),
        per_class=[float(v) for v in per_class],
        confusion=cm.tolist(),
        seeds=list(seeds),
    )


def evaluate(
    model: Classifier, test: LongTailDataset, part: HeadTailPartition, method: str = "", seeds: Sequence[int] = ()
) -> EvalReport:
    if test.feature_dim != model.extractor.input_dim:
        raise ValueError(f"test features have length {test.feature_dim}, checkpoint expects {model.extractor.input_dim}")
    if test.num_classes != model.num_classes:
        raise ValueError(f"test set has {test.num_classes} classes, checkpoint has {model.num_classes}")
    pred = model.predict(test.features)
    return report_from_predictions(test.labels, pred, test.num_classes, part, method, seeds)


# --- tables ---------------------------------------------------------------

@dataclass
class TableRow:
    label: str
    seeds: list[int]
    mean: dict[str, float]
    std: dict[str, float]
    toggles: dict[str, bool] | None = None


COLUMNS = ("head", "tail", "overall")


@dataclass
class Table:
    title: str
    rows: list[TableRow]

    def to_text(self) -> str:
        flags = any(r.toggles for r in self.rows)
        hdr = ["Method"] + (["EIS", "CN", "I-Loss"] if flags else []) + ["Head", "Tail", "Overall", "n"]
        body = []
        for r in self.rows:
            cells = [r.label]
            if flags:
                t = r.toggles or {}
                cells += ["x" if t.get(k) else "" for k in ("eis", "cn", "iloss")]
            cells += [f"{r.mean[c]:.1f} ± {r.std[c]:.1f}" for c in COLUMNS]
            cells.append(str(len(r.seeds)))
            body.append(cells)
        widths = [max(len(row[i]) for row in [hdr] + body) for i in range(len(hdr))]
        fmt = lambda row: "  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths)))  # noqa: E731
        rule = "-" * len(fmt(hdr))
        return "\n".join([self.title, rule, fmt(hdr), rule] + [fmt(b) for b in body] + [rule])

    def to_records(self) -> list[dict]:
        out = []
        for r in self.rows:
            rec = {"method": r.label, "seeds": r.seeds}
            for c in COLUMNS:
                rec[c] = r.mean[c]
                rec[f"{c}_std"] = r.std[c]
            if r.toggles is not None:
                rec["toggles"] = r.toggles
            out.append(rec)
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.to_records())


def _group(reports: Iterable[EvalReport]) -> list[list[EvalReport]]:
    groups: dict[str, list[EvalReport]] = {}
    for r in reports:
        groups.setdefault(r.method, []).append(r)
    return list(groups.values())


def compare(reports: Sequence[EvalReport], title: str = "Top-1 accuracy (%)") -> Table:
    """One row per method label in first-seen order; mean and sample std over seeds."""
    rows = []
    for grp in _group(reports):
        mean, std = {}, {}
        for c in COLUMNS:
            vals = np.array([getattr(r, c) for r in grp], dtype=np.float64)
            mean[c] = float(vals.mean())
            std[c] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        seeds = [s for r in grp for s in r.seeds]
        rows.append(TableRow(grp[0].method, seeds, mean, std, grp[0].toggles))
    return Table(title, rows)


def ablation_table(reports: Sequence[EvalReport]) -> Table:
    return compare(reports, title="Ablation: top-1 accuracy (%)")


# --- embeddings -----------------------------------------------------------

def export_embeddings(model: Classifier, ds: LongTailDataset, path, classes: Iterable[int] | None = None) -> int:
    """Write unit-norm features as ``emb v1 <d>`` then ``<label> <v...>`` rows; returns row count."""
    keep = np.ones(len(ds), dtype=bool) if classes is None else np.isin(ds.labels, sorted(set(classes)))
    feats = ds.features[keep]
    labels = ds.labels[keep]
    d = model.extractor.out_dim
    lines = [f"emb v1 {d}"]
    if len(feats):
        emb = l2_normalize(model.features(feats)).data
        for y, row in zip(labels, emb):
            lines.append(" ".join([str(int(y))] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return int(keep.sum())


def load_embeddings(path) -> tuple[np.ndarray, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = lines[0].split()
    if head[:2] != ["emb", "v1"] or len(head) != 3:
        raise ValueError(f"{path}: expected 'emb v1 <d>' header")
    d = int(head[2])
    rows = [line.split() for line in lines[1:] if line.strip()]
    labels = np.array([int(r[0]) for r in rows], dtype=np.int64)
    vecs = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64).reshape(len(rows), d)
    return labels, vecs
