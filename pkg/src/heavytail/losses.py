"""Classification and pair losses, and positive/negative pair construction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import HeadTailPartition, LongTailDataset
from .model import Classifier
from .sampler import AugmentConfig, augment_batch

# singleton classes get a lightly mixed copy of the anchor as their positive
POSITIVE_FALLBACK = AugmentConfig(alpha=1.0, sigma=0.05, lam_min=0.9)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean softmax cross-entropy; works for linear and cosine logits alike."""
    losses = ad.softmax_cross_entropy(logits, np.asarray(targets, dtype=np.int64))
    return ad.mean(losses) if losses.ndim else losses


def intra_loss(f_x, f_xp) -> Tensor:
    """``1 - cos(f_x, f_xp)``; row-wise for batches."""
    return ad.sub(1.0, ad.cosine_similarity(f_x, f_xp))


def inter_loss(f_x, f_xp, f_xn) -> Tensor:
    """``max(cos(f_x, f_xn) - cos(f_x, f_xp), 0)``; row-wise for batches."""
    return ad.hinge(ad.sub(ad.cosine_similarity(f_x, f_xn), ad.cosine_similarity(f_x, f_xp)))


@dataclass(frozen=True)
class PairBatch:
    """Positives and negatives for a batch of anchors.

    ``positive_ids[i]`` is -1 when the positive is an augmented copy of the
    anchor (singleton class); ``positive_features`` always holds the vector
    actually used.
    """

    anchor_labels: np.ndarray
    positive_ids: np.ndarray
    positive_features: np.ndarray
    negative_ids: np.ndarray
    negative_features: np.ndarray

    def __len__(self) -> int:
        return len(self.anchor_labels)


def build_pairs(
    anchor_ids: np.ndarray,
    anchor_features: np.ndarray,
    ds: LongTailDataset,
    part: HeadTailPartition | None,
    rng: np.random.Generator,
) -> PairBatch:
    """Match each anchor with a same-class positive and a cross-side negative from ``ds``.

    Positives exclude the anchor itself; a class with a single instance
    falls back to an augmented copy of the anchor. Negatives are drawn
    uniformly from all examples of classes on the other side of ``part``;
    if that side has no examples, from any other class. With one class in
    total there are no negatives and ``negative_ids`` is empty.
    """
    anchor_ids = np.asarray(anchor_ids, dtype=np.int64)
    labels = ds.labels[anchor_ids]
    n = len(anchor_ids)
    pos_ids = np.empty(n, dtype=np.int64)
    for i, (a, c) in enumerate(zip(anchor_ids, labels)):
        members = ds.per_class_index[c]
        if len(members) >= 2:
            j = rng.integers(len(members) - 1)
            # skip over the anchor's own slot
            k = int(np.searchsorted(members, a))
            pos_ids[i] = members[j + 1] if j >= k else members[j]
        else:
            pos_ids[i] = -1
    pos_feats = ds.features[np.maximum(pos_ids, 0)].copy()
    single = pos_ids < 0
    if single.any():
        bg = ds.features[rng.integers(len(ds), size=int(single.sum()))]
        pos_feats[single] = augment_batch(np.asarray(anchor_features)[single], bg, rng, POSITIVE_FALLBACK)

    if ds.num_classes < 2:
        empty = np.empty(0, dtype=np.int64)
        return PairBatch(labels, pos_ids, pos_feats, empty, np.empty((0, ds.feature_dim)))

    pools: dict[int, np.ndarray] = {}
    neg_ids = np.empty(n, dtype=np.int64)
    for i, c in enumerate(labels):
        c = int(c)
        key = c if part is None else (0 if c in part.head else 1)
        pool = pools.get(key)
        if pool is None:
            sides = part.opposite(c) if part is not None else ()
            pool = np.concatenate([ds.per_class_index[o] for o in sorted(sides)] or [np.empty(0, np.int64)])
            if pool.size == 0:
                pool = np.flatnonzero(ds.labels != c)
            pools[key] = pool
        neg_ids[i] = pool[rng.integers(len(pool))]
    return PairBatch(labels, pos_ids, pos_feats, neg_ids, ds.features[neg_ids])


@dataclass
class LossTerms:
    ce: Tensor
    intra: Tensor | None
    inter: Tensor | None

    @property
    def total(self) -> Tensor:
        out = self.ce
        if self.intra is not None:
            out = ad.add(out, self.intra)
        if self.inter is not None:
            out = ad.add(out, self.inter)
        return out


def total_loss(model: Classifier, x: np.ndarray, y: np.ndarray, pairs: PairBatch | None = None) -> LossTerms:
    """CE on the anchors plus, when ``pairs`` is given, the mean intra and inter terms.

    Anchors, positives and negatives share one extractor pass so gradients
    reach the extractor through all three.
    """
    x = np.asarray(x, dtype=np.float64)
    if pairs is None:
        return LossTerms(cross_entropy(model.logits(x), y), None, None)
    n = len(x)
    has_neg = len(pairs.negative_ids) > 0
    stacked = [x, pairs.positive_features] + ([pairs.negative_features] if has_neg else [])
    feats = model.features(np.concatenate(stacked))
    f_x, f_p = feats[0:n], feats[n : 2 * n]
    ce = cross_entropy(model.head(f_x), y)
    intra = ad.mean(intra_loss(f_x, f_p))
    inter = ad.mean(inter_loss(f_x, f_p, feats[2 * n : 3 * n])) if has_neg else None
    return LossTerms(ce, intra, inter)
