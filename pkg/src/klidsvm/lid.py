"""Maximum-likelihood LID estimation, kernel LID and class-conditional variants."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, DataError
from .kernel import KernelSpec, distance_from_sq, sq_distances

LID_FLOOR = 1e-3
LID_CAP = 1e6


@dataclass(frozen=True)
class LidConfig:
    k_neighbors: int = 20
    minibatch_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.k_neighbors < self.minibatch_size:
            raise ValueError("need 2 <= k_neighbors < minibatch_size")


@dataclass(frozen=True)
class KlidRecord:
    sample_id: int
    in_class: float
    out_class: float
    cross_class: float


def lid_mle(distances) -> float:
    """MLE of local intrinsic dimensionality from neighbour distances.

    ``-1 / mean(log(r_i / r_max))`` over all given distances, r_max included.
    A degenerate neighbourhood (all distances equal) returns ``LID_CAP``.
    """
    r = np.asarray(distances, dtype=float).ravel()
    if r.size < 2:
        raise ValueError("need at least two distances")
    if np.any(r <= 0) or not np.all(np.isfinite(r)):
        raise ValueError("distances must be positive and finite")
    return float(lid_mle_rows(r[None, :])[0])


def lid_mle_rows(R: np.ndarray) -> np.ndarray:
    """Row-wise :func:`lid_mle` on a matrix of positive distances."""
    R = np.asarray(R, dtype=float)
    logs = np.log(R) - np.log(R.max(axis=1, keepdims=True))
    m = logs.mean(axis=1)
    with np.errstate(divide="ignore"):
        est = np.where(m < 0, -1.0 / np.where(m < 0, m, -1.0), LID_CAP)
    return np.clip(est, LID_FLOOR, LID_CAP)


def _knn_rows(T: np.ndarray, k: int) -> np.ndarray:
    """The ``k`` smallest entries of each row (unsorted)."""
    if T.shape[1] > k:
        T = np.partition(T, k - 1, axis=1)[:, :k]
    # identical points give zero distance; keep them strictly positive
    return np.maximum(T, np.finfo(float).tiny)


def klid_mle(spec: KernelSpec, x, neighbors, cfg: LidConfig) -> float:
    """Kernel LID of ``x`` against ``neighbors`` (which must not contain ``x``)."""
    neighbors = np.atleast_2d(np.asarray(neighbors, dtype=float))
    if neighbors.shape[0] < cfg.k_neighbors:
        raise ValueError("fewer neighbours than k_neighbors")
    t = distance_from_sq(spec, sq_distances(np.atleast_2d(x), neighbors))
    return float(lid_mle_rows(_knn_rows(t, cfg.k_neighbors))[0])


def class_conditional_klid(ds: Dataset, spec: KernelSpec, cfg: LidConfig,
                           labels=None) -> list:
    """In-, out- and cross-class K-LID for every sample of ``ds``.

    ``labels`` overrides ``ds.labels`` (used when the defense simulates
    extra flips). For each sample one mini-batch is drawn uniformly without
    replacement from its own class (itself excluded) and one from the other
    class, each of size ``min(minibatch_size, available)``.
    """
    return [KlidRecord(int(i), float(a), float(b), float(c))
            for i, a, b, c in zip(ds.ids, *class_conditional_arrays(ds, spec, cfg, labels))]


@dataclass(frozen=True)
class NeighborSets:
    """Squared Euclidean distances to each sample's k nearest mini-batch members.

    The kernel distance is a monotone function of the Euclidean one, so the
    k-NN sets are shared by every gamma and only the distances are re-mapped.
    """

    in_sq: np.ndarray
    out_sq: np.ndarray


def draw_neighbors(ds: Dataset, cfg: LidConfig, labels=None) -> NeighborSets:
    y = ds.labels if labels is None else np.asarray(labels, dtype=float)
    k = cfg.k_neighbors
    members = {c: np.flatnonzero(y == c) for c in (1, -1)}
    for c, idx in members.items():
        if len(idx) < k + 1:
            raise DataError(f"class {c:+d} has {len(idx)} samples; need at least {k + 1}")
    sq = sq_distances(ds.features, ds.features)
    rng = np.random.default_rng(cfg.seed)
    in_sq = np.empty((ds.n, k))
    out_sq = np.empty((ds.n, k))
    for i in range(ds.n):
        own = members[y[i]]
        own = own[own != i]
        other = members[-y[i]]
        in_batch = rng.choice(own, size=min(cfg.minibatch_size, len(own)), replace=False)
        out_batch = rng.choice(other, size=min(cfg.minibatch_size, len(other)), replace=False)
        in_sq[i] = np.sort(sq[i, in_batch])[:k]
        out_sq[i] = np.sort(sq[i, out_batch])[:k]
    return NeighborSets(in_sq, out_sq)


def klid_from_neighbors(spec: KernelSpec, nb: NeighborSets):
    """``(in, out, cross)`` K-LID arrays for precomputed neighbour sets."""
    tiny = np.finfo(float).tiny
    in_lid = lid_mle_rows(np.maximum(distance_from_sq(spec, nb.in_sq), tiny))
    out_lid = lid_mle_rows(np.maximum(distance_from_sq(spec, nb.out_sq), tiny))
    return in_lid, out_lid, in_lid / out_lid


def class_conditional_arrays(ds: Dataset, spec: KernelSpec, cfg: LidConfig, labels=None):
    """Array form of :func:`class_conditional_klid`: ``(in, out, cross)``."""
    return klid_from_neighbors(spec, draw_neighbors(ds, cfg, labels))
