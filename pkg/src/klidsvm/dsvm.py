"""Distributed weighted SVM: M nodes exchanging support vectors through a fusion center.

The equality constraint of the dual is replaced by the quadratic penalty
``-(M Z / 2) (sum_i alpha_i y_i)^2``, which decouples the nodes: each node
ascends its own block with closed-form coordinate steps while the fusion
center broadcasts the running sum ``sum_i alpha_i y_i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import DataError, Dataset
from .kernel import gram_matrix
from .svm import SvmConfig, TrainedModel, bias_from_gradient, error_rate, train_weighted_svm


@dataclass(frozen=True)
class DsvmConfig:
    M: int = 5
    Z: float = 10.0
    rounds_max: int = 50
    convergence_tol: float = 1e-3
    sv_threshold: float | None = None  # None -> 1e-8 * C
    sweeps: int = 5
    # consecutive rounds with a validation-error change below the tolerance
    patience: int = 2
    # start from each node's exact local solution instead of zero
    warm_start: bool = True

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if not self.Z > 0:
            raise ValueError("Z must be positive")
        if self.rounds_max < 1 or self.sweeps < 1 or self.patience < 1:
            raise ValueError("rounds_max, sweeps and patience must be positive")

    def threshold(self, C: float) -> float:
        return 1e-8 * C if self.sv_threshold is None else self.sv_threshold


@dataclass(frozen=True)
class SupportPool:
    """(feature, label, alpha) triples a node has received, keyed by sample id."""

    ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    alpha: np.ndarray

    @classmethod
    def empty(cls, d: int) -> "SupportPool":
        return cls(np.empty(0, dtype=int), np.empty((0, d)), np.empty(0), np.empty(0))

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class NodeState:
    node_id: int
    shard: Dataset
    alpha_block: np.ndarray
    beta_block: np.ndarray
    received_svs: SupportPool

    def __post_init__(self):
        if np.intersect1d(self.received_svs.ids, self.shard.ids).size:
            raise ValueError("received_svs must not contain the node's own samples")


@dataclass
class DsvmTrace:
    n: int
    M: int
    objective: list = field(default_factory=list)
    validation_error: list = field(default_factory=list)
    points_sent_up: list = field(default_factory=list)
    points_sent_down: list = field(default_factory=list)
    step_size: list = field(default_factory=list)
    converged: bool = False
    models: list = field(default_factory=list)

    @property
    def rounds(self) -> int:
        return len(self.objective)

    @property
    def n_support(self) -> int:
        """Support vectors of the final shared solution."""
        return self.models[0].n_support if self.models else 0

    def rows(self) -> list:
        return [{"round": r + 1, "objective": self.objective[r],
                 "validation_error": self.validation_error[r],
                 "points_sent_up": self.points_sent_up[r],
                 "points_sent_down": self.points_sent_down[r],
                 "step_size": self.step_size[r]} for r in range(self.rounds)]


def _partition_indices(ds: Dataset, M: int, seed: int, retries: int = 100) -> list:
    if M < 1:
        raise ValueError("M must be at least 1")
    if ds.n < M:
        raise DataError(f"{ds.n} samples cannot fill {M} shards")
    rng = np.random.default_rng(seed)
    for _ in range(retries):
        parts = np.array_split(rng.permutation(ds.n), M)
        if all(np.unique(ds.labels[p]).size == 2 for p in parts):
            return [np.sort(p) for p in parts]
    raise DataError(f"could not give every one of {M} shards both classes in {retries} draws")


def partition(ds: Dataset, M: int, seed: int = 0) -> list:
    """Split ``ds`` into ``M`` disjoint shards of near-equal size, each holding both classes."""
    return [ds.subset(p) for p in _partition_indices(ds, M, seed)]


def node_local_step(node: NodeState, global_sum: float, cfg: DsvmConfig,
                    svm_cfg: SvmConfig) -> NodeState:
    """Coordinate ascent on the node's block of the penalized dual.

    Other nodes enter only through ``received_svs`` and ``global_sum``. Each
    coordinate moves to the clipped maximizer
    ``alpha_i + g_i / (k_ii + M Z)`` of the one-dimensional quadratic.
    """
    X, y = node.shard.features, node.shard.labels
    K_own = gram_matrix(svm_cfg.kernel, X)
    pool = node.received_svs
    alpha = node.alpha_block.copy()
    upper = svm_cfg.C * node.beta_block
    f = K_own @ (alpha * y)
    if len(pool):
        f += gram_matrix(svm_cfg.kernel, X, pool.features) @ (pool.alpha * pool.labels)
    mz = cfg.M * cfg.Z
    s = float(global_sum)
    for _ in range(cfg.sweeps):
        for i in range(len(alpha)):
            g = 1.0 - y[i] * f[i] - mz * y[i] * s
            new = min(max(alpha[i] + g / (K_own[i, i] + mz), 0.0), upper[i])
            delta = new - alpha[i]
            if delta != 0.0:
                alpha[i] = new
                f += delta * y[i] * K_own[:, i]
                s += delta * y[i]
    return replace(node, alpha_block=alpha)


def penalized_objective(alpha, K, y, mz) -> float:
    """``sum alpha - 0.5 alpha' Q alpha - (mz / 2) (y' alpha)^2``."""
    v = alpha * y
    return float(alpha.sum() - 0.5 * v @ K @ v - 0.5 * mz * (y @ alpha) ** 2)


def _line_search(alpha, D, K, y, mz) -> float:
    """Exact maximizer over [0, 1] of the concave objective along ``D``."""
    v, w = alpha * y, D * y
    slope = D.sum() - w @ K @ v - mz * (y @ alpha) * (y @ D)
    curv = w @ K @ w + mz * (y @ D) ** 2
    if curv <= 0:
        return 1.0 if slope > 0 else 0.0
    return float(np.clip(slope / curv, 0.0, 1.0))


def _pool_model(ds, alpha, beta, K, svm_cfg, threshold, own=None) -> TrainedModel:
    """Model over the retained SVs (plus every sample in ``own``) with the shared bias."""
    y = ds.labels
    sv = alpha > threshold
    keep = sv.copy() if own is None else sv | own
    idx = np.flatnonzero(sv)
    upper = svm_cfg.C * beta
    grad = (K[np.ix_(idx, idx)] @ (alpha[idx] * y[idx])) * y[idx] - 1.0
    b = bias_from_gradient(alpha[idx], grad, y[idx], upper[idx]) if idx.size else 0.0
    k = np.flatnonzero(keep & (alpha > 0))
    block = own if own is not None else np.ones(ds.n, dtype=bool)
    return TrainedModel(
        alpha=alpha[block], bias=b, support_ids=ds.ids[k], beta=beta[block],
        kernel=svm_cfg.kernel, C=svm_cfg.C, sv_features=ds.features[k], sv_labels=y[k],
        sv_alpha=alpha[k])


def train_distributed(ds: Dataset, beta=None, cfg: DsvmConfig = DsvmConfig(),
                      svm_cfg: SvmConfig = SvmConfig(), validation: Dataset | None = None,
                      seed: int = 0):
    """Train over ``cfg.M`` simulated nodes; returns ``(per-node models, trace)``.

    With ``warm_start`` every node first solves its shard exactly, which
    keeps the alpha vector sparse from the start (and satisfies the sum
    constraint). Each round every node steps from the same broadcast state, the fusion
    center scales the combined step by an exact line search (so the
    penalized objective never decreases), collects the support triples and
    rebroadcasts them with the running sum and the shared bias. A data
    point is tallied once per link the first time its features travel over
    it; later alpha refreshes ride with the broadcast scalars. Stops once
    the validation error (training error when no validation set is given)
    has changed by less than ``convergence_tol`` for ``patience`` rounds.
    """
    ds.require_both_classes()
    beta = np.ones(ds.n) if beta is None else np.asarray(beta, dtype=float)
    if beta.shape != (ds.n,) or np.any(beta <= 0) or np.any(beta > 1):
        raise ValueError("beta must hold one entry in (0, 1] per sample")
    validation = ds if validation is None else validation
    parts = _partition_indices(ds, cfg.M, seed)
    owner = np.empty(ds.n, dtype=int)
    for e, p in enumerate(parts):
        owner[p] = e
    y = ds.labels
    K = gram_matrix(svm_cfg.kernel, ds.features)
    mz = cfg.M * cfg.Z
    thr = cfg.threshold(svm_cfg.C)
    alpha = np.zeros(ds.n)
    if cfg.warm_start:
        for p in parts:
            alpha[p] = train_weighted_svm(ds.subset(p), beta[p], svm_cfg, K=K[np.ix_(p, p)]).alpha
    sent_up = np.zeros(ds.n, dtype=bool)
    delivered = np.zeros((cfg.M, ds.n), dtype=bool)
    trace = DsvmTrace(ds.n, cfg.M)
    known = np.zeros((cfg.M, ds.n), dtype=bool)  # others' SVs each node currently holds
    calm = 0
    for _ in range(cfg.rounds_max):
        s = float(y @ alpha)
        D = np.zeros(ds.n)
        for e, p in enumerate(parts):
            pk = np.flatnonzero(known[e])
            node = NodeState(e, ds.subset(p), alpha[p], beta[p],
                             SupportPool(ds.ids[pk], ds.features[pk], y[pk], alpha[pk]))
            D[p] = node_local_step(node, s, cfg, svm_cfg).alpha_block - alpha[p]
        theta = _line_search(alpha, D, K, y, mz)
        alpha = np.clip(alpha + theta * D, 0.0, svm_cfg.C * beta)
        sv = alpha > thr
        up = sv & ~sent_up
        sent_up |= up
        down = 0
        for e in range(cfg.M):
            incoming = sv & (owner != e)
            down += int((incoming & ~delivered[e]).sum())
            delivered[e] |= incoming
            known[e] = incoming
        shared = _pool_model(ds, alpha, beta, K, svm_cfg, thr)
        err = error_rate(shared, validation)
        prev = trace.validation_error[-1] if trace.validation_error else None
        trace.objective.append(penalized_objective(alpha, K, y, mz))
        trace.validation_error.append(err)
        trace.points_sent_up.append(int(up.sum()))
        trace.points_sent_down.append(down)
        trace.step_size.append(theta)
        calm = calm + 1 if prev is not None and abs(err - prev) < cfg.convergence_tol else 0
        if calm >= cfg.patience:
            trace.converged = True
            break
    trace.models = [_pool_model(ds, alpha, beta, K, svm_cfg, thr, own=owner == e)
                    for e in range(cfg.M)]
    return trace.models, trace


def comm_report(trace: DsvmTrace, n_support_centralized: int | None = None) -> dict:
    """Totals and per-round series of exchanged points, with the centralized cost.

    The centralized scheme ships every point to the center and the SVs back
    to all ``M`` nodes: ``n + M * n_support_centralized``. Without a
    centralized SV count the distributed solution's own count is used.
    """
    n_sv = trace.n_support if n_support_centralized is None else int(n_support_centralized)
    up, down = list(trace.points_sent_up), list(trace.points_sent_down)
    total = sum(up) + sum(down)
    baseline = trace.n + trace.M * n_sv if trace.rounds else 0
    return {
        "rounds": trace.rounds,
        "points_sent_up": up,
        "points_sent_down": down,
        "total_up": sum(up),
        "total_down": sum(down),
        "total": total,
        "centralized_baseline": baseline,
        "reduction": 1.0 - total / baseline if baseline else 0.0,
    }
