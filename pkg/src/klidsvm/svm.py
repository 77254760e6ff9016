"""Weighted kernel SVM (SMO), LS-SVM and label-noise-corrected LN-SVM."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .kernel import KernelSpec, gram_matrix

TAU = 1e-12


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec(0.5))
    kkt_tolerance: float = 1e-3
    max_passes: int | None = None  # stagnation window in pair updates; None -> 10 * n
    max_iter: int = 10_000_000

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")

    @classmethod
    def make(cls, C=1.0, gamma=0.5, **kw):
        return cls(C=C, kernel=KernelSpec(gamma), **kw)


# Table I presets: (C, gamma)
PRESETS = {
    "mnist": (1.47, 0.0197),
    "acoustic": (1024.0, 0.0078),
    "ijcnn1": (64.0, 0.12),
    "seismic": (1024.0, 0.0078),
    "splice": (1024.0, 0.0078),
    "omnet": (0.3969, 0.7937),
    "toy": (1.0, 0.5),
}


@dataclass(frozen=True)
class TrainedModel:
    """Dual expansion ``f(x) = scale * sum_i alpha_i y_i k(x_i, x) + bias``.

    ``alpha``/``beta`` are per training sample; ``sv_*`` hold only the
    retained support samples needed for prediction. ``output_scale`` is 1
    except for LN-SVM, whose corrected kernel shrinks cross terms.
    """

    alpha: np.ndarray
    bias: float
    support_ids: np.ndarray
    beta: np.ndarray
    kernel: KernelSpec
    C: float
    sv_features: np.ndarray
    sv_labels: np.ndarray
    sv_alpha: np.ndarray
    output_scale: float = 1.0
    converged: bool = True
    n_iter: int = 0
    kkt_violation: float = 0.0

    @property
    def n_support(self) -> int:
        return len(self.support_ids)

    def to_dict(self) -> dict:
        return {
            "kernel": {"family": self.kernel.family, "gamma": self.kernel.gamma},
            "C": self.C,
            "bias": self.bias,
            "output_scale": self.output_scale,
            "converged": self.converged,
            "support_ids": self.support_ids.tolist(),
            "sv_alpha": self.sv_alpha.tolist(),
            "sv_labels": self.sv_labels.tolist(),
            "sv_features": self.sv_features.tolist(),
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))


def load_model(path) -> TrainedModel:
    """Rebuild a prediction-only model from :meth:`TrainedModel.save` output."""
    d = json.loads(Path(path).read_text())
    a = np.array(d["sv_alpha"], dtype=float)
    return TrainedModel(
        alpha=a, bias=d["bias"], support_ids=np.array(d["support_ids"], dtype=int),
        beta=np.ones_like(a), kernel=KernelSpec(d["kernel"]["gamma"], d["kernel"]["family"]),
        C=d["C"], sv_features=np.array(d["sv_features"], dtype=float).reshape(len(a), -1),
        sv_labels=np.array(d["sv_labels"], dtype=float), sv_alpha=a,
        output_scale=d["output_scale"], converged=d["converged"],
    )


# --- dual solver -----------------------------------------------------------

def dual_objective(alpha, Q) -> float:
    """``sum(alpha) - alpha' Q alpha / 2`` with ``Q_ij = y_i y_j K_ij``."""
    return float(alpha.sum() - 0.5 * alpha @ Q @ alpha)


def kkt_violation(alpha, grad, y, upper) -> float:
    """Maximal violating-pair gap ``m(alpha) - M(alpha)`` (0 at optimum).

    ``grad`` is the gradient of the minimisation form, ``Q alpha - 1``.
    """
    yg = -y * grad
    up = ((y > 0) & (alpha < upper)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < upper)) | ((y > 0) & (alpha > 0))
    if not up.any() or not low.any():
        return 0.0
    return float(max(yg[up].max() - yg[low].min(), 0.0))


def bias_from_gradient(alpha, grad, y, upper):
    """Bias from the free SVs (``grad = Q alpha - 1``), else the feasible-interval midpoint."""
    yg = -y * grad
    eps = 1e-12 * max(upper.max(), 1.0)
    free = (alpha > eps) & (alpha < upper - eps)
    if free.any():
        return float(yg[free].mean())
    at_up = alpha >= upper - eps
    lo_mask = ((y > 0) & ~at_up) | ((y < 0) & at_up)
    hi_mask = ((y < 0) & ~at_up) | ((y > 0) & at_up)
    lb = yg[lo_mask].max() if lo_mask.any() else -np.inf
    ub = yg[hi_mask].min() if hi_mask.any() else np.inf
    if np.isfinite(lb) and np.isfinite(ub):
        return float(0.5 * (lb + ub))
    return float(lb if np.isfinite(lb) else ub if np.isfinite(ub) else 0.0)


def smo(K, y, upper, tol=1e-3, alpha0=None, window=None, max_iter=10_000_000):
    """Solve ``max sum(a) - a'Qa/2`` s.t. ``y'a = 0, 0 <= a <= upper``.

    Pairwise SMO with second-order working-set selection. Returns
    ``(alpha, grad, n_iter, converged)``, ``grad`` in minimisation form.
    """
    n = len(y)
    y = np.asarray(y, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if alpha0 is None:
        alpha = np.zeros(n)
        grad = -np.ones(n)
    else:
        alpha = np.clip(np.asarray(alpha0, dtype=float), 0.0, upper)
        alpha = _restore_equality(alpha, y, upper)
        grad = y * (K @ (alpha * y)) - 1.0
    diag = np.diag(K).copy()
    window = 10 * n if window is None else window
    best_obj, stall = -np.inf, 0
    converged = False
    it = 0
    while it < max_iter:
        yg = -y * grad
        up = np.where(y > 0, alpha < upper, alpha > 0)
        low = np.where(y > 0, alpha > 0, alpha < upper)
        if not up.any() or not low.any():
            converged = True
            break
        yg_up = np.where(up, yg, -np.inf)
        i = int(np.argmax(yg_up))
        m = yg_up[i]
        yg_low = np.where(low, yg, np.inf)
        if m - yg_low.min() < tol:
            converged = True
            break
        b = m - yg
        cand = low & (b > 0)
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, TAU)
        score = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(score))
        old_i, old_j = alpha[i], alpha[j]
        _pair_update(alpha, grad, i, j, y, upper, K[i, j], diag)
        di = alpha[i] - old_i
        dj = alpha[j] - old_j
        grad += y * (K[i] * (y[i] * di) + K[j] * (y[j] * dj))
        it += 1
        if it % 64 == 0:
            obj = -0.5 * (alpha @ (grad - 1.0))  # = sum a - a'Qa/2
            if obj > best_obj * (1 + 1e-15 * np.sign(best_obj)) + 1e-15:
                best_obj, stall = obj, 0
            else:
                stall += 64
                if stall >= window:
                    break
    return alpha, grad, it, converged


def _pair_update(alpha, grad, i, j, y, upper, kij, diag):
    Ci, Cj = upper[i], upper[j]
    if y[i] != y[j]:
        quad = diag[i] + diag[j] - 2.0 * kij
        quad = quad if quad > 0 else TAU
        delta = (-grad[i] - grad[j]) / quad
        diff = alpha[i] - alpha[j]
        alpha[i] += delta
        alpha[j] += delta
        if diff > 0:
            if alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = diff
        else:
            if alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
        if diff > Ci - Cj:
            if alpha[i] > Ci:
                alpha[i] = Ci
                alpha[j] = Ci - diff
        else:
            if alpha[j] > Cj:
                alpha[j] = Cj
                alpha[i] = Cj + diff
    else:
        quad = diag[i] + diag[j] - 2.0 * kij
        quad = quad if quad > 0 else TAU
        delta = (grad[i] - grad[j]) / quad
        total = alpha[i] + alpha[j]
        alpha[i] -= delta
        alpha[j] += delta
        if total > Ci:
            if alpha[i] > Ci:
                alpha[i] = Ci
                alpha[j] = total - Ci
        else:
            if alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = total
        if total > Cj:
            if alpha[j] > Cj:
                alpha[j] = Cj
                alpha[i] = total - Cj
        else:
            if alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = total


def _restore_equality(alpha, y, upper):
    """Shrink the heavier side so that ``y'alpha = 0`` (used for warm starts)."""
    s = alpha @ y
    if abs(s) < 1e-14:
        return alpha
    side = y > 0 if s > 0 else y < 0
    tot = alpha[side].sum()
    alpha = alpha.copy()
    alpha[side] *= (tot - abs(s)) / tot
    return alpha


# --- training entry points -------------------------------------------------

def _build_model(ds, alpha, grad, upper, beta, cfg, K_scale, it, converged, viol):
    y = ds.labels
    eps_sv = 1e-8 * cfg.C
    sv = np.flatnonzero(alpha > eps_sv)
    b = bias_from_gradient(alpha, grad, y, upper)
    return TrainedModel(
        alpha=alpha, bias=b, support_ids=ds.ids[sv], beta=beta, kernel=cfg.kernel, C=cfg.C,
        sv_features=ds.features[sv], sv_labels=y[sv], sv_alpha=alpha[sv],
        output_scale=K_scale, converged=converged, n_iter=it, kkt_violation=viol,
    )


def _solve(ds, K, beta, cfg, K_scale=1.0, alpha0=None):
    ds.require_both_classes()
    y = ds.labels
    upper = cfg.C * beta
    alpha, grad, it, converged = smo(K, y, upper, tol=cfg.kkt_tolerance, alpha0=alpha0,
                                     window=cfg.max_passes, max_iter=cfg.max_iter)
    viol = kkt_violation(alpha, grad, y, upper)
    if not converged:
        warnings.warn(f"SMO stopped after {it} updates with KKT gap {viol:.3g}",
                      ConvergenceWarning, stacklevel=3)
    return _build_model(ds, alpha, grad, upper, beta, cfg, K_scale, it, converged, viol)


def train_weighted_svm(ds: Dataset, beta=None, cfg: SvmConfig = SvmConfig(), alpha0=None,
                       K=None) -> TrainedModel:
    """Train the weighted dual with per-sample box ``0 <= alpha_i <= C * beta_i``.

    ``beta=None`` means all ones. ``K`` may pass a precomputed Gram matrix.
    """
    beta = np.ones(ds.n) if beta is None else np.asarray(beta, dtype=float)
    if beta.shape != (ds.n,):
        raise ValueError("beta must have one entry per sample")
    if np.any(beta <= 0) or np.any(beta > 1):
        raise ValueError("beta entries must lie in (0, 1]")
    if K is None:
        K = gram_matrix(cfg.kernel, ds.features)
    return _solve(ds, K, beta, cfg, alpha0=alpha0)


def train_ln_svm(ds: Dataset, cfg: SvmConfig = SvmConfig(), mu: float = 0.15, K=None) -> TrainedModel:
    """SVM on the label-noise-corrected kernel.

    Under independent flips with probability ``mu`` the expected label
    product off the diagonal is ``(1 - 2mu)^2 y_i y_j``; the diagonal keeps
    ``y_i^2 = 1``. New points only see the shrunk cross terms.
    """
    if not 0 <= mu < 0.5:
        raise ValueError("mu must lie in [0, 0.5)")
    if K is None:
        K = gram_matrix(cfg.kernel, ds.features)
    return _solve(ds, ln_corrected_kernel(K, mu), np.ones(ds.n), cfg, K_scale=(1.0 - 2.0 * mu) ** 2)


def ln_corrected_kernel(K, mu):
    s = (1.0 - 2.0 * mu) ** 2
    Kt = s * K
    np.fill_diagonal(Kt, np.diag(K))
    return Kt


def ls_svm_system(ds: Dataset, cfg: SvmConfig, K=None):
    """``(A, rhs)`` of the LS-SVM linear system ``[[0, y'], [y, Omega + I/C]]``."""
    if K is None:
        K = gram_matrix(cfg.kernel, ds.features)
    y = ds.labels
    n = ds.n
    A = np.zeros((n + 1, n + 1))
    A[0, 1:] = y
    A[1:, 0] = y
    A[1:, 1:] = np.outer(y, y) * K + np.eye(n) / cfg.C
    rhs = np.concatenate([[0.0], np.ones(n)])
    return A, rhs


def train_ls_svm(ds: Dataset, cfg: SvmConfig = SvmConfig(), K=None) -> TrainedModel:
    """Least-squares SVM: one dense linear solve, every sample retained."""
    ds.require_both_classes()
    A, rhs = ls_svm_system(ds, cfg, K)
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        A = A + 1e-10 * np.diag(np.r_[0.0, np.ones(ds.n)])
        sol = np.linalg.solve(A, rhs)
    b, alpha = float(sol[0]), sol[1:]
    residual = float(np.linalg.norm(A @ sol - rhs))
    return TrainedModel(
        alpha=alpha, bias=b, support_ids=ds.ids.copy(), beta=np.ones(ds.n), kernel=cfg.kernel,
        C=cfg.C, sv_features=ds.features, sv_labels=ds.labels, sv_alpha=alpha,
        kkt_violation=residual,
    )


# --- prediction ------------------------------------------------------------

def decision_function(model: TrainedModel, X) -> np.ndarray:
    """Raw scores for the rows of ``X`` (a single vector gives a scalar)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if model.sv_alpha.size == 0:
        f = np.full(X.shape[0], model.bias)
    else:
        Ks = gram_matrix(model.kernel, X, model.sv_features)
        f = model.output_scale * (Ks @ (model.sv_alpha * model.sv_labels)) + model.bias
    return float(f[0]) if single else f


def predict(model: TrainedModel, X) -> np.ndarray:
    f = np.atleast_1d(decision_function(model, X))
    return np.where(f >= 0, 1.0, -1.0)


def error_rate(model: TrainedModel, test: Dataset) -> float:
    if test.n == 0:
        raise ValueError("empty test set")
    return float(np.mean(predict(model, test.features) != test.labels))
