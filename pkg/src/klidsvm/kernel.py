"""RBF kernel, Gram matrices and the kernel-induced distance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# exp overflows just past 709; beyond this exponent the distance saturates
EXPONENT_CAP = 700.0
DISTANCE_CAP = float(np.exp(EXPONENT_CAP))


@dataclass(frozen=True)
class KernelSpec:
    gamma: float
    family: str = "rbf"

    def __post_init__(self):
        if self.family != "rbf":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


def _pair(x, x2):
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {x2.shape[0]}")
    return x, x2


def sq_distances(A, B) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    D = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(D, 0.0)


def kernel_value(spec: KernelSpec, x, x2) -> float:
    x, x2 = _pair(x, x2)
    diff = x - x2
    return float(np.exp(-spec.gamma * diff @ diff))


def gram_matrix(spec: KernelSpec, A, B=None) -> np.ndarray:
    """``K[i, j] = exp(-gamma * |A_i - B_j|^2)``; ``B`` defaults to ``A``."""
    same = B is None
    D = sq_distances(A, A if same else B)
    if same:
        np.fill_diagonal(D, 0.0)
    return np.exp(-spec.gamma * D)


def distance_from_sq(spec: KernelSpec, sq_dist) -> np.ndarray:
    """Kernel distance ``1/k - 1 = exp(gamma*d^2) - 1`` from squared distances."""
    z = spec.gamma * np.asarray(sq_dist, dtype=float)
    return np.expm1(np.minimum(z, EXPONENT_CAP))


def kernel_distance(spec: KernelSpec, x, x2) -> float:
    x, x2 = _pair(x, x2)
    diff = x - x2
    return float(distance_from_sq(spec, diff @ diff))
