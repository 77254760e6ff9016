"""K-LID-SVM sample weighting.

Per class: pick the K-LID kernel width whose benign/attacked K-LID densities
are furthest apart in KL divergence, turn the density ratio into a clipped,
rescaled likelihood ratio, smooth it with a tanh curve and read the weights
off that curve.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .data import Dataset
from .kernel import EXPONENT_CAP, KernelSpec
from .lid import LidConfig, NeighborSets, draw_neighbors, klid_from_neighbors
from .stats import Density, kde_fit, kl_divergence

DEFAULT_GAMMA_GRID = tuple(2.0**p for p in range(-10, 5))
MIN_GROUP = 5
# grid points where more than this share of a class's neighbourhoods saturate are skipped
MAX_DEGENERATE = 0.5
W_LOW, W_HIGH = 0.1, 1.0
# tanh(40) == 1.0 in double precision; used for constant fallbacks
_SATURATED = 40.0


class InsufficientAttackSamples(ValueError):
    """Too few attacked or benign samples in a class to estimate both densities."""


@dataclass(frozen=True)
class WeightFunction:
    """``0.55 - 0.45 * tanh(a*z - b)``: non-increasing in z for ``a >= 0``."""

    a: float
    b: float
    class_label: int

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        w = 0.55 - 0.45 * np.tanh(self.a * z - self.b)
        return np.clip(w, W_LOW, W_HIGH)


@dataclass(frozen=True)
class GammaSearch:
    gamma_star: float
    klid: np.ndarray  # cross-class K-LID of the class's samples at gamma_star
    benign_density: Density
    attacked_density: Density
    kl_scores: dict


@dataclass
class ClassProfile:
    class_label: int
    gamma_star: float | None
    benign_density: Density | None
    attacked_density: Density | None
    weight_fn: WeightFunction
    kl_score: float | None
    kl_scores: dict = field(default_factory=dict)
    fallback: str | None = None
    n_attacked: int = 0


@dataclass
class KLidProfile:
    """Everything the defense derived, for audit and plotting."""

    mode: str
    classes: dict
    cross_klid: np.ndarray
    sample_ids: np.ndarray
    settings: dict

    @property
    def gamma_star(self) -> dict:
        return {c: p.gamma_star for c, p in self.classes.items()}

    @property
    def weight_fn(self) -> dict:
        return {c: p.weight_fn for c, p in self.classes.items()}

    def to_dict(self) -> dict:
        out = {"mode": self.mode, "settings": self.settings, "classes": {}}
        for c, p in self.classes.items():
            out["classes"][f"{c:+d}"] = {
                "gamma_star": p.gamma_star,
                "kl_score": p.kl_score,
                "kl_scores": {repr(g): v for g, v in p.kl_scores.items()},
                "a": p.weight_fn.a,
                "b": p.weight_fn.b,
                "fallback": p.fallback,
                "n_attacked": p.n_attacked,
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# --- pipeline stages -------------------------------------------------------

def select_gamma_star(ds: Dataset, attacked_mask, grid, cfg: LidConfig, class_label: int,
                      neighbors: NeighborSets | None = None, kde_method: str = "silverman",
                      grid_size: int = 512) -> GammaSearch:
    """Exhaustive search of the K-LID kernel width for one class.

    ``attacked_mask`` is a boolean array over ``ds``. Ties keep the smaller
    gamma. Widths at which most of the class's neighbourhoods reach the
    kernel-distance cap carry no signal and are skipped; if all do, the
    smallest width is used.
    """
    attacked_mask = np.asarray(attacked_mask, dtype=bool)
    in_class = ds.labels == class_label
    att = attacked_mask[in_class]
    if att.sum() < MIN_GROUP or (~att).sum() < MIN_GROUP:
        raise InsufficientAttackSamples(
            f"class {class_label:+d}: {int(att.sum())} attacked / {int((~att).sum())} benign;"
            f" need {MIN_GROUP} of each (use self-simulation mode)")
    if neighbors is None:
        neighbors = draw_neighbors(ds, cfg)
    best = None
    scores = {}
    grid = sorted(grid)
    reach = np.maximum(neighbors.in_sq.max(axis=1), neighbors.out_sq.max(axis=1))[in_class]
    for g in grid:
        if np.mean(g * reach >= EXPONENT_CAP) > MAX_DEGENERATE and g != grid[0]:
            continue
        cross = klid_from_neighbors(KernelSpec(g), neighbors)[2][in_class]
        p_n = kde_fit(cross[~att], method=kde_method)
        p_f = kde_fit(cross[att], method=kde_method)
        score = kl_divergence(p_n, p_f, grid_size)
        scores[g] = score
        if best is None or score > best[0]:
            best = (score, g, cross, p_n, p_f)
    _, g, cross, p_n, p_f = best
    return GammaSearch(g, cross, p_n, p_f, scores)


def likelihood_ratios(klids, benign_density: Density, attacked_density: Density) -> np.ndarray:
    num = benign_density(klids)
    den = np.maximum(attacked_density(klids), 1e-12)
    return num / den


def clip_and_scale(lrs, clip_quantile: float = 0.95) -> np.ndarray:
    """Clip at the empirical ``clip_quantile`` then map min -> 0.1 and max -> 1."""
    lrs = np.asarray(lrs, dtype=float)
    if lrs.size == 0:
        raise ValueError("no likelihood ratios")
    if not 0 < clip_quantile <= 1:
        raise ValueError("clip_quantile must lie in (0, 1]")
    clipped = np.minimum(lrs, np.quantile(lrs, clip_quantile))
    lo, hi = clipped.min(), clipped.max()
    if hi - lo <= 1e-12 * max(abs(hi), 1.0):
        return np.ones_like(clipped)
    t = (clipped - lo) / (hi - lo)
    return W_LOW * (1.0 - t) + W_HIGH * t


def constant_weight_function(level: float, class_label: int) -> WeightFunction:
    """``a = 0`` curve whose constant output is ``level`` (clamped to [0.1, 1])."""
    level = float(np.clip(level, W_LOW, W_HIGH))
    t = (level - 0.55) / 0.45
    b = np.arctanh(t) if abs(t) < 1 else np.sign(t) * _SATURATED
    return WeightFunction(0.0, float(np.clip(b, -_SATURATED, _SATURATED)), class_label)


def fit_weight_function(klids, scaled_lrs, class_label: int, max_iter: int = 500,
                        monotone: bool = False) -> WeightFunction:
    """Least-squares tanh fit by Nelder-Mead; ``monotone`` bounds ``a >= 0``.

    Starts from ``a = 1/std(z)``, ``b = a * median(z)`` and restarts once
    from ``(a/10, b)``; keeps the better of the two.
    """
    z = np.asarray(klids, dtype=float)
    t = np.asarray(scaled_lrs, dtype=float)
    if z.shape != t.shape or z.size < 5:
        raise ValueError("need equal-length inputs with at least 5 values")
    if np.ptp(t) == 0:
        return constant_weight_function(t[0], class_label)

    def sse(p):
        r = 0.55 - 0.45 * np.tanh(p[0] * z - p[1]) - t
        return float(r @ r)

    sd = z.std()
    a0 = 1.0 / sd if sd > 0 else 1.0
    starts = [(a0, a0 * np.median(z)), (a0 / 10, a0 * np.median(z))]
    opts = {"maxiter": max_iter, "maxfev": 4 * max_iter, "xatol": 1e-12, "fatol": 1e-16}
    best = None
    for x0 in starts:
        try:
            res = minimize(sse, np.array(x0), method="Nelder-Mead",
                           bounds=[(0.0 if monotone else None, None), (None, None)],
                           options=opts)
        except (ValueError, FloatingPointError):
            continue
        if np.all(np.isfinite(res.x)) and (best is None or res.fun < best.fun):
            best = res
    const = constant_weight_function(t.mean(), class_label)
    if best is None or best.fun > sse((const.a, const.b)):
        return const
    a = float(max(best.x[0], 0.0)) if monotone else float(best.x[0])
    return WeightFunction(a, float(best.x[1]), class_label)


# --- full pipeline ---------------------------------------------------------

def simulate_flips(labels, rate: float, seed: int) -> np.ndarray:
    """Boolean mask of ``floor(rate * n)`` uniformly chosen samples."""
    n = len(labels)
    rng = np.random.default_rng(seed)
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=int(np.floor(rate * n)), replace=False)] = True
    return mask


def compute_weights(ds: Dataset, attacked_mask=None, sim_rate: float | None = None,
                    grid=DEFAULT_GAMMA_GRID, cfg: LidConfig = LidConfig(),
                    clip_quantile: float = 0.95, kde_method: str = "silverman",
                    grid_size: int = 512, monotone: bool = False):
    """Per-sample weights in [0.1, 1] and the profile that produced them.

    Oracle mode: pass ``attacked_mask`` (boolean or index array). Self-
    simulated mode: pass ``sim_rate``; that fraction of labels is flipped at
    random only to build the attacked densities, and the weights are then
    read off with the given labels.
    """
    ds.require_both_classes()
    if (attacked_mask is None) == (sim_rate is None):
        raise ValueError("give exactly one of attacked_mask or sim_rate")
    grid = tuple(sorted(grid))
    settings = {
        "k_neighbors": cfg.k_neighbors, "minibatch_size": cfg.minibatch_size,
        "seed": cfg.seed, "clip_quantile": clip_quantile, "kde_method": kde_method,
        "grid_size": grid_size, "gamma_grid": list(grid), "monotone": monotone,
    }
    given_nb = draw_neighbors(ds, cfg)
    if attacked_mask is not None:
        mode = "oracle"
        mask = np.zeros(ds.n, dtype=bool)
        idx = np.asarray(attacked_mask)
        if idx.dtype == bool:
            mask[:] = idx
        elif idx.size:
            mask[idx.astype(int)] = True
        density_ds, density_nb = ds, given_nb
    else:
        mode = "self-simulated"
        settings["sim_rate"] = sim_rate
        mask = simulate_flips(ds.labels, sim_rate, cfg.seed + 1)
        sim_labels = np.where(mask, -ds.labels, ds.labels)
        density_ds = ds.with_labels(sim_labels)
        density_nb = draw_neighbors(density_ds, cfg)

    beta = np.ones(ds.n)
    cross_used = np.empty(ds.n)
    classes = {}
    for j in (1, -1):
        members = ds.labels == j
        try:
            search = select_gamma_star(density_ds, mask, grid, cfg, j, density_nb,
                                       kde_method, grid_size)
        except InsufficientAttackSamples as exc:
            # no usable attack signal: identical densities, likelihood ratio 1
            wf = constant_weight_function(1.0, j)
            cross_used[members] = klid_from_neighbors(KernelSpec(grid[0]), given_nb)[2][members]
            classes[j] = ClassProfile(j, None, None, None, wf, None, fallback=str(exc),
                                      n_attacked=int((mask & (density_ds.labels == j)).sum()))
            continue
        dens_members = density_ds.labels == j
        n_att = int((mask & dens_members).sum())
        score = search.kl_scores[search.gamma_star]
        lrs = likelihood_ratios(search.klid, search.benign_density, search.attacked_density)
        scaled = clip_and_scale(lrs, clip_quantile)
        wf = fit_weight_function(search.klid, scaled, j, monotone=monotone)
        if mode == "oracle":
            cross = search.klid
        else:
            cross = klid_from_neighbors(KernelSpec(search.gamma_star), given_nb)[2][members]
        cross_used[members] = cross
        beta[members] = wf(cross)
        classes[j] = ClassProfile(j, search.gamma_star, search.benign_density,
                                  search.attacked_density, wf, score,
                                  kl_scores=search.kl_scores, n_attacked=n_att)
    profile = KLidProfile(mode, classes, cross_used, ds.ids.copy(), settings)
    return beta, profile
