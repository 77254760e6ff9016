"""Training-time attacks: five label-flip strategies and three poisoning attacks.

Every generator returns an :class:`AttackResult` holding the contaminated
dataset and the positions of the samples it altered.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .kernel import gram_matrix
from .svm import SvmConfig, decision_function, train_weighted_svm


@dataclass(frozen=True)
class AttackResult:
    dataset: Dataset
    mask: np.ndarray  # sorted positions (into ``dataset``) of altered samples
    meta: dict = field(default_factory=dict)

    @property
    def bool_mask(self) -> np.ndarray:
        m = np.zeros(self.dataset.n, dtype=bool)
        m[self.mask] = True
        return m


@dataclass(frozen=True)
class PoisonParams:
    discount_factor: float = 0.3
    severity: float = 0.5
    steps: int = 50
    step_size: float = 0.5

    def __post_init__(self):
        if not 0 <= self.severity <= 1:
            raise ValueError("severity must lie in [0, 1]")
        if not 0 <= self.discount_factor <= 1:
            raise ValueError("discount_factor must lie in [0, 1]")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")


def flip_budget(rate: float, n: int) -> int:
    if not 0 <= rate <= 0.5:
        raise ValueError("flip rate must lie in [0, 0.5]")
    return int(np.floor(rate * n + 1e-9))


def _flipped(ds: Dataset, idx, name, **meta) -> AttackResult:
    idx = np.sort(np.asarray(idx, dtype=int))
    y = ds.labels.copy()
    y[idx] = -y[idx]
    return AttackResult(ds.with_labels(y), idx, {"attack": name, **meta})


# --- label flips -----------------------------------------------------------

def flip_random(ds: Dataset, rate: float, seed: int = 0) -> AttackResult:
    L = flip_budget(rate, ds.n)
    idx = np.random.default_rng(seed).choice(ds.n, size=L, replace=False)
    return _flipped(ds, idx, "random", rate=rate, seed=seed)


def _rank_by_margin(ds, rate, cfg, far):
    L = flip_budget(rate, ds.n)
    if L == 0:
        return L, np.array([], dtype=int), None
    model = train_weighted_svm(ds, None, cfg)
    f = np.abs(decision_function(model, ds.features))
    # lexsort: last key is primary; ties resolved by sample id
    order = np.lexsort((ds.ids, -f if far else f))
    return L, order[:L], f


def flip_nearest(ds: Dataset, rate: float, cfg: SvmConfig, seed: int = 0) -> AttackResult:
    """Flip the samples closest to the clean SVM's decision boundary."""
    L, idx, _ = _rank_by_margin(ds, rate, cfg, far=False)
    return _flipped(ds, idx, "nearest", rate=rate, seed=seed)


def flip_farfirst(ds: Dataset, rate: float, cfg: SvmConfig, seed: int = 0) -> AttackResult:
    """Flip the samples furthest from the clean SVM's decision boundary."""
    L, idx, _ = _rank_by_margin(ds, rate, cfg, far=True)
    return _flipped(ds, idx, "farfirst", rate=rate, seed=seed)


def _flip_gain(y, f):
    """Hinge loss a sample would carry if its label were flipped, minus its current loss."""
    return np.maximum(0.0, 1.0 + y * f) - np.maximum(0.0, 1.0 - y * f)


def _train_on(ds, flips, cfg, K):
    y = ds.labels.copy()
    y[flips] = -y[flips]
    return train_weighted_svm(ds.with_labels(y), None, cfg, K=K)


def _alfa_search(ds, L, cfg, iterations, K):
    """Alternating greedy flip search; returns ``(best_set, history)``."""
    y = ds.labels
    current = np.array([], dtype=int)
    model = train_weighted_svm(ds, None, cfg, K=K)
    best = None
    history = []
    for _ in range(iterations):
        f = decision_function(model, ds.features)
        # score against the original labels: already-flipped samples that the
        # current model fits with their flipped label score low and drop out
        gain = _flip_gain(y, f)
        nxt = np.sort(np.lexsort((ds.ids, -gain))[:L])
        model = _train_on(ds, nxt, cfg, K)
        f_new = decision_function(model, ds.features)
        risk = float(np.mean(np.where(f_new >= 0, 1.0, -1.0) != y))
        hinge = float(np.mean(np.maximum(0.0, 1.0 - y * f_new)))
        history.append({"risk": risk, "hinge": hinge})
        if best is None or (risk, hinge) > best[0]:
            best = ((risk, hinge), nxt)
        if np.array_equal(nxt, current):
            break
        current = nxt
    return best[1], history


def alfa(ds: Dataset, rate: float, cfg: SvmConfig, iterations: int = 5, seed: int = 0) -> AttackResult:
    """Greedy approximation of the adversarial label flip attack.

    Alternates between training on the current labels and re-selecting the
    ``L`` flips with the largest hinge-loss gain; keeps the flip set whose
    retrained model has the highest empirical risk on the original labels.
    """
    L = flip_budget(rate, ds.n)
    if L == 0:
        return _flipped(ds, [], "alfa", rate=rate, seed=seed)
    K = gram_matrix(cfg.kernel, ds.features)
    flips, history = _alfa_search(ds, L, cfg, iterations, K)
    return _flipped(ds, flips, "alfa", rate=rate, seed=seed, iterations=iterations,
                    history=history)


def margin_tilt(f_clean, f_other) -> float:
    """``1 - corr(f_clean, f_other)`` over the same points; 0 when identical."""
    f_clean = np.asarray(f_clean, dtype=float)
    f_other = np.asarray(f_other, dtype=float)
    if np.array_equal(f_clean, f_other):
        return 0.0
    if f_clean.std() == 0 or f_other.std() == 0:
        return 1.0
    return float(1.0 - np.corrcoef(f_clean, f_other)[0, 1])


def alfa_tilt(ds: Dataset, rate: float, cfg: SvmConfig, trials: int = 20, seed: int = 0,
              swap_fraction: float = 0.3) -> AttackResult:
    """Randomized flip-set search maximizing the tilt of the decision function.

    The first candidate is the greedy alfa set; the others swap a random
    ``swap_fraction`` of its members for random non-members.
    """
    L = flip_budget(rate, ds.n)
    if L == 0:
        return _flipped(ds, [], "alfa-tilt", rate=rate, seed=seed)
    rng = np.random.default_rng(seed)
    K = gram_matrix(cfg.kernel, ds.features)
    clean = train_weighted_svm(ds, None, cfg, K=K)
    f_clean = decision_function(clean, ds.features)
    base, _ = _alfa_search(ds, L, cfg, 5, K)
    candidates = [base]
    outside = np.setdiff1d(np.arange(ds.n), base)
    for _ in range(max(trials, 1) - 1):
        m = max(1, int(round(swap_fraction * L)))
        m = min(m, len(outside))
        drop = rng.choice(L, size=m, replace=False)
        cand = base.copy()
        cand[drop] = rng.choice(outside, size=m, replace=False)
        candidates.append(np.sort(cand))
    tilts = []
    for cand in candidates:
        model = _train_on(ds, cand, cfg, K)
        tilts.append(margin_tilt(f_clean, decision_function(model, ds.features)))
    best = int(np.argmax(tilts))
    return _flipped(ds, candidates[best], "alfa-tilt", rate=rate, seed=seed, trials=trials,
                    tilts=tilts, best_trial=best)


# --- poisoning -------------------------------------------------------------

def _validation_hinge(model, validation: Dataset) -> float:
    f = decision_function(model, validation.features)
    return float(np.mean(np.maximum(0.0, 1.0 - validation.labels * f)))


def poison_pa(ds: Dataset, count: int, cfg: SvmConfig, validation: Dataset,
              params: PoisonParams = PoisonParams(), seed: int = 0, fd_eps: float = 1e-3,
              max_n: int = 1000) -> AttackResult:
    """Gradient-ascent poisoning of the validation hinge loss.

    Attack points are added one at a time, each starting as a label-flipped
    copy of a random training sample. Gradients are central finite
    differences with a warm-started retrain per probe; a step that does not
    raise the loss is rejected and the step size halved.
    """
    if ds.n > max_n:
        raise ValueError(f"poison_pa is limited to n <= {max_n}")
    if validation.n == 0:
        raise ValueError("validation set is empty")
    if count == 0:
        return AttackResult(ds, np.array([], dtype=int), {"attack": "pa", "count": 0})
    rng = np.random.default_rng(seed)
    lo, hi = ds.features.min(axis=0), ds.features.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    X, y = ds.features.copy(), ds.labels.copy()
    model = train_weighted_svm(ds, None, cfg)
    alpha = model.alpha
    trails, exhausted = [], False

    def loss_with(xc, yc, a0):
        aug = Dataset(np.vstack([X, xc]), np.append(y, yc))
        m = train_weighted_svm(aug, None, cfg, alpha0=np.append(a0, 0.0))
        return _validation_hinge(m, validation), m

    for _ in range(count):
        src = rng.integers(ds.n)
        xc, yc = ds.features[src].copy(), -ds.labels[src]
        cur, m = loss_with(xc, yc, alpha)
        trail = [cur]
        step = params.step_size
        for _ in range(params.steps):
            grad = np.zeros(ds.d)
            for k in range(ds.d):
                e = np.zeros(ds.d)
                e[k] = fd_eps * span[k]
                up, _ = loss_with(np.clip(xc + e, lo, hi), yc, alpha)
                dn, _ = loss_with(np.clip(xc - e, lo, hi), yc, alpha)
                grad[k] = (up - dn) / (2 * e[k])
            gnorm = np.linalg.norm(grad * span)
            if gnorm == 0:
                break
            cand = np.clip(xc + step * span * (grad * span) / gnorm, lo, hi)
            new, m_new = loss_with(cand, yc, alpha)
            if new >= cur:
                xc, cur, m = cand, new, m_new
                trail.append(cur)
            else:
                step /= 2
        else:
            exhausted = True
        trails.append(trail)
        X = np.vstack([X, xc])
        y = np.append(y, yc)
        alpha = m.alpha
    new_ids = np.arange(count) + (ds.ids.max() + 1 if ds.n else 0)
    out = Dataset(X, y, np.concatenate([ds.ids, new_ids]))
    mask = np.arange(ds.n, ds.n + count)
    return AttackResult(out, mask, {"attack": "pa", "count": count, "seed": seed,
                                    "loss_trails": trails, "budget_exhausted": exhausted})


def _attacker_pool(ds, attacker_label):
    pool = np.flatnonzero(ds.labels == attacker_label)
    if len(pool) == 0:
        raise ValueError(f"no samples with attacker label {attacker_label:+d}")
    return pool


def poison_ra(ds: Dataset, count: int, params: PoisonParams = PoisonParams(), seed: int = 0,
              attacker_label: int = -1) -> AttackResult:
    """Restrained attack: move each chosen point toward its nearest opposite-class sample.

    ``x' = x + severity * (1 - discount_factor) * (x_target - x)``; labels kept.
    """
    ds.require_both_classes()
    pool = _attacker_pool(ds, attacker_label)
    count = min(count, len(pool))
    rng = np.random.default_rng(seed)
    src = np.sort(rng.choice(pool, size=count, replace=False))
    X = ds.features.copy()
    others = np.flatnonzero(ds.labels != attacker_label)
    move = params.severity * (1.0 - params.discount_factor)
    for i in src:
        diff = ds.features[others] - ds.features[i]
        t = others[np.argmin((diff * diff).sum(1))]
        X[i] = ds.features[i] + move * (ds.features[t] - ds.features[i])
    return AttackResult(ds.with_features(X), src, {"attack": "ra", "count": count, "seed": seed,
                                                   "severity": params.severity,
                                                   "discount_factor": params.discount_factor})


def poison_cg(ds: Dataset, count: int, cfg: SvmConfig, lambda_cost: float = 0.1,
              max_iters: int = 100, seed: int = 0, attacker_label: int = -1,
              grid_points: int = 21) -> AttackResult:
    """Coordinate-greedy perturbation toward looking benign to the clean model.

    Utility ``U(x') = -y * f_clean(x') - lambda_cost * |x' - x|^2``; each
    iteration line-searches one random coordinate over its training range.
    """
    pool = _attacker_pool(ds, attacker_label)
    count = min(count, len(pool))
    if count == 0:
        return AttackResult(ds, np.array([], dtype=int), {"attack": "cg", "count": 0})
    rng = np.random.default_rng(seed)
    src = np.sort(rng.choice(pool, size=count, replace=False))
    model = train_weighted_svm(ds, None, cfg)
    lo, hi = ds.features.min(axis=0), ds.features.max(axis=0)
    X = ds.features.copy()
    trails = []

    def utility(cands, x0, yi):
        f = np.atleast_1d(decision_function(model, cands))
        return -yi * f - lambda_cost * ((cands - x0) ** 2).sum(1)

    for i in src:
        x0 = ds.features[i]
        x = x0.copy()
        yi = ds.labels[i]
        u = float(utility(x[None, :], x0, yi)[0])
        trail = [u]
        for _ in range(max_iters):
            k = rng.integers(ds.d)
            cands = np.repeat(x[None, :], grid_points, axis=0)
            cands[:, k] = np.linspace(lo[k], hi[k], grid_points)
            us = utility(cands, x0, yi)
            best = int(np.argmax(us))
            if us[best] > u:
                x, u = cands[best], float(us[best])
                trail.append(u)
        X[i] = x
        trails.append(trail)
    return AttackResult(ds.with_features(X), src, {"attack": "cg", "count": count, "seed": seed,
                                                   "lambda_cost": lambda_cost,
                                                   "utility_trails": trails})


ATTACKS = ("random", "nearest", "farfirst", "alfa", "alfa-tilt", "pa", "ra", "cg")


def run_attack(name: str, ds: Dataset, rate: float, cfg: SvmConfig, seed: int = 0,
               validation: Dataset | None = None, **params) -> AttackResult:
    """Dispatch by attack name; poisoning attacks use ``floor(rate * n)`` points."""
    if name == "random":
        return flip_random(ds, rate, seed)
    if name == "nearest":
        return flip_nearest(ds, rate, cfg, seed)
    if name == "farfirst":
        return flip_farfirst(ds, rate, cfg, seed)
    if name == "alfa":
        return alfa(ds, rate, cfg, params.get("iterations", 5), seed)
    if name == "alfa-tilt":
        return alfa_tilt(ds, rate, cfg, params.get("trials", 20), seed)
    count = flip_budget(rate, ds.n)
    poison = PoisonParams(**{k: params[k] for k in
                             ("discount_factor", "severity", "steps", "step_size") if k in params})
    if name == "pa":
        if validation is None:
            raise ValueError("pa needs a validation set")
        return poison_pa(ds, count, cfg, validation, poison, seed)
    if name == "ra":
        return poison_ra(ds, count, poison, seed, params.get("attacker_label", -1))
    if name == "cg":
        return poison_cg(ds, count, cfg, params.get("lambda_cost", 0.1),
                         params.get("max_iters", 100), seed, params.get("attacker_label", -1))
    raise ValueError(f"unknown attack {name!r}")
