"""Experiment sweeps: attack rate x fold x seed cells, defenses compared per cell."""
from __future__ import annotations

import csv
import json
import math
import time
import xml.etree.ElementTree as ET
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import ATTACKS, AttackResult, run_attack
from .data import Dataset, SplitSpec, kfold, load_spec, sized_split, standardize, stratified_split
from .defense import DEFAULT_GAMMA_GRID, compute_weights
from .dsvm import DsvmConfig, comm_report, train_distributed
from .lid import LidConfig
from .svm import SvmConfig, error_rate, train_ln_svm, train_ls_svm, train_weighted_svm

DEFENSES = ("svm", "klid-svm", "ls-svm", "ln-svm")
MODES = ("oracle", "self-simulated")
# defenses that also get a distributed run when DSVM is enabled
DSVM_DEFENSES = ("svm", "klid-svm")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    attack: str = "alfa"
    attack_params: dict = field(default_factory=dict)
    rates: tuple = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
    defenses: tuple = DEFENSES
    mode: str = "oracle"
    folds: int = 5
    seeds: tuple = (0, 1, 2, 3, 4)
    dsvm: DsvmConfig | None = None
    C: float = 1.0
    gamma: float = 0.5
    # synthetic datasets only
    n: int = 400
    noise: float = 0.3
    # fixed-size train/test draw instead of k-fold (folds must then be 1)
    n_train: int | None = None
    n_test: int | None = None
    standardize: bool = True
    k_neighbors: int = 20
    minibatch_size: int = 100
    clip_quantile: float = 0.95
    sim_rate: float = 0.1
    ln_mu: float = 0.15
    master_seed: int = 0
    workers: int = 1
    artifact_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        object.__setattr__(self, "defenses", tuple(self.defenses))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.rates or any(not 0 <= r <= 0.5 for r in self.rates):
            raise ValueError("rates must be a non-empty subset of [0, 0.5]")
        if not self.defenses or any(d not in DEFENSES for d in self.defenses):
            raise ValueError(f"defenses must be a non-empty subset of {DEFENSES}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.attack not in ATTACKS:
            raise ValueError(f"unknown attack {self.attack!r}; choose from {sorted(ATTACKS)}")
        if self.folds < 1:
            raise ValueError("folds must be at least 1")
        if (self.n_train is None) != (self.n_test is None):
            raise ValueError("give both n_train and n_test or neither")
        if self.n_train is not None and self.folds != 1:
            raise ValueError("a fixed train/test size needs folds = 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def svm_config(self) -> SvmConfig:
        return SvmConfig.make(self.C, self.gamma)

    def metadata(self) -> dict:
        """Resolved configuration plus the defaults the run depends on."""
        d = asdict(self)
        d["dsvm"] = None if self.dsvm is None else asdict(self.dsvm)
        d["resolved"] = {
            "version": __version__,
            "gamma_grid": list(DEFAULT_GAMMA_GRID),
            "kkt_tolerance": self.svm_config().kkt_tolerance,
            "split": ("sized" if self.n_train is not None
                      else "kfold" if self.folds > 1 else "stratified 0.8"),
        }
        return d


@dataclass
class ResultRow:
    dataset: str
    attack: str
    rate: float
    defense: str
    fold: int
    seed: int
    error_rate: float
    n_support: int = 0
    comm_points_up: int = 0
    comm_points_down: int = 0
    gamma_star: str = ""
    runtime_seconds: float = 0.0
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)

    def key(self):
        return (self.dataset, self.attack, self.rate, self.defense, self.fold, self.seed)


ROW_FIELDS = tuple(f.name for f in fields(ResultRow))
# runtime is the one non-deterministic column; it is written only on request
CSV_FIELDS = tuple(f for f in ROW_FIELDS if f != "runtime_seconds")


# --- cells -----------------------------------------------------------------

def cell_seed(master: int, seed: int, fold: int, rate_index: int) -> int:
    """Seed for one cell, independent of execution order."""
    return int(np.random.SeedSequence([master, seed, fold, rate_index]).generate_state(1)[0])


def _splits(cfg: ExperimentConfig, ds: Dataset, seed: int) -> list:
    if cfg.n_train is not None:
        return [sized_split(ds, cfg.n_train, cfg.n_test, seed)]
    if cfg.folds == 1:
        return [stratified_split(ds, SplitSpec(0.8, 1, seed))]
    return kfold(ds, cfg.folds, seed)


def _gamma_label(profile) -> str:
    return ";".join(f"{c:+d}:{'none' if g is None else repr(g)}"
                    for c, g in sorted(profile.gamma_star.items(), reverse=True))


def _save_artifacts(cfg, tag, attacked: AttackResult, profile):
    out = Path(cfg.artifact_dir)
    out.mkdir(parents=True, exist_ok=True)
    mask = {"attack": cfg.attack, "altered_ids": attacked.dataset.ids[attacked.bool_mask].tolist()}
    (out / f"mask_{tag}.json").write_text(json.dumps(mask))
    if profile is not None:
        (out / f"profile_{tag}.json").write_text(profile.to_json())


def run_cell(cfg: ExperimentConfig, name: str, train: Dataset, test: Dataset,
             rate_index: int, fold: int, seed: int) -> list:
    """Attack one training fold and evaluate every configured defense on it."""
    rate = cfg.rates[rate_index]
    cs = cell_seed(cfg.master_seed, seed, fold, rate_index)
    base = dict(dataset=name, attack=cfg.attack, rate=rate, fold=fold, seed=seed)
    if cfg.standardize:
        train, (test,), _ = standardize(train, [test])
    svm_cfg = cfg.svm_config()
    try:
        attacked = run_attack(cfg.attack, train, rate, svm_cfg, cs, validation=train,
                              **cfg.attack_params)
    except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
        msg = f"attack: {type(exc).__name__}: {exc}"
        names = list(cfg.defenses) + _dsvm_names(cfg)
        return [ResultRow(**base, defense=d, error_rate=math.nan, error=msg) for d in names]
    ds = attacked.dataset
    rows = []
    beta, profile = None, None
    for d in cfg.defenses:
        t0 = time.perf_counter()
        extra = {}
        try:
            if d == "svm":
                model = train_weighted_svm(ds, None, svm_cfg)
            elif d == "klid-svm":
                beta, profile = _klid_weights(cfg, ds, attacked, cs)
                model = train_weighted_svm(ds, beta, svm_cfg)
                extra["gamma_star"] = _gamma_label(profile)
            elif d == "ls-svm":
                model = train_ls_svm(ds, svm_cfg)
            else:
                model = train_ln_svm(ds, svm_cfg, cfg.ln_mu)
            rows.append(ResultRow(**base, defense=d, error_rate=error_rate(model, test),
                                  n_support=model.n_support,
                                  runtime_seconds=time.perf_counter() - t0, **extra))
        except Exception as exc:  # noqa: BLE001
            rows.append(ResultRow(**base, defense=d, error_rate=math.nan,
                                  runtime_seconds=time.perf_counter() - t0,
                                  error=f"{type(exc).__name__}: {exc}"))
    if cfg.dsvm is not None:
        for d in DSVM_DEFENSES:
            if d not in cfg.defenses:
                continue
            t0 = time.perf_counter()
            try:
                if d == "klid-svm" and beta is None:
                    raise RuntimeError("no weights: the klid-svm run failed")
                w = beta if d == "klid-svm" else None
                models, trace = train_distributed(ds, w, cfg.dsvm, svm_cfg, seed=cs)
                rep = comm_report(trace)
                rows.append(ResultRow(
                    **base, defense=f"dsvm-{d}", error_rate=error_rate(models[0], test),
                    n_support=trace.n_support, comm_points_up=rep["total_up"],
                    comm_points_down=rep["total_down"],
                    gamma_star=_gamma_label(profile) if d == "klid-svm" else "",
                    runtime_seconds=time.perf_counter() - t0))
            except Exception as exc:  # noqa: BLE001
                rows.append(ResultRow(**base, defense=f"dsvm-{d}", error_rate=math.nan,
                                      runtime_seconds=time.perf_counter() - t0,
                                      error=f"{type(exc).__name__}: {exc}"))
    if cfg.artifact_dir is not None:
        _save_artifacts(cfg, f"r{rate_index}_f{fold}_s{seed}", attacked, profile)
    return rows


def _dsvm_names(cfg):
    if cfg.dsvm is None:
        return []
    return [f"dsvm-{d}" for d in DSVM_DEFENSES if d in cfg.defenses]


def _klid_weights(cfg, ds, attacked, seed):
    lid_cfg = LidConfig(cfg.k_neighbors, cfg.minibatch_size, seed % 2**31)
    common = dict(cfg=lid_cfg, clip_quantile=cfg.clip_quantile)
    if cfg.mode == "oracle":
        return compute_weights(ds, attacked.bool_mask, **common)
    return compute_weights(ds, sim_rate=cfg.sim_rate, **common)


def _run_job(args):
    return run_cell(*args)


def run_experiment(cfg: ExperimentConfig) -> list:
    """Every (rate, fold, seed) cell of the sweep; rows come back sorted.

    Failures inside a cell become rows with an ``error`` marker and a NaN
    error rate; the sweep always completes.
    """
    ds = load_spec(cfg.dataset, n=cfg.n, noise=cfg.noise, seed=cfg.master_seed)
    name = cfg.dataset if cfg.dataset.startswith("synthetic:") else Path(cfg.dataset).stem
    jobs = []
    for seed in cfg.seeds:
        for fold, (train, test) in enumerate(_splits(cfg, ds, seed)):
            for ri in range(len(cfg.rates)):
                jobs.append((cfg, name, train, test, ri, fold, seed))
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            batches = list(pool.map(_run_job, jobs))
    else:
        batches = [_run_job(j) for j in jobs]
    rows = [r for b in batches for r in b]
    return sorted(rows, key=ResultRow.key)


# --- aggregation -------------------------------------------------------------

@dataclass
class Summary:
    """``overall``: mean error per (dataset, attack, defense) with the best flagged;
    ``per_rate``: the same split by attack rate."""

    overall: list
    per_rate: list


def summarize(rows) -> Summary:
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to summarize")
    groups = defaultdict(list)
    by_rate = defaultdict(list)
    failed = defaultdict(int)
    for r in rows:
        g = (r.dataset, r.attack, r.defense)
        if r.failed or not np.isfinite(r.error_rate):
            failed[g] += 1
            groups.setdefault(g, [])
            continue
        groups[g].append(r.error_rate)
        by_rate[g + (r.rate,)].append(r.error_rate)
    overall = []
    for g, errs in sorted(groups.items()):
        mean = float(np.mean(errs)) if errs else math.nan
        overall.append({"dataset": g[0], "attack": g[1], "defense": g[2], "mean_error": mean,
                        "n": len(errs), "failed": failed[g], "best": False})
    cells = defaultdict(list)
    for o in overall:
        cells[(o["dataset"], o["attack"])].append(o)
    for members in cells.values():
        finite = [o for o in members if np.isfinite(o["mean_error"])]
        if finite:
            low = min(o["mean_error"] for o in finite)
            for o in finite:
                o["best"] = o["mean_error"] == low
    per_rate = [{"dataset": k[0], "attack": k[1], "defense": k[2], "rate": k[3],
                 "mean_error": float(np.mean(v)), "n": len(v)}
                for k, v in sorted(by_rate.items())]
    return Summary(overall, per_rate)


# --- emission ----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def emit_csv(rows, path, include_runtime: bool = False):
    """Write rows under the fixed header; ``runtime_seconds`` only when asked."""
    header = ROW_FIELDS if include_runtime else CSV_FIELDS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(getattr(r, f)) for f in header])


def load_csv(path) -> list:
    """Read rows written by :func:`emit_csv`."""
    types = {f.name: f.type for f in fields(ResultRow)}
    conv = {"float": float, "int": int, "str": str}
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(ResultRow(**{k: conv[types[k]](v) for k, v in rec.items()}))
    return out


def emit_summary_csv(summary: Summary, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "attack", "defense", "rate", "mean_error", "n", "best"])
        for o in summary.overall:
            w.writerow([o["dataset"], o["attack"], o["defense"], "all", _fmt(o["mean_error"]),
                        o["n"], int(o["best"])])
        for p in summary.per_rate:
            w.writerow([p["dataset"], p["attack"], p["defense"], _fmt(p["rate"]),
                        _fmt(p["mean_error"]), p["n"], ""])


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2")


def emit_plot(summary: Summary, path, title: str = "error rate vs attack rate"):
    """Self-contained SVG line chart: one line per defense, mean error against attack rate."""
    series = defaultdict(list)
    for p in summary.per_rate:
        series[(p["dataset"], p["attack"], p["defense"])].append((p["rate"], p["mean_error"]))
    multi = len({k[:2] for k in series}) > 1
    W, H, L, R, T, B = 640, 400, 60, 170, 40, 50
    xs = [x for pts in series.values() for x, _ in pts] or [0.0, 1.0]
    ys = [y for pts in series.values() for _, y in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x1 = x0 + 1.0
    y0, y1 = 0.0, max(max(ys) * 1.1, 1e-3)

    def px(x):
        return L + (x - x0) / (x1 - x0) * (W - L - R)

    def py(y):
        return H - B - (y - y0) / (y1 - y0) * (H - T - B)

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(W), height=str(H),
                     viewBox=f"0 0 {W} {H}")
    ET.SubElement(svg, "rect", x="0", y="0", width=str(W), height=str(H), fill="white")
    ET.SubElement(svg, "text", x=str(W / 2), y="22", **{"text-anchor": "middle",
                  "font-size": "15", "font-family": "sans-serif"}).text = title
    axis = {"stroke": "black", "stroke-width": "1"}
    ET.SubElement(svg, "line", x1=str(L), y1=str(H - B), x2=str(W - R), y2=str(H - B), **axis)
    ET.SubElement(svg, "line", x1=str(L), y1=str(T), x2=str(L), y2=str(H - B), **axis)
    font = {"font-size": "11", "font-family": "sans-serif"}
    for t in np.linspace(x0, x1, 5):
        ET.SubElement(svg, "text", x=f"{px(t):.1f}", y=str(H - B + 16),
                      **{"text-anchor": "middle"}, **font).text = f"{t:.2f}"
    for t in np.linspace(y0, y1, 5):
        ET.SubElement(svg, "text", x=str(L - 6), y=f"{py(t) + 4:.1f}",
                      **{"text-anchor": "end"}, **font).text = f"{t:.2f}"
    ET.SubElement(svg, "text", x=str((L + W - R) / 2), y=str(H - 12),
                  **{"text-anchor": "middle"}, **font).text = "attack rate"
    ET.SubElement(svg, "text", x="14", y=str((T + H - B) / 2), transform=f"rotate(-90 14 {(T + H - B) / 2})",
                  **{"text-anchor": "middle"}, **font).text = "mean error rate"
    for i, (key, pts) in enumerate(sorted(series.items())):
        pts.sort()
        color = _PALETTE[i % len(_PALETTE)]
        ET.SubElement(svg, "polyline", fill="none", stroke=color, **{"stroke-width": "2"},
                      points=" ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts))
        for x, y in pts:
            ET.SubElement(svg, "circle", cx=f"{px(x):.1f}", cy=f"{py(y):.1f}", r="3", fill=color)
        label = "/".join(key[:2] + (key[2],)) if multi else key[2]
        ly = T + 16 * i + 8
        ET.SubElement(svg, "line", x1=str(W - R + 10), y1=str(ly), x2=str(W - R + 30), y2=str(ly),
                      stroke=color, **{"stroke-width": "2"})
        ET.SubElement(svg, "text", x=str(W - R + 35), y=str(ly + 4), **font).text = label
    ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)


def write_outputs(cfg: ExperimentConfig, rows, out_dir) -> Summary:
    """``results.csv``, ``timings.csv``, ``summary.csv``, ``plot.svg`` and ``metadata.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(rows, out / "results.csv")
    emit_csv(rows, out / "timings.csv", include_runtime=True)
    meta = cfg.metadata()
    meta["rows"] = len(rows)
    meta["failed_rows"] = sum(r.failed for r in rows)
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    if not rows:
        return Summary([], [])
    summary = summarize(rows)
    emit_summary_csv(summary, out / "summary.csv")
    emit_plot(summary, out / "plot.svg", title=f"{cfg.dataset} / {cfg.attack}")
    return summary
