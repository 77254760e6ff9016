"""Command line: ``klidsvm run ...`` sweeps attack rates and writes CSV/SVG reports."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields

import numpy as np

from .dsvm import DsvmConfig
from .harness import DEFENSES, MODES, ExperimentConfig, run_experiment, write_outputs
from .svm import PRESETS

log = logging.getLogger("klidsvm")


def parse_rates(text: str) -> tuple:
    """``start:stop:step`` (stop included) or a comma-separated list."""
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise argparse.ArgumentTypeError("rates range must be start:stop:step with step > 0")
        a, b, step = parts
        n = int(np.floor((b - a) / step + 1e-9)) + 1
        return tuple(round(a + i * step, 10) for i in range(max(n, 0)))
    return tuple(float(p) for p in text.split(",") if p)


def _list(text: str) -> tuple:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="klidsvm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an attack-rate sweep")
    # every flag defaults to None so the config file can fill the gaps
    run.add_argument("--config", help="JSON file of ExperimentConfig fields; flags override it")
    run.add_argument("--dataset", help="data file (.csv or libsvm) or synthetic:<kind>")
    run.add_argument("--attack")
    run.add_argument("--rates", type=parse_rates, help="e.g. 0:0.30:0.05 or 0,0.1,0.2")
    run.add_argument("--defenses", type=_list, help=f"subset of {','.join(DEFENSES)}")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--folds", type=int)
    run.add_argument("--seeds", type=int, help="number of seeds (0..N-1)")
    run.add_argument("--dsvm-nodes", type=int, help="0 disables the distributed runs")
    run.add_argument("--dsvm-z", type=float)
    run.add_argument("--preset", choices=sorted(PRESETS), help="C and gamma from a preset")
    run.add_argument("--C", type=float, dest="C")
    run.add_argument("--gamma", type=float)
    run.add_argument("--n", type=int, help="synthetic sample count")
    run.add_argument("--noise", type=float, help="synthetic noise level")
    run.add_argument("--n-train", type=int)
    run.add_argument("--n-test", type=int)
    run.add_argument("--k", type=int, dest="k_neighbors")
    run.add_argument("--minibatch", type=int, dest="minibatch_size")
    run.add_argument("--clip-quantile", type=float)
    run.add_argument("--sim-rate", type=float)
    run.add_argument("--ln-mu", type=float)
    run.add_argument("--master-seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--no-standardize", action="store_true", default=None)
    run.add_argument("--save-artifacts", action="store_true",
                     help="write attack masks and defense profiles per cell")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge defaults < config file < command-line flags."""
    merged = {}
    if args.config:
        with open(args.config) as fh:
            merged.update(json.load(fh))
    known = {f.name for f in fields(ExperimentConfig)}
    flags = {k: v for k, v in vars(args).items() if v is not None}
    if "preset" in flags:
        C, gamma = PRESETS[flags.pop("preset")]
        merged.update(C=C, gamma=gamma)
    if flags.pop("no_standardize", None):
        merged["standardize"] = False
    if "seeds" in flags:
        flags["seeds"] = tuple(range(flags["seeds"]))
    elif isinstance(merged.get("seeds"), int):
        merged["seeds"] = tuple(range(merged["seeds"]))
    merged.update({k: v for k, v in flags.items() if k in known})
    nodes = flags.get("dsvm_nodes", merged.pop("dsvm_nodes", 0))
    z = flags.get("dsvm_z", merged.pop("dsvm_z", None))
    dsvm = merged.pop("dsvm", None)
    if nodes:
        dsvm = DsvmConfig(M=nodes, **({} if z is None else {"Z": z}))
    elif isinstance(dsvm, dict):
        dsvm = DsvmConfig(**dsvm)
    merged["dsvm"] = dsvm
    if args.save_artifacts:
        merged["artifact_dir"] = str(__import__("pathlib").Path(args.out) / "artifacts")
    if "dataset" not in merged:
        raise ValueError("no dataset given (use --dataset or the config file)")
    unknown = set(merged) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**merged)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"klidsvm: configuration error: {exc}", file=sys.stderr)
        return 2
    log.info("running %s / %s over rates %s", cfg.dataset, cfg.attack, cfg.rates)
    rows = run_experiment(cfg)
    summary = write_outputs(cfg, rows, args.out)
    for o in summary.overall:
        flag = " *" if o["best"] else ""
        print(f"{o['dataset']:>24} {o['attack']:>10} {o['defense']:>14}  "
              f"{o['mean_error']:.4f}  (n={o['n']}, failed={o['failed']}){flag}")
    failed = sum(r.failed for r in rows)
    if failed:
        print(f"klidsvm: {failed} cell(s) failed; see the error column of results.csv",
              file=sys.stderr)
        return 1
    return 0
