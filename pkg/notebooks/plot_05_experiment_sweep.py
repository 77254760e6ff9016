"""
Sweeping flip rates with the experiment harness
===============================================

The harness runs every (rate, seed, fold, defense) cell and returns one row
per cell. The same sweep is available from the ``klidsvm run`` command line.
"""
import tempfile
from pathlib import Path

from klidsvm.harness import ExperimentConfig, run_experiment, summarize, write_outputs

cfg = ExperimentConfig("synthetic:two-gaussians", attack="alfa", rates=(0.0, 0.1, 0.2),
                       defenses=("svm", "klid-svm", "ln-svm"), seeds=(0, 1), n=300,
                       noise=0.8, C=1.0, gamma=0.5)
rows = run_experiment(cfg)
summary = summarize(rows)
for entry in summary.per_rate:
    print(entry)

# %%
# Outputs: results.csv, summary.csv, timings.csv, plot.svg and metadata.json.
with tempfile.TemporaryDirectory() as tmp:
    write_outputs(cfg, rows, Path(tmp))
    print(sorted(p.name for p in Path(tmp).iterdir()))
