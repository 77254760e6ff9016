"""
Distributed SVM with support-vector exchange
============================================

Five nodes each hold a shard of the data. In every round they update their
own dual block and send newly found support vectors to a fusion center,
which broadcasts the pooled set back. The result matches the centralized
SVM while moving fewer points than sending all data plus every
node's support vectors.
"""
from klidsvm.data import SplitSpec, generate_synthetic, stratified_split
from klidsvm.dsvm import DsvmConfig, comm_report, train_distributed
from klidsvm.svm import SvmConfig, error_rate, train_weighted_svm

ds = generate_synthetic("two-gaussians", 1000, 0.5, seed=0)
train, val = stratified_split(ds, SplitSpec(0.5, 1, 0))
cfg = SvmConfig.make(1.0, 0.5)
central = train_weighted_svm(train, None, cfg)

models, trace = train_distributed(train, None, DsvmConfig(M=5), cfg, val, seed=0)
print(f"rounds: {trace.rounds}, converged: {trace.converged}")
print(f"centralized error {error_rate(central, val):.3f}, distributed {error_rate(models[0], val):.3f}")

# %%
# Communication tally against the centralized baseline.
report = comm_report(trace, central.n_support)
for key in ("total_up", "total_down", "total", "centralized_baseline", "reduction"):
    print(f"{key:>22}: {report[key]}")

# %%
# Per-round trace: objective, validation error and points sent up.
for row in trace.rows()[:5]:
    print(row)
