"""
Label-flip attacks on a kernel SVM
==================================

Five attacks flip the same 20% of training labels in different ways. ALFA
picks the flips that hurt the trained SVM most. Random flips at this rate
barely matter.
"""
from klidsvm.attacks import run_attack
from klidsvm.data import SplitSpec, generate_synthetic, stratified_split
from klidsvm.svm import SvmConfig, error_rate, train_weighted_svm

ds = generate_synthetic("two-gaussians", 400, 0.8, seed=0)
train, test = stratified_split(ds, SplitSpec(0.5, 1, 0))
cfg = SvmConfig.make(1.0, 0.5)
print(f"clean error: {error_rate(train_weighted_svm(train, None, cfg), test):.3f}")

# %%
# Every attack returns the poisoned dataset and the mask of flipped samples.
for name in ("random", "nearest", "farfirst", "alfa", "alfa-tilt"):
    result = run_attack(name, train, 0.2, cfg, seed=0)
    err = error_rate(train_weighted_svm(result.dataset, None, cfg), test)
    print(f"{name:>10}: {int(result.bool_mask.sum())} flips, error {err:.3f}")
