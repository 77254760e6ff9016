"""
Local intrinsic dimensionality in input and kernel space
========================================================

The maximum-likelihood LID estimate recovers the dimension of uniformly
filled balls. Its kernel-space counterpart, K-LID, uses RBF kernel distances
instead of Euclidean ones, and for small neighbourhoods it is about half
the input-space value.
"""
import numpy as np

from klidsvm.kernel import KernelSpec
from klidsvm.lid import LidConfig, klid_mle, lid_mle

rng = np.random.default_rng(0)


def ball(n, d):
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((n, 1)) ** (1.0 / d)


# %%
# LID of a query point from its 100 nearest neighbours, for a few dimensions.
for d in (1, 2, 5):
    X = ball(5000, d)
    dist = np.sort(np.linalg.norm(X[1:] - X[0], axis=1))[:100]
    print(f"d={d}: LID at one query point = {lid_mle(dist):.2f}")

# %%
# Shrink the data until gamma * distance**2 is tiny: K-LID tends to LID / 2.
X = ball(2000, 3) * 1e-2
nb = X[1:]
dist = np.sort(np.linalg.norm(nb - X[0], axis=1))[:20]
print("LID / 2 =", lid_mle(dist) / 2)
print("K-LID   =", klid_mle(KernelSpec(1.0), X[0], nb, LidConfig(20, 100)))
