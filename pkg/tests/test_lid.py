import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from klidsvm.data import DataError, Dataset
from klidsvm.kernel import KernelSpec
from klidsvm.lid import (LID_CAP, LidConfig, class_conditional_arrays, class_conditional_klid,
                         klid_mle, lid_mle)

pos = arrays(float, st.integers(3, 30), elements=st.floats(1e-3, 1e3))


class TestLidMle:

    def test_hand_values(self):
        np.testing.assert_allclose(lid_mle([1, 2, 4]), 1.442695, atol=1e-6)
        np.testing.assert_allclose(lid_mle([np.exp(-1), 1.0]), 2.0)

    def test_degenerate_returns_cap(self):
        assert lid_mle([3.0, 3.0, 3.0]) == LID_CAP

    @pytest.mark.parametrize("bad", [[0.0, 1.0], [-1.0, 2.0], [1.0]])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            lid_mle(bad)

    @given(pos, st.floats(1e-3, 1e3))
    def test_scale_invariant(self, r, c):
        np.testing.assert_allclose(lid_mle(r), lid_mle(r * c), rtol=1e-9)

    @given(pos)
    def test_order_invariant_and_bounded(self, r):
        v = lid_mle(r)
        assert 1e-3 <= v <= LID_CAP
        np.testing.assert_allclose(v, lid_mle(r[::-1]))


class TestKlid:

    def test_reduces_to_lid_of_kernel_distances(self):
        # t = expm1(gamma d^2); choose d so that t = [t_max/e, t_max]
        spec, cfg = KernelSpec(1.0), LidConfig(2, 5)
        t = np.array([np.e - 1, (np.e - 1) * np.e])
        d = np.sqrt(np.log1p(t))
        nb = np.column_stack([d, np.zeros(2)])
        np.testing.assert_allclose(klid_mle(spec, np.zeros(2), nb, cfg), 2.0, rtol=1e-12)

    def test_uses_k_nearest(self, rng):
        X = rng.standard_normal((30, 2))
        cfg = LidConfig(5, 10)
        far = np.vstack([X, X + 100.0])
        np.testing.assert_allclose(klid_mle(KernelSpec(1e-3), np.zeros(2), far, cfg),
                                   klid_mle(KernelSpec(1e-3), np.zeros(2), X, cfg))

    def test_too_few_neighbours(self):
        with pytest.raises(ValueError):
            klid_mle(KernelSpec(1.0), np.zeros(2), np.ones((3, 2)), LidConfig(5, 10))


class TestClassConditional:

    def test_distant_clusters_cross_below_one(self, rng):
        # the opposite cluster is far away, so its distances are nearly equal
        # and the out-class estimate is huge: cross = in / out falls below one
        a = rng.normal(0, 0.1, (40, 2))
        b = rng.normal(0, 0.1, (40, 2)) + 50.0
        ds = Dataset(np.vstack([a, b]), np.r_[np.ones(40), -np.ones(40)])
        recs = class_conditional_klid(ds, KernelSpec(1e-4), LidConfig(10, 30, 0))
        assert len(recs) == 80
        assert all(r.out_class > r.in_class for r in recs)
        assert all(r.cross_class < 1 for r in recs)
        assert all(np.isfinite([r.in_class, r.out_class, r.cross_class]).all() for r in recs)

    def test_deterministic(self, blobs):
        a = class_conditional_arrays(blobs, KernelSpec(0.5), LidConfig(10, 40, 7))
        b = class_conditional_arrays(blobs, KernelSpec(0.5), LidConfig(10, 40, 7))
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)

    def test_ratio(self, blobs):
        i, o, c = class_conditional_arrays(blobs, KernelSpec(0.5), LidConfig(10, 40, 0))
        np.testing.assert_allclose(c, i / o)

    def test_small_class_rejected(self):
        ds = Dataset(np.arange(30, dtype=float).reshape(-1, 1), np.r_[np.ones(25), -np.ones(5)])
        with pytest.raises(DataError):
            class_conditional_klid(ds, KernelSpec(1.0), LidConfig(10, 20))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LidConfig(20, 20)
