import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bdgraphtv.errors import ArgumentError, KernelError
from bdgraphtv.kernels import (Kernel, QuadratureSpec, SymMatrix, phi_eta, phi_eta_batch,
                               radial_moment, rescale, second_moment)
from oracles import phi_indicator_2d, phi_indicator_mc

finite = st.floats(-5, 5, allow_nan=False)


def sym2(a, b, c):
    return np.array([[a, b], [b, c]])


def random_rotation(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


class TestRescale:
    def test_indicator_1d_half_bandwidth(self):
        eta = rescale(Kernel.indicator(1, 1, d=1), 0.5)
        assert eta(0.25) == pytest.approx(2.0)

    def test_unit_eps_is_identity(self):
        k = Kernel.piecewise_constant([(0.5, 2.0), (1.0, 1.0)], d=2)
        x = np.random.default_rng(0).uniform(-1.2, 1.2, size=(200, 2))
        np.testing.assert_array_equal(rescale(k, 1.0)(x), k(x))

    def test_beyond_cutoff(self):
        eta = rescale(Kernel.indicator(1, 1, d=2), 0.1)
        assert eta(np.array([0.2, 0.0])) == 0.0

    def test_tie_at_cutoff_is_zero(self):
        k = Kernel.indicator(1, 1, d=2)
        assert k(np.array([1.0, 0.0])) == 0.0
        assert k(np.array([1.0 - 1e-15, 0.0])) == 1.0

    @pytest.mark.parametrize("eps", [0.05, 0.3, 2.0])
    def test_mass_is_preserved(self, eps):
        k = Kernel.indicator(1.5, 0.8, d=2)
        eta = rescale(k, eps)
        g, w = np.polynomial.legendre.leggauss(200)
        top = 0.8 * eps * (1 - 1e-15)
        r = (g + 1) / 2 * top
        mass = float(np.sum(eta(np.stack([r, 0 * r], 1)) * 2 * math.pi * r * w * top / 2))
        assert mass == pytest.approx(1.5 * math.pi * 0.8**2, rel=1e-12)

    @pytest.mark.parametrize("eps", [0.0, -1.0])
    def test_rejects_nonpositive_eps(self, eps):
        with pytest.raises(ArgumentError):
            rescale(Kernel.indicator(), eps)


class TestKernelConstruction:
    def test_rejects_increasing_profile(self):
        with pytest.raises(KernelError):
            Kernel.custom(lambda t: 1 + t, d=2, radius=1.0)

    def test_rejects_zero_at_origin(self):
        with pytest.raises(KernelError):
            Kernel.custom(lambda t: np.where(t > 0, 0.0, 0.0), d=2, radius=1.0)

    def test_rejects_discontinuity_at_origin(self):
        with pytest.raises(KernelError):
            Kernel.custom(lambda t: np.where(t == 0, 2.0, 1.0), d=2, radius=1.0)

    def test_rejects_heavy_tail(self):
        with pytest.raises(KernelError):
            Kernel.custom(lambda t: 1.0 / (1.0 + t) ** 3, d=2)

    def test_gaussian_tail_is_truncated(self):
        k = Kernel.custom(lambda t: np.exp(-t * t), d=2)
        m = radial_moment(k)
        assert m.value == pytest.approx(0.5, rel=1e-8)
        tail = math.exp(-k.truncation_radius**2) * (k.truncation_radius**2 + 1) / 2
        assert tail == pytest.approx(1e-8 * 0.5, rel=0.05)

    def test_symmatrix_is_exactly_symmetric(self):
        m = np.random.default_rng(1).standard_normal((3, 3))
        s = SymMatrix(m).array
        assert np.array_equal(s, s.T)
        assert not s.flags.writeable


class TestSecondMoment:
    def test_indicator_1d(self):
        assert second_moment(Kernel.indicator(1, 1, d=1)).value == pytest.approx(2 / 3)

    def test_indicator_2d(self):
        assert second_moment(Kernel.indicator(1, 1, d=2)).value == pytest.approx(math.pi / 2)

    def test_linear_in_profile(self):
        k = Kernel.indicator(1, 0.7, d=3)
        assert second_moment(k.scaled(2.0)).value == pytest.approx(2 * second_moment(k).value)


class TestPhiEta:
    def test_identity_2d(self):
        res = phi_eta(Kernel.indicator(1, 1, 2), np.eye(2))
        assert abs(res.value - math.pi / 2) < 1e-10
        assert res.error_estimate < 1e-8

    def test_scalar_1d(self):
        for a in (-3.0, 0.5, 2.0):
            assert phi_eta(Kernel.indicator(1, 1, 1), [[a]]).value == pytest.approx(2 * abs(a) / 3)

    @pytest.mark.parametrize("d", [1, 2, 3, 4])
    def test_zero_matrix(self, d):
        assert phi_eta(Kernel.indicator(1, 1, d), np.zeros((d, d))).value == 0.0

    def test_identity_3d(self):
        assert phi_eta(Kernel.indicator(1, 1, 3), np.eye(3)).value == pytest.approx(
            4 * math.pi / 5, rel=1e-10)

    def test_rank_one(self):
        assert phi_eta(Kernel.indicator(1, 1, 2), np.diag([1.0, 0.0])).value == pytest.approx(
            math.pi / 4, rel=1e-10)

    @given(finite, finite, finite)
    def test_matches_closed_form(self, a, b, c):
        m = sym2(a, b, c)
        val = phi_eta(Kernel.indicator(1.3, 0.9, 2), m).value
        assert val == pytest.approx(phi_indicator_2d(m, 1.3, 0.9), rel=1e-5, abs=1e-9)

    def test_monte_carlo_within_three_sigma(self):
        a = np.array([[1.0, 0.3], [0.3, -0.5]])
        k = Kernel.indicator(1, 1, 2)
        res = phi_eta(k, a, QuadratureSpec(method="mc", mc_nodes=400_000, seed=3))
        exact = phi_indicator_2d(a)
        assert abs(res.value - exact) < 3 * res.error_estimate

    def test_independent_mc_oracle_4d(self):
        a = np.diag([1.0, -1.0, 0.5, 0.0])
        k = Kernel.indicator(1, 1, 4)
        res = phi_eta(k, a, QuadratureSpec(mc_nodes=400_000, seed=5))
        ref, se = phi_indicator_mc(a, 4, 1_000_000, seed=11)
        assert abs(res.value - ref) < 4 * math.hypot(se, res.error_estimate)

    @given(finite, finite, finite, st.floats(-4, 4, allow_nan=False))
    def test_absolute_homogeneity(self, a, b, c, t):
        k = Kernel.indicator(1, 1, 2)
        m = sym2(a, b, c)
        base = phi_eta(k, m).value
        assert phi_eta(k, t * m).value == pytest.approx(abs(t) * base, rel=1e-10, abs=1e-300)

    @pytest.mark.parametrize("d", [2, 3])
    def test_rotation_invariance(self, d):
        rng = np.random.default_rng(d)
        k = Kernel.indicator(1, 1, d)
        a = rng.standard_normal((d, d))
        a = a + a.T
        r = random_rotation(rng, d)
        q = QuadratureSpec(method="mc", mc_nodes=300_000, seed=1)
        x, y = phi_eta(k, a, q), phi_eta(k, r.T @ a @ r, q)
        assert abs(x.value - y.value) < 4 * math.hypot(x.error_estimate, y.error_estimate)

    def test_symmetric_part_only(self):
        m = np.random.default_rng(4).standard_normal((3, 3))
        k = Kernel.indicator(1, 1, 3)
        assert phi_eta(k, m).value == phi_eta(k, (m + m.T) / 2).value

    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_skew_matrices_vanish(self, d):
        w = np.random.default_rng(d).standard_normal((d, d))
        assert phi_eta(Kernel.indicator(1, 1, d), w - w.T).value == 0.0

    def test_monotone_in_kernel(self):
        small = Kernel.indicator(1.0, 1.0, 2)
        big = Kernel.piecewise_constant([(1.0, 1.0), (1.2, 0.5)], 2)
        mats = np.random.default_rng(6).standard_normal((50, 2, 2))
        lo, _, _ = phi_eta_batch(small, mats)
        hi, _, _ = phi_eta_batch(big, mats)
        assert np.all(lo <= hi)

    def test_custom_kernel_matches_indicator_limit(self):
        k = Kernel.custom(lambda t: np.ones_like(t), d=2, radius=1.0)
        assert phi_eta(k, np.eye(2)).value == pytest.approx(math.pi / 2, rel=1e-8)

    def test_runtime_record(self):
        rec = phi_eta(Kernel.indicator(), np.eye(2)).as_record()
        assert set(rec) == {"value", "error_estimate", "nodes"}
