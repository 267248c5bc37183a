import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from periodic_qmc.cbc import cbc_fast
from periodic_qmc.lattice import (IntegrandError, LatticeRule, dual_tail_bound, iter_points,
                                  points, qmc_apply, worst_case_error_dual,
                                  worst_case_error_kernel)
from periodic_qmc.special_fn import riemann_zeta
from periodic_qmc.spod_weights import SpodWeightSpec, pde_spod_weights, weight_of_subset
from tests.oracles import exact_wce


class TestPoints:
    def test_example(self):
        rule = LatticeRule(4, (1, 3))
        np.testing.assert_array_equal(points(rule)[1], [0.25, 0.75])
        np.testing.assert_array_equal(points(rule)[0], [0.0, 0.0])

    def test_centered(self):
        rule = LatticeRule(4, (1, 3), "centered")
        P = points(rule)
        np.testing.assert_array_equal(P[0], [-0.5, -0.5])
        assert P.min() >= -0.5 and P.max() < 0.5

    def test_streamed_matches_materialized(self):
        rule = LatticeRule(101, (1, 40, 85), "centered")
        np.testing.assert_array_equal(np.array(list(iter_points(rule, block_size=7))), points(rule))

    def test_unit_multiplier_permutes_set(self):
        n, z = 5, np.array([1, 2])
        base = {tuple(p) for p in points(LatticeRule(n, tuple(z)))}
        for c in range(1, 5):
            other = {tuple(p) for p in points(LatticeRule(n, tuple(c * z % n)))}
            assert other == base

    def test_validation(self):
        with pytest.raises(ValueError):
            LatticeRule(6, (1, 2))
        with pytest.raises(ValueError):
            LatticeRule(5, (1,), "shifted")


class TestQmcApply:
    def test_constant(self):
        assert qmc_apply(LatticeRule(17, (1, 5)), lambda y: 1.0) == pytest.approx(1.0, rel=1e-15)

    def test_dual_character_integrated_as_one(self):
        n, z = 17, (1, 5)
        h = np.array([5, -1])  # 5*1 - 1*5 = 0 mod 17
        val = qmc_apply(LatticeRule(n, z), lambda y: np.exp(2j * np.pi * h @ y))
        assert abs(val - 1.0) < 1e-13

    @pytest.mark.parametrize("n", [5, 17, 101, 1009])
    def test_full_period_sine(self, n):
        assert abs(qmc_apply(LatticeRule(n, (1, 3 % n)), lambda y: math.sin(2 * math.pi * y[0]))) < 1e-14

    def test_trig_polynomial_off_dual_is_exact(self):
        n, z = 31, (1, 12)
        rule = LatticeRule(n, z)
        modes = [(h1, h2) for h1 in range(-3, 4) for h2 in range(-3, 4)]
        assert all((h1 * z[0] + h2 * z[1]) % n or (h1, h2) == (0, 0) for h1, h2 in modes)
        rng = np.random.default_rng(3)
        coef = {m: rng.standard_normal() for m in modes}

        def F(y):
            return sum(c * math.cos(2 * math.pi * (m[0] * y[0] + m[1] * y[1])) for m, c in coef.items())

        assert qmc_apply(rule, F) == pytest.approx(coef[(0, 0)], abs=1e-13)

    def test_error_carries_index(self):
        def F(y):
            if y[0] > 0.5:
                raise ZeroDivisionError("boom")
            return 0.0

        with pytest.raises(IntegrandError) as info:
            qmc_apply(LatticeRule(7, (1,)), F)
        assert info.value.index == 4


def _spec(alpha, s, c=0.5):
    return pde_spod_weights(c * np.arange(1, s + 1, dtype=float) ** -2, alpha, s)


class TestKernelForm:
    @pytest.mark.parametrize("n", [5, 17, 31, 101])
    def test_s1_closed_form(self, n):
        spec = _spec(2, 1)
        g1 = weight_of_subset(spec, [0])
        val = worst_case_error_kernel(LatticeRule(n, (1,)), spec, 2)
        assert val == pytest.approx(g1 * math.pi**2 / 3 / n**2, rel=1e-13)

    @pytest.mark.parametrize("alpha", [2, 4])
    @pytest.mark.parametrize("n", [7, 17, 31])
    def test_matches_subset_enumeration(self, n, alpha):
        spec = _spec(alpha, 3)
        rng = np.random.default_rng(n + alpha)
        for _ in range(3):
            z = tuple(int(v) for v in rng.integers(1, n, 3))
            val = worst_case_error_kernel(LatticeRule(n, z), spec, alpha)
            assert val == pytest.approx(exact_wce(n, z, spec, alpha), rel=1e-12)

    def test_zero_weights(self):
        spec = SpodWeightSpec(2, np.zeros((2, 2)))
        assert worst_case_error_kernel(LatticeRule(17, (1, 4)), spec, 2) == 0.0

    def test_odd_alpha(self):
        with pytest.raises(ValueError):
            worst_case_error_kernel(LatticeRule(17, (1,)), _spec(2, 1), 3)

    @settings(max_examples=20, deadline=None)
    @given(n=st.sampled_from([7, 11, 13, 17, 19, 23]), data=st.data())
    def test_nonnegative(self, n, data):
        z = tuple(data.draw(st.lists(st.integers(1, n - 1), min_size=1, max_size=4)))
        assert worst_case_error_kernel(LatticeRule(n, z), _spec(2, len(z)), 2) >= 0

    def test_decreasing_along_primes_with_cbc(self):
        spec = _spec(2, 6, c=0.2)
        vals = [cbc_fast(n, 6, spec, 2).step_values[-1] for n in (17, 31, 67, 127, 257, 503)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestDualForm:
    @pytest.mark.parametrize("alpha", [2, 4])
    def test_s1_partial_zeta_sum(self, alpha):
        n, H = 17, 200
        spec = _spec(alpha, 1)
        g1 = weight_of_subset(spec, [0])
        M = H // n
        ref = 2 * g1 * sum(m ** -alpha for m in range(1, M + 1)) / n**alpha
        assert worst_case_error_dual(LatticeRule(n, (1,)), spec, alpha, H) == pytest.approx(ref, rel=1e-13)

    def test_empty_below_first_multiple(self):
        assert worst_case_error_dual(LatticeRule(17, (1,)), _spec(2, 1), 2, 16) == 0.0

    def test_monotone_in_H(self):
        rule = LatticeRule(17, (1, 5))
        spec = _spec(2, 2)
        vals = [worst_case_error_dual(rule, spec, 2, H) for H in (10, 20, 50, 100, 200)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("alpha", [2, 4])
    def test_approaches_kernel_from_below(self, alpha):
        spec = _spec(alpha, 2)
        g = cbc_fast(17, 2, spec, alpha)
        rule = LatticeRule.from_vector(g)
        pk = worst_case_error_kernel(rule, spec, alpha)
        gaps = []
        for H in (25, 50, 100, 200):
            pd = worst_case_error_dual(rule, spec, alpha, H)
            assert pd <= pk * (1 + 1e-13)
            assert pk - pd <= dual_tail_bound(spec, alpha, H)
            gaps.append(pk - pd)
        assert all(a > b for a, b in zip(gaps, gaps[1:]))

    @pytest.mark.parametrize("n", [17, 31])
    def test_three_dimensions_within_tail_bound(self, n):
        spec = _spec(4, 3)
        rule = LatticeRule.from_vector(cbc_fast(n, 3, spec, 4))
        pk = worst_case_error_kernel(rule, spec, 4)
        pd = worst_case_error_dual(rule, spec, 4, 60)
        assert 0 <= pk - pd <= dual_tail_bound(spec, 4, 60)

    def test_enumeration_budget(self):
        with pytest.raises(ValueError):
            worst_case_error_dual(LatticeRule(17, (1, 2, 3, 4)), _spec(2, 4), 2, 200)

    def test_closed_form_limit(self):
        # the full dual sum for s = 1 is 2 gamma_1 zeta(alpha) / n^alpha
        spec = _spec(4, 1)
        g1 = weight_of_subset(spec, [0])
        pk = worst_case_error_kernel(LatticeRule(31, (1,)), spec, 4)
        assert pk == pytest.approx(2 * g1 * riemann_zeta(4) / 31**4, rel=1e-12)
