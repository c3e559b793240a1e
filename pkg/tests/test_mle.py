import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bilateral_exact.mle import (
    BOUNDARY_SLACK,
    DEGENERATE_PI,
    R_given_pi,
    fit_null,
    pi_given_R,
    score_null,
)
from bilateral_exact.model import DomainError, R_bounds, SufficientStat, in_domain, pi_upper

from oracles import golden_max, grid_refine_mle, null_loglik

EXAMPLE_A_POOLED = SufficientStat(1, 1, 9, 15, 22)
EXAMPLE_B_POOLED = SufficientStat(5, 3, 5, 4, 4)


def small_stats(max_total=6):
    return st.tuples(*[st.integers(0, max_total)] * 5).map(lambda s: SufficientStat(*s)).filter(
        lambda s: s.M + s.N > 0
    )


class TestFitNull:
    def test_no_bilateral_data(self):
        fit = fit_null(SufficientStat(0, 0, 0, 3, 5))
        assert fit.pi_hat == pytest.approx(5 / 8)
        assert fit.R_hat == 1.0
        assert not fit.r_identified and not fit.degenerate

    def test_independence_profile_closed_form(self):
        s = EXAMPLE_A_POOLED
        closed = (s.S1 + 2 * s.S2 + s.N1) / (2 * s.M + s.N)
        assert pi_given_R(s, 1.0) == pytest.approx(closed, abs=1e-12)

    def test_example_a_against_fine_grid(self):
        fit = fit_null(EXAMPLE_A_POOLED)
        pi, R = grid_refine_mle(EXAMPLE_A_POOLED, n=2000)
        assert fit.pi_hat == pytest.approx(pi, abs=1e-4)
        assert fit.R_hat == pytest.approx(R, abs=1e-4)
        # frozen from the grid oracle above
        assert fit.pi_hat == pytest.approx(0.6626491, abs=1e-6)
        assert fit.R_hat == pytest.approx(1.3848913, abs=1e-6)

    def test_example_b_symmetric_rate(self):
        fit = fit_null(EXAMPLE_B_POOLED)
        assert fit.pi_hat == pytest.approx(0.5, abs=1e-10)
        assert fit.R_hat == pytest.approx(20 / 13, abs=1e-8)

    def test_interior_stationarity(self):
        for s in (EXAMPLE_A_POOLED, EXAMPLE_B_POOLED, SufficientStat(3, 4, 2, 5, 1)):
            fit = fit_null(s)
            assert fit.converged and not fit.boundary
            assert fit.gradient_norm < 1e-8
            assert max(abs(v) for v in score_null(s, fit.pi_hat, fit.R_hat)) < 1e-8

    def test_central_difference_gradient(self):
        s = SufficientStat(3, 4, 2, 5, 1)
        fit = fit_null(s)
        h = 1e-5
        g_pi = (null_loglik(s, fit.pi_hat + h, fit.R_hat) - null_loglik(s, fit.pi_hat - h, fit.R_hat)) / (2 * h)
        g_R = (null_loglik(s, fit.pi_hat, fit.R_hat + h) - null_loglik(s, fit.pi_hat, fit.R_hat - h)) / (2 * h)
        assert math.hypot(g_pi, g_R) < 1e-6

    def test_all_zero_responses(self):
        fit = fit_null(SufficientStat(4, 0, 0, 3, 0))
        assert fit.degenerate and fit.pi_hat == DEGENERATE_PI and fit.R_hat == 1.0

    def test_all_responses(self):
        fit = fit_null(SufficientStat(0, 0, 4, 0, 3))
        assert fit.degenerate and fit.pi_hat == 1 - DEGENERATE_PI

    def test_no_singly_affected_is_degenerate(self):
        # the optimum sits on the pb1 = 0 edge
        fit = fit_null(SufficientStat(2, 0, 3, 1, 1))
        assert fit.degenerate and fit.boundary
        lo, hi = R_bounds(fit.pi_hat)
        assert hi - fit.R_hat < 1e-6

    @settings(max_examples=50, deadline=None)
    @given(small_stats())
    def test_global_optimum_on_grid(self, s):
        fit = fit_null(s)
        best = fit.loglik
        us = (np.arange(200) + 0.5) / 200
        for pi in us[::7]:
            lo, hi = R_bounds(pi)
            for v in us[::7]:
                assert null_loglik(s, pi, lo + v * (hi - lo)) <= best + 1e-9

    @settings(max_examples=50, deadline=None)
    @given(small_stats())
    def test_fixed_point_of_conditional_maximisers(self, s):
        fit = fit_null(s)
        if fit.degenerate or not fit.r_identified or fit.boundary:
            return
        assert R_given_pi(s, fit.pi_hat) == pytest.approx(fit.R_hat, abs=1e-8)
        assert pi_given_R(s, fit.R_hat) == pytest.approx(fit.pi_hat, abs=1e-8)

    @settings(max_examples=50, deadline=None)
    @given(small_stats())
    def test_fit_in_domain(self, s):
        fit = fit_null(s)
        assert in_domain(fit.pi_hat, fit.R_hat)


class TestPiGivenR:
    def test_no_bilateral(self):
        assert pi_given_R(SufficientStat(0, 0, 0, 2, 3), 1.5) == pytest.approx(0.6)

    def test_example_b_against_golden_section(self):
        R = 1.2
        expected = golden_max(lambda p: null_loglik(EXAMPLE_B_POOLED, p, R), 1e-9, pi_upper(R) - 1e-9)
        assert pi_given_R(EXAMPLE_B_POOLED, R) == pytest.approx(expected, abs=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(small_stats(), st.floats(0.2, 3.0))
    def test_matches_golden_section(self, s, R):
        if s.M == 0:
            return
        top = pi_upper(R)
        got = pi_given_R(s, R)
        ref = golden_max(lambda p: null_loglik(s, p, R), BOUNDARY_SLACK, top - BOUNDARY_SLACK)
        assert null_loglik(s, got, R) >= null_loglik(s, ref, R) - 1e-9

    def test_rejects_nonpositive_R(self):
        with pytest.raises(DomainError):
            pi_given_R(EXAMPLE_B_POOLED, 0.0)


class TestRGivenPi:
    def test_root_against_golden_section(self):
        s = SufficientStat(1, 2, 1, 0, 0)
        pi = (s.S1 + 2 * s.S2) / (2 * s.M)
        lo, hi = R_bounds(pi)
        expected = golden_max(lambda r: null_loglik(s, pi, r), lo + 1e-12, hi - 1e-12)
        got = R_given_pi(s, pi)
        assert got == pytest.approx(expected, abs=1e-6)
        assert abs(score_null(s, pi, got)[1]) < 1e-8

    def test_only_singly_affected_goes_to_lower_edge(self):
        for pi in (0.3, 0.7):
            lo, _ = R_bounds(pi)
            assert R_given_pi(SufficientStat(0, 5, 0, 0, 0), pi) == pytest.approx(lo, abs=2 * BOUNDARY_SLACK)

    def test_only_doubly_affected_goes_to_upper_edge(self):
        for pi in (0.3, 0.7):
            _, hi = R_bounds(pi)
            assert R_given_pi(SufficientStat(0, 0, 4, 0, 0), pi) == pytest.approx(hi, abs=2 * BOUNDARY_SLACK)

    @settings(max_examples=60, deadline=None)
    @given(small_stats(), st.floats(0.02, 0.98))
    def test_maximises_conditional_likelihood(self, s, pi):
        if s.M == 0:
            return
        lo, hi = R_bounds(pi)
        got = R_given_pi(s, pi)
        assert lo < got < hi
        ref = golden_max(lambda r: null_loglik(s, pi, r), lo + 1e-12, hi - 1e-12)
        # edge optima are held a small slack inside the open interval
        assert null_loglik(s, pi, got) >= null_loglik(s, pi, ref) - 1e-6
