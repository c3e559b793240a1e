import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bilateral_exact.enumerate import Design, enumerate_tables
from bilateral_exact.model import (
    AltParams,
    Dataset,
    DomainError,
    GroupCounts,
    InputError,
    NullParams,
    R_to_rho,
    SufficientStat,
    cell_probs,
    in_domain,
    log_lik_null,
    log_pmf,
    pi_upper,
    rho_to_R,
)

from oracles import textbook_pmf


def valid_points():
    """(pi, R) strictly inside the domain."""
    return st.tuples(st.floats(0.01, 0.99), st.floats(0.01, 0.99)).map(
        lambda ps: (ps[0], _R_from_unit(ps[0], ps[1]))
    )


def _R_from_unit(pi, s):
    lo = max(0.0, (2.0 - 1.0 / pi) / pi)
    return lo + s * (1.0 / pi - lo)


class TestCellProbs:
    def test_independence(self):
        c = cell_probs(0.5, 1.0)
        assert (c.pb0, c.pb1, c.pb2) == pytest.approx((0.25, 0.5, 0.25))
        assert (c.pu0, c.pu1) == pytest.approx((0.5, 0.5))

    def test_direct_substitution(self):
        c = cell_probs(0.2, 2.0)
        assert (c.pb0, c.pb1, c.pb2) == pytest.approx((0.68, 0.24, 0.08))
        assert (c.pu0, c.pu1) == pytest.approx((0.8, 0.2))

    def test_upper_bound_violation_names_cell(self):
        with pytest.raises(DomainError, match="pb1"):
            cell_probs(0.8, 1.5)

    def test_lower_bound_violation_names_cell(self):
        # pi = 0.9 needs R > (2 - 1/0.9)/0.9 = 0.987...
        with pytest.raises(DomainError, match="pb0"):
            cell_probs(0.9, 0.5)

    @given(valid_points())
    def test_simplexes_sum_to_one(self, point):
        c = cell_probs(*point)
        assert c.pb0 + c.pb1 + c.pb2 == pytest.approx(1.0, abs=1e-12)
        assert c.pu0 + c.pu1 == pytest.approx(1.0, abs=1e-12)
        assert min(c.pb0, c.pb1, c.pb2, c.pu0, c.pu1) > 0


class TestRho:
    def test_examples(self):
        assert rho_to_R(0.3, 0.0) == 1.0
        assert rho_to_R(0.25, 0.5) == pytest.approx(2.5)

    def test_high_pi_point_checked_exactly(self):
        # exact rational arithmetic decides the domain membership
        pi, rho = Fraction(9, 10), Fraction(1, 2)
        R = 1 + rho * (1 - pi) / pi
        pb0 = 1 - 2 * pi + R * pi * pi
        pb1 = 2 * pi * (1 - R * pi)
        assert pb0 > 0 and pb1 > 0
        assert rho_to_R(0.9, 0.5) == pytest.approx(float(R))

    def test_negative_rho_rejected(self):
        with pytest.raises(DomainError):
            rho_to_R(0.5, -0.1)

    @given(st.floats(0.001, 0.999), st.floats(0.0, 0.999))
    def test_round_trip(self, pi, rho):
        assert R_to_rho(pi, rho_to_R(pi, rho)) == pytest.approx(rho, abs=1e-12)

    @given(st.floats(0.001, 0.999), st.floats(0.0, 0.999))
    def test_nonnegative_rho_always_valid(self, pi, rho):
        assert in_domain(pi, rho_to_R(pi, rho))


def test_pi_upper_matches_domain():
    for R in (0.3, 0.9, 1.0, 1.7, 4.0):
        top = pi_upper(R)
        assert in_domain(top - 1e-7, R)
        assert not in_domain(top + 1e-7, R)


class TestTypes:
    def test_negative_count_rejected(self):
        with pytest.raises(InputError):
            GroupCounts(1, -1, 0, 0, 0)

    def test_single_group_rejected(self):
        with pytest.raises(InputError, match="at least 2 groups"):
            Dataset([(1, 0, 0, 0, 0)])

    def test_all_empty_rejected(self):
        with pytest.raises(InputError):
            Dataset([(0, 0, 0, 0, 0)] * 2)

    def test_margins_and_suffstat(self):
        d = Dataset([(0, 1, 3, 8, 11), (1, 0, 6, 7, 11)])
        assert d.margins == ((4, 19), (7, 18))
        assert d.suffstat() == SufficientStat(1, 1, 9, 15, 22)

    def test_params_validated(self):
        with pytest.raises(DomainError):
            NullParams(0.5, 2.5)
        with pytest.raises(DomainError):
            AltParams((0.2, 0.9), 2.0)


class TestLogPmf:
    def test_one_bilateral_subject(self):
        d = Dataset([(1, 0, 0, 0, 0), (0, 0, 0, 0, 0)])
        assert log_pmf(d, AltParams((0.5, 0.5), 1.0)) == pytest.approx(math.log(0.25))

    def test_matches_textbook(self):
        d = Dataset([(0, 1, 3, 8, 11), (1, 0, 6, 7, 11)])
        for pis, R in (((0.5, 0.5), 1.0), ((0.3, 0.6), 1.4)):
            expected = math.log(textbook_pmf(d.counts(), pis, R))
            assert log_pmf(d, AltParams(pis, R)) == pytest.approx(expected, rel=1e-12)

    def test_impossible_event(self):
        # R -> 0 drives pb2 to 0, so a doubly-affected subject becomes impossible
        d = Dataset([(0, 0, 1, 0, 0), (1, 0, 0, 0, 0)])
        from bilateral_exact.model import _xlogy, log_cell_probs

        logp = log_cell_probs(np.array([0.3, 0.3]), 0.0)
        assert np.isneginf(_xlogy(d.counts(), logp).sum())

    @pytest.mark.parametrize("margins", [[(3, 3), (3, 3)], [(2, 0), (1, 3)], [(0, 2), (3, 1)]])
    def test_normalised_over_space(self, margins):
        params = AltParams((0.35, 0.55), 1.3)
        total = math.fsum(math.exp(log_pmf(t, params)) for t in enumerate_tables(Design(margins)))
        assert total == pytest.approx(1.0, abs=1e-10)


class TestLogLikNull:
    def test_bernoulli_terms(self):
        assert log_lik_null(SufficientStat(0, 0, 0, 1, 1), NullParams(0.5, 1.0)) == pytest.approx(-1.3863, abs=1e-4)

    def test_bilateral_terms(self):
        expected = math.log(0.25) + math.log(0.5) + math.log(0.25)
        assert log_lik_null(SufficientStat(1, 1, 1, 0, 0), NullParams(0.5, 1.0)) == pytest.approx(expected)

    @settings(max_examples=20)
    @given(valid_points())
    def test_differs_from_pmf_by_constant(self, point):
        d = Dataset([(0, 1, 3, 8, 11), (1, 0, 6, 7, 11)])
        ref = log_pmf(d, AltParams.null(0.5, 1.0, 2)) - log_lik_null(d.suffstat(), NullParams(0.5, 1.0))
        pi, R = point
        diff = log_pmf(d, AltParams.null(pi, R, 2)) - log_lik_null(d.suffstat(), NullParams(pi, R))
        assert diff == pytest.approx(ref, abs=1e-9)

    def test_same_class_same_value(self):
        a = Dataset([(1, 2, 0, 1, 0), (0, 1, 1, 0, 1)])
        b = Dataset([(0, 2, 1, 0, 1), (1, 1, 0, 1, 0)])
        assert a.suffstat() == b.suffstat()
        p = NullParams(0.4, 1.2)
        assert log_lik_null(a.suffstat(), p) == log_lik_null(b.suffstat(), p)
