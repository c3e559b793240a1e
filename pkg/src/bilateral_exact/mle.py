"""Maximum-likelihood estimation under the homogeneity null.

Under the null the bilateral cells ``(pb1, pb2)`` and the common ``pi`` are
tied by ``pi = pb2 + pb1 / 2``, and the map ``(pi, R) -> (pb1, pb2)`` is a
bijection onto the open simplex.  In those coordinates the log-likelihood is a
sum of ``count * log(affine)`` terms, hence concave.  Two consequences are used
below: the conditional problem in ``R`` (affine in R for fixed pi) has a single
maximiser, and the profile ``pi -> max_R l(pi, R)`` is concave, so its
derivative can be root-bracketed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import optimize

from .model import DomainError, R_bounds, SufficientStat, pi_upper

# Distance kept from the open-domain boundary when an optimum sits on it.
BOUNDARY_SLACK = 1e-9
DEGENERATE_PI = 1e-6


@dataclass(frozen=True)
class NullFit:
    pi_hat: float
    R_hat: float
    loglik: float
    converged: bool
    gradient_norm: float
    degenerate: bool = False
    boundary: bool = False
    r_identified: bool = True


def _loglik(stat: SufficientStat, pi: float, R: float) -> float:
    cells = (
        (stat.S0, 1.0 - 2.0 * pi + R * pi * pi),
        (stat.S1, 2.0 * pi * (1.0 - R * pi)),
        (stat.S2, R * pi * pi),
        (stat.N0, 1.0 - pi),
        (stat.N1, pi),
    )
    total = 0.0
    for count, p in cells:
        if count:
            if p <= 0.0:
                return -math.inf
            total += count * math.log(p)
    return total


def score_null(stat: SufficientStat, pi: float, R: float) -> tuple[float, float]:
    """Partial derivatives (d/dpi, d/dR) of the pooled null log-likelihood."""
    S0, S1, S2, N0, N1 = stat.S0, stat.S1, stat.S2, stat.N0, stat.N1
    pb0 = R * pi * pi - 2.0 * pi + 1.0
    d_pi = N1 / pi + 2.0 * S2 / pi - N0 / (1.0 - pi)
    d_R = 0.0
    if S0:
        d_pi += S0 * (2.0 * R * pi - 2.0) / pb0
        d_R += S0 * pi * pi / pb0
    if S1:
        d_pi -= S1 * (4.0 * R * pi - 2.0) / (2.0 * pi - 2.0 * R * pi * pi)
        d_R -= S1 * pi / (1.0 - R * pi)
    if S2:
        d_R += S2 / R
    return d_pi, d_R


def _R_given_pi(stat: SufficientStat, pi: float) -> tuple[float, int]:
    """Conditional MLE of R plus an edge code (0 interior, -1 lower edge, +1 upper edge)."""
    if not (0.0 < pi < 1.0):
        raise DomainError(f"pi={pi} outside (0, 1)")
    M = stat.M
    if M == 0:
        return 1.0, 0
    lo, hi = R_bounds(pi)
    slack = min(BOUNDARY_SLACK, 1e-3 * (hi - lo))
    lo_c = lo + slack
    hi_c = hi - slack
    # concave in R for fixed pi, so edge optima are decided by the slope sign
    if score_null(stat, pi, lo_c)[1] <= 0.0:
        return lo_c, -1
    if score_null(stat, pi, hi_c)[1] >= 0.0:
        return hi_c, 1
    S0, S1, S2 = stat.S0, stat.S1, stat.S2
    c = 1.0 - 2.0 * pi
    # dl/dR = 0 multiplied through by R * pb0 * (1 - R pi)
    a2 = -M * pi**3
    a1 = pi * pi * (S0 + S2) - c * pi * (S1 + S2)
    a0 = S2 * c
    roots = np.roots([a2, a1, a0])
    inside = [float(r.real) for r in roots if abs(r.imag) < 1e-12 and lo_c < r.real < hi_c]
    if len(inside) == 1:
        return inside[0], 0
    # float noise near a double root: fall back to bracketing the slope
    return optimize.brentq(lambda r: score_null(stat, pi, r)[1], lo_c, hi_c, xtol=1e-15), 0


def R_given_pi(stat: SufficientStat, pi: float) -> float:
    """R maximising the null log-likelihood at fixed pi (root of a quadratic)."""
    return _R_given_pi(stat, pi)[0]


def _quartic_coefficients(stat: SufficientStat, R: float) -> np.ndarray:
    # dl/dpi multiplied through by pi (1 - pi) (1 - R pi) pb0, increasing powers
    S0, S1, S2, N0, N1 = stat.S0, stat.S1, stat.S2, stat.N0, stat.N1
    one_m_pi = [1.0, -1.0]
    pi_ = [0.0, 1.0]
    one_m_Rpi = [1.0, -R]
    pb0 = [1.0, -2.0, R]
    base = P.polymul(one_m_Rpi, pb0)
    terms = [
        (N1 + 2 * S2) * P.polymul(one_m_pi, base),
        -N0 * P.polymul(pi_, base),
        S0 * P.polymul(P.polymul([-2.0, 2.0 * R], pi_), P.polymul(one_m_pi, one_m_Rpi)),
        S1 * P.polymul(P.polymul([1.0, -2.0 * R], one_m_pi), pb0),
    ]
    out = np.zeros(5)
    for t in terms:
        t = np.asarray(t, dtype=float)
        out[: len(t)] += t
    return out


def pi_given_R(stat: SufficientStat, R: float) -> float:
    """pi maximising the null log-likelihood at fixed R (root of a quartic)."""
    if R <= 0:
        raise DomainError(f"R must be positive, got {R}")
    upper = pi_upper(R)
    if stat.M == 0:
        if stat.N == 0:
            raise DomainError("empty table")
        return float(np.clip(stat.N1 / stat.N, BOUNDARY_SLACK, upper - BOUNDARY_SLACK))
    coef = _quartic_coefficients(stat, R)
    candidates = [BOUNDARY_SLACK, upper - BOUNDARY_SLACK]
    nz = np.flatnonzero(np.abs(coef) > 0)
    if nz.size and nz.max() > 0:
        roots = P.polyroots(coef[: nz.max() + 1])
        candidates += [
            float(r.real) for r in roots if abs(r.imag) < 1e-9 and 0.0 < r.real < upper
        ]
    return max(candidates, key=lambda p: _loglik(stat, p, R))


def _profile_slope(stat: SufficientStat, pi: float) -> float:
    # total derivative of pi -> l(pi, R(pi)); on an edge R moves with pi
    R, edge = _R_given_pi(stat, pi)
    d_pi, d_R = score_null(stat, pi, R)
    if edge == 1:
        return d_pi - d_R / (pi * pi)
    if edge == -1 and pi > 0.5:
        return d_pi + d_R * (2.0 / pi**3 - 2.0 / pi**2)
    return d_pi


def fit_null(stat: SufficientStat) -> NullFit:
    """Constrained MLE ``(pi_hat, R_hat)`` under the homogeneity null.

    Degenerate tables (no responses anywhere, responses everywhere, or no
    bilateral subjects) get ``R_hat = 1`` and ``degenerate=True``.
    """
    S0, S1, S2, N0, N1 = stat.S0, stat.S1, stat.S2, stat.N0, stat.N1
    if stat.M + stat.N == 0:
        return NullFit(0.5, 1.0, 0.0, False, math.nan, degenerate=True)
    if S1 + S2 + N1 == 0:
        pi = DEGENERATE_PI
        return NullFit(pi, 1.0, _loglik(stat, pi, 1.0), True, 0.0, degenerate=True)
    if S0 + S1 + N0 == 0:
        pi = 1.0 - DEGENERATE_PI
        return NullFit(pi, 1.0, _loglik(stat, pi, 1.0), True, 0.0, degenerate=True)
    if stat.M == 0:
        # R is not identified; the statistic is still defined through the pi-part
        pi = N1 / stat.N
        return NullFit(pi, 1.0, _loglik(stat, pi, 1.0), True, 0.0, r_identified=False)

    # the profile slope is decreasing (concave profile) and changes sign inside (0, 1)
    a, b = DEGENERATE_PI, 1.0 - DEGENERATE_PI
    if _profile_slope(stat, a) <= 0.0:
        pi = a
    elif _profile_slope(stat, b) >= 0.0:
        pi = b
    else:
        pi = optimize.brentq(
            lambda p: _profile_slope(stat, p), a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500
        )
    R, edge = _R_given_pi(stat, pi)
    d_pi, d_R = score_null(stat, pi, R)
    # on an edge only the derivative along the edge has to vanish
    grad = abs(_profile_slope(stat, pi)) if edge else math.hypot(d_pi, d_R)
    # S1 = 0 puts the optimum on the pb1 = 0 edge, where the expected
    # information is infinite and the score statistic is undefined
    return NullFit(pi, R, _loglik(stat, pi, R), True, grad, degenerate=(S1 == 0), boundary=bool(edge))
