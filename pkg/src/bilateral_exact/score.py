"""Score statistics for homogeneity of proportions under the constant-R model.

The array functions (``group_scores``, ``fisher_terms``, ``t_sc_arrays``) take
counts of shape ``[..., g, 5]`` and broadcast over leading axes so the same
code scores one observed table or a whole enumerated sample space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .mle import NullFit, fit_null, score_null
from .model import AltParams, Dataset, NullParams, check_domain

SCHUR_FLOOR = 1e-12


@dataclass(frozen=True)
class ScoreVector:
    u: np.ndarray  # (dl/dpi_1, ..., dl/dpi_g, dl/dR)


@dataclass(frozen=True)
class FisherAlt:
    I_diag: np.ndarray
    I_cross: np.ndarray
    I_RR: float

    def matrix(self) -> np.ndarray:
        g = len(self.I_diag)
        out = np.zeros((g + 1, g + 1))
        out[np.arange(g), np.arange(g)] = self.I_diag
        out[:g, g] = out[g, :g] = self.I_cross
        out[g, g] = self.I_RR
        return out


@dataclass(frozen=True)
class FisherNull:
    I11: float
    I12: float
    I22: float

    def matrix(self) -> np.ndarray:
        return np.array([[self.I11, self.I12], [self.I12, self.I22]])


def group_scores(counts: np.ndarray, pi, R) -> tuple[np.ndarray, np.ndarray]:
    """Per-group ``dl/dpi_i`` and per-group contributions to ``dl/dR``.

    ``counts`` is ``[..., g, 5]``; ``pi`` broadcasts against ``[..., g]`` and ``R``
    against ``[...]``.  Zero counts never touch their (possibly degenerate) cell.
    """
    counts = np.asarray(counts, dtype=float)
    pi = np.asarray(pi, dtype=float)
    R = np.asarray(R, dtype=float)[..., None]
    m0, m1, m2, n0, n1 = (counts[..., k] for k in range(5))
    pb0 = R * pi * pi - 2.0 * pi + 1.0
    one_m_Rpi = 1.0 - R * pi
    with np.errstate(divide="ignore", invalid="ignore"):
        t0_pi = np.where(m0 > 0, m0 * (2.0 * R * pi - 2.0) / pb0, 0.0)
        t1_pi = np.where(m1 > 0, m1 * (1.0 - 2.0 * R * pi) / (pi * one_m_Rpi), 0.0)
        u_pi = t0_pi + t1_pi + (2.0 * m2 + n1) / pi - n0 / (1.0 - pi)
        t0_R = np.where(m0 > 0, m0 * pi * pi / pb0, 0.0)
        t1_R = np.where(m1 > 0, m1 * pi / one_m_Rpi, 0.0)
        u_R = t0_R - t1_R + m2 / R
    return u_pi, u_R


def fisher_terms(m, n, pi, R) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Expected information entries for groups with ``m`` bilateral and ``n`` unilateral subjects.

    Returns ``(I_pi_pi, I_pi_R, I_R_R)`` per group, all broadcast together.
    """
    m = np.asarray(m, dtype=float)
    n = np.asarray(n, dtype=float)
    pi = np.asarray(pi, dtype=float)
    R = np.asarray(R, dtype=float)
    pb0 = R * pi * pi - 2.0 * pi + 1.0
    piR_m1 = pi * R - 1.0
    I11 = (
        n / pi
        - n / (pi - 1.0)
        + 4.0 * m * R
        + 4.0 * m * piR_m1**2 / pb0
        - 2.0 * m * (2.0 * pi * R - 1.0) ** 2 / (pi * piR_m1)
    )
    I12 = -2.0 * m * pi * pi * (R - 1.0) / (piR_m1 * pb0)
    I22 = -m * pi * pi * (pi * R - 2.0 * pi + 1.0) / (R * piR_m1 * pb0)
    return I11, I12, I22


def score_vector(data: Dataset, params: AltParams) -> ScoreVector:
    u_pi, u_R = group_scores(data.counts(), np.array(params.pis), params.R)
    return ScoreVector(np.append(u_pi, u_R.sum()))


def fisher_alt(margins, params: AltParams) -> FisherAlt:
    margins = np.asarray(margins, dtype=float)
    I11, I12, I22 = fisher_terms(margins[:, 0], margins[:, 1], np.array(params.pis), params.R)
    return FisherAlt(np.asarray(I11), np.asarray(I12), float(np.sum(I22)))


def fisher_null(M: float, N: float, params: NullParams) -> FisherNull:
    I11, I12, I22 = fisher_terms(M, N, params.pi, params.R)
    return FisherNull(float(I11), float(I12), float(I22))


def t_sc_arrays(counts: np.ndarray, pi_hat, R_hat, degenerate=None) -> np.ndarray:
    """Homogeneity score statistic at the pooled null fit, vectorised over tables.

    Groups with no subjects contribute nothing.  When the R-adjustment has no
    information (Schur complement at or below ``SCHUR_FLOOR``) only the
    diagonal part is kept.  Tables flagged ``degenerate`` score 0.
    """
    counts = np.asarray(counts, dtype=float)
    pi_hat = np.asarray(pi_hat, dtype=float)
    R_hat = np.asarray(R_hat, dtype=float)
    m = counts[..., 0] + counts[..., 1] + counts[..., 2]
    n = counts[..., 3] + counts[..., 4]
    present = (m + n) > 0
    u_pi, _ = group_scores(counts, pi_hat[..., None], R_hat)
    I_pp, I_pR, I_RR = fisher_terms(m, n, pi_hat[..., None], R_hat[..., None])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(present, u_pi / I_pp, 0.0)
        first = np.where(present, u_pi * ratio, 0.0).sum(axis=-1)
        cross = np.where(present, I_pR * ratio, 0.0).sum(axis=-1)
        schur = I_RR.sum(axis=-1) - np.where(present, I_pR**2 / I_pp, 0.0).sum(axis=-1)
        second = np.where(schur > SCHUR_FLOOR, cross**2 / schur, 0.0)
    t = first + second
    if degenerate is not None:
        t = np.where(np.asarray(degenerate, dtype=bool), 0.0, t)
    return np.maximum(t, 0.0)


def t_sc(data: Dataset, fit: NullFit | None = None) -> float:
    """Score statistic for the observed table (fit computed if not supplied)."""
    if fit is None:
        fit = fit_null(data.suffstat())
    if fit.degenerate:
        return 0.0
    return float(t_sc_arrays(data.counts(), fit.pi_hat, fit.R_hat))


def t_sc_star(data: Dataset, params: NullParams) -> float:
    """Two-parameter null score statistic used to invert for confidence intervals.

    Returns ``inf`` when the null information matrix is singular.
    """
    stat = data.suffstat()
    return t_sc_star_stat(stat.as_array(), params.pi, params.R)


def t_sc_star_stat(stat: np.ndarray, pi: float, R: float) -> float:
    from .model import SufficientStat

    check_domain(pi, R)
    s = SufficientStat(*(int(v) for v in stat))
    d_pi, d_R = score_null(s, pi, R)
    I11, I12, I22 = fisher_terms(s.M, s.N, pi, R)
    det = I11 * I22 - I12 * I12
    if s.M == 0:
        # R carries no information; fall back to the pi-only statistic
        return d_pi * d_pi / I11 if I11 > 0 else float("inf")
    if not det > 0:
        return float("inf")
    return float((d_pi * d_pi * I22 - 2.0 * d_pi * d_R * I12 + d_R * d_R * I11) / det)


def asymptotic_p_value(t: float, df: int) -> float:
    # a single observed group cannot show heterogeneity
    if df <= 0:
        return 1.0
    return float(stats.chi2.sf(t, df))


def effective_groups(data: Dataset) -> int:
    return sum(1 for gr in data.groups if gr.m + gr.n > 0)


def asymptotic_p(data: Dataset) -> float:
    """Chi-square upper tail of the score statistic with (observed groups - 1) df."""
    return asymptotic_p_value(t_sc(data), effective_groups(data) - 1)
