"""Exact unconditional and conditional p-values.

Five ways of removing the nuisance parameters ``(pi, R)`` from the tail
probability of the score statistic:

* ``E``   plug in the constrained MLE of the observed table;
* ``M``   take the supremum over the parameter domain;
* ``EM``  order tables by their E p-value, then take the supremum;
* ``CI``  supremum over a (1 - beta) confidence rectangle, plus ``3 * beta``;
* ``C``   condition on the pooled column totals (parameter free).

All unconditional tails are evaluated through ``ClassedSpace``: a tail set is
summarised by the coefficient mass it holds in each sufficient-statistic
class, and its probability at ``(pi, R)`` is a dot product with the class
likelihood kernels.

Tail sets follow a total order on tables (see ``extremeness_rank``): keys
within ``tie_tol`` of each other tie, and ties are broken by lexicographic
table index.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .enumerate import ClassedSpace, Design, build_classed_space, conditional_counts, extremeness_rank, space_size
from .mle import NullFit, R_given_pi, fit_null, pi_given_R, score_null
from .model import Dataset, R_bounds, SufficientStat, log_coefficients, log_lik_null_kernel
from .score import asymptotic_p, fisher_terms, t_sc_arrays

METHODS = ("A", "E", "M", "EM", "CI", "C")
SPACE_METHODS = ("E", "M", "EM", "CI")


class CapacityError(RuntimeError):
    """Sample space too large for the requested method."""


@dataclass(frozen=True)
class ExactConfig:
    alpha: float = 0.05
    beta: float = 0.001
    grid: tuple[int, int] = (200, 200)
    refine_rounds: int = 2
    tie_tol: float = 1e-12
    table_cap: int = 5_000_000
    ci_min_step: float = 1e-4
    ci_shrink: float = 0.1
    # restrict supremum searches to rho >= 0 (R >= 1); False searches the whole domain
    nonnegative_rho: bool = True

    def __post_init__(self) -> None:
        if not (0.0 < 3.0 * self.beta < self.alpha):
            raise ValueError(f"need 0 < 3*beta < alpha, got beta={self.beta}, alpha={self.alpha}")
        if min(self.grid) < 50:
            raise ValueError("supremum grids need at least 50 points per axis")
        if self.refine_rounds < 0 or self.tie_tol < 0:
            raise ValueError("refine_rounds and tie_tol must be nonnegative")


@dataclass(frozen=True)
class CIBounds:
    pi_lo: float
    pi_hi: float
    R_lo: float
    R_hi: float
    pi_edge: bool = False
    R_edge: bool = False


@dataclass
class TestResult:
    method: str
    p_value: float
    statistic: float
    diagnostics: dict = field(default_factory=dict)


# -- supremum search ----------------------------------------------------------------


def grid_tails(space: ClassedSpace, class_coef: np.ndarray, pi, R) -> np.ndarray:
    """Tail probability held by ``class_coef`` at each ``(pi, R)`` point (matching shapes)."""
    pi = np.asarray(pi, dtype=float)
    R = np.asarray(R, dtype=float)
    live = class_coef > 0
    out = np.zeros(pi.size)
    if not live.any():
        return out.reshape(pi.shape)
    stats_live = space.stats[live]
    coef_live = class_coef[live]
    flat_pi, flat_R = pi.ravel(), R.ravel()
    step = max(1, 4_000_000 // stats_live.shape[0])
    for lo in range(0, flat_pi.size, step):
        w = log_lik_null_kernel(stats_live, flat_pi[lo : lo + step], flat_R[lo : lo + step])
        out[lo : lo + step] = np.exp(w) @ coef_live
    return out.reshape(pi.shape)


def _to_params(u, v, region, nonnegative_rho: bool):
    """Map unit-square coordinates to (pi, R); returns arrays plus a validity mask."""
    if region is None:
        pi = u
        lo, hi = R_bounds(pi)
        if nonnegative_rho:
            lo = np.ones_like(pi)  # v is then rho itself
        R = lo + v * (hi - lo)
        valid = np.ones(np.shape(u), dtype=bool)
    else:
        pi_lo, pi_hi, R_lo, R_hi = region
        pi = pi_lo + u * (pi_hi - pi_lo)
        R = R_lo + v * (R_hi - R_lo)
        lo, hi = R_bounds(pi)
        valid = (pi > 0) & (pi < 1) & (R > lo) & (R < hi)
    return pi, R, valid


def sup_tail(
    space: ClassedSpace,
    class_coef: np.ndarray,
    cfg: ExactConfig,
    region: tuple[float, float, float, float] | None = None,
    extra: list[tuple[float, float]] | None = None,
) -> tuple[float, float, float]:
    """Supremum of a tail probability over the null domain (or a rectangle in it).

    Coarse grid, then ``cfg.refine_rounds`` rounds of 10x finer local grids
    around the incumbent.  ``extra`` points are always evaluated.
    Returns ``(value, pi, R)`` at the best point found.
    """
    n_u, n_v = cfg.grid
    if region is None:
        us = (np.arange(n_u) + 0.5) / n_u
        if cfg.nonnegative_rho:
            # rho = 0 (independence) is admissible, so the grid includes it
            vs = np.arange(n_v) / n_v
            lim_v = (0.0, 1.0 - 1e-9)
        else:
            vs = (np.arange(n_v) + 0.5) / n_v
            lim_v = (1e-9, 1.0 - 1e-9)
        lim_u = (1e-9, 1.0 - 1e-9)
    else:
        us = np.linspace(0.0, 1.0, n_u)
        vs = np.linspace(0.0, 1.0, n_v)
        lim_u = lim_v = (0.0, 1.0)
    hu, hv = 1.0 / n_u, 1.0 / n_v

    best = (-1.0, math.nan, math.nan, math.nan, math.nan)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    for round_ in range(cfg.refine_rounds + 1):
        pi, R, valid = _to_params(uu, vv, region, cfg.nonnegative_rho)
        vals = np.full(uu.shape, -1.0)
        if valid.any():
            vals[valid] = grid_tails(space, class_coef, pi[valid], R[valid])
        k = int(np.argmax(vals))
        if vals.flat[k] > best[0]:
            best = (float(vals.flat[k]), float(pi.flat[k]), float(R.flat[k]), float(uu.flat[k]), float(vv.flat[k]))
        if round_ == cfg.refine_rounds or best[0] < 0:
            break
        u0, v0 = best[3], best[4]
        us = np.clip(u0 + hu * np.linspace(-1.0, 1.0, 21), *lim_u)
        vs = np.clip(v0 + hv * np.linspace(-1.0, 1.0, 21), *lim_v)
        uu, vv = np.meshgrid(us, vs, indexing="ij")
        hu, hv = hu / 10.0, hv / 10.0

    for pi_x, R_x in extra or []:
        val = float(grid_tails(space, class_coef, np.array([pi_x]), np.array([R_x]))[0])
        if val > best[0]:
            best = (val, pi_x, R_x, math.nan, math.nan)
    return best[0], best[1], best[2]


# -- observed-table p-values ----------------------------------------------------------


def _observed(space: ClassedSpace, observed: Dataset) -> tuple[int, int]:
    j = space.table_index(observed)
    return j, int(space.table_class[j])


def _mle_point(space: ClassedSpace, c: int) -> list[tuple[float, float]]:
    return [(float(space.pi_hat[c]), float(space.R_hat[c]))]


def p_e(observed: Dataset, space: ClassedSpace) -> float:
    """Tail probability at the constrained MLE of the observed table."""
    j, c = _observed(space, observed)
    if space.degenerate[c]:
        return 1.0
    w = space.class_log_weights(space.pi_hat[c], space.R_hat[c])
    return min(1.0, float(np.exp(w) @ space.table_tail_coef(j)))


def p_m(observed: Dataset, space: ClassedSpace, cfg: ExactConfig = ExactConfig()) -> float:
    """Supremum of the tail probability over the null domain (MLE point always included)."""
    j, c = _observed(space, observed)
    if space.degenerate[c]:
        return 1.0
    value, _, _ = sup_tail(space, space.table_tail_coef(j), cfg, extra=_mle_point(space, c))
    return min(1.0, value)


def check_capacity(size: int, cfg: ExactConfig, method: str) -> None:
    if size > cfg.table_cap:
        raise CapacityError(f"{method} refuses a sample space of {size} tables (table_cap={cfg.table_cap})")


def e_pvalues(space: ClassedSpace) -> np.ndarray:
    """E p-value of every table in the space, each under its own constrained MLE."""
    out = np.minimum(space.own_fit_tails(), 1.0)
    out[space.degenerate[space.table_class]] = 1.0
    return out


def em_rank(pe_all: np.ndarray, tie_tol: float) -> np.ndarray:
    # smaller E p-value = more extreme
    return extremeness_rank(-pe_all, tie_tol)


def p_em(
    observed: Dataset,
    space: ClassedSpace,
    cfg: ExactConfig = ExactConfig(),
    pe_all: np.ndarray | None = None,
) -> float:
    """Supremum of the probability of tables whose E p-value is at most the observed one."""
    check_capacity(space.size, cfg, "EM")
    j, c = _observed(space, observed)
    pe_all = e_pvalues(space) if pe_all is None else pe_all
    coef = space.table_tail_coef(j, em_rank(pe_all, cfg.tie_tol))
    value, _, _ = sup_tail(space, coef, cfg, extra=_mle_point(space, c))
    return min(1.0, value)


# -- confidence intervals for the nuisance parameters -----------------------------------


def t_star(stat_arr: np.ndarray, pi: float, R: float) -> float:
    """Two-parameter null score statistic from pooled totals ``(S0, S1, S2, N0, N1)``."""
    s = SufficientStat(*(int(v) for v in stat_arr))
    # probes near the domain edge may divide by zero; those land outside the region
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        d_pi, d_R = score_null(s, pi, R)
        I11, I12, I22 = fisher_terms(s.M, s.N, pi, R)
        if s.M == 0:
            return float(d_pi * d_pi / I11) if I11 > 0 else math.inf
        det = I11 * I22 - I12 * I12
        if not det > 0 or not math.isfinite(det):
            return math.inf
        return float((d_pi * d_pi * I22 - 2.0 * d_pi * d_R * I12 + d_R * d_R * I11) / det)


def _directed_search(inside, start: float, step: float, direction: int, cfg: ExactConfig) -> float:
    """Walk from ``start`` while ``inside`` holds; shrink the step on each overshoot.

    Returns the last accepted point.
    """
    x = start
    while step >= cfg.ci_min_step:
        cand = x + direction * step
        if inside(cand):
            x = cand
        else:
            step *= cfg.ci_shrink
    return x


def ci_bounds(observed: Dataset, cfg: ExactConfig = ExactConfig(), fit: NullFit | None = None) -> CIBounds:
    """Score-inversion confidence limits for pi and R at level ``1 - beta``."""
    return ci_bounds_stat(observed.suffstat().as_array(), cfg, fit)


def ci_bounds_stat(stat_arr: np.ndarray, cfg: ExactConfig, fit: NullFit | None = None) -> CIBounds:
    stat = SufficientStat(*(int(v) for v in stat_arr))
    fit = fit_null(stat) if fit is None else fit
    if fit.degenerate:
        raise ValueError("confidence limits need a non-degenerate null fit")
    cutoff = float(stats.chi2.ppf(1.0 - cfg.beta, 1))
    arr = np.asarray(stat_arr, dtype=float)

    def pi_inside(p: float) -> bool:
        if not (0.0 < p < 1.0):
            return False
        return t_star(arr, p, R_given_pi(stat, p)) <= cutoff

    pi0 = fit.pi_hat
    pi_hi = _directed_search(pi_inside, pi0, min(0.01, (1.0 - pi0) / 10.0), +1, cfg)
    pi_lo = _directed_search(pi_inside, pi0, min(0.01, pi0 / 10.0), -1, cfg)

    if not fit.r_identified:
        # no bilateral subjects: the data say nothing about R
        lo, hi = R_bounds(pi0)
        return CIBounds(pi_lo, pi_hi, lo, hi, R_edge=True)

    def R_inside(r: float) -> bool:
        if r <= 0.0:
            return False
        return t_star(arr, pi_given_R(stat, r), r) <= cutoff

    R0 = fit.R_hat
    R_hi = _directed_search(R_inside, R0, 0.1, +1, cfg)
    R_lo = _directed_search(R_inside, R0, 0.1, -1, cfg)
    return CIBounds(pi_lo, pi_hi, R_lo, R_hi)


def ci_region(bounds: CIBounds, cfg: ExactConfig) -> tuple[float, float, float, float]:
    """Rectangle searched by the CI method: the bounds, cut to R >= 1 when that leaves something."""
    R_lo = bounds.R_lo
    if cfg.nonnegative_rho and bounds.R_hi >= 1.0:
        R_lo = max(R_lo, 1.0)
    return (bounds.pi_lo, bounds.pi_hi, R_lo, bounds.R_hi)


def p_ci(
    observed: Dataset,
    space: ClassedSpace,
    cfg: ExactConfig = ExactConfig(),
    bounds: CIBounds | None = None,
) -> float:
    """Supremum over the confidence rectangle plus the ``3 * beta`` penalty."""
    check_capacity(space.size, cfg, "CI")
    j, c = _observed(space, observed)
    if space.degenerate[c]:
        return 1.0
    bounds = ci_bounds(observed, cfg) if bounds is None else bounds
    coef = space.table_tail_coef(j)
    value, _, _ = sup_tail(space, coef, cfg, region=ci_region(bounds, cfg), extra=_mle_point(space, c))
    return min(1.0, value + 3.0 * cfg.beta)


def conditional_weights(members: np.ndarray) -> np.ndarray:
    """Conditional probability of each member of a column-total class (sums to 1)."""
    lc = log_coefficients(members)
    w = np.exp(lc - lc.max())
    return w / w.sum()


def p_c(observed: Dataset, tie_tol: float = 1e-12) -> float:
    """Conditional p-value given group margins and pooled column totals."""
    fit = fit_null(observed.suffstat())
    if fit.degenerate:
        return 1.0
    # members come out in increasing table index, which is the tie-break order
    members = conditional_counts(observed)
    t = t_sc_arrays(members, np.full(len(members), fit.pi_hat), np.full(len(members), fit.R_hat))
    j = int(np.flatnonzero((members == observed.counts()).all(axis=(1, 2)))[0])
    rank = extremeness_rank(t, tie_tol)
    w = conditional_weights(members)
    return min(1.0, float(w[rank >= rank[j]].sum()))


# -- all methods for one observed table -------------------------------------------------


def run_methods(
    observed: Dataset,
    methods=METHODS,
    cfg: ExactConfig = ExactConfig(),
    space: ClassedSpace | None = None,
) -> list[TestResult]:
    """Compute the requested p-values.

    A method refused for capacity gets ``p_value = nan`` and a ``refused``
    diagnostic; the other methods still run.
    """
    fit = fit_null(observed.suffstat())
    t_obs = 0.0 if fit.degenerate else float(t_sc_arrays(observed.counts(), fit.pi_hat, fit.R_hat))
    size = space_size(Design.of(observed))
    pe_all = None
    out = []
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        start = time.perf_counter()
        diag: dict = {}
        try:
            if method in SPACE_METHODS:
                check_capacity(size, cfg, method)
                if space is None:
                    space = build_classed_space(Design.of(observed), cfg.tie_tol)
            if method == "A":
                p = asymptotic_p(observed)
            elif method == "C":
                p = p_c(observed, cfg.tie_tol)
            elif method == "E":
                p = p_e(observed, space)
            elif method == "M":
                p = p_m(observed, space, cfg)
            elif method == "EM":
                pe_all = e_pvalues(space) if pe_all is None else pe_all
                p = p_em(observed, space, cfg, pe_all)
            else:
                bounds = None if fit.degenerate else ci_bounds(observed, cfg, fit)
                p = p_ci(observed, space, cfg, bounds)
                if bounds is not None:
                    diag["ci_bounds"] = {k: getattr(bounds, k) for k in ("pi_lo", "pi_hi", "R_lo", "R_hi")}
        except CapacityError as err:
            p = math.nan
            diag["refused"] = str(err)
        diag["seconds"] = time.perf_counter() - start
        out.append(TestResult(method, p, t_obs, diag))
    return out
