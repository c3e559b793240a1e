"""Slow reference implementations used as test oracles.

Nothing here uses the class decomposition, rank arrays or vectorised
kernels of the package: tables come from itertools, probabilities from
scipy's textbook multinomial/binomial pmfs, and tails from direct loops.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import optimize
from scipy.stats import binom, multinomial

from bilateral_exact.mle import fit_null
from bilateral_exact.model import Dataset, R_bounds, SufficientStat
from bilateral_exact.score import t_sc


def group_outcomes(m: int, n: int) -> list[tuple[int, ...]]:
    out = []
    for m0, m1, m2 in itertools.product(range(m + 1), repeat=3):
        if m0 + m1 + m2 != m:
            continue
        for n0 in range(n + 1):
            out.append((m0, m1, m2, n0, n - n0))
    return out


def all_tables(margins) -> list[np.ndarray]:
    """Every table for the margins, sorted lexicographically by flattened counts."""
    per_group = [group_outcomes(m, n) for m, n in margins]
    tables = sorted(itertools.product(*per_group), key=lambda t: sum(t, ()))
    return [np.array(t, dtype=np.int64) for t in tables]


def textbook_pmf(counts: np.ndarray, pis, R: float) -> float:
    p = 1.0
    for row, pi in zip(counts, pis):
        pb = [1 - 2 * pi + R * pi * pi, 2 * (pi - R * pi * pi), R * pi * pi]
        m, n = int(row[:3].sum()), int(row[3:].sum())
        if m:
            p *= multinomial.pmf(row[:3], m, pb)
        if n:
            p *= binom.pmf(row[4], n, pi)
    return float(p)


def statistics(tables) -> np.ndarray:
    return np.array([t_sc(Dataset(t)) for t in tables])


def tail_mask(keys: np.ndarray, j: int, tol: float = 1e-12) -> np.ndarray:
    """Tables at least as extreme as ``j`` (larger key = more extreme, later index wins ties)."""
    idx = np.arange(len(keys))
    return (keys > keys[j] + tol) | ((np.abs(keys - keys[j]) <= tol) & (idx >= j))


def naive_pe_all(tables, t) -> np.ndarray:
    out = np.empty(len(tables))
    for j, tab in enumerate(tables):
        fit = fit_null(Dataset(tab).suffstat())
        if fit.degenerate:
            out[j] = 1.0
            continue
        mask = tail_mask(t, j)
        g = len(tab)
        out[j] = sum(textbook_pmf(tables[k], [fit.pi_hat] * g, fit.R_hat) for k in np.flatnonzero(mask))
    return out


def naive_sup(tables, mask, points) -> float:
    best = -1.0
    for pi, R in points:
        g = len(tables[0])
        best = max(best, sum(textbook_pmf(tables[k], [pi] * g, R) for k in np.flatnonzero(mask)))
    return best


def naive_pc(tables, j: int, tol: float = 1e-12) -> float:
    """Conditional p-value from the ratio of coefficient products, by direct filtering."""
    obs = tables[j]
    tot = obs.sum(axis=0)
    members = [k for k, tab in enumerate(tables) if (tab.sum(axis=0) == tot).all()]
    fit = fit_null(SufficientStat(*map(int, tot)))
    if fit.degenerate:
        return 1.0

    def ratio(tab):
        num = 1.0
        for row in tab:
            m, n = int(row[:3].sum()), int(row[3:].sum())
            num *= math.factorial(m) / math.prod(math.factorial(int(v)) for v in row[:3])
            num *= math.comb(n, int(row[4]))
        M, N = int(tot[:3].sum()), int(tot[3:].sum())
        den = math.factorial(M) / math.prod(math.factorial(int(v)) for v in tot[:3]) * math.comb(N, int(tot[4]))
        return num / den

    t = np.array([t_sc(Dataset(tables[k])) for k in members])
    jj = members.index(j)
    mask = tail_mask(t, jj, tol)
    return sum(ratio(tables[members[k]]) for k in np.flatnonzero(mask))


def grid_refine_mle(stat: SufficientStat, n: int = 400) -> tuple[float, float]:
    """Brute-force null MLE: a grid over (pi, s) then Nelder-Mead, s mapping onto the R-interval."""
    S = stat.as_array()

    def loglik(pi, s):
        lo, hi = R_bounds(pi)
        R = lo + s * (hi - lo)
        p = np.array([1 - 2 * pi + R * pi * pi, 2 * pi * (1 - R * pi), R * pi * pi, 1 - pi, pi])
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(S > 0, S * np.log(p), 0.0)
        return float(terms.sum()), R

    uu, vv = np.meshgrid((np.arange(n) + 0.5) / n, (np.arange(n) + 0.5) / n, indexing="ij")
    lo, hi = R_bounds(uu)
    RR = lo + vv * (hi - lo)
    cells = np.stack([1 - 2 * uu + RR * uu * uu, 2 * uu * (1 - RR * uu), RR * uu * uu, 1 - uu, uu], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        surface = np.where(S > 0, S * np.log(cells), 0.0).sum(axis=-1)
    k = np.unravel_index(np.argmax(surface), surface.shape)
    best = (surface[k], uu[k], vv[k])
    res = optimize.minimize(
        lambda x: -loglik(x[0], x[1])[0],
        x0=[best[1], best[2]],
        method="Nelder-Mead",
        bounds=[(1e-9, 1 - 1e-9), (0.0, 1.0)],
        options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000},
    )
    pi, s = res.x
    return float(pi), loglik(pi, s)[1]


def golden_max(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Maximiser of a unimodal function on [lo, hi] by golden-section search."""
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def null_loglik(stat: SufficientStat, pi: float, R: float) -> float:
    cells = [1 - 2 * pi + R * pi * pi, 2 * pi * (1 - R * pi), R * pi * pi, 1 - pi, pi]
    total = 0.0
    for count, p in zip(stat.as_array(), cells):
        if count:
            if p <= 0:
                return -math.inf
            total += count * math.log(p)
    return total


def pmf_matrix(tables, pis, Rs) -> np.ndarray:
    """Null pmf of every table at every point: shape [points, tables], textbook formula."""
    pis = np.asarray(pis, dtype=float)[:, None]
    Rs = np.asarray(Rs, dtype=float)[:, None]
    cells = [1 - 2 * pis + Rs * pis**2, 2 * pis * (1 - Rs * pis), Rs * pis**2, 1 - pis, pis]
    out = np.ones((pis.shape[0], len(tables)))
    for k, tab in enumerate(tables):
        coef = 1.0
        for row in tab:
            m, n = int(row[:3].sum()), int(row[3:].sum())
            coef *= math.factorial(m) / math.prod(math.factorial(int(v)) for v in row[:3]) * math.comb(n, int(row[4]))
        col = np.full(pis.shape[0], coef)
        for c, total in enumerate(tab.sum(axis=0)):
            if total:
                col *= cells[c][:, 0] ** int(total)
        out[:, k] = col
    return out


def rho_grid_points(n_pi: int, n_rho: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centre pi by rho = 0, 1/n, ..., mapped to R = 1 + rho (1 - pi) / pi."""
    pi = (np.arange(n_pi) + 0.5) / n_pi
    rho = np.arange(n_rho) / n_rho
    pp, rr = np.meshgrid(pi, rho, indexing="ij")
    return pp.ravel(), (1 + rr * (1 - pp) / pp).ravel()


def naive_design(margins, grid=(50, 50)):
    """Tables, statistics, fits, grid pmfs, own-fit pmfs and E p-values of a design."""
    tables = all_tables(margins)
    t = statistics(tables)
    fits = [fit_null(Dataset(tab).suffstat()) for tab in tables]
    grid_pi, grid_R = rho_grid_points(*grid)
    P_grid = pmf_matrix(tables, grid_pi, grid_R)
    own = pmf_matrix(tables, [f.pi_hat for f in fits], [f.R_hat for f in fits])
    pe = np.array([1.0 if f.degenerate else own[j, tail_mask(t, j)].sum() for j, f in enumerate(fits)])
    return tables, t, fits, P_grid, own, pe


def naive_m_em(j, t, fits, P_grid, own, pe):
    """M and E+M p-values of table j: best tail over grid points and the table's own fit."""
    mask = tail_mask(t, j)
    naive_m = 1.0 if fits[j].degenerate else min(1.0, max(P_grid[:, mask].sum(axis=1).max(), own[j, mask].sum()))
    mask = tail_mask(-pe, j)
    naive_em = min(1.0, max(P_grid[:, mask].sum(axis=1).max(), own[j, mask].sum()))
    return naive_m, naive_em
