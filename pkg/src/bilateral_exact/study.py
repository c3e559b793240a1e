"""Exact size and power of the six tests over whole sample spaces.

Every test rejects a table when its p-value is at most ``alpha``, and the
p-value of a table depends only on the design.  So the p-values of all
tables are computed once per design and method (``PValueCache``); a size or
power at any parameter point is then a probability-weighted indicator sum.

For the supremum methods the per-table search runs over a fixed
``(pi, rho)`` grid together with the table's own null fit and any points the
caller is about to evaluate.  Including the evaluation points keeps the
M-method size at or below ``alpha`` at those points exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .enumerate import ClassedSpace, Design, build_classed_space, group_options, space_size
from .exact import METHODS, ExactConfig, check_capacity, ci_bounds_stat, ci_region, e_pvalues, em_rank
from .model import DomainError, R_bounds, check_domain, log_cell_probs, log_coefficients, rho_to_R

LIBERAL, ROBUST, CONSERVATIVE, INVALID = "liberal", "robust", "conservative", "invalid-domain"


def classify(size: float, alpha: float) -> str:
    """Liberal above 1.2 alpha, conservative below 0.8 alpha, robust in between."""
    ratio = size / alpha
    if ratio > 1.2:
        return LIBERAL
    if ratio < 0.8:
        return CONSERVATIVE
    return ROBUST


@dataclass(frozen=True)
class StudyConfig:
    exact: ExactConfig = ExactConfig()
    # (pi points, rho points) searched per table by the M, EM and CI methods
    sup_grid: tuple[int, int] = (40, 40)
    threads: int = 1


def sup_grid_points(shape: tuple[int, int], nonnegative_rho: bool = True) -> list[tuple[float, float]]:
    """Fixed (pi, R) grid used for the per-table supremum searches."""
    n_pi, n_s = shape
    pts = []
    for pi in (np.arange(n_pi) + 0.5) / n_pi:
        lo, hi = R_bounds(pi)
        lo = 1.0 if nonnegative_rho else lo
        for s in np.arange(n_s) / n_s if nonnegative_rho else (np.arange(n_s) + 0.5) / n_s:
            pts.append((float(pi), float(lo + s * (hi - lo))))
    return pts


def _suffix_tails(space: ClassedSpace, order: np.ndarray, pi: float, R: float) -> np.ndarray:
    """Tail probability of every table at one point; ``order`` lists tables by increasing rank."""
    probs = space.table_probabilities(pi, R)[order]
    out = np.empty(space.size)
    out[order] = np.cumsum(probs[::-1])[::-1]
    return out


def _map_points(fn, points, threads: int):
    # numpy releases the GIL in the heavy kernels, so threads do help here
    if threads <= 1:
        yield from map(fn, points)
        return
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(threads) as pool:
        yield from pool.map(fn, points)


def _sup_pvalues(space, rank, base, points, threads) -> np.ndarray:
    order = np.argsort(rank)
    out = base.copy()
    for tails in _map_points(lambda p: _suffix_tails(space, order, *p), points, threads):
        np.maximum(out, tails, out=out)
    return out


def _ci_pvalues(space, cfg: StudyConfig, pe, points) -> np.ndarray:
    ecfg = cfg.exact
    n = space.n_classes
    rect = np.full((n, 4), np.nan)
    for c in range(n):
        if not space.degenerate[c]:
            rect[c] = ci_region(ci_bounds_stat(space.stats[c], ecfg), ecfg)
    order = np.argsort(space.rank)
    out = pe.copy()  # the null fit always lies inside its own rectangle
    cls = space.table_class

    def one(point):
        pi, R = point
        inside = (rect[:, 0] <= pi) & (pi <= rect[:, 1]) & (rect[:, 2] <= R) & (R <= rect[:, 3])
        if not inside.any():
            return None
        return np.where(inside[cls], _suffix_tails(space, order, pi, R), 0.0)

    for tails in _map_points(one, points, cfg.threads):
        if tails is not None:
            np.maximum(out, tails, out=out)
    return np.minimum(out + 3.0 * ecfg.beta, 1.0)


def _c_pvalues(space: ClassedSpace) -> np.ndarray:
    # within each class: conditional weights ~ coefficients, tails by statistic rank
    order = np.lexsort((space.rank, space.table_class))
    cls = space.table_class[order]
    coef = space.coef[order]
    totals = np.bincount(space.table_class, weights=space.coef, minlength=space.n_classes)
    rev_cum = np.cumsum(coef[::-1])[::-1]
    # subtract the mass belonging to later classes
    class_end = np.searchsorted(cls, np.arange(space.n_classes), side="right")
    after = np.append(rev_cum, 0.0)[class_end]
    out = np.empty(space.size)
    out[order] = (rev_cum - after[cls]) / totals[cls]
    out[space.degenerate[space.table_class]] = 1.0
    return np.minimum(out, 1.0)


def asymptotic_pvalues(space: ClassedSpace) -> np.ndarray:
    df = sum(1 for m, n in space.design.margins if m + n > 0) - 1
    if df <= 0:
        return np.ones(space.size)
    return stats.chi2.sf(space.t, df)


@dataclass
class PValueCache:
    """Per-design, per-method p-values of every table (plus the built spaces)."""

    cfg: StudyConfig = field(default_factory=StudyConfig)
    spaces: dict = field(default_factory=dict)
    pvalues: dict = field(default_factory=dict)

    def space(self, design: Design) -> ClassedSpace:
        key = design.key()
        if key not in self.spaces:
            self.spaces[key] = build_classed_space(design, self.cfg.exact.tie_tol)
        return self.spaces[key]

    def get(self, design: Design, method: str, points: Sequence[tuple[float, float]] = ()) -> np.ndarray:
        """p-values of every table; ``points`` are added to supremum grids."""
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        if method in ("EM", "CI", "E"):
            check_capacity(space_size(design), self.cfg.exact, method)
        extra = tuple(sorted(set(points))) if method in ("M", "EM", "CI") else ()
        key = (design.key(), method, extra)
        if key not in self.pvalues:
            self.pvalues[key] = self._compute(design, method, extra)
        return self.pvalues[key]

    def _compute(self, design: Design, method: str, extra) -> np.ndarray:
        space = self.space(design)
        if method == "A":
            return asymptotic_pvalues(space)
        if method == "C":
            return _c_pvalues(space)
        if method == "E":
            return e_pvalues(space)
        if space.size <= self.cfg.exact.table_cap:
            pe = self.get(design, "E")
        else:
            # too large for the per-table plug-in pass: M searches the grid only
            pe = np.zeros(space.size)
        points = sup_grid_points(self.cfg.sup_grid, self.cfg.exact.nonnegative_rho) + list(extra)
        degenerate = space.degenerate[space.table_class]
        if method == "M":
            out = _sup_pvalues(space, space.rank, pe, points, self.cfg.threads)
        elif method == "EM":
            out = _sup_pvalues(space, em_rank(pe, self.cfg.exact.tie_tol), pe, points, self.cfg.threads)
        else:
            out = _ci_pvalues(space, self.cfg, pe, points)
        out = np.minimum(out, 1.0)
        out[degenerate] = 1.0
        return out


def table_pmf(design: Design, pis: Sequence[float], R: float) -> np.ndarray:
    """Probability of every table (in index order) with group-specific ``pis``.

    Groups are independent, so the table probability is an outer product of
    per-group outcome probabilities laid out in the mixed-radix index order.
    """
    if len(pis) != design.g:
        raise ValueError("need one pi per group")
    for pi in pis:
        check_domain(pi, R)
    out = np.ones(1)
    for (m, n), pi in zip(design.margins, pis):
        opts = group_options(m, n)
        logp = log_cell_probs(pi, R)
        with np.errstate(invalid="ignore"):
            lp = log_coefficients(opts[:, None, :]) + np.where(opts > 0, opts * logp, 0.0).sum(axis=1)
        out = np.multiply.outer(out, np.exp(lp)).ravel()
    return out


def _rejection_probability(pvalues: np.ndarray, pmf: np.ndarray, alpha: float) -> float:
    return float(min(1.0, pmf[pvalues <= alpha].sum()))


def exact_size(
    design: Design,
    method: str,
    alpha: float,
    pi: float,
    rho: float,
    cache: PValueCache | None = None,
) -> float:
    """Exact probability of rejecting at the null point ``(pi, rho)``."""
    R = rho_to_R(pi, rho)
    cache = PValueCache() if cache is None else cache
    pv = cache.get(design, method, [(pi, R)])
    return _rejection_probability(pv, table_pmf(design, [pi] * design.g, R), alpha)


def exact_power(
    design: Design,
    method: str,
    alpha: float,
    pis: Sequence[float],
    R: float,
    cache: PValueCache | None = None,
) -> float:
    """Exact probability of rejecting when group ``i`` has response rate ``pis[i]``."""
    cache = PValueCache() if cache is None else cache
    pmf = table_pmf(design, pis, R)
    return _rejection_probability(cache.get(design, method), pmf, alpha)


# -- grids and curves -----------------------------------------------------------------


def _r_or_none(pi: float, rho: float) -> float | None:
    try:
        return rho_to_R(pi, rho)
    except DomainError:
        return None


@dataclass
class SizeGrid:
    design: Design
    method: str
    alpha: float
    pi_grid: np.ndarray
    rho_grid: np.ndarray
    size: np.ndarray  # nan where the cell is outside the domain
    classes: np.ndarray

    def fractions(self) -> dict[str, float]:
        valid = self.classes != INVALID
        total = int(valid.sum())
        return {k: (float((self.classes == k).sum()) / total if total else math.nan) for k in (LIBERAL, ROBUST, CONSERVATIVE)}

    def rows(self) -> list[dict]:
        return [
            {
                "method": self.method,
                "pi": float(pi),
                "rho_or_pig": float(rho),
                "value": float(self.size[i, j]),
                "class": str(self.classes[i, j]),
            }
            for i, pi in enumerate(self.pi_grid)
            for j, rho in enumerate(self.rho_grid)
        ]


@dataclass
class PowerCurve:
    design: Design
    method: str
    alpha: float
    fixed: tuple[tuple[float, ...], float]  # (pi_1..pi_{g-1}, R)
    pi_g_grid: np.ndarray
    power: np.ndarray  # nan where the point is outside the domain

    def rows(self) -> list[dict]:
        pis, R = self.fixed
        return [
            {
                "method": self.method,
                "pi": float(pis[0]) if pis else math.nan,
                "rho_or_pig": float(pg),
                "value": float(v),
                "class": "valid" if math.isfinite(v) else INVALID,
            }
            for pg, v in zip(self.pi_g_grid, self.power)
        ]


def size_grid(
    design: Design,
    method: str,
    pi_grid: Iterable[float],
    rho_grid: Iterable[float],
    alpha: float = 0.05,
    cache: PValueCache | None = None,
) -> SizeGrid:
    pi_grid = np.asarray(list(pi_grid), dtype=float)
    rho_grid = np.asarray(list(rho_grid), dtype=float)
    cache = PValueCache() if cache is None else cache
    Rs = [[_r_or_none(pi, rho) for rho in rho_grid] for pi in pi_grid]
    points = [(pi, R) for pi, row in zip(pi_grid, Rs) for R in row if R is not None]
    pv = cache.get(design, method, points)
    size = np.full((pi_grid.size, rho_grid.size), np.nan)
    classes = np.full(size.shape, INVALID, dtype=object)
    for i, pi in enumerate(pi_grid):
        for j, R in enumerate(Rs[i]):
            if R is None:
                continue
            size[i, j] = _rejection_probability(pv, table_pmf(design, [pi] * design.g, R), alpha)
            classes[i, j] = classify(size[i, j], alpha)
    return SizeGrid(design, method, alpha, pi_grid, rho_grid, size, classes)


def power_curve(
    design: Design,
    method: str,
    fixed_pis: Sequence[float],
    R: float,
    pi_g_grid: Iterable[float],
    alpha: float = 0.05,
    cache: PValueCache | None = None,
) -> PowerCurve:
    if len(fixed_pis) != design.g - 1:
        raise ValueError("fix the response rates of the first g - 1 groups")
    pi_g_grid = np.asarray(list(pi_g_grid), dtype=float)
    cache = PValueCache() if cache is None else cache
    pv = cache.get(design, method)
    power = np.full(pi_g_grid.size, np.nan)
    for k, pg in enumerate(pi_g_grid):
        try:
            pmf = table_pmf(design, list(fixed_pis) + [pg], R)
        except DomainError:
            continue
        power[k] = _rejection_probability(pv, pmf, alpha)
    return PowerCurve(design, method, alpha, (tuple(map(float, fixed_pis)), float(R)), pi_g_grid, power)


# -- output ---------------------------------------------------------------------------

FIELDS = ("method", "pi", "rho_or_pig", "value", "class")


def to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def to_json(rows: Iterable[dict], **meta) -> str:
    def clean(v):
        return None if isinstance(v, float) and not math.isfinite(v) else v

    payload = dict(meta, rows=[{k: clean(v) for k, v in r.items()} for r in rows])
    return json.dumps(payload, indent=2)
