"""Constant-R model for combined bilateral and unilateral binary data.

Each subject in group ``i`` contributes either a bilateral outcome (0, 1 or 2
affected sites) or a unilateral outcome (0 or 1).  With site-level response
probability ``pi`` and dependence parameter ``R``::

    unilateral:  (1 - pi, pi)
    bilateral:   (1 - 2 pi + R pi^2,  2 (pi - R pi^2),  R pi^2)

``R = 1`` is independence between the two sites of a subject.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

# Slack applied when validating externally supplied parameters.
DOMAIN_SLACK = 1e-9


class DomainError(ValueError):
    """Parameters outside the constant-R domain."""


class InputError(ValueError):
    """Malformed count data."""


@dataclass(frozen=True)
class GroupCounts:
    m0: int
    m1: int
    m2: int
    n0: int
    n1: int

    def __post_init__(self) -> None:
        for name in ("m0", "m1", "m2", "n0", "n1"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise InputError(f"{name} must be a nonnegative integer, got {value!r}")

    @property
    def m(self) -> int:
        return self.m0 + self.m1 + self.m2

    @property
    def n(self) -> int:
        return self.n0 + self.n1

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.m0, self.m1, self.m2, self.n0, self.n1)


@dataclass(frozen=True)
class SufficientStat:
    """Pooled column totals; all null-hypothesis likelihood quantities depend only on these."""

    S0: int
    S1: int
    S2: int
    N0: int
    N1: int

    @property
    def M(self) -> int:
        return self.S0 + self.S1 + self.S2

    @property
    def N(self) -> int:
        return self.N0 + self.N1

    def as_array(self) -> np.ndarray:
        return np.array([self.S0, self.S1, self.S2, self.N0, self.N1], dtype=float)


@dataclass(frozen=True)
class Dataset:
    groups: tuple[GroupCounts, ...]

    def __init__(self, groups: Iterable[GroupCounts | Sequence[int]]):
        parsed = tuple(g if isinstance(g, GroupCounts) else GroupCounts(*g) for g in groups)
        if len(parsed) < 2:
            raise InputError("at least 2 groups are required")
        if not any(g.m + g.n > 0 for g in parsed):
            raise InputError("all groups are empty")
        object.__setattr__(self, "groups", parsed)

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[int]]) -> "Dataset":
        return cls(GroupCounts(*map(int, r)) for r in rows)

    @property
    def g(self) -> int:
        return len(self.groups)

    @property
    def margins(self) -> tuple[tuple[int, int], ...]:
        return tuple((gr.m, gr.n) for gr in self.groups)

    def counts(self) -> np.ndarray:
        """Counts as a ``(g, 5)`` integer array with columns m0, m1, m2, n0, n1."""
        return np.array([gr.as_tuple() for gr in self.groups], dtype=np.int64)

    def suffstat(self) -> SufficientStat:
        return SufficientStat(*(int(v) for v in self.counts().sum(axis=0)))

    def permuted(self, order: Sequence[int]) -> "Dataset":
        return Dataset(self.groups[i] for i in order)


@dataclass(frozen=True)
class NullParams:
    pi: float
    R: float

    def __post_init__(self) -> None:
        check_domain(self.pi, self.R, slack=DOMAIN_SLACK)


@dataclass(frozen=True)
class AltParams:
    pis: tuple[float, ...]
    R: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "pis", tuple(float(p) for p in self.pis))
        for p in self.pis:
            check_domain(p, self.R, slack=DOMAIN_SLACK)

    @classmethod
    def null(cls, pi: float, R: float, g: int) -> "AltParams":
        return cls((pi,) * g, R)


@dataclass(frozen=True)
class CellProbs:
    pu0: float
    pu1: float
    pb0: float
    pb1: float
    pb2: float


def R_bounds(pi):
    """Open interval ``(lo, hi)`` of admissible R at a given pi (vectorised)."""
    pi = np.asarray(pi, dtype=float)
    lo = np.maximum(0.0, (2.0 - 1.0 / pi) / pi)
    hi = 1.0 / pi
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def pi_upper(R: float) -> float:
    """Supremum of admissible pi at fixed R; the admissible set is ``(0, pi_upper(R))``."""
    if R <= 0:
        raise DomainError(f"R must be positive, got {R}")
    if R >= 1.0:
        return 1.0 / R
    return 1.0 / (1.0 + math.sqrt(1.0 - R))


def in_domain(pi, R, slack: float = 0.0):
    """True where all five cell probabilities exceed ``slack`` (vectorised)."""
    pi = np.asarray(pi, dtype=float)
    R = np.asarray(R, dtype=float)
    pb0 = 1.0 - 2.0 * pi + R * pi * pi
    pb1 = 2.0 * pi * (1.0 - R * pi)
    pb2 = R * pi * pi
    ok = (pi > slack) & (pi < 1.0 - slack) & (pb0 > slack) & (pb1 > slack) & (pb2 > slack)
    return bool(ok) if ok.ndim == 0 else ok


def check_domain(pi: float, R: float, slack: float = 0.0) -> None:
    if not (0.0 < pi < 1.0):
        raise DomainError(f"pi={pi} outside (0, 1)")
    pb0 = 1.0 - 2.0 * pi + R * pi * pi
    pb1 = 2.0 * pi * (1.0 - R * pi)
    pb2 = R * pi * pi
    for label, value in (("pb0", pb0), ("pb1", pb1), ("pb2", pb2)):
        if not value > slack:
            raise DomainError(f"(pi={pi}, R={R}) gives nonpositive {label}={value:.3g}")


def cell_probs(pi: float, R: float) -> CellProbs:
    check_domain(pi, R)
    return CellProbs(
        pu0=1.0 - pi,
        pu1=pi,
        pb0=1.0 - 2.0 * pi + R * pi * pi,
        pb1=2.0 * (pi - R * pi * pi),
        pb2=R * pi * pi,
    )


def log_cell_probs(pi, R) -> np.ndarray:
    """Log cell probabilities stacked on the last axis: (log pb0, log pb1, log pb2, log pu0, log pu1).

    Cells outside the domain come out as ``-inf`` or ``nan``; callers mask.
    """
    pi = np.asarray(pi, dtype=float)
    R = np.asarray(R, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.stack(
            [
                np.log(1.0 - 2.0 * pi + R * pi * pi),
                np.log(2.0 * pi * (1.0 - R * pi)),
                np.log(R * pi * pi),
                np.log1p(-pi),
                np.log(pi),
            ],
            axis=-1,
        )


def rho_to_R(pi: float, rho: float) -> float:
    """Intraclass correlation to R; raises DomainError when the result is inadmissible."""
    if not (0.0 < pi < 1.0) or not (0.0 <= rho < 1.0):
        raise DomainError(f"need 0 < pi < 1 and 0 <= rho < 1, got pi={pi}, rho={rho}")
    R = 1.0 + rho * (1.0 - pi) / pi
    check_domain(pi, R)
    return R


def R_to_rho(pi: float, R: float) -> float:
    return (pi * R - pi) / (1.0 - pi)


@lru_cache(maxsize=8)
def _log_factorial_table(n: int) -> np.ndarray:
    table = gammaln(np.arange(n + 1, dtype=float) + 1.0)
    table.setflags(write=False)
    return table


def log_factorials(n: int) -> np.ndarray:
    """``log(k!)`` for ``k = 0..n`` (read-only, cached by power-of-two size)."""
    size = 64
    while size < n:
        size *= 2
    return _log_factorial_table(size)


def log_coefficients(counts: np.ndarray) -> np.ndarray:
    """Log multinomial x binomial coefficients; ``counts[..., g, 5]`` -> ``[...]``."""
    counts = np.asarray(counts)
    lf = log_factorials(int(counts.sum(axis=-1).max(initial=0)) + 1)
    m = counts[..., 0] + counts[..., 1] + counts[..., 2]
    n = counts[..., 3] + counts[..., 4]
    per_group = lf[m] + lf[n] - lf[counts].sum(axis=-1)
    return per_group.sum(axis=-1)


def _xlogy(counts: np.ndarray, logp: np.ndarray) -> np.ndarray:
    # 0 * log 0 := 0
    with np.errstate(invalid="ignore"):
        out = counts * logp
    return np.where(counts == 0, 0.0, out)


def log_pmf(table: Dataset, params: AltParams) -> float:
    """Exact log-probability of a full table under the alternative-hypothesis model."""
    if len(params.pis) != table.g:
        raise ValueError("parameter vector length does not match number of groups")
    counts = table.counts()
    logp = log_cell_probs(np.array(params.pis), params.R)
    return float(log_coefficients(counts) + _xlogy(counts, logp).sum())


def log_lik_null(stat: SufficientStat, params: NullParams) -> float:
    """Kernel of the pooled null log-likelihood (multinomial coefficients dropped)."""
    logp = log_cell_probs(params.pi, params.R)
    return float(_xlogy(stat.as_array(), logp).sum())


def log_lik_null_kernel(stats: np.ndarray, pi, R) -> np.ndarray:
    """Vectorised null log-likelihood kernel: ``stats[k, 5]`` against parameter arrays.

    Returns an array of shape ``pi.shape + (k,)``.
    """
    logp = log_cell_probs(pi, R)
    stats = np.asarray(stats, dtype=float)
    # impossible cells become a huge negative weight so that 0 * log 0 stays 0
    safe = np.where(np.isfinite(logp), logp, -1e300)
    return safe @ stats.T
