"""Sample-space enumeration with fixed group margins.

A table is one outcome per group, where a group outcome is a bilateral
composition ``(m0, m1, m2)`` of ``m_i`` together with a unilateral split
``(n0, n1)`` of ``n_i``.  Tables are indexed in mixed radix with the first
group most significant, so any index range can be decoded independently.

``ClassedSpace`` stores, for every table, its sufficient-statistic class, its
log multinomial coefficient and its score statistic.  All null probabilities
factor as ``coef(table) * exp(kernel(class, theta))``, so a tail sum at any
``(pi, R)`` reduces to a dot product over classes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .mle import NullFit, fit_null
from .model import Dataset, GroupCounts, SufficientStat, log_coefficients, log_lik_null_kernel
from .score import t_sc_arrays

TIE_TOL = 1e-12
CHUNK = 1 << 18


class SizeOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class Design:
    margins: tuple[tuple[int, int], ...]

    def __init__(self, margins: Sequence[Sequence[int]]):
        parsed = tuple((int(m), int(n)) for m, n in margins)
        if len(parsed) < 2:
            raise ValueError("a design needs at least 2 groups")
        if any(m < 0 or n < 0 for m, n in parsed):
            raise ValueError("group sizes must be nonnegative")
        object.__setattr__(self, "margins", parsed)

    @classmethod
    def balanced(cls, g: int, m: int, n: int) -> "Design":
        return cls([(m, n)] * g)

    @classmethod
    def of(cls, data: Dataset) -> "Design":
        return cls(data.margins)

    @property
    def g(self) -> int:
        return len(self.margins)

    @property
    def M(self) -> int:
        return sum(m for m, _ in self.margins)

    @property
    def N(self) -> int:
        return sum(n for _, n in self.margins)

    def key(self) -> str:
        text = ";".join(f"{m},{n}" for m, n in self.margins)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def group_options(m: int, n: int) -> np.ndarray:
    """All outcomes of one group, lexicographic in (m0, m1, m2, n0, n1)."""
    rows = [
        (m0, m1, m - m0 - m1, n0, n - n0)
        for m0 in range(m + 1)
        for m1 in range(m - m0 + 1)
        for n0 in range(n + 1)
    ]
    return np.array(rows, dtype=np.int64).reshape(-1, 5)


def space_size(design: Design) -> int:
    size = 1
    for m, n in design.margins:
        size *= (m + 1) * (m + 2) // 2 * (n + 1)
    if size >= 2**63:
        raise SizeOverflowError(f"sample space has {size} tables, beyond 2**63")
    return size


def decode_counts(design: Design, indices: np.ndarray) -> np.ndarray:
    """Counts ``[len(indices), g, 5]`` for the given table indices."""
    indices = np.asarray(indices, dtype=np.int64)
    options = [group_options(m, n) for m, n in design.margins]
    out = np.empty((indices.size, design.g, 5), dtype=np.int64)
    rest = indices.copy()
    for i in range(design.g - 1, -1, -1):
        k = len(options[i])
        out[:, i, :] = options[i][rest % k]
        rest //= k
    return out


def enumerate_tables(design: Design, start: int = 0, stop: int | None = None) -> Iterator[Dataset]:
    """Tables with index in ``[start, stop)``, in lexicographic order."""
    size = space_size(design)
    stop = size if stop is None else min(stop, size)
    for lo in range(start, stop, CHUNK):
        hi = min(lo + CHUNK, stop)
        for counts in decode_counts(design, np.arange(lo, hi)):
            yield Dataset(GroupCounts(*map(int, row)) for row in counts)


def _stat_keys(counts: np.ndarray, design: Design) -> np.ndarray:
    return _total_keys(counts.sum(axis=1), design)


def _total_keys(tot: np.ndarray, design: Design) -> np.ndarray:
    return (tot[:, 1] * (design.M + 1) + tot[:, 2]) * (design.N + 1) + tot[:, 4]


def _key_to_stat(keys: np.ndarray, design: Design) -> np.ndarray:
    n1 = keys % (design.N + 1)
    rest = keys // (design.N + 1)
    s2 = rest % (design.M + 1)
    s1 = rest // (design.M + 1)
    return np.stack([design.M - s1 - s2, s1, s2, design.N - n1, n1], axis=1)


@dataclass
class ClassedSpace:
    """Enumerated sample space grouped by sufficient-statistic class (immutable once built)."""

    design: Design
    stats: np.ndarray  # [classes, 5]
    pi_hat: np.ndarray  # [classes]
    R_hat: np.ndarray
    degenerate: np.ndarray
    table_class: np.ndarray  # [size]
    log_coef: np.ndarray  # [size]
    t: np.ndarray  # [size]
    tie_tol: float = TIE_TOL
    _rank: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.t.size

    @property
    def n_classes(self) -> int:
        return len(self.stats)

    @property
    def coef(self) -> np.ndarray:
        return np.exp(self.log_coef)

    def class_of(self, stat: SufficientStat) -> int:
        key = _total_keys(stat.as_array().astype(np.int64)[None, :], self.design)[0]
        hit = np.flatnonzero(_total_keys(self.stats, self.design) == key)
        if hit.size == 0:
            raise KeyError(f"{stat} is not a class of this design")
        return int(hit[0])

    def fit(self, c: int) -> NullFit:
        return fit_null(SufficientStat(*(int(v) for v in self.stats[c])))

    def table_index(self, data: Dataset) -> int:
        if data.margins != self.design.margins:
            raise ValueError("table margins do not match the design")
        index = 0
        for (m, n), gr in zip(self.design.margins, data.groups):
            opts = group_options(m, n)
            k = int(np.flatnonzero((opts == np.array(gr.as_tuple())).all(axis=1))[0])
            index = index * len(opts) + k
        return index

    # -- ordering by the statistic -------------------------------------------------

    @property
    def rank(self) -> np.ndarray:
        """Extremeness rank of every table under the score statistic (see ``extremeness_rank``)."""
        if self._rank is None:
            self._rank = extremeness_rank(self.t, self.tie_tol)
        return self._rank

    # -- queries --------------------------------------------------------------------

    def class_log_weights(self, pi, R) -> np.ndarray:
        """Null log-likelihood kernel of every class at parameter arrays; shape ``pi.shape + (classes,)``."""
        return log_lik_null_kernel(self.stats, pi, R)

    def class_coef_where(self, mask: np.ndarray) -> np.ndarray:
        """Per class, the summed coefficients of the tables selected by ``mask``."""
        return np.bincount(self.table_class, weights=np.where(mask, self.coef, 0.0), minlength=self.n_classes)

    def class_tail_coef(self, threshold: float) -> np.ndarray:
        """Per class, the summed coefficients of tables with ``t >= threshold - tie_tol``."""
        return self.class_coef_where(self.t >= threshold - self.tie_tol)

    def table_tail_coef(self, j: int, rank: np.ndarray | None = None) -> np.ndarray:
        """Per class coefficients of the tail of table ``j``: every table ranked at least as extreme."""
        rank = self.rank if rank is None else rank
        return self.class_coef_where(rank >= rank[j])

    def tail_probability(self, threshold: float, pi, R) -> np.ndarray:
        """``P(T >= threshold | pi, R)`` under the null for parameter arrays."""
        return tail_from_class_coef(self.class_tail_coef(threshold), self.class_log_weights(pi, R))

    def table_probabilities(self, pi: float, R: float) -> np.ndarray:
        """Null probability of every table at a single parameter point."""
        w = np.exp(self.class_log_weights(pi, R))
        return self.coef * w[self.table_class]

    def all_tails(self, pi: float, R: float, rank: np.ndarray | None = None) -> np.ndarray:
        """Every table's tail probability at ``(pi, R)`` for a given ranking (default: statistic)."""
        rank = self.rank if rank is None else rank
        by_rank = np.empty(self.size)
        by_rank[rank] = self.table_probabilities(pi, R)
        # suffix sums: tail of rank r is the mass of ranks r..size-1
        return np.cumsum(by_rank[::-1])[::-1][rank]

    def own_fit_tails(self, rank: np.ndarray | None = None, block: int = 1024) -> np.ndarray:
        """Tail probability of every table evaluated at its own class's null fit.

        Tables are visited from most to least extreme while a running per-class
        coefficient total is kept, so each tail is a dot product of that total
        with the kernel of the table's own fit.
        """
        rank = self.rank if rank is None else rank
        n = self.n_classes
        # weights[c, k]: kernel of class k under the fit of class c
        weights = np.exp(self.class_log_weights(self.pi_hat, self.R_hat))
        order = np.empty(self.size, dtype=np.int64)
        order[self.size - 1 - rank] = np.arange(self.size)
        coef = self.coef
        running = np.zeros(n)
        out = np.empty(self.size)
        for lo in range(0, self.size, block):
            idx = order[lo : lo + block]
            cls = self.table_class[idx]
            inc = np.zeros((idx.size, n))
            inc[np.arange(idx.size), cls] = coef[idx]
            cum = np.cumsum(inc, axis=0)
            cum += running
            out[idx] = np.einsum("ij,ij->i", cum, weights[cls])
            running = cum[-1]
        return out

    def save(self, path: str | Path) -> None:
        """Write the class records to an ``.npz`` cache."""
        np.savez_compressed(
            path,
            margins=np.array(self.design.margins),
            stats=self.stats,
            pi_hat=self.pi_hat,
            R_hat=self.R_hat,
            degenerate=self.degenerate,
            table_class=self.table_class,
            log_coef=self.log_coef,
            t=self.t,
            tie_tol=self.tie_tol,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ClassedSpace":
        with np.load(path) as z:
            return cls(
                design=Design(z["margins"].tolist()),
                stats=z["stats"],
                pi_hat=z["pi_hat"],
                R_hat=z["R_hat"],
                degenerate=z["degenerate"],
                table_class=z["table_class"],
                log_coef=z["log_coef"],
                t=z["t"],
                tie_tol=float(z["tie_tol"]),
            )


def extremeness_rank(keys: np.ndarray, tol: float = TIE_TOL) -> np.ndarray:
    """Rank entries by ``keys`` (larger = more extreme), ties broken by position.

    Keys closer than ``tol`` to a neighbour are chained into one tie cluster;
    within a cluster a later position (higher lexicographic table index)
    counts as more extreme.  The result is a permutation of ``0..len-1`` and
    the tail of entry ``j`` is ``{k : rank[k] >= rank[j]}``, so tails are nested.
    """
    keys = np.asarray(keys, dtype=float)
    srt = np.argsort(keys, kind="stable")
    gaps = np.diff(keys[srt]) > tol
    cluster = np.empty(keys.size, dtype=np.int64)
    cluster[srt] = np.concatenate([[0], np.cumsum(gaps)]) if keys.size else []
    order = np.lexsort((np.arange(keys.size), cluster))
    rank = np.empty(keys.size, dtype=np.int64)
    rank[order] = np.arange(keys.size)
    return rank


def tail_from_class_coef(class_coef: np.ndarray, log_weights: np.ndarray) -> np.ndarray:
    """Sum over classes of ``coef * exp(log_weight)``; ``log_weights`` is ``[..., classes]``."""
    live = class_coef > 0
    if not live.any():
        return np.zeros(log_weights.shape[:-1])
    return np.exp(log_weights[..., live]) @ class_coef[live]


def build_classed_space(design: Design, tie_tol: float = TIE_TOL) -> ClassedSpace:
    size = space_size(design)
    keys = np.empty(size, dtype=np.int64)
    log_coef = np.empty(size)
    for lo in range(0, size, CHUNK):
        counts = decode_counts(design, np.arange(lo, min(lo + CHUNK, size)))
        keys[lo : lo + len(counts)] = _stat_keys(counts, design)
        log_coef[lo : lo + len(counts)] = log_coefficients(counts)
    uniq, table_class = np.unique(keys, return_inverse=True)
    stats = _key_to_stat(uniq, design)
    fits = [fit_null(SufficientStat(*(int(v) for v in row))) for row in stats]
    pi_hat = np.array([f.pi_hat for f in fits])
    R_hat = np.array([f.R_hat for f in fits])
    degenerate = np.array([f.degenerate for f in fits])
    t = np.empty(size)
    for lo in range(0, size, CHUNK):
        idx = np.arange(lo, min(lo + CHUNK, size))
        cls = table_class[idx]
        t[idx] = t_sc_arrays(decode_counts(design, idx), pi_hat[cls], R_hat[cls], degenerate[cls])
    return ClassedSpace(
        design=design,
        stats=stats,
        pi_hat=pi_hat,
        R_hat=R_hat,
        degenerate=degenerate,
        table_class=table_class.astype(np.int32),
        log_coef=log_coef,
        t=t,
        tie_tol=tie_tol,
    )


def conditional_space(observed: Dataset) -> Iterator[Dataset]:
    """All tables sharing the observed group margins and pooled column totals."""
    counts = observed.counts()
    target = counts.sum(axis=0)
    options = [group_options(m, n) for m, n in observed.margins]
    # remaining capacity after group i: sum of later groups' m and n
    later_m = np.cumsum([m for m, _ in observed.margins][::-1])[::-1]
    later_n = np.cumsum([n for _, n in observed.margins][::-1])[::-1]

    def rec(i: int, remaining: np.ndarray, chosen: list[np.ndarray]) -> Iterator[list[np.ndarray]]:
        if i == len(options):
            if not remaining.any():
                yield chosen
            return
        rest_m = later_m[i + 1] if i + 1 < len(options) else 0
        rest_n = later_n[i + 1] if i + 1 < len(options) else 0
        for opt in options[i]:
            left = remaining - opt
            if (left < 0).any():
                continue
            if left[:3].sum() != rest_m or left[3:].sum() != rest_n:
                continue
            yield from rec(i + 1, left, chosen + [opt])

    for rows in rec(0, target, []):
        yield Dataset(GroupCounts(*map(int, r)) for r in rows)


def conditional_counts(observed: Dataset) -> np.ndarray:
    """Conditional space as a counts array ``[members, g, 5]``."""
    members = [d.counts() for d in conditional_space(observed)]
    return np.stack(members)
