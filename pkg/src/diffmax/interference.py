"""Maximal independent sets of the link conflict graph and max-weight selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .netmodel import Topology

DEFAULT_LINK_CAP = 24


class EnumerationInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class MisTable:
    """All maximal independent link sets, each a sorted tuple of link indices."""

    n_links: int
    sets: tuple[tuple[int, ...], ...]

    @property
    def Q(self) -> int:
        return len(self.sets)

    def vector(self, q: int) -> list[int]:
        members = set(self.sets[q])
        return [1 if l in members else 0 for l in range(self.n_links)]


def enumerate_mis(topology: Topology, cap: int = DEFAULT_LINK_CAP) -> MisTable:
    """Enumerate maximal independent sets with Bron-Kerbosch (pivoting) on the
    complement of the conflict graph."""
    n = topology.n_links
    if n > cap:
        raise EnumerationInfeasible(
            f"enumeration infeasible: {n} links exceeds the MIS link cap of {cap}")
    compat = [frozenset(range(n)) - topology.conflicts[l] - {l} for l in range(n)]
    found: list[tuple[int, ...]] = []

    def expand(r: frozenset, p: frozenset, x: frozenset) -> None:
        if not p and not x:
            found.append(tuple(sorted(r)))
            return
        pivot = max(p | x, key=lambda u: len(p & compat[u]))
        for v in sorted(p - compat[pivot]):
            expand(r | {v}, p & compat[v], x & compat[v])
            p = p - {v}
            x = x | {v}

    expand(frozenset(), frozenset(range(n)), frozenset())
    return MisTable(n, tuple(sorted(found)))


def set_value(mis: MisTable, q: int, weight: Sequence[float]) -> float:
    return sum(weight[l] for l in mis.sets[q])


def max_weight_index(mis: MisTable, weight: Sequence[float]) -> int:
    """Index of the set with the largest total weight; lowest index wins ties."""
    best_q, best = 0, float("-inf")
    for q, members in enumerate(mis.sets):
        total = 0.0
        for l in members:
            total += weight[l]
        if total > best:
            best_q, best = q, total
    return best_q


def max_weight_set(mis: MisTable, weight: Sequence[float]) -> list[int]:
    """Activation vector (0/1 per link) of the max-weight maximal independent set."""
    if any(w < 0 for w in weight):
        raise ValueError("weights must be nonnegative")
    return mis.vector(max_weight_index(mis, weight))
