"""Static network description (topology, flows) and queue bookkeeping."""

from __future__ import annotations

import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    rate: int = 1  # packets/slot when ON

    @property
    def name(self) -> str:
        return f"{self.src}>{self.dst}"


@dataclass(frozen=True)
class Flow:
    flow_id: int
    source: str
    dest: str
    rate: float = 0.0  # mean arrivals, packets/slot
    name: str = ""

    def __post_init__(self):
        if self.source == self.dest:
            raise TopologyError(f"flow {self.flow_id}: source equals destination ({self.source})")
        if self.rate < 0:
            raise TopologyError(f"flow {self.flow_id}: negative arrival rate {self.rate}")
        if not self.name:
            object.__setattr__(self, "name", f"S{self.flow_id + 1}")


class Topology:
    """Nodes, directed links and the symmetric link-conflict relation.

    Links are indexed in the order given; that order is the tie-break order
    used by every scheduler. ``interference`` selects the conflict rule:
    ``"node"`` (links sharing an endpoint conflict) or ``"two-hop"`` (links
    whose endpoints are equal or adjacent conflict).
    """

    def __init__(self, nodes: Iterable[str], links: Sequence[Link],
                 interference: str = "node", conflict_pairs: Iterable[tuple[int, int]] | None = None):
        self.nodes: list[str] = list(dict.fromkeys(nodes))
        self.links: list[Link] = list(links)
        self.node_index = {n: k for k, n in enumerate(self.nodes)}
        self.interference = interference
        problems = []
        seen = set()
        for k, l in enumerate(self.links):
            if l.src == l.dst:
                problems.append(f"link {k} is a self-link at {l.src}")
            for end in (l.src, l.dst):
                if end not in self.node_index:
                    problems.append(f"link {l.name} references undeclared node {end}")
            if (l.src, l.dst) in seen:
                problems.append(f"duplicate link {l.name}")
            seen.add((l.src, l.dst))
            if l.rate < 1:
                problems.append(f"link {l.name} has rate {l.rate} < 1")
        if problems:
            raise TopologyError("; ".join(problems))
        self.link_index = {(l.src, l.dst): k for k, l in enumerate(self.links)}

        self.out_links: list[list[int]] = [[] for _ in self.nodes]
        self.in_links: list[list[int]] = [[] for _ in self.nodes]
        for k, l in enumerate(self.links):
            self.out_links[self.node_index[l.src]].append(k)
            self.in_links[self.node_index[l.dst]].append(k)
        self.neighbors: list[list[int]] = [
            sorted({self.node_index[self.links[k].dst] for k in self.out_links[i]}
                   | {self.node_index[self.links[k].src] for k in self.in_links[i]})
            for i in range(len(self.nodes))
        ]

        if conflict_pairs is None:
            conflict_pairs = self._default_conflicts(interference)
        pairs = set()
        for a, b in conflict_pairs:
            if a == b:
                raise TopologyError(f"link {a} cannot conflict with itself")
            pairs.add((min(a, b), max(a, b)))
        self.conflict_pairs: frozenset[tuple[int, int]] = frozenset(pairs)
        self.conflicts: list[frozenset[int]] = [frozenset() for _ in self.links]
        adj: list[set[int]] = [set() for _ in self.links]
        for a, b in pairs:
            adj[a].add(b)
            adj[b].add(a)
        self.conflicts = [frozenset(s) for s in adj]

    def _default_conflicts(self, rule: str) -> list[tuple[int, int]]:
        if rule not in ("node", "two-hop"):
            raise TopologyError(f"unknown interference rule {rule!r}")
        near = {n: {n} for n in self.nodes}
        if rule == "two-hop":
            for l in self.links:
                near[l.src].add(l.dst)
                near[l.dst].add(l.src)
        out = []
        for a, b in itertools.combinations(range(len(self.links)), 2):
            la, lb = self.links[a], self.links[b]
            ends_a = {la.src, la.dst}
            ends_b = {lb.src, lb.dst}
            if rule == "node":
                hit = bool(ends_a & ends_b)
            else:
                hit = any(near[x] & ends_b for x in ends_a)
            if hit:
                out.append((a, b))
        return out

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def in_conflict(self, a: int, b: int) -> bool:
        return b in self.conflicts[a]

    def is_independent(self, active: Iterable[int]) -> bool:
        act = list(active)
        return all(not self.in_conflict(a, b) for a, b in itertools.combinations(act, 2))

    def link(self, src: str, dst: str) -> int:
        return self.link_index[(src, dst)]

    def edge_links(self, a: str, b: str) -> list[int]:
        """Indices of the directed links between ``a`` and ``b`` (either direction)."""
        return [k for k in (self.link_index.get((a, b)), self.link_index.get((b, a))) if k is not None]

    def __repr__(self):
        return f"Topology(nodes={self.nodes}, links={[l.name for l in self.links]})"


def bidirectional(edges: Iterable[tuple[str, str]], rate: int = 1) -> list[Link]:
    links = []
    for a, b in edges:
        links.append(Link(a, b, rate))
        links.append(Link(b, a, rate))
    return sorted(links, key=lambda l: (l.src, l.dst))


GRID_COLS, GRID_ROWS = 4, 3


def build_topology(kind: str, seed: int = 0, interference: str = "node",
                   n_grid_nodes: int = 12, n_grid_flows: int = 4) -> tuple[Topology, list[Flow]]:
    """Preset topologies: ``triangle``, ``diamond`` and the random ``grid``.

    The diamond edge set (A-B, A-C, B-D, C-D) is inferred from its flows and
    shape; triangle and diamond ignore ``seed``.
    """
    if kind == "triangle":
        topo = Topology("ABC", bidirectional([("A", "B"), ("A", "C"), ("B", "C")]), interference)
        return topo, [Flow(0, "A", "B"), Flow(1, "A", "C")]
    if kind == "diamond":
        topo = Topology("ABCD", bidirectional([("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")]), interference)
        return topo, [Flow(0, "A", "B"), Flow(1, "A", "D")]
    if kind == "grid":
        return _grid(seed, interference, n_grid_nodes, n_grid_flows)
    raise TopologyError(f"unknown topology kind {kind!r} (expected triangle, diamond or grid)")


def _grid(seed: int, interference: str, n_nodes: int, n_flows: int) -> tuple[Topology, list[Flow]]:
    rng = random.Random(seed)
    names = [f"N{k}" for k in range(n_nodes)]
    while True:
        cells = [(rng.randrange(GRID_COLS), rng.randrange(GRID_ROWS)) for _ in names]
        edges = [
            (names[a], names[b])
            for a, b in itertools.combinations(range(n_nodes), 2)
            if max(abs(cells[a][0] - cells[b][0]), abs(cells[a][1] - cells[b][1])) <= 1
        ]
        if _connected(names, edges):
            break
    topo = Topology(names, bidirectional(edges), interference)
    pairs = rng.sample([(a, b) for a in names for b in names if a != b], n_flows)
    return topo, [Flow(k, a, b) for k, (a, b) in enumerate(pairs)]


def _connected(names: list[str], edges: list[tuple[str, str]]) -> bool:
    adj: dict[str, set[str]] = {n: set() for n in names}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen = {names[0]}
    stack = [names[0]]
    while stack:
        for m in adj[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return len(seen) == len(names)


def update_network_queue(u_prev: int, outgoing: int, incoming: int, exogenous: int) -> int:
    """Per-flow network-layer queue recursion: removal first, then arrivals."""
    return max(u_prev - outgoing, 0) + incoming + exogenous


def update_link_queue(v_prev: int, service: int, routed_in: int) -> int:
    """Per-link link-layer queue recursion."""
    return max(v_prev - service, 0) + routed_in


@dataclass
class NodeQueues:
    """Queues held at one node.

    ``U[s]`` is a packet count per flow. ``V[k]`` is a FIFO of
    ``(flow_id, enqueue_slot)`` records for each outgoing link index ``k``.
    """

    node: int
    U: list[int]
    V: dict[int, deque] = field(default_factory=dict)
    reservoir: list[int] = field(default_factory=list)

    def v_len(self, k: int) -> int:
        return len(self.V[k])


def make_queues(topo: Topology, n_flows: int) -> list[NodeQueues]:
    return [
        NodeQueues(i, [0] * n_flows, {k: deque() for k in topo.out_links[i]}, [0] * n_flows)
        for i in range(topo.n_nodes)
    ]


class InvariantError(RuntimeError):
    """A conservation or feasibility invariant broke during simulation."""


@dataclass
class PacketLedger:
    """Per-flow packet accounting: every injected packet is delivered, dropped or still queued."""

    injected: list[int]
    delivered: list[int]
    dropped: list[int]

    @classmethod
    def empty(cls, n_flows: int) -> "PacketLedger":
        return cls([0] * n_flows, [0] * n_flows, [0] * n_flows)

    def in_flight(self, queues: Sequence[NodeQueues]) -> list[int]:
        n = len(self.injected)
        counts = [0] * n
        for q in queues:
            for s in range(n):
                counts[s] += q.U[s] + q.reservoir[s]
            for fifo in q.V.values():
                for s, _ in fifo:
                    counts[s] += 1
        return counts

    def audit(self, queues: Sequence[NodeQueues]) -> bool:
        held = self.in_flight(queues)
        return all(
            self.injected[s] == self.delivered[s] + self.dropped[s] + held[s]
            for s in range(len(self.injected))
        )
