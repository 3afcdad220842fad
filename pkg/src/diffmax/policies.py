"""Per-slot control rules: classical backpressure and the Diff-Max family.

Backpressure picks, per link, the flow with the largest backlog differential
and activates links jointly on those differentials. Diff-Max splits this in
two: routing moves packets from per-flow queues U into per-link queues V
when ``U_i^s - U_j^s - V_ij > 0``, and scheduling activates links by V
alone. Diff-subMax keeps the routing and only picks which of a node's link
queues to serve when a contention MAC grants the node the medium.
wDiff-subMax replaces V in the routing rule with an ACK/RTT-driven window.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

from .interference import MisTable, max_weight_index
from .netmodel import Topology

BACKPRESSURE = "backpressure"
DIFFMAX = "diffmax"
DIFFSUBMAX = "diffsubmax"
WDIFFSUBMAX = "wdiffsubmax"
KINDS = (BACKPRESSURE, DIFFMAX, DIFFSUBMAX, WDIFFSUBMAX)

_ALIASES = {"bp": BACKPRESSURE, "classical": BACKPRESSURE}


def normalize_kind(name: str) -> str:
    key = name.strip().lower().replace("-", "").replace("_", "")
    key = _ALIASES.get(key, key)
    if key not in KINDS:
        raise ValueError(f"unknown policy {name!r} (expected one of {', '.join(KINDS)})")
    return key


@dataclass
class PolicyConfig:
    kind: str = DIFFMAX
    F_max: int = 4
    routing_epoch: int = 1  # slots
    scheduling_mode: str = "oracle"  # oracle | estimate
    mac_model: str = ""  # maxweight | contention; empty picks the policy's default
    staleness: int = 1  # slots of delay on neighbor U values

    def __post_init__(self):
        try:
            self.kind = normalize_kind(self.kind)
        except ValueError:
            pass  # reported by problems()
        if not self.mac_model:
            self.mac_model = "contention" if self.kind in (DIFFSUBMAX, WDIFFSUBMAX) else "maxweight"

    def problems(self) -> list[str]:
        out = []
        if self.kind not in KINDS:
            out.append(f"unknown policy {self.kind!r}")
        if self.F_max < 1:
            out.append(f"F_max must be >= 1 (got {self.F_max})")
        if self.routing_epoch < 1:
            out.append(f"routing_epoch must be >= 1 (got {self.routing_epoch})")
        if self.scheduling_mode not in ("oracle", "estimate"):
            out.append(f"scheduling_mode must be oracle or estimate (got {self.scheduling_mode!r})")
        if self.mac_model not in ("maxweight", "contention"):
            out.append(f"mac_model must be maxweight or contention (got {self.mac_model!r})")
        elif self.kind in (DIFFSUBMAX, WDIFFSUBMAX) and self.mac_model != "contention":
            out.append(f"{self.kind} runs over the contention MAC only")
        elif self.kind in (BACKPRESSURE, DIFFMAX) and self.mac_model != "maxweight":
            out.append(f"{self.kind} requires the maxweight scheduler")
        if self.staleness < 0:
            out.append(f"staleness must be >= 0 (got {self.staleness})")
        return out


# -- classical backpressure -------------------------------------------------

def best_differential(u_i: Sequence[int], u_j: Sequence[int]) -> tuple[int, int]:
    """(s*, D*) with D* = max_s U_i^s - U_j^s; lowest flow index on ties."""
    best_s, best = 0, u_i[0] - u_j[0]
    for s in range(1, len(u_i)):
        d = u_i[s] - u_j[s]
        if d > best:
            best_s, best = s, d
    return best_s, best


@dataclass
class LinkDecision:
    active: list[int]
    flow: dict[int, int] = field(default_factory=dict)
    amount: dict[int, int] = field(default_factory=dict)


def bp_link_decision(topo: Topology, U: Sequence[Sequence[int]], on: Sequence[bool],
                     mis: MisTable) -> LinkDecision:
    """Joint routing/scheduling on per-flow backlog differentials.

    ``U[n][s]`` is the flow-s backlog at node index n. Link weight is
    ``max(D*, 0) * R_l`` when ON, else 0. Zero-weight links in the chosen set
    stay idle.
    """
    links = topo.links
    index = topo.node_index
    weight = [0] * len(links)
    choice = [0] * len(links)
    for l, link in enumerate(links):
        if not on[l]:
            continue
        u_i = U[index[link.src]]
        s, d = best_differential(u_i, U[index[link.dst]])
        if d > 0:
            weight[l] = d * link.rate
            choice[l] = s
    q = max_weight_index(mis, weight)
    dec = LinkDecision([])
    for l in mis.sets[q]:
        if weight[l] > 0:
            s = choice[l]
            dec.active.append(l)
            dec.flow[l] = s
            dec.amount[l] = min(U[index[links[l].src]][s], links[l].rate)
    return dec


# -- Diff-Max ----------------------------------------------------------------

def diffmax_route(u_i: Sequence[int], u_nbr: Mapping[Hashable, Sequence[int]],
                  v_i: Mapping[Hashable, int], F_max: int) -> dict[tuple[int, Hashable], int]:
    """Packets of each flow to move from U_i into each link queue V_ij.

    Up to ``F_max`` per (flow, link) with a positive ``U_i^s - U_j^s - V_ij``;
    when U_i^s runs short, larger differentials are served first (ties in
    the mapping order of ``u_nbr``).
    """
    out = {}
    order = list(u_nbr)
    for s, have in enumerate(u_i):
        if have <= 0:
            continue
        cands = []
        for rank, j in enumerate(order):
            d = have - u_nbr[j][s] - v_i[j]
            if d > 0:
                cands.append((-d, rank, j))
        cands.sort()
        for _, _, j in cands:
            if have <= 0:
                break
            n = F_max if F_max < have else have
            out[(s, j)] = n
            have -= n
    return out


def link_weights(v_len: Sequence[int], rates: Sequence[float], mode: str,
                 on: Sequence[bool] | None = None,
                 p_bar: Sequence[float] | None = None,
                 r_bar: Sequence[float] | None = None) -> list[float]:
    if mode == "oracle":
        if on is None:
            raise ValueError("oracle scheduling needs the channel state")
        return [v * r if c else 0 for v, r, c in zip(v_len, rates, on)]
    if mode == "estimate":
        if p_bar is None or r_bar is None:
            raise ValueError("estimate scheduling needs link statistics")
        return [v * (1.0 - p) * r for v, p, r in zip(v_len, p_bar, r_bar)]
    raise ValueError(f"unknown scheduling mode {mode!r}")


def diffmax_schedule(v_len: Sequence[int], rates: Sequence[int], mis: MisTable, mode: str = "oracle",
                     on: Sequence[bool] | None = None, p_bar: Sequence[float] | None = None,
                     r_bar: Sequence[float] | None = None) -> tuple[list[int], dict[int, int]]:
    """Max-weight activation on link-layer backlogs.

    Returns the activated links (positive weight only) and the packets each
    one attempts, ``min(V_l, R_l)``. Whether an attempt delivers depends on
    the realized channel, which the caller applies.
    """
    w = link_weights(v_len, rates, mode, on, p_bar, r_bar)
    q = max_weight_index(mis, w)
    active = [l for l in mis.sets[q] if w[l] > 0]
    return active, {l: min(v_len[l], rates[l]) for l in active}


# -- Diff-subMax -------------------------------------------------------------

def submax_select(v_i: Mapping[Hashable, int], p_bar: Mapping[Hashable, float],
                  r_bar: Mapping[Hashable, float]):
    """Link queue a node serves when granted the medium, or None if all are empty."""
    best, best_w = None, -1.0
    for j, v in v_i.items():
        if v <= 0:
            continue
        w = v * (1.0 - p_bar[j]) * r_bar[j]
        if w > best_w:
            best, best_w = j, w
    return best


def contention_grants(requests: Mapping[int, int], topo: Topology, rng: random.Random) -> list[int]:
    """Contention MAC: nodes with a pending link (node -> link) are visited in
    uniformly random order; a node wins if its link conflicts with no link
    granted before it."""
    nodes = sorted(requests)
    rng.shuffle(nodes)
    granted: list[int] = []
    for n in nodes:
        l = requests[n]
        clash = topo.conflicts[l]
        if not any(g in clash for g in granted):
            granted.append(l)
    return granted


# -- wDiff-subMax ------------------------------------------------------------

@dataclass
class WindowState:
    """Per-link congestion window and RTT bookkeeping (RTT in slots)."""

    n_links: int
    initial: int = 1
    W: list[int] = field(default_factory=list)
    rtt_sum: list[float] = field(default_factory=list)
    rtt_count: list[int] = field(default_factory=list)
    win_sum: list[float] = field(default_factory=list)
    win_count: list[int] = field(default_factory=list)

    def __post_init__(self):
        n = self.n_links
        self.W = [max(1, self.initial)] * n
        self.rtt_sum = [0.0] * n
        self.rtt_count = [0] * n
        self.win_sum = [0.0] * n
        self.win_count = [0] * n

    def ack(self, l: int, rtt: float) -> None:
        self.win_sum[l] += rtt
        self.win_count[l] += 1

    def rtt_avg(self, l: int) -> float | None:
        return self.rtt_sum[l] / self.rtt_count[l] if self.rtt_count[l] else None

    def rtt_last(self, l: int) -> float | None:
        return self.win_sum[l] / self.win_count[l] if self.win_count[l] else None

    def close_window(self, l: int) -> None:
        self.rtt_sum[l] += self.win_sum[l]
        self.rtt_count[l] += self.win_count[l]
        self.win_sum[l] = 0.0
        self.win_count[l] = 0


def next_window(W: int, diff_positive: bool, rtt_last: float | None, rtt_avg: float | None,
                acked_in_window: int | None) -> int:
    """Window rule: +1 when the differential is positive and the last window's
    RTT beat the long-run average, -1 when it was worse, halve when nothing in
    the last window was ACKed. ``acked_in_window=None`` means nothing was
    outstanding, so there is nothing to judge."""
    if diff_positive and rtt_last is not None and rtt_avg is not None:
        if rtt_last < rtt_avg:
            W += 1
        elif rtt_last > rtt_avg:
            W -= 1
    if acked_in_window == 0:
        W //= 2
    return max(1, W)


def wsubmax_window_update(state: WindowState, l: int, diff_positive: bool,
                          acked_in_window: int | None) -> WindowState:
    state.W[l] = next_window(state.W[l], diff_positive, state.rtt_last(l), state.rtt_avg(l),
                             acked_in_window)
    state.close_window(l)
    return state


def wsubmax_route(u_i: Sequence[int], u_nbr: Mapping[Hashable, Sequence[int]],
                  outstanding: Mapping[Hashable, int], window: Mapping[Hashable, int]
                  ) -> dict[tuple[int, Hashable], int]:
    """Top up each link to its window with packets of flows whose differential
    ``U_i^s - U_j^s`` is positive, largest differential first."""
    room = {j: max(0, window[j] - outstanding[j]) for j in u_nbr}
    have = list(u_i)
    cands = []
    order = list(u_nbr)
    for s in range(len(u_i)):
        if have[s] <= 0:
            continue
        for rank, j in enumerate(order):
            d = have[s] - u_nbr[j][s]
            if d > 0:
                cands.append((-d, s, rank, j))
    cands.sort()
    out = {}
    for _, s, _, j in cands:
        n = min(room[j], have[s])
        if n > 0:
            out[(s, j)] = n
            room[j] -= n
            have[s] -= n
    return out
