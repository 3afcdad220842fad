"""Slotted simulation loop and loss/seed sweeps."""

from __future__ import annotations

import logging
import math
import random
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .channel import ChannelProcess, LinkStats
from .flow_control import FlowControlConfig, flow_control_rate
from .interference import DEFAULT_LINK_CAP, enumerate_mis
from .netmodel import (Flow, InvariantError, Link, PacketLedger, Topology, TopologyError,
                       bidirectional, build_topology, make_queues)
from .policies import (BACKPRESSURE, DIFFMAX, DIFFSUBMAX, WDIFFSUBMAX, PolicyConfig, WindowState,
                       bp_link_decision, contention_grants, diffmax_route, diffmax_schedule,
                       submax_select, wsubmax_route, wsubmax_window_update)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration: " + "; ".join(self.problems))


@dataclass
class ChannelConfig:
    loss: float = 0.0
    lossy: tuple[str, ...] = ("all",)  # "all", edges "A-C" (both directions) or links "A>C"
    window: int = 500


@dataclass
class TrafficConfig:
    mode: str = "saturated"  # saturated | cbr | bernoulli | poisson
    rates: tuple[float, ...] = ()  # packets/slot per flow; unused when saturated
    flow_control: bool = True  # False: arrivals go straight into U


@dataclass
class SimConfig:
    topology: str = "triangle"  # triangle | diamond | grid | custom
    topology_seed: int = 0
    interference: str = "node"
    links: tuple[str, ...] = ()  # custom only: "A-B" (both ways) or "A>B"
    flows: tuple[str, ...] = ()  # custom only: "A>B"
    link_rate: int = 1
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    flow_control: FlowControlConfig = field(default_factory=FlowControlConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    horizon: int = 10000
    seed: int = 1
    sample_every: int = 10
    buffer_cap: int | None = None
    mis_cap: int = DEFAULT_LINK_CAP
    debug: bool = False

    def problems(self) -> list[str]:
        out = []
        if self.horizon < 1:
            out.append(f"horizon must be >= 1 (got {self.horizon})")
        if self.sample_every < 1:
            out.append(f"sample_every must be >= 1 (got {self.sample_every})")
        if self.buffer_cap is not None and self.buffer_cap < 1:
            out.append(f"buffer_cap must be >= 1 (got {self.buffer_cap})")
        if not 0.0 <= self.channel.loss <= 1.0:
            out.append(f"loss must lie in [0, 1] (got {self.channel.loss})")
        if self.channel.window < 1:
            out.append(f"channel window must be >= 1 (got {self.channel.window})")
        out += self.policy.problems()
        out += self.flow_control.problems()
        t = self.traffic
        if t.mode not in ("saturated", "cbr", "bernoulli", "poisson"):
            out.append(f"unknown traffic mode {t.mode!r}")
        if t.mode == "saturated" and not t.flow_control:
            out.append("saturated sources need flow control")
        if any(r < 0 for r in t.rates):
            out.append("arrival rates must be nonnegative")
        if t.mode == "bernoulli" and any(r > 1 for r in t.rates):
            out.append("bernoulli arrival rates must be <= 1")
        try:
            topo, flows = build_network(self)
        except (TopologyError, ValueError) as exc:
            out.append(str(exc))
        else:
            if t.mode != "saturated" and len(t.rates) not in (1, len(flows)):
                out.append(f"need 1 or {len(flows)} arrival rates, got {len(t.rates)}")
            try:
                loss_vector(topo, self.channel)
            except ValueError as exc:
                out.append(str(exc))
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError(problems)


def _parse_pair(text: str) -> tuple[str, str, bool]:
    """'A-B' -> (A, B, both ways); 'A>B' -> (A, B, one way)."""
    text = text.strip()
    for sep, both in ((">", False), ("-", True)):
        if sep in text:
            a, b = (x.strip() for x in text.split(sep, 1))
            if a and b:
                return a, b, both
    raise ValueError(f"cannot parse link {text!r} (use A-B or A>B)")


def build_network(cfg: SimConfig) -> tuple[Topology, list[Flow]]:
    if cfg.topology != "custom":
        if cfg.links or cfg.flows:
            raise ValueError("links/flows may only be given for a custom topology")
        topo, flows = build_topology(cfg.topology, cfg.topology_seed, cfg.interference)
        if cfg.link_rate != 1:
            topo = Topology(topo.nodes, [Link(l.src, l.dst, cfg.link_rate) for l in topo.links],
                            cfg.interference)
        return topo, flows
    links: list[Link] = []
    nodes: list[str] = []
    for text in cfg.links:
        a, b, both = _parse_pair(text)
        nodes += [a, b]
        links += bidirectional([(a, b)], cfg.link_rate) if both else [Link(a, b, cfg.link_rate)]
    if not links:
        raise ValueError("custom topology needs at least one link")
    flows = []
    for k, text in enumerate(cfg.flows):
        a, b, _ = _parse_pair(text.replace("-", ">"))
        flows.append(Flow(k, a, b))
    if not flows:
        raise ValueError("custom topology needs at least one flow")
    topo = Topology(nodes, links, cfg.interference)
    for f in flows:
        for end in (f.source, f.dest):
            if end not in topo.node_index:
                raise TopologyError(f"flow {f.name} references undeclared node {end}")
    return topo, flows


def loss_vector(topo: Topology, ch: ChannelConfig) -> list[float]:
    p = [0.0] * topo.n_links
    for entry in ch.lossy:
        if entry.strip().lower() == "all":
            return [ch.loss] * topo.n_links
        a, b, both = _parse_pair(entry)
        idx = topo.edge_links(a, b) if both else [topo.link_index.get((a, b))]
        idx = [k for k in idx if k is not None]
        if not idx:
            raise ValueError(f"lossy link {entry!r} is not in the topology")
        for k in idx:
            p[k] = ch.loss
    return p


@dataclass
class SimResult:
    policy: str
    topology: str
    seed: int
    loss: float
    horizon: int
    flow_names: list[str]
    delivered: list[int]
    injected: list[int]
    dropped: list[int]
    sample_slots: np.ndarray  # slot index of each sample (end of slot)
    node_u: np.ndarray  # (samples, nodes) sum over flows of U
    node_v: np.ndarray  # (samples, nodes) sum over links of V
    audit_ok: bool = True

    @property
    def throughput(self) -> list[float]:
        return [d / self.horizon for d in self.delivered]

    @property
    def total_throughput(self) -> float:
        return sum(self.delivered) / self.horizon

    @property
    def injection_rate(self) -> list[float]:
        return [x / self.horizon for x in self.injected]

    @property
    def queue_mass(self) -> np.ndarray:
        return self.node_u.sum(axis=1) + self.node_v.sum(axis=1)

    def queue_slope(self, start: int | None = None) -> float:
        """Least-squares slope (packets/slot) of total queue mass over samples at or after ``start``."""
        if start is None:
            start = self.horizon // 2
        keep = self.sample_slots >= start
        x, y = self.sample_slots[keep], self.queue_mass[keep]
        if len(x) < 2:
            return 0.0
        return float(np.polyfit(x.astype(float), y.astype(float), 1)[0])


class Simulation:
    """One seeded run. ``step()`` advances a single slot; ``run()`` the whole horizon."""

    def __init__(self, cfg: SimConfig):
        cfg.validate()
        self.cfg = cfg
        self.topo, self.flows = build_network(cfg)
        topo = self.topo
        self.kind = cfg.policy.kind
        S = len(self.flows)
        self.S = S

        seeds = [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(cfg.seed).spawn(3)]
        self.channel = ChannelProcess(loss_vector(topo, cfg.channel), seeds[0])
        self._arrival_rng = np.random.default_rng(seeds[1])
        self._mac_rng = random.Random(seeds[2])

        self.mis = enumerate_mis(topo, cfg.mis_cap) if cfg.policy.mac_model == "maxweight" else None
        self.queues = make_queues(topo, S)
        self.U = [q.U for q in self.queues]
        self.V = [None] * topo.n_links
        for q in self.queues:
            for k, fifo in q.V.items():
                self.V[k] = fifo
        self.ledger = PacketLedger.empty(S)

        self.src = [topo.node_index[f.source] for f in self.flows]
        self.dst = [topo.node_index[f.dest] for f in self.flows]
        self.link_src = [topo.node_index[l.src] for l in topo.links]
        self.link_dst = [topo.node_index[l.dst] for l in topo.links]
        self.rates = [l.rate for l in topo.links]
        self.sources = sorted(set(self.src))
        self.flows_at = {i: [s for s in range(S) if self.src[s] == i] for i in self.sources}

        self.saturated = cfg.traffic.mode == "saturated"
        rates = list(cfg.traffic.rates)
        if len(rates) == 1:
            rates = rates * S
        self.arrival_rate = rates if rates else [0.0] * S
        self._cbr_acc = [0.0] * S
        self._residue: dict[int, float] = {}

        uses_stats = self.kind == DIFFSUBMAX or (self.kind == DIFFMAX and cfg.policy.scheduling_mode == "estimate")
        self.stats = LinkStats([float(r) for r in self.rates], cfg.channel.window) if uses_stats else None
        self.windows = WindowState(topo.n_links) if self.kind == WDIFFSUBMAX else None
        self._round_start = [0] * topo.n_links  # slot the current window round began

        self._history: deque = deque(maxlen=cfg.policy.staleness + 1)
        self.t = 0
        self._samples: list[int] = []
        self._node_u: list[list[int]] = []
        self._node_v: list[list[int]] = []
        self.audit_ok = True

    # -- per-slot stages ---------------------------------------------------

    def _arrivals(self, t: int) -> None:
        if self.saturated:
            return
        mode = self.cfg.traffic.mode
        for s in range(self.S):
            lam = self.arrival_rate[s]
            if mode == "cbr":
                self._cbr_acc[s] += lam
                a = int(self._cbr_acc[s] + 1e-9)
                self._cbr_acc[s] -= a
            elif mode == "bernoulli":
                a = int(self._arrival_rng.random() < lam)
            else:
                a = int(self._arrival_rng.poisson(lam))
            if a:
                self.queues[self.src[s]].reservoir[s] += a
                self.ledger.injected[s] += a

    def _injections(self, t: int) -> list[int]:
        inject = [0] * self.S
        if not self.cfg.traffic.flow_control:
            for s in range(self.S):
                res = self.queues[self.src[s]].reservoir
                inject[s], res[s] = res[s], 0
            return inject
        fc = self.cfg.flow_control
        if t % fc.epoch:
            return inject
        for i in self.sources:
            owned = self.flows_at[i]
            res = self.queues[i].reservoir
            x = flow_control_rate({s: self.U[i][s] for s in owned}, fc, self._residue,
                                  None if self.saturated else {s: res[s] for s in owned})
            for s, n in x.items():
                inject[s] = n
                if self.saturated:
                    self.ledger.injected[s] += n
                else:
                    res[s] -= n
        return inject

    def _view(self) -> list[list[int]]:
        return self._history[0]

    def _route_diffmax(self, t: int, v_start: list[int]) -> None:
        view = self._view()
        U, V, F = self.U, self.V, self.cfg.policy.F_max
        for i, outs in enumerate(self.topo.out_links):
            if not outs:
                continue
            u_i = U[i]
            if not any(u_i):
                continue
            moves = diffmax_route(u_i, {k: view[self.link_dst[k]] for k in outs},
                                  {k: v_start[k] for k in outs}, F)
            for (s, k), n in moves.items():
                u_i[s] -= n
                V[k].extend([(s, t)] * n)

    def _route_window(self, t: int) -> None:
        view = self._view()
        U, V, ws = self.U, self.V, self.windows
        for i, outs in enumerate(self.topo.out_links):
            if not outs:
                continue
            u_i = U[i]
            for k in outs:
                acked = ws.win_count[k]
                if acked and acked >= ws.W[k]:
                    # a full window came back: judge it by its mean RTT
                    u_j = view[self.link_dst[k]]
                    positive = any(a - b > 0 for a, b in zip(u_i, u_j))
                    wsubmax_window_update(ws, k, positive, acked)
                    self._round_start[k] = t
                elif not acked and V[k] and t - self._round_start[k] >= self._timeout(k):
                    wsubmax_window_update(ws, k, False, 0)
                    self._round_start[k] = t
                elif not V[k] and not acked:
                    self._round_start[k] = t
            if any(u_i):
                # R packets sit in the routing-to-service pipeline of a busy
                # link, so the window caps what is queued beyond them
                moves = wsubmax_route(u_i, {k: view[self.link_dst[k]] for k in outs},
                                      {k: len(V[k]) for k in outs},
                                      {k: ws.W[k] + self.rates[k] for k in outs})
                for (s, k), n in moves.items():
                    u_i[s] -= n
                    V[k].extend([(s, t)] * n)

    def _timeout(self, k: int) -> int:
        avg = self.windows.rtt_avg(k)
        return 2 * math.ceil(avg) if avg else 2 * self.windows.W[k]

    def _receive(self, s: int, j: int, n: int, incoming: list[list[int]]) -> None:
        if j == self.dst[s]:
            self.ledger.delivered[s] += n
        else:
            incoming[j][s] += n

    def _schedule(self, t: int, on: list[bool], v_start: list[int], incoming: list[list[int]]) -> list[int]:
        kind = self.kind
        topo = self.topo
        V = self.V
        used: list[int] = []
        if kind == BACKPRESSURE:
            dec = bp_link_decision(topo, self.U, on, self.mis)
            for l in dec.active:
                s, n = dec.flow[l], dec.amount[l]
                if n:
                    self.U[self.link_src[l]][s] -= n
                    self._receive(s, self.link_dst[l], n, incoming)
                    used.append(l)
            return used
        if kind == DIFFMAX:
            mode = self.cfg.policy.scheduling_mode
            if mode == "estimate":
                st = self.stats
                st.refresh(t)
                n_l = topo.n_links
                active, attempt = diffmax_schedule(v_start, self.rates, self.mis, mode,
                                                   p_bar=[st.p_bar(l) for l in range(n_l)],
                                                   r_bar=[st.r_bar(l) for l in range(n_l)])
            else:
                active, attempt = diffmax_schedule(v_start, self.rates, self.mis, mode, on=on)
            for l in active:
                n = attempt[l]
                ok = on[l]
                if self.stats is not None:
                    self.stats.record(l, n, n if ok else 0, t)
                if ok:
                    self._serve(l, n, incoming, t)
                    used.append(l)
            return used

        # contention MAC
        requests = {}
        if kind == DIFFSUBMAX:
            st = self.stats
            st.refresh(t)
            for i, outs in enumerate(topo.out_links):
                v_i = {k: v_start[k] for k in outs if v_start[k]}
                if v_i:
                    requests[i] = submax_select(v_i, {k: st.p_bar(k) for k in v_i},
                                                {k: st.r_bar(k) for k in v_i})
        else:
            for i, outs in enumerate(topo.out_links):
                best, oldest = None, None
                for k in outs:
                    if v_start[k] and (oldest is None or V[k][0][1] < oldest):
                        best, oldest = k, V[k][0][1]
                if best is not None:
                    requests[i] = best
        for l in contention_grants(requests, topo, self._mac_rng):
            ok = on[l]
            if self.stats is not None:
                self.stats.record(l, 1, 1 if ok else 0, t)
            if ok:
                self._serve(l, 1, incoming, t)
                used.append(l)
        return used

    def _serve(self, l: int, n: int, incoming: list[list[int]], t: int) -> None:
        fifo = self.V[l]
        j = self.link_dst[l]
        ws = self.windows
        for _ in range(n):
            s, born = fifo.popleft()
            self._receive(s, j, 1, incoming)
            if ws is not None:
                ws.ack(l, t - born + 1)

    def _enforce_cap(self) -> None:
        cap = self.cfg.buffer_cap
        for i, u_i in enumerate(self.U):
            for s, n in enumerate(u_i):
                if n > cap:
                    self.ledger.dropped[s] += n - cap
                    u_i[s] = cap
        for fifo in self.V:
            while len(fifo) > cap:
                s, _ = fifo.popleft()
                self.ledger.dropped[s] += 1

    def step(self) -> None:
        t = self.t
        cfg = self.cfg
        on = self.channel.state(t)
        self._arrivals(t)
        inject = self._injections(t)

        kind = self.kind
        if kind != BACKPRESSURE:
            self._history.append([row[:] for row in self.U])
        v_start = [len(f) for f in self.V]
        if kind != BACKPRESSURE and t % cfg.policy.routing_epoch == 0:
            if kind == WDIFFSUBMAX:
                self._route_window(t)
            else:
                self._route_diffmax(t, v_start)

        incoming = [[0] * self.S for _ in self.U]
        used = self._schedule(t, on, v_start, incoming)
        if cfg.debug:
            if not self.topo.is_independent(used):
                raise InvariantError(f"slot {t}: activated links {used} conflict")
            if any(not on[l] for l in used):
                raise InvariantError(f"slot {t}: packets crossed an OFF link")

        for j, row in enumerate(incoming):
            u_j = self.U[j]
            for s, n in enumerate(row):
                if n:
                    u_j[s] += n
        for s, n in enumerate(inject):
            if n:
                self.U[self.src[s]][s] += n
        if cfg.buffer_cap is not None:
            self._enforce_cap()

        if (t + 1) % cfg.sample_every == 0 or t + 1 == cfg.horizon:
            self._sample(t)
        self.t += 1

    def _sample(self, t: int) -> None:
        self._samples.append(t)
        self._node_u.append([sum(u) for u in self.U])
        node_v = [0] * self.topo.n_nodes
        for k, fifo in enumerate(self.V):
            node_v[self.link_src[k]] += len(fifo)
        self._node_v.append(node_v)
        if not self.ledger.audit(self.queues):
            self.audit_ok = False
            raise InvariantError(f"slot {t}: packet ledger does not balance "
                                 f"(injected={self.ledger.injected}, delivered={self.ledger.delivered}, "
                                 f"held={self.ledger.in_flight(self.queues)})")

    def run(self) -> SimResult:
        while self.t < self.cfg.horizon:
            self.step()
        return self.result()

    def result(self) -> SimResult:
        cfg = self.cfg
        n = self.topo.n_nodes
        return SimResult(
            policy=self.kind,
            topology=cfg.topology,
            seed=cfg.seed,
            loss=cfg.channel.loss,
            horizon=self.t,
            flow_names=[f.name for f in self.flows],
            delivered=list(self.ledger.delivered),
            injected=list(self.ledger.injected),
            dropped=list(self.ledger.dropped),
            sample_slots=np.asarray(self._samples, dtype=int),
            node_u=np.asarray(self._node_u, dtype=int).reshape(-1, n),
            node_v=np.asarray(self._node_v, dtype=int).reshape(-1, n),
            audit_ok=self.audit_ok,
        )


def run(cfg: SimConfig) -> SimResult:
    return Simulation(cfg).run()


# -- sweeps --------------------------------------------------------------

@dataclass
class SweepRow:
    policy: str
    loss: float
    seed: int
    flow_names: list[str]
    delivered: list[int]
    throughput: list[float]
    total: float


@dataclass
class Aggregate:
    policy: str
    loss: float
    n: int
    total_mean: float
    total_std: float
    flow_mean: list[float]
    flow_std: list[float]


@dataclass
class SweepResult:
    rows: list[SweepRow]
    aggregates: list[Aggregate]

    def aggregate(self, policy: str, loss: float) -> Aggregate:
        for a in self.aggregates:
            if a.policy == policy and math.isclose(a.loss, loss):
                return a
        raise KeyError((policy, loss))


class SweepError(RuntimeError):
    pass


def _cell_config(base: SimConfig, policy: str, loss: float, seed: int) -> SimConfig:
    pol = replace(base.policy, kind=policy, mac_model="")
    return replace(base, policy=pol, seed=seed, channel=replace(base.channel, loss=loss))


def _run_cell(args) -> SweepRow:
    base, policy, loss, seed = args
    try:
        res = run(_cell_config(base, policy, loss, seed))
    except Exception as exc:
        raise SweepError(f"run failed for policy={policy} loss={loss} seed={seed}: {exc}") from exc
    return SweepRow(policy, loss, seed, res.flow_names, res.delivered, res.throughput, res.total_throughput)


def _std(xs: Sequence[float]) -> float:
    return float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0


def sweep(base: SimConfig, losses: Sequence[float], seeds: Sequence[int],
          policies: Sequence[str] | None = None, parallel: int = 1) -> SweepResult:
    """Run every (policy, loss, seed) cell; rows come back in that key order."""
    if not losses or not seeds:
        raise ValueError("sweep needs nonempty loss and seed grids")
    policies = [PolicyConfig(kind=p).kind for p in (policies or [base.policy.kind])]
    cells = [(base, p, float(l), int(s)) for p in policies for l in losses for s in seeds]
    for _, p, l, s in cells:
        _cell_config(base, p, l, s).validate()
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(c) for c in cells]
    rows.sort(key=lambda r: (policies.index(r.policy), r.loss, r.seed))

    aggs = []
    for p in policies:
        for l in losses:
            cell = [r for r in rows if r.policy == p and math.isclose(r.loss, float(l))]
            per_flow = list(zip(*[r.throughput for r in cell]))
            totals = [r.total for r in cell]
            aggs.append(Aggregate(p, float(l), len(cell), float(np.mean(totals)), _std(totals),
                                  [float(np.mean(f)) for f in per_flow], [_std(f) for f in per_flow]))
    return SweepResult(rows, aggs)
