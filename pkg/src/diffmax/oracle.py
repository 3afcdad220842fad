"""Static network utility maximization by dual subgradient descent.

The Lagrangian of the NUM problem splits into three subproblems per
iteration: flow control (x_s = 1/u at the source for log utility), routing
(f = F_cap on every (link, flow) with u_i - u_j - v_ij > 0) and scheduling
(h = the max-weight MIS vertex of the rate polytope under weights v).
Multipliers u (per node, flow) and v (per link) then take a projected
subgradient step. Primal rates are recovered by step-weighted averaging
over the second half of the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .interference import DEFAULT_LINK_CAP, MisTable, enumerate_mis
from .netmodel import Flow, Topology


@dataclass
class NumInstance:
    topology: Topology
    flows: list[Flow]
    loss: list[float]  # per link
    mis: MisTable

    @classmethod
    def build(cls, topology: Topology, flows: list[Flow], loss: list[float] | None = None,
              cap: int = DEFAULT_LINK_CAP) -> "NumInstance":
        loss = list(loss) if loss is not None else [0.0] * topology.n_links
        if len(loss) != topology.n_links:
            raise ValueError("need one loss probability per link")
        return cls(topology, list(flows), loss, enumerate_mis(topology, cap))

    @property
    def capacity(self) -> np.ndarray:
        rates = np.array([l.rate for l in self.topology.links], dtype=float)
        return (1.0 - np.asarray(self.loss, dtype=float)) * rates

    def vertices(self) -> np.ndarray:
        """Rate-region vertices: each MIS activation vector scaled by link capacity (Q x L)."""
        pi = np.array([self.mis.vector(q) for q in range(self.mis.Q)], dtype=float)
        return pi * self.capacity


@dataclass
class NumSolution:
    x: np.ndarray  # per flow
    f: np.ndarray  # (links, flows)
    h: np.ndarray  # per link
    u: np.ndarray  # (nodes, flows)
    v: np.ndarray  # per link
    utility: float  # sum of log x at the averaged primal
    dual: float  # best dual value seen
    gap: float  # (dual - utility) / max(1, |utility|)
    infeasibility: float  # worst constraint violation of the averaged primal
    iterations: int
    converged: bool
    dual_trace: list[float] = field(default_factory=list, repr=False)


def step_schedule(a: float = 20.0, b: float = 100.0):
    return lambda k: a / (b + k)


def solve_num(inst: NumInstance, iters: int = 20000, step=None, tol: float = 0.01,
              trace: bool = False) -> NumSolution:
    if iters < 1:
        raise ValueError("iters must be >= 1")
    step = step or step_schedule()
    topo, flows = inst.topology, inst.flows
    N, L, S = topo.n_nodes, topo.n_links, len(flows)
    src = np.array([topo.node_index[l.src] for l in topo.links])
    dst = np.array([topo.node_index[l.dst] for l in topo.links])
    o = np.array([topo.node_index[f.source] for f in flows])
    d = np.array([topo.node_index[f.dest] for f in flows])
    cols = np.arange(S)

    out_inc = np.zeros((N, L))
    in_inc = np.zeros((N, L))
    out_inc[src, np.arange(L)] = 1.0
    in_inc[dst, np.arange(L)] = 1.0
    cap = inst.capacity
    verts = inst.vertices()
    F_cap = float(max(l.rate for l in topo.links))
    x_cap = np.array([max(cap[out_inc[i] > 0].sum(), 1e-9) for i in o])

    live = np.ones((N, S))
    live[d, cols] = 0.0  # destinations absorb; their price is pinned at 0
    u = live.copy()
    v = np.zeros(L)

    start = iters // 2
    wsum = 0.0
    x_avg = np.zeros(S)
    f_avg = np.zeros((L, S))
    h_avg = np.zeros(L)
    best = math.inf
    dual_trace = []

    for k in range(iters):
        price = u[o, cols]
        with np.errstate(divide="ignore"):
            x = np.where(price > 0, np.minimum(x_cap, 1.0 / np.where(price > 0, price, 1.0)), x_cap)
        w = u[src] - u[dst] - v[:, None]
        f = np.where(w > 0, F_cap, 0.0)
        scores = verts @ v
        q = int(np.argmax(scores))
        h = verts[q]

        dual = float(np.sum(np.log(x) - price * x) + F_cap * np.sum(np.maximum(w, 0.0)) + scores[q])
        best = min(best, dual)
        if trace:
            dual_trace.append(dual)

        a = step(k)
        if k >= start:
            wsum += a
            x_avg += a * x
            f_avg += a * f
            h_avg += a * h

        g_u = out_inc @ f - in_inc @ f
        g_u[o, cols] -= x
        u = np.maximum(0.0, u - a * g_u) * live
        v = np.maximum(0.0, v - a * (h - f.sum(axis=1)))

    x_avg /= wsum
    f_avg /= wsum
    h_avg /= wsum
    utility = float(np.sum(np.log(x_avg)))

    # flow conservation away from destinations, link budget
    cons = out_inc @ f_avg - in_inc @ f_avg
    cons[o, cols] -= x_avg
    viol = max(float(np.max(np.abs(cons * live))), float(np.max(f_avg.sum(axis=1) - h_avg, initial=0.0)))
    gap = (best - utility) / max(1.0, abs(utility))
    return NumSolution(x_avg, f_avg, h_avg, u, v, utility, best, gap, viol, iters,
                       abs(gap) <= tol, dual_trace)
