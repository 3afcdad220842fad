"""Reference computations that share no code with the package under test."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog


def brute_force_independent(n_links, pairs):
    clash = {frozenset(p) for p in pairs}
    out = []
    for r in range(n_links + 1):
        for combo in itertools.combinations(range(n_links), r):
            if all(frozenset((a, b)) not in clash for a, b in itertools.combinations(combo, 2)):
                out.append(combo)
    return out


def brute_force_mis(n_links, pairs):
    """Maximal independent sets by checking every subset."""
    ind = brute_force_independent(n_links, pairs)
    ind_sets = [set(s) for s in ind]
    maximal = [s for s, ss in zip(ind, ind_sets) if not any(ss < other for other in ind_sets)]
    return sorted(tuple(sorted(s)) for s in maximal)


def brute_force_max_value(n_links, pairs, weight):
    return max(sum(weight[l] for l in s) for s in brute_force_independent(n_links, pairs))


def _lp_max_second(nodes, links, caps, flows, ind_sets, x1):
    """Largest x2 given x1 over the time-sharing rate region (None if x1 infeasible)."""
    L, S, Q = len(links), len(flows), len(ind_sets)
    # variables: alpha (Q), f (L*S), x2
    nv = Q + L * S + 1
    fi = lambda l, s: Q + l * S + s
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    row = np.zeros(nv)
    row[:Q] = 1.0
    A_ub.append(row); b_ub.append(1.0)
    for l in range(L):
        row = np.zeros(nv)
        for s in range(S):
            row[fi(l, s)] = 1.0
        for q, members in enumerate(ind_sets):
            if l in members:
                row[q] = -caps[l]
        A_ub.append(row); b_ub.append(0.0)
    for s, (src, dst) in enumerate(flows):
        for n in nodes:
            if n == dst:
                continue
            row = np.zeros(nv)
            for l, (a, b) in enumerate(links):
                if a == n:
                    row[fi(l, s)] += 1.0
                if b == n:
                    row[fi(l, s)] -= 1.0
            rhs = 0.0
            if n == src:
                if s == 0:
                    rhs = x1
                else:
                    row[-1] = -1.0
            A_eq.append(row); b_eq.append(rhs)
    c = np.zeros(nv)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.array(A_ub), b_ub=b_ub, A_eq=np.array(A_eq), b_eq=b_eq,
                  bounds=[(0, None)] * nv, method="highs")
    return -res.fun if res.status == 0 else None


def grid_num_two_flows(nodes, links, caps, flows, pairs, resolution=0.01):
    """Maximize log x1 + log x2 by scanning x1 on a grid and solving an LP for x2."""
    ind_sets = brute_force_mis(len(links), pairs)
    best = (-math.inf, None)
    x1 = resolution
    while True:
        x2 = _lp_max_second(nodes, links, caps, flows, ind_sets, x1)
        if x2 is None:
            break
        if x2 > 1e-12:
            val = math.log(x1) + math.log(x2)
            if val > best[0]:
                best = (val, (x1, x2))
        x1 = round(x1 + resolution, 10)
    return best[1]


def rate_feasible(nodes, links, caps, flows, pairs, rates):
    """Whether the rate vector fits the time-sharing region (LP feasibility)."""
    ind_sets = brute_force_mis(len(links), pairs)
    if len(rates) != 2:
        raise ValueError("two flows only")
    x2 = _lp_max_second(nodes, links, caps, flows, ind_sets, rates[0])
    return x2 is not None and x2 >= rates[1] - 1e-9
