"""Transport-layer flow control: per-epoch injections from source backlogs.

At each epoch the source solves

    max  sum_s M*g(x_s) - U_s*x_s    s.t.  sum_s x_s <= R_max,  x_s >= 0

for the flows it originates. With g = log the maximizer is
x_s = M / (U_s + mu), mu >= 0 the smallest multiplier making the sum fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping


@dataclass
class FlowControlConfig:
    M: float = 200.0
    R_max: int = 20
    epoch: int = 8  # slots
    utility: str = "log"

    def problems(self) -> list[str]:
        out = []
        if not self.M > 0:
            out.append(f"flow control M must be > 0 (got {self.M})")
        if self.R_max < 1:
            out.append(f"flow control R_max must be >= 1 (got {self.R_max})")
        if self.epoch < 1:
            out.append(f"flow control epoch must be >= 1 (got {self.epoch})")
        if self.utility not in UTILITIES:
            out.append(f"unknown utility {self.utility!r}")
        return out


# inverse marginal utility (g')^{-1}(y), y > 0
UTILITIES = {
    "log": lambda y: 1.0 / y,
}


def _demand(utility: str, M: float, u: float, mu: float, cap: float) -> float:
    price = (u + mu) / M
    if price <= 0:
        return cap
    return min(cap, UTILITIES[utility](price))


def optimal_rates(U: Mapping, cfg: FlowControlConfig) -> dict:
    """Continuous maximizer of the flow-control objective.

    A zero backlog makes the log objective unbounded in x, so each demand is
    capped at ``R_max`` before the shared constraint is applied.
    """
    cap = float(cfg.R_max)
    keys = list(U)
    if not keys:
        return {}

    def total(mu: float) -> float:
        return sum(_demand(cfg.utility, cfg.M, U[s], mu, cap) for s in keys)

    if total(0.0) <= cap:
        mu = 0.0
    else:
        lo, hi = 0.0, 1.0
        while total(hi) > cap:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if total(mid) > cap:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * max(1.0, hi):
                break
        mu = hi
    return {s: _demand(cfg.utility, cfg.M, U[s], mu, cap) for s in keys}


def objective(x: Mapping, U: Mapping, M: float) -> float:
    total = 0.0
    for s, xs in x.items():
        if xs <= 0:
            return float("-inf")
        total += M * math.log(xs) - U[s] * xs
    return total


def flow_control_rate(U: Mapping, cfg: FlowControlConfig, residue: dict | None = None,
                      reservoir: Mapping | None = None) -> dict:
    """Integer packets to inject this epoch, per flow.

    Fractional parts accumulate in ``residue`` (updated in place) and are
    paid out in later epochs; injections never exceed ``reservoir``.
    """
    x = optimal_rates(U, cfg)
    out = {}
    for s, xs in x.items():
        carry = residue.get(s, 0.0) if residue is not None else 0.0
        want = xs + carry
        n = int(math.floor(want + 1e-9))
        if reservoir is not None:
            n = min(n, reservoir[s])
        if residue is not None:
            # unpaid demand is not banked beyond one packet
            residue[s] = min(max(want - n, 0.0), 1.0)
        out[s] = n
    excess = sum(out.values()) - cfg.R_max
    while excess > 0:
        s = max(out, key=lambda k: out[k])
        out[s] -= 1
        excess -= 1
    return out
