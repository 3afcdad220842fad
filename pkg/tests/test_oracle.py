import itertools
import time

import numpy as np
import pytest

from diffmax.netmodel import Flow, Link, Topology, build_topology
from diffmax.oracle import NumInstance, solve_num, step_schedule
from oracles import rate_feasible

# Frozen from oracles.grid_num_two_flows at 0.01 resolution.
TRIANGLE_GRID = (0.50, 0.50)
DIAMOND_AB_HALF_GRID = (0.37, 0.38)


def endpoint_pairs(topo):
    return [(a, b) for a, b in itertools.combinations(range(topo.n_links), 2)
            if {topo.links[a].src, topo.links[a].dst} & {topo.links[b].src, topo.links[b].dst}]


def solve(kind, loss=None, **kw):
    topo, flows = build_topology(kind)
    inst = NumInstance.build(topo, flows, loss)
    return topo, flows, inst, solve_num(inst, **kw)


def test_single_link_saturates():
    topo = Topology("AB", [Link("A", "B")])
    sol = solve_num(NumInstance.build(topo, [Flow(0, "A", "B")], [0.5]))
    assert sol.x[0] == pytest.approx(0.5, rel=0.01)


def test_triangle_matches_grid_oracle():
    t0 = time.perf_counter()
    *_, sol = solve("triangle", iters=20000)
    assert time.perf_counter() - t0 < 10
    assert sol.x == pytest.approx(TRIANGLE_GRID, rel=0.02)
    assert abs(sol.gap) <= 0.01 and sol.converged


def test_triangle_symmetry():
    *_, sol = solve("triangle")
    assert abs(sol.x[0] - sol.x[1]) <= 1e-3


def test_diamond_lossy_edge_matches_grid_oracle():
    topo, _ = build_topology("diamond")
    loss = [0.5 if {l.src, l.dst} == {"A", "B"} else 0.0 for l in topo.links]
    *_, sol = solve("diamond", loss)
    assert sol.x == pytest.approx(DIAMOND_AB_HALF_GRID, rel=0.02)
    assert sol.converged


def test_weak_duality_every_iterate():
    *_, sol = solve("diamond", iters=4000, trace=True)
    assert min(sol.dual_trace) >= sol.utility - 1e-9
    assert sol.dual == pytest.approx(min(sol.dual_trace))


@pytest.mark.parametrize("kind,p", [("triangle", 0.0), ("triangle", 0.3), ("diamond", 0.0), ("diamond", 0.4)])
def test_rates_feasible_after_tolerance_shrink(kind, p):
    topo, flows = build_topology(kind)
    loss = [p] * topo.n_links
    sol = solve_num(NumInstance.build(topo, flows, loss))
    caps = [(1 - p) * l.rate for l in topo.links]
    shrunk = [x / (1 + 0.01) for x in sol.x]
    assert rate_feasible(topo.nodes, [(l.src, l.dst) for l in topo.links], caps,
                         [(f.source, f.dest) for f in flows], endpoint_pairs(topo), shrunk)


def test_vertices_scale_by_capacity():
    topo, flows = build_topology("triangle")
    inst = NumInstance.build(topo, flows, [0.5] * 6)
    v = inst.vertices()
    assert v.shape == (6, 6)
    assert np.allclose(v.sum(axis=1), 0.5)


def test_bad_inputs():
    topo, flows = build_topology("triangle")
    with pytest.raises(ValueError):
        NumInstance.build(topo, flows, [0.0])
    with pytest.raises(ValueError):
        solve_num(NumInstance.build(topo, flows), iters=0)


def test_custom_step_schedule():
    *_, sol = solve("triangle", iters=2000, step=step_schedule(5.0, 50.0))
    assert sol.iterations == 2000
