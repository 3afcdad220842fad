import numpy as np
import pytest

from diffmax.engine import (ChannelConfig, ConfigError, SimConfig, Simulation, SweepError, TrafficConfig,
                            loss_vector, build_network, run, sweep)
from diffmax.netmodel import InvariantError
from diffmax.policies import PolicyConfig

KINDS = ["backpressure", "diffmax", "diffsubmax", "wdiffsubmax"]


def single_link(kind, **kw):
    return SimConfig(topology="custom", links=("A>B",), flows=("A>B",), policy=PolicyConfig(kind=kind), **kw)


def test_zero_horizon_rejected():
    with pytest.raises(ConfigError):
        Simulation(SimConfig(horizon=0))


def test_one_slot_empty_run():
    res = run(SimConfig(horizon=1, traffic=TrafficConfig(mode="cbr", rates=(0.0,), flow_control=False)))
    assert res.delivered == [0, 0] and res.injected == [0, 0] and res.total_throughput == 0


@pytest.mark.parametrize("kind", KINDS)
def test_isolated_link_carries_one_packet_per_slot(kind):
    res = run(single_link(kind, horizon=10000))
    assert res.total_throughput == pytest.approx(1.0, rel=0.02)


@pytest.mark.parametrize("kind", KINDS)
def test_lossy_isolated_link(kind):
    res = run(single_link(kind, horizon=10000, channel=ChannelConfig(loss=0.25)))
    assert res.total_throughput == pytest.approx(0.75, abs=0.03)


@pytest.mark.parametrize("cfg", [
    SimConfig(horizon=2000, seed=4, channel=ChannelConfig(loss=0.3, lossy=("A-C",))),
    SimConfig(topology="diamond", horizon=2000, seed=9, channel=ChannelConfig(loss=0.2),
              policy=PolicyConfig(kind="wdiffsubmax")),
    SimConfig(topology="diamond", horizon=2000, seed=2, channel=ChannelConfig(loss=0.1),
              policy=PolicyConfig(kind="diffmax", scheduling_mode="estimate"),
              traffic=TrafficConfig(mode="poisson", rates=(0.3, 0.3))),
], ids=["triangle-diffmax", "diamond-wdiff", "diamond-estimate-poisson"])
def test_reruns_are_bit_identical(cfg):
    a, b = run(cfg), run(cfg)
    assert a.delivered == b.delivered and a.injected == b.injected
    assert np.array_equal(a.node_u, b.node_u) and np.array_equal(a.node_v, b.node_v)


def test_seed_changes_outcome():
    cfg = SimConfig(horizon=2000, channel=ChannelConfig(loss=0.3))
    assert run(cfg).delivered != run(SimConfig(horizon=2000, seed=2, channel=ChannelConfig(loss=0.3))).delivered


@pytest.mark.parametrize("kind", KINDS)
def test_debug_checks_pass_on_grid(kind):
    cfg = SimConfig(topology="grid", topology_seed=3, horizon=200, policy=PolicyConfig(kind=kind),
                    channel=ChannelConfig(loss=0.2), debug=True, mis_cap=64)
    res = run(cfg)
    assert res.audit_ok and sum(res.delivered) > 0


def test_buffer_cap_drops_and_balances():
    cfg = SimConfig(horizon=500, buffer_cap=3, sample_every=1,
                    traffic=TrafficConfig(mode="cbr", rates=(2.0,), flow_control=False))
    res = run(cfg)
    assert sum(res.dropped) > 0 and res.audit_ok


def test_arrival_modes_hit_their_rate():
    for mode in ("cbr", "bernoulli", "poisson"):
        res = run(SimConfig(horizon=5000, traffic=TrafficConfig(mode=mode, rates=(0.2,), flow_control=False)))
        assert np.allclose(res.injection_rate, 0.2, atol=0.02), mode


def test_config_errors_listed():
    bad = SimConfig(horizon=0, channel=ChannelConfig(loss=2.0), policy=PolicyConfig(F_max=0),
                    traffic=TrafficConfig(mode="saturated", flow_control=False))
    problems = bad.problems()
    assert len(problems) >= 4


def test_lossy_spec_parsing():
    topo, _ = build_network(SimConfig())
    p = loss_vector(topo, ChannelConfig(loss=0.4, lossy=("A-C",)))
    assert sorted(topo.links[k].name for k, x in enumerate(p) if x) == ["A>C", "C>A"]
    p = loss_vector(topo, ChannelConfig(loss=0.4, lossy=("A>C",)))
    assert [topo.links[k].name for k, x in enumerate(p) if x] == ["A>C"]
    with pytest.raises(ValueError):
        loss_vector(topo, ChannelConfig(loss=0.4, lossy=("A-Z",)))


def test_custom_topology_needs_known_nodes():
    assert SimConfig(topology="custom", links=("A>B",), flows=("A>C",)).problems()


def test_sweep_single_cell():
    res = sweep(SimConfig(horizon=200), [0.0], [1])
    assert len(res.rows) == 1 and len(res.aggregates) == 1


def test_sweep_counts():
    res = sweep(SimConfig(horizon=100), [0, 0.25, 0.5], range(1, 11), ["backpressure", "diffmax"])
    assert len(res.rows) == 60 and len(res.aggregates) == 6
    agg = res.aggregate("diffmax", 0.25)
    assert agg.n == 10 and len(agg.flow_mean) == 2


def test_sweep_parallel_matches_serial():
    base = SimConfig(horizon=300)
    a = sweep(base, [0, 0.3], [1, 2], ["diffmax"], parallel=1)
    b = sweep(base, [0, 0.3], [1, 2], ["diffmax"], parallel=2)
    assert [r.delivered for r in a.rows] == [r.delivered for r in b.rows]


def test_sweep_wraps_failures():
    base = SimConfig(topology="grid", topology_seed=7, horizon=10)
    with pytest.raises(SweepError):
        sweep(base, [0.0], [1])


def test_backpressure_monotone_in_loss():
    base = SimConfig(horizon=5000, channel=ChannelConfig(lossy=("A-C",)), policy=PolicyConfig(kind="backpressure"))
    res = sweep(base, [0.0, 0.2, 0.4, 0.6], range(1, 6))
    aggs = res.aggregates
    for lo, hi in zip(aggs, aggs[1:]):
        pooled = np.sqrt((lo.total_std ** 2 + hi.total_std ** 2) / 2)
        assert hi.total_mean <= lo.total_mean + pooled


def test_stale_view_default_and_zero():
    for k in (0, 1, 3):
        res = run(SimConfig(horizon=1000, policy=PolicyConfig(staleness=k)))
        assert res.total_throughput > 0.9
