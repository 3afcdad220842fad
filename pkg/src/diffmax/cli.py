"""Command-line experiment runner: ``diffmax run|sweep|oracle --config FILE``.

Exit codes: 0 success, 2 unreadable/invalid config, 3 runtime invariant
breach, 4 MIS enumeration refused (topology over the link cap).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from .engine import ConfigError, SimConfig, SweepError, build_network, loss_vector, run, sweep
from .interference import EnumerationInfeasible
from .netmodel import InvariantError
from .oracle import NumInstance, solve_num, step_schedule

log = logging.getLogger("diffmax")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_ENUMERATION = 0, 2, 3, 4

RESULT_HEADER = ["run_id", "policy", "topology", "seed", "loss", "flow_id", "delivered", "throughput"]


def fmt(x: float) -> str:
    return f"{x:.6g}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _result_rows(run_id: int, policy: str, topology: str, seed: int, loss: float,
                 names: list[str], delivered: list[int], horizon_tp: list[float], total: float) -> list[list]:
    rows = [[run_id, policy, topology, seed, fmt(loss), name, d, fmt(tp)]
            for name, d, tp in zip(names, delivered, horizon_tp)]
    rows.append([run_id, policy, topology, seed, fmt(loss), "total", sum(delivered), fmt(total)])
    return rows


def _apply_overrides(sim: SimConfig, args) -> SimConfig:
    if args.seed is not None:
        sim = replace(sim, seed=args.seed)
    if args.policy:
        sim = replace(sim, policy=replace(sim.policy, kind=args.policy, mac_model=""))
    return sim


def cmd_run(exp: cfgmod.ExperimentFile, args, out: Path) -> int:
    sim = _apply_overrides(exp.sim, args)
    sim.validate()
    res = run(sim)
    rows = _result_rows(0, res.policy, res.topology, res.seed, res.loss, res.flow_names,
                        res.delivered, res.throughput, res.total_throughput)
    _write_csv(out / "results.csv", RESULT_HEADER, rows)
    print(f"{res.policy} on {res.topology}: total throughput {fmt(res.total_throughput)} pkt/slot "
          f"over {res.horizon} slots -> {out / 'results.csv'}")
    return EXIT_OK


def cmd_sweep(exp: cfgmod.ExperimentFile, args, out: Path) -> int:
    sim = _apply_overrides(exp.sim, args)
    losses = exp.losses or (sim.channel.loss,)
    seeds = (args.seed,) if args.seed is not None else (exp.seeds or (sim.seed,))
    policies = [args.policy] if args.policy else list(exp.policies or (sim.policy.kind,))
    res = sweep(sim, losses, seeds, policies, parallel=args.parallel)

    rows = []
    for run_id, r in enumerate(res.rows):
        rows += _result_rows(run_id, r.policy, sim.topology, r.seed, r.loss, r.flow_names,
                             r.delivered, r.throughput, r.total)
    _write_csv(out / "results.csv", RESULT_HEADER, rows)

    names = res.rows[0].flow_names
    agg_rows = []
    for a in res.aggregates:
        agg_rows.append([a.policy, sim.topology, fmt(a.loss), a.n, "total", fmt(a.total_mean), fmt(a.total_std)])
        for name, m, s in zip(names, a.flow_mean, a.flow_std):
            agg_rows.append([a.policy, sim.topology, fmt(a.loss), a.n, name, fmt(m), fmt(s)])
    _write_csv(out / "aggregate.csv",
               ["policy", "topology", "loss", "n", "flow_id", "mean_throughput", "std_throughput"], agg_rows)

    header = ["loss", "total_mean", "total_std"]
    for name in names:
        header += [f"{name}_mean", f"{name}_std"]
    for p in dict.fromkeys(a.policy for a in res.aggregates):
        series = []
        for a in res.aggregates:
            if a.policy != p:
                continue
            row = [fmt(a.loss), fmt(a.total_mean), fmt(a.total_std)]
            for m, s in zip(a.flow_mean, a.flow_std):
                row += [fmt(m), fmt(s)]
            series.append(row)
        _write_csv(out / f"series_{p}.csv", header, series)
    print(f"{len(res.rows)} runs, {len(res.aggregates)} aggregates -> {out}")
    return EXIT_OK


def cmd_oracle(exp: cfgmod.ExperimentFile, args, out: Path) -> int:
    sim = exp.sim
    sim.validate()
    topo, flows = build_network(sim)
    inst = NumInstance.build(topo, flows, loss_vector(topo, sim.channel), cap=sim.mis_cap)
    opts = exp.oracle
    sol = solve_num(inst, iters=opts.get("iterations", 20000),
                    step=step_schedule(opts.get("step_a", 20.0), opts.get("step_b", 100.0)),
                    tol=opts.get("tolerance", 0.01))
    rows = [["x", f.name, fmt(x)] for f, x in zip(flows, sol.x)]
    rows += [
        ["utility", "", fmt(sol.utility)],
        ["dual", "", fmt(sol.dual)],
        ["gap", "", fmt(sol.gap)],
        ["infeasibility", "", fmt(sol.infeasibility)],
        ["iterations", "", sol.iterations],
        ["converged", "", int(sol.converged)],
        ["region", "links", topo.n_links],
        ["region", "maximal_sets", inst.mis.Q],
    ]
    rows += [["capacity", l.name, fmt(c)] for l, c in zip(topo.links, inst.capacity)]
    _write_csv(out / "oracle.csv", ["quantity", "key", "value"], rows)
    sys.stdout.write((out / "oracle.csv").read_text())
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diffmax", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, metavar="PATH")
    p.add_argument("--seed", type=int, default=None, metavar="N")
    p.add_argument("--out", default=None, metavar="DIR")
    p.add_argument("--policy", default=None, metavar="NAME")
    p.add_argument("--parallel", type=int, default=1, metavar="N")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DIFFMAX_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        exp = cfgmod.load(args.config)
    except cfgmod.ConfigParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or exp.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](exp, args, out)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"error: {exp.path}: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except EnumerationInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENUMERATION
    except (InvariantError, SweepError) as exc:
        cause = exc.__cause__ if isinstance(exc, SweepError) else exc
        if isinstance(cause, EnumerationInfeasible):
            print(f"error: {cause}", file=sys.stderr)
            return EXIT_ENUMERATION
        print(f"error: invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
