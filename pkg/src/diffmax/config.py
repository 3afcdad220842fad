"""Experiment files: INI-style sections of ``key = value`` lines.

Example::

    [experiment]
    topology = triangle
    horizon = 10000
    seed = 1

    [policy]
    kind = diffmax
    f_max = 4

    [channel]
    loss = 0.2
    lossy = A-C

    [sweep]
    losses = 0, 0.1, 0.2, 0.3, 0.4, 0.5
    seeds = 1-10
    policies = backpressure, diffmax

Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .engine import ChannelConfig, SimConfig, TrafficConfig
from .flow_control import FlowControlConfig
from .policies import PolicyConfig


class ConfigParseError(ValueError):
    def __init__(self, path: str, line: int, col: int, msg: str):
        self.path, self.line, self.col, self.msg = str(path), line, col, msg
        super().__init__(f"{path}:{line}:{col}: {msg}")


def _int(s: str) -> int:
    return int(s)


def _float(s: str) -> float:
    return float(s)


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_int(s: str) -> int | None:
    return None if s.strip().lower() in ("", "none", "off") else int(s)


def _list(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in _list(s))


def _seeds(s: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in _list(s):
        m = re.fullmatch(r"(-?\d+)\s*-\s*(-?\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    return tuple(out)


SCHEMA = {
    "experiment": {
        "topology": str, "topology_seed": _int, "interference": str, "links": _list, "flows": _list,
        "link_rate": _int, "horizon": _int, "seed": _int, "sample_every": _int,
        "buffer_cap": _opt_int, "mis_cap": _int, "debug": _bool, "output": str,
    },
    "policy": {
        "kind": str, "f_max": _int, "routing_epoch": _int, "scheduling_mode": str,
        "mac_model": str, "staleness": _int,
    },
    "flow_control": {"m": _float, "r_max": _int, "epoch": _int, "utility": str},
    "channel": {"loss": _float, "lossy": _list, "window": _int},
    "traffic": {"mode": str, "rates": _floats, "flow_control": _bool},
    "sweep": {"losses": _floats, "seeds": _seeds, "policies": _list},
    "oracle": {"iterations": _int, "step_a": _float, "step_b": _float, "tolerance": _float},
}

_FIELD = {
    ("policy", "f_max"): "F_max",
    ("flow_control", "m"): "M",
    ("flow_control", "r_max"): "R_max",
}


@dataclass
class ExperimentFile:
    path: str
    sim: SimConfig
    output: str = "results"
    losses: tuple[float, ...] = ()
    seeds: tuple[int, ...] = ()
    policies: tuple[str, ...] = ()
    oracle: dict = field(default_factory=dict)


def _locate(lines: list[str], section: str, key: str | None) -> tuple[int, int]:
    cur = None
    for n, raw in enumerate(lines, 1):
        text = raw.strip()
        m = re.fullmatch(r"\[\s*([^\]]+?)\s*\]", text)
        if m:
            cur = m.group(1).strip().lower()
            if key is None and cur == section:
                return n, raw.index("[") + 1
            continue
        if cur == section and key is not None:
            m = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", raw)
            if m and m.group(1).strip().lower() == key:
                return n, m.start(1) + 1
    return 1, 1


def load(path: str | Path) -> ExperimentFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(str(path), 0, 0, f"cannot read file: {exc.strerror or exc}") from exc
    return parse(text, str(path))


def parse(text: str, path: str = "<config>") -> ExperimentFile:
    lines = text.splitlines()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=path)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else 1
        raise ConfigParseError(path, line, 1, "malformed line") from exc
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError(path, exc.lineno, 1, "key outside of any [section]") from exc
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigParseError(path, exc.lineno or 1, 1, exc.message.split(":")[-1].strip()) from exc

    values: dict[str, dict] = {}
    for section in cp.sections():
        sec = section.strip().lower()
        if sec not in SCHEMA:
            line, col = _locate(lines, sec, None)
            raise ConfigParseError(path, line, col, f"unknown section [{section}]")
        values[sec] = {}
        for key, raw in cp.items(section):
            if key not in SCHEMA[sec]:
                line, col = _locate(lines, sec, key)
                raise ConfigParseError(path, line, col, f"unknown key {key!r} in [{sec}]")
            try:
                values[sec][key] = SCHEMA[sec][key](raw)
            except ValueError as exc:
                line, col = _locate(lines, sec, key)
                raise ConfigParseError(path, line, col, f"bad value for {key}: {exc}") from exc

    def section(name: str) -> dict:
        return {_FIELD.get((name, k), k): v for k, v in values.get(name, {}).items()}

    exp = section("experiment")
    output = exp.pop("output", "results")
    sim = SimConfig(
        policy=PolicyConfig(**section("policy")),
        flow_control=FlowControlConfig(**section("flow_control")),
        channel=ChannelConfig(**section("channel")),
        traffic=TrafficConfig(**section("traffic")),
        **exp,
    )
    sw = section("sweep")
    return ExperimentFile(path, sim, output, sw.get("losses", ()), sw.get("seeds", ()),
                          sw.get("policies", ()), section("oracle"))
