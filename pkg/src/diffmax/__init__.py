"""Backpressure and Diff-Max simulation for multi-hop wireless networks."""

from .engine import SimConfig, SimResult, Simulation, run, sweep
from .netmodel import Flow, Link, Topology, build_topology
from .policies import PolicyConfig

__all__ = ["Flow", "Link", "PolicyConfig", "SimConfig", "SimResult", "Simulation", "Topology",
           "build_topology", "run", "sweep"]
__version__ = "0.1.0"
