"""Scenario loading, experiment orchestration and the command line."""

from .runner import execute, run
from .scenario import Scenario, load_scenario, parse_scenario

__all__ = ["Scenario", "execute", "load_scenario", "parse_scenario", "run"]
