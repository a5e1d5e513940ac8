"""Flow-level simulator of SDN load balancing across a host's network interfaces."""

from .config import LinkSpec, ScenarioConfig, parse_config
from .netsim import Simulation, WorkloadConfig, run

__all__ = ["LinkSpec", "ScenarioConfig", "Simulation", "WorkloadConfig", "parse_config", "run"]
__version__ = "0.1.0"
