"""Distributed sum-rate maximization over OFDM interference channels with Lorentzian RIS.

Each user jointly allocates power over subcarriers and configures its own
frequency-selective metasurface; users coordinate only through exchanged
interference prices.
"""

from .channel import ChannelSet, channel_hash, generate_channels
from .dsca import DscaResult, run
from .metasurface import LorentzianParams, lorentzian_response, omega_grid
from .rate_model import NetworkState, sum_rate
from .scenario import AlgoParams, ConfigError, PddParams, ScenarioConfig, default_scenario, load_config

__version__ = "0.1.0"

__all__ = [
    "AlgoParams",
    "ChannelSet",
    "ConfigError",
    "DscaResult",
    "LorentzianParams",
    "NetworkState",
    "PddParams",
    "ScenarioConfig",
    "channel_hash",
    "default_scenario",
    "generate_channels",
    "load_config",
    "lorentzian_response",
    "omega_grid",
    "run",
    "sum_rate",
]
