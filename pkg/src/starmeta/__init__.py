"""Uplink NOMA through cascaded active STAR surfaces, with DDPG and meta-regularized DDPG allocation agents."""
from .channel import ChannelSet, Topology, default_topology, path_loss, sample_channels
from .config import ExperimentConfig, apply_scenario, desk_config, full_config, load_config
from .mdp import EnvParams, Environment, encode_state, project_action
from .physics import FeasibleAction, StarRisProfile, check_constraints, effective_channel, rate_report

__version__ = "0.1.0"
