"""Multi-hop RIS channel simulation, phase optimization, model selection and distillation."""

from .channel import ChannelSet, PhasePlan, cascade_gain, cascade_gains, rate, sample_channels
from .scenario import ModelCatalog, ScenarioConfig, default_scenario, load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = ["ChannelSet", "PhasePlan", "cascade_gain", "cascade_gains", "rate", "sample_channels",
           "ModelCatalog", "ScenarioConfig", "default_scenario", "load_scenario", "save_scenario"]
