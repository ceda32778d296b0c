"""Zoom-quantized control over an erasure channel, with random-time drift tools."""
from .analysis import (
    check_conditions,
    estimate_drift_at_stops,
    estimate_moment,
    estimate_stopping_tail,
    min_bins_for_second_moment,
    tail_lower_bound,
    tail_upper_bound,
)
from .channel import ChannelParams
from .config import ExperimentConfig, load_config, reference_scenario
from .errors import (
    ConfigError,
    DriftstabError,
    EnumerationLimit,
    InputError,
    NumericEscape,
    StructureError,
    SynthesisError,
)
from .loop import LoopParams, LoopState, loop_step, simulate
from .plant import PlantParams, RandomStream
from .quantizer import QuantizerConfig, snap_gains_to_lattice

__version__ = "0.1.0"

__all__ = [
    "ChannelParams", "ConfigError", "DriftstabError", "EnumerationLimit", "ExperimentConfig",
    "InputError", "LoopParams", "LoopState", "NumericEscape", "PlantParams", "QuantizerConfig",
    "RandomStream", "StructureError", "SynthesisError", "check_conditions",
    "estimate_drift_at_stops", "estimate_moment", "estimate_stopping_tail", "load_config",
    "loop_step", "min_bins_for_second_moment", "reference_scenario", "simulate",
    "snap_gains_to_lattice", "tail_lower_bound", "tail_upper_bound",
]
