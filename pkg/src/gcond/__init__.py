"""Gradient arbitration for multi-objective training on accumulated gradients."""

from gcond.accumulator import AccumMode, Accumulator, task_for_microstep
from gcond.conductor import (
    ConductorConfig,
    ConductorState,
    ConflictReport,
    GradientConductor,
    Zone,
    resolve,
    resolve_as_pcgrad,
)

__all__ = [
    "AccumMode",
    "Accumulator",
    "ConductorConfig",
    "ConductorState",
    "ConflictReport",
    "GradientConductor",
    "Zone",
    "resolve",
    "resolve_as_pcgrad",
    "task_for_microstep",
]

__version__ = "0.1.0"
