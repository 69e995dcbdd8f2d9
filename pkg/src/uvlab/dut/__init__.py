"""Simulated device under test: statistical fault model and DUT interface."""
from .device import (
    CE_LOCATIONS,
    UE_LOCATIONS,
    DeviceInterface,
    ErrorEvent,
    Location,
    SimulatedDevice,
    SimulatedOutcome,
    digest,
    reference_output,
)
from .fault_model import (
    DEFAULT_CURVES,
    EffectCurve,
    FaultModel,
    effect_probabilities,
    expected_severity,
    observed_probabilities,
    sample_run_flags,
    sample_severities,
)

__all__ = [
    "CE_LOCATIONS", "UE_LOCATIONS", "DeviceInterface", "ErrorEvent", "Location", "SimulatedDevice",
    "SimulatedOutcome", "digest", "reference_output",
    "DEFAULT_CURVES", "EffectCurve", "FaultModel", "effect_probabilities", "expected_severity",
    "observed_probabilities", "sample_run_flags", "sample_severities",
]
