"""Undervolting characterization harness with a simulated device under test."""
from .model import (
    EFFECTS,
    XGENE2,
    CharacterizationSetup,
    ChipSpec,
    CoreSelection,
    DomainKind,
    Effect,
    EffectCounts,
    EffectSet,
    SeverityWeights,
    VFPoint,
    enumerate_vf_grid,
    power_gain,
    severity,
)

__version__ = "0.1.0"

__all__ = [
    "EFFECTS", "XGENE2", "CharacterizationSetup", "ChipSpec", "CoreSelection", "DomainKind", "Effect",
    "EffectCounts", "EffectSet", "SeverityWeights", "VFPoint", "enumerate_vf_grid", "power_gain", "severity",
]
