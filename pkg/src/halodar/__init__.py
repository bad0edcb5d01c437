"""Desk-scale analysis chain for opportunistic OFDM radar debris
detection from a lunar halo-orbit communications relay."""

from .params import SystemParams, Target
from .orbits import (Cr3bpSystem, OrbitSolution, EncounterProfile,
                     build_gateway_orbit, run_separation_campaign)
from .detect import DetectionSpec, DetectionOutcome, solve_rmax, swerling_threshold

__version__ = "0.1.0"

__all__ = [
    "SystemParams", "Target", "Cr3bpSystem", "OrbitSolution",
    "EncounterProfile", "build_gateway_orbit", "run_separation_campaign",
    "DetectionSpec", "DetectionOutcome", "solve_rmax", "swerling_threshold",
    "__version__",
]
