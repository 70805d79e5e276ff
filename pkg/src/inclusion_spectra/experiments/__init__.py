"""Experiment drivers probing the spectral claims at desk scale."""
from .bands import gap_scan, lifting_curve, squeeze_check
from .config import ExperimentConfig, ExperimentReport, InvariantViolation
from .localization import combes_thomas_probe, dynamical_moments, projector_decay, suitability_mc
from .statistics import ise_mc, wegner_mc

DRIVERS = {
    "gap-scan": gap_scan,
    "squeeze": squeeze_check,
    "lifting": lifting_curve,
    "wegner": wegner_mc,
    "ise": ise_mc,
    "combes-thomas": combes_thomas_probe,
    "suitability": suitability_mc,
    "projector-decay": projector_decay,
    "dynamics": dynamical_moments,
}

__all__ = [
    "DRIVERS",
    "ExperimentConfig",
    "ExperimentReport",
    "InvariantViolation",
    "combes_thomas_probe",
    "dynamical_moments",
    "gap_scan",
    "ise_mc",
    "lifting_curve",
    "projector_decay",
    "squeeze_check",
    "suitability_mc",
    "wegner_mc",
]
