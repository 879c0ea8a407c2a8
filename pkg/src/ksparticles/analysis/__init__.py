"""Measurements on simulated output."""

from .clusters import (
    DEFAULT_EPS_COLL,
    DEFAULT_EPS_EXPL,
    DEFAULT_EPS_LINK,
    DEFAULT_EPS_SEP,
    CollisionEvent,
    ExplosionReport,
    Inconclusive,
    UnionFind,
    census_summary,
    collision_census,
    detect_clusters,
    detect_explosion,
)
from .decomposition import (
    DecompositionReport,
    DriftReport,
    decomposition_check,
    drift_diagnostic,
    ensemble_statistics,
    reconstruction_error,
    sphere_dispersion_drift,
)
from .hitting import HittingResult, hitting_probability
from .mass import mass_probe
from .stats import besq_cdf, ks_test

__all__ = [
    "DEFAULT_EPS_COLL",
    "DEFAULT_EPS_EXPL",
    "DEFAULT_EPS_LINK",
    "DEFAULT_EPS_SEP",
    "CollisionEvent",
    "DecompositionReport",
    "DriftReport",
    "ExplosionReport",
    "HittingResult",
    "Inconclusive",
    "UnionFind",
    "besq_cdf",
    "census_summary",
    "collision_census",
    "decomposition_check",
    "detect_clusters",
    "detect_explosion",
    "drift_diagnostic",
    "ensemble_statistics",
    "hitting_probability",
    "ks_test",
    "mass_probe",
    "reconstruction_error",
    "sphere_dispersion_drift",
]
