"""Extreme-value estimation of collision probabilities from surrogate safety measures."""

from evtss.dataset import (
    ManeuverDataset,
    ManeuverRecord,
    Series,
    empirical_collision_probability,
    filter_threshold,
    load_csv,
    negate,
    normalize_to_sample_max,
)
from evtss.dist import GevParams, GpdParams
from evtss.fit_uni import NonStationarySpec, UniFit, fit_gev, lr_test
from evtss.fit_pot import PotFit, fit_gpd
from evtss.estimate import ProbEstimate

__version__ = "0.1.0"

__all__ = [
    "GevParams",
    "GpdParams",
    "ManeuverDataset",
    "ManeuverRecord",
    "NonStationarySpec",
    "PotFit",
    "ProbEstimate",
    "Series",
    "UniFit",
    "empirical_collision_probability",
    "filter_threshold",
    "fit_gev",
    "fit_gpd",
    "load_csv",
    "lr_test",
    "negate",
    "normalize_to_sample_max",
]
