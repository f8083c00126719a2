"""Particle-based Bernoulli map-feature filter with sum-product data
association and the two monostatic/bistatic fusion schedules."""

from .association import (
    AssociationTable,
    MeasurementGroup,
    NumericalUnderflow,
    association_update,
    bi_group,
    mo_group,
)
from .beliefs import (
    BirthConfig,
    FilterState,
    MapEstimate,
    PmfBelief,
    TransitionConfig,
    extract_map,
    merge_duplicates,
    predict_cross_link,
    predict_legacy_same_link,
    propose_new_pmfs,
    prune,
)
from .schemes import (
    EpochMismatch,
    InferenceConfig,
    METHODS,
    run_method,
    stage_rng,
    step_dominant_fusion,
    step_sequential_fusion,
    step_single_link,
)

__all__ = [
    "AssociationTable",
    "BirthConfig",
    "EpochMismatch",
    "FilterState",
    "InferenceConfig",
    "MapEstimate",
    "METHODS",
    "MeasurementGroup",
    "NumericalUnderflow",
    "PmfBelief",
    "TransitionConfig",
    "association_update",
    "bi_group",
    "mo_group",
    "extract_map",
    "merge_duplicates",
    "predict_cross_link",
    "predict_legacy_same_link",
    "propose_new_pmfs",
    "prune",
    "run_method",
    "stage_rng",
    "step_dominant_fusion",
    "step_sequential_fusion",
    "step_single_link",
]
