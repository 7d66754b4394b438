"""Piecewise-stationary episodic RL: detection-restart wrappers, change
detectors, probe construction, base learners, benchmark environments and an
experiment harness with an exact dynamic-regret oracle."""

from psrl.mdp import (
    MDPDims,
    FeatureMap,
    SegmentModel,
    PSModel,
    ValueTable,
    one_hot_feature_map,
    optimal_values,
    policy_values,
    simulate_episode,
    dynamic_regret,
)

__version__ = "0.1.0"

__all__ = [
    "MDPDims",
    "FeatureMap",
    "SegmentModel",
    "PSModel",
    "ValueTable",
    "one_hot_feature_map",
    "optimal_values",
    "policy_values",
    "simulate_episode",
    "dynamic_regret",
]
