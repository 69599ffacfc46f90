from .algorithms import (
    REGISTRY,
    AlgorithmRegistry,
    CapacityView,
    CentralisedPlacement,
    DuplicateName,
    HorizontalDistributedPlacement,
    MetadataMissing,
    PlacementAlgorithm,
    UnknownAlgorithm,
    UnplaceablePR,
    VerticalDistributedPlacement,
    default_registry,
    fully_placed,
    place_v1,
    place_v2,
    place_v3,
    register_algorithm,
    required_units,
    resolve_algorithm,
)
from .external import MalformedResponse, Unreachable, external_placement
from .model import (
    InstancePlan,
    MalformedPR,
    PlacementOutput,
    PlacementRequest,
    SubsetWeight,
    pr_from_dict,
    pr_to_dict,
)
from .sizing import required_instances, subset_weights, vertical_allocation

__all__ = [
    "REGISTRY",
    "AlgorithmRegistry",
    "CapacityView",
    "CentralisedPlacement",
    "DuplicateName",
    "HorizontalDistributedPlacement",
    "InstancePlan",
    "MalformedPR",
    "MalformedResponse",
    "MetadataMissing",
    "PlacementAlgorithm",
    "PlacementOutput",
    "PlacementRequest",
    "SubsetWeight",
    "UnknownAlgorithm",
    "UnplaceablePR",
    "Unreachable",
    "VerticalDistributedPlacement",
    "default_registry",
    "external_placement",
    "fully_placed",
    "place_v1",
    "place_v2",
    "place_v3",
    "pr_from_dict",
    "pr_to_dict",
    "register_algorithm",
    "required_instances",
    "required_units",
    "resolve_algorithm",
    "subset_weights",
    "vertical_allocation",
]
