"""Wire documents shared by simulation mode and service mode.

Bodies are JSON. `encode` is the canonical text form (two-space indent, keys in
the order the serializers emit them, trailing newline) used for golden files.
"""

from __future__ import annotations

import json
from typing import Any, Callable, Mapping

from ..deployment import deployment_info_from_dict, deployment_info_to_dict
from ..fabric import cluster_data_from_dict, cluster_data_to_dict
from ..placement.model import REQUIRED_PR_FIELDS, pr_from_dict, pr_to_dict

PLACEMENT_REQUESTS_PATH = "/placement-requests"
CLUSTER_DATA_PATH = "/cluster-data"
DEPLOYMENT_INFO_PATH = "/deployment-info"
CLUSTER_HEADER = "cluster"

KINDS: dict[str, tuple[Callable[[Mapping[str, Any]], Any], Callable[[Any], dict[str, Any]]]] = {
    "placement-request": (pr_from_dict, pr_to_dict),
    "cluster-data": (cluster_data_from_dict, cluster_data_to_dict),
    "deployment-info": (deployment_info_from_dict, deployment_info_to_dict),
}


def encode(doc: Mapping[str, Any]) -> str:
    return json.dumps(doc, indent=2) + "\n"


def decode(text: str | bytes) -> Any:
    return json.loads(text)


def roundtrip(kind: str, text: str) -> str:
    """Parse a wire document into its domain object and serialize it back."""
    parse, dump = KINDS[kind]
    return encode(dump(parse(decode(text))))


__all__ = ["REQUIRED_PR_FIELDS", "KINDS", "encode", "decode", "roundtrip"]
