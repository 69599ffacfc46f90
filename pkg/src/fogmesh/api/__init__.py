"""The three control-engine APIs: wire schemas and the HTTP service."""

from .schema import (
    CLUSTER_DATA_PATH,
    CLUSTER_HEADER,
    DEPLOYMENT_INFO_PATH,
    PLACEMENT_REQUESTS_PATH,
    decode,
    encode,
    roundtrip,
)

__all__ = [
    "CLUSTER_DATA_PATH",
    "CLUSTER_HEADER",
    "DEPLOYMENT_INFO_PATH",
    "PLACEMENT_REQUESTS_PATH",
    "decode",
    "encode",
    "roundtrip",
]
