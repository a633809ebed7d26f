"""Kademlia DHT holding domain whitelist entries."""

from .messages import FindValue, NotifyA, ValueResponse, WhitelistEntry
from .node import AnnounceResult, DhtConfig, DhtNode, LookupTrace
from .routing import (
    Contact,
    RoutingTable,
    domain_key_bytes,
    key_for_domain,
    node_id_for,
    routing_update,
    xor_distance,
)

__all__ = [
    "AnnounceResult",
    "Contact",
    "DhtConfig",
    "DhtNode",
    "FindValue",
    "LookupTrace",
    "NotifyA",
    "RoutingTable",
    "ValueResponse",
    "WhitelistEntry",
    "domain_key_bytes",
    "key_for_domain",
    "node_id_for",
    "routing_update",
    "xor_distance",
]
