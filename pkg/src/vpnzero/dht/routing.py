"""Kademlia identifiers, XOR metric and k-bucket routing table."""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass

ID_BITS = 256


def node_id_for(address: str, nonce: bytes) -> int:
    return int.from_bytes(hashlib.sha256(address.encode() + b"|" + nonce).digest(), "big")


def key_for_domain(domain: str) -> int:
    """DHT key of a domain: SHA-256 of the lowercase name."""
    return int.from_bytes(domain_key_bytes(domain), "big")


def domain_key_bytes(domain: str) -> bytes:
    return hashlib.sha256(domain.strip().lower().encode()).digest()


def xor_distance(a: int, b: int) -> int:
    return a ^ b


def bucket_index(own: int, other: int) -> int:
    return xor_distance(own, other).bit_length() - 1


@dataclass
class Contact:
    node_id: int
    address: str
    last_seen: float = 0.0


class RoutingTable:
    """256 buckets of at most ``k`` contacts, least recently seen first."""

    def __init__(self, own_id: int, k: int = 8) -> None:
        self.own_id = own_id
        self.k = k
        self.buckets: list[OrderedDict[int, Contact]] = [OrderedDict() for _ in range(ID_BITS)]

    def update(self, contact: Contact) -> Contact | None:
        """Insert or refresh ``contact``; returns the evicted contact, if any."""
        if contact.node_id == self.own_id:
            return None
        bucket = self.buckets[bucket_index(self.own_id, contact.node_id)]
        if contact.node_id in bucket:
            known = bucket.pop(contact.node_id)
            known.last_seen = max(known.last_seen, contact.last_seen)
            known.address = contact.address
            bucket[contact.node_id] = known
            return None
        evicted = None
        if len(bucket) >= self.k:
            _, evicted = bucket.popitem(last=False)
        bucket[contact.node_id] = Contact(contact.node_id, contact.address, contact.last_seen)
        return evicted

    def remove(self, node_id: int) -> None:
        if node_id != self.own_id:
            self.buckets[bucket_index(self.own_id, node_id)].pop(node_id, None)

    def contacts(self) -> list[Contact]:
        return [c for b in self.buckets for c in b.values()]

    def __len__(self) -> int:
        return sum(len(b) for b in self.buckets)

    def __contains__(self, node_id: int) -> bool:
        return node_id != self.own_id and node_id in self.buckets[bucket_index(self.own_id, node_id)]

    def closest(self, target: int, n: int | None = None) -> list[Contact]:
        """The ``n`` (default ``k``) known contacts nearest ``target``, ascending."""
        ranked = sorted(self.contacts(), key=lambda c: xor_distance(c.node_id, target))
        return ranked[: self.k if n is None else n]


def routing_update(table: RoutingTable, contact: Contact) -> RoutingTable:
    table.update(contact)
    return table
