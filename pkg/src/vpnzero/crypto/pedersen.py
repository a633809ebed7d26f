"""Pedersen commitments ``g^v * h^b``."""

from __future__ import annotations

from .group import GroupParams


def pedersen_commit(v: int, b: int, params: GroupParams) -> int:
    return params.mul(params.gexp(v), params.hexp(b))


def pedersen_open(commitment: int, v: int, b: int, params: GroupParams) -> bool:
    return commitment == pedersen_commit(v, b, params)
