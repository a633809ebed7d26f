"""Prime-order subgroup of Z_p^* shared by every primitive in the package."""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Protocol

import gmpy2

from .encoding import DecodeError, frame, hash_bytes, int_to_bytes

TAG_PARAMS = 0x10

# Regenerate with tools/gen_std256.py; q is 256 bits, p is 2048 bits.
_STD256_P = int(
    "806d637e5e6ccdd1033cf4352b9f5b9ebdb4105815d56563f6c8a7387f28f683"
    "555c87d18e080d2958ac0465c94d9dc2d4a580553c4d9fb24d67ab83a117fc6b"
    "b114f9caf3cfa592f1fa1d465bcad24082cf569d3a4daf43cb4ddb9d11bfcc3b"
    "498edf9d285be26116ae6bbc5658514a111b9994d9e09940091a925121e0d446"
    "ee6fc83a45c7fa617e3c76daba6ebce8025a6cd9337b7aabfd9366f5e74b5cf7"
    "002b4e6b9f9feb1e563987de5444d249c50c386397d429c7b04b793570c5a260"
    "31ce60993a39595773f77fced5b2b41b7c8e0949fb24c9c9647270abd4b70ae5"
    "213cc5e542704daed7190b09c8e401efa37d2153afdba44c857c816b92e1df3d",
    16,
)
_STD256_Q = int("942595163931b772001a7a8eb12219669014dfd4199bbf391c7de7095a7e6d7f", 16)
_STD256_G = int(
    "72998f323758e66715187d83a950a2d3cc08b0d74b7047b8846a125e594e6443"
    "e13b1e22737c2eab29e418127d155e74a7938aaf4e0d36dc7c40984079100063"
    "d45a1f4137fab5391b7fb3ea0a8c95115c1288de6931e143712a7dff64954fde"
    "a7e6fa70c0bb5bc9a784c2970b5b00aed9da0ce4e15ce4f2bfb6eb9be4adbee5"
    "7cef1d3e1434023d583738d6744c9eadccaf545576629dd5cfe6e60115a53ee8"
    "39dda2141893f2343aedc438be75b1c4e2ca865604da7bfd775c5805a0f26dfb"
    "ddd037c111e1a9074ae9341614f5deb987f4a178886e9be9b78a14ba745f8296"
    "dd78954d2731a37fc97ff688d266c0b0c43a051a2f358f8aea92d2b8d4887877",
    16,
)

_CONSTANTS = {
    "toy": (23, 11, 2),
    "std256": (_STD256_P, _STD256_Q, _STD256_G),
}

LABELS = tuple(_CONSTANTS)


class Rng(Protocol):
    def randrange(self, start: int, stop: int) -> int: ...


class UnknownGroup(ValueError):
    pass


class NotInSubgroup(ValueError):
    pass


def default_rng() -> Rng:
    return secrets.SystemRandom()


def _window_table(p: int, base: int, bits: int, width: int) -> list[list]:
    tables = []
    b = gmpy2.mpz(base)
    for _ in range((bits + width - 1) // width):
        row = [gmpy2.mpz(1)]
        for _ in range((1 << width) - 1):
            row.append(row[-1] * b % p)
        tables.append(row)
        b = gmpy2.powmod(b, 1 << width, p)
    return tables


@lru_cache(maxsize=32)
def _fixed_base(p: int, base: int, bits: int) -> list[list]:
    return _window_table(p, base, bits, 8)


@dataclass(frozen=True)
class GroupParams:
    """Order-``q`` subgroup of ``Z_p^*`` with independent generators ``g`` and ``h``."""

    p: int
    q: int
    g: int
    h: int
    security_label: str
    element_size: int = field(init=False, repr=False, compare=False)
    scalar_size: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "element_size", (self.p.bit_length() + 7) // 8)
        object.__setattr__(self, "scalar_size", (self.q.bit_length() + 7) // 8)

    # -- arithmetic -------------------------------------------------------

    def exp(self, base: int, e: int) -> int:
        return int(gmpy2.powmod(base, e % self.q, self.p))

    def mul(self, *xs: int) -> int:
        acc = gmpy2.mpz(1)
        for x in xs:
            acc = acc * x % self.p
        return int(acc)

    def inv(self, x: int) -> int:
        return int(gmpy2.invert(x, self.p))

    def _fixed_exp(self, base: int, e: int) -> int:
        e %= self.q
        if self.q.bit_length() < 64:
            return pow(base, e, self.p)
        table = _fixed_base(self.p, base, self.q.bit_length())
        acc = gmpy2.mpz(1)
        i = 0
        while e:
            acc = acc * table[i][e & 0xFF] % self.p
            e >>= 8
            i += 1
        return int(acc)

    def gexp(self, e: int) -> int:
        """``g^e`` using a precomputed window table."""
        return self._fixed_exp(self.g, e)

    def hexp(self, e: int) -> int:
        return self._fixed_exp(self.h, e)

    def is_element(self, x: int) -> bool:
        return isinstance(x, int) and 0 < x < self.p and gmpy2.powmod(x, self.q, self.p) == 1

    def check_element(self, x: int) -> int:
        if not self.is_element(x):
            raise NotInSubgroup(f"value is not in the order-{self.q} subgroup")
        return x

    def random_scalar(self, rng: Rng | None = None) -> int:
        """Uniform scalar in ``[1, q-1]``."""
        return (rng or default_rng()).randrange(1, self.q)

    # -- encodings --------------------------------------------------------

    def encode_element(self, x: int) -> bytes:
        return int_to_bytes(x % self.p, self.element_size)

    def encode_scalar(self, s: int) -> bytes:
        return int_to_bytes(s % self.q, self.scalar_size)

    def decode_element(self, data: bytes) -> int:
        if len(data) != self.element_size:
            raise DecodeError("group element has wrong width")
        x = int.from_bytes(data, "big")
        if not self.is_element(x):
            raise DecodeError("group element outside the subgroup")
        return x

    def decode_scalar(self, data: bytes) -> int:
        if len(data) != self.scalar_size:
            raise DecodeError("scalar has wrong width")
        s = int.from_bytes(data, "big")
        if s >= self.q:
            raise DecodeError("scalar not reduced mod q")
        return s

    def encode(self) -> bytes:
        return frame(
            TAG_PARAMS,
            self.security_label.encode(),
            int_to_bytes(self.p, self.element_size),
            int_to_bytes(self.q, self.scalar_size),
            self.encode_element(self.g),
            self.encode_element(self.h),
        )


def hash_to_group(p: int, q: int, g: int, separator: bytes = b"H-GENERATOR") -> int:
    """Derive a generator whose discrete log to base ``g`` nobody knows.

    Counter values are hashed to field elements and raised to the cofactor
    until the result is neither 1 nor ``g``.
    """
    width = (p.bit_length() + 7) // 8
    cofactor = (p - 1) // q
    seed = separator + int_to_bytes(p, width) + int_to_bytes(g, width)
    counter = 0
    while True:
        x = int.from_bytes(
            hashlib.shake_256(seed + counter.to_bytes(4, "big")).digest(width + 16), "big"
        ) % p
        y = pow(x, cofactor, p)
        if y not in (0, 1, g):
            return y
        counter += 1


@lru_cache(maxsize=None)
def group_setup(label: str) -> GroupParams:
    """Return the fixed parameters for ``label`` ("toy" or "std256")."""
    try:
        p, q, g = _CONSTANTS[label]
    except KeyError:
        raise UnknownGroup(f"unknown group label {label!r}; expected one of {LABELS}") from None
    return GroupParams(p=p, q=q, g=g, h=hash_to_group(p, q, g), security_label=label)


def hash_to_scalar(params: GroupParams, separator: bytes | str, transcript: bytes) -> int:
    """Hash ``transcript`` into ``[0, q)`` under a domain separator.

    The digest is truncated to the bit length of q and rejected when it lands
    at or above q, so there is no modulo bias.
    """
    if isinstance(separator, str):
        separator = separator.encode()
    qbits = params.q.bit_length()
    if qbits > 256:
        raise ValueError("scalar field wider than the hash output")
    prefix = len(separator).to_bytes(4, "big") + separator + len(transcript).to_bytes(4, "big") + transcript
    counter = 0
    while True:
        digest = hash_bytes(prefix + counter.to_bytes(4, "big"))
        x = int.from_bytes(digest, "big") >> (256 - qbits)
        if x < params.q:
            return x
        counter += 1
