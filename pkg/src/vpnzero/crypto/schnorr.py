"""Schnorr signatures made non-interactive with Fiat-Shamir."""

from __future__ import annotations

from dataclasses import dataclass

from .encoding import expect_fields, frame, unframe
from .group import GroupParams, Rng, hash_to_scalar

TAG_SIGNATURE = 0x12
TAG_SIG_TRANSCRIPT = 0x17
SIG_SEPARATOR = b"SCHNORR-SIG"


@dataclass(frozen=True)
class Signature:
    challenge: int
    response: int

    def encode(self, params: GroupParams) -> bytes:
        return frame(
            TAG_SIGNATURE, params.encode_scalar(self.challenge), params.encode_scalar(self.response)
        )

    @classmethod
    def decode(cls, params: GroupParams, data: bytes) -> Signature:
        _, fields = unframe(data, TAG_SIGNATURE)
        c, s = expect_fields(fields, 2)
        return cls(params.decode_scalar(c), params.decode_scalar(s))


def _challenge(params: GroupParams, pk: int, nonce_commitment: int, msg: bytes) -> int:
    transcript = frame(
        TAG_SIG_TRANSCRIPT,
        params.encode(),
        params.encode_element(pk),
        params.encode_element(nonce_commitment),
        msg,
    )
    return hash_to_scalar(params, SIG_SEPARATOR, transcript)


def schnorr_sign(params: GroupParams, msg: bytes, sk: int, rng: Rng | None = None) -> Signature:
    k = params.random_scalar(rng)
    c = _challenge(params, params.gexp(sk), params.gexp(k), msg)
    return Signature(challenge=c, response=(k + c * sk) % params.q)


def schnorr_verify(params: GroupParams, msg: bytes, sig: Signature, pk: int) -> bool:
    """Return True iff ``sig`` is a valid signature on ``msg`` under ``pk``."""
    if not (0 <= sig.challenge < params.q and 0 <= sig.response < params.q):
        return False
    if not params.is_element(pk):
        return False
    r = params.mul(params.gexp(sig.response), params.exp(pk, -sig.challenge))
    return _challenge(params, pk, r, msg) == sig.challenge


