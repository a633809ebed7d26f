"""ElGamal over the prime-order subgroup."""

from __future__ import annotations

from dataclasses import dataclass

from .encoding import expect_fields, frame, unframe
from .group import GroupParams, NotInSubgroup, Rng

TAG_CIPHERTEXT = 0x11


@dataclass(frozen=True)
class Keypair:
    sk: int
    pk: int


# The same key shape serves encryption and signatures.
ElGamalKeypair = Keypair
SigKeypair = Keypair


@dataclass(frozen=True)
class ElGamalCiphertext:
    c1: int
    c2: int

    def encode(self, params: GroupParams) -> bytes:
        return frame(TAG_CIPHERTEXT, params.encode_element(self.c1), params.encode_element(self.c2))

    @classmethod
    def decode(cls, params: GroupParams, data: bytes) -> ElGamalCiphertext:
        _, fields = unframe(data, TAG_CIPHERTEXT)
        c1, c2 = expect_fields(fields, 2)
        return cls(params.decode_element(c1), params.decode_element(c2))


def keygen(params: GroupParams, rng: Rng | None = None) -> Keypair:
    sk = params.random_scalar(rng)
    return Keypair(sk=sk, pk=params.gexp(sk))


elgamal_keygen = keygen


def elgamal_encrypt(
    params: GroupParams, m: int, pk: int, rng: Rng | None = None
) -> tuple[ElGamalCiphertext, int]:
    """Encrypt the group element ``m``; also returns the randomness ``s``."""
    if not params.is_element(m):
        raise NotInSubgroup("plaintext must be a subgroup element")
    s = params.random_scalar(rng)
    return ElGamalCiphertext(params.gexp(s), params.mul(m, params.exp(pk, s))), s


def elgamal_decrypt(params: GroupParams, ct: ElGamalCiphertext, sk: int) -> int:
    params.check_element(ct.c1)
    params.check_element(ct.c2)
    return params.mul(ct.c2, params.exp(ct.c1, -sk))


def ciphertext_product(
    params: GroupParams, a: ElGamalCiphertext, b: ElGamalCiphertext
) -> ElGamalCiphertext:
    """Componentwise product; decrypts to the product of the plaintexts."""
    return ElGamalCiphertext(params.mul(a.c1, b.c1), params.mul(a.c2, b.c2))


