"""Group arithmetic, ElGamal, Schnorr signatures and Pedersen commitments."""

from .elgamal import (
    ElGamalCiphertext,
    ElGamalKeypair,
    Keypair,
    SigKeypair,
    ciphertext_product,
    elgamal_decrypt,
    elgamal_encrypt,
    elgamal_keygen,
    keygen,
)
from .encoding import DecodeError, frame, hash_bytes, unframe
from .group import (
    LABELS,
    GroupParams,
    NotInSubgroup,
    UnknownGroup,
    group_setup,
    hash_to_group,
    hash_to_scalar,
)
from .pedersen import pedersen_commit, pedersen_open
from .schnorr import Signature, schnorr_sign, schnorr_verify

__all__ = [
    "LABELS",
    "DecodeError",
    "ElGamalCiphertext",
    "ElGamalKeypair",
    "GroupParams",
    "Keypair",
    "NotInSubgroup",
    "SigKeypair",
    "Signature",
    "UnknownGroup",
    "ciphertext_product",
    "elgamal_decrypt",
    "elgamal_encrypt",
    "elgamal_keygen",
    "frame",
    "group_setup",
    "hash_bytes",
    "hash_to_group",
    "hash_to_scalar",
    "keygen",
    "pedersen_commit",
    "pedersen_open",
    "schnorr_sign",
    "schnorr_verify",
    "unframe",
]
