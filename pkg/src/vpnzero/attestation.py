"""Zero-knowledge attestation that an encrypted SNI targets a whitelisted domain.

The relay ``R`` hands the client an ElGamal encryption ``C_pkD`` of the
domain key under the client's ephemeral key ``pk_EG``, plus a signature over
it. During the forced re-handshake the client encrypts the SNI under the
domain key (exponential ElGamal: ``u = g^r``, ``w = g^m * pk_D^r``) and proves,
without revealing ``pk_D``, the SNI or its secret key ``e``:

* it knows ``e`` with ``pk_EG = g^e``;
* ``C_SNI`` encrypts some ``m`` under the key ``C_pkD`` decrypts to with ``e``;
* (checked in the clear) ``sig_R`` verifies over ``C_pkD`` under ``pk_R``.

Substituting ``pk_D = c2 * c1^-e`` gives ``w = g^m * c2^r * c1^(-e*r)``. The
product ``t = e*r`` is tied to ``e`` and ``r`` through Pedersen commitments
``Com_e``, ``Com_r`` and ``Com_t``, with ``Com_t = Com_r^e * h^delta``.
All clauses share one Fiat-Shamir challenge.
"""

from __future__ import annotations

from dataclasses import dataclass

from .crypto.elgamal import ElGamalCiphertext, elgamal_decrypt
from .crypto.encoding import DecodeError, expect_fields, frame, unframe
from .crypto.group import GroupParams, Rng, default_rng, group_setup, hash_to_scalar
from .crypto.pedersen import pedersen_commit
from .crypto.schnorr import Signature, schnorr_verify

TAG_SNI = 0x13
TAG_STATEMENT = 0x14
TAG_PROOF = 0x15
TAG_BUNDLE = 0x16
TAG_CHALLENGE = 0x18

SNI_SEPARATOR = b"SNI-ENCODE"
FS_SEPARATOR = b"FS-CHALLENGE"

N_ANNOUNCEMENTS = 7
RESPONSE_NAMES = ("e", "r", "m", "t", "alpha", "beta", "gamma", "delta")


class SignatureInvalid(ValueError):
    """``sig_R`` does not verify over ``C_pkD`` under ``pk_R``."""


class InconsistentWitness(ValueError):
    """The witness does not satisfy the statement."""


@dataclass(frozen=True)
class SniCiphertext:
    u: int
    w: int

    def encode(self, params: GroupParams) -> bytes:
        return frame(TAG_SNI, params.encode_element(self.u), params.encode_element(self.w))

    @classmethod
    def decode(cls, params: GroupParams, data: bytes) -> SniCiphertext:
        _, fields = unframe(data, TAG_SNI)
        u, w = expect_fields(fields, 2)
        return cls(params.decode_element(u), params.decode_element(w))


@dataclass(frozen=True)
class AttestationStatement:
    """Everything the exit node sees. There is deliberately no slot for
    ``pk_D``, ``m``, the SNI or ``e``."""

    params: GroupParams
    pk_eg: int
    c_pkd: ElGamalCiphertext
    sig_r: Signature
    pk_r: int
    c_sni: SniCiphertext
    com_e: int
    com_r: int
    com_t: int

    def encode(self) -> bytes:
        pp = self.params
        return frame(
            TAG_STATEMENT,
            pp.encode(),
            pp.encode_element(self.pk_eg),
            self.c_pkd.encode(pp),
            self.sig_r.encode(pp),
            pp.encode_element(self.pk_r),
            self.c_sni.encode(pp),
            pp.encode_element(self.com_e),
            pp.encode_element(self.com_r),
            pp.encode_element(self.com_t),
        )

    @classmethod
    def decode(cls, data: bytes) -> AttestationStatement:
        _, fields = unframe(data, TAG_STATEMENT)
        raw = expect_fields(fields, 9)
        pp = _decode_params(raw[0])
        return cls(
            params=pp,
            pk_eg=pp.decode_element(raw[1]),
            c_pkd=ElGamalCiphertext.decode(pp, raw[2]),
            sig_r=Signature.decode(pp, raw[3]),
            pk_r=pp.decode_element(raw[4]),
            c_sni=SniCiphertext.decode(pp, raw[5]),
            com_e=pp.decode_element(raw[6]),
            com_r=pp.decode_element(raw[7]),
            com_t=pp.decode_element(raw[8]),
        )

    def elements(self) -> tuple[int, ...]:
        return (
            self.pk_eg,
            self.c_pkd.c1,
            self.c_pkd.c2,
            self.pk_r,
            self.c_sni.u,
            self.c_sni.w,
            self.com_e,
            self.com_r,
            self.com_t,
        )


@dataclass(frozen=True)
class AttestationWitness:
    e: int
    r: int
    m: int
    alpha: int
    beta: int
    gamma: int


@dataclass(frozen=True)
class Proof:
    announcements: tuple[int, ...]
    z_e: int
    z_r: int
    z_m: int
    z_t: int
    z_alpha: int
    z_beta: int
    z_gamma: int
    z_delta: int

    @property
    def responses(self) -> tuple[int, ...]:
        return (
            self.z_e,
            self.z_r,
            self.z_m,
            self.z_t,
            self.z_alpha,
            self.z_beta,
            self.z_gamma,
            self.z_delta,
        )

    def encode(self, params: GroupParams) -> bytes:
        return frame(
            TAG_PROOF,
            *(params.encode_element(a) for a in self.announcements),
            *(params.encode_scalar(z) for z in self.responses),
        )

    @classmethod
    def decode(cls, params: GroupParams, data: bytes) -> Proof:
        _, fields = unframe(data, TAG_PROOF)
        raw = expect_fields(fields, N_ANNOUNCEMENTS + len(RESPONSE_NAMES))
        announcements = tuple(params.decode_element(f) for f in raw[:N_ANNOUNCEMENTS])
        return cls(announcements, *(params.decode_scalar(f) for f in raw[N_ANNOUNCEMENTS:]))


@dataclass(frozen=True)
class AttestationBundle:
    statement: AttestationStatement
    proof: Proof

    def encode(self) -> bytes:
        return frame(TAG_BUNDLE, self.statement.encode(), self.proof.encode(self.statement.params))

    @classmethod
    def decode(cls, data: bytes) -> AttestationBundle:
        _, fields = unframe(data, TAG_BUNDLE)
        st_raw, proof_raw = expect_fields(fields, 2)
        statement = AttestationStatement.decode(st_raw)
        return cls(statement, Proof.decode(statement.params, proof_raw))


def _decode_params(data: bytes) -> GroupParams:
    _, fields = unframe(data)
    if not fields:
        raise DecodeError("missing group parameters")
    try:
        params = group_setup(fields[0].decode())
    except (UnicodeDecodeError, ValueError) as exc:
        raise DecodeError(str(exc)) from None
    if params.encode() != data:
        raise DecodeError("group parameters do not match the named group")
    return params


# -- SNI encryption -------------------------------------------------------


def normalize_name(name: str) -> str:
    name = name.strip().lower()
    if not name:
        raise ValueError("empty domain name")
    return name


def encode_sni(params: GroupParams, name: str) -> int:
    return hash_to_scalar(params, SNI_SEPARATOR, normalize_name(name).encode())


def exp_elgamal_encrypt(params: GroupParams, m: int, pk: int, r: int) -> SniCiphertext:
    """``(g^r, g^m * pk^r)`` for an exponent message ``m``."""
    return SniCiphertext(params.gexp(r), params.mul(params.gexp(m), params.exp(pk, r)))


def encrypt_sni(
    params: GroupParams, sni: str, pk_d: int, rng: Rng | None = None
) -> tuple[SniCiphertext, int, int]:
    """Encrypt ``sni`` under the domain key. Returns ``(ct, r, m)``."""
    m = encode_sni(params, sni)
    r = params.random_scalar(rng)
    return exp_elgamal_encrypt(params, m, pk_d, r), r, m


def domain_decrypt_sni_check(
    params: GroupParams, c_sni: SniCiphertext, sk_d: int, candidates
) -> str | None:
    """Destination-side check: which of ``candidates`` (if any) is encrypted."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate set must be nonempty")
    gm = params.mul(c_sni.w, params.exp(c_sni.u, -sk_d))
    for name in candidates:
        if params.gexp(encode_sni(params, name)) == gm:
            return name
    return None


# -- statement ------------------------------------------------------------


def build_statement(
    params: GroupParams,
    pk_eg: int,
    c_pkd: ElGamalCiphertext,
    sig_r: Signature,
    pk_r: int,
    c_sni: SniCiphertext,
    com_e: int,
    com_r: int,
    com_t: int,
) -> AttestationStatement:
    """Assemble the public statement after checking the relay's signature."""
    if not schnorr_verify(params, c_pkd.encode(params), sig_r, pk_r):
        raise SignatureInvalid("sig_R does not verify over C_pkD under pk_R")
    return AttestationStatement(params, pk_eg, c_pkd, sig_r, pk_r, c_sni, com_e, com_r, com_t)


def commit_witness(
    params: GroupParams, e: int, r: int, rng: Rng | None = None
) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
    """Commit to ``e``, ``r`` and ``e*r``; returns ``(commitments, blindings)``."""
    alpha, beta, gamma = (params.random_scalar(rng) for _ in range(3))
    coms = (
        pedersen_commit(e, alpha, params),
        pedersen_commit(r, beta, params),
        pedersen_commit(e * r % params.q, gamma, params),
    )
    return coms, (alpha, beta, gamma)


# -- sigma protocol -------------------------------------------------------


@dataclass(frozen=True)
class Transcript:
    announcements: tuple[int, ...]
    challenge: int
    responses: tuple[int, ...]


def _witness_vector(params: GroupParams, w: AttestationWitness) -> tuple[int, ...]:
    q = params.q
    t = w.e * w.r % q
    delta = (w.gamma - w.e * w.beta) % q
    return (w.e % q, w.r % q, w.m % q, t, w.alpha % q, w.beta % q, w.gamma % q, delta)


def prover_commit(
    statement: AttestationStatement, rng: Rng | None = None
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """First move: returns ``(announcements, nonces)``."""
    pp = statement.params
    rng = rng or default_rng()
    # Uniform over all of Z_q: excluding 0 would bias the responses.
    k = tuple(rng.randrange(0, pp.q) for _ in RESPONSE_NAMES)
    return _announce(statement, k), k


def _announce(statement: AttestationStatement, k: tuple[int, ...]) -> tuple[int, ...]:
    pp = statement.params
    k_e, k_r, k_m, k_t, k_alpha, k_beta, k_gamma, k_delta = k
    c1, c2 = statement.c_pkd.c1, statement.c_pkd.c2
    return (
        pp.gexp(k_e),
        pp.gexp(k_r),
        pp.mul(pp.gexp(k_m), pp.exp(c2, k_r), pp.exp(c1, -k_t)),
        pp.mul(pp.gexp(k_e), pp.hexp(k_alpha)),
        pp.mul(pp.gexp(k_r), pp.hexp(k_beta)),
        pp.mul(pp.gexp(k_t), pp.hexp(k_gamma)),
        pp.mul(pp.exp(statement.com_r, k_e), pp.hexp(k_delta)),
    )


def prover_respond(
    params: GroupParams, witness: AttestationWitness, nonces: tuple[int, ...], challenge: int
) -> tuple[int, ...]:
    q = params.q
    return tuple((k + challenge * x) % q for k, x in zip(nonces, _witness_vector(params, witness)))


def challenge(statement: AttestationStatement, announcements: tuple[int, ...]) -> int:
    pp = statement.params
    transcript = frame(
        TAG_CHALLENGE, statement.encode(), *(pp.encode_element(a) for a in announcements)
    )
    return hash_to_scalar(pp, FS_SEPARATOR, transcript)


def check_equations(
    statement: AttestationStatement,
    announcements: tuple[int, ...],
    c: int,
    responses: tuple[int, ...],
) -> bool:
    """The seven verification equations for a given challenge."""
    pp = statement.params
    a1, a2, a3, a4, a5, a6, a7 = announcements
    z_e, z_r, z_m, z_t, z_alpha, z_beta, z_gamma, z_delta = responses
    c1, c2 = statement.c_pkd.c1, statement.c_pkd.c2
    u, w = statement.c_sni.u, statement.c_sni.w
    com_e, com_r, com_t = statement.com_e, statement.com_r, statement.com_t
    return (
        pp.gexp(z_e) == pp.mul(a1, pp.exp(statement.pk_eg, c))
        and pp.gexp(z_r) == pp.mul(a2, pp.exp(u, c))
        and pp.mul(pp.gexp(z_m), pp.exp(c2, z_r), pp.exp(c1, -z_t)) == pp.mul(a3, pp.exp(w, c))
        and pp.mul(pp.gexp(z_e), pp.hexp(z_alpha)) == pp.mul(a4, pp.exp(com_e, c))
        and pp.mul(pp.gexp(z_r), pp.hexp(z_beta)) == pp.mul(a5, pp.exp(com_r, c))
        and pp.mul(pp.gexp(z_t), pp.hexp(z_gamma)) == pp.mul(a6, pp.exp(com_t, c))
        and pp.mul(pp.exp(com_r, z_e), pp.hexp(z_delta)) == pp.mul(a7, pp.exp(com_t, c))
    )


def witness_satisfies(statement: AttestationStatement, witness: AttestationWitness) -> bool:
    """Evaluate the relation itself. Unlike verifying a proof, this has no
    soundness slack, which matters in small groups."""
    pp, w = statement.params, witness
    c1, c2 = statement.c_pkd.c1, statement.c_pkd.c2
    pk_d = pp.mul(c2, pp.exp(c1, -w.e))
    return (
        statement.pk_eg == pp.gexp(w.e)
        and statement.c_sni.u == pp.gexp(w.r)
        and statement.c_sni.w == pp.mul(pp.gexp(w.m), pp.exp(pk_d, w.r))
        and statement.com_e == pp.mul(pp.gexp(w.e), pp.hexp(w.alpha))
        and statement.com_r == pp.mul(pp.gexp(w.r), pp.hexp(w.beta))
        and statement.com_t == pp.mul(pp.gexp(w.e * w.r), pp.hexp(w.gamma))
    )


def prove(
    statement: AttestationStatement,
    witness: AttestationWitness,
    rng: Rng | None = None,
    *,
    self_check: bool = True,
) -> Proof:
    """Non-interactive proof for ``statement``.

    With ``self_check`` (the default) the witness is checked against the
    relation and the proof is verified before it is returned;
    :class:`InconsistentWitness` is raised if either fails.
    """
    pp = statement.params
    if self_check and not witness_satisfies(statement, witness):
        raise InconsistentWitness("witness does not satisfy the attestation statement")
    announcements, nonces = prover_commit(statement, rng)
    c = challenge(statement, announcements)
    proof = Proof(announcements, *prover_respond(pp, witness, nonces, c))
    if self_check and not verify(statement, proof):
        raise InconsistentWitness("witness does not satisfy the attestation statement")
    return proof


def verify(statement: AttestationStatement, proof: Proof) -> bool:
    """Accept iff the signature, subgroup membership and all equations hold."""
    pp = statement.params
    try:
        if len(proof.announcements) != N_ANNOUNCEMENTS:
            return False
        if not all(0 <= z < pp.q for z in proof.responses):
            return False
        if not all(pp.is_element(x) for x in (*statement.elements(), *proof.announcements)):
            return False
        if not schnorr_verify(pp, statement.c_pkd.encode(pp), statement.sig_r, statement.pk_r):
            return False
        c = challenge(statement, proof.announcements)
        return check_equations(statement, proof.announcements, c, proof.responses)
    except (TypeError, ValueError):
        return False


def verify_bundle_bytes(data: bytes) -> bool:
    """Decode and verify a wire bundle; malformed input is a rejection."""
    try:
        bundle = AttestationBundle.decode(data)
    except (DecodeError, ValueError):
        return False
    return verify(bundle.statement, bundle.proof)


def simulate(statement: AttestationStatement, c: int, rng: Rng | None = None) -> Transcript:
    """Honest-verifier simulator: an accepting transcript for challenge ``c``
    produced without the witness."""
    pp = statement.params
    rng = rng or default_rng()
    z = tuple(rng.randrange(0, pp.q) for _ in RESPONSE_NAMES)
    z_e, z_r, z_m, z_t, z_alpha, z_beta, z_gamma, z_delta = z
    c1, c2 = statement.c_pkd.c1, statement.c_pkd.c2
    u, w = statement.c_sni.u, statement.c_sni.w
    neg = -c
    announcements = (
        pp.mul(pp.gexp(z_e), pp.exp(statement.pk_eg, neg)),
        pp.mul(pp.gexp(z_r), pp.exp(u, neg)),
        pp.mul(pp.gexp(z_m), pp.exp(c2, z_r), pp.exp(c1, -z_t), pp.exp(w, neg)),
        pp.mul(pp.gexp(z_e), pp.hexp(z_alpha), pp.exp(statement.com_e, neg)),
        pp.mul(pp.gexp(z_r), pp.hexp(z_beta), pp.exp(statement.com_r, neg)),
        pp.mul(pp.gexp(z_t), pp.hexp(z_gamma), pp.exp(statement.com_t, neg)),
        pp.mul(pp.exp(statement.com_r, z_e), pp.hexp(z_delta), pp.exp(statement.com_t, neg)),
    )
    return Transcript(announcements, c % pp.q, z)


@dataclass(frozen=True)
class ExtractedWitness:
    e: int
    r: int
    m: int
    t: int
    alpha: int
    beta: int
    gamma: int
    delta: int


def extract(params: GroupParams, first: Transcript, second: Transcript) -> ExtractedWitness:
    """Special-soundness extractor: two accepting transcripts that share
    announcements but differ in challenge yield the witness."""
    if first.announcements != second.announcements:
        raise ValueError("transcripts must share announcements")
    dc = (first.challenge - second.challenge) % params.q
    if dc == 0:
        raise ValueError("transcripts must have distinct challenges")
    inv = pow(dc, -1, params.q)
    values = ((z1 - z2) * inv % params.q for z1, z2 in zip(first.responses, second.responses))
    return ExtractedWitness(*values)


# -- prover convenience ---------------------------------------------------


def make_attestation(
    params: GroupParams,
    sk_eg: int,
    c_pkd: ElGamalCiphertext,
    sig_r: Signature,
    pk_r: int,
    sni: str,
    rng: Rng | None = None,
    *,
    pk_d: int | None = None,
) -> tuple[AttestationBundle, SniCiphertext]:
    """Client side of the re-handshake: encrypt the SNI afresh and prove.

    ``pk_d`` is the key the client encrypts the SNI under (what it learned
    for the destination); by default the key recovered from ``C_pkD``. A
    mismatch surfaces as :class:`InconsistentWitness`.
    """
    if pk_d is None:
        pk_d = elgamal_decrypt(params, c_pkd, sk_eg)
    c_sni, r, m = encrypt_sni(params, sni, pk_d, rng)
    (com_e, com_r, com_t), (alpha, beta, gamma) = commit_witness(params, sk_eg, r, rng)
    statement = build_statement(
        params, params.gexp(sk_eg), c_pkd, sig_r, pk_r, c_sni, com_e, com_r, com_t
    )
    witness = AttestationWitness(sk_eg, r, m, alpha, beta, gamma)
    return AttestationBundle(statement, prove(statement, witness, rng)), c_sni
