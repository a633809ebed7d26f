import hashlib
import random
import struct

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FixedRng
from vpnzero.crypto import (
    DecodeError,
    ElGamalCiphertext,
    NotInSubgroup,
    Signature,
    UnknownGroup,
    ciphertext_product,
    elgamal_decrypt,
    elgamal_encrypt,
    frame,
    group_setup,
    hash_to_scalar,
    keygen,
    pedersen_commit,
    pedersen_open,
    schnorr_sign,
    schnorr_verify,
    unframe,
)

TOY_SUBGROUP = sorted({pow(2, i, 23) for i in range(11)})


# Independent re-implementation of the canonical encoding and hashing, used
# only as an oracle for the golden vectors below.
def oracle_frame(tag, *fields):
    return bytes([tag]) + b"".join(struct.pack(">I", len(f)) + f for f in fields)


def oracle_h2s(q, sep, data):
    prefix = struct.pack(">I", len(sep)) + sep + struct.pack(">I", len(data)) + data
    ctr = 0
    while True:
        x = int.from_bytes(hashlib.sha256(prefix + struct.pack(">I", ctr)).digest(), "big") >> (256 - q.bit_length())
        if x < q:
            return x
        ctr += 1


def oracle_toy_params(h):
    return oracle_frame(0x10, b"toy", bytes([23]), bytes([11]), bytes([2]), bytes([h]))


class TestEncoding:
    def test_frame_layout(self):
        assert frame(0x42, b"ab", b"") == b"\x42\x00\x00\x00\x02ab\x00\x00\x00\x00"

    def test_roundtrip(self):
        assert unframe(frame(7, b"x", b"yz")) == (7, [b"x", b"yz"])

    @pytest.mark.parametrize("bad", [b"", b"\x01\x00\x00", b"\x01\x00\x00\x00\x05ab"])
    def test_malformed(self, bad):
        with pytest.raises(DecodeError):
            unframe(bad)

    def test_wrong_tag(self):
        with pytest.raises(DecodeError):
            unframe(frame(1, b"a"), tag=2)


class TestGroup:
    def test_toy_constants(self, toy):
        assert (toy.p, toy.q, toy.g) == (23, 11, 2)
        assert pow(2, 11, 23) == 1
        assert toy.h in TOY_SUBGROUP and toy.h not in (1, toy.g)

    def test_toy_h_matches_hash_to_group_oracle(self, toy):
        seed = b"H-GENERATOR" + bytes([23]) + bytes([2])
        ctr = 0
        while True:
            x = int.from_bytes(hashlib.shake_256(seed + struct.pack(">I", ctr)).digest(17), "big") % 23
            y = pow(x, 2, 23)
            if y not in (0, 1, 2):
                break
            ctr += 1
        assert toy.h == y

    def test_std256_primes(self, std):
        assert std.q.bit_length() == 256 and std.p.bit_length() >= 2048
        assert sympy.isprime(std.q) and sympy.isprime(std.p)
        assert (std.p - 1) % std.q == 0
        for x in (std.g, std.h):
            assert x != 1 and pow(x, std.q, std.p) == 1
        assert std.h != std.g

    def test_unknown_label(self):
        with pytest.raises(UnknownGroup):
            group_setup("foo")

    def test_membership_matches_enumeration(self, toy):
        assert [x for x in range(1, 23) if toy.is_element(x)] == TOY_SUBGROUP

    def test_fixed_base_matches_pow(self, std, rng):
        for _ in range(50):
            e = rng.randrange(std.q)
            assert std.gexp(e) == pow(std.g, e, std.p)
            assert std.hexp(e) == pow(std.h, e, std.p)

    def test_decode_rejects_non_member(self, toy):
        with pytest.raises(DecodeError):
            toy.decode_element(bytes([5]))  # 5 has order 22
        with pytest.raises(DecodeError):
            toy.decode_scalar(bytes([11]))


class TestElGamal:
    def test_keygen_forced(self, toy):
        kp = keygen(toy, FixedRng(3))
        assert kp.pk == 8

    def test_keygen_no_repeats(self, std):
        r = random.Random(1)
        assert len({keygen(std, r).sk for _ in range(1000)}) == 1000

    def test_encrypt_vector(self, toy):
        ct, s = elgamal_encrypt(toy, 4, 8, FixedRng(2))
        assert s == 2 and (ct.c1, ct.c2) == (4, 3)

    def test_decrypt_vector(self, toy):
        assert elgamal_decrypt(toy, ElGamalCiphertext(4, 3), 3) == 4

    def test_zero_randomness(self, toy):
        for sk in range(1, 11):
            assert elgamal_decrypt(toy, ElGamalCiphertext(1, 13), sk) == 13

    def test_brute_force_oracle(self, toy):
        # Every (m, sk, s) in the toy group against direct modular arithmetic.
        for m in TOY_SUBGROUP:
            for sk in range(1, 11):
                pk = pow(2, sk, 23)
                for s in range(1, 11):
                    ct, _ = elgamal_encrypt(toy, m, pk, FixedRng(s))
                    assert (ct.c1, ct.c2) == (pow(2, s, 23), m * pow(pk, s, 23) % 23)
                    assert elgamal_decrypt(toy, ct, sk) == m

    def test_roundtrip_std(self, std, rng):
        for _ in range(100):
            kp = keygen(std, rng)
            m = std.gexp(rng.randrange(1, std.q))
            ct, _ = elgamal_encrypt(std, m, kp.pk, rng)
            assert elgamal_decrypt(std, ct, kp.sk) == m

    def test_homomorphism(self, std, rng):
        kp = keygen(std, rng)
        m1, m2 = std.gexp(5), std.gexp(7)
        a, _ = elgamal_encrypt(std, m1, kp.pk, rng)
        b, _ = elgamal_encrypt(std, m2, kp.pk, rng)
        assert elgamal_decrypt(std, ciphertext_product(std, a, b), kp.sk) == std.mul(m1, m2)

    def test_non_member_plaintext(self, toy):
        with pytest.raises(NotInSubgroup):
            elgamal_encrypt(toy, 5, 8)

    def test_decrypt_checks_membership(self, toy):
        with pytest.raises(NotInSubgroup):
            elgamal_decrypt(toy, ElGamalCiphertext(5, 3), 3)

    def test_ciphertext_encoding(self, std, rng):
        ct, _ = elgamal_encrypt(std, std.g, keygen(std, rng).pk, rng)
        assert ElGamalCiphertext.decode(std, ct.encode(std)) == ct


class TestSchnorr:
    def test_toy_vector(self, toy):
        msg = b"vpnzero"
        sig = schnorr_sign(toy, msg, 3, FixedRng(5))
        nonce = pow(2, 5, 23)
        c = oracle_h2s(
            11, b"SCHNORR-SIG", oracle_frame(0x17, oracle_toy_params(toy.h), bytes([8]), bytes([nonce]), msg)
        )
        assert sig == Signature(c, (5 + c * 3) % 11)
        assert sig.encode(toy) == oracle_frame(0x12, bytes([c]), bytes([(5 + c * 3) % 11]))

    def test_accepts(self, std, rng):
        for i in range(100):
            kp = keygen(std, rng)
            msg = rng.randbytes(i % 40)
            assert schnorr_verify(std, msg, schnorr_sign(std, msg, kp.sk, rng), kp.pk)

    def test_bit_flips_rejected(self, std, rng):
        kp = keygen(std, rng)
        msg = b"signed payload"
        sig = schnorr_sign(std, msg, kp.sk, rng)
        for i in range(len(msg) * 8):
            flipped = bytearray(msg)
            flipped[i // 8] ^= 1 << (i % 8)
            assert not schnorr_verify(std, bytes(flipped), sig, kp.pk)

    def test_signature_mutations(self, std, rng):
        kp = keygen(std, rng)
        sig = schnorr_sign(std, b"m", kp.sk, rng)
        raw = bytearray(sig.encode(std))
        for pos in range(5, len(raw)):
            mutated = bytearray(raw)
            mutated[pos] ^= 0x01
            try:
                other = Signature.decode(std, bytes(mutated))
            except DecodeError:
                continue
            assert not schnorr_verify(std, b"m", other, kp.pk)

    def test_thousand_byte_mutations(self, std, rng):
        kp = keygen(std, rng)
        msg = b"attested payload"
        raw = schnorr_sign(std, msg, kp.sk, rng).encode(std)
        accepted = 0
        for _ in range(1000):
            target = rng.choice(("msg", "sig"))
            data = bytearray(msg if target == "msg" else raw)
            data[rng.randrange(len(data))] ^= 1 + rng.randrange(255)
            try:
                sig = Signature.decode(std, bytes(data)) if target == "sig" else Signature.decode(std, raw)
            except DecodeError:
                continue
            accepted += schnorr_verify(std, bytes(data) if target == "msg" else msg, sig, kp.pk)
        assert accepted == 0

    def test_wrong_key(self, std, rng):
        kp, other = keygen(std, rng), keygen(std, rng)
        assert not schnorr_verify(std, b"m", schnorr_sign(std, b"m", kp.sk, rng), other.pk)

    def test_out_of_range(self, toy):
        assert not schnorr_verify(toy, b"m", Signature(11, 0), 8)


class TestPedersen:
    def test_zero(self, toy):
        assert pedersen_commit(0, 0, toy) == 1

    def test_vector(self, toy):
        assert pedersen_commit(2, 1, toy) == 4 * toy.h % 23

    def test_blinding_changes_commitment(self, toy):
        assert len({pedersen_commit(3, b, toy) for b in range(11)}) == 11

    def test_open(self, std, rng):
        v, b = rng.randrange(std.q), rng.randrange(std.q)
        c = pedersen_commit(v, b, std)
        assert pedersen_open(c, v, b, std) and not pedersen_open(c, v + 1, b, std)


class TestHashToScalar:
    def test_deterministic(self, std):
        assert hash_to_scalar(std, b"FS-CHALLENGE", b"x") == hash_to_scalar(std, b"FS-CHALLENGE", b"x")

    def test_separators_differ(self, std):
        assert hash_to_scalar(std, b"FS-CHALLENGE", b"x") != hash_to_scalar(std, b"SNI-ENCODE", b"x")

    def test_matches_oracle(self, std, toy):
        for data in (b"", b"abc", bytes(100)):
            assert hash_to_scalar(std, b"S", data) == oracle_h2s(std.q, b"S", data)
            assert hash_to_scalar(toy, b"S", data) == oracle_h2s(11, b"S", data)

    def test_range_toy(self, toy):
        # The toy field forces frequent rejection, the interesting path.
        r = random.Random(2)
        assert all(hash_to_scalar(toy, b"t", r.randbytes(8)) < 11 for _ in range(20000))

    @settings(max_examples=300)
    @given(st.binary(max_size=64))
    def test_range_property(self, data):
        pp = group_setup("std256")
        assert 0 <= hash_to_scalar(pp, b"t", data) < pp.q

    @pytest.mark.slow
    def test_range_million(self, toy):
        r = random.Random(3)
        assert all(hash_to_scalar(toy, b"t", r.randbytes(12)) < 11 for _ in range(10**6))
