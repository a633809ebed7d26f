"""Regenerate the embedded "std256" group constants.

Deterministic: q is the first prime at or above a SHAKE-256 derived 256-bit
seed value, p = k*q + 1 is the first 2048-bit prime found by walking even k
upward from 2^2047/q plus a SHAKE-256 derived offset. g is 2^((p-1)/q) mod p.

    python tools/gen_std256.py
"""
import hashlib

import gmpy2

SEED = b"vpnzero/std256/v1"


def derive() -> tuple[int, int, int]:
    qseed = int.from_bytes(hashlib.shake_256(SEED + b"/q").digest(32), "big")
    q = int(gmpy2.next_prime((qseed | (1 << 255)) - 1))
    offset = int.from_bytes(hashlib.shake_256(SEED + b"/k").digest(223), "big")
    k = (1 << 2047) // q + 1 + offset
    k += k % 2
    while True:
        p = k * q + 1
        if p.bit_length() == 2048 and gmpy2.is_prime(p, 64):
            break
        k += 2
    g = pow(2, (p - 1) // q, p)
    assert g != 1 and pow(g, q, p) == 1
    return p, q, g


if __name__ == "__main__":
    p, q, g = derive()
    print(f"P = 0x{p:x}")
    print(f"Q = 0x{q:x}")
    print(f"G = 0x{g:x}")
