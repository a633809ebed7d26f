import random

import pytest

from vpnzero.crypto import elgamal_encrypt, group_setup, keygen, schnorr_sign

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class FixedRng:
    """Returns queued values from ``randrange``; used to force nonces."""

    def __init__(self, *values):
        self.values = list(values)

    def randrange(self, start, stop=None):
        return self.values.pop(0)


@pytest.fixture(scope="session")
def toy():
    return group_setup("toy")


@pytest.fixture(scope="session")
def std():
    return group_setup("std256")


@pytest.fixture
def rng():
    return random.Random(20240917)


def lookup_material(pp, rng, pk_d=None):
    """What the client holds after a lookup: keys, C_pkD and the relay signature."""
    dom, resp, eph = keygen(pp, rng), keygen(pp, rng), keygen(pp, rng)
    if pk_d is not None:
        dom = dom.__class__(0, pk_d)
    c_pkd, _ = elgamal_encrypt(pp, dom.pk, eph.pk, rng)
    sig = schnorr_sign(pp, c_pkd.encode(pp), resp.sk, rng)
    return dom, resp, eph, c_pkd, sig


@pytest.fixture(scope="session")
def acceptance():
    def record(number: int, ok: bool, detail: str) -> None:
        _ACCEPTANCE[number] = (ok, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
