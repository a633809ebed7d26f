"""DHT wire messages and their canonical encodings."""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..crypto.elgamal import ElGamalCiphertext
from ..crypto.encoding import expect_fields, frame, unframe
from ..crypto.group import GroupParams
from ..crypto.schnorr import Signature

PING = 0x01
STORE = 0x02
FIND_NODE = 0x03
FIND_VALUE = 0x04
VALUE_RESPONSE = 0x05
NOTIFY_A = 0x06
NODES = 0x07
STORE_ACK = 0x08
PONG = 0x09

_F64 = struct.Struct(">d")


def _id(value: int) -> bytes:
    return value.to_bytes(32, "big")


def _time(value: float) -> bytes:
    return _F64.pack(value)


@dataclass(frozen=True)
class Ping:
    rpc_id: str
    sender_id: int
    sender_addr: str
    kind = "PING"
    session = None

    def encode(self, params: GroupParams | None = None) -> bytes:
        return frame(PING, self.rpc_id.encode(), _id(self.sender_id), self.sender_addr.encode())


@dataclass(frozen=True)
class Pong:
    rpc_id: str
    sender_id: int
    sender_addr: str
    kind = "PONG"
    session = None

    def encode(self, params: GroupParams | None = None) -> bytes:
        return frame(PONG, self.rpc_id.encode(), _id(self.sender_id), self.sender_addr.encode())


@dataclass(frozen=True)
class WhitelistEntry:
    key: int
    provider_addr: str
    pk_d: int
    expires_at: float


@dataclass(frozen=True)
class Store:
    rpc_id: str
    sender_id: int
    sender_addr: str
    entry: WhitelistEntry
    kind = "STORE"
    session = None

    def encode(self, params: GroupParams) -> bytes:
        e = self.entry
        return frame(
            STORE,
            self.rpc_id.encode(),
            _id(self.sender_id),
            self.sender_addr.encode(),
            _id(e.key),
            e.provider_addr.encode(),
            params.encode_element(e.pk_d),
            _time(e.expires_at),
        )


@dataclass(frozen=True)
class StoreAck:
    rpc_id: str
    sender_id: int
    sender_addr: str
    ok: bool
    kind = "STORE_ACK"
    session = None

    def encode(self, params: GroupParams | None = None) -> bytes:
        return frame(
            STORE_ACK, self.rpc_id.encode(), _id(self.sender_id), self.sender_addr.encode(), bytes([self.ok])
        )


@dataclass(frozen=True)
class FindNode:
    rpc_id: str
    sender_id: int
    sender_addr: str
    target: int
    kind = "FIND_NODE"
    session = None

    def encode(self, params: GroupParams | None = None) -> bytes:
        return frame(
            FIND_NODE, self.rpc_id.encode(), _id(self.sender_id), self.sender_addr.encode(), _id(self.target)
        )


@dataclass(frozen=True)
class Nodes:
    rpc_id: str
    sender_id: int
    sender_addr: str
    contacts: tuple[tuple[int, str], ...]
    kind = "NODES"
    session = None

    def encode(self, params: GroupParams | None = None) -> bytes:
        listing = b"".join(frame(NODES, _id(i), a.encode()) for i, a in self.contacts)
        return frame(NODES, self.rpc_id.encode(), _id(self.sender_id), self.sender_addr.encode(), listing)


@dataclass(frozen=True)
class FindValue:
    """Terminal lookup request. Carries the relay's address, never the client's."""

    rpc_id: str
    key: int
    reply_to: str
    pk_eg: int
    kind = "FIND_VALUE"

    @property
    def session(self) -> str:
        return self.rpc_id

    def encode(self, params: GroupParams) -> bytes:
        return frame(
            FIND_VALUE, self.rpc_id.encode(), _id(self.key), self.reply_to.encode(), params.encode_element(self.pk_eg)
        )


@dataclass(frozen=True)
class ValueResponse:
    """Sent to ``reply_to``. Holds no lookup key and no plaintext domain key."""

    rpc_id: str
    found: bool
    provider_addr: str = ""
    c_pkd: ElGamalCiphertext | None = None
    sig_r: Signature | None = None
    pk_r: int = 0
    kind = "VALUE_RESPONSE"

    @property
    def session(self) -> str:
        return self.rpc_id

    def encode(self, params: GroupParams) -> bytes:
        if not self.found:
            return frame(VALUE_RESPONSE, self.rpc_id.encode(), b"\x00")
        return frame(
            VALUE_RESPONSE,
            self.rpc_id.encode(),
            b"\x01",
            self.provider_addr.encode(),
            self.c_pkd.encode(params),
            self.sig_r.encode(params),
            params.encode_element(self.pk_r),
        )

    @classmethod
    def decode(cls, params: GroupParams, data: bytes) -> ValueResponse:
        _, fields = unframe(data, VALUE_RESPONSE)
        if len(fields) == 2 and fields[1] == b"\x00":
            return cls(fields[0].decode(), False)
        rpc, _, provider, ct, sig, pk_r = expect_fields(fields, 6)
        return cls(
            rpc.decode(),
            True,
            provider.decode(),
            ElGamalCiphertext.decode(params, ct),
            Signature.decode(params, sig),
            params.decode_element(pk_r),
        )


@dataclass(frozen=True)
class NotifyA:
    pk_r: int
    valid_until: float
    kind = "NOTIFY_A"
    session = None

    def encode(self, params: GroupParams) -> bytes:
        return frame(NOTIFY_A, params.encode_element(self.pk_r), _time(self.valid_until))


DHT_KINDS = frozenset(
    {"PING", "PONG", "STORE", "STORE_ACK", "FIND_NODE", "NODES", "FIND_VALUE", "VALUE_RESPONSE", "NOTIFY_A"}
)
