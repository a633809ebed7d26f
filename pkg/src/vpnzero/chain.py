"""Tunnel chaining: the per-session state machine and the S, X, A, D actors.

A client ``S`` first tunnels through a relay ``X`` it already knows, so its
traffic keeps flowing (unauthorized) for at most ``T``. Meanwhile it looks up
an exit ``A`` whose whitelist covers the domain, with the answer sent to
``X``. ``X`` opens a second leg to ``A`` and splices the two. The destination
``D`` sees the connection move from ``X`` to ``A`` and resets it; the forced
re-handshake carries an attestation bundle that ``A`` verifies before it
forwards anything on the client's behalf.
"""

from __future__ import annotations

import enum
import logging
import random
import time
from dataclasses import dataclass, field

from .attestation import (
    AttestationBundle,
    InconsistentWitness,
    SignatureInvalid,
    SniCiphertext,
    domain_decrypt_sni_check,
    encrypt_sni,
    make_attestation,
    verify,
)
from .crypto.elgamal import Keypair, keygen
from .crypto.encoding import DecodeError, expect_fields, frame, unframe
from .crypto.group import GroupParams
from .dht.messages import DHT_KINDS, ValueResponse
from .dht.node import DhtConfig, DhtNode
from .dht.routing import key_for_domain
from .simnet import Future, Network, Simulator, Wait

log = logging.getLogger(__name__)

TAG_TUNNEL_OPEN = 0x20
TAG_TUNNEL_ACK = 0x21
TAG_TUNNEL_DATA = 0x22
TAG_LOOKUP_RESULT = 0x23
TAG_TEARDOWN = 0x24
TAG_AUTHORIZED = 0x25
TAG_HELLO_PAYLOAD = 0x34

HANDSHAKE_TAGS = {"ClientHello": 0x30, "ServerHello": 0x31, "TcpRst": 0x32, "AppData": 0x33}


class Phase(enum.Enum):
    IDLE = "Idle"
    TEMP_TUNNEL = "TempTunnel"
    LOOKUP_PENDING = "LookupPending"
    SPLICING = "Splicing"
    AWAITING_PROOF = "AwaitingProof"
    AUTHORIZED = "Authorized"
    INTERRUPTED = "Interrupted"

    @property
    def terminal(self) -> bool:
        return self in (Phase.AUTHORIZED, Phase.INTERRUPTED)


_MAIN_LINE = [Phase.IDLE, Phase.TEMP_TUNNEL, Phase.LOOKUP_PENDING, Phase.SPLICING, Phase.AWAITING_PROOF]

LEGAL_TRANSITIONS: dict[Phase, frozenset[Phase]] = {
    Phase.IDLE: frozenset({Phase.TEMP_TUNNEL}),
    Phase.TEMP_TUNNEL: frozenset({Phase.LOOKUP_PENDING, Phase.INTERRUPTED}),
    Phase.LOOKUP_PENDING: frozenset({Phase.SPLICING, Phase.INTERRUPTED}),
    Phase.SPLICING: frozenset({Phase.AWAITING_PROOF, Phase.INTERRUPTED}),
    Phase.AWAITING_PROOF: frozenset({Phase.AUTHORIZED, Phase.INTERRUPTED}),
    Phase.AUTHORIZED: frozenset(),
    Phase.INTERRUPTED: frozenset(),
}


class IllegalTransition(RuntimeError):
    pass


class PreconditionError(RuntimeError):
    pass


@dataclass
class ChainState:
    """One session's chain S -> X -> A, owned by the simulation."""

    session_id: str
    client: str
    relay: str
    destination: str
    domain: str
    phase: Phase = Phase.IDLE
    exit: str | None = None
    window_deadline: float | None = None
    attestation: AttestationBundle | None = None
    error: str | None = None
    history: list[tuple[float, Phase]] = field(default_factory=list)
    marks: dict[str, float] = field(default_factory=dict)

    def advance(self, to: Phase, now: float) -> None:
        if to not in LEGAL_TRANSITIONS[self.phase]:
            raise IllegalTransition(f"{self.phase.value} -> {to.value}")
        self.phase = to
        self.history.append((now, to))

    def interrupt(self, now: float, reason: str) -> bool:
        """Move to Interrupted unless already terminal. Returns True if moved."""
        if self.phase.terminal or self.phase is Phase.IDLE:
            return False
        self.error = self.error or reason
        self.advance(Phase.INTERRUPTED, now)
        return True


def legal_trace(history: list[Phase]) -> bool:
    """Independent check of the phases entered after Idle (a session's
    ``history`` without timestamps): it walks the main line one step at a time, may end in Authorized only from AwaitingProof, may drop to
    Interrupted from any non-idle phase, and nothing follows a terminal."""
    pos = 0
    for i, ph in enumerate(history):
        if ph is Phase.INTERRUPTED:
            return pos > 0 and i == len(history) - 1
        if ph is Phase.AUTHORIZED:
            return pos == len(_MAIN_LINE) - 1 and i == len(history) - 1
        if ph not in _MAIN_LINE or _MAIN_LINE.index(ph) != pos + 1:
            return False
        pos += 1
    return True


# -- messages -------------------------------------------------------------


@dataclass(frozen=True)
class HandshakeEvent:
    """A TLS/TCP event of the client's flow. ``payload`` is opaque bytes;
    ClientHello payloads carry the encrypted SNI and, after the splice, the
    attestation bundle. The SNI is never in the clear."""

    event: str
    session: str
    seq: int = 0
    payload: bytes = b""

    def __post_init__(self) -> None:
        if self.event not in HANDSHAKE_TAGS:
            raise ValueError(f"unknown handshake event {self.event!r}")

    @property
    def kind(self) -> str:
        return {"ClientHello": "CLIENT_HELLO", "ServerHello": "SERVER_HELLO", "TcpRst": "TCP_RST", "AppData": "APP_DATA"}[
            self.event
        ]

    def encode(self, params: GroupParams | None = None) -> bytes:
        return frame(HANDSHAKE_TAGS[self.event], self.session.encode(), self.seq.to_bytes(8, "big"), self.payload)

    @classmethod
    def decode(cls, data: bytes) -> HandshakeEvent:
        tag, fields = unframe(data)
        names = {v: k for k, v in HANDSHAKE_TAGS.items()}
        if tag not in names:
            raise DecodeError("not a handshake event")
        session, seq, payload = expect_fields(fields, 3)
        return cls(names[tag], session.decode(), int.from_bytes(seq, "big"), payload)


def hello_payload(params: GroupParams, c_sni: SniCiphertext, bundle: AttestationBundle | None = None) -> bytes:
    return frame(TAG_HELLO_PAYLOAD, c_sni.encode(params), bundle.encode() if bundle else b"")


def parse_hello(params: GroupParams, payload: bytes) -> tuple[SniCiphertext, bytes]:
    _, fields = unframe(payload, TAG_HELLO_PAYLOAD)
    c_sni, bundle = expect_fields(fields, 2)
    return SniCiphertext.decode(params, c_sni), bundle


@dataclass(frozen=True)
class TunnelOpen:
    session: str
    pk_r: int = 0
    kind = "TUNNEL_OPEN"

    def encode(self, params: GroupParams) -> bytes:
        return frame(TAG_TUNNEL_OPEN, self.session.encode(), params.encode_element(self.pk_r) if self.pk_r else b"")


@dataclass(frozen=True)
class TunnelAck:
    session: str
    ok: bool
    kind = "TUNNEL_ACK"

    def encode(self, params: GroupParams | None = None) -> bytes:
        return frame(TAG_TUNNEL_ACK, self.session.encode(), bytes([self.ok]))


@dataclass(frozen=True)
class TunnelData:
    """A packet inside a tunnel; ``inner`` is what the far end forwards."""

    session: str
    inner: HandshakeEvent
    upstream: bool = True
    kind = "TUNNEL_DATA"

    def encode(self, params: GroupParams | None = None) -> bytes:
        return frame(TAG_TUNNEL_DATA, self.session.encode(), bytes([self.upstream]), self.inner.encode())


@dataclass(frozen=True)
class LookupResult:
    """Relay to client: the DHT answer, minus anything identifying the key."""

    session: str
    response: ValueResponse
    kind = "LOOKUP_RESULT"

    def encode(self, params: GroupParams) -> bytes:
        return frame(TAG_LOOKUP_RESULT, self.session.encode(), self.response.encode(params))


@dataclass(frozen=True)
class Teardown:
    session: str
    reason: str
    kind = "TEARDOWN"

    def encode(self, params: GroupParams | None = None) -> bytes:
        return frame(TAG_TEARDOWN, self.session.encode(), self.reason.encode())


@dataclass(frozen=True)
class Authorized:
    session: str
    kind = "AUTHORIZED"

    def encode(self, params: GroupParams | None = None) -> bytes:
        return frame(TAG_AUTHORIZED, self.session.encode())


# -- pure decisions -------------------------------------------------------


def enforce_window(session: ChainState, now: float) -> str:
    """Relay-side policy: ``"forward"`` or ``"drop"``.

    Past the deadline an unauthorized session is dropped and marked
    Interrupted. Once authorized the window no longer applies.
    """
    if session.phase is Phase.AUTHORIZED:
        return "forward"
    if session.phase is Phase.INTERRUPTED:
        return "drop"
    if session.window_deadline is not None and now >= session.window_deadline:
        session.interrupt(now, "attestation window expired")
        return "drop"
    return "forward"


def gate(bundle: AttestationBundle, notified_keys: dict[int, float], now: float) -> Phase:
    """Exit-side decision: Authorized iff ``pk_R`` was notified and is still
    valid, and the attestation proof verifies."""
    if notified_keys.get(bundle.statement.pk_r, -1.0) <= now:
        return Phase.INTERRUPTED
    return Phase.AUTHORIZED if verify(bundle.statement, bundle.proof) else Phase.INTERRUPTED


def splice(session: ChainState, exit_addr: str, now: float) -> None:
    """Install the S<->A forwarding rule at the relay."""
    if session.phase is not Phase.LOOKUP_PENDING or session.exit is None:
        raise PreconditionError("splice needs a completed lookup naming an exit node")
    if exit_addr != session.exit:
        raise PreconditionError("splice target differs from the looked-up exit")
    session.advance(Phase.SPLICING, now)
    session.marks["splice"] = now


# -- actors ---------------------------------------------------------------


@dataclass
class ChainConfig:
    window_ms: float = 30_000.0
    tunnel_timeout_ms: float = 2_000.0
    notify_wait_ms: float = 2_000.0
    tunnel_retries: int = 1


@dataclass
class Directory:
    """Name resolution for destinations (stands in for DNS/ESNI key records)."""

    entries: dict[str, tuple[str, int]] = field(default_factory=dict)

    def resolve(self, domain: str) -> tuple[str, int]:
        return self.entries[domain.strip().lower()]


@dataclass
class World:
    sim: Simulator
    net: Network
    params: GroupParams
    config: ChainConfig = field(default_factory=ChainConfig)
    directory: Directory = field(default_factory=Directory)
    sessions: dict[str, ChainState] = field(default_factory=dict)
    peers: dict[str, Peer] = field(default_factory=dict)
    destinations: dict[str, Destination] = field(default_factory=dict)
    timings: list[tuple[str, str, float]] = field(default_factory=list)


class Destination:
    """A TLS server ``D`` hosting ``names``; resets a connection whose
    endpoint changes and checks the encrypted SNI on every ClientHello."""

    def __init__(self, world: World, address: str, names: list[str], keypair: Keypair) -> None:
        self.world = world
        self.address = address
        self.names = [n.lower() for n in names]
        self.keypair = keypair
        self.endpoint: dict[str, str | None] = {}
        self.delivered: dict[str, dict[int, float]] = {}
        self.endpoints_seen: dict[str, list[str]] = {}
        self.sni_matches: dict[str, list[str | None]] = {}
        world.net.attach(address, self.handle)

    def _reply(self, dst: str, event: str, session: str) -> None:
        self.world.net.send(self.address, dst, HandshakeEvent(event, session))

    def handle(self, msg, src: str) -> None:
        if not isinstance(msg, HandshakeEvent):
            return
        sid = msg.session
        seen = self.endpoints_seen.setdefault(sid, [])
        if not seen or seen[-1] != src:
            seen.append(src)
        if msg.event == "ClientHello":
            self.endpoint[sid] = src
            c_sni, _ = parse_hello(self.world.params, msg.payload)
            name = domain_decrypt_sni_check(self.world.params, c_sni, self.keypair.sk, self.names)
            self.sni_matches.setdefault(sid, []).append(name)
            if name is not None:
                self._reply(src, "ServerHello", sid)
        elif msg.event == "AppData":
            current = self.endpoint.get(sid)
            if current is not None and current != src:
                # Segment for an established connection from a new address.
                self.endpoint[sid] = None
                self._reply(src, "TcpRst", sid)
                return
            if msg.seq > 0:
                self.delivered.setdefault(sid, {}).setdefault(msg.seq, self.world.sim.now)


class Peer:
    """A dVPN participant: DHT node plus client, relay and exit roles."""

    def __init__(
        self, world: World, address: str, *, dht_config: DhtConfig = DhtConfig(), rng: random.Random | None = None
    ) -> None:
        self.world = world
        self.address = address
        self.rng = rng or random.Random(address)
        self.dht = DhtNode(world.sim, world.net, world.params, address, config=dht_config, rng=self.rng)
        self.refuse_tunnels = False
        # relay role: session -> client address / exit address
        self.relay_clients: dict[str, str] = {}
        self.relay_exits: dict[str, str] = {}
        self._ack_waiters: dict[str, Future] = {}
        # exit role
        self.exit_relays: dict[str, str] = {}
        self.exit_buffers: dict[str, list[HandshakeEvent]] = {}
        self.exit_authorized: set[str] = set()
        self.exit_closed: set[str] = set()
        # client role
        self.client_ctx: dict[str, dict] = {}
        world.peers[address] = self
        world.net.attach(address, self.handle)

    @property
    def sim(self) -> Simulator:
        return self.world.sim

    @property
    def params(self) -> GroupParams:
        return self.world.params

    def _send(self, dst: str, msg, **kw) -> None:
        self.world.net.send(self.address, dst, msg, **kw)

    def handle(self, msg, src: str) -> None:
        if msg.kind in DHT_KINDS:
            self.dht.handle(msg, src)
            return
        handler = getattr(self, "_on_" + msg.kind.lower(), None)
        if handler is not None:
            handler(msg, src)

    def _state(self, session: str) -> ChainState | None:
        return self.world.sessions.get(session)

    # ---------------------------------------------------------------- client

    def start_session(
        self,
        domain: str,
        relay: str,
        *,
        proof_delay_ms: float = 0.0,
        app_interval_ms: float = 500.0,
        app_after_auth: int = 3,
        pk_d: int | None = None,
    ) -> ChainState:
        """Open the temporary tunnel to ``relay`` and start the lookup.

        ``pk_d`` overrides the destination key the client encrypts its SNI
        under (defaults to the directory entry).
        """
        sim = self.sim
        dst_addr, dir_pk = self.world.directory.resolve(domain)
        sid = self.rng.randbytes(8).hex()
        state = ChainState(sid, self.address, relay, dst_addr, domain.strip().lower())
        self.world.sessions[sid] = state
        if relay == self.address or not self.world.net.reachable(relay):
            state.error = "relay unreachable"
            return state
        pk_d = dir_pk if pk_d is None else pk_d
        eph = keygen(self.params, self.rng)
        ctx = self.client_ctx[sid] = {
            "pk_d": pk_d,
            "eph": eph,
            "lookup": None,
            "generated": {},
            "proof_delay_ms": proof_delay_ms,
            "seq": 0,
        }
        state.advance(Phase.TEMP_TUNNEL, sim.now)
        state.window_deadline = sim.now + self.world.config.window_ms
        state.marks["start"] = sim.now
        self._send(relay, TunnelOpen(sid))
        c_sni, _, _ = encrypt_sni(self.params, state.domain, pk_d, self.rng)
        self._tunnel(state, HandshakeEvent("ClientHello", sid, 0, hello_payload(self.params, c_sni)))
        ctx["lookup"] = self.dht.lookup_value(key_for_domain(state.domain), relay, eph.pk, sid)
        state.advance(Phase.LOOKUP_PENDING, sim.now)
        state.marks["lookup_start"] = sim.now
        sim.process(self._app_traffic(state, app_interval_ms, app_after_auth))
        return state

    def _tunnel(self, state: ChainState, inner: HandshakeEvent) -> None:
        self._send(state.relay, TunnelData(state.session_id, inner))

    def _app_traffic(self, state: ChainState, interval: float, after_auth: int):
        ctx = self.client_ctx[state.session_id]
        sent_after = 0
        while True:
            if state.phase is Phase.INTERRUPTED or ctx.get("torn_down"):
                return
            if state.phase is Phase.AUTHORIZED:
                if sent_after >= after_auth:
                    return
                sent_after += 1
            ctx["seq"] += 1
            ctx["generated"][ctx["seq"]] = self.sim.now
            self._tunnel(state, HandshakeEvent("AppData", state.session_id, ctx["seq"], b"app"))
            yield interval

    def _on_lookup_result(self, msg: LookupResult, src: str) -> None:
        ctx = self.client_ctx.get(msg.session)
        if ctx is not None:
            ctx["response"] = msg.response

    def _on_teardown(self, msg: Teardown, src: str) -> None:
        state = self._state(msg.session)
        if state is None:
            return
        if msg.session in self.client_ctx and src == state.relay:
            self.client_ctx[msg.session]["torn_down"] = True
            state.interrupt(self.sim.now, msg.reason)
        elif self.relay_clients.get(msg.session):
            self._relay_teardown(state, msg.reason, notify_exit=False)
        else:
            self._exit_close(msg.session)

    def rehandshake(self, state: ChainState) -> HandshakeEvent | None:
        """Send a fresh ClientHello carrying the attestation bundle."""
        ctx = self.client_ctx[state.session_id]
        if state.phase is not Phase.AWAITING_PROOF:
            raise PreconditionError("re-handshake only after the connection reset")
        response: ValueResponse | None = ctx.get("response")
        if response is None or not response.found:
            state.interrupt(self.sim.now, "no lookup result at client")
            return None
        t0 = time.perf_counter()
        try:
            bundle, c_sni = make_attestation(
                self.params,
                ctx["eph"].sk,
                response.c_pkd,
                response.sig_r,
                response.pk_r,
                state.domain,
                self.rng,
                pk_d=ctx["pk_d"],
            )
        except (InconsistentWitness, SignatureInvalid) as exc:
            state.interrupt(self.sim.now, f"proof construction failed: {exc}")
            self._send(state.relay, Teardown(state.session_id, "proof construction failed"))
            return None
        self.world.timings.append((state.session_id, "prove_time", (time.perf_counter() - t0) * 1000.0))
        state.attestation = bundle
        hello = HandshakeEvent("ClientHello", state.session_id, 0, hello_payload(self.params, c_sni, bundle))
        state.marks["rehandshake"] = self.sim.now
        self._tunnel(state, hello)
        return hello

    # ----------------------------------------------------------------- relay

    def _on_tunnel_open(self, msg: TunnelOpen, src: str) -> None:
        if msg.pk_r:
            self._exit_open(msg, src)
            return
        state = self._state(msg.session)
        if state is not None and state.phase.terminal:
            return
        if state is None or self.refuse_tunnels:
            self._send(src, TunnelAck(msg.session, False))
            return
        self.relay_clients[msg.session] = src
        self.dht.value_listeners[msg.session] = lambda resp, sid=msg.session: self._relay_value(sid, resp)
        self.sim.schedule(max(0.0, state.window_deadline - self.sim.now), self._relay_deadline, msg.session)
        self._send(src, TunnelAck(msg.session, True))

    def _relay_deadline(self, sid: str) -> None:
        state = self._state(sid)
        if state is not None and enforce_window(state, self.sim.now) == "drop":
            self._relay_teardown(state, "attestation window expired")

    def _relay_teardown(self, state: ChainState, reason: str, notify_exit: bool = True) -> None:
        sid = state.session_id
        state.interrupt(self.sim.now, reason)
        client = self.relay_clients.pop(sid, None)
        exit_addr = self.relay_exits.pop(sid, None)
        if exit_addr is None and sid in self._ack_waiters:
            exit_addr = state.exit  # second leg still being set up
        self.dht.value_listeners.pop(sid, None)
        if client is not None:
            self._send(client, Teardown(sid, reason))
        if exit_addr is not None and notify_exit:
            self._send(exit_addr, Teardown(sid, reason))

    def _relay_value(self, sid: str, response: ValueResponse) -> None:
        state = self._state(sid)
        client = self.relay_clients.get(sid)
        if state is None or client is None:
            return
        state.marks["lookup_done"] = self.sim.now
        self._send(client, LookupResult(sid, response))
        if not response.found or state.phase is not Phase.LOOKUP_PENDING:
            return
        state.exit = response.provider_addr
        self.sim.process(self._open_second_leg(state, response.provider_addr, response.pk_r))

    def _open_second_leg(self, state: ChainState, exit_addr: str, pk_r: int):
        sid = state.session_id
        for _attempt in range(1 + self.world.config.tunnel_retries):
            fut = self.sim.process(self._await_ack(sid, exit_addr, pk_r))
            yield fut
            if fut.value:
                if state.phase is Phase.LOOKUP_PENDING:
                    splice(state, exit_addr, self.sim.now)
                    self.relay_exits[sid] = exit_addr
                    # The next segment of the live connection now leaves via A.
                    self._send(exit_addr, TunnelData(sid, HandshakeEvent("AppData", sid, 0, b"")))
                return
            if state.phase.terminal:
                return
        self._relay_teardown(state, "second leg setup failed")

    def _await_ack(self, sid: str, exit_addr: str, pk_r: int):
        fut = self._ack_waiters[sid] = Future()
        self._send(exit_addr, TunnelOpen(sid, pk_r))
        yield Wait([fut], self.world.config.tunnel_timeout_ms)
        self._ack_waiters.pop(sid, None)
        return bool(fut.done and fut.value)

    def _on_tunnel_ack(self, msg: TunnelAck, src: str) -> None:
        fut = self._ack_waiters.get(msg.session)
        if fut is not None:
            fut.set_result(msg.ok)

    def _on_tunnel_data(self, msg: TunnelData, src: str) -> None:
        sid = msg.session
        state = self._state(sid)
        if state is None:
            return
        if msg.upstream:
            if self.relay_clients.get(sid) == src:
                self._relay_upstream(state, msg)
            elif self.exit_relays.get(sid) == src:
                self._exit_upstream(state, msg.inner)
        elif self.relay_exits.get(sid) == src and sid in self.relay_clients:
            self._send(self.relay_clients[sid], TunnelData(sid, msg.inner, upstream=False))
        elif sid in self.client_ctx and src == state.relay:
            self._client_downstream(state, msg.inner)

    def _relay_upstream(self, state: ChainState, msg: TunnelData) -> None:
        if enforce_window(state, self.sim.now) == "drop":
            if state.phase is Phase.INTERRUPTED and state.session_id in self.relay_clients:
                self._relay_teardown(state, state.error or "attestation window expired")
            return
        exit_addr = self.relay_exits.get(state.session_id)
        if exit_addr is not None:
            self._send(exit_addr, TunnelData(state.session_id, msg.inner))
        else:
            self._send(state.destination, msg.inner)

    # ------------------------------------------------------------------ exit

    def _exit_close(self, sid: str) -> None:
        self.exit_closed.add(sid)
        self.exit_relays.pop(sid, None)
        self.exit_buffers.pop(sid, None)

    def _exit_open(self, msg: TunnelOpen, src: str) -> None:
        if msg.session in self.exit_closed:
            return
        if self.refuse_tunnels:
            self._send(src, TunnelAck(msg.session, False))
            return
        if self.dht.key_valid(msg.pk_r):
            self._exit_accept(msg.session, src)
            return
        # Hold the tunnel until the responsible node's notification arrives.
        deadline = self.sim.now + self.world.config.notify_wait_ms

        def on_notify(note, sid=msg.session, relay=src):
            if note.pk_r == msg.pk_r and self.sim.now <= deadline:
                self.dht.notify_listeners.remove(on_notify)
                if sid not in self.exit_closed:
                    self._exit_accept(sid, relay)

        def give_up():
            if on_notify in self.dht.notify_listeners:
                self.dht.notify_listeners.remove(on_notify)
                if msg.session not in self.exit_closed:
                    self._send(src, TunnelAck(msg.session, False))

        self.dht.notify_listeners.append(on_notify)
        self.sim.schedule(self.world.config.notify_wait_ms, give_up)

    def _exit_accept(self, sid: str, relay: str) -> None:
        self.exit_relays[sid] = relay
        state = self._state(sid)
        if state is not None:
            state.marks.setdefault("exit_accept", self.sim.now)
        self._send(relay, TunnelAck(sid, True))

    def _exit_upstream(self, state: ChainState, inner: HandshakeEvent) -> None:
        sid = state.session_id
        if sid in self.exit_authorized:
            self._send(state.destination, inner)
            return
        if inner.event == "ClientHello":
            self._exit_gate(state, inner)
        elif inner.event == "AppData" and not inner.payload:
            # Bare segment of the existing flow: lets D notice the new endpoint.
            self._send(state.destination, inner)
        elif inner.event == "AppData":
            self.exit_buffers.setdefault(sid, []).append(inner)

    def _exit_gate(self, state: ChainState, hello: HandshakeEvent) -> None:
        sid = state.session_id
        try:
            c_sni, raw_bundle = parse_hello(self.params, hello.payload)
            bundle = AttestationBundle.decode(raw_bundle)
        except (DecodeError, ValueError):
            bundle = None
        t0 = time.perf_counter()
        outcome = gate(bundle, self.dht.notified, self.sim.now) if bundle else Phase.INTERRUPTED
        self.world.timings.append((sid, "verify_time", (time.perf_counter() - t0) * 1000.0))
        if state.phase is not Phase.AWAITING_PROOF:
            return
        if outcome is Phase.AUTHORIZED:
            state.advance(Phase.AUTHORIZED, self.sim.now)
            state.marks["authorized"] = self.sim.now
            self.exit_authorized.add(sid)
            self._send(state.destination, HandshakeEvent("ClientHello", sid, 0, hello_payload(self.params, c_sni)))
            for pending in self.exit_buffers.pop(sid, []):
                self._send(state.destination, pending)
            self._send(self.exit_relays[sid], Authorized(sid))
        else:
            state.interrupt(self.sim.now, "attestation rejected")
            self.exit_buffers.pop(sid, None)
            relay = self.exit_relays.pop(sid, None)
            if relay is not None:
                self._send(relay, Teardown(sid, "attestation rejected"))

    def _from_destination(self, msg: HandshakeEvent, src: str) -> None:
        """A packet from D: an exit passes it back to its relay, a relay
        still on the temporary tunnel passes it straight to the client."""
        sid = msg.session
        if sid in self.exit_relays:
            self._send(self.exit_relays[sid], TunnelData(sid, msg, upstream=False))
        elif sid in self.relay_clients and sid not in self.relay_exits:
            self._send(self.relay_clients[sid], TunnelData(sid, msg, upstream=False))

    _on_server_hello = _from_destination
    _on_tcp_rst = _from_destination
    _on_app_data = _from_destination

    # -------------------------------------------------- client downstream

    def _client_downstream(self, state: ChainState, inner: HandshakeEvent) -> None:
        if inner.event == "TcpRst" and state.phase is Phase.SPLICING:
            state.advance(Phase.AWAITING_PROOF, self.sim.now)
            state.marks["rst"] = self.sim.now
            delay = self.client_ctx[state.session_id]["proof_delay_ms"]
            self.sim.schedule(delay, self._rehandshake_if_waiting, state)
        elif inner.event == "ServerHello":
            state.marks.setdefault("server_hello", self.sim.now)
            state.marks["last_server_hello"] = self.sim.now

    def _rehandshake_if_waiting(self, state: ChainState) -> None:
        if state.phase is Phase.AWAITING_PROOF:
            self.rehandshake(state)
