"""A Kademlia node as a single-threaded actor on the simulated network.

Besides the usual PING/STORE/FIND_NODE traffic the node implements the
privacy-preserving value lookup: the client iterates FIND_NODE itself, then
sends one FIND_VALUE that names a relay as ``reply_to``. The responsible node
answers the relay with the provider address, an ElGamal encryption of the
domain key under the client's ephemeral key and a signature over that
ciphertext, and separately notifies the provider of its signing key.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable

from ..crypto.elgamal import Keypair, elgamal_encrypt, keygen
from ..crypto.group import GroupParams
from ..crypto.schnorr import schnorr_sign
from ..simnet import Future, Network, Simulator, Wait
from .messages import (
    FindNode,
    FindValue,
    Nodes,
    NotifyA,
    Ping,
    Pong,
    Store,
    StoreAck,
    ValueResponse,
    WhitelistEntry,
)
from .routing import ID_BITS, Contact, RoutingTable, bucket_index, key_for_domain, node_id_for, xor_distance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DhtConfig:
    k: int = 8
    alpha: int = 3
    r_rep: int = 3
    ttl_s: float = 1800.0
    max_rounds: int = 32
    rpc_timeout_ms: float = 1000.0
    notify_window_s: float = 120.0

    def __post_init__(self) -> None:
        if self.k < 1 or self.alpha < 1 or self.r_rep < 1:
            raise ValueError("k, alpha and r_rep must be positive")
        if self.ttl_s <= 0 or self.notify_window_s <= 0:
            raise ValueError("ttl and notify window must be positive")


@dataclass
class LookupTrace:
    """What happened during one client-side value lookup."""

    rpc_id: str
    key: int
    initiator: str
    reply_to: str
    start: float
    rounds: int = 0
    responder: str | None = None
    intermediates: list[str] = field(default_factory=list)
    status: str = "pending"

    @property
    def hops(self) -> int:
        """Sequential request/response exchanges: FIND_NODE rounds plus the
        remote FIND_VALUE exchange."""
        return self.rounds + (1 if self.status == "sent" else 0)


@dataclass
class AnnounceResult:
    key: int
    stored_on: list[str]
    deferred: bool = False


class DhtNode:
    def __init__(
        self,
        sim: Simulator,
        net: Network,
        params: GroupParams,
        address: str,
        *,
        config: DhtConfig = DhtConfig(),
        rng: random.Random | None = None,
    ) -> None:
        self.sim = sim
        self.net = net
        self.params = params
        self.address = address
        self.config = config
        self.rng = rng or random.Random(address)
        self.node_id = node_id_for(address, self.rng.randbytes(8))
        self.table = RoutingTable(self.node_id, config.k)
        self.store: dict[int, dict[str, WhitelistEntry]] = {}
        self.signing_key: Keypair = keygen(params, self.rng)
        self.notified: dict[int, float] = {}
        self.value_listeners: dict[str, Callable[[ValueResponse], None]] = {}
        self.notify_listeners: list[Callable[[NotifyA], None]] = []
        self._pending: dict[str, Future] = {}

    # -- plumbing ---------------------------------------------------------

    def _rpc_id(self) -> str:
        return self.rng.randbytes(8).hex()

    def _send(self, dst: str, msg, **kw) -> None:
        self.net.send(self.address, dst, msg, **kw)

    def _rpc(self, dst: str, msg) -> Future:
        fut = Future()
        self._pending[msg.rpc_id] = fut
        self._send(dst, msg, lossy=True)
        return fut

    def _seen(self, node_id: int, address: str) -> None:
        self.table.update(Contact(node_id, address, self.sim.now))

    def contact(self) -> Contact:
        return Contact(self.node_id, self.address, self.sim.now)

    def handle(self, msg, src: str) -> None:
        handler = getattr(self, "_on_" + msg.kind.lower(), None)
        if handler is None:
            log.debug("%s ignoring %s", self.address, msg.kind)
            return
        handler(msg, src)

    def _resolve(self, msg, src: str) -> None:
        self._seen(msg.sender_id, msg.sender_addr)
        fut = self._pending.pop(msg.rpc_id, None)
        if fut is not None:
            fut.set_result(msg)

    _on_pong = _resolve
    _on_store_ack = _resolve
    _on_nodes = _resolve

    def _on_ping(self, msg: Ping, src: str) -> None:
        self._seen(msg.sender_id, msg.sender_addr)
        self._send(msg.sender_addr, Pong(msg.rpc_id, self.node_id, self.address), lossy=True)

    def _on_store(self, msg: Store, src: str) -> None:
        self._seen(msg.sender_id, msg.sender_addr)
        ok = self.handle_store(msg.entry, self.sim.now)
        self._send(msg.sender_addr, StoreAck(msg.rpc_id, self.node_id, self.address, ok), lossy=True)

    def _on_find_node(self, msg: FindNode, src: str) -> None:
        self._seen(msg.sender_id, msg.sender_addr)
        found = tuple((c.node_id, c.address) for c in self.handle_find_node(msg.target))
        self._send(msg.sender_addr, Nodes(msg.rpc_id, self.node_id, self.address, found), lossy=True)

    def _on_find_value(self, msg: FindValue, src: str) -> None:
        # No routing update: the request deliberately carries no sender identity.
        self.respond_value(msg.key, msg.reply_to, msg.pk_eg, msg.rpc_id)

    def _on_value_response(self, msg: ValueResponse, src: str) -> None:
        listener = self.value_listeners.pop(msg.rpc_id, None)
        if listener is not None:
            listener(msg)

    def _on_notify_a(self, msg: NotifyA, src: str) -> None:
        self.notified[msg.pk_r] = max(self.notified.get(msg.pk_r, 0.0), msg.valid_until)
        for cb in list(self.notify_listeners):
            cb(msg)

    # -- storage ----------------------------------------------------------

    def handle_store(self, entry: WhitelistEntry, now: float) -> bool:
        """Store ``entry`` unless already expired; re-publication replaces the
        previous entry for the same (key, provider)."""
        if entry.expires_at <= now:
            return False
        self.store.setdefault(entry.key, {})[entry.provider_addr] = entry
        return True

    def expire_entries(self, now: float) -> int:
        purged = 0
        for key in list(self.store):
            bucket = self.store[key]
            for provider in [p for p, e in bucket.items() if e.expires_at <= now]:
                del bucket[provider]
                purged += 1
            if not bucket:
                del self.store[key]
        return purged

    def live_entries(self, key: int) -> list[WhitelistEntry]:
        self.expire_entries(self.sim.now)
        return list(self.store.get(key, {}).values())

    def handle_find_node(self, target: int) -> list[Contact]:
        return self.table.closest(target, self.config.k)

    def key_valid(self, pk_r: int) -> bool:
        """True if ``pk_r`` was notified and its window is still open."""
        return self.notified.get(pk_r, -1.0) > self.sim.now

    # -- iterative search -------------------------------------------------

    def _iterate(self, target: int, skip: frozenset[str] = frozenset()):
        """Generator: iterative FIND_NODE. Returns ``(closest, rounds, queried)``.

        Contacts whose address is in ``skip`` are never queried (they may
        still be returned).
        """
        cfg = self.config
        candidates = {c.node_id: c for c in self.table.closest(target, cfg.k)}
        queried: set[int] = set()
        order: list[str] = []
        rounds = 0
        while rounds < cfg.max_rounds:
            ranked = sorted(candidates.values(), key=lambda c: xor_distance(c.node_id, target))
            batch = [c for c in ranked[: cfg.k] if c.node_id not in queried and c.address not in skip]
            batch = batch[: cfg.alpha]
            if not batch:
                break
            rounds += 1
            requests = [FindNode(self._rpc_id(), self.node_id, self.address, target) for _ in batch]
            futures = [self._rpc(c.address, req) for c, req in zip(batch, requests)]
            yield Wait(futures, cfg.rpc_timeout_ms)
            for c, req, fut in zip(batch, requests, futures):
                queried.add(c.node_id)
                order.append(c.address)
                if not fut.done:
                    self._pending.pop(req.rpc_id, None)
                    candidates.pop(c.node_id, None)
                    continue
                for node_id, address in fut.value.contacts:
                    if node_id != self.node_id and node_id not in candidates and node_id not in queried:
                        candidates[node_id] = Contact(node_id, address, self.sim.now)
        ranked = sorted(candidates.values(), key=lambda c: xor_distance(c.node_id, target))
        return ranked[: cfg.k], rounds, order

    def find_node(self, target: int) -> Future:
        return self.sim.process(self._iterate(target))

    def join(self, bootstrap: Contact | None) -> Future:
        """Learn ``bootstrap``, look up our own identifier, then refresh every
        bucket farther away than the closest neighbour found."""

        def run():
            if bootstrap is not None:
                self._seen(bootstrap.node_id, bootstrap.address)
            yield from self._iterate(self.node_id)
            if len(self.table):
                nearest = self.table.closest(self.node_id, 1)[0].node_id
                for i in range(bucket_index(self.node_id, nearest) + 1, ID_BITS):
                    # A random identifier at distance [2^i, 2^(i+1)) from ours.
                    offset = (1 << i) | self.rng.getrandbits(i)
                    yield from self._iterate(self.node_id ^ offset)
            return len(self.table)

        return self.sim.process(run())

    # -- announce ---------------------------------------------------------

    def announce(self, whitelist: Iterable[tuple[str, int]], ttl_s: float | None = None) -> Future:
        """Publish each ``(domain, pk_D)`` on the ``r_rep`` closest nodes and
        schedule re-publication at half the TTL.

        A node without contacts keeps the entries itself and marks the result
        deferred; the scheduled re-publication retries the fan-out.
        """
        whitelist = list(whitelist)
        ttl_ms = (ttl_s if ttl_s is not None else self.config.ttl_s) * 1000.0

        def one(domain: str, pk_d: int):
            key = key_for_domain(domain)
            entry = WhitelistEntry(key, self.address, pk_d, self.sim.now + ttl_ms)
            if len(self.table) == 0:
                self.handle_store(entry, self.sim.now)
                return AnnounceResult(key, [self.address], deferred=True)
            closest, _, _ = yield from self._iterate(key)
            targets = sorted([*closest, self.contact()], key=lambda c: xor_distance(c.node_id, key))
            targets = targets[: self.config.r_rep]
            futures = []
            for c in targets:
                if c.node_id == self.node_id:
                    self.handle_store(entry, self.sim.now)
                else:
                    futures.append(self._rpc(c.address, Store(self._rpc_id(), self.node_id, self.address, entry)))
            if futures:
                yield Wait(futures, self.config.rpc_timeout_ms)
            return AnnounceResult(key, [c.address for c in targets])

        def run():
            procs = [self.sim.process(one(d, pk)) for d, pk in whitelist]
            yield Wait(procs)
            return [p.value for p in procs]

        self.sim.schedule(ttl_ms / 2, self.announce, whitelist, ttl_s)
        return self.sim.process(run())

    # -- value lookup -----------------------------------------------------

    def lookup_value(
        self, key: int, reply_to: str, pk_eg: int, rpc_id: str, exclude: Iterable[str] = ()
    ) -> Future:
        """Client-side lookup whose answer is delivered at ``reply_to``.

        Nodes in ``exclude`` and ``reply_to`` are neither queried nor chosen as
        the responder, so the relay never sees the lookup key.
        """
        exclude = frozenset({self.address, reply_to, *exclude})

        def run():
            trace = LookupTrace(rpc_id, key, self.address, reply_to, self.sim.now)
            closest, rounds, order = yield from self._iterate(key, exclude)
            trace.rounds = rounds
            trace.intermediates = order
            if rounds >= self.config.max_rounds:
                trace.status = "timeout"
                return trace
            remote = [c for c in closest if c.address not in exclude]
            if remote:
                trace.responder = remote[0].address
                trace.status = "sent"
                self._send(remote[0].address, FindValue(rpc_id, key, reply_to, pk_eg), lossy=True, apparent_src=reply_to)
            else:
                trace.responder = self.address
                trace.status = "local"
                self.respond_value(key, reply_to, pk_eg, rpc_id)
            return trace

        return self.sim.process(run())

    def respond_value(self, key: int, reply_to: str, pk_eg: int, rpc_id: str) -> tuple[ValueResponse, NotifyA | None]:
        """Answer a FIND_VALUE: pick one live entry uniformly at random,
        encrypt its domain key under ``pk_eg``, sign, reply to ``reply_to``
        and notify the provider."""
        pp = self.params
        entries = sorted(self.live_entries(key), key=lambda e: e.provider_addr)
        if not entries or not pp.is_element(pk_eg):
            response = ValueResponse(rpc_id, False)
            self._send(reply_to, response, lossy=True)
            return response, None
        entry = entries[self.rng.randrange(len(entries))]
        c_pkd, _ = elgamal_encrypt(pp, entry.pk_d, pk_eg, self.rng)
        sig = schnorr_sign(pp, c_pkd.encode(pp), self.signing_key.sk, self.rng)
        response = ValueResponse(rpc_id, True, entry.provider_addr, c_pkd, sig, self.signing_key.pk)
        notify = NotifyA(self.signing_key.pk, self.sim.now + self.config.notify_window_s * 1000.0)
        self._send(entry.provider_addr, notify)
        self._send(reply_to, response, lossy=True)
        return response, notify
