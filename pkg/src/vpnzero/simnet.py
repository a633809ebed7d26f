"""Deterministic discrete-event core and simulated network.

Events are ordered by ``(time, sequence)``; every random draw comes from a
seeded :class:`random.Random`, so a seed fixes the whole run. Time is in
simulated milliseconds.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import random
from dataclasses import dataclass
from typing import Any, Callable, Generator, Iterable


class Future:
    """A value that becomes available at some simulated instant."""

    __slots__ = ("done", "value", "_callbacks")

    def __init__(self) -> None:
        self.done = False
        self.value: Any = None
        self._callbacks: list[Callable[[Future], None]] = []

    def set_result(self, value: Any = None) -> None:
        if self.done:
            return
        self.done = True
        self.value = value
        callbacks, self._callbacks = self._callbacks, []
        for cb in callbacks:
            cb(self)

    def add_callback(self, cb: Callable[[Future], None]) -> None:
        if self.done:
            cb(self)
        else:
            self._callbacks.append(cb)


@dataclass
class Wait:
    """Yielded by a process: resume once every future is done or ``timeout`` ms pass."""

    futures: list[Future]
    timeout: float | None = None


class Simulator:
    def __init__(self, seed: int = 0) -> None:
        self.now = 0.0
        self.seed = seed
        self.rng = random.Random(seed)
        self._queue: list = []
        self._seq = itertools.count()

    def schedule(self, delay: float, fn: Callable, *args) -> list:
        if delay < 0:
            raise ValueError("cannot schedule in the past")
        entry = [self.now + delay, next(self._seq), fn, args, True]
        heapq.heappush(self._queue, entry)
        return entry

    @staticmethod
    def cancel(entry: list) -> None:
        entry[4] = False

    def step(self) -> bool:
        while self._queue:
            t, _, fn, args, live = heapq.heappop(self._queue)
            if not live:
                continue
            self.now = t
            fn(*args)
            return True
        return False

    def peek(self) -> float | None:
        while self._queue and not self._queue[0][4]:
            heapq.heappop(self._queue)
        return self._queue[0][0] if self._queue else None

    def run(self, until: float | None = None) -> None:
        """Process events up to and including time ``until`` (or until idle)."""
        while True:
            nxt = self.peek()
            if nxt is None or (until is not None and nxt > until):
                break
            self.step()
        if until is not None and until > self.now:
            self.now = until

    def run_until(self, predicate: Callable[[], bool], limit: float = float("inf")) -> bool:
        """Step until ``predicate()`` holds; False if the queue drains or ``limit`` passes."""
        while not predicate():
            nxt = self.peek()
            if nxt is None or nxt > limit:
                return False
            self.step()
        return True

    def process(self, gen: Generator) -> Future:
        """Drive a generator-based process; the returned future holds its return value."""
        result = Future()
        self.schedule(0, self._resume, gen, result, None)
        return result

    def _resume(self, gen: Generator, result: Future, value: Any) -> None:
        try:
            cmd = gen.send(value)
        except StopIteration as stop:
            result.set_result(stop.value)
            return
        if isinstance(cmd, (int, float)):
            self.schedule(cmd, self._resume, gen, result, None)
        elif isinstance(cmd, Future):
            self._wait(gen, result, Wait([cmd]))
        elif isinstance(cmd, Wait):
            self._wait(gen, result, cmd)
        else:
            raise TypeError(f"process yielded unsupported value {cmd!r}")

    def _wait(self, gen: Generator, result: Future, wait: Wait) -> None:
        state = {"fired": False, "timer": None}

        def finish() -> None:
            if state["fired"]:
                return
            state["fired"] = True
            if state["timer"] is not None:
                self.cancel(state["timer"])
            self.schedule(0, self._resume, gen, result, None)

        def on_done(_: Future) -> None:
            if all(f.done for f in wait.futures):
                finish()

        if wait.timeout is not None:
            state["timer"] = self.schedule(wait.timeout, finish)
        for f in wait.futures:
            f.add_callback(on_done)
        if not wait.futures:
            finish()


# -- latency models -------------------------------------------------------


@dataclass(frozen=True)
class FixedLatency:
    ms: float

    def sample(self, rng: random.Random) -> float:
        return self.ms

    @property
    def bounds(self) -> tuple[float, float]:
        return self.ms, self.ms

    def __str__(self) -> str:
        return f"fixed:{self.ms:g}"


@dataclass(frozen=True)
class UniformLatency:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not 0 <= self.lo <= self.hi:
            raise ValueError("uniform latency needs 0 <= lo <= hi")

    def sample(self, rng: random.Random) -> float:
        return rng.uniform(self.lo, self.hi)

    @property
    def bounds(self) -> tuple[float, float]:
        return self.lo, self.hi

    def __str__(self) -> str:
        return f"uniform:{self.lo:g}:{self.hi:g}"


def parse_latency(spec: str) -> FixedLatency | UniformLatency:
    """Parse ``fixed:MS`` or ``uniform:LO:HI``."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "fixed":
            ms = float(rest)
            if ms < 0:
                raise ValueError
            return FixedLatency(ms)
        if kind == "uniform":
            lo, hi = (float(x) for x in rest.split(":"))
            return UniformLatency(lo, hi)
    except ValueError:
        pass
    raise ValueError(f"bad latency spec {spec!r}; use fixed:MS or uniform:LO:HI")


# -- network --------------------------------------------------------------


@dataclass(frozen=True)
class Observation:
    """What a node saw arrive: the apparent sender and the full payload."""

    time: float
    src: str
    kind: str
    session: str
    payload: bytes


@dataclass
class LogEvent:
    time: float
    node: str
    direction: str
    kind: str
    session: str
    digest: str

    def line(self) -> str:
        return f"{self.time:.3f},{self.node},{self.direction},{self.kind},{self.session},{self.digest}"


LOG_HEADER = "time,node,direction,event_kind,session_id,payload_digest"


def payload_digest(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()[:16]


class Network:
    """Message delivery between addressed actors.

    ``lossy`` messages (datagrams) are dropped with probability ``loss_rate``;
    reliable messages are never dropped and stay FIFO per link, like a TCP
    stream. Sending to a down or unknown address silently loses the message.
    """

    def __init__(self, sim: Simulator, latency, loss_rate: float = 0.0, params=None) -> None:
        if not 0 <= loss_rate < 1:
            raise ValueError("loss_rate must lie in [0, 1)")
        self.sim = sim
        self.latency = latency
        self.loss_rate = loss_rate
        self.params = params
        self.rng = random.Random(f"net:{sim.seed}")
        self.handlers: dict[str, Callable[[Any, str], None]] = {}
        self.down: set[str] = set()
        self.events: list[LogEvent] = []
        self.observations: dict[str, list[Observation]] = {}
        self._link_clock: dict[tuple[str, str], float] = {}

    def attach(self, address: str, handler: Callable[[Any, str], None]) -> None:
        if address in self.handlers:
            raise ValueError(f"address {address} already attached")
        self.handlers[address] = handler
        self.observations[address] = []

    def reachable(self, address: str) -> bool:
        return address in self.handlers and address not in self.down

    def _log(self, node: str, direction: str, msg, payload: bytes) -> None:
        self.events.append(
            LogEvent(self.sim.now, node, direction, msg.kind, msg.session or "-", payload_digest(payload))
        )

    def send(self, src: str, dst: str, msg, *, lossy: bool = False, apparent_src: str | None = None) -> None:
        payload = msg.encode(self.params)
        self._log(src, "send", msg, payload)
        if src == dst:
            delay = 0.0
        else:
            delay = self.latency.sample(self.rng)
            if lossy and self.loss_rate and self.rng.random() < self.loss_rate:
                self._log(src, "drop", msg, payload)
                return
        arrive = self.sim.now + delay
        if not lossy:
            link = (src, dst)
            arrive = max(arrive, self._link_clock.get(link, 0.0))
            self._link_clock[link] = arrive
        self.sim.schedule(arrive - self.sim.now, self._deliver, dst, msg, payload, apparent_src or src)

    def _deliver(self, dst: str, msg, payload: bytes, src: str) -> None:
        if not self.reachable(dst):
            self._log(dst, "lost", msg, payload)
            return
        self._log(dst, "recv", msg, payload)
        self.observations[dst].append(Observation(self.sim.now, src, msg.kind, msg.session or "-", payload))
        self.handlers[dst](msg, src)

    def event_log(self) -> str:
        return "\n".join([LOG_HEADER, *(e.line() for e in self.events)]) + "\n"


def contains_any(observations: Iterable[Observation], needles: Iterable[bytes]) -> list[tuple[Observation, bytes]]:
    """Every (observation, needle) pair where the needle occurs in the payload
    or the apparent source address."""
    needles = [n for n in needles if n]
    hits = []
    for obs in observations:
        blob = obs.payload + b"\x00" + obs.src.encode()
        for n in needles:
            if n in blob:
                hits.append((obs, n))
    return hits
