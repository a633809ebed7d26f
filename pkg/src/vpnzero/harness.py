"""Scenario runner, benchmarks and CSV/percentile reporting."""

from __future__ import annotations

import csv
import json
import math
import random
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable

from .attestation import make_attestation, verify
from .chain import ChainConfig, ChainState, Destination, Peer, Phase, World
from .crypto.elgamal import elgamal_encrypt, keygen
from .crypto.group import group_setup
from .crypto.schnorr import schnorr_sign
from .dht.node import DhtConfig, LookupTrace
from .dht.routing import domain_key_bytes, key_for_domain
from .simnet import Network, Observation, Simulator, contains_any, parse_latency

METRICS = ("lookup_duration", "splice_duration", "prove_time", "verify_time", "e2e_setup")
CSV_COLUMNS = ("run_id", "metric", "value_ms", "detail")
PERCENTILES = (10, 25, 50, 75, 90, 95, 99)


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    """Everything that determines a simulated run.

    ``whitelist`` maps each domain to the index of the peer that serves as
    its exit. ``T`` and ``ttl`` are in seconds of simulated time.
    """

    n_nodes: int = 64
    seed: int = 0
    latency: str = "fixed:50"
    loss_rate: float = 0.0
    whitelist: dict[str, int] = field(default_factory=dict)
    group: str = "toy"
    T: float = 30.0
    ttl: float = 1800.0
    k: int = 8
    alpha: int = 3
    r_rep: int = 3

    def validate(self) -> None:
        if self.n_nodes < 1:
            raise ConfigError("n_nodes must be at least 1")
        if not 0 <= self.loss_rate < 1:
            raise ConfigError("loss_rate must lie in [0, 1)")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.T <= 0 or self.ttl <= 0:
            raise ConfigError("T and ttl must be positive")
        if min(self.k, self.alpha, self.r_rep) < 1:
            raise ConfigError("k, alpha and r_rep must be positive")
        for domain, idx in self.whitelist.items():
            if not 0 <= idx < self.n_nodes:
                raise ConfigError(f"provider index {idx} for {domain!r} outside the network")
        try:
            parse_latency(self.latency)
            group_setup(self.group)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, data: dict) -> SimConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> SimConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass(frozen=True)
class MetricsRecord:
    run_id: str
    metric: str
    value_ms: float
    detail: str = ""

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not self.value_ms >= 0:
            raise ValueError("value_ms must be non-negative")


def peer_address(i: int) -> str:
    return f"peer{i:04d}"


def destination_address(i: int) -> str:
    return f"srv{i:04d}"


@dataclass
class SimNetwork:
    """A built world plus the bookkeeping the harness needs."""

    config: SimConfig
    world: World
    peers: list[Peer]
    providers: dict[str, str]

    @property
    def sim(self) -> Simulator:
        return self.world.sim

    def holders(self, domain: str) -> dict[str, str]:
        """Oracle: global scan of every store for live entries of ``domain``."""
        key = key_for_domain(domain)
        found = {}
        for p in self.peers:
            for e in p.dht.live_entries(key):
                found[p.address] = e.provider_addr
        return found


def build_network(config: SimConfig, *, chain: ChainConfig | None = None) -> SimNetwork:
    """Join ``n_nodes`` peers through the first one, announce the whitelist
    and let routing settle."""
    config.validate()
    params = group_setup(config.group)
    sim = Simulator(config.seed)
    net = Network(sim, parse_latency(config.latency), config.loss_rate, params)
    chain = chain or ChainConfig(window_ms=config.T * 1000.0)
    world = World(sim, net, params, chain)
    dht_cfg = DhtConfig(k=config.k, alpha=config.alpha, r_rep=config.r_rep, ttl_s=config.ttl)
    peers = [
        Peer(world, peer_address(i), dht_config=dht_cfg, rng=random.Random(f"{config.seed}:peer:{i}"))
        for i in range(config.n_nodes)
    ]
    boot = peers[0].dht.contact()
    for p in peers[1:]:
        fut = p.dht.join(boot)
        sim.run_until(lambda: fut.done)

    dest_rng = random.Random(f"{config.seed}:destinations")
    by_provider: dict[int, list[tuple[str, int]]] = {}
    providers = {}
    for i, (domain, idx) in enumerate(sorted(config.whitelist.items())):
        name = domain.strip().lower()
        kp = keygen(params, dest_rng)
        addr = destination_address(i)
        world.destinations[addr] = Destination(world, addr, [name], kp)
        world.directory.entries[name] = (addr, kp.pk)
        by_provider.setdefault(idx, []).append((name, kp.pk))
        providers[name] = peer_address(idx)
    pending = [peers[idx].dht.announce(entries) for idx, entries in sorted(by_provider.items())]
    sim.run_until(lambda: all(f.done for f in pending))
    return SimNetwork(config, world, peers, providers)


# -- scenarios ------------------------------------------------------------


@dataclass
class ScenarioResult:
    run_id: str
    state: ChainState
    records: list[MetricsRecord]
    trace: LookupTrace | None
    started: float
    finished: float
    forwarded_after_deadline: int = 0
    missing_app_data: list[int] = field(default_factory=list)


def pick_roles(network: SimNetwork, domain: str, rng: random.Random) -> tuple[Peer, Peer]:
    """Choose a client and a relay, neither of them the domain's exit."""
    provider = network.providers.get(domain.strip().lower())
    pool = [p for p in network.peers if p.address != provider]
    if len(pool) < 2:
        pool = list(network.peers)
    s, x = rng.sample(pool, 2) if len(pool) >= 2 else (pool[0], pool[0])
    return s, x


def run_scenario(
    network: SimNetwork,
    client: Peer,
    relay: Peer,
    domain: str,
    *,
    run_id: str | None = None,
    proof_delay_ms: float = 0.0,
    pk_d: int | None = None,
    tail_ms: float = 2_000.0,
) -> ScenarioResult:
    """Drive one session to a terminal phase and collect its metrics.

    Interrupted sessions are returned like any other outcome.
    """
    world = network.world
    sim = world.sim
    started = sim.now
    state = client.start_session(domain, relay.address, proof_delay_ms=proof_delay_ms, pk_d=pk_d)
    run_id = run_id or state.session_id
    if state.phase is Phase.IDLE:
        return ScenarioResult(run_id, state, [], None, started, sim.now)
    limit = state.window_deadline + world.config.tunnel_timeout_ms * 4 + world.config.notify_wait_ms
    sim.run_until(lambda: state.phase.terminal, limit)
    # Let in-flight traffic (flushed buffers, teardowns) settle.
    sim.run(sim.now + tail_ms)
    lookup = client.client_ctx[state.session_id]["lookup"]
    trace = lookup.value if lookup.done else None

    m = state.marks
    records = []
    sid = state.session_id
    if "lookup_done" in m:
        detail = f"hops={trace.hops}" if trace else ""
        records.append(MetricsRecord(run_id, "lookup_duration", m["lookup_done"] - m["lookup_start"], detail))
    if "rst" in m and "lookup_done" in m:
        records.append(MetricsRecord(run_id, "splice_duration", m["rst"] - m["lookup_done"]))
    for s, metric, value in world.timings:
        if s == sid:
            records.append(MetricsRecord(run_id, metric, value, "wall-clock"))
    if "authorized" in m:
        records.append(
            MetricsRecord(run_id, "e2e_setup", m["authorized"] - m["lookup_start"], f"proof_rt={m['authorized'] - m['rst']:g}")
        )

    dest = world.destinations[state.destination]
    delivered = dest.delivered.get(sid, {})
    generated = client.client_ctx[sid]["generated"]
    after = 0
    if state.window_deadline is not None and "authorized" not in m:
        after = sum(1 for t in delivered.values() if t >= state.window_deadline)
    missing = []
    if state.phase is Phase.AUTHORIZED:
        missing = sorted(seq for seq, t in generated.items() if t <= m["authorized"] and seq not in delivered)
    return ScenarioResult(run_id, state, records, trace, started, sim.now, after, missing)


# -- privacy audit --------------------------------------------------------


@dataclass
class PrivacyReport:
    """Needle hits per role, restricted to one scenario's time window."""

    hits: dict[str, dict[str, int]]
    client_address_in_value_requests: int = 0

    def clean(self, roles: Iterable[str]) -> bool:
        return not any(self.hits.get(r) for r in roles)

    def leaks(self, roles: Iterable[str]) -> dict[str, dict[str, int]]:
        return {r: self.hits[r] for r in roles if self.hits.get(r)}


def _window(obs: list[Observation], t0: float, t1: float) -> list[Observation]:
    return [o for o in obs if t0 <= o.time <= t1]


def privacy_audit(network: SimNetwork, result: ScenarioResult) -> PrivacyReport:
    """Scan what each role received during the scenario for the domain name,
    its DHT key and the destination's public key."""
    world = network.world
    pp = world.params
    state = result.state
    _, pk_d = world.directory.resolve(state.domain)
    needles = {
        "domain": state.domain.encode(),
        "key": domain_key_bytes(state.domain),
        "pk_d": pp.encode_element(pk_d),
    }
    trace = result.trace
    roles: dict[str, set[str]] = {"X": {state.relay}, "A": set(), "R": set(), "intermediate": set()}
    if state.exit:
        roles["A"].add(state.exit)
    if trace is not None:
        if trace.status == "sent" and trace.responder:
            roles["R"].add(trace.responder)
        roles["intermediate"].update(trace.intermediates)
    hits: dict[str, dict[str, int]] = {}
    names = {v: k for k, v in needles.items()}
    for role, addrs in roles.items():
        counts: dict[str, int] = {}
        for addr in addrs:
            obs = _window(world.net.observations.get(addr, []), result.started, result.finished)
            for _, needle in contains_any(obs, needles.values()):
                counts[names[needle]] = counts.get(names[needle], 0) + 1
        hits[role] = counts
    client_hits = 0
    for addr in roles["R"] | roles["intermediate"]:
        obs = _window(world.net.observations.get(addr, []), result.started, result.finished)
        obs = [o for o in obs if o.kind == "FIND_VALUE"]
        client_hits += len(contains_any(obs, [state.client.encode()]))
    return PrivacyReport(hits, client_hits)


# -- batch ---------------------------------------------------------------


def run_batch(config: SimConfig, *, proof_delay_ms: float = 0.0) -> tuple[SimNetwork, list[ScenarioResult]]:
    """One scenario per whitelisted domain, roles drawn from the seed."""
    network = build_network(config)
    rng = random.Random(f"{config.seed}:roles")
    results = []
    for i, domain in enumerate(sorted(config.whitelist)):
        s, x = pick_roles(network, domain, rng)
        results.append(run_scenario(network, s, x, domain, run_id=f"run{i:04d}", proof_delay_ms=proof_delay_ms))
    return network, results


def default_whitelist(n_nodes: int, n_domains: int, seed: int) -> dict[str, int]:
    rng = random.Random(f"{seed}:whitelist")
    return {f"site{i:04d}.example": rng.randrange(n_nodes) for i in range(n_domains)}


# -- reporting ------------------------------------------------------------


def write_csv(records: Iterable[MetricsRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([r.run_id, r.metric, repr(float(r.value_ms)), r.detail])


def read_csv(path: str | Path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [MetricsRecord(r["run_id"], r["metric"], float(r["value_ms"]), r["detail"]) for r in rows]


def nearest_rank(sorted_samples: list[float], pct: float) -> float:
    if not sorted_samples:
        raise ValueError("no samples")
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_samples)))
    return sorted_samples[rank - 1]


def cdf_summary(samples: Iterable[float]) -> dict[str, float]:
    """Nearest-rank percentiles p10 through p99."""
    xs = sorted(samples)
    return {f"p{p}": nearest_rank(xs, p) for p in PERCENTILES}


def empirical_cdf(samples: Iterable[float]) -> list[tuple[float, float]]:
    xs = sorted(samples)
    n = len(xs)
    return [(x, (i + 1) / n) for i, x in enumerate(xs)]


def format_table(rows: dict[str, dict[str, float]]) -> str:
    cols = list(next(iter(rows.values())).keys()) if rows else []
    out = ["metric".ljust(14) + "".join(c.rjust(11) for c in cols)]
    for name, vals in rows.items():
        out.append(name.ljust(14) + "".join(f"{vals[c]:11.3f}" for c in cols))
    return "\n".join(out)


# -- benchmarks -----------------------------------------------------------


@dataclass
class ZkpBench:
    group: str
    prove_ms: list[float]
    verify_ms: list[float]
    accepted: int

    def stats(self) -> dict[str, dict[str, float]]:
        def s(xs: list[float]) -> dict[str, float]:
            ys = sorted(xs)
            return {"mean": statistics.fmean(ys), "p50": nearest_rank(ys, 50), "p95": nearest_rank(ys, 95)}

        return {"prove": s(self.prove_ms), "verify": s(self.verify_ms)}

    def records(self) -> list[MetricsRecord]:
        out = [MetricsRecord(f"zkp{i:05d}", "prove_time", v, self.group) for i, v in enumerate(self.prove_ms)]
        out += [MetricsRecord(f"zkp{i:05d}", "verify_time", v, self.group) for i, v in enumerate(self.verify_ms)]
        return out


def bench_zkp(iters: int, group: str = "std256", seed: int | None = None) -> ZkpBench:
    """Time attestation proving and verification over fresh random instances."""
    if iters < 1:
        raise ValueError("iters must be at least 1")
    pp = group_setup(group)
    rng = random.Random(seed) if seed is not None else None
    prove_ms, verify_ms, ok = [], [], 0
    for i in range(iters):
        dom, resp, eph = keygen(pp, rng), keygen(pp, rng), keygen(pp, rng)
        c_pkd, _ = elgamal_encrypt(pp, dom.pk, eph.pk, rng)
        sig = schnorr_sign(pp, c_pkd.encode(pp), resp.sk, rng)
        name = f"bench{i}.example"
        t0 = time.perf_counter()
        bundle, _ = make_attestation(pp, eph.sk, c_pkd, sig, resp.pk, name, rng, pk_d=dom.pk)
        t1 = time.perf_counter()
        ok += verify(bundle.statement, bundle.proof)
        t2 = time.perf_counter()
        prove_ms.append((t1 - t0) * 1000.0)
        verify_ms.append((t2 - t1) * 1000.0)
    return ZkpBench(group, prove_ms, verify_ms, ok)


@dataclass
class LookupBench:
    latency: str
    durations: list[float]
    hops: list[int]
    correct: int
    rounds: list[int]

    @property
    def queries(self) -> int:
        return len(self.durations)


def bench_lookup(
    nodes: int,
    queries: int,
    latency: str = "fixed:50",
    *,
    seed: int = 0,
    domains: int | None = None,
    group: str = "toy",
) -> LookupBench:
    """Random lookups of announced keys; each reply is delivered to a relay
    other than the querier, as in a real session."""
    n_dom = domains if domains is not None else min(max(queries, 1), 200)
    config = SimConfig(
        n_nodes=nodes, seed=seed, latency=latency, whitelist=default_whitelist(nodes, n_dom, seed), group=group
    )
    network = build_network(config)
    sim = network.sim
    pp = network.world.params
    rng = random.Random(f"{seed}:lookups")
    names = sorted(config.whitelist)
    out = LookupBench(latency, [], [], 0, [])
    eph = keygen(pp, rng)
    for q in range(queries):
        domain = names[rng.randrange(len(names))]
        s, x = pick_roles(network, domain, rng) if nodes > 2 else (network.peers[0], network.peers[-1])
        got: dict = {}
        rpc = f"bench{q:06d}"
        x.dht.value_listeners[rpc] = lambda resp, at=sim: got.setdefault("r", (resp, at.now))
        t0 = sim.now
        fut = s.dht.lookup_value(key_for_domain(domain), x.address, eph.pk, rpc)
        sim.run_until(lambda: "r" in got and fut.done, sim.now + 120_000)
        x.dht.value_listeners.pop(rpc, None)
        if "r" not in got:
            continue
        resp, t1 = got["r"]
        trace = fut.value
        out.durations.append(t1 - t0)
        out.hops.append(trace.hops)
        out.rounds.append(trace.rounds)
        out.correct += bool(resp.found and resp.provider_addr == network.providers[domain])
    return out


def lookup_bounds(hops: int, latency: str) -> tuple[float, float]:
    """Analytic duration bounds for a lookup of ``hops`` round trips."""
    lo, hi = parse_latency(latency).bounds
    return 2 * hops * lo, 2 * hops * hi

