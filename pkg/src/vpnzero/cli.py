"""Command-line entry point: ``vpnzero sim|bench|attest ...``."""

from __future__ import annotations

import argparse
import json
import random
import sys
from collections import Counter
from pathlib import Path

from . import harness
from .attestation import AttestationBundle, make_attestation, verify
from .crypto.elgamal import ElGamalCiphertext, elgamal_encrypt, keygen
from .crypto.encoding import DecodeError
from .crypto.group import LABELS, group_setup
from .crypto.schnorr import Signature, schnorr_sign
from .simnet import parse_latency


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _latency(text: str) -> str:
    try:
        parse_latency(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


# -- sim -------------------------------------------------------------------


def cmd_sim_run(args: argparse.Namespace) -> int:
    try:
        config = harness.SimConfig.load(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load config: {exc}", file=sys.stderr)
        return 2
    config.seed = args.seed
    network, results = harness.run_batch(config, proof_delay_ms=args.proof_delay_ms)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "events.csv").write_text(network.world.net.event_log())
    records = [r for res in results for r in res.records]
    harness.write_csv(records, out / "metrics.csv")

    phases = Counter(res.state.phase.value for res in results)
    by_metric: dict[str, list[float]] = {}
    for r in records:
        by_metric.setdefault(r.metric, []).append(r.value_ms)
    leaks = Counter()
    for res in results:
        report = harness.privacy_audit(network, res)
        for role, counts in report.hits.items():
            for needle in counts:
                leaks[f"{role}:{needle}"] += 1
    summary = {
        "config": json.loads(config.to_json()),
        "sessions": len(results),
        "phases": dict(sorted(phases.items())),
        "percentiles": {m: harness.cdf_summary(v) for m, v in sorted(by_metric.items())},
        "privacy_sessions_with_hits": dict(sorted(leaks.items())),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{len(results)} sessions: " + ", ".join(f"{k}={v}" for k, v in sorted(phases.items())))
    if by_metric:
        print(harness.format_table({m: harness.cdf_summary(v) for m, v in sorted(by_metric.items())}))
    print(f"wrote {out / 'events.csv'}, {out / 'metrics.csv'}, {out / 'summary.json'}")
    return 0


# -- bench -----------------------------------------------------------------

ZKP_TARGET_MS = 500.0


def cmd_bench_zkp(args: argparse.Namespace) -> int:
    bench = harness.bench_zkp(args.iters, args.group, seed=args.seed)
    stats = bench.stats()
    print(f"zkp benchmark: group={args.group} iters={args.iters} accepted={bench.accepted}/{args.iters}")
    print(harness.format_table(stats))
    for name in ("prove", "verify"):
        p95 = stats[name]["p95"]
        verdict = "ok" if p95 < ZKP_TARGET_MS else "over"
        print(f"{name} p95 {p95:.3f} ms vs {ZKP_TARGET_MS:.0f} ms target: {verdict}")
    if args.csv:
        harness.write_csv(bench.records(), args.csv)
    return 0 if bench.accepted == args.iters else 1


def cmd_bench_lookup(args: argparse.Namespace) -> int:
    bench = harness.bench_lookup(args.nodes, args.queries, args.latency, seed=args.seed)
    print(f"lookup benchmark: nodes={args.nodes} queries={bench.queries} latency={args.latency}")
    print(f"correct provider: {bench.correct}/{bench.queries}")
    hist = Counter(bench.hops)
    print("hops: " + " ".join(f"{h}:{c}" for h, c in sorted(hist.items())))
    if bench.durations:
        print(harness.format_table({"lookup_ms": harness.cdf_summary(bench.durations)}))
        outside = sum(
            1
            for d, h in zip(bench.durations, bench.hops)
            if not harness.lookup_bounds(h, args.latency)[0] <= d <= harness.lookup_bounds(h, args.latency)[1]
        )
        print(f"samples outside analytic bounds: {outside}")
    if args.csv:
        records = [
            harness.MetricsRecord(f"q{i:06d}", "lookup_duration", d, f"hops={h}")
            for i, (d, h) in enumerate(zip(bench.durations, bench.hops))
        ]
        harness.write_csv(records, args.csv)
    return 0


# -- attest ----------------------------------------------------------------


def sample_instance(group: str, domain: str, seed: int | None = None) -> dict:
    """A fresh honest client-side instance: the values S holds after the
    lookup, written as JSON (integers as hex strings)."""
    pp = group_setup(group)
    rng = random.Random(seed) if seed is not None else None
    dom, resp, eph = keygen(pp, rng), keygen(pp, rng), keygen(pp, rng)
    c_pkd, _ = elgamal_encrypt(pp, dom.pk, eph.pk, rng)
    sig = schnorr_sign(pp, c_pkd.encode(pp), resp.sk, rng)
    return {
        "group": group,
        "domain": domain,
        "sk_eg": hex(eph.sk),
        "pk_d": hex(dom.pk),
        "c_pkd": c_pkd.encode(pp).hex(),
        "sig_r": sig.encode(pp).hex(),
        "pk_r": hex(resp.pk),
    }


def prove_instance(data: dict) -> AttestationBundle:
    pp = group_setup(data["group"])
    c_pkd = ElGamalCiphertext.decode(pp, bytes.fromhex(data["c_pkd"]))
    sig = Signature.decode(pp, bytes.fromhex(data["sig_r"]))
    pk_d = int(data["pk_d"], 16) if data.get("pk_d") else None
    bundle, _ = make_attestation(
        pp, int(data["sk_eg"], 16), c_pkd, sig, int(data["pk_r"], 16), data["domain"], pk_d=pk_d
    )
    return bundle


def cmd_attest_sample(args: argparse.Namespace) -> int:
    Path(args.out).write_text(json.dumps(sample_instance(args.group, args.domain, args.seed), indent=2) + "\n")
    print(f"wrote {args.out}")
    return 0


def cmd_attest_prove(args: argparse.Namespace) -> int:
    try:
        data = json.loads(Path(args.input).read_text())
        bundle = prove_instance(data)
    except (OSError, KeyError, ValueError, DecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path(args.input).with_suffix(".bundle")
    raw = bundle.encode()
    out.write_bytes(raw)
    print(f"wrote {out} ({len(raw)} bytes)")
    return 0


def cmd_attest_verify(args: argparse.Namespace) -> int:
    try:
        raw = Path(args.input).read_bytes()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        bundle = AttestationBundle.decode(raw)
        ok = verify(bundle.statement, bundle.proof)
    except (DecodeError, ValueError):
        ok = False
    print("accept" if ok else "reject")
    return 0 if ok else 1


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vpnzero", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="simulated end-to-end sessions").add_subparsers(dest="action", required=True)
    run = sim.add_parser("run", help="build a network and run one session per whitelisted domain")
    run.add_argument("--config", required=True, help="JSON file with the SimConfig fields")
    run.add_argument("--seed", required=True, type=_u64)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--proof-delay-ms", type=float, default=0.0, help="client delay before the re-handshake")
    run.set_defaults(func=cmd_sim_run)

    bench = sub.add_parser("bench", help="benchmarks").add_subparsers(dest="action", required=True)
    zkp = bench.add_parser("zkp", help="time attestation proving and verification")
    zkp.add_argument("--iters", type=_positive, default=100)
    zkp.add_argument("--group", choices=LABELS, default="std256")
    zkp.add_argument("--seed", type=_u64, default=None)
    zkp.add_argument("--csv", help="also write per-iteration records here")
    zkp.set_defaults(func=cmd_bench_zkp)
    lookup = bench.add_parser("lookup", help="lookup latency and hop counts")
    lookup.add_argument("--nodes", type=_positive, default=64)
    lookup.add_argument("--queries", type=_positive, default=100)
    lookup.add_argument("--latency", type=_latency, default="fixed:50", help="fixed:MS or uniform:LO:HI")
    lookup.add_argument("--seed", type=_u64, default=0)
    lookup.add_argument("--csv", help="also write per-query records here")
    lookup.set_defaults(func=cmd_bench_lookup)

    attest = sub.add_parser("attest", help="build or check attestation bundles").add_subparsers(
        dest="action", required=True
    )
    prove = attest.add_parser("prove", help="prove from a JSON instance file")
    prove.add_argument("--in", dest="input", required=True)
    prove.add_argument("--out", help="bundle path (default: input with .bundle suffix)")
    prove.set_defaults(func=cmd_attest_prove)
    check = attest.add_parser("verify", help="verify an encoded bundle; exit status 1 on reject")
    check.add_argument("--in", dest="input", required=True)
    check.set_defaults(func=cmd_attest_verify)
    sample = attest.add_parser("sample", help="write a random honest instance file")
    sample.add_argument("--out", required=True)
    sample.add_argument("--group", choices=LABELS, default="std256")
    sample.add_argument("--domain", default="example.org")
    sample.add_argument("--seed", type=_u64, default=None)
    sample.set_defaults(func=cmd_attest_sample)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
