import csv
import json

import pytest

from vpnzero.cli import build_parser, main
from vpnzero.harness import SimConfig, default_whitelist


@pytest.fixture
def toy_config(tmp_path):
    cfg = SimConfig(n_nodes=16, whitelist=default_whitelist(16, 3, 0))
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    return path


def test_sim_run_outputs(toy_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["sim", "run", "--config", str(toy_config), "--seed", "5", "--out", str(out)]) == 0
    assert (out / "events.csv").read_text().startswith("time,node,direction,event_kind,session_id,payload_digest\n")
    with open(out / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["metric"] for r in rows} >= {"lookup_duration", "splice_duration", "e2e_setup"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["seed"] == 5 and summary["sessions"] == 3
    assert "3 sessions" in capsys.readouterr().out


def test_sim_run_seed_changes_log(toy_config, tmp_path):
    logs = []
    for seed in (1, 2):
        out = tmp_path / str(seed)
        main(["sim", "run", "--config", str(toy_config), "--seed", str(seed), "--out", str(out)])
        logs.append((out / "events.csv").read_bytes())
    assert logs[0] != logs[1]


def test_sim_run_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n_nodes": 4, "colour": "red"}')
    assert main(["sim", "run", "--config", str(bad), "--seed", "1", "--out", str(tmp_path / "o")]) == 2
    assert "colour" in capsys.readouterr().err


@pytest.mark.parametrize("seed", ["-1", str(2**64), "abc"])
def test_seed_must_be_u64(seed, tmp_path):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["sim", "run", "--config", "c", "--seed", seed, "--out", "o"])


def test_bench_zkp(tmp_path, capsys):
    path = tmp_path / "z.csv"
    assert main(["bench", "zkp", "--iters", "3", "--group", "toy", "--seed", "1", "--csv", str(path)]) == 0
    text = capsys.readouterr().out
    assert "accepted=3/3" in text and "prove p95" in text and "verify p95" in text
    assert len(path.read_text().splitlines()) == 7


def test_bench_zkp_rejects_bad_group():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["bench", "zkp", "--iters", "1", "--group", "big"])


def test_bench_lookup(capsys):
    assert main(["bench", "lookup", "--nodes", "16", "--queries", "10", "--latency", "uniform:10:200"]) == 0
    text = capsys.readouterr().out
    assert "correct provider: 10/10" in text and "samples outside analytic bounds: 0" in text


@pytest.mark.parametrize("spec", ["fixed", "uniform:5", "fixed:-3"])
def test_bench_lookup_bad_latency(spec):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["bench", "lookup", "--latency", spec])


@pytest.mark.parametrize("group", ["toy", "std256"])
def test_attest_roundtrip(group, tmp_path, capsys):
    inst = tmp_path / "inst.json"
    assert main(["attest", "sample", "--out", str(inst), "--group", group, "--seed", "4"]) == 0
    assert main(["attest", "prove", "--in", str(inst)]) == 0
    bundle = inst.with_suffix(".bundle")
    assert main(["attest", "verify", "--in", str(bundle)]) == 0
    assert capsys.readouterr().out.strip().endswith("accept")

    raw = bytearray(bundle.read_bytes())
    raw[-1] ^= 1
    bundle.write_bytes(bytes(raw))
    assert main(["attest", "verify", "--in", str(bundle)]) == 1
    assert capsys.readouterr().out.strip() == "reject"


def test_attest_prove_inconsistent_key(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    main(["attest", "sample", "--out", str(inst), "--group", "std256", "--seed", "4"])
    data = json.loads(inst.read_text())
    data["pk_d"] = hex(4)
    inst.write_text(json.dumps(data))
    assert main(["attest", "prove", "--in", str(inst)]) == 2
    assert "error" in capsys.readouterr().err


def test_attest_verify_garbage(tmp_path, capsys):
    junk = tmp_path / "junk.bundle"
    junk.write_bytes(b"\x00\x01")
    assert main(["attest", "verify", "--in", str(junk)]) == 1
    assert main(["attest", "verify", "--in", str(tmp_path / "missing")]) == 2
