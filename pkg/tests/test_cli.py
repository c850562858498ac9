import json
import subprocess
import sys

import pytest

from ftahash.formats import load_code_db, load_hash_spec, load_report


def run(*args, check=True):
    proc = subprocess.run([sys.executable, "-m", "ftahash", *map(str, args)], capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(f"exit {proc.returncode}: {proc.stderr}")
    return proc


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    run("synth", "--out", out, "--seed", 3, "--per-class", 10, "--noise", 0.2, "--class-names", "PQ,QP")
    return out


def test_synth_writes_manifest(synth_dir):
    doc = json.loads((synth_dir / "manifest.json").read_text())
    assert doc["class_names"] == ["PQ", "QP"]
    assert len(doc["records"]) == 20
    assert {r["split"] for r in doc["records"]} == {"train", "test"}


def test_extract_hash_query(synth_dir, tmp_path):
    cache = tmp_path / "cache.npz"
    run("extract", "--manifest", synth_dir / "manifest.json", "--feature", "raw", "--out", cache)
    db, spec = tmp_path / "codes.bin", tmp_path / "spec.json"
    out = run("hash", "--data", cache, "--m", 30, "--p", 100, "--out-db", db, "--out-spec", spec, "--seed", 1)
    summary = json.loads(out.stdout)
    assert summary["codes"] == 10 and summary["bits_per_code"] == 200
    loaded_spec, standardizer = load_hash_spec(spec)
    assert standardizer is not None
    assert load_code_db(db).spec_fingerprint == summary["fingerprint"]
    assert loaded_spec.theta == summary["theta"]

    out = run("query", "--db", db, "--spec", spec, "--data", cache, "--knn", 3)
    lines = [json.loads(line) for line in out.stdout.splitlines()]
    assert len(lines) == 10
    assert all(len(rec["neighbors"]) == 3 for rec in lines)
    assert sum(rec["predicted"] == rec["true"] for rec in lines) >= 8


def test_query_against_wrong_spec_fails(synth_dir, tmp_path):
    manifest = synth_dir / "manifest.json"
    for name, seed in (("a", 1), ("b", 2)):
        run("hash", "--data", manifest, "--m", 20, "--p", 50, "--theta", 0.5, "--seed", seed,
            "--out-db", tmp_path / f"{name}.bin", "--out-spec", tmp_path / f"{name}.json")
    proc = run("query", "--db", tmp_path / "a.bin", "--spec", tmp_path / "b.json", "--data", manifest, check=False)
    assert proc.returncode != 0
    err = json.loads(proc.stderr.strip().splitlines()[-1])
    assert err["error"] == "FingerprintMismatch"


def test_eval_and_csv(synth_dir, tmp_path):
    report, csv = tmp_path / "r.json", tmp_path / "r.csv"
    out = run("eval", "--data", synth_dir / "manifest.json", "--runs", 3, "--m", 30, "--p", 200,
              "--out", report, "--csv", csv)
    assert "accuracy" in out.stdout
    rep = load_report(report)
    assert len(rep.per_run_accuracy) == 3
    assert csv.read_text().splitlines()[0] == "run,accuracy,theta"


def test_sweep(synth_dir, tmp_path):
    out = run("sweep", "--data", synth_dir / "manifest.json", "--runs", 2, "--m", 20, "--axis", "p",
              "--values", "50,100", "--out", tmp_path / "s.json")
    assert out.stdout.splitlines()[0] == "p,mean,std"
    assert len(load_report(tmp_path / "s.json")) == 2


def test_verify_passes():
    out = run("verify", "--count", 20, "--oracle-count", 50, "--skip-timing")
    lines = out.stdout.splitlines()
    assert lines and all(line.startswith("[PASS]") for line in lines)


def test_errors_are_json_on_stderr(tmp_path):
    proc = run("eval", "--data", tmp_path / "missing.json", "--out", tmp_path / "r.json", check=False)
    assert proc.returncode != 0
    err = json.loads(proc.stderr.strip().splitlines()[-1])
    assert set(err) == {"error", "message"}
    assert not (tmp_path / "r.json").exists()


def test_usage_error_exits_nonzero():
    assert run("hash", check=False).returncode != 0
