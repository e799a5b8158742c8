"""CLI harness tests: schema, outputs, determinism, exit codes."""
import json
import subprocess
import sys
from pathlib import Path


from polarcomm.cli import CONFIG_SCHEMA, main


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "polarcomm.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )


def write_config(path: Path, **overrides):
    path.write_text(json.dumps(overrides))
    return str(path)


def test_print_schema_lists_every_key(tmp_path):
    proc = run_cli(["--print-schema"], tmp_path)
    assert proc.returncode == 0
    schema = json.loads(proc.stdout)
    assert set(schema) == set(CONFIG_SCHEMA)
    for entry in schema.values():
        assert "default" in entry and "help" in entry


def test_rates_command_values(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", model="and", p=0.5, q=0.5)
    assert main(["rates", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    payload = json.loads((tmp_path / "out" / "rates.json").read_text())
    assert abs(payload["sum_rates"]["r_sum_two_round_A"] - 1.5) < 1e-12
    assert abs(payload["sum_rates"]["r_sum_infinity"] - 1.360674) < 1e-6
    rates = {row["round"]: row["rate"] for row in payload["per_round"]}
    assert abs(rates[1] - 1.0) < 1e-12 and abs(rates[2] - 0.5) < 1e-12


def test_verify_and_simulate_byte_identical(tmp_path):
    cfg = write_config(
        tmp_path / "cfg.json",
        model="and", p=0.3, q=0.6, n=4,
        partition_mode="threshold", delta=0.2,
        trials=20, shared_seed=5, private_seed=6,
    )
    blobs = {}
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        blobs[name] = [
            (out / "verify.json").read_bytes(),
            (out / "simulate.json").read_bytes(),
        ]
    assert blobs["a"] == blobs["b"]


def test_verify_reports_exact_metrics(tmp_path):
    cfg = write_config(
        tmp_path / "cfg.json",
        model="and", p=0.3, q=0.6, n=4,
        partition_mode="threshold", delta=0.2,
    )
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    payload = json.loads((tmp_path / "out" / "verify.json").read_text())
    assert payload["mode"] == "exact"
    assert payload["tv_by_side"]["tx"] >= 0.0
    assert 0.0 <= payload["agreement_probability"] <= 1.0
    assert payload["rate_table"][0]["round"] == 1


def test_profile_and_plan_outputs(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", model="bsc", n=8,
                       partition_mode="threshold")
    out = tmp_path / "out"
    assert main(["profile", "--config", cfg, "--out", str(out)]) == 0
    prof = json.loads((out / "profile_round1_tx.json").read_text())
    assert prof["N"] == 8 and len(prof["z"]) == 8
    assert main(["plan", "--config", cfg, "--out", str(out)]) == 0
    part = json.loads((out / "partition_round1.json").read_text())
    assert sorted(part) == ["F_d", "F_r", "I", "I_prime", "N"]
    covered = sorted(part["F_d"] + part["F_r"] + part["I"])
    assert covered == list(range(8))


def test_sweep_csv_schema(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", model="bsc", n_list=[8, 16],
                       partition_mode="threshold", profile_method="monte_carlo",
                       profile_samples=128)
    out = tmp_path / "out"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "model,N,round,metric,value,stderr"
    assert any(",rate_gap," in line for line in lines[1:])
    assert len(lines) == 1 + 2 * 3  # two N values, three metrics per round


def test_config_errors_exit_2(tmp_path):
    missing = tmp_path / "nope.json"
    proc = run_cli(["verify", "--config", str(missing), "--out", str(tmp_path / "o")], tmp_path)
    assert proc.returncode == 2
    record = json.loads(proc.stderr.strip().splitlines()[-1])
    assert record["error"] == "config"

    bad = write_config(tmp_path / "bad.json", nonsense_key=1)
    proc = run_cli(["verify", "--config", bad, "--out", str(tmp_path / "o2")], tmp_path)
    assert proc.returncode == 2

    badval = write_config(tmp_path / "badval.json", model="and", n=3)
    proc = run_cli(["plan", "--config", badval, "--out", str(tmp_path / "o3")], tmp_path)
    assert proc.returncode == 2
    assert not (tmp_path / "o3").exists() or not list((tmp_path / "o3").iterdir())


def test_anomaly_limit_exit_3(tmp_path):
    # margin 0 at N=64 leaves receiver-sampled indices that hit null prefixes
    cfg = write_config(
        tmp_path / "cfg.json",
        model="and", p=0.5, q=0.5, n=64, trials=40,
        partition_mode="target_rate", rate_margin=0.0,
        profile_method="monte_carlo", profile_samples=512,
        anomaly_limit=0,
    )
    proc = run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / "out")], tmp_path)
    assert proc.returncode == 3
    record = json.loads(proc.stderr.strip().splitlines()[-1])
    assert record["error"] == "anomaly_limit"
    assert not (tmp_path / "out" / "simulate.json").exists()


def test_model_file_roundtrip(tmp_path):
    from polarcomm.models import AndModelParams, build_and_chain

    model = build_and_chain(AndModelParams(0.3, 0.6, 2))
    model_path = tmp_path / "model.json"
    model_path.write_text(model.to_json())
    cfg = write_config(tmp_path / "cfg.json", model=str(model_path), n=4)
    assert main(["rates", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    payload = json.loads((tmp_path / "out" / "rates.json").read_text())
    assert len(payload["per_round"]) == 2


def test_seed_override(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", model="and", n=8, trials=10)
    out_a, out_b, out_c = (tmp_path / s for s in ("a", "b", "c"))
    assert main(["simulate", "--config", cfg, "--out", str(out_a), "--seed", "99"]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(out_b), "--seed", "99"]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(out_c), "--seed", "100"]) == 0
    assert (out_a / "simulate.json").read_bytes() == (out_b / "simulate.json").read_bytes()
    assert (out_a / "simulate.json").read_bytes() != (out_c / "simulate.json").read_bytes()
