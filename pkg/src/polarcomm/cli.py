"""Command-line front end.

    polarcomm <command> --config <path> [--out <dir>] [--seed <u64>]
              [--workers <k>] [--print-schema]

Commands: profile | plan | simulate | verify | rates | sweep. The config is a
flat JSON object; --print-schema lists every key with its default. Outputs
are written atomically into the --out directory and are byte-identical for
identical configs and seeds (no timestamps, sorted keys, fixed float
formatting via repr). On any failure a machine-readable error record goes to
stderr, partial outputs are removed, and the exit status is 2 for config
errors or 3 when the anomaly limit is exceeded.

The --workers knob is accepted for symmetry with the concurrency model but
never affects numeric output; all reductions are deterministic.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .models import (
    AndModelParams,
    build_and_chain,
    build_bsc_chain,
    build_collocated_chain,
    sum_rates,
)
from .probability import AuxChainModel, mutual_information
from .reliability import PartitionPolicy
from .protocol import plan_protocol
from .verification import (
    AGREEMENT_EXACT_CAP,
    TV_EXACT_CAP,
    VerificationReport,
    agreement_probability,
    exact_q_tv,
    function_error_rate,
    measured_rates,
)


class ConfigError(ValueError):
    pass


class AnomalyLimitExceeded(RuntimeError):
    pass


# key -> (default, help)
CONFIG_SCHEMA = {
    "model": ("and", "builtin model name ('and', 'bsc', 'collocated') or a path to a model JSON file"),
    "p": (0.5, "AND chain: P(X=1)"),
    "q": (0.5, "AND chain: P(Y=1)"),
    "t": (2, "AND chain: number of rounds (even, >= 2)"),
    "alpha_noise": (0.11, "BSC chain: auxiliary noise rate in (0, 0.5]"),
    "eps": (0.2, "BSC chain: side-information noise rate in (0, 0.5]"),
    "m": (2, "collocated chain: number of source terminals"),
    "source_probs": ([0.5, 0.5], "collocated chain: per-terminal P(X^j = 1)"),
    "n": (8, "blocklength (power of two) for single-N commands"),
    "n_list": ([256, 1024, 4096], "blocklength ladder for the sweep command"),
    "partition_mode": ("target_rate", "'target_rate' (rank-based, default) or 'threshold'"),
    "beta": (0.3, "threshold exponent: delta_N = 2^(-N^beta), beta in (0, 1/2)"),
    "delta": (None, "explicit threshold override in (0, 1/2); null uses 2^(-N^beta)"),
    "fractions": (None, "explicit target fractions [f_d, f_r, i_prime]; null derives them from the model"),
    "rate_margin": (0.0, "extra transmitted bits/symbol added to each round's I' target"),
    "profile_method": ("auto", "'auto' (exact when N <= 8), 'exact', or 'monte_carlo'"),
    "profile_samples": (2000, "Monte Carlo profile samples per conditioning"),
    "profile_seed": (0, "Monte Carlo profile seed"),
    "shared_seed": (1, "seed of the common-randomness streams (F_r bits)"),
    "private_seed": (2, "seed of the terminals' private sampling streams"),
    "trials": (200, "protocol trials for simulate / Monte Carlo verify"),
    "fd_policy": ("sample", "'sample' (paper-faithful) or 'argmax' F_d decisions"),
    "verify_mode": ("exact", "'exact' (small N) or 'monte_carlo' verification"),
    "verify_rounds": (1, "rounds compared by exact TV: 1 or null for the full chain"),
    "anomaly_limit": (None, "exit 3 if a run records more decode anomalies than this"),
    "workers": (1, "accepted for compatibility; never affects numeric output"),
}

COMMANDS = ("profile", "plan", "simulate", "verify", "rates", "sweep")


def load_config(path: str | None, seed_override: int | None) -> dict:
    cfg = {k: v for k, (v, _) in CONFIG_SCHEMA.items()}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a flat JSON object")
        unknown = sorted(set(user) - set(CONFIG_SCHEMA))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        cfg.update(user)
    if seed_override is not None:
        cfg["shared_seed"] = seed_override
        cfg["private_seed"] = seed_override + 1
        cfg["profile_seed"] = seed_override
    return cfg


def build_model(cfg: dict) -> AuxChainModel:
    name = cfg["model"]
    if name == "and":
        return build_and_chain(AndModelParams(cfg["p"], cfg["q"], int(cfg["t"])))
    if name == "bsc":
        return build_bsc_chain(cfg["alpha_noise"], cfg["eps"])
    if name == "collocated":
        return build_collocated_chain(int(cfg["m"]), cfg["source_probs"])
    path = Path(name)
    if not path.exists():
        raise ConfigError(f"model {name!r} is not builtin and no such file exists")
    return AuxChainModel.from_json(path.read_text(encoding="utf-8"))


def build_policy(cfg: dict) -> PartitionPolicy:
    fractions = cfg["fractions"]
    return PartitionPolicy(
        mode=cfg["partition_mode"],
        beta=float(cfg["beta"]),
        delta=None if cfg["delta"] is None else float(cfg["delta"]),
        fractions=None if fractions is None else tuple(fractions),
    )


def make_plans(model, cfg, n_len):
    return plan_protocol(
        model,
        n_len,
        build_policy(cfg),
        rate_margin=float(cfg["rate_margin"]),
        profile_method=cfg["profile_method"],
        profile_samples=int(cfg["profile_samples"]),
        profile_seed=int(cfg["profile_seed"]),
    )


class OutputSet:
    """Atomic output files: all-or-nothing on failure."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written: list[Path] = []

    def write_text(self, name: str, text: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        target = self.out_dir / name
        fd, tmp = tempfile.mkstemp(dir=self.out_dir, prefix=".tmp-")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, target)
        self.written.append(target)
        return target

    def write_json(self, name: str, payload) -> Path:
        return self.write_text(name, json.dumps(payload, sort_keys=True, indent=2) + "\n")

    def rollback(self) -> None:
        for path in self.written:
            try:
                path.unlink()
            except OSError:
                pass


def _check_anomalies(cfg: dict, count: int) -> None:
    limit = cfg["anomaly_limit"]
    if limit is not None and count > int(limit):
        raise AnomalyLimitExceeded(f"{count} decode anomalies exceed the limit {limit}")


def cmd_profile(model, cfg, out: OutputSet) -> None:
    plans = make_plans(model, cfg, int(cfg["n"]))
    for plan in plans:
        for cond, prof in plan.profiles.items():
            out.write_text(f"profile_round{plan.round_index}_{cond}.json", prof.to_json() + "\n")


def cmd_plan(model, cfg, out: OutputSet) -> None:
    plans = make_plans(model, cfg, int(cfg["n"]))
    for plan in plans:
        out.write_text(f"partition_round{plan.round_index}.json", plan.partition.to_json() + "\n")
    out.write_json("plans_summary.json", {"rates": measured_rates(plans)})


def cmd_simulate(model, cfg, out: OutputSet) -> None:
    n_len, trials = int(cfg["n"]), int(cfg["trials"])
    plans = make_plans(model, cfg, n_len)
    report = function_error_rate(
        model, plans, n_len, trials, int(cfg["shared_seed"]), fd_policy=cfg["fd_policy"]
    )
    result = report.pop("result")
    _check_anomalies(cfg, result.anomalies)
    summary = {
        "model": cfg["model"],
        "N": n_len,
        "trials": trials,
        "rates": list(result.rates),
        "agreement_frequency": float(result.agreement.all(axis=0).mean()),
        "anomalies": result.anomalies,
        "errors": {k: v for k, v in report.items() if k != "trials"},
        "first_trial_transcript": json.loads(_first_trial_transcript(result)),
    }
    out.write_json("simulate.json", summary)


def _first_trial_transcript(result) -> str:
    rounds = [
        {
            "direction": r.direction,
            "bits": r.bit_count,
            "message_hex": [np.packbits(np.atleast_2d(r.messages)[0]).tobytes().hex()],
        }
        for r in result.transcript.rounds
    ]
    return json.dumps({"rounds": rounds, "rates": list(result.transcript.rates)}, sort_keys=True)


def cmd_verify(model, cfg, out: OutputSet) -> None:
    n_len, trials = int(cfg["n"]), int(cfg["trials"])
    plans = make_plans(model, cfg, n_len)
    rates = measured_rates(plans)
    seed = int(cfg["shared_seed"])
    if cfg["verify_mode"] == "exact":
        rounds = cfg["verify_rounds"]
        rounds = None if rounds is None else int(rounds)
        tv = agree = None
        if model.network == "two-terminal" and n_len <= TV_EXACT_CAP:
            effective = len(plans) if rounds is None else rounds
            if effective == 1 or n_len <= AGREEMENT_EXACT_CAP:
                tv = {
                    side: exact_q_tv(model, plans, n_len, side, rounds=rounds)
                    for side in ("tx", "rx")
                }
        if model.network == "two-terminal" and n_len <= AGREEMENT_EXACT_CAP:
            agree = agreement_probability(model, plans, n_len, "exact")
        report = VerificationReport(
            n_len=n_len,
            mode="exact",
            tv_value=None if tv is None else max(tv.values()),
            agreement_probability=agree,
            rates=tuple(r["measured"] for r in rates),
        )
        payload = json.loads(report.to_json())
        payload["tv_by_side"] = tv
        payload["rate_table"] = rates
        out.write_json("verify.json", payload)
        return
    report = function_error_rate(model, plans, n_len, trials, seed, fd_policy=cfg["fd_policy"])
    result = report.pop("result")
    _check_anomalies(cfg, result.anomalies)
    agree = float(result.agreement.all(axis=0).mean())
    vr = VerificationReport(
        n_len=n_len,
        mode="monte_carlo",
        agreement_probability=agree,
        rates=tuple(r["measured"] for r in rates),
        block_error=max(v["block_error"] for k, v in report.items() if k != "trials"),
        symbol_error=max(v["symbol_error"] for k, v in report.items() if k != "trials"),
        erasure_rate=max(v["erasure"] for k, v in report.items() if k != "trials"),
        trials=trials,
        seed=seed,
        confidence_radius=max(v["radius_95"] for k, v in report.items() if k != "trials"),
    )
    payload = json.loads(vr.to_json())
    payload["rate_table"] = rates
    payload["errors"] = {k: v for k, v in report.items() if k != "trials"}
    out.write_json("verify.json", payload)


def _theory_rates(model: AuxChainModel) -> list:
    rows = []
    for i in range(1, model.rounds + 1):
        bit_var = f"u{i}"
        past = tuple(f"u{j}" for j in range(1, i))
        tx_src = model.round_sources[i - 1]
        if model.network == "two-terminal":
            rx_src = "y" if tx_src == "x" else "x"
            target = mutual_information(model.joint, (tx_src,), (bit_var,), (rx_src,) + past)
        else:
            target = mutual_information(model.joint, (tx_src,), (bit_var,), past)
        rows.append({"round": i, "source": tx_src, "rate": target})
    return rows


def cmd_rates(model, cfg, out: OutputSet) -> None:
    payload = {"model": cfg["model"], "per_round": _theory_rates(model)}
    if cfg["model"] == "and":
        payload["sum_rates"] = sum_rates(float(cfg["p"]), float(cfg["q"]))
    out.write_json("rates.json", payload)


def cmd_sweep(model, cfg, out: OutputSet) -> None:
    rows = []
    for n_len in cfg["n_list"]:
        n_len = int(n_len)
        plans = make_plans(model, cfg, n_len)
        for entry in measured_rates(plans):
            for metric in ("measured", "target"):
                rows.append(
                    {
                        "model": cfg["model"],
                        "N": n_len,
                        "round": entry["round"],
                        "metric": f"rate_{metric}",
                        "value": repr(entry[metric]),
                        "stderr": "",
                    }
                )
            gap = abs(entry["measured"] - entry["target"])
            rows.append(
                {
                    "model": cfg["model"],
                    "N": n_len,
                    "round": entry["round"],
                    "metric": "rate_gap",
                    "value": repr(gap),
                    "stderr": "",
                }
            )
    fields = ["model", "N", "round", "metric", "value", "stderr"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    out.write_text("sweep.csv", buf.getvalue())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="polarcomm",
        description="Interactive function computation with polar-coded exchanges",
    )
    parser.add_argument("command", choices=COMMANDS, nargs="?")
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("--out", default="out", help="output directory (default ./out)")
    parser.add_argument("--seed", type=int, default=None, help="override every seed in the config")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker hint; never affects numeric output")
    parser.add_argument("--print-schema", action="store_true",
                        help="print the config schema with defaults and exit")
    args = parser.parse_args(argv)

    if args.print_schema:
        schema = {
            key: {"default": default, "help": text}
            for key, (default, text) in CONFIG_SCHEMA.items()
        }
        print(json.dumps(schema, sort_keys=True, indent=2))
        return 0
    if args.command is None:
        parser.error("a command is required (or --print-schema)")

    out = OutputSet(Path(args.out))
    try:
        cfg = load_config(args.config, args.seed)
        if args.workers is not None:
            cfg["workers"] = args.workers
        model = build_model(cfg)
        handler = {
            "profile": cmd_profile,
            "plan": cmd_plan,
            "simulate": cmd_simulate,
            "verify": cmd_verify,
            "rates": cmd_rates,
            "sweep": cmd_sweep,
        }[args.command]
        handler(model, cfg, out)
    except AnomalyLimitExceeded as exc:
        out.rollback()
        print(json.dumps({"error": "anomaly_limit", "detail": str(exc)}), file=sys.stderr)
        return 3
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        out.rollback()
        print(json.dumps({"error": "config", "detail": str(exc)}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
