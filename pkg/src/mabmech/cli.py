"""Command line: simulate, verify, sweep and demo-negative."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .domain import InstanceError, instance_to_dict, load_instance
from .env import ContractViolation, TooLargeForEnumeration
from .rules import RULE_NAMES, make_rule
from .transform import InvalidDelta
from . import experiments as ex
from .verify import find_wmon_violation, single_click_realization, wmon_value
from .verify.report import dumps, witnesses_csv
from .domain import AdInstance

DEFAULTS = {
    "instance_path": None,
    "rule": "all",
    "delta": 0.05,
    "trials": 10_000,
    "seed": 0,
    "explore_rounds": None,
    "bids": None,
    "checks": list(ex.CHECKS),
    "output_dir": "out",
    "workers": 1,
    "parameter": "delta",
    "values": [0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
    "ad": 0,
}
# keys that cannot change any output number
NON_SEMANTIC = ("output_dir", "workers")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mabmech", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file; its keys override the flags")
    common.add_argument("--instance", dest="instance_path", help="instance JSON {agents, horizon, ads}")
    common.add_argument("--rule", choices=RULE_NAMES)
    common.add_argument("--delta", type=float)
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--explore-rounds", dest="explore_rounds", type=int)
    common.add_argument("--bids", type=_floats, help="comma-separated reported bids (default: truthful)")
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("--workers", type=int, help="processes for trial chunks; outputs do not depend on it")

    sub.add_parser("simulate", parents=[common], help="run the transformed mechanism")
    p_verify = sub.add_parser("verify", parents=[common], help="run verification checks")
    p_verify.add_argument("--checks", type=_names, help=f"comma list from {','.join(ex.CHECKS)}")
    p_sweep = sub.add_parser("sweep", parents=[common], help="welfare versus delta, sigma or horizon")
    p_sweep.add_argument("--parameter", choices=("delta", "sigma", "horizon"))
    p_sweep.add_argument("--values", type=_floats)
    p_sweep.add_argument("--ad", type=int, help="ad whose value is varied in a sigma sweep")
    sub.add_parser("demo-negative", parents=[common], help="greedy rule WMON counterexample")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    config = dict(DEFAULTS)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            overrides = json.load(fh)
        unknown = set(overrides) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        config.update(overrides)
    config["command"] = args.command
    _validate(config)
    return config


def _validate(config: dict) -> None:
    if not 0 < float(config["delta"]) < 1:
        raise ConfigError("delta must lie in (0, 1)")
    if int(config["trials"]) < 1:
        raise ConfigError("trials must be at least 1")
    if config["rule"] not in RULE_NAMES:
        raise ConfigError(f"unknown rule {config['rule']!r}")
    if int(config["workers"]) < 1:
        raise ConfigError("workers must be at least 1")
    bad = [c for c in config["checks"] if c not in ex.CHECKS]
    if bad:
        raise ConfigError(f"unknown checks: {', '.join(bad)}")


def _instance(config: dict) -> AdInstance:
    if config["instance_path"]:
        return load_instance(config["instance_path"])
    return ex.standard_instance(config["rule"])


def _provenance(config: dict, instance: AdInstance) -> tuple[str, dict]:
    semantic = {k: v for k, v in config.items() if k not in NON_SEMANTIC and k != "instance_path"}
    semantic["instance"] = instance_to_dict(instance)
    return ex.config_hash(semantic), semantic


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def cmd_simulate(config: dict) -> int:
    instance = _instance(config)
    rule = make_rule(config["rule"], config["explore_rounds"])
    values = instance.values
    bids = np.asarray(config["bids"], dtype=float) if config["bids"] is not None else values
    digest, semantic = _provenance(config, instance)
    res, summary = ex.simulate_summary(
        rule, bids, values, float(config["delta"]), instance, int(config["seed"]), int(config["trials"]),
        int(config["workers"]),
    )
    n = instance.num_agents
    header = (
        ["trial"] + [f"chi_{i + 1}" for i in range(n)] + [f"payment_{i + 1}" for i in range(n)]
        + ["welfare", "rule_welfare", "match", "config_hash", "seed"]
    )
    rows = []
    for t in range(len(res["welfare"])):
        row = [t, *res["chi"][t], *res["payments"][t], res["welfare"][t], res["rule_welfare"][t], res["match"][t]]
        rows.append([_fmt(v) for v in row] + [digest, str(config["seed"])])
    out = Path(config["output_dir"])
    _write(out, "trials.csv", _csv(header, rows))
    summary.update(schema_version=ex.SCHEMA_VERSION, config_hash=digest, seed=config["seed"], config=semantic)
    _write(out, "summary.json", dumps(summary))
    w = summary["welfare"]
    print(f"welfare {w['mean']:.6f} +/- {w['ci99']:.6f} (99%), match {summary['match_frequency']['mean']:.4f}")
    print(f"wrote {out / 'trials.csv'} and {out / 'summary.json'}")
    return 0


def cmd_verify(config: dict) -> int:
    instance = _instance(config)
    rule = make_rule(config["rule"], config["explore_rounds"])
    digest, semantic = _provenance(config, instance)
    sections = ex.run_checks(
        config["checks"], rule, instance, float(config["delta"]), int(config["trials"]), int(config["seed"])
    )
    ok = all(s["as_expected"] for s in sections)
    report = {
        "schema_version": ex.SCHEMA_VERSION, "config_hash": digest, "seed": config["seed"],
        "config": semantic, "rule": rule.name, "instance": instance_to_dict(instance),
        "all_as_expected": ok, "checks": sections,
    }
    out = Path(config["output_dir"])
    _write(out, "verify.json", dumps(report))
    witnesses = [dict(w.to_dict(), check=s["check"]) for s in sections for w in s.get("witnesses", [])]
    _write(out, "witnesses.csv", witnesses_csv(witnesses, {"config_hash": digest, "seed": config["seed"]}))
    for s in sections:
        print(f"{s['check']:<12} expected={s['expected']:<20} {'ok' if s['as_expected'] else 'UNEXPECTED'}")
    return 0 if ok else 1


def cmd_sweep(config: dict) -> int:
    instance = _instance(config)
    digest, semantic = _provenance(config, instance)
    values = config["values"]
    if config["parameter"] == "horizon":
        values = [int(v) for v in values]
    rows = ex.sweep_rows(
        instance, config["parameter"], values, float(config["delta"]), int(config["trials"]),
        int(config["seed"]), config["explore_rounds"], int(config["ad"]),
    )
    header = list(rows[0]) + ["config_hash", "seed"]
    body = [[_fmt(r[k]) for k in rows[0]] + [digest, str(config["seed"])] for r in rows]
    out = Path(config["output_dir"])
    _write(out, "sweep.csv", _csv(header, body))
    _write(out, "sweep.json", dumps({
        "schema_version": ex.SCHEMA_VERSION, "config_hash": digest, "seed": config["seed"],
        "config": semantic, "rows": rows,
    }))
    for r in rows:
        print(f"{r['parameter']}={r['value']}: mech-rand {r['mech_minus_rand']:+.5f} +/- {r['mech_minus_rand_ci99']:.5f}"
              f" improves={r['improves']}")
    return 0


def cmd_demo_negative(config: dict) -> int:
    instance = AdInstance.build([0, 0], [1.0, 1.0], [0.5, 0.5], 2)
    rule = make_rule("greedy", 0)
    witness = find_wmon_violation(rule, instance, [0.0, 1.0, 2.0])
    # the single-click table: ad 2 clicked in round 1 only
    rho = single_click_realization(2, 2, 1, [0])
    constructed = wmon_value(rule, instance, [0.0, 1.0], [2.0, 2.0], rho)
    report = {
        "schema_version": ex.SCHEMA_VERSION, "seed": config["seed"],
        "rule": "greedy (no exploration, ties to lowest index)",
        "most_negative": witness.to_dict() if witness else None,
        "constructed": {"bids": [0.0, 1.0], "bids_alt": [2.0, 2.0], "realization": rho.table.tolist(),
                        "value": constructed},
    }
    report["config_hash"] = ex.config_hash({k: v for k, v in report.items() if k != "seed"})
    print(dumps(report), end="")
    if config.get("output_dir") and config["output_dir"] != DEFAULTS["output_dir"]:
        _write(Path(config["output_dir"]), "demo_negative.json", dumps(report))
    return 0 if witness is not None and constructed < 0 else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "demo-negative": cmd_demo_negative,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](config)
    except (ConfigError, InstanceError, InvalidDelta, TooLargeForEnumeration, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
