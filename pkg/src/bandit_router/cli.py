"""Command-line entry point: run experiments, compare policies, manage
scenario files.

Exit codes are a stable contract: 0 success, 1 runtime failure, 2
usage/config error.

Experiment configs are JSON:

    {
      "version": 1,
      "scenario": "stationary_webqsp",          // builtin name or {"path": ...}
      "policy": {"kind": "ggi_mo_mab", "epsilon": 0.1},
      "phases": [
        {"phase": "offline", "steps": 5000},
        {"phase": "online", "steps": 10000}
      ],
      "seeds": [0, 1, 2],
      "output_dir": "out",
      "checkpoint_interval": 0
    }

Phase entries may override lr / epsilon / weights. BANDIT_ROUTER_SEED_OFFSET
adds a constant to every seed (CI sharding).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import encoder as enc
from . import env as env_mod
from . import loop as loop_mod
from . import metrics as metrics_mod
from .policies import POLICY_KINDS, make_policy

# union of hyperparameters accepted across policy kinds; unknown keys are a
# config error, keys foreign to the chosen kind are ignored
_POLICY_PARAM_KEYS = {"epsilon", "hidden", "delay_beta", "alpha", "parallel"}


class ConfigError(Exception):
    pass


def _load_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"{path}: not found") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e


def _resolve_scenario(spec) -> env_mod.Scenario:
    if isinstance(spec, str):
        try:
            return env_mod.builtin_scenario(spec)
        except ValueError as e:
            raise ConfigError(str(e)) from e
    if isinstance(spec, dict) and "path" in spec:
        doc = _load_json(spec["path"])
        problems = env_mod.validate_scenario(doc)
        if problems:
            raise ConfigError(f"scenario {spec['path']}: " + "; ".join(problems))
        return env_mod.Scenario.from_dict(doc)
    raise ConfigError("scenario must be a builtin name or {\"path\": ...}")


def _parse_policy(spec) -> tuple:
    if isinstance(spec, str):
        kind, raw = spec, {}
    elif isinstance(spec, dict):
        raw = dict(spec)
        kind = raw.pop("kind", None) or raw.pop("policy", None)
        if kind is None:
            raise ConfigError("policy spec needs a \"kind\" field")
    else:
        raise ConfigError("policy must be a string or an object")
    if kind not in POLICY_KINDS:
        raise ConfigError(f"unknown policy kind {kind!r}; expected one of {sorted(POLICY_KINDS)}")
    unknown = set(raw) - _POLICY_PARAM_KEYS
    if unknown:
        raise ConfigError(f"unknown policy parameters {sorted(unknown)}")
    accepted = set(POLICY_KINDS[kind]().get_params())
    params = {k: v for k, v in raw.items() if k in accepted}
    return kind, params


def _parse_phase(doc: dict) -> loop_mod.PhaseConfig:
    if "phase" not in doc or "steps" not in doc:
        raise ConfigError(f"phase entry {doc} needs \"phase\" and \"steps\"")
    kw = {}
    for key in ("lr", "epsilon", "weights"):
        if key in doc:
            kw[key] = tuple(doc[key]) if key == "weights" else doc[key]
    try:
        if doc["phase"] == "offline":
            return loop_mod.offline_phase(steps=int(doc["steps"]), **kw)
        if doc["phase"] == "online":
            return loop_mod.online_phase(steps=int(doc["steps"]), **kw)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    raise ConfigError(f"unknown phase {doc['phase']!r}")


def _parse_config(path: str, output_override: str | None = None) -> dict:
    doc = _load_json(path)
    if "version" not in doc:
        raise ConfigError(f"{path}: missing \"version\" field")
    seeds = doc.get("seeds", [])
    if not seeds:
        raise ConfigError(f"{path}: needs at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"{path}: duplicate seeds {seeds}")
    offset = int(os.environ.get("BANDIT_ROUTER_SEED_OFFSET", "0"))
    seeds = [int(s) + offset for s in seeds]
    phases = [_parse_phase(p) for p in doc.get("phases", [])]
    if not phases:
        raise ConfigError(f"{path}: needs at least one phase")
    kind, params = _parse_policy(doc.get("policy"))
    scenario = _resolve_scenario(doc.get("scenario"))
    enc_doc = doc.get("encoder", {})
    out_dir = output_override or doc.get("output_dir", "out")
    return {
        "path": path,
        "scenario": scenario,
        "scenario_spec": doc.get("scenario"),
        "policy_kind": kind,
        "policy_params": params,
        "phases": phases,
        "seeds": seeds,
        "output_dir": out_dir,
        "checkpoint_interval": int(doc.get("checkpoint_interval", 0)),
        "encoder_features": int(enc_doc.get("n_features", 64)),
        "encoder_seed": int(enc_doc.get("seed", 0)),
    }


def _trace_path(out_dir, kind, scenario, phase, seed):
    return os.path.join(out_dir, f"trace_{kind}_{scenario}_{phase}_seed{seed}.jsonl")


def _run_seed(cfg: dict, seed: int, save_model: str | None, load_model: str | None) -> dict:
    """Execute all phases for one seed; writes traces, returns metrics."""
    scenario = cfg["scenario"]
    feature_encoder = enc.HashingQueryEncoder(
        n_features=cfg["encoder_features"], seed=cfg["encoder_seed"]
    )
    policy = make_policy(cfg["policy_kind"], **cfg["policy_params"])
    policy.reset(len(scenario.arms), cfg["encoder_features"], seed)
    if load_model:
        if not policy.uses_network:
            raise ConfigError(f"--load-model is only valid for network policies, not {policy.kind}")
        policy.params_ = enc.load_params(load_model)
    os.makedirs(cfg["output_dir"], exist_ok=True)
    result = {"seed": seed, "phases": {}}
    for phase in cfg["phases"]:
        environment = scenario.make_env(seed, phase.phase)
        on_checkpoint = None
        if cfg["checkpoint_interval"] and policy.uses_network:
            def on_checkpoint(step, pol, _phase=phase.phase):
                path = os.path.join(
                    cfg["output_dir"],
                    f"model_{pol.kind}_{scenario.name}_{_phase}_seed{seed}_step{step}.json",
                )
                enc.save_params(pol.params_, path)
        _, trace = loop_mod.run_phase(
            environment,
            policy,
            phase,
            feature_encoder,
            checkpoint_every=cfg["checkpoint_interval"],
            on_checkpoint=on_checkpoint,
        )
        shash = loop_mod.stream_hash(scenario, seed, phase.phase, phase.steps)
        header = metrics_mod.trace_header(scenario.name, policy.kind, seed, phase.phase, shash)
        path = _trace_path(cfg["output_dir"], policy.kind, scenario.name, phase.phase, seed)
        metrics_mod.write_trace(path, header, trace)
        window = metrics_mod.compute_window(trace, "full")
        result["phases"][phase.phase] = {
            "trace_path": path,
            "stream_hash": shash,
            "hit": window.hit_rate,
            "recall": window.mean_recall,
            "delay": window.mean_delay,
            "regret": window.regret,
        }
    if save_model:
        if not policy.uses_network:
            raise ConfigError(f"--save-model is only valid for network policies, not {policy.kind}")
        stem, ext = os.path.splitext(save_model)
        enc.save_params(policy.params_, f"{stem}_seed{seed}{ext or '.json'}")
    return result


def _pool_entry(args):
    cfg_doc, seed, save_model, load_model = args
    cfg = dict(cfg_doc)
    cfg["scenario"] = env_mod.Scenario.from_dict(cfg_doc["scenario"])
    return _run_seed(cfg, seed, save_model, load_model)


def _execute(cfg: dict, jobs: int, save_model=None, load_model=None) -> list:
    if jobs > 1:
        doc = dict(cfg)
        doc["scenario"] = cfg["scenario"].to_dict()
        doc["phases"] = cfg["phases"]  # PhaseConfig is picklable (dataclass)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(
                pool.map(_pool_entry, [(doc, s, save_model, load_model) for s in cfg["seeds"]])
            )
    return [_run_seed(cfg, s, save_model, load_model) for s in cfg["seeds"]]


def _report_rows(cfg: dict, results: list) -> list:
    rows = []
    for phase in cfg["phases"]:
        windows = []
        for res in results:
            ph = res["phases"][phase.phase]
            windows.append(
                metrics_mod.MetricWindow(0, 1, ph["hit"], ph["recall"], ph["delay"], ph["regret"])
            )
        if len(windows) >= 2:
            cells = metrics_mod.aggregate_seeds(windows)
        else:
            w = windows[0]
            cells = {
                "hit": metrics_mod.AggregateCell(w.hit_rate, 0.0, 1),
                "recall": metrics_mod.AggregateCell(w.mean_recall, 0.0, 1),
                "delay": metrics_mod.AggregateCell(w.mean_delay, 0.0, 1),
                "regret": metrics_mod.AggregateCell(w.regret, 0.0, 1),
            }
        rows.append(
            metrics_mod.ReportRow(
                cfg["policy_kind"], f"{cfg['scenario'].name}:{phase.phase}", cells
            )
        )
    return rows


def cmd_run(args) -> int:
    cfg = _parse_config(args.config, args.output)
    results = _execute(cfg, args.jobs, args.save_model, args.load_model)
    rows = _report_rows(cfg, results)
    os.makedirs(cfg["output_dir"], exist_ok=True)
    metrics_mod.write_table(rows, "csv", os.path.join(cfg["output_dir"], "report.csv"))
    metrics_mod.write_table(rows, "markdown", os.path.join(cfg["output_dir"], "report.md"))
    print(metrics_mod.emit_table(rows, "markdown"), end="")
    return 0


def cmd_compare(args) -> int:
    configs = [_parse_config(p, args.output) for p in args.configs]
    first = configs[0]
    for cfg in configs[1:]:
        if json.dumps(cfg["scenario"].to_dict(), sort_keys=True) != json.dumps(
            first["scenario"].to_dict(), sort_keys=True
        ):
            raise ConfigError(f"{cfg['path']}: scenario differs from {first['path']}")
        if cfg["seeds"] != first["seeds"]:
            raise ConfigError(f"{cfg['path']}: seed list differs from {first['path']}")
        if [p.phase for p in cfg["phases"]] != [p.phase for p in first["phases"]]:
            raise ConfigError(f"{cfg['path']}: phase list differs from {first['path']}")
    all_rows = []
    hashes = {}
    for cfg in configs:
        results = _execute(cfg, args.jobs)
        for res in results:
            for phase_name, ph in res["phases"].items():
                key = (res["seed"], phase_name)
                if key in hashes and hashes[key] != ph["stream_hash"]:
                    raise RuntimeError(
                        f"stream hash mismatch for seed {res['seed']} phase {phase_name}: "
                        f"paired-run contract broken"
                    )
                hashes[key] = ph["stream_hash"]
        all_rows.extend(_report_rows(cfg, results))
    out_dir = first["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    metrics_mod.write_table(all_rows, "csv", os.path.join(out_dir, "compare.csv"))
    metrics_mod.write_table(all_rows, "markdown", os.path.join(out_dir, "compare.md"))
    print(metrics_mod.emit_table(all_rows, "markdown"), end="")
    return 0


def cmd_scenario(args) -> int:
    if args.action == "export":
        try:
            scenario = env_mod.builtin_scenario(args.name)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        text = json.dumps(scenario.to_dict(), indent=2, sort_keys=True)
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        else:
            print(text)
        return 0
    # validate
    if os.path.exists(args.name):
        doc = _load_json(args.name)
    else:
        try:
            doc = env_mod.builtin_scenario(args.name).to_dict()
        except ValueError as e:
            raise ConfigError(str(e)) from e
    problems = env_mod.validate_scenario(doc)
    if problems:
        for p in problems:
            print(f"INVALID: {p}", file=sys.stderr)
        return 2
    print(f"{args.name}: scenario is valid")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandit-router",
        description="Run and compare bandit routing experiments on simulated retrieval backends.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one experiment config")
    run_p.add_argument("config")
    run_p.add_argument("--jobs", type=int, default=1)
    run_p.add_argument("--output", default=None, help="override the config's output_dir")
    run_p.add_argument("--save-model", default=None)
    run_p.add_argument("--load-model", default=None)
    run_p.set_defaults(func=cmd_run)

    cmp_p = sub.add_parser("compare", help="paired runs of several policies on one scenario")
    cmp_p.add_argument("configs", nargs="+")
    cmp_p.add_argument("--jobs", type=int, default=1)
    cmp_p.add_argument("--output", default=None)
    cmp_p.set_defaults(func=cmd_compare)

    sc_p = sub.add_parser("scenario", help="export or validate scenario files")
    sc_p.add_argument("action", choices=("export", "validate"))
    sc_p.add_argument("name", help="builtin scenario name or a JSON file path")
    sc_p.add_argument("--output", default=None)
    sc_p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure: identify the run, exit 1
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
