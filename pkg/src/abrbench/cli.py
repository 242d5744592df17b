"""Command-line entry point: reproducible simulate / solve / train / evaluate runs.

Every command resolves its configuration from defaults, an optional JSON
config file (``--config``), and explicit flags (highest precedence), writes
its artifacts atomically into ``--out``, and embeds the resolved config (in
JSON artifacts inline, for CSV artifacts via the ``run_config.json``
sidecar) so any artifact can be regenerated bit-identically.

Exit codes: 0 success, 2 usage, 3 data, 4 internal. Failures emit a
single-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import metrics
from .errors import DomainError, ParseError, UsageError
from .expert import (
    problem_from_state,
    solve_expert_ao,
    solve_expert_dp,
    solve_expert_enum,
)
from .learner import TrainConfig, act, load_checkpoint, save_checkpoint, train
from .media import load_manifest, preset, preset_names
from .policies import PolicyConfig, decide_robust_mpc, make_policy
from .simulator import initial_state, observe, run_session, session_to_jsonl, step
from .trace import TraceModel, load_trace, save_trace, synth_trace


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _load_manifest_arg(spec: str):
    if spec in preset_names():
        return preset(spec)
    path = Path(spec)
    if not path.exists():
        raise DomainError(f"manifest {spec!r} is neither a preset nor a file")
    return load_manifest(path.read_text(), id=path.stem)


def _trace_paths(spec: str) -> list[Path]:
    path = Path(spec)
    if path.is_dir():
        found = sorted(path.glob("*.csv"))
        if not found:
            raise DomainError(f"no *.csv traces under {spec!r}")
        return found
    if path.is_file():
        return [path]
    raise DomainError(f"trace path {spec!r} does not exist")


def _load_traces(spec: str):
    return [load_trace(p.read_text(), id=p.stem) for p in _trace_paths(spec)]


def _policy_factory(spec: str, manifest, params, knobs: dict | None = None):
    """Translate a policy spec string into a fresh-per-session policy factory."""
    kind, _, arg = spec.partition(":")
    knobs = knobs or {}
    if kind in ("buffer_based", "robust_mpc"):
        cfg = PolicyConfig(kind=kind, **knobs)
        return lambda: make_policy(cfg, manifest, params)
    if kind == "fixed":
        cfg = PolicyConfig(kind="fixed", fixed_level=int(arg or 0), **knobs)
        return lambda: make_policy(cfg, manifest, params)
    if kind == "random":
        cfg = PolicyConfig(kind="random", seed=int(arg or 0), **knobs)
        return lambda: make_policy(cfg, manifest, params)
    if kind == "actor":
        if not arg:
            raise UsageError("actor policy needs a checkpoint path: actor:<path>")
        theta, _cfg = load_checkpoint(Path(arg).read_text())
        policy_id = f"actor:{Path(arg).stem}"
        return lambda: (policy_id, lambda state, obs: act(theta, obs, "greedy"))
    raise UsageError(f"unknown policy spec {spec!r}")


def _policy_knobs(cfg: dict) -> dict:
    return {
        "mpc_horizon": int(cfg["mpc_horizon"]),
        "history_k": int(cfg["history_k"]),
        "reservoir_s": float(cfg["reservoir"]),
        "cushion_s": float(cfg["cushion"]),
    }


def _ints(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if str(x).strip()]


def _names(text: str) -> list[str]:
    return [x.strip() for x in str(text).split(",") if x.strip()]


# -- resolved-config plumbing ---------------------------------------------------


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
        if not isinstance(doc, dict):
            raise ParseError("config file must hold a JSON object")
        for key, value in doc.items():
            if key == "command":
                continue
            if key not in defaults:
                raise UsageError(f"unknown config key {key!r}")
            resolved[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _emit_run_config(out: Path, command: str, resolved: dict) -> dict:
    # the output directory is where the artifact lives, not part of the
    # experiment identity, so it stays out of the embedded config
    doc = {"command": command, **{k: v for k, v in resolved.items() if k != "out"}}
    _write_atomic(out / "run_config.json", _dump_json(doc))
    return doc


# -- subcommands ----------------------------------------------------------------

_SIMULATE_DEFAULTS = {
    "trace": None,
    "manifest": "pensieve",
    "policy": "buffer_based",
    "seed": 0,
    "start_offset": 0.0,
    "history_k": 8,
    "mpc_horizon": 5,
    "reservoir": 5.0,
    "cushion": 10.0,
    "out": "out",
}


def _cmd_simulate(args) -> int:
    cfg = _resolve(args, _SIMULATE_DEFAULTS)
    if not cfg["trace"]:
        raise UsageError("simulate needs --trace")
    manifest, params = _load_manifest_arg(cfg["manifest"])
    factory = _policy_factory(cfg["policy"], manifest, params, _policy_knobs(cfg))
    traces = _load_traces(cfg["trace"])
    out = Path(cfg["out"])
    run_config = _emit_run_config(out, "simulate", cfg)
    for trace in traces:
        policy_id, policy = factory()
        log = run_session(
            policy,
            trace,
            manifest,
            params,
            start_offset_s=float(cfg["start_offset"]),
            history_k=int(cfg["history_k"]),
            policy_id=policy_id,
            seed=int(cfg["seed"]),
        )
        name = f"session_{trace.id}_{policy_id.replace(':', '-')}_{cfg['seed']}.jsonl"
        _write_atomic(out / name, session_to_jsonl(log, config=run_config))
    return 0


_SYNTH_DEFAULTS = {
    "count": 1,
    "seed": 0,
    "mean": 3.0,
    "volatility": 0.3,
    "duration": 320.0,
    "step": 1.0,
    "out": "out",
}


def _cmd_synth(args) -> int:
    cfg = _resolve(args, _SYNTH_DEFAULTS)
    out = Path(cfg["out"])
    _emit_run_config(out, "synth", cfg)
    model = TraceModel(
        mean_mbps=float(cfg["mean"]),
        volatility=float(cfg["volatility"]),
        duration_s=float(cfg["duration"]),
        step_s=float(cfg["step"]),
    )
    base = int(cfg["seed"])
    for k in range(int(cfg["count"])):
        trace = synth_trace(base + k, model)
        _write_atomic(out / f"{trace.id}.csv", save_trace(trace))
    return 0


_SOLVE_DEFAULTS = {
    "trace": None,
    "manifest": "pensieve",
    "horizon": 8,
    "behavior": "robust_mpc",
    "history_k": 8,
    "seed": 0,
    "out": "out",
}


def _cmd_solve_expert(args) -> int:
    cfg = _resolve(args, _SOLVE_DEFAULTS)
    if not cfg["trace"]:
        raise UsageError("solve-expert needs --trace")
    manifest, params = _load_manifest_arg(cfg["manifest"])
    factory = _policy_factory(cfg["behavior"], manifest, params)
    mpc_cfg = PolicyConfig(kind="robust_mpc", history_k=int(cfg["history_k"]))
    traces = _load_traces(cfg["trace"])
    out = Path(cfg["out"])
    run_config = _emit_run_config(out, "solve-expert", cfg)

    for trace in traces:
        _behavior_id, behavior = factory()
        state = initial_state(manifest, params, history_k=int(cfg["history_k"]))
        lines = []
        while not state.terminal:
            obs = observe(state, manifest)
            problem = problem_from_state(state, trace, manifest, params, int(cfg["horizon"]))
            solution = solve_expert_ao(problem)
            adverse = decide_robust_mpc(state, manifest, params, mpc_cfg)
            lines.append(
                json.dumps(
                    {
                        "record": "label",
                        "chunk": state.next_chunk,
                        "observation": list(obs),
                        "expert_level": solution.levels[0],
                        "adverse_level": adverse,
                        "objective": solution.objective,
                        "iterations": solution.iterations,
                    },
                    sort_keys=True,
                )
            )
            _outcome, state = step(state, trace, manifest, params, behavior(state, obs))
        lines.append(
            json.dumps(
                {"record": "summary", "trace_id": trace.id, "config": run_config},
                sort_keys=True,
            )
        )
        _write_atomic(out / f"labels_{trace.id}.jsonl", "\n".join(lines) + "\n")
    return 0


_BENCH_DEFAULTS = {
    "n_values": "5,6,7,8",
    "instances": 5,
    "manifest": "pensieve",
    "mean": 3.0,
    "volatility": 0.3,
    "seed": 0,
    "solvers": "ao,enum",
    "dp_grid": 0.5,
    "out": "out",
}


def _cmd_bench_expert(args) -> int:
    cfg = _resolve(args, _BENCH_DEFAULTS)
    manifest, params = _load_manifest_arg(cfg["manifest"])
    solvers = _names(cfg["solvers"])
    unknown = set(solvers) - {"ao", "enum", "dp"}
    if unknown:
        raise UsageError(f"unknown solvers: {', '.join(sorted(unknown))}")
    out = Path(cfg["out"])
    _emit_run_config(out, "bench-expert", cfg)

    model = TraceModel(mean_mbps=float(cfg["mean"]), volatility=float(cfg["volatility"]))
    rows = ["solver,n,mean_ms,objective_gap"]
    for n in _ints(cfg["n_values"]):
        problems = []
        for k in range(int(cfg["instances"])):
            trace = synth_trace(int(cfg["seed"]) + 1000 * n + k, model)
            state = initial_state(manifest, params)
            problems.append(problem_from_state(state, trace, manifest, params, n))
        results: dict[str, list[tuple[float, float]]] = {name: [] for name in solvers}
        for problem in problems:
            for name in solvers:
                begin = time.perf_counter()
                if name == "ao":
                    solution = solve_expert_ao(problem)
                elif name == "enum":
                    solution = solve_expert_enum(problem)
                else:
                    solution = solve_expert_dp(problem, float(cfg["dp_grid"]))
                elapsed = (time.perf_counter() - begin) * 1000.0
                results[name].append((elapsed, solution.objective))
        best = [max(results[name][k][1] for name in solvers) for k in range(len(problems))]
        for name in solvers:
            mean_ms = sum(t for t, _ in results[name]) / len(problems)
            gap = sum(best[k] - results[name][k][1] for k in range(len(problems))) / len(problems)
            rows.append(f"{name},{n},{mean_ms:.3f},{gap!r}")
    _write_atomic(out / "bench.csv", "\n".join(rows) + "\n")
    return 0


_TRAIN_DEFAULTS = {
    "traces": None,
    "manifest": "pensieve",
    "epochs": 100,
    "beta": 1e-4,
    "eta": 0.2,
    "learning_rate": 0.2,
    "minibatch": 128,
    "horizon": 8,
    "history_k": 8,
    "latent_dim": 64,
    "hidden_dim": 128,
    "workers": 1,
    "seed": 0,
    "out": "out",
}


def _cmd_train(args) -> int:
    cfg = _resolve(args, _TRAIN_DEFAULTS)
    if not cfg["traces"]:
        raise UsageError("train needs --traces")
    manifest, params = _load_manifest_arg(cfg["manifest"])
    traces = _load_traces(cfg["traces"])
    out = Path(cfg["out"])
    run_config = _emit_run_config(out, "train", cfg)
    train_cfg = TrainConfig(
        beta=float(cfg["beta"]),
        eta=float(cfg["eta"]),
        learning_rate=float(cfg["learning_rate"]),
        minibatch=int(cfg["minibatch"]),
        epochs=int(cfg["epochs"]),
        horizon=int(cfg["horizon"]),
        history_k=int(cfg["history_k"]),
        seed=int(cfg["seed"]),
        latent_dim=int(cfg["latent_dim"]),
        hidden_dim=int(cfg["hidden_dim"]),
        workers=int(cfg["workers"]),
    )
    theta, report = train(traces, manifest, params, train_cfg)
    _write_atomic(out / "checkpoint.json", save_checkpoint(theta, config=run_config))
    _write_atomic(out / "report.json", _dump_json({"config": run_config, **report}))
    return 0


_EVAL_DEFAULTS = {
    "traces": None,
    "manifest": "pensieve",
    "policies": "buffer_based,robust_mpc",
    "seeds": "0",
    "start_offset": 0.0,
    "history_k": 8,
    "mpc_horizon": 5,
    "reservoir": 5.0,
    "cushion": 10.0,
    "out": "out",
}


def _cmd_evaluate(args) -> int:
    cfg = _resolve(args, _EVAL_DEFAULTS)
    if not cfg["traces"]:
        raise UsageError("evaluate needs --traces")
    manifest, params = _load_manifest_arg(cfg["manifest"])
    seeds = _ints(cfg["seeds"])
    if not seeds:
        raise UsageError("evaluate needs at least one seed")
    traces = _load_traces(cfg["traces"])
    knobs = _policy_knobs(cfg)
    factories = [
        _policy_factory(spec, manifest, params, knobs) for spec in _names(cfg["policies"])
    ]
    out = Path(cfg["out"])
    run_config = _emit_run_config(out, "evaluate", cfg)

    logs = []
    for trace in traces:
        for factory in factories:
            for seed in seeds:
                policy_id, policy = factory()
                logs.append(
                    run_session(
                        policy,
                        trace,
                        manifest,
                        params,
                        start_offset_s=float(cfg["start_offset"]),
                        history_k=int(cfg["history_k"]),
                        policy_id=policy_id,
                        seed=seed,
                    )
                )
    report = metrics.compare(logs)
    _write_atomic(out / "report.json", _dump_json({"config": run_config, **report}))
    _write_atomic(out / "report.csv", metrics.report_csv(report))
    _write_atomic(out / "plot.csv", metrics.plot_csv(report))
    return 0


_RANK_DEFAULTS = {"report": None, "out": "out"}

_RANK_HEADER = "policy,avg_rank,points,r1_pct,r2_pct,r3_pct,r4_pct,r5_pct,r6_pct"


def _cmd_rank(args) -> int:
    cfg = _resolve(args, _RANK_DEFAULTS)
    if not cfg["report"]:
        raise UsageError("rank needs --report (an evaluate report.json)")
    doc = json.loads(Path(cfg["report"]).read_text())
    if "matrix" not in doc:
        raise ParseError("report file has no QoE matrix")
    out = Path(cfg["out"])
    run_config = _emit_run_config(out, "rank", cfg)
    ranking = metrics.rank_points(doc["matrix"])
    rows = [_RANK_HEADER]
    for policy_id in sorted(ranking):
        stats = ranking[policy_id]
        hist = list(stats["rank_histogram_pct"]) + [0.0] * (6 - len(stats["rank_histogram_pct"]))
        hist_cols = ",".join(f"{h:.1f}" for h in hist[:6])
        rows.append(f"{policy_id},{stats['avg_rank']!r},{stats['points']},{hist_cols}")
    _write_atomic(out / "ranking.csv", "\n".join(rows) + "\n")
    _write_atomic(out / "ranking.json", _dump_json({"config": run_config, "ranking": ranking}))
    return 0


# -- argument parsing -----------------------------------------------------------


def _add_flags(sub: argparse.ArgumentParser, defaults: dict, types: dict) -> None:
    sub.add_argument("--config", help="JSON config file; explicit flags override it")
    for key, default in defaults.items():
        flag = "--" + key.replace("_", "-")
        sub.add_argument(flag, dest=key, type=types.get(key, str), default=None,
                         help=f"default: {default!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abrbench",
        description="Trace-driven adaptive-bitrate workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run sessions under an online policy")
    _add_flags(s, _SIMULATE_DEFAULTS, {"seed": int, "start_offset": float, "history_k": int,
                                       "mpc_horizon": int, "reservoir": float, "cushion": float})
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("synth", help="generate synthetic trace CSVs")
    _add_flags(s, _SYNTH_DEFAULTS, {"count": int, "seed": int, "mean": float,
                                    "volatility": float, "duration": float, "step": float})
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("solve-expert", help="emit offline expert labels for visited states")
    _add_flags(s, _SOLVE_DEFAULTS, {"horizon": int, "history_k": int, "seed": int})
    s.set_defaults(func=_cmd_solve_expert)

    s = sub.add_parser("bench-expert", help="time the expert solvers on an instance suite")
    _add_flags(s, _BENCH_DEFAULTS, {"instances": int, "mean": float, "volatility": float,
                                    "seed": int, "dp_grid": float})
    s.set_defaults(func=_cmd_bench_expert)

    s = sub.add_parser("train", help="train the imitation actor")
    _add_flags(s, _TRAIN_DEFAULTS, {"epochs": int, "beta": float, "eta": float,
                                    "learning_rate": float, "minibatch": int, "horizon": int,
                                    "history_k": int, "latent_dim": int, "hidden_dim": int,
                                    "workers": int, "seed": int})
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("evaluate", help="compare policies across traces and seeds")
    _add_flags(s, _EVAL_DEFAULTS, {"start_offset": float, "history_k": int,
                                   "mpc_horizon": int, "reservoir": float, "cushion": float})
    s.set_defaults(func=_cmd_evaluate)

    s = sub.add_parser("rank", help="trace-wise ranking points from an evaluate report")
    _add_flags(s, _RANK_DEFAULTS, {})
    s.set_defaults(func=_cmd_rank)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except (ParseError, DomainError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
