"""Command-line entry point.

Subcommands:
  run      execute one experiment config and write trace artifacts
  compare  run several configs on one shared data stream, align their MSE
  oracle   post-hoc diagnostics (regret, PMF consistency, resampling check)

Exit codes: 0 success, 1 runtime/protocol failure, 2 bad config or input.
All CSV files carry a header row; schema versions are recorded in the run
manifest. Everything except manifest timestamps is byte-deterministic for
a fixed config.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, IngestionError, ProtocolError
from .evaluation import (centralized_pmf, check_frozen_state, hindsight_table,
                         mse_trace, regret, tv_distance)
from .kernel_features import bandwidth_ladder
from .orchestrator import (ALGORITHMS, ExperimentConfig, build_dataset,
                           build_experiment_dictionary, build_streams,
                           run_experiment, run_trial)

SCHEMA_VERSIONS = {
    "trace": 1,
    "mse_trace": 1,
    "fraction": 1,
    "kernel_losses": 1,
    "compare": 1,
    "compare_comm": 1,
    "central_pmf": 1,
}

TRACE_COLUMNS = ["round", "selected_kernel", "sq_err_sum", "mse",
                 "alg_loss_sum", "label_sum", "uplink_scalars",
                 "downlink_scalars"]


def _f(x):
    # repr round-trips float64 exactly and never emits numpy wrappers
    return repr(float(x))


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _assign_dotted(d, dotted, value):
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        nxt = cur.setdefault(k, {})
        if not isinstance(nxt, dict):
            raise ConfigurationError(
                f"--set {dotted}: {k!r} is not a nested section")
        cur = nxt
    cur[keys[-1]] = value


def _parse_dataset_flag(text):
    parts = text.split(":")
    kind = parts[0]
    if kind == "synth":
        return {"kind": "synth"}
    if kind == "csv":
        if len(parts) < 3:
            raise ConfigurationError("--dataset csv needs csv:PATH:LABEL")
        label = parts[2]
        return {"kind": "csv", "path": parts[1],
                "label_column": int(label) if label.lstrip("-").isdigit() else label}
    if kind == "ar_csv":
        if len(parts) < 2:
            raise ConfigurationError("--dataset ar_csv needs ar_csv:PATH[:COLUMN[:LAG]]")
        spec = {"kind": "ar_csv", "path": parts[1]}
        if len(parts) > 2:
            spec["column"] = int(parts[2]) if parts[2].lstrip("-").isdigit() else parts[2]
        if len(parts) > 3:
            spec["lag"] = int(parts[3])
        return spec
    raise ConfigurationError(f"unknown dataset spec {text!r}")


def _load_config_dict(args):
    d = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        with open(path) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"config file {path} must hold an object")
        d.update(loaded)
    if getattr(args, "algo", None):
        d["algorithm"] = args.algo
    if getattr(args, "trials", None) is not None:
        d["trials"] = args.trials
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    if getattr(args, "dataset", None):
        d["dataset"] = _parse_dataset_flag(args.dataset)
    if getattr(args, "verbose_trace", False):
        d["verbose_trace"] = True
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        _assign_dotted(d, key.strip(), _parse_value(raw))
    return d


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_trace(path, trial_result):
    rows = []
    for r in trial_result.records:
        rows.append([r.round, r.selected_index, _f(r.sq_err_sum), _f(r.mse),
                     _f(r.alg_loss_sum), _f(r.labels.sum()),
                     r.uplink_scalars, r.downlink_scalars])
    _write_csv(path, TRACE_COLUMNS, rows)


def _write_kernel_losses(path, trial_result):
    T, K, P = trial_result.kernel_losses.shape
    header = ["round", "node"] + [f"ell_{p}" for p in range(1, P + 1)]
    rows = []
    for t in range(T):
        for k in range(K):
            rows.append([t + 1, k] +
                        [_f(v) for v in trial_result.kernel_losses[t, k]])
    _write_csv(path, header, rows)


def _synth_best_index(cfg):
    bw = cfg.dataset.get("bandwidth_sq")
    ladder = np.array(bandwidth_ladder(cfg.P))
    return int(np.argmin(np.abs(np.log(ladder) - math.log(bw)))) + 1


def _run_one(cfg, out_dir, write_all_trials=True):
    """Execute one config and write its artifact set; returns the result."""
    t0 = time.perf_counter()
    result = run_experiment(cfg)
    duration = time.perf_counter() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = {}

    n_traces = len(result.trials) if write_all_trials else 1
    for i in range(n_traces):
        name = f"trace_trial{i}.csv"
        _write_trace(out_dir / name, result.trials[i])
        artifacts[name] = name
        if result.trials[i].kernel_losses is not None:
            kname = f"kernel_losses_trial{i}.csv"
            _write_kernel_losses(out_dir / kname, result.trials[i])
            artifacts[kname] = kname

    rounds = np.arange(1, cfg.rounds() + 1)
    _write_csv(out_dir / "mse_trace.csv", ["round", "mse"],
               [[int(t), _f(m)] for t, m in zip(rounds, result.mse_mean)])
    artifacts["mse_trace.csv"] = "mse_trace.csv"

    if cfg.dataset.get("kind") == "synth" and cfg.algorithm != "sk_ofl":
        p_star = _synth_best_index(cfg)
        frac = (result.selection == p_star).mean(axis=0)
        _write_csv(out_dir / "fraction.csv", ["round", "fraction"],
                   [[int(t), _f(v)] for t, v in zip(rounds, frac)])
        artifacts["fraction.csv"] = "fraction.csv"

    summary = {
        "algorithm": cfg.algorithm,
        "trials": cfg.trials,
        "rounds": int(cfg.rounds()),
        "terminal_mse_mean": result.terminal_mse,
        "terminal_mse_per_trial": [t.terminal_mse for t in result.trials],
        "final_selected_index": [int(t.selected[-1]) for t in result.trials],
        "comm": result.comm_totals(),
    }
    if cfg.mse_burn_in:
        burned = [float(mse_trace(np.stack([r.predictions for r in t.records]),
                                  np.stack([r.labels for r in t.records]),
                                  burn_in=cfg.mse_burn_in)[-1])
                  for t in result.trials]
        summary["mse_burn_in"] = cfg.mse_burn_in
        summary["terminal_mse_burned_mean"] = float(np.mean(burned))
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    artifacts["summary.json"] = "summary.json"

    manifest = {
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(),
        "duration_s": duration,
        "config": cfg.to_dict(),
        "seeds": {"seed": cfg.seed, "data_seed": cfg.data_seed},
        "schema_versions": SCHEMA_VERSIONS,
        "artifacts": sorted(artifacts),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return result


def cmd_run(args):
    cfg = ExperimentConfig.from_dict(_load_config_dict(args))
    out_dir = Path(args.out)
    result = _run_one(cfg, out_dir)
    print(f"{cfg.algorithm}: {cfg.trials} trial(s), {cfg.rounds()} rounds, "
          f"terminal MSE {result.terminal_mse:.6g}")
    print(f"artifacts in {out_dir}")
    return 0


def _run_label(cfg, taken):
    base = cfg.algorithm
    if cfg.algorithm == "sk_ofl":
        base = f"sk_ofl_p{cfg.sk_kernel_index}"
    label = base
    i = 2
    while label in taken:
        label = f"{base}_{i}"
        i += 1
    return label


def cmd_compare(args):
    base = _load_config_dict(args)
    config_dicts = []
    for path in args.configs:
        p = Path(path)
        if not p.exists():
            raise ConfigurationError(f"config file not found: {p}")
        with open(p) as fh:
            config_dicts.append(json.load(fh))
    if args.sk_all:
        mk = dict(base)
        mk["algorithm"] = "mk_ofl"
        mk.pop("sk_kernel_index", None)
        config_dicts.append(mk)
        probe = ExperimentConfig.from_dict(mk)
        for p in range(1, probe.P + 1):
            sk = dict(base)
            sk["algorithm"] = "sk_ofl"
            sk["sk_kernel_index"] = p
            config_dicts.append(sk)
    if not config_dicts:
        raise ConfigurationError("compare needs config files or --sk-all")

    configs = []
    for d in config_dicts:
        merged = dict(base)
        merged.update(d)
        configs.append(ExperimentConfig.from_dict(merged))

    ref = configs[0]
    for i, c in enumerate(configs[1:], start=1):
        if c.data_seed != ref.data_seed:
            raise ConfigurationError(
                "compare refused: data_seed mismatch "
                f"(run 0 has {ref.data_seed}, run {i} has {c.data_seed}); "
                "runs must share one data stream")
        if c.dataset != ref.dataset:
            raise ConfigurationError(
                f"compare refused: dataset spec of run {i} differs from run 0")
        if c.rounds() != ref.rounds():
            raise ConfigurationError(
                "compare refused: round counts differ "
                f"(run 0 has {ref.rounds()}, run {i} has {c.rounds()})")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels, mse_cols, comm_rows = [], [], []
    for i, cfg in enumerate(configs):
        label = _run_label(cfg, set(labels))
        labels.append(label)
        result = _run_one(cfg, out_dir / label)
        mse_cols.append(result.mse_mean)
        comm = result.comm_totals()
        comm_rows.append([label, comm["uplink_scalars"],
                          comm["downlink_scalars"]])
        print(f"[{i + 1}/{len(configs)}] {label}: "
              f"terminal MSE {result.terminal_mse:.6g}")

    rounds = np.arange(1, ref.rounds() + 1)
    rows = [[int(t)] + [_f(col[j]) for col in mse_cols]
            for j, t in enumerate(rounds)]
    _write_csv(out_dir / "compare.csv", ["round"] + labels, rows)
    _write_csv(out_dir / "compare_comm.csv",
               ["run", "uplink_scalars", "downlink_scalars"], comm_rows)
    print(f"wrote {out_dir / 'compare.csv'} "
          f"({1 + len(labels)} columns, {len(rounds)} rows)")
    return 0


def _load_kernel_losses(path, P):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 2 + P:
        raise ConfigurationError(
            f"{path}: expected {2 + P} columns (round, node, ell_1..ell_{P})")
    T = int(data[:, 0].max())
    K = int(data[:, 1].max()) + 1
    out = np.empty((T, K, P))
    out[data[:, 0].astype(int) - 1, data[:, 1].astype(int)] = data[:, 2:]
    return out


def cmd_oracle(args):
    run_dir = Path(args.run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigurationError(f"no manifest.json under {run_dir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    cfg = ExperimentConfig.from_dict(manifest["config"])

    losses_path = run_dir / f"kernel_losses_trial{args.trial}.csv"
    if not losses_path.exists():
        raise ConfigurationError(
            f"per-kernel loss trace not found at {losses_path}; "
            "rerun `mkofl run` with --verbose-trace")
    kernel_losses = _load_kernel_losses(losses_path, cfg.P)
    T, K, P = kernel_losses.shape

    trace_path = run_dir / f"trace_trial{args.trial}.csv"
    if not trace_path.exists():
        raise ConfigurationError(f"trace not found at {trace_path}")
    with open(trace_path) as fh:
        reader = csv.DictReader(fh)
        alg_loss = sum(float(row["alg_loss_sum"]) for row in reader)

    # rebuild the exact data stream and dictionary from the manifest config
    ds = build_dataset(cfg)
    streams = build_streams(cfg, ds)
    dictionary = build_experiment_dictionary(cfg, ds.d)
    X = streams.X.transpose(1, 0, 2).reshape(-1, ds.d)
    y = streams.y.T.reshape(-1)
    _, hs_losses = hindsight_table(dictionary, X, y, cfg.lam, cfg.radius)
    report = regret(alg_loss, hs_losses, T)

    pmf_trace = centralized_pmf(kernel_losses, cfg.eta_global,
                                clip=cfg.clip_for_hedge)
    # replay each node's own Hedge PMF from the logged losses
    ell = (np.clip(kernel_losses, 0.0, 1.0)
           if cfg.clip_for_hedge else kernel_losses)
    steps = np.array([cfg.eta_global(t) for t in range(1, T + 1)])
    increments = steps[:, None, None] * K * ell
    log_w = np.concatenate(
        [np.zeros((1, K, P)), -np.cumsum(increments, axis=0)[:-1]])
    log_w -= log_w.max(axis=2, keepdims=True)
    node_q = np.exp(log_w)
    node_q /= node_q.sum(axis=2, keepdims=True)
    mean_q = node_q.mean(axis=1)
    tvs = np.array([tv_distance(mean_q[t], pmf_trace.q[t]) for t in range(T)])

    martingale = []
    if cfg.algorithm == "mk_ofl":
        capture = sorted(set(
            np.linspace(max(2, T // 5), max(2, (9 * T) // 10),
                        args.states, dtype=int).tolist()))
        trial = run_trial(cfg, dictionary, streams, args.trial,
                          capture_rounds=capture)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 997]))
        for state in trial.snapshots:
            res = check_frozen_state(state, dictionary, cfg.lam,
                                     args.n_draws, rng)
            res["round"] = state.round
            martingale.append(res)

    out_dir = Path(args.out) if args.out else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "central_pmf.csv",
               ["round"] + [f"q_{p}" for p in range(1, P + 1)],
               [[t + 1] + [_f(v) for v in pmf_trace.q[t]] for t in range(T)])
    payload = {
        "T": report.T,
        "alg_loss": report.alg_loss,
        "hindsight_losses": report.hindsight_losses.tolist(),
        "best_kernel": int(np.argmin(report.hindsight_losses)) + 1,
        "regret": report.regret,
        "regret_per_round": report.regret_per_round,
        "regret_over_sqrt_T": report.regret_over_sqrt_T,
        "per_kernel_gap": report.per_kernel_gap.tolist(),
        "tv_mean": float(tvs.mean()),
        "tv_max": float(tvs.max()),
        "martingale": martingale,
        "n_draws": args.n_draws,
    }
    with open(out_dir / "oracle_report.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)

    print(f"R_T = {report.regret:.6g}  R_T/T = {report.regret_per_round:.6g}  "
          f"R_T/sqrt(T) = {report.regret_over_sqrt_T:.6g}")
    print(f"TV(mean node PMF, pooled PMF): mean {tvs.mean():.4g}, "
          f"max {tvs.max():.4g}")
    if martingale:
        ok = sum(1 for m in martingale if m["passed"])
        print(f"index-resampling check: {ok}/{len(martingale)} states in band")
    print(f"report in {out_dir / 'oracle_report.json'}")
    return 0


def _add_config_flags(p, with_dataset=True):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (dotted keys reach nested "
                        "sections, values parsed as JSON)")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--algo", choices=ALGORITHMS)
    if with_dataset:
        p.add_argument("--dataset",
                       help="synth | csv:PATH:LABEL | ar_csv:PATH[:COL[:LAG]]")
    p.add_argument("--verbose-trace", action="store_true",
                   help="record per-kernel losses (needed by `oracle`)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mkofl",
        description="Online federated learning simulator with multiple "
                    "random-feature kernels")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_config_flags(p_run)
    p_run.add_argument("--out", default="mkofl_run", help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare",
                           help="run several configs on one data stream")
    p_cmp.add_argument("configs", nargs="*", help="config JSON files")
    _add_config_flags(p_cmp)
    p_cmp.add_argument("--sk-all", action="store_true",
                       help="add one mk_ofl run plus one sk_ofl run per kernel")
    p_cmp.add_argument("--out", default="mkofl_compare",
                       help="output directory")
    p_cmp.set_defaults(func=cmd_compare)

    p_orc = sub.add_parser("oracle",
                           help="post-hoc diagnostics for a finished run")
    p_orc.add_argument("run_dir", help="directory written by `mkofl run`")
    p_orc.add_argument("--trial", type=int, default=0)
    p_orc.add_argument("--n-draws", type=int, default=100_000)
    p_orc.add_argument("--states", type=int, default=10)
    p_orc.add_argument("--out", help="report directory (default: run dir)")
    p_orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, IngestionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ProtocolError as exc:
        print(f"protocol failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
