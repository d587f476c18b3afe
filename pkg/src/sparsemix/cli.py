"""Command-line front end: simulate | fit | summarize | replicate.

Runs are described by a flat key-value config file (one ``key = value`` per
line, ``#`` comments, sections by key prefix); the only positional arguments
are the subcommand and the config path. Progress goes to stderr, the final
machine-readable summary (JSON) to stdout.

Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 replication-check mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import experiments
from .dataset import DataSet, load_csv, save_csv
from .gibbs import ChainFailure, ChainTrace, InitSpec, RunOptions, run_chain
from .postproc import (
    summarize_chains,
    write_clustering_table_csv,
    write_counts_table_csv,
    write_summary_json,
)
from .priors import CovPriorConfig, MeanPriorConfig, PriorConfig
from .rngdist import (
    NotPositiveDefiniteError,
    NumericalFailureError,
    ParameterDomainError,
    RngStream,
)
from .synthdata import ScenarioSpec, simulate_scenario

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_MISMATCH = 3


class ConfigError(ValueError):
    pass


def parse_config(path) -> dict:
    """Read the flat key-value config format into a string dict."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = body.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _get(cfg, key, default=None, required=False):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"missing required config key {key!r}")
    return default


def _get_int(cfg, key, default=None, required=False):
    raw = _get(cfg, key, default=None, required=required)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {raw!r}") from exc


def _get_float(cfg, key, default=None, required=False):
    raw = _get(cfg, key, default=None, required=required)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number, got {raw!r}") from exc


def _get_bool(cfg, key, default):
    raw = _get(cfg, key)
    if raw is None:
        return default
    low = raw.lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"{key} must be on/off, got {raw!r}")


def build_prior(cfg) -> PriorConfig:
    m0 = _get(cfg, "prior.mean.m0")
    mean = MeanPriorConfig(
        b0_mode=_get(cfg, "prior.mean.b0_mode", "empirical_median"),
        m0=tuple(float(v) for v in m0.split(",")) if m0 else None,
        shrinkage=_get(cfg, "prior.mean.shrinkage", "fixed"),
        lam=_get_float(cfg, "prior.mean.lambda", 1.0),
        nu1=_get_float(cfg, "prior.mean.nu1", 0.5),
        nu2=_get_float(cfg, "prior.mean.nu2", 0.5),
    )
    cov = CovPriorConfig(
        mode=_get(cfg, "prior.cov.mode", "determinant"),
        r2=_get_float(cfg, "prior.cov.r2", 0.5),
        c0=_get_float(cfg, "prior.cov.c0", None),
    )
    return PriorConfig(
        G_max=_get_int(cfg, "prior.G_max", required=True),
        e0=_get_float(cfg, "prior.e0", 0.01),
        mean=mean,
        cov=cov,
    )


def load_run_data(cfg) -> tuple[DataSet, np.ndarray | None]:
    """Dataset for a run: an explicit CSV path wins over a scenario block."""
    data_path = _get(cfg, "data.path")
    if data_path is not None:
        return load_csv(data_path)
    d = _get_int(cfg, "scenario.d")
    n = _get_int(cfg, "scenario.n")
    if d is None or n is None:
        raise ConfigError("provide either data.path or scenario.d / scenario.n")
    weights = _get(cfg, "scenario.weights", "0.35,0.2,0.45")
    spec = ScenarioSpec(
        d=d,
        n=n,
        tau=_get_float(cfg, "scenario.tau", 1.0),
        weights=tuple(float(v) for v in weights.split(",")),
        seed=_get_int(cfg, "scenario.seed", _get_int(cfg, "seed", 0)),
    )
    return simulate_scenario(spec)


def _init_spec(cfg) -> InitSpec:
    kind = _get(cfg, "sampler.init", "kmeans")
    if kind == "kmeans":
        return InitSpec.kmeans(restarts=_get_int(cfg, "sampler.init_restarts", 10))
    if kind == "prior":
        return InitSpec.prior()
    if kind == "allocations":
        path = _get(cfg, "sampler.init_allocations", required=True)
        return InitSpec.from_allocations(np.load(path))
    raise ConfigError(f"unknown sampler.init {kind!r}")


def _out_dir(cfg) -> Path:
    out = Path(_get(cfg, "out_dir", required=True))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_run_manifest(out: Path, cfg: dict) -> None:
    (out / "run_config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def cmd_simulate(cfg) -> dict:
    out = _out_dir(cfg)
    data, labels = load_run_data(cfg)
    meta = {k: v for k, v in cfg.items() if k.startswith(("scenario.", "seed"))}
    path = save_csv(out / "dataset.csv", data, labels=labels, meta=meta)
    _write_run_manifest(out, cfg)
    return {
        "command": "simulate",
        "path": str(path),
        "n": data.n,
        "d": data.d,
        "sha256": _sha256(path),
    }


def _fit_one(args):
    (data, prior, init, T, burn_in, seed, stream_id, opt_kwargs, trace_path) = args
    options = RunOptions(trace_path=trace_path, **opt_kwargs)
    run_chain(RngStream(seed, stream_id), data, prior, init, T, burn_in, options)
    return str(trace_path)


def cmd_fit(cfg) -> dict:
    out = _out_dir(cfg)
    data, labels = load_run_data(cfg)
    if labels is not None and not (out / "dataset.csv").exists():
        save_csv(out / "dataset.csv", data, labels=labels)
    prior = build_prior(cfg)
    init = _init_spec(cfg)
    T = _get_int(cfg, "sampler.T", 10000)
    burn_in = _get_int(cfg, "sampler.burn_in", 1000)
    replicates = _get_int(cfg, "sampler.replicates", 1)
    seed = _get_int(cfg, "seed", 0)
    workers = _get_int(cfg, "sampler.workers", 1)
    progress = _get_int(cfg, "sampler.progress", 0)
    opt_kwargs = dict(
        permute=_get_bool(cfg, "sampler.permute", False),
        record_allocations=_get_bool(cfg, "sampler.record_allocations", True),
        record_cov_diag=_get_bool(cfg, "sampler.record_cov_diag", True),
        dump_covariances=_get_bool(cfg, "sampler.dump_covariances", False),
    )
    jobs = []
    for rep in range(replicates):
        kwargs = dict(opt_kwargs)
        if progress:
            kwargs.update(progress_every=progress, label=f"chain {rep}")
        jobs.append(
            (data, prior, init, T, burn_in, seed, rep, kwargs, out / f"chain_{rep:02d}.csv")
        )
    if workers > 1 and replicates > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(_fit_one, jobs))
    else:
        paths = []
        for job in jobs:
            if progress:
                job[7]["progress_stream"] = sys.stderr
            paths.append(_fit_one(job))
    _write_run_manifest(out, cfg)
    return {
        "command": "fit",
        "out_dir": str(out),
        "traces": [{"path": p, "sha256": _sha256(Path(p))} for p in paths],
    }


def cmd_summarize(cfg) -> dict:
    out = _out_dir(cfg)
    trace_paths = sorted(out.glob("chain_*.csv"))
    if not trace_paths:
        raise ConfigError(f"no chain_*.csv traces found in {out}")
    traces = [ChainTrace.load(p) for p in trace_paths]
    labels = None
    dataset_path = out / "dataset.csv"
    if dataset_path.exists():
        _, labels = load_csv(dataset_path)
    g_target_raw = _get(cfg, "summarize.g_target", "auto")
    g_target = None if g_target_raw == "auto" else int(g_target_raw)
    summary = summarize_chains(traces, true_labels=labels, g_target=g_target)
    write_summary_json(out / "summary.json", summary)
    return {"command": "summarize", "out_dir": str(out), **summary}


def cmd_replicate(cfg) -> tuple[dict, bool]:
    table = _get(cfg, "replicate.table", required=True)
    if table == "phidet":
        rows = experiments.phi_det_table()
        print(f"{'R2':>5} {'d':>4} {'computed':>10} {'reference':>10} ok", file=sys.stderr)
        for r2, d, got, ref, ok in rows:
            print(f"{r2:>5} {d:>4} {got:>10.3f} {ref:>10.3f} {'ok' if ok else 'FAIL'}",
                  file=sys.stderr)
        n_ok = sum(1 for r in rows if r[4])
        return (
            {"command": "replicate", "table": "phidet", "cells": len(rows), "matched": n_ok},
            n_ok == len(rows),
        )
    if table == "overlap":
        rows = experiments.overlap_table()
        matched, checked = 0, 0
        for d, got, ref, ok in rows:
            status = "flagged" if ok is None else ("ok" if ok else "FAIL")
            print(f"d={d:>4} computed={got:.3e} reference={ref:.3e} {status}",
                  file=sys.stderr)
            if ok is not None:
                checked += 1
                matched += bool(ok)
        return (
            {
                "command": "replicate",
                "table": "overlap",
                "cells": checked,
                "matched": matched,
                "flagged": sorted(experiments.FLAGGED_OVERLAP),
            },
            matched == checked,
        )
    if table == "counts":
        seed = _get_int(cfg, "seed", 11)
        stuck = experiments.run_stuck_experiment(
            seed=seed, T=_get_int(cfg, "replicate.T", 1000)
        )
        modes = experiments.run_known_count_replicates(
            seed=seed,
            n=_get_int(cfg, "replicate.n_large", 5000),
            T=_get_int(cfg, "replicate.T_large", 1000),
            n_replicates=_get_int(cfg, "replicate.replicates", 3),
            progress_stream=sys.stderr,
        )
        rows = [
            (_get_int(cfg, "replicate.T", 1000), 100, stuck.g_tilde, stuck.g_tilde),
            (_get_int(cfg, "replicate.T_large", 1000),
             _get_int(cfg, "replicate.n_large", 5000), min(modes), max(modes)),
        ]
        out = _out_dir(cfg) if "out_dir" in cfg else None
        if out is not None:
            write_counts_table_csv(out / "counts_table.csv", rows)
        ok = stuck.g_plus_min == stuck.g_plus_max == 10 and all(m == 3 for m in modes)
        return (
            {
                "command": "replicate",
                "table": "counts",
                "stuck": {
                    "g_tilde": stuck.g_tilde,
                    "change_fraction": stuck.change_fraction,
                },
                "large_n_modes": modes,
                "expected": {"stuck_g_tilde": 10, "large_n_mode": 3},
            },
            ok,
        )
    if table == "clustering":
        seed = _get_int(cfg, "seed", 7)
        n_datasets = _get_int(cfg, "replicate.datasets", 5)
        T = _get_int(cfg, "replicate.T", 2000)
        burn_in = _get_int(cfg, "replicate.burn_in", 200)
        cells = {}
        rows = []
        ok = True
        for (d, n), ref in experiments.REFERENCE_CLUSTERING.items():
            results = experiments.run_clustering_cell(
                d, n, n_datasets=n_datasets, T=T, burn_in=burn_in, seed=seed,
                progress_stream=sys.stderr,
            )
            g_tildes = [r.g_tilde for r in results]
            r_as = [r.r_a for r in results if r.r_a is not None]
            cells[f"d={d},n={n}"] = {
                "g_tilde": g_tildes,
                "g_hat": [r.g_hat for r in results],
                "r_a": r_as,
                "reference": {"g_tilde": ref[0], "g_hat": ref[2], "r_a": ref[3]},
            }
            for r in results:
                rows.append((d, n, "", r.g_tilde, "", r.g_hat,
                             "" if r.r_a is None else r.r_a))
            hits = sum(1 for g in g_tildes if g == ref[0])
            if (d, n) == (2, 100):
                ok = ok and hits > n_datasets / 2
            elif (d, n) == (50, 1000):
                good = sum(
                    1 for r in results
                    if r.g_tilde == 3 and r.r_a is not None and r.r_a >= 0.99
                )
                ok = ok and good >= n_datasets - 1
            else:
                ok = ok and hits >= n_datasets - 1
        out = _out_dir(cfg) if "out_dir" in cfg else None
        if out is not None:
            write_clustering_table_csv(out / "clustering_table.csv", rows)
        return ({"command": "replicate", "table": "clustering", "cells": cells}, ok)
    raise ConfigError(f"unknown replicate table {table!r} "
                      "(expected phidet | overlap | counts | clustering)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sparsemix",
        description="Gibbs sampling for sparse finite Gaussian mixtures",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "generate a synthetic dataset"),
        ("fit", "run replicate Gibbs chains"),
        ("summarize", "post-process trace files into a summary"),
        ("replicate", "rerun a reference table and compare"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="path to the key-value config file")
        if name == "replicate":
            p.add_argument("--table", help="override replicate.table from the config")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.command == "simulate":
            result = cmd_simulate(cfg)
        elif args.command == "fit":
            result = cmd_fit(cfg)
        elif args.command == "summarize":
            result = cmd_summarize(cfg)
        else:
            if getattr(args, "table", None):
                cfg["replicate.table"] = args.table
            result, ok = cmd_replicate(cfg)
            print(json.dumps(result, sort_keys=True))
            return EXIT_OK if ok else EXIT_MISMATCH
    except (ConfigError, ParameterDomainError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalFailureError, NotPositiveDefiniteError, ChainFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
