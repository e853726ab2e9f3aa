"""Experiment orchestration: config loading, seeded repetitions, sweeps and
report aggregation.

An experiment is a single JSON document; see ``README.md`` for the schema and
``hawkesbandit/configs/`` for ready-made examples.  Runs write

* ``rows.csv``: one row per (repetition, visit), and
* ``summary.json``: aggregate means plus per-cell event totals.
"""
import copy
import csv
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from ._rng import stream, stream_seed
from .bayes import MHConfig, PriorConfig
from .environment import EventDataset, GridSpec, ReplayEnvironment, ingest
from .hawkes import SynthConfig, TimeWindow, generate_synthetic
from .metrics import METRIC_NAMES, RankedResult, evaluate, reward_bar
from .policies import POLICY_KINDS, PolicyConfig, make_policy

logger = logging.getLogger(__name__)

ROW_FIELDS = ("policy", "repetition", "visit", "cells", "reward", "cum_reward", "reward_bar") + METRIC_NAMES
SUMMARY_METRICS = ("reward_bar",) + METRIC_NAMES


class ConfigError(ValueError):
    """Invalid experiment configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    policy: str = "hpspucb"
    policy_params: dict = field(default_factory=dict)
    data: dict = field(default_factory=lambda: {"kind": "synthetic"})
    grid: GridSpec = field(default_factory=GridSpec)
    n_select: int = 5
    window: float = 18000.0
    n_posterior: int = 50
    n_visits: int = None
    priors: PriorConfig = field(default_factory=PriorConfig)
    mh: MHConfig = field(default_factory=MHConfig)
    repetitions: int = 10
    seed: int = 0

    def policy_config(self):
        return PolicyConfig(n_select=self.n_select, n_posterior=self.n_posterior, priors=self.priors,
                            mh=self.mh, time_unit=self.window, **self.policy_params)

    def to_dict(self):
        return {
            "policy": self.policy,
            "policy_params": dict(self.policy_params),
            "data": copy.deepcopy(self.data),
            "grid": {"lon_range": list(self.grid.lon_range), "lat_range": list(self.grid.lat_range),
                     "X": self.grid.X, "Y": self.grid.Y},
            "n_select": self.n_select,
            "window": self.window,
            "n_posterior": self.n_posterior,
            "n_visits": self.n_visits,
            "priors": {"k_p": self.priors.k_p, "k_c": self.priors.k_c, "m": self.priors.m, "n": self.priors.n},
            "mh": {"burn_in": self.mh.burn_in, "thin": self.mh.thin,
                   "proposal_scales": list(self.mh.proposal_scales), "adapt": self.mh.adapt},
            "repetitions": self.repetitions,
            "seed": self.seed,
        }


_TOP_KEYS = {"policy", "policy_params", "data", "grid", "n_select", "window", "n_posterior", "n_visits",
             "priors", "mh", "repetitions", "seed"}
_POLICY_PARAM_KEYS = {"epsilon", "zeta_ucb", "zeta_gp", "tau_gp", "sigma_gp", "gamma", "tau", "zeta_hp",
                      "noise_jitter"}


def config_from_dict(doc):
    """Validate a parsed JSON document and build an :class:`ExperimentConfig`.

    All problems are collected and raised together as a :class:`ConfigError`.
    """
    errors = []
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a JSON object"])
    for k in sorted(set(doc) - _TOP_KEYS):
        errors.append(f"unknown key: {k}")

    def attempt(label, fn):
        try:
            return fn()
        except (TypeError, ValueError, KeyError) as exc:
            errors.append(f"{label}: {exc}")
            return None

    policy = doc.get("policy", "hpspucb")
    if policy not in POLICY_KINDS:
        errors.append(f"policy: unknown kind {policy!r}")
    params = doc.get("policy_params", {}) or {}
    for k in sorted(set(params) - _POLICY_PARAM_KEYS):
        errors.append(f"policy_params: unknown key {k}")
    grid = attempt("grid", lambda: GridSpec(**{k: tuple(v) if isinstance(v, list) else v
                                               for k, v in doc.get("grid", {}).items()}))
    priors = attempt("priors", lambda: PriorConfig(**doc.get("priors", {})))
    mh_doc = dict(doc.get("mh", {}))
    if "proposal_scales" in mh_doc and not isinstance(mh_doc["proposal_scales"], (int, float)):
        mh_doc["proposal_scales"] = tuple(mh_doc["proposal_scales"])
    mh_doc.pop("num_samples", None)
    mh = attempt("mh", lambda: MHConfig(**mh_doc))
    data = doc.get("data", {"kind": "synthetic"})
    kind = data.get("kind") if isinstance(data, dict) else None
    if kind == "synthetic":
        attempt("data.synth", lambda: _synth_from_dict(data.get("synth", {})))
    elif kind == "csv":
        if "path" not in data:
            errors.append("data: csv source needs a path")
    else:
        errors.append(f"data: kind must be 'synthetic' or 'csv', got {kind!r}")

    def _int(name, default, lo):
        v = doc.get(name, default)
        if v is None and name == "n_visits":
            return None
        if not isinstance(v, int) or isinstance(v, bool) or v < lo:
            errors.append(f"{name}: must be an integer >= {lo}, got {v!r}")
            return default
        return v

    n_select = _int("n_select", 5, 1)
    n_posterior = _int("n_posterior", 50, 1)
    repetitions = _int("repetitions", 10, 1)
    seed = _int("seed", 0, 0)
    n_visits = _int("n_visits", None, 1)
    window = doc.get("window", 18000.0)
    if not isinstance(window, (int, float)) or window <= 0:
        errors.append(f"window: must be a positive number, got {window!r}")
    if grid is not None and isinstance(n_select, int) and n_select > grid.n_cells:
        errors.append(f"n_select: {n_select} exceeds the {grid.n_cells} grid cells")
    if kind == "synthetic" and isinstance(window, (int, float)) and window > 0:
        synth = attempt("data.synth", lambda: _synth_from_dict(data.get("synth", {})))
        if synth is not None and synth.horizon < window:
            errors.append("window: longer than the synthetic horizon (no visits)")
    if priors is not None and mh is not None and not errors:
        attempt("policy_params", lambda: PolicyConfig(n_select=n_select, **params))
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(policy=policy, policy_params=dict(params), data=data, grid=grid, n_select=n_select,
                            window=float(window), n_posterior=n_posterior, n_visits=n_visits, priors=priors,
                            mh=mh, repetitions=repetitions, seed=seed)


def load_config(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
    return config_from_dict(doc)


def _synth_from_dict(d):
    d = dict(d)
    if "domain" in d:
        d["domain"] = tuple(tuple(b) for b in d["domain"])
    return SynthConfig(**d)


def load_dataset(cfg, repetition=0):
    """Materialise the event log named by ``cfg.data``.

    Synthetic data is redrawn for every repetition unless ``data.seed`` pins
    a single realisation.
    """
    data = cfg.data
    if data["kind"] == "synthetic":
        synth = _synth_from_dict(data.get("synth", {}))
        if data.get("seed") is not None:
            rng = stream(int(data["seed"]), "data")
        else:
            rng = stream(cfg.seed, "data", repetition)
        events = generate_synthetic(synth, rng)
        return EventDataset.from_synthetic(events, synth.horizon)
    if data["kind"] == "csv":
        if "schema" in data or "filters" in data:
            ds, _ = ingest(data["path"], data.get("schema"), data.get("filters"), cfg.grid)
            return ds
        period = data.get("period")
        return EventDataset.from_csv(data["path"], TimeWindow(*period) if period else None)
    raise ConfigError([f"data: unknown kind {data['kind']!r}"])


def _fmt(x):
    return repr(float(x))


def run_repetition(cfg, dataset, repetition):
    """One bandit episode; returns ``(rows, counts)`` with the per-visit
    rows and the ground-truth ``(V, cells)`` count matrix."""
    env = ReplayEnvironment(dataset, cfg.grid, cfg.window, cfg.n_visits)
    total = env.total_events
    policy = make_policy(cfg.policy, cfg.policy_config(), random_state=stream_seed(cfg.seed, "rep", repetition))
    policy.fit(cfg.grid.shape, window=cfg.window)
    rows = []
    cum = 0
    for v in range(env.n_visits):
        rec = policy.predict()
        window = env.visit_window(v)
        obs = env.step(rec)
        reward = sum(len(ts) for ts in obs.values())
        cum += reward
        scores = evaluate(RankedResult.from_counts(rec, env.counts[v]))
        row = {"policy": cfg.policy, "repetition": repetition, "visit": v,
               "cells": " ".join(str(int(a)) for a in rec), "reward": reward, "cum_reward": cum,
               "reward_bar": reward_bar(cum, total)}
        row.update(scores)
        rows.append(row)
        if v + 1 < env.n_visits:
            policy.partial_fit(obs, window)
    return rows, env.counts


def _run_rep_job(args):
    cfg_dict, dataset, repetition = args
    return run_repetition(config_from_dict(cfg_dict), dataset, repetition)


@dataclass
class RunResult:
    config: ExperimentConfig
    rows: list
    summary: dict

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        write_rows(os.path.join(out_dir, "rows.csv"), self.rows)
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return out_dir


def write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ROW_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()})


def read_rows(path):
    """Parse a ``rows.csv``; malformed rows raise with their line numbers."""
    out, problems = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in ROW_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for line, r in enumerate(reader, start=2):
            try:
                row = {"policy": r["policy"], "repetition": int(r["repetition"]), "visit": int(r["visit"]),
                       "cells": [int(c) for c in r["cells"].split()], "reward": int(r["reward"]),
                       "cum_reward": int(r["cum_reward"])}
                for k in SUMMARY_METRICS:
                    row[k] = float(r[k])
                out.append(row)
            except (TypeError, ValueError) as exc:
                problems.append(f"{path}:{line}: {exc}")
    if problems:
        raise ValueError("; ".join(problems))
    return out


def summarize(rows, cfg, env_counts):
    """Aggregate rows; ``env_counts`` is the per-cell event total over all repetitions."""
    reps = sorted({r["repetition"] for r in rows})
    per_rep = {}
    for rep in reps:
        rr = [r for r in rows if r["repetition"] == rep]
        entry = {"reward_bar": rr[-1]["reward_bar"], "total_reward": rr[-1]["cum_reward"]}
        for k in METRIC_NAMES:
            entry[k] = float(np.mean([r[k] for r in rr]))
        per_rep[str(rep)] = entry
    means = {k: float(np.mean([per_rep[str(rep)][k] for rep in reps])) for k in SUMMARY_METRICS}
    return {
        "policy": cfg.policy,
        "config": cfg.to_dict(),
        "n_visits": 1 + max(r["visit"] for r in rows),
        "total_events": int(env_counts.sum()),
        "cell_events": np.asarray(env_counts).astype(int).tolist(),
        "per_repetition": per_rep,
        "mean": means,
    }


def load_datasets(cfg):
    """One dataset per repetition (shared when the source is fixed)."""
    if cfg.data["kind"] == "synthetic" and cfg.data.get("seed") is None:
        return [load_dataset(cfg, r) for r in range(cfg.repetitions)]
    return [load_dataset(cfg)] * cfg.repetitions


def run_experiment(cfg, parallel=1, datasets=None):
    """Run ``cfg.repetitions`` seeded episodes and aggregate them.

    ``datasets`` (one per repetition) may be passed to reuse event logs
    across experiments; they are loaded from ``cfg.data`` otherwise.
    """
    datasets = datasets if datasets is not None else load_datasets(cfg)
    reps = range(cfg.repetitions)
    if parallel and parallel > 1:
        jobs = [(cfg.to_dict(), datasets[r], r) for r in reps]
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            chunks = list(pool.map(_run_rep_job, jobs))
    else:
        chunks = [run_repetition(cfg, datasets[r], r) for r in reps]
    rows = [row for chunk, _ in chunks for row in chunk]
    cell_events = sum(counts.sum(axis=0) for _, counts in chunks)
    return RunResult(cfg, rows, summarize(rows, cfg, cell_events))


def _with_params(cfg, point):
    new = copy.copy(cfg)
    new.policy_params = {**cfg.policy_params, **point}
    return new


def expand_grid(grid):
    """All combinations of a ``{param: [values]}`` mapping, in a fixed order."""
    if not grid:
        raise ValueError("sweep grid is empty")
    names = sorted(grid)
    values = [grid[n] if isinstance(grid[n], list) else [grid[n]] for n in names]
    return [dict(zip(names, combo)) for combo in itertools.product(*values)]


def sweep(param_grid, base_cfg, parallel=1, datasets=None, out_dir=None):
    """Run ``base_cfg`` at every point of ``param_grid``.

    Returns ``(table, best)``: one row per point with the aggregate means (or
    an error message), and the best row for every metric.
    """
    datasets = datasets if datasets is not None else load_datasets(base_cfg)
    table = []
    for i, point in enumerate(expand_grid(param_grid)):
        row = {"point": i, **point}
        try:
            result = run_experiment(_with_params(base_cfg, point), parallel=parallel, datasets=datasets)
            row.update(result.summary["mean"])
            row["error"] = ""
            if out_dir:
                result.write(os.path.join(out_dir, f"point_{i:03d}"))
        except Exception as exc:  # noqa: BLE001 - a failing point must not stop the sweep
            logger.exception("sweep point %s failed", point)
            row["error"] = f"{type(exc).__name__}: {exc}"
        table.append(row)
    ok = [r for r in table if not r["error"]]
    best = {m: max(ok, key=lambda r: r[m]) for m in SUMMARY_METRICS} if ok else {}
    return table, best


def write_table(path, table):
    keys = []
    for r in table:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in table:
            w.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()})


def _resolve(path):
    if os.path.isdir(path):
        return os.path.join(path, "rows.csv"), os.path.join(path, "summary.json")
    return path, os.path.join(os.path.dirname(path), "summary.json")


def report(paths, out_dir):
    """Aggregate run outputs into plot-ready CSVs.

    Writes ``summary.csv`` (one row per run), ``cumulative.csv`` (mean
    reward_bar per visit and policy) and ``cells.csv`` (per-cell events and
    mean visit counts, with the Spearman correlation between the two).
    """
    if not paths:
        raise ValueError("report needs at least one result")
    os.makedirs(out_dir, exist_ok=True)
    summary_rows, curve_rows, cell_rows = [], [], []
    for path in paths:
        rows_path, summary_path = _resolve(path)
        rows = read_rows(rows_path)
        with open(summary_path) as fh:
            meta = json.load(fh)
        policy = meta["policy"]
        reps = sorted({r["repetition"] for r in rows})
        n_visits = max(r["visit"] for r in rows) + 1
        entry = {"run": path, "policy": policy, "repetitions": len(reps)}
        for k in SUMMARY_METRICS:
            if k == "reward_bar":
                vals = [max((r for r in rows if r["repetition"] == rep), key=lambda r: r["visit"])[k] for rep in reps]
            else:
                vals = [np.mean([r[k] for r in rows if r["repetition"] == rep]) for rep in reps]
            entry[k] = float(np.mean(vals))
            entry[f"{k}_std"] = float(np.std(vals))
        summary_rows.append(entry)
        for v in range(n_visits):
            vals = [r["reward_bar"] for r in rows if r["visit"] == v]
            curve_rows.append({"run": path, "policy": policy, "visit": v, "reward_bar": float(np.mean(vals))})
        events = np.asarray(meta["cell_events"])
        visits = np.zeros(events.size)
        for r in rows:
            for a in r["cells"]:
                visits[a] += 1
        visits /= len(reps)
        rho = spearmanr(events, visits).statistic if np.ptp(events) > 0 and np.ptp(visits) > 0 else float("nan")
        for a in range(events.size):
            cell_rows.append({"run": path, "policy": policy, "cell": a, "events": int(events[a]),
                              "mean_visits": float(visits[a]), "spearman_events_visits": float(rho)})
    write_table(os.path.join(out_dir, "summary.csv"), summary_rows)
    write_table(os.path.join(out_dir, "cumulative.csv"), curve_rows)
    write_table(os.path.join(out_dir, "cells.csv"), cell_rows)
    return summary_rows, curve_rows, cell_rows
