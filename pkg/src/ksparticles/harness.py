"""Config-driven batch experiments.

A run writes three files into ``output_dir``:

``replicas.csv``
    one row per replica, ``#`` header lines naming version, config hash and seed;
``events.jsonl``
    a header object followed by one collision event per line;
``aggregate.json``
    the normalized config (minus output location and worker count) and the
    aggregate report, under a header.

Aggregates are a pure function of the persisted rows, so :func:`summarize`
can rebuild them from disk and compare.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import (
    DEFAULT_EPS_COLL,
    DEFAULT_EPS_EXPL,
    DEFAULT_EPS_LINK,
    DEFAULT_EPS_SEP,
    ExplosionReport,
    Inconclusive,
    collision_census,
    detect_explosion,
    ensemble_statistics,
    reconstruction_error,
)
from .dynamics import SimulationParams, simulate_particles
from .errors import ConfigError, DomainError, KSError, ResultsError
from .regime import ModelParams, bessel_dimension, critical_size, format_fraction
from .rng import INITIAL, stream
from .serialization import write_trajectory

ANALYSES = ("decomposition", "census", "explosion", "drift_diagnostic")
TOP_KEYS = {"model", "sim", "replicas", "initial_condition", "analyses", "thresholds", "drift_time",
            "output_dir", "save_trajectories", "workers"}
REQUIRED_TOP = {"model", "sim", "replicas", "initial_condition", "analyses"}
MODEL_KEYS = {"n", "theta"}
SIM_KEYS = {"dt_base", "t_max", "regularization_n", "adapt_floor", "seed", "save_stride", "floor_patience"}
THRESHOLD_KEYS = {"eps_coll", "eps_sep", "eps_link", "eps_expl"}
IC_KEYS = {"explicit": {"kind", "positions"}, "unit_dispersion_random": {"kind", "seed", "per_replica"}}
# keys that change where or how fast results are produced but not the results
NON_SEMANTIC = ("output_dir", "workers")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams
    sim: SimulationParams
    replicas: int
    initial_condition: dict
    analyses: tuple
    thresholds: dict
    drift_time: float
    output_dir: str
    save_trajectories: bool = False
    workers: int = 1

    def normalized(self) -> dict:
        return {
            "model": self.model.as_dict(),
            "sim": self.sim.as_dict(),
            "replicas": self.replicas,
            "initial_condition": self.initial_condition,
            "analyses": list(self.analyses),
            "thresholds": dict(sorted(self.thresholds.items())),
            "drift_time": self.drift_time,
            "output_dir": self.output_dir,
            "save_trajectories": self.save_trajectories,
            "workers": self.workers,
        }

    def semantic(self) -> dict:
        """The normalized config without keys that cannot change results."""
        return {k: v for k, v in self.normalized().items() if k not in NON_SEMANTIC}

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.semantic(), sort_keys=True).encode()).hexdigest()[:16]

    def header(self) -> dict:
        return {"version": __version__, "config_hash": self.config_hash, "seed": self.sim.seed}


def _reject_unknown(section: dict, allowed: set, prefix: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{prefix or 'config'} must be a mapping")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown config key '{prefix}{key}'")


def _number(value, name, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config key '{name}' must be numeric, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"config key '{name}' must be an integer, got {value!r}")
        return int(value)
    return float(value)


def parse_config(data: dict, output_dir: str | None = None) -> ExperimentConfig:
    """Strictly validate a config mapping; any unknown key is an error naming it."""
    _reject_unknown(data, TOP_KEYS, "")
    missing = REQUIRED_TOP - set(data)
    if missing:
        raise ConfigError(f"missing config key '{sorted(missing)[0]}'")
    try:
        _reject_unknown(data["model"], MODEL_KEYS, "model.")
        if set(data["model"]) != MODEL_KEYS:
            raise ConfigError("config key 'model' needs both 'n' and 'theta'")
        theta = data["model"]["theta"]
        if isinstance(theta, bool) or not isinstance(theta, (int, float, str)):
            raise ConfigError("config key 'model.theta' must be a number or decimal string")
        model = ModelParams(_number(data["model"]["n"], "model.n", int), theta)

        _reject_unknown(data["sim"], SIM_KEYS, "sim.")
        sim_args = {}
        for key, value in data["sim"].items():
            kind = int if key in ("regularization_n", "seed", "save_stride", "floor_patience") else float
            sim_args[key] = _number(value, f"sim.{key}", kind)
        sim = SimulationParams(**sim_args)

        replicas = _number(data["replicas"], "replicas", int)
        if replicas < 1:
            raise ConfigError("config key 'replicas' must be at least 1")

        ic = data["initial_condition"]
        if not isinstance(ic, dict) or ic.get("kind") not in IC_KEYS:
            raise ConfigError("config key 'initial_condition.kind' must be 'explicit' or 'unit_dispersion_random'")
        _reject_unknown(ic, IC_KEYS[ic["kind"]], "initial_condition.")
        if ic["kind"] == "explicit":
            if "positions" not in ic:
                raise ConfigError("missing config key 'initial_condition.positions'")
            x0 = np.asarray(ic["positions"], dtype=float)
            if x0.shape != (model.n, 2) or not np.all(np.isfinite(x0)):
                raise ConfigError(f"config key 'initial_condition.positions' must be {model.n} finite [x, y] pairs")
            ic_norm = {"kind": "explicit", "positions": x0.tolist()}
        else:
            per = ic.get("per_replica", False)
            if not isinstance(per, bool):
                raise ConfigError("config key 'initial_condition.per_replica' must be a boolean")
            seed = _number(ic.get("seed", 0), "initial_condition.seed", int)
            if seed < 0:
                raise ConfigError("config key 'initial_condition.seed' must be nonnegative")
            ic_norm = {"kind": "unit_dispersion_random", "seed": seed, "per_replica": per}

        analyses = data["analyses"]
        if isinstance(analyses, str) or not isinstance(analyses, (list, tuple)) or not analyses:
            raise ConfigError("config key 'analyses' must be a non-empty list")
        for a in analyses:
            if a not in ANALYSES:
                raise ConfigError(f"unknown analysis '{a}' in config key 'analyses'")
        analyses = tuple(a for a in ANALYSES if a in analyses)

        thresholds = {"eps_coll": DEFAULT_EPS_COLL, "eps_sep": DEFAULT_EPS_SEP,
                      "eps_link": DEFAULT_EPS_LINK, "eps_expl": DEFAULT_EPS_EXPL}
        given = data.get("thresholds", {}) or {}
        _reject_unknown(given, THRESHOLD_KEYS, "thresholds.")
        for key, value in given.items():
            thresholds[key] = _number(value, f"thresholds.{key}")
            if thresholds[key] <= 0:
                raise ConfigError(f"config key 'thresholds.{key}' must be positive")
        if not thresholds["eps_coll"] < thresholds["eps_sep"] or not thresholds["eps_expl"] < thresholds["eps_sep"]:
            raise ConfigError("thresholds need eps_coll < eps_sep and eps_expl < eps_sep")

        drift_time = _number(data.get("drift_time", sim.t_max), "drift_time")
        if not 0 <= drift_time <= sim.t_max:
            raise ConfigError("config key 'drift_time' must lie in [0, sim.t_max]")
        save = data.get("save_trajectories", False)
        if not isinstance(save, bool):
            raise ConfigError("config key 'save_trajectories' must be a boolean")
        workers = _number(data.get("workers", 1), "workers", int)
        if workers < 1:
            raise ConfigError("config key 'workers' must be at least 1")
    except DomainError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    out = output_dir or data.get("output_dir") or os.environ.get("KSP_OUTPUT_DIR") or "ksp_results"
    return ExperimentConfig(model, sim, replicas, ic_norm, analyses, thresholds, drift_time, str(out), save, workers)


def load_config(path, output_dir: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return parse_config(data, output_dir)


def unit_dispersion_configuration(n: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. standard normal points, centred and scaled to total dispersion 1."""
    x = rng.standard_normal((n, 2))
    x -= x.mean(axis=0)
    return x / math.sqrt(float(np.sum(x * x)))


def initial_configuration(config: ExperimentConfig, replica: int) -> np.ndarray:
    ic = config.initial_condition
    if ic["kind"] == "explicit":
        return np.asarray(ic["positions"], dtype=float)
    indices = (replica,) if ic["per_replica"] else ()
    return unit_dispersion_configuration(config.model.n, stream(ic["seed"], INITIAL, *indices))


def _dispersion(x) -> float:
    dev = x - x.mean(axis=0)
    return float(np.sum(dev * dev))


def run_replica(config: ExperimentConfig, i: int) -> tuple[dict, list[dict]]:
    """Simulate and analyse replica ``i``; returns its row and its events."""
    model, th = config.model, config.thresholds
    x0 = initial_configuration(config, i)
    traj = simulate_particles(model, config.sim, x0, path_index=i)
    last = traj.frames[-1]
    row = {
        "replica": i,
        "status": traj.status.value,
        "final_time": float(traj.times[-1]),
        "n_steps": traj.n_steps,
        "min_dt": traj.min_dt,
        "flag_time": traj.flag_time,
        "m0_x": float(x0[:, 0].mean()),
        "m0_y": float(x0[:, 1].mean()),
        "r0": _dispersion(x0),
        "m_final_x": float(last[:, 0].mean()),
        "m_final_y": float(last[:, 1].mean()),
        "r_final": _dispersion(last),
    }
    events = []
    if "decomposition" in config.analyses:
        row["recon_error"] = reconstruction_error(traj.times, traj.frames)[0]
    if "drift_diagnostic" in config.analyses:
        t = config.drift_time
        if traj.flag_time is not None and t > traj.flag_time:
            row["r_at_drift_time"] = None
        else:
            j = int(np.searchsorted(traj.times, t))
            if traj.times[j] != t:
                w = (t - traj.times[j - 1]) / (traj.times[j] - traj.times[j - 1])
                row["r_at_drift_time"] = float((1 - w) * _dispersion(traj.frames[j - 1]) + w * _dispersion(traj.frames[j]))
            else:
                row["r_at_drift_time"] = _dispersion(traj.frames[j])
    if "explosion" in config.analyses:
        rep = detect_explosion(traj, model, th["eps_expl"], th["eps_sep"])
        if isinstance(rep, ExplosionReport):
            row.update(explosion="report", explosion_size=rep.size, explosion_time=rep.t_explosion)
        else:
            kind = "inconclusive" if isinstance(rep, Inconclusive) else "none"
            row.update(explosion=kind, explosion_size=None, explosion_time=None)
    if "census" in config.analyses:
        evs = collision_census(traj, th["eps_coll"], th["eps_sep"])
        row["n_events"] = len(evs)
        row["n_isolated"] = sum(e.isolated for e in evs)
        for k in range(2, model.n + 1):
            row[f"events_{k}"] = sum(e.size == k for e in evs)
            row[f"isolated_{k}"] = sum(e.size == k and e.isolated for e in evs)
        events = [{"replica": i, **e.as_dict()} for e in evs]
    if config.save_trajectories:
        out = Path(config.output_dir) / "trajectories"
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory(traj, out / f"traj_{i:05d}.csv", config.sim, config.header())
    return row, events


def row_columns(config: ExperimentConfig) -> list[str]:
    cols = ["replica", "status", "final_time", "n_steps", "min_dt", "flag_time",
            "m0_x", "m0_y", "r0", "m_final_x", "m_final_y", "r_final"]
    if "decomposition" in config.analyses:
        cols.append("recon_error")
    if "drift_diagnostic" in config.analyses:
        cols.append("r_at_drift_time")
    if "explosion" in config.analyses:
        cols += ["explosion", "explosion_size", "explosion_time"]
    if "census" in config.analyses:
        cols += ["n_events", "n_isolated"]
        cols += [f"events_{k}" for k in range(2, config.model.n + 1)]
        cols += [f"isolated_{k}" for k in range(2, config.model.n + 1)]
    return cols


_INT_COLS = {"replica", "n_steps", "explosion_size", "n_events", "n_isolated"}
_STR_COLS = {"status", "explosion"}


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, np.integer):
        value = int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return repr(value)
    return str(value)


def _parse_cell(col: str, text: str):
    if text == "":
        return None
    if col in _STR_COLS:
        return text
    if col in _INT_COLS or col.startswith(("events_", "isolated_")):
        return int(text)
    return float(text)


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_clean(v) for v in value]
    return value


def aggregate(rows: list[dict], config: ExperimentConfig) -> dict:
    """Deterministic fold over replica rows in index order."""
    rows = sorted(rows, key=lambda r: r["replica"])
    model = config.model
    n_rep = len(rows)
    status = Counter(r["status"] for r in rows)
    out = {
        "model": model.as_dict(),
        "n_replicas": n_rep,
        "status_counts": {k: status[k] for k in sorted(status)},
        "flag_rate": (n_rep - status.get("completed", 0)) / n_rep if n_rep else None,
    }
    if "explosion" in config.analyses:
        kinds = Counter(r["explosion"] for r in rows)
        sizes = Counter(r["explosion_size"] for r in rows if r["explosion"] == "report")
        modal = min(sizes, key=lambda s: (-sizes[s], s)) if sizes else None
        k0 = critical_size(model) if model.theta > 0 else None
        out["explosion"] = {
            "k0": k0,
            "reports": kinds.get("report", 0),
            "inconclusive": kinds.get("inconclusive", 0),
            "none": kinds.get("none", 0),
            "no_explosion_rate": sum(r["status"] == "completed" and r["explosion"] == "none" for r in rows) / n_rep,
            "size_counts": {str(k): sizes[k] for k in sorted(sizes)},
            "modal_size": modal,
        }
    if "census" in config.analyses:
        ev = {k: sum(r[f"events_{k}"] for r in rows) for k in range(2, model.n + 1)}
        iso = {k: sum(r[f"isolated_{k}"] for r in rows) for k in range(2, model.n + 1)}
        total_iso = sum(iso.values())
        forbidden = [k for k in range(3, model.n + 1) if bessel_dimension(model, k) >= 2]
        out["census"] = {
            "events_by_size": {str(k): v for k, v in ev.items()},
            "isolated_by_size": {str(k): v for k, v in iso.items()},
            "isolated_total": total_iso,
            "forbidden_sizes": forbidden,
            "forbidden_isolated_fraction": (sum(iso[k] for k in forbidden) / total_iso) if total_iso else None,
        }
    if "decomposition" in config.analyses:
        dm = np.array([[r["m_final_x"] - r["m0_x"], r["m_final_y"] - r["m0_y"]] for r in rows])
        d0 = np.array([r["r0"] for r in rows])
        d_end = np.array([r["r_final"] for r in rows])
        t_end = {r["final_time"] for r in rows}
        block = {"max_reconstruction_error": max(r["recon_error"] for r in rows)}
        if n_rep >= 2 and len(t_end) == 1 and status.get("completed", 0) == n_rep:
            ratio, ks_p, corr = ensemble_statistics(dm, d0, d_end, t_end.pop(), model)
            block.update(com_variance_ratio=ratio, dispersion_ks_p=ks_p, independence_corr=corr)
        else:
            block.update(com_variance_ratio=None, dispersion_ks_p=None, independence_corr=None,
                         note="ensemble statistics need >= 2 completed replicas sharing the final time")
        out["decomposition"] = block
    if "drift_diagnostic" in config.analyses:
        vals = np.array([r["r_at_drift_time"] for r in rows if r["r_at_drift_time"] is not None])
        # E R(X_t) = R(x0) + d(N) t holds path by path in expectation, so average r0
        used = [r["r0"] for r in rows if r["r_at_drift_time"] is not None]
        predicted = float(np.mean(used)) + bessel_dimension(model, model.n) * config.drift_time if used else None
        out["drift_diagnostic"] = {
            "t": config.drift_time,
            "n_paths": int(vals.size),
            "empirical_mean": float(vals.mean()) if vals.size else None,
            "standard_error": float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else None,
            "predicted_mean": predicted,
        }
    return _clean(out)


@dataclass
class BatchResult:
    path: Path
    rows: list
    events: list
    aggregate: dict


def _rows_csv(rows, config) -> str:
    buf = io.StringIO()
    for k, v in config.header().items():
        buf.write(f"# {k}={v}\n")
    buf.write(f"# model=N{config.model.n}_theta{format_fraction(config.model.theta)}\n")
    cols = row_columns(config)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def _replica_task(args):
    config, i = args
    return run_replica(config, i)


def run_batch(config: ExperimentConfig) -> BatchResult:
    """Run every replica, persist rows, events and the aggregate."""
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ResultsError(f"output directory {out} is not writable: {exc}") from exc
    tasks = [(config, i) for i in range(config.replicas)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_replica_task, tasks))
    else:
        results = [_replica_task(t) for t in tasks]
    rows = [r for r, _ in results]
    events = [e for _, evs in results for e in evs]
    agg = aggregate(rows, config)
    header = config.header()
    try:
        (out / "replicas.csv").write_text(_rows_csv(rows, config))
        lines = [json.dumps({"header": header}, sort_keys=True)]
        lines += [json.dumps(_clean(e), sort_keys=True) for e in events]
        (out / "events.jsonl").write_text("\n".join(lines) + "\n")
        doc = {"header": header, "config": config.semantic(), "aggregate": agg}
        (out / "aggregate.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ResultsError(f"cannot write results to {out}: {exc}") from exc
    return BatchResult(out, rows, events, agg)


def read_rows(path, config: ExperimentConfig) -> list[dict]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ResultsError(f"cannot read {path}: {exc}") from exc
    header = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            header[k.strip()] = v.strip()
        elif line:
            body.append(line)
    if header.get("config_hash") != config.config_hash:
        raise ResultsError(f"{path}: config hash does not match aggregate.json")
    reader = csv.reader(body)
    try:
        cols = next(reader)
    except StopIteration:
        raise ResultsError(f"{path}: no header row") from None
    if cols != row_columns(config):
        raise ResultsError(f"{path}: unexpected columns")
    try:
        return [{c: _parse_cell(c, v) for c, v in zip(cols, rec, strict=True)} for rec in reader]
    except ValueError as exc:
        raise ResultsError(f"{path}: corrupt row: {exc}") from exc


def _load_run(run_dir: Path):
    agg_path = run_dir / "aggregate.json"
    try:
        doc = json.loads(agg_path.read_text())
        config = parse_config(doc["config"], output_dir=str(run_dir))
    except (OSError, json.JSONDecodeError, KeyError, KSError) as exc:
        raise ResultsError(f"cannot load {agg_path}: {exc}") from exc
    if doc.get("header", {}).get("config_hash") != config.config_hash:
        raise ResultsError(f"{agg_path}: header hash does not match its config")
    rows = read_rows(run_dir / "replicas.csv", config)
    return doc, config, rows


def summarize(results_path) -> dict:
    """Rebuild the aggregate of a run directory from its ``replicas.csv``.

    A directory holding several run directories is summarized by pooling
    their rows, which requires identical configs apart from the seed.
    """
    root = Path(results_path)
    if not root.is_dir():
        raise ResultsError(f"results directory {root} does not exist")
    if (root / "aggregate.json").exists():
        doc, config, rows = _load_run(root)
        fresh = aggregate(rows, config)
        if fresh != doc["aggregate"]:
            raise ResultsError(f"{root / 'aggregate.json'}: persisted aggregate differs from recomputed one")
        return fresh
    runs = sorted(p for p in root.iterdir() if (p / "aggregate.json").exists())
    if not runs:
        raise ResultsError(f"no results found in {root}")
    loaded = [_load_run(p) for p in runs]
    models = {json.dumps(c.model.as_dict(), sort_keys=True) for _, c, _ in loaded}
    if len(models) > 1:
        raise ResultsError(f"{root} mixes results of different models; refusing to aggregate")

    def shape(c):
        d = c.semantic()
        d["sim"] = {k: v for k, v in d["sim"].items() if k != "seed"}
        d.pop("replicas")
        return json.dumps(d, sort_keys=True)

    if len({shape(c) for _, c, _ in loaded}) > 1:
        raise ResultsError(f"{root} holds runs with incompatible configs")
    pooled = []
    for _, _, rows in loaded:
        base = len(pooled)
        pooled += [{**r, "replica": base + r["replica"]} for r in rows]
    return aggregate(pooled, loaded[0][1])
