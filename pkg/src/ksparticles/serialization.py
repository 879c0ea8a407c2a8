"""Text persistence for configurations, trajectories, scalar paths and plot data.

Floats are written with ``repr``, the shortest decimal that reads back to the
same double, so every format round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .dynamics import ScalarPath, SimulationParams, Trajectory, TrajectoryStatus
from .errors import ResultsError
from .geometry import as_configuration
from .regime import ModelParams, dimension_curve


def _num(v) -> str:
    return repr(float(v))


def _header_lines(header: dict | None) -> str:
    if not header:
        return ""
    return "".join(f"# {k}={v}\n" for k, v in header.items())


def _data_lines(path) -> tuple[dict, list[str]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ResultsError(f"cannot read {path}: {exc}") from exc
    header, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    return header, body


def config_to_csv(x, header: dict | None = None) -> str:
    x = as_configuration(x)
    out = io.StringIO()
    out.write(_header_lines(header))
    out.write("particle_index,x,y\n")
    for i, (a, b) in enumerate(x):
        out.write(f"{i},{_num(a)},{_num(b)}\n")
    return out.getvalue()


def config_from_csv(text: str) -> np.ndarray:
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0].replace(" ", "") != "particle_index,x,y":
        raise ResultsError("configuration CSV must start with 'particle_index,x,y'")
    data = sorted((int(r[0]), float(r[1]), float(r[2])) for r in csv.reader(rows[1:]))
    if [d[0] for d in data] != list(range(len(data))):
        raise ResultsError("particle indices must be 0..N-1")
    return np.array([[d[1], d[2]] for d in data])


def config_to_json(x) -> str:
    x = as_configuration(x)
    return "[" + ",".join(f"[{_num(a)},{_num(b)}]" for a, b in x) + "]"


def config_from_json(text: str) -> np.ndarray:
    return as_configuration(json.loads(text))


def load_configuration(path) -> np.ndarray:
    """Read a configuration from a ``.json`` or ``.csv`` file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ResultsError(f"cannot read {path}: {exc}") from exc
    if path.suffix.lower() == ".json":
        return config_from_json(text)
    return config_from_csv(text)


def trajectory_sidecar(traj: Trajectory, sim: SimulationParams | None = None) -> dict:
    return {
        "model": traj.model.as_dict(),
        "sim": sim.as_dict() if sim is not None else None,
        "status": traj.status.value,
        "seed": traj.seed,
        "path_index": traj.path_index,
        "n_steps": traj.n_steps,
        "min_dt": traj.min_dt if math.isfinite(traj.min_dt) else None,
        "flag_time": traj.flag_time,
    }


def write_trajectory(traj: Trajectory, csv_path, sim: SimulationParams | None = None,
                     header: dict | None = None) -> tuple[Path, Path]:
    """Long-form ``t,particle,x,y`` CSV plus a JSON sidecar next to it."""
    csv_path = Path(csv_path)
    n = traj.frames.shape[1]
    t = np.repeat(traj.times, n)
    p = np.tile(np.arange(n), len(traj.times))
    xy = traj.frames.reshape(-1, 2)
    lines = [_header_lines(header), "t,particle,x,y\n"]
    lines.extend(f"{_num(a)},{i},{_num(b)},{_num(c)}\n" for a, i, b, c in zip(t, p, xy[:, 0], xy[:, 1]))
    try:
        csv_path.write_text("".join(lines))
        side = csv_path.with_suffix(".json")
        side.write_text(json.dumps(trajectory_sidecar(traj, sim), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ResultsError(f"cannot write {csv_path}: {exc}") from exc
    return csv_path, side


def read_trajectory(csv_path) -> Trajectory:
    csv_path = Path(csv_path)
    _, body = _data_lines(csv_path)
    if not body or body[0].replace(" ", "") != "t,particle,x,y":
        raise ResultsError(f"{csv_path}: expected 't,particle,x,y' header")
    side_path = csv_path.with_suffix(".json")
    try:
        side = json.loads(side_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ResultsError(f"cannot read sidecar {side_path}: {exc}") from exc
    model = ModelParams(int(side["model"]["n"]), side["model"]["theta"])
    arr = np.array([[float(v) for v in r] for r in csv.reader(body[1:])])
    n = model.n
    if arr.size == 0 or len(arr) % n:
        raise ResultsError(f"{csv_path}: row count is not a multiple of N={n}")
    times = arr[::n, 0]
    frames = np.empty((len(times), n, 2))
    frames[:, arr[:n, 1].astype(int)] = arr[:, 2:].reshape(len(times), n, 2)
    return Trajectory(
        times=times,
        frames=frames,
        status=TrajectoryStatus(side["status"]),
        seed=int(side["seed"]),
        model=model,
        path_index=int(side.get("path_index", 0)),
        n_steps=int(side.get("n_steps", 0)),
        min_dt=float(side["min_dt"]) if side.get("min_dt") is not None else math.inf,
        flag_time=side.get("flag_time"),
    )


def scalar_path_to_csv(path: ScalarPath) -> str:
    out = io.StringIO()
    absorbed = "none" if path.absorbed_at is None else _num(path.absorbed_at)
    out.write(f"# absorbed_at={absorbed}\n")
    out.write("t,value\n")
    for t, v in zip(path.times, path.values):
        out.write(f"{_num(t)},{_num(v)}\n")
    return out.getvalue()


def scalar_path_from_csv(text: str) -> ScalarPath:
    absorbed = None
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key.strip() == "absorbed_at" and value.strip() != "none":
                absorbed = float(value)
        elif line.strip() and line.strip() != "t,value":
            a, b = line.split(",")
            rows.append((float(a), float(b)))
    arr = np.array(rows).reshape(-1, 2)
    return ScalarPath(arr[:, 0], arr[:, 1], absorbed_at=absorbed)


def figure1_csv(model: ModelParams) -> str:
    """``k,d_value`` rows of the Bessel-dimension curve."""
    return "k,d_value\n" + "".join(f"{k},{_num(d)}\n" for k, d in dimension_curve(model))


def dispersion_trace_csv(traj: Trajectory, K=None) -> str:
    """``t,R_K`` rows along a trajectory."""
    frames = traj.frames if K is None else traj.frames[:, sorted(K)]
    dev = frames - frames.mean(axis=1, keepdims=True)
    r = np.einsum("tik,tik->t", dev, dev)
    return "t,R_K\n" + "".join(f"{_num(t)},{_num(v)}\n" for t, v in zip(traj.times, r))
