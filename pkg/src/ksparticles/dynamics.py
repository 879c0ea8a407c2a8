"""Stochastic integrators: particle system, squared Bessel processes,
the comparison diffusion on [0, 1] and the spherical process.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from . import _kernels as K
from .errors import DomainError, NumericalBlowupError
from .geometry import COINCIDENCE_SQ, as_configuration, pairwise_sq_distances
from .regime import ModelParams
from .rng import SPHERE, GeneratorNoise, ParticleNoise, stream


@dataclass(frozen=True)
class SimulationParams:
    """Integrator settings.

    The step is ``clamp(dt_base * min_pair_dist**2, adapt_floor, dt_base)``;
    ``floor_patience`` is the number of consecutive floor-saturated steps
    after which a path stops with :attr:`TrajectoryStatus.STEP_FLOOR_HIT`.
    """

    dt_base: float = 1e-3
    t_max: float = 1.0
    regularization_n: int = 10**6
    adapt_floor: float = 1e-7
    seed: int = 0
    save_stride: int = 1
    floor_patience: int = 50_000

    def __post_init__(self):
        for name in ("dt_base", "t_max", "adapt_floor"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be a positive finite number, got {value!r}")
        for name in ("regularization_n", "save_stride", "floor_patience"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise DomainError(f"{name} must be a positive integer, got {value!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.adapt_floor > self.dt_base:
            raise DomainError("adapt_floor must not exceed dt_base")

    def as_dict(self) -> dict:
        return asdict(self)


class TrajectoryStatus(str, Enum):
    COMPLETED = "completed"
    EXPLOSION_FLAGGED = "explosion_flagged"
    STEP_FLOOR_HIT = "step_floor_hit"


@dataclass
class Trajectory:
    times: np.ndarray
    frames: np.ndarray
    status: TrajectoryStatus
    seed: int
    model: ModelParams
    path_index: int = 0
    n_steps: int = 0
    min_dt: float = math.inf
    flag_time: float | None = None
    constraint_violation: float = 0.0

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def terminal_frame(self) -> np.ndarray:
        return self.frames[-1]

    @property
    def flagged(self) -> bool:
        return self.status is not TrajectoryStatus.COMPLETED


@dataclass
class ScalarPath:
    times: np.ndarray
    values: np.ndarray
    absorbed_at: float | None = None
    hits: dict = field(default_factory=dict)


def _check_distinct(x: np.ndarray):
    if len(x) > 1:
        r2 = pairwise_sq_distances(x)
        np.fill_diagonal(r2, np.inf)
        if np.min(r2) < COINCIDENCE_SQ:
            raise DomainError("initial configuration has coincident particles")


def _block_steps(sim: SimulationParams) -> int:
    # normal draws are sequential per stream, so the block size never changes a path
    return int(min(8192, max(16, math.ceil(sim.t_max / sim.dt_base) + 2)))


def _run_blocks(kernel, x, sim: SimulationParams, noise, extra_args=(), extra_tail=()):
    """Shared driver for the particle and sphere kernels."""
    state = np.array([0.0, 0.0, 0.0, 0.0, math.inf])
    times = [np.zeros(1)]
    frames = [x.copy()[None]]
    cap = noise.block_steps // sim.save_stride + 2
    buf_frames = np.empty((cap, *x.shape))
    buf_times = np.empty(cap)
    while True:
        block = noise.block()
        status, n_saved = kernel(
            x, state, block, *extra_args, sim.dt_base, sim.adapt_floor,
            sim.floor_patience, float(sim.t_max), sim.save_stride, buf_frames, buf_times, *extra_tail,
        )
        if n_saved:
            frames.append(buf_frames[:n_saved].copy())
            times.append(buf_times[:n_saved].copy())
        if status == K.NONFINITE:
            raise NumericalBlowupError("non-finite state encountered", last_frame=x.copy(), time=state[0])
        if status != K.RUNNING:
            break
    if times[-1][-1] < state[0] or status == K.FLOOR and not np.array_equal(frames[-1][-1], x):
        frames.append(x.copy()[None])
        times.append(np.array([state[0]]))
    return status, state, np.concatenate(times), np.concatenate(frames)


def simulate_particles(model: ModelParams, sim: SimulationParams, x0, path_index: int = 0,
                       noise_scale: float = 1.0) -> Trajectory:
    """Euler-Maruyama path of the regularized Keller-Segel particle system.

    Particle ``p`` of path ``path_index`` draws its Brownian increments from
    the stream ``(sim.seed, path_index, p)``. ``noise_scale=0`` integrates
    the deterministic drift only.
    """
    x = as_configuration(x0, model.n).copy()
    _check_distinct(x)
    noise = ParticleNoise(sim.seed, path_index, model.n, block_steps=_block_steps(sim))
    status, state, times, frames = _run_blocks(
        K.particle_block, x, sim, noise,
        extra_args=(float(noise_scale), model.coupling, 1.0 / sim.regularization_n),
    )
    flagged = status == K.FLOOR
    return Trajectory(
        times=times,
        frames=frames,
        status=TrajectoryStatus.STEP_FLOOR_HIT if flagged else TrajectoryStatus.COMPLETED,
        seed=sim.seed,
        model=model,
        path_index=path_index,
        n_steps=int(state[1]),
        min_dt=float(state[4]),
        flag_time=float(state[3]) if flagged else None,
    )


def simulate_sphere(model: ModelParams, u0, sim: SimulationParams, path_index: int = 0) -> Trajectory:
    """Projected Euler scheme for the spherical process on the unit sphere of ``H``."""
    u = as_configuration(u0, model.n).copy()
    if abs(np.sum(u * u) - 1.0) > 1e-9 or np.max(np.abs(u.sum(axis=0))) > 1e-9:
        raise DomainError("initial direction must satisfy sum u = 0 and |u| = 1")
    _check_distinct(u)
    noise = ParticleNoise(sim.seed, path_index, model.n, tag=SPHERE, block_steps=_block_steps(sim))
    violation = np.zeros(1)
    status, state, times, frames = _run_blocks(
        K.sphere_block, u, sim, noise,
        extra_args=(1.0, model.coupling, 1.0 / sim.regularization_n),
        extra_tail=(violation,),
    )
    flagged = status == K.FLOOR
    return Trajectory(
        times=times,
        frames=frames,
        status=TrajectoryStatus.STEP_FLOOR_HIT if flagged else TrajectoryStatus.COMPLETED,
        seed=sim.seed,
        model=model,
        path_index=path_index,
        n_steps=int(state[1]),
        min_dt=float(state[4]),
        flag_time=float(state[3]) if flagged else None,
        constraint_violation=float(violation[0]),
    )


def sample_besq_transition(delta: float, z0: float, t: float, rng: np.random.Generator, size=None):
    """Exact draw(s) from the time-``t`` law of a squared Bessel process.

    Uses the Poisson mixture of gamma laws:
    ``Z_t = 2 t G`` with ``G ~ Gamma(delta/2 + P)``, ``P ~ Poisson(z0 / (2 t))``.
    """
    if not delta > 0:
        raise DomainError("exact transition sampling needs delta > 0; use simulate_besq_path")
    if z0 < 0 or t < 0:
        raise DomainError("z0 and t must be nonnegative")
    if t == 0:
        return z0 if size is None else np.full(size, float(z0))
    p = rng.poisson(z0 / (2.0 * t), size=size)
    return 2.0 * t * rng.gamma(delta / 2.0 + p, size=size)


def _grid(dt: float, t_max: float) -> np.ndarray:
    n = int(math.ceil(t_max / dt - 1e-9))
    times = np.minimum(np.arange(n + 1) * dt, t_max)
    times[-1] = t_max
    return times


def simulate_besq_path(delta: float, z0: float, dt: float, t_max: float,
                       rng: np.random.Generator, scheme: str | None = None) -> ScalarPath:
    """One squared Bessel path on a fixed grid.

    For ``delta <= 0`` an Euler scheme runs until the first crossing of 0,
    where the path is absorbed and truncated. For ``delta > 0`` the default
    chains exact transitions, which never spuriously reach 0; ``scheme="euler"``
    selects Euler with reflection of overshoots instead.
    """
    if z0 < 0:
        raise DomainError("z0 must be nonnegative")
    if dt <= 0 or t_max <= 0:
        raise DomainError("dt and t_max must be positive")
    if scheme is None:
        scheme = "exact" if delta > 0 else "euler"
    if scheme == "exact":
        times = _grid(dt, t_max)
        values = np.empty_like(times)
        values[0] = z0
        steps = np.diff(times)
        for i, h in enumerate(steps):
            values[i + 1] = sample_besq_transition(delta, values[i], h, rng)
        return ScalarPath(times, values)
    if scheme != "euler":
        raise DomainError(f"unknown scheme {scheme!r}")
    absorb = delta <= 0
    if absorb and z0 == 0:
        return ScalarPath(np.zeros(1), np.zeros(1), absorbed_at=0.0)
    state = np.array([0.0, float(z0), math.nan, 0.0])
    noise = GeneratorNoise(rng, ())
    times, values = [np.zeros(1)], [np.array([float(z0)])]
    buf_v = np.empty(noise.block_steps)
    buf_t = np.empty(noise.block_steps)
    while True:
        status, n_saved = K.besq_euler_block(state, noise.block(), float(delta), float(dt), float(t_max),
                                             absorb, buf_v, buf_t)
        values.append(buf_v[:n_saved].copy())
        times.append(buf_t[:n_saved].copy())
        if status != K.RUNNING:
            break
    absorbed = None if math.isnan(state[2]) else float(state[2])
    return ScalarPath(np.concatenate(times), np.concatenate(values), absorbed_at=absorbed)


def simulate_besq_paths(delta: float, z0: float, dt: float, t_max: float, n_paths: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Ensemble of squared Bessel paths on a common grid via exact transitions.

    Returns an array of shape ``(n_paths, n_times)``; requires ``delta > 0``.
    """
    times = _grid(dt, t_max)
    out = np.empty((n_paths, times.size))
    out[:, 0] = z0
    for i, h in enumerate(np.diff(times)):
        out[:, i + 1] = 2.0 * h * rng.gamma(delta / 2.0 + rng.poisson(out[:, i] / (2.0 * h)))
    return out


def simulate_comparison_sde(delta: float, a: float, b: float, x0: float, dt: float, t_max: float,
                            rng: np.random.Generator, y: float | None = None,
                            stop_on_hit: bool = False) -> ScalarPath:
    """Euler path of the comparison diffusion on [0, 1].

    Records the first hitting times of 0 and of ``y`` in ``path.hits`` under
    keys ``"tau0"`` and ``"tau_y"`` (``None`` when not reached). Overshoots
    below 0 are clamped to 0 only after the crossing has been recorded.
    """
    if b <= 0 or a < 0:
        raise DomainError("need b > 0 and a >= 0")
    if not 0 <= x0 < 1:
        raise DomainError("x0 must lie in [0, 1)")
    if dt <= 0 or t_max <= 0:
        raise DomainError("dt and t_max must be positive")
    level = math.inf if y is None else float(y)
    tau0 = 0.0 if x0 == 0 else math.nan
    tau_y = 0.0 if x0 >= level else math.nan
    state = np.array([0.0, float(x0), tau0, tau_y, 0.0])
    times, values = [np.zeros(1)], [np.array([float(x0)])]
    if not (stop_on_hit and (x0 == 0 or x0 >= level)):
        noise = GeneratorNoise(rng, ())
        buf_v = np.empty(noise.block_steps)
        buf_t = np.empty(noise.block_steps)
        while True:
            status, n_saved = K.comparison_block(state, noise.block(), float(delta), float(a), float(b),
                                                 float(dt), float(t_max), level, stop_on_hit, buf_v, buf_t)
            values.append(buf_v[:n_saved].copy())
            times.append(buf_t[:n_saved].copy())
            if status != K.RUNNING:
                break
    hits = {
        "tau0": None if math.isnan(state[2]) else float(state[2]),
        "tau_y": None if math.isnan(state[3]) else float(state[3]),
    }
    return ScalarPath(np.concatenate(times), np.concatenate(values), hits=hits)


def comparison_hitting_mc(delta: float, a: float, b: float, x: float, y: float, n_paths: int,
                          dt: float, seed: int, t_max: float = 100.0) -> tuple[float, float, int]:
    """Monte-Carlo estimate of ``P(tau_0 < tau_y)`` with one stream per path.

    Returns ``(probability, standard_error, undecided)`` where undecided
    paths (neither level reached by ``t_max``) are excluded.
    """
    from .rng import SCALAR

    wins = decided = 0
    for p in range(n_paths):
        path = simulate_comparison_sde(delta, a, b, x, dt, t_max, stream(seed, SCALAR, p), y=y, stop_on_hit=True)
        tau0, tau_y = path.hits["tau0"], path.hits["tau_y"]
        if tau0 is None and tau_y is None:
            continue
        decided += 1
        if tau0 is not None and (tau_y is None or tau0 < tau_y):
            wins += 1
    prob = wins / decided
    return prob, math.sqrt(prob * (1 - prob) / decided), n_paths - decided


def time_change(d_path: ScalarPath) -> tuple[ScalarPath, Callable]:
    """Trapezoid approximation of ``A_t = int_0^t ds / D_s`` and its inverse.

    The path is used up to ``absorbed_at`` (exclusive) when present.
    Returns ``(a_path, rho)`` where ``rho`` interpolates ``t`` as a
    piecewise-linear function of ``A``.
    """
    times = np.asarray(d_path.times, dtype=float)
    values = np.asarray(d_path.values, dtype=float)
    if d_path.absorbed_at is not None:
        keep = times < d_path.absorbed_at
        times, values = times[keep], values[keep]
    if times.size == 0:
        raise DomainError("empty path")
    if np.any(values <= 0):
        raise DomainError("D must be strictly positive before absorption")
    inv = 1.0 / values
    increments = 0.5 * np.diff(times) * (inv[1:] + inv[:-1])
    a_values = np.concatenate([[0.0], np.cumsum(increments)])
    a_path = ScalarPath(times, a_values)

    def rho(a):
        return np.interp(a, a_values, times)

    return a_path, rho
