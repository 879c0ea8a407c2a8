import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.stats import ks_2samp

from ksparticles.dynamics import (
    ScalarPath,
    SimulationParams,
    TrajectoryStatus,
    sample_besq_transition,
    simulate_besq_path,
    simulate_besq_paths,
    simulate_comparison_sde,
    simulate_particles,
    simulate_sphere,
    time_change,
)
from ksparticles.errors import DomainError
from ksparticles.geometry import normalize_direction
from ksparticles.regime import ModelParams
from ksparticles.rng import SAMPLER, stream

from helpers import unit_config


def test_simulation_params_validation():
    with pytest.raises(DomainError):
        SimulationParams(dt_base=1e-3, adapt_floor=1e-2)
    with pytest.raises(DomainError):
        SimulationParams(t_max=0.0)
    with pytest.raises(DomainError):
        SimulationParams(seed=-1)
    with pytest.raises(DomainError):
        SimulationParams(save_stride=0)


def test_theta_zero_is_brownian():
    model = ModelParams(3, 0)
    x0 = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])
    sim = SimulationParams(dt_base=1e-3, t_max=4.0, adapt_floor=1e-3, seed=2)
    traj = simulate_particles(model, sim, x0)
    inc = np.diff(traj.frames, axis=0).ravel()
    assert traj.status is TrajectoryStatus.COMPLETED
    assert inc.size >= 10**4
    var = inc.var()
    se = var * math.sqrt(2.0 / inc.size)
    assert abs(var - 1e-3) < 3 * se


def _ode_oracle(theta, n, x0, t):
    c = theta / n

    def rhs(_, y):
        x = y.reshape(-1, 2)
        d = x[:, None, :] - x[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", d, d)
        np.fill_diagonal(r2, np.inf)
        return (-c * np.sum(d / r2[:, :, None], axis=1)).ravel()

    sol = solve_ivp(rhs, (0, t), x0.ravel(), method="DOP853", rtol=1e-12, atol=1e-14)
    return sol.y[:, -1].reshape(-1, 2)


def test_noise_free_pair_matches_ode():
    model = ModelParams(2, 1)
    x0 = np.array([[0.0, 0.0], [1.0, 0.0]])
    sim = SimulationParams(dt_base=1e-6, t_max=0.1, adapt_floor=1e-9, save_stride=10**6)
    traj = simulate_particles(model, sim, x0, noise_scale=0.0)
    ref = _ode_oracle(1.0, 2, x0, 0.1)
    assert np.max(np.abs(traj.frames[-1] - ref)) < 1e-6
    # symmetric approach along the line
    assert traj.frames[-1][0, 0] == pytest.approx(-traj.frames[-1][1, 0] + 1.0, abs=1e-12)
    assert np.all(traj.frames[:, :, 1] == 0.0)


def test_particles_deterministic_and_distinct_streams():
    model = ModelParams(5, "1.5")
    x0 = unit_config(5, 1)
    sim = SimulationParams(dt_base=1e-3, t_max=0.2, seed=9)
    a = simulate_particles(model, sim, x0, path_index=3)
    b = simulate_particles(model, sim, x0, path_index=3)
    c = simulate_particles(model, sim, x0, path_index=4)
    assert np.array_equal(a.frames, b.frames) and np.array_equal(a.times, b.times)
    assert not np.array_equal(a.frames, c.frames)
    assert np.all(np.diff(a.times) > 0)
    assert len(a.times) == len(a.frames)
    assert np.all(np.isfinite(a.frames))


def test_coincident_start_rejected():
    with pytest.raises(DomainError):
        simulate_particles(ModelParams(2, 1), SimulationParams(), np.zeros((2, 2)))


def test_step_floor_flag():
    model = ModelParams(10, "2.5")
    x0 = unit_config(10, 4) * 1e-3
    sim = SimulationParams(dt_base=1e-2, t_max=5, adapt_floor=1e-9, regularization_n=10**9,
                           floor_patience=100, seed=1)
    traj = simulate_particles(model, sim, x0)
    assert traj.flagged and traj.status is TrajectoryStatus.STEP_FLOOR_HIT
    assert traj.flag_time is not None and traj.flag_time <= traj.final_time < 5


def test_besq_transition_examples():
    rng = stream(1, SAMPLER)
    assert sample_besq_transition(3.0, 1.7, 0.0, rng) == 1.7
    z = sample_besq_transition(2.0, 0.0, 1.0, rng, size=10**5)
    assert abs(z.mean() - 2.0) < 3 * z.std() / math.sqrt(z.size)
    z = sample_besq_transition(3.0, 1.0, 1.0, rng, size=10**5)
    assert abs(z.mean() - 4.0) < 3 * z.std() / math.sqrt(z.size)
    with pytest.raises(DomainError):
        sample_besq_transition(0.0, 1.0, 1.0, rng)


def test_besq_transition_against_fine_euler():
    # independent oracle: plain Euler with reflection of overshoots, tiny step
    rng = np.random.default_rng(11)
    n, steps, t = 4000, 2000, 1.0
    dt = t / steps
    z = np.ones(n)
    for _ in range(steps):
        z = np.abs(z + 3.0 * dt + 2.0 * np.sqrt(z * dt) * rng.standard_normal(n))
    exact = sample_besq_transition(3.0, 1.0, 1.0, stream(2, SAMPLER), size=n)
    assert ks_2samp(z, exact).pvalue > 0.005


def test_besq_path_examples():
    zero = simulate_besq_path(0.0, 0.0, 1e-3, 1.0, stream(0, SAMPLER))
    assert zero.absorbed_at == 0.0
    rng = stream(3, SAMPLER)
    absorbed = sum(simulate_besq_path(-1.0, 1.0, 1e-2, 10.0, rng).absorbed_at is not None for _ in range(1000))
    assert absorbed >= 990
    rng = stream(4, SAMPLER)
    mins = [simulate_besq_path(2.0, 1.0, 1e-2, 5.0, rng).values.min() for _ in range(1000)]
    assert min(mins) > 0


def test_besq_path_truncated_at_absorption():
    p = simulate_besq_path(-1.0, 0.5, 1e-3, 10.0, stream(5, SAMPLER))
    assert p.absorbed_at is not None and p.times[-1] == pytest.approx(p.absorbed_at)
    assert np.all(np.isfinite(p.values))


def test_besq_paths_vectorized_mean():
    z = simulate_besq_paths(3.0, 1.0, 0.1, 1.0, 20000, stream(6, SAMPLER))
    assert z.shape == (20000, 11)
    assert abs(z[:, -1].mean() - 4.0) < 3 * z[:, -1].std() / math.sqrt(20000)


def test_comparison_sde_examples():
    p = simulate_comparison_sde(0.0, 0.0, 0.01, 0.0, 1e-3, 1.0, stream(0, SAMPLER))
    assert np.all(p.values == 0.0) and p.hits["tau0"] == 0.0
    rng = stream(7, SAMPLER)
    low = min(simulate_comparison_sde(0.5, 1.0, 0.01, 0.1, 1e-3, 2.0, rng).values.min() for _ in range(200))
    assert low >= -1e-12


def test_comparison_sde_records_hit_before_clamp():
    p = simulate_comparison_sde(0.0, 0.0, 0.01, 0.05, 1e-3, 5.0, stream(8, SAMPLER), y=0.5, stop_on_hit=True)
    assert (p.hits["tau0"] is not None) or (p.hits["tau_y"] is not None)


def test_time_change_examples():
    t = np.linspace(0, 1, 11)
    a, rho = time_change(ScalarPath(t, np.full_like(t, 2.0)))
    assert np.allclose(a.values, t / 2.0, atol=0, rtol=1e-15)
    assert np.allclose(rho(a.values), t, atol=1e-15)
    t = np.arange(10001) * 1e-4
    a, rho = time_change(ScalarPath(t, np.exp(t)))
    assert abs(a.values[-1] - (1 - math.exp(-1))) < 1e-6
    assert np.max(np.abs(rho(a.values) - t)) < 2e-4
    with pytest.raises(DomainError):
        time_change(ScalarPath(t, np.zeros_like(t)))


def test_sphere_constraints(equilateral):
    model = ModelParams(3, 1)
    sim = SimulationParams(dt_base=1e-3, t_max=0.5, seed=4)
    traj = simulate_sphere(model, equilateral, sim)
    assert np.max(np.abs(traj.frames.sum(axis=1))) < 1e-9
    assert np.max(np.abs(np.sqrt(np.einsum("tik,tik->t", traj.frames, traj.frames)) - 1)) < 1e-9
    assert traj.constraint_violation < 1e-9


def test_sphere_two_particles():
    u0 = normalize_direction(np.array([[0.0, 0.0], [1.0, 0.0]]))
    traj = simulate_sphere(ModelParams(2, "0.5"), u0, SimulationParams(dt_base=1e-3, t_max=0.2))
    dev = traj.frames - traj.frames.mean(axis=1, keepdims=True)
    assert np.allclose(np.einsum("tik,tik->t", dev, dev), 1.0, atol=1e-12)


def test_sphere_rejects_off_sphere(equilateral):
    with pytest.raises(DomainError):
        simulate_sphere(ModelParams(3, 1), equilateral * 2, SimulationParams())
