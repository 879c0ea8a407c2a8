import math

import numpy as np
from helpers import unit_config
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ksparticles.dynamics import ScalarPath, SimulationParams, simulate_particles
from ksparticles.regime import ModelParams
from ksparticles.serialization import (
    config_from_csv,
    config_from_json,
    config_to_csv,
    config_to_json,
    dispersion_trace_csv,
    figure1_csv,
    load_configuration,
    read_trajectory,
    scalar_path_from_csv,
    scalar_path_to_csv,
    write_trajectory,
)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.just(2)), elements=finite))
def test_config_round_trip_bit_exact(x):
    assert np.array_equal(config_from_csv(config_to_csv(x)), x)
    assert np.array_equal(config_from_json(config_to_json(x)), x)


def test_config_csv_format():
    text = config_to_csv(np.array([[0.1, 2.0]]), header={"seed": 3})
    assert text == "# seed=3\nparticle_index,x,y\n0,0.1,2.0\n"


def test_load_configuration(tmp_path):
    x = unit_config(4, 0)
    (tmp_path / "a.json").write_text(config_to_json(x))
    (tmp_path / "a.csv").write_text(config_to_csv(x))
    assert np.array_equal(load_configuration(tmp_path / "a.json"), x)
    assert np.array_equal(load_configuration(tmp_path / "a.csv"), x)


def test_trajectory_round_trip(tmp_path):
    model = ModelParams(5, "1.5")
    sim = SimulationParams(dt_base=1e-3, t_max=0.05, seed=4)
    traj = simulate_particles(model, sim, unit_config(5, 1))
    path, side = write_trajectory(traj, tmp_path / "t.csv", sim, {"version": "x"})
    assert side.exists()
    back = read_trajectory(path)
    assert np.array_equal(back.times, traj.times) and np.array_equal(back.frames, traj.frames)
    assert back.status is traj.status and back.model == model and back.seed == 4
    assert path.read_text().splitlines()[1] == "t,particle,x,y"


def test_scalar_path_round_trip():
    p = ScalarPath(np.array([0.0, 0.1, 0.2]), np.array([1.0, 0.5, 0.0]), absorbed_at=0.2)
    back = scalar_path_from_csv(scalar_path_to_csv(p))
    assert back.absorbed_at == 0.2 and np.array_equal(back.values, p.values)
    q = scalar_path_from_csv(scalar_path_to_csv(ScalarPath(p.times, p.values)))
    assert q.absorbed_at is None


def test_plot_data():
    text = figure1_csv(ModelParams(9, "2.35"))
    lines = text.splitlines()
    assert lines[0] == "k,d_value" and len(lines) == 9
    assert lines[1].startswith("2,") and math.isclose(float(lines[1].split(",")[1]), 2 - 4.7 / 9)
    model = ModelParams(3, 1)
    traj = simulate_particles(model, SimulationParams(dt_base=1e-2, t_max=0.05), unit_config(3, 0))
    trace = dispersion_trace_csv(traj, [0, 1]).splitlines()
    assert trace[0] == "t,R_K" and len(trace) == len(traj.times) + 1
