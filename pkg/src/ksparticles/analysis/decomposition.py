"""Center/dispersion/direction decomposition checks and drift diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..dynamics import ScalarPath, time_change
from ..errors import DomainError, SingularConfigurationError
from ..geometry import COINCIDENCE_SQ, _index_set, as_configuration
from ..regime import ModelParams, bessel_dimension
from .stats import besq_cdf, ks_test

# total dispersion below this is treated as a full collapse
DISPERSION_ZERO = 1e-14


@dataclass
class DecompositionReport:
    max_reconstruction_error: float
    com_variance_ratio: float
    dispersion_ks_p: float
    independence_corr: float
    n_paths: int = 1
    truncated_at: float | None = None
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "max_reconstruction_error": self.max_reconstruction_error,
            "com_variance_ratio": self.com_variance_ratio,
            "dispersion_ks_p": self.dispersion_ks_p,
            "independence_corr": self.independence_corr,
            "n_paths": self.n_paths,
            "truncated_at": self.truncated_at,
            "notes": list(self.notes),
        }


def _split(frames):
    m = frames.mean(axis=1)
    dev = frames - m[:, None, :]
    d = np.einsum("tik,tik->t", dev, dev)
    return m, d, dev


def reconstruction_error(times, frames) -> tuple[float, float | None]:
    """Max error of ``Psi(M_t, D_t, U_{A_t})`` against the frames.

    ``U`` is stored on its own clock ``A`` and read back at ``A_t``. Returns
    ``(error, truncation_time)``; frames from the first total collapse on are
    dropped.
    """
    times = np.asarray(times, dtype=float)
    frames = np.asarray(frames, dtype=float)
    m, d, dev = _split(frames)
    truncated = None
    bad = np.nonzero(d <= DISPERSION_ZERO)[0]
    if bad.size:
        if bad[0] < 2:
            raise DomainError("total dispersion vanishes at the start of the trajectory")
        truncated = float(times[bad[0]])
        times, frames, m, d, dev = times[:bad[0]], frames[:bad[0]], m[:bad[0]], d[:bad[0]], dev[:bad[0]]
    u = dev / np.sqrt(d)[:, None, None]
    a_path, _ = time_change(ScalarPath(times, d))
    clock = a_path.values
    # the spherical path lives on the A clock; read it back at A_t
    pos = np.searchsorted(clock, clock)
    rebuilt = m[:, None, :] + np.sqrt(d)[:, None, None] * u[pos]
    return float(np.max(np.abs(rebuilt - frames))), truncated


def _corr(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(np.dot(a, a) * np.dot(b, b)))
    return 0.0 if den == 0 else float(np.dot(a, b) / den)


def _strongest(*values) -> float:
    return max(values, key=abs)


def ensemble_statistics(dm, d0, d_end, t: float, model: ModelParams) -> tuple[float, float, float]:
    """Terminal-value statistics of an ensemble.

    ``dm`` holds the center displacements ``M_t - M_0`` (shape ``(P, 2)``),
    ``d0`` and ``d_end`` the initial and final total dispersions. Returns the
    pooled per-coordinate variance over ``t/N``, the KS p-value of the
    probability-integral transforms of ``d_end`` under the squared Bessel law
    of dimension ``d(N)`` (NaN when ``d(N) < 0``), and the strongest
    correlation of ``d_end`` with either coordinate of ``dm`` or ``|dm|^2``.
    """
    dm = np.asarray(dm, dtype=float)
    d0 = np.asarray(d0, dtype=float)
    d_end = np.asarray(d_end, dtype=float)
    if len(dm) < 2:
        raise DomainError("need at least two paths")
    delta = bessel_dimension(model, model.n)
    ratio = float(np.var(dm, axis=0, ddof=1).mean()) / (t / model.n)
    if delta >= 0:
        if delta > 0:
            pit = besq_cdf(d_end, delta, d0, t)
        else:
            pit = np.array([besq_cdf(z, delta, z0, t) for z, z0 in zip(d_end, d0)], dtype=float)
        ks_p = ks_test(pit, lambda v: np.clip(v, 0.0, 1.0))[1]
    else:
        ks_p = math.nan
    corr = _strongest(_corr(dm[:, 0], d_end), _corr(dm[:, 1], d_end), _corr(np.sum(dm * dm, axis=1), d_end))
    return float(ratio), float(ks_p), float(corr)


def decomposition_check(traj, model: ModelParams) -> DecompositionReport:
    """Check the center/dispersion/direction picture on one path or an ensemble.

    With a single trajectory the statistics are pathwise: quadratic variation
    of the center against ``t/N``, probability-integral transforms of the
    dispersion steps under the squared Bessel law of dimension ``d(N)``, and
    the correlation of normalised center and dispersion increments.

    With a sequence of trajectories sharing ``x0`` and the final time, the
    terminal values are used: pooled per-coordinate variance of ``M_T - M_0``
    against ``T/N``, KS of ``D_T`` against the exact transition from ``D_0``,
    and the correlation of ``D_T`` with ``M_T - M_0`` and its squared norm.
    """
    ensemble = not hasattr(traj, "frames")
    paths = list(traj) if ensemble else [traj]
    if not paths:
        raise DomainError("empty ensemble")
    delta = bessel_dimension(model, model.n)
    notes = []
    if delta < 0:
        notes.append("d(N) < 0: no closed-form transition law, dispersion KS skipped")

    errors, truncated = [], None
    for p in paths:
        err, trunc = reconstruction_error(p.times, p.frames)
        errors.append(err)
        if trunc is not None:
            truncated = trunc if truncated is None else min(truncated, trunc)
    if truncated is not None:
        notes.append(f"total dispersion collapsed; truncated at t={truncated!r}")

    if ensemble:
        if len(paths) < 2:
            raise DomainError("an ensemble needs at least two paths")
        t_end = float(paths[0].times[-1])
        x0 = np.asarray(paths[0].frames[0])
        for p in paths:
            if float(p.times[-1]) != t_end or not np.array_equal(p.frames[0], x0):
                raise DomainError("ensemble paths must share x0 and the final time")
        m0 = x0.mean(axis=0)
        d0 = float(np.sum((x0 - m0) ** 2))
        dm = np.array([p.frames[-1].mean(axis=0) for p in paths]) - m0
        d_end = np.array([float(np.sum((p.frames[-1] - p.frames[-1].mean(axis=0)) ** 2)) for p in paths])
        ratio, ks_p, corr = ensemble_statistics(dm, np.full(len(paths), d0), d_end, t_end, model)
    else:
        times = np.asarray(traj.times, dtype=float)
        m, d, _ = _split(np.asarray(traj.frames, dtype=float))
        if truncated is not None:
            keep = times < truncated
            times, m, d = times[keep], m[keep], d[keep]
        dt = np.diff(times)
        if dt.size == 0:
            raise DomainError("trajectory needs at least two frames")
        dm = np.diff(m, axis=0)
        ratio = float(np.sum(dm * dm) / 2.0 / ((times[-1] - times[0]) / model.n))
        if delta >= 0:
            pit = besq_cdf(d[1:], delta, d[:-1], dt) if delta > 0 else \
                np.array([besq_cdf(d[i + 1], delta, d[i], dt[i]) for i in range(dt.size)])
            ks_p = ks_test(pit, lambda v: np.clip(v, 0.0, 1.0))[1]
        else:
            ks_p = math.nan
        scale = np.sqrt(dt)[:, None]
        zm = dm / scale
        dd = np.diff(d) / np.sqrt(dt)
        corr = _strongest(_corr(zm[:, 0], dd), _corr(zm[:, 1], dd), _corr(np.sum(zm * zm, axis=1), dd))
    return DecompositionReport(
        max_reconstruction_error=float(max(errors)),
        com_variance_ratio=float(ratio),
        dispersion_ks_p=float(ks_p),
        independence_corr=float(corr),
        n_paths=len(paths),
        truncated_at=truncated,
        notes=notes,
    )


@dataclass(frozen=True)
class DriftReport:
    empirical_mean: float
    predicted_mean: float
    standard_error: float
    n_paths: int

    @property
    def z_score(self) -> float:
        if self.standard_error == 0:
            return 0.0 if self.empirical_mean == self.predicted_mean else math.inf
        return (self.empirical_mean - self.predicted_mean) / self.standard_error

    def as_dict(self) -> dict:
        return {
            "empirical_mean": self.empirical_mean,
            "predicted_mean": self.predicted_mean,
            "standard_error": self.standard_error,
            "n_paths": self.n_paths,
            "z_score": self.z_score,
        }


def _dispersion_at(traj, idx, t):
    times = np.asarray(traj.times, dtype=float)
    if t < times[0] or t > times[-1]:
        raise DomainError(f"t={t} outside the simulated range [{times[0]}, {times[-1]}]")
    if traj.flag_time is not None and t > traj.flag_time:
        raise DomainError("t lies after the flagged time of a trajectory")
    j = int(np.searchsorted(times, t))
    if times[j] == t:
        sub = traj.frames[j][idx]
        return float(np.sum((sub - sub.mean(axis=0)) ** 2))
    # linear interpolation of R_K between neighbouring frames
    vals = []
    for k in (j - 1, j):
        sub = traj.frames[k][idx]
        vals.append(float(np.sum((sub - sub.mean(axis=0)) ** 2)))
    w = (t - times[j - 1]) / (times[j] - times[j - 1])
    return (1 - w) * vals[0] + w * vals[1]


def drift_diagnostic(ensemble, model: ModelParams, K=None, t: float = 0.0) -> DriftReport:
    """Empirical mean of ``R_K(X_t)`` against ``R_K(x0) + d(|K|) t``.

    For the full index set the prediction is exact; for a proper subset it is
    the isolated-cluster value.
    """
    paths = list(ensemble)
    if not paths:
        raise DomainError("empty ensemble")
    idx = _index_set(K, model.n)
    if idx.size < 2:
        raise DomainError("K needs at least two particles")
    x0 = np.asarray(paths[0].frames[0])
    for p in paths:
        if not np.array_equal(p.frames[0], x0):
            raise DomainError("ensemble paths must share x0")
    sub0 = x0[idx]
    r0 = float(np.sum((sub0 - sub0.mean(axis=0)) ** 2))
    values = np.array([_dispersion_at(p, idx, t) for p in paths])
    se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    predicted = r0 + bessel_dimension(model, int(idx.size)) * t
    # shifted mean: exact when every path carries the same value (t = 0)
    mean = r0 + float(np.mean(values - r0))
    return DriftReport(mean, float(predicted), se, len(values))


def sphere_dispersion_drift(model: ModelParams, u, K) -> float:
    """Drift of ``R_K(U)`` for the spherical process at direction ``u``.

    ``d(|K|) - d(N) R_K(u) - (2 theta/N) sum_{i in K, j not in K}
    (u^i-u^j).(u^i - S_K(u)) / |u^i-u^j|^2``.
    """
    u = as_configuration(u, model.n)
    if abs(float(np.sum(u * u)) - 1.0) > 1e-9 or float(np.max(np.abs(u.sum(axis=0)))) > 1e-9:
        raise DomainError("u must satisfy sum u = 0 and |u| = 1")
    idx = _index_set(K, model.n)
    if idx.size < 2:
        raise DomainError("K needs at least two particles")
    outside = np.setdiff1d(np.arange(model.n), idx)
    if outside.size == 0:
        # R_{[1..N]} is identically 1 on the sphere
        return 0.0
    sub = u[idx]
    s_k = sub.mean(axis=0)
    r_k = float(np.sum((sub - s_k) ** 2))
    diff = sub[:, None, :] - u[outside][None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    if np.min(r2) < COINCIDENCE_SQ:
        raise SingularConfigurationError("coincident cross pair")
    lever = (sub - s_k)[:, None, :]
    cross = float(np.sum(np.einsum("ijk,ijk->ij", diff, np.broadcast_to(lever, diff.shape)) / r2))
    return (bessel_dimension(model, int(idx.size)) - bessel_dimension(model, model.n) * r_k
            - 2.0 * model.coupling * cross)
