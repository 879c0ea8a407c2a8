"""Configuration-space algebra.

A configuration is an ``(N, 2)`` float array of planar positions. Index sets
``K`` are sequences of 0-based particle indices; ``None`` means all particles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfigurationError, DomainError, SingularConfigurationError
from .regime import ModelParams, to_fraction

# squared distances below this are treated as an exact collision
COINCIDENCE_SQ = 1e-24


def as_configuration(x, n: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1 and arr.size % 2 == 0:
        arr = arr.reshape(-1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError(f"configuration must have shape (N, 2), got {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise DomainError(f"expected {n} particles, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("configuration has non-finite coordinates")
    return arr


def _index_set(K, n: int) -> np.ndarray:
    if K is None:
        return np.arange(n)
    idx = np.unique(np.asarray(list(K), dtype=int))
    if idx.size == 0:
        raise DomainError("index set must be non-empty")
    if idx[0] < 0 or idx[-1] >= n:
        raise DomainError(f"indices must lie in 0..{n - 1}")
    return idx


def _shape(x, model):
    """Configuration and ``theta / N`` for a model or a bare ``theta``.

    A bare ``theta`` takes ``N`` from the configuration and skips the
    ``N > theta`` requirement, which these pointwise formulas do not need.
    """
    if isinstance(model, ModelParams):
        x = as_configuration(x, model.n)
        return x, model.coupling
    x = as_configuration(x)
    theta = to_fraction(model)
    if theta < 0:
        raise DomainError("theta must be nonnegative")
    return x, float(theta / len(x))


def center(x, K=None) -> np.ndarray:
    x = as_configuration(x)
    return x[_index_set(K, len(x))].mean(axis=0)


def dispersion(x, K=None, check: bool = False) -> float:
    """Sum of squared deviations of the ``K`` particles from their mean.

    With ``check=True`` the pairwise form is evaluated as well and the two
    must agree to 1e-10 relative.
    """
    x = as_configuration(x)
    sub = x[_index_set(K, len(x))]
    dev = sub - sub.mean(axis=0)
    value = float(np.sum(dev * dev))
    if check:
        other = _pairwise_dispersion(sub)
        scale = max(value, other, np.finfo(float).tiny)
        if abs(value - other) > 1e-10 * scale and abs(value - other) > 1e-300:
            raise AssertionError(f"dispersion forms disagree: {value} vs {other}")
    return value


def _pairwise_dispersion(sub: np.ndarray) -> float:
    diff = sub[:, None, :] - sub[None, :, :]
    return float(np.sum(diff * diff) / (2 * len(sub)))


def dispersion_pairwise(x, K=None) -> float:
    x = as_configuration(x)
    return _pairwise_dispersion(x[_index_set(K, len(x))])


def pairwise_sq_distances(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def drift(x, model) -> np.ndarray:
    """Exact interaction drift ``b^i = -(theta/N) sum_j (x^i-x^j)/|x^i-x^j|^2``.

    ``model`` is a :class:`ModelParams` or a bare ``theta``.
    """
    x, coupling = _shape(x, model)
    diff = x[:, None, :] - x[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(r2, np.inf)
    if np.min(r2) < COINCIDENCE_SQ:
        i, j = np.unravel_index(np.argmin(r2), r2.shape)
        raise SingularConfigurationError(f"particles {i} and {j} coincide")
    return -coupling * np.sum(diff / r2[:, :, None], axis=1)


def regularized_drift(x, model, n: int) -> np.ndarray:
    """Drift of the regularized system with cutoff ``phi_n(r) = max(r, 1/n)``.

    Pairs whose squared distance is below ``1/n`` exert no force; above it the
    exact drift is reproduced.
    """
    if n <= 0:
        raise DomainError("regularization index must be positive")
    x, coupling = _shape(x, model)
    diff = x[:, None, :] - x[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    active = r2 >= 1.0 / n
    np.fill_diagonal(active, False)
    inv = np.zeros_like(r2)
    inv[active] = 1.0 / r2[active]
    return -coupling * np.sum(diff * inv[:, :, None], axis=1)


def project_h(x) -> np.ndarray:
    """Orthogonal projection onto zero-mean configurations."""
    x = np.asarray(x, dtype=float)
    return x - x.mean(axis=0)


def project_perp(u, y) -> np.ndarray:
    """Remove from ``y`` its component along ``u`` (flat inner product)."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    return y - (np.sum(u * y) / np.sum(u * u)) * u


@dataclass(frozen=True)
class SphereCoordinates:
    """Center ``z``, total dispersion ``r`` and unit direction ``u``."""

    z: np.ndarray
    r: float
    u: np.ndarray

    def __post_init__(self):
        if not self.r > 0:
            raise DomainError(f"dispersion must be positive, got {self.r}")
        u = np.asarray(self.u, dtype=float)
        if abs(np.sum(u * u) - 1.0) > 1e-12 or np.max(np.abs(u.sum(axis=0))) > 1e-12:
            raise DomainError("direction does not lie on the unit sphere of H")


def sphere_coords(x) -> SphereCoordinates:
    x = as_configuration(x)
    z = x.mean(axis=0)
    dev = x - z
    r = float(np.sum(dev * dev))
    if r <= 0.0:
        raise DegenerateConfigurationError("all particles coincide")
    return SphereCoordinates(z, r, dev / np.sqrt(r))


def assemble(coords: SphereCoordinates) -> np.ndarray:
    if not coords.r > 0:
        raise DomainError("dispersion must be positive")
    return np.asarray(coords.z, dtype=float)[None, :] + np.sqrt(coords.r) * np.asarray(coords.u)


def normalize_direction(u) -> np.ndarray:
    """Project onto ``H`` and rescale to unit norm."""
    v = project_h(as_configuration(u))
    norm = np.sqrt(np.sum(v * v))
    if norm == 0.0:
        raise DegenerateConfigurationError("direction has zero norm after centering")
    return v / norm


def campingcar_constants(n: int) -> list[float]:
    """Separation constants ``c_0..c_N`` with ``c_{l+1} = (2 + 8 l) c_l``."""
    if n < 1:
        raise DomainError("N must be at least 1")
    c = [1.0]
    for ell in range(n):
        c.append((2 + 8 * ell) * c[-1])
    return c


def is_separated(x, K, eps: float) -> bool:
    """True when every ``K``-to-outside squared distance exceeds ``eps`` and ``|x| < 1/eps``."""
    x = as_configuration(x)
    n = len(x)
    idx = _index_set(K, n)
    if idx.size == n:
        raise DomainError("K must be a proper subset")
    if eps <= 0:
        raise DomainError("eps must be positive")
    outside = np.setdiff1d(np.arange(n), idx)
    diff = x[idx][:, None, :] - x[outside][None, :, :]
    min_sq = float(np.min(np.einsum("ijk,ijk->ij", diff, diff)))
    return min_sq > eps and float(np.sqrt(np.sum(x * x))) < 1.0 / eps


def log_density_m(x, model, alpha: float = 0.0) -> float:
    """``log prod_{i != j} (|x^i-x^j|^2 + alpha)^(-theta/(2N))``."""
    if alpha < 0:
        raise DomainError("alpha must be nonnegative")
    x, coupling = _shape(x, model)
    r2 = pairwise_sq_distances(x)[np.triu_indices(len(x), k=1)]
    if alpha == 0 and np.min(r2) < COINCIDENCE_SQ:
        raise SingularConfigurationError("coincident pair with alpha = 0")
    # each unordered pair appears twice in the ordered product
    return float(-coupling * np.sum(np.log(r2 + alpha)))
