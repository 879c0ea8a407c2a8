"""Monte-Carlo probe of the local mass of the invariant density near collisions.

Estimates ``I(c) = int_{B(0,1)^k} prod_{i<j} |y^i-y^j|^{-2 theta/N} 1{min_{i<j} |y^i-y^j| >= c} dy``.

Writing ``y = gamma(z) + rho u`` with ``z`` the mean, ``rho^2`` the dispersion
and ``u`` on the unit sphere of the zero-mean subspace (dimension ``2k-2``),
``dy = k dz rho^(2k-3) d rho sigma(du)`` and the integrand factors into
``rho^(-theta k (k-1)/N) m(u)``. The radial weight is therefore
``rho^(d(k) - 1) d rho`` with ``d(k)`` the Bessel dimension, so ``I(c)``
stays bounded as ``c -> 0`` when ``d(k) > 0`` and grows without bound when
``d(k) <= 0``. Sampling ``rho`` log-uniformly over ``[c/sqrt 2, sqrt k]``
matches that radial behaviour.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from ..errors import DomainError
from ..regime import ModelParams


def _log_sphere_area(dim: int) -> float:
    """Log surface area of the unit sphere in ``R^dim``."""
    return math.log(2.0) + 0.5 * dim * math.log(math.pi) - gammaln(0.5 * dim)


def mass_probe(model: ModelParams, k: int, n_samples: int, diag_cutoff: float, rng: np.random.Generator,
               batch: int = 200_000) -> tuple[float, float]:
    """Importance-sampling estimate of ``I(diag_cutoff)`` with its standard error."""
    if isinstance(k, bool) or not isinstance(k, int) or not 2 <= k <= model.n:
        raise DomainError(f"k must lie in 2..{model.n}")
    if n_samples < 2:
        raise DomainError("need at least two samples")
    if not diag_cutoff > 0:
        raise DomainError("diag_cutoff must be positive")
    lo, hi = diag_cutoff / math.sqrt(2.0), math.sqrt(k)
    if lo >= hi:
        return 0.0, 0.0
    log_span = math.log(hi / lo)
    expo = -2.0 * model.coupling
    # k * |disk| * |sphere| * log-uniform density inverse (without the rho factor)
    log_const = math.log(k) + math.log(math.pi) + _log_sphere_area(2 * k - 2) + math.log(log_span)
    iu, ju = np.triu_indices(k, 1)
    total = total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        r = np.sqrt(rng.random(m))
        phi = 2.0 * math.pi * rng.random(m)
        z = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
        u = rng.standard_normal((m, k, 2))
        u -= u.mean(axis=1, keepdims=True)
        u /= np.sqrt(np.einsum("mik,mik->m", u, u))[:, None, None]
        rho = lo * np.exp(log_span * rng.random(m))
        y = z[:, None, :] + rho[:, None, None] * u
        inside = np.all(np.einsum("mik,mik->mi", y, y) < 1.0, axis=1)
        diff = u[:, iu, :] - u[:, ju, :]
        pair = np.einsum("mpk,mpk->mp", diff, diff)
        keep = inside & (np.min(pair, axis=1) * rho * rho >= diag_cutoff * diag_cutoff)
        # product over unordered pairs of |y^i - y^j|^{-2 theta/N}, split into rho and u parts
        log_w = (log_const + (2 * k - 2) * np.log(rho) + expo * len(iu) * np.log(rho)
                 + 0.5 * expo * np.sum(np.log(np.maximum(pair, 1e-300)), axis=1))
        w = np.where(keep, np.exp(np.where(keep, log_w, 0.0)), 0.0)
        total += float(np.sum(w))
        total_sq += float(np.sum(w * w))
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0)
    return mean, math.sqrt(var / (n_samples - 1))
