"""Goodness-of-fit helpers."""

from __future__ import annotations

import math

import numpy as np
from scipy import special
from scipy.stats import kstwobign, ncx2

from ..errors import DomainError


def ks_test(sample, cdf) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    ``cdf`` is applied to the sorted sample (vectorized when possible).
    """
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise DomainError("KS test needs a non-empty sample")
    try:
        f = np.asarray(cdf(x), dtype=float)
        if f.shape != x.shape:
            raise ValueError
    except (TypeError, ValueError):
        f = np.array([float(cdf(v)) for v in x])
    i = np.arange(1, n + 1)
    stat = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    return stat, float(kstwobign.sf(math.sqrt(n) * stat))


def besq_cdf(z, delta: float, z0, t):
    """Time-``t`` distribution function of a squared Bessel process, ``delta >= 0``.

    For ``delta > 0`` this is a scaled noncentral chi-square law,
    ``P(Z_t <= z) = F_ncx2(z/t; df=delta, nc=z0/t)``; ``z0`` and ``t`` may be
    arrays broadcasting against ``z``. ``delta = 0`` uses the Poisson mixture
    with its atom at 0.
    """
    if delta < 0:
        raise DomainError("closed-form transition law needs delta >= 0")
    z = np.asarray(z, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("t must be positive")
    if delta > 0:
        out = ncx2.cdf(np.maximum(z, 0.0) / t, delta, z0 / t)
        return np.where(z < 0, 0.0, out)
    if z0.ndim or t.ndim:
        raise DomainError("delta = 0 supports scalar z0 and t only")
    return _besq_cdf_mixture(z, 0.0, float(z0), float(t))


def _besq_cdf_mixture(z, delta: float, z0: float, t: float, tol: float = 1e-17):
    """Poisson(z0/2t) mixture of Gamma(delta/2 + p, scale 2t) distribution functions."""
    lam = z0 / (2.0 * t)
    u = np.maximum(z, 0.0) / (2.0 * t)
    spread = 10.0 * math.sqrt(lam) + 40.0
    p = np.arange(max(0, int(lam - spread)), int(lam + spread) + 2)
    if lam > 0:
        w = np.exp(p * math.log(lam) - lam - special.gammaln(p + 1.0))
    else:
        w = (p == 0).astype(float)
    out = np.zeros(np.shape(z))
    for wk, a in zip(w, delta / 2.0 + p):
        if wk < tol:
            continue
        out += wk * (1.0 if a == 0 else special.gammainc(a, u))
    return np.where(np.asarray(z) < 0, 0.0, np.clip(out, 0.0, 1.0))
