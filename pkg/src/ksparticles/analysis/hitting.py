"""Exit probabilities of the comparison diffusion through its scale function.

For ``dS = 2 sqrt(S(1-S)) dW + (delta + a sqrt(b+S)) dt`` on ``(0, 1)`` the
scale density is ``s(u) = exp(-int_{1/2}^u c(v) / (2 v (1-v)) dv)`` with
``c(v) = delta + a sqrt(b+v)``, and ``P(tau_0 < tau_y) = int_x^y s / int_0^y s``.

The inner integral has a closed form. Substituting ``w = sqrt(b+v)`` and
using ``beta^2 - b = 1`` with ``beta = sqrt(1+b)``,

    int a sqrt(b+v) / (2 v (1-v)) dv
        = a [ sqrt(b)/2 log((w-sqrt b)/(w+sqrt b)) + beta/2 log((beta+w)/(beta-w)) ].

Near 0, ``s(u) ~ u**(-c0/2)`` with ``c0 = delta + a sqrt(b)``, so ``s`` is
integrable iff ``c0 < 2``. The outer integrals factor out that power and use
algebraic-weight quadrature, leaving a bounded smooth integrand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ..errors import DomainError


@dataclass(frozen=True)
class HittingResult:
    probability: float
    abs_error: float
    divergent: bool = False

    def as_dict(self) -> dict:
        return {"probability": self.probability, "abs_error": self.abs_error, "divergent": self.divergent}


def _check(delta, a, b, x, y):
    if not b > 0:
        raise DomainError("b must be positive")
    if a < 0:
        raise DomainError("a must be nonnegative")
    if not (0 <= x <= y < 1):
        raise DomainError("need 0 <= x <= y < 1")
    for v in (delta, a, b, x, y):
        if not math.isfinite(v):
            raise DomainError("parameters must be finite")


def _log_regular_part(u, delta, a, b):
    """``log s(u) + (c0/2) log u``, finite on ``[0, 1)``."""
    u = np.asarray(u, dtype=float)
    rb = math.sqrt(b)
    beta = math.sqrt(1.0 + b)
    w = np.sqrt(b + u)
    wh = math.sqrt(b + 0.5)
    g_half = a * (0.5 * rb * math.log((wh - rb) / (wh + rb)) + 0.5 * beta * math.log((beta + wh) / (beta - wh)))
    return (0.5 * delta * np.log1p(-u) + a * rb * np.log(w + rb)
            - 0.5 * a * beta * np.log((beta + w) / (beta - w)) + g_half)


def log_scale_density(u, delta, a, b):
    """``log s(u)`` for ``u`` in ``(0, 1)``."""
    c0 = delta + a * math.sqrt(b)
    return _log_regular_part(u, delta, a, b) - 0.5 * c0 * np.log(u)


def _integral_from_zero(upper, delta, a, b):
    c0 = delta + a * math.sqrt(b)
    if upper == 0:
        return 0.0, 0.0
    g = lambda u: math.exp(float(_log_regular_part(u, delta, a, b)))  # noqa: E731
    val, err = integrate.quad(g, 0.0, upper, weight="alg", wvar=(-0.5 * c0, 0.0),
                              epsabs=1e-13, epsrel=1e-12, limit=200)
    return val, err


def hitting_probability(delta: float, a: float, b: float, x: float, y: float) -> HittingResult:
    """``P(tau_0 < tau_y)`` started from ``x`` for the comparison diffusion.

    Returns probability 0 with ``divergent=True`` when ``delta + a sqrt(b) >= 2``
    (the scale function is infinite at 0, so 0 is never reached).
    """
    _check(delta, a, b, x, y)
    if x == 0:
        return HittingResult(1.0, 0.0)
    if x == y:
        return HittingResult(0.0, 0.0)
    if delta + a * math.sqrt(b) >= 2:
        return HittingResult(0.0, 0.0, divergent=True)
    i_x, e_x = _integral_from_zero(x, delta, a, b)
    i_y, e_y = _integral_from_zero(y, delta, a, b)
    p = 1.0 - i_x / i_y
    # first-order propagation of both quadrature errors through the ratio
    err = e_x / i_y + i_x * e_y / (i_y * i_y)
    return HittingResult(min(max(p, 0.0), 1.0), float(err))
