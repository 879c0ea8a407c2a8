"""Phase-diagram arithmetic for the planar Keller-Segel particle system.

Everything here is exact: the attraction intensity is held as a
:class:`fractions.Fraction` so that critical cluster sizes never suffer from
floating-point boundary effects when ``2N/theta`` is an integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from fractions import Fraction

from .errors import DomainError


def to_fraction(value) -> Fraction:
    """Convert a user-supplied intensity to an exact rational.

    Strings and floats are read as the decimal they print as, so ``2.35``
    becomes ``47/20`` rather than the nearest binary double.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise DomainError("theta must be numeric")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise DomainError(f"theta must be finite, got {value!r}")
        return Fraction(repr(value))
    if isinstance(value, (str, Decimal)):
        try:
            return Fraction(str(value).strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise DomainError(f"cannot parse theta {value!r} as a decimal") from exc
    raise DomainError(f"unsupported theta type {type(value).__name__}")


@dataclass(frozen=True)
class ModelParams:
    """Particle count ``n`` and attraction intensity ``theta``.

    ``theta = 0`` is accepted and describes independent Brownian particles.
    """

    n: int
    theta: Fraction = field(compare=True)

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, int):
            raise DomainError(f"N must be an integer, got {self.n!r}")
        if self.n < 2:
            raise DomainError(f"N must be at least 2, got {self.n}")
        theta = to_fraction(self.theta)
        if theta < 0:
            raise DomainError(f"theta must be nonnegative, got {theta}")
        if self.n <= theta:
            raise DomainError(f"N must exceed theta (N={self.n}, theta={float(theta)})")
        object.__setattr__(self, "theta", theta)

    @property
    def theta_float(self) -> float:
        return float(self.theta)

    @property
    def coupling(self) -> float:
        """Pair interaction prefactor ``theta / N``."""
        return float(self.theta / self.n)

    def as_dict(self) -> dict:
        return {"n": self.n, "theta": format_fraction(self.theta)}


def format_fraction(value: Fraction) -> str:
    """Shortest decimal string for ``value`` when it has one, else ``p/q``."""
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{value.numerator}/{value.denominator}"
    digits = max(twos, fives)
    text = f"{Decimal(value.numerator) / Decimal(value.denominator):.{digits}f}"
    return text.rstrip("0").rstrip(".") if "." in text else text


class Regime(str, Enum):
    SUBCRITICAL = "subcritical"
    SUPERCRITICAL = "supercritical"


class BoundaryBehavior(str, Enum):
    NEVER_HITS_ZERO = "never_hits_zero"
    REFLECTS_AT_ZERO = "reflects_at_zero"
    ABSORBED_AT_ZERO = "absorbed_at_zero"


@dataclass(frozen=True)
class RegimeReport:
    k0: int
    k1: int
    k2: int
    regime: Regime
    dimension_table: dict
    theorem_preconditions_met: bool

    def as_dict(self) -> dict:
        return {
            "k0": self.k0,
            "k1": self.k1,
            "k2": self.k2,
            "regime": self.regime.value,
            "theorem_preconditions_met": self.theorem_preconditions_met,
            "dimension_table": {str(k): v for k, v in self.dimension_table.items()},
        }


def bessel_dimension_exact(params: ModelParams, k: int) -> Fraction:
    """Exact ``(k-1)(2 - k theta / N)``; no range check."""
    num, den = _dimension_terms(params, k)
    return Fraction(num, den)


def _dimension_terms(params: ModelParams, k: int) -> tuple[int, int]:
    # theta = p/q gives d(k) = (k-1)(2Nq - kp) / (Nq) in plain integers
    p, q = params.theta.numerator, params.theta.denominator
    return (k - 1) * (2 * params.n * q - k * p), params.n * q


def bessel_dimension(params: ModelParams, k: int) -> float:
    """Effective squared-Bessel dimension of an isolated cluster of ``k`` particles.

    Evaluated exactly and rounded once, so the sign is always correct.
    """
    if isinstance(k, bool) or not isinstance(k, int) or not 2 <= k <= params.n:
        raise DomainError(f"cluster size must lie in 2..{params.n}, got {k!r}")
    num, den = _dimension_terms(params, k)
    return num / den


def critical_size(params: ModelParams) -> int:
    """``k0 = ceil(2N / theta)``, the smallest cluster size that is sticky."""
    if params.theta == 0:
        raise DomainError("k0 is undefined for theta = 0")
    ratio = Fraction(2 * params.n) / params.theta
    return -(-ratio.numerator // ratio.denominator)


def classify(params: ModelParams) -> RegimeReport:
    k0 = critical_size(params)
    k1 = k0 - 1
    num, den = _dimension_terms(params, k0 - 2)
    k2 = k0 - 2 if num < 2 * den else k0 - 1
    regime = Regime.SUPERCRITICAL if params.theta >= 2 else Regime.SUBCRITICAL
    p, q = params.theta.numerator, params.theta.denominator
    den, two_nq = params.n * q, 2 * params.n * q
    # int / int is correctly rounded, so each entry is the nearest double
    table = {k: (k - 1) * (two_nq - k * p) / den for k in range(2, params.n + 1)}
    met = params.theta >= 2 and params.n > 3 * params.theta
    return RegimeReport(k0, k1, k2, regime, table, met)


def bessel_boundary_behavior(delta: float) -> BoundaryBehavior:
    if delta >= 2:
        return BoundaryBehavior.NEVER_HITS_ZERO
    if delta > 0:
        return BoundaryBehavior.REFLECTS_AT_ZERO
    return BoundaryBehavior.ABSORBED_AT_ZERO


def dimension_curve(params: ModelParams) -> list[tuple[int, float]]:
    """``(k, d(k))`` pairs for ``k = 2..N``, the data behind the phase plot."""
    return [(k, bessel_dimension(params, k)) for k in range(2, params.n + 1)]
