from fractions import Fraction

import pytest

from ksparticles.errors import DomainError
from ksparticles.regime import (
    BoundaryBehavior,
    ModelParams,
    Regime,
    bessel_boundary_behavior,
    bessel_dimension,
    classify,
    critical_size,
    dimension_curve,
    format_fraction,
    to_fraction,
)


@pytest.mark.parametrize("n,theta,k,expected", [
    (9, "2.35", 2, 2 - 2 * 2.35 / 9),
    (5, 2, 5, 0.0),
    (9, "2.42", 6, 1.9333333333333333),
])
def test_bessel_dimension_examples(n, theta, k, expected):
    assert bessel_dimension(ModelParams(n, theta), k) == pytest.approx(expected, abs=1e-12)


def test_bessel_dimension_exact_zero():
    assert bessel_dimension(ModelParams(5, 2), 5) == 0.0


@pytest.mark.parametrize("k", [1, 10, 0, -3])
def test_bessel_dimension_out_of_range(k):
    with pytest.raises(DomainError):
        bessel_dimension(ModelParams(9, "2.35"), k)


@pytest.mark.parametrize("n,theta,ks", [
    (200, "4.04", (100, 99, 98)),
    (200, "4.015", (100, 99, 99)),
    (9, "2.35", (8, 7, 7)),
    (9, "2.42", (8, 7, 6)),
])
def test_classify_examples(n, theta, ks):
    rep = classify(ModelParams(n, theta))
    assert (rep.k0, rep.k1, rep.k2) == ks
    assert rep.regime is Regime.SUPERCRITICAL


def test_classify_rejects_n_not_above_theta():
    with pytest.raises(DomainError):
        classify(ModelParams(2, 3))
    with pytest.raises(DomainError):
        ModelParams(3, 3)


def test_classify_subcritical_and_table():
    rep = classify(ModelParams(4, 1))
    assert rep.regime is Regime.SUBCRITICAL
    assert rep.k0 == 8
    assert sorted(rep.dimension_table) == [2, 3, 4]
    assert not rep.theorem_preconditions_met


def test_preconditions_flag():
    assert classify(ModelParams(10, "2.5")).theorem_preconditions_met
    assert not classify(ModelParams(7, "2.5")).theorem_preconditions_met


def test_critical_size_is_exact_at_integer_ratio():
    # 2N/theta = 3 exactly; a float division could land on 3.0000000000000004
    assert critical_size(ModelParams(3, "2")) == 3
    assert critical_size(ModelParams(30, "0.2")) == 300
    assert critical_size(ModelParams(6, "0.3")) == 40


def test_classify_is_deterministic():
    a = classify(ModelParams(200, "4.04"))
    b = classify(ModelParams(200, "4.04"))
    assert a == b
    assert a.as_dict() == b.as_dict()


@pytest.mark.parametrize("delta,kind", [
    (2, BoundaryBehavior.NEVER_HITS_ZERO),
    (1, BoundaryBehavior.REFLECTS_AT_ZERO),
    (0, BoundaryBehavior.ABSORBED_AT_ZERO),
    (-1.5, BoundaryBehavior.ABSORBED_AT_ZERO),
    (7.5, BoundaryBehavior.NEVER_HITS_ZERO),
])
def test_boundary_behavior(delta, kind):
    assert bessel_boundary_behavior(delta) is kind


def test_theta_parsing():
    assert to_fraction("2.35") == Fraction(47, 20)
    assert to_fraction(2) == Fraction(2)
    assert format_fraction(Fraction(47, 20)) == "2.35"
    assert format_fraction(Fraction(1, 3)) == "1/3"
    with pytest.raises(DomainError):
        to_fraction("abc")
    with pytest.raises(DomainError):
        ModelParams(5, "-1")
    with pytest.raises(DomainError):
        ModelParams(1, "0.5")


def test_dimension_curve():
    curve = dimension_curve(ModelParams(9, "2.42"))
    assert [k for k, _ in curve] == list(range(2, 10))
    assert curve[4][1] == pytest.approx(1.9333333333333333)
