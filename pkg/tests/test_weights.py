from fractions import Fraction

import mpmath
import pytest

from backend.exceptions import ParameterError
from backend.weights import (
    ZERO_ACTION,
    RawWeights,
    SpaceKind,
    SpaceSpec,
    asymptotic_check,
    gamma_ratio,
    m_deviation_report,
    make_weights,
    to_fraction,
    ulp_distance,
)
from utils.exact import Surd

SPACES = [
    SpaceSpec.classic(),
    SpaceSpec.generalized("3"),
    SpaceSpec.theta_two_pi(alpha="0.25"),
    SpaceSpec.disk("1.5"),
]


@pytest.mark.parametrize("kwargs", [
    {"kind": "Nowhere"},
    {"kind": SpaceKind.CLASSIC, "p": -1},
    {"kind": SpaceKind.CLASSIC, "p": True},
    {"kind": SpaceKind.GENERALIZED},
    {"kind": SpaceKind.GENERALIZED, "beta": "-1"},
    {"kind": SpaceKind.THETA},
    {"kind": SpaceKind.DISK, "nu": "0.75"},
    {"kind": SpaceKind.CLASSIC, "nu": "2"},
    {"kind": SpaceKind.DISK, "nu": "2", "beta": "2"},
])
def test_space_spec_rejects_invalid_parameters(kwargs):
    with pytest.raises(ParameterError):
        SpaceSpec(**kwargs)


def test_decimal_parameters_are_exact():
    assert to_fraction("0.1", "x") == Fraction(1, 10)
    assert to_fraction("1/3", "x") == Fraction(1, 3)
    assert SpaceSpec.disk("1.5").nu == Fraction(3, 2)
    assert SpaceSpec.from_json({"kind": "PoincareDisk", "p": 1, "nu": "1.5"}) == SpaceSpec.disk("1.5", p=1)


def test_space_spec_json_round_trip():
    spec = SpaceSpec.theta("6.25", alpha="0.5", p=2)
    assert SpaceSpec.from_json(spec.to_json()) == spec
    assert spec.to_json()["nu"] == "6.25"


def test_classic_exact_forms():
    weights = make_weights(SpaceSpec.classic(1))
    # omega_{2,1} = sqrt(3) * 2
    assert weights.exact_form(2) == Surd(2, 3)
    assert weights.exact_form(1) == Surd(1, 2)
    assert weights.eval(0) is ZERO_ACTION
    assert weights.exact_form(0) is None


def test_disk_exact_form():
    weights = make_weights(SpaceSpec.disk("1.5", p=0))
    # (n + 1)(2 nu + n) at n = 2
    assert weights.exact_form(2) == Surd.sqrt(15)


@pytest.mark.parametrize("spec", SPACES, ids=lambda s: s.kind.value)
@pytest.mark.parametrize("p", [0, 1, 2, 3])
def test_composition_rule_within_one_ulp(spec, p):
    weights = make_weights(spec.with_p(p), dps=40)
    for n in list(range(p, p + 20)) + [200, 577]:
        assert ulp_distance(weights.composed(n), weights.eval(n), 40) <= 1


@pytest.mark.parametrize("p", [0, 2])
def test_exact_forms_match_numeric_values(p):
    weights = make_weights(SpaceSpec.disk("1.25", p=p), dps=40)
    for n in range(p, p + 30):
        assert ulp_distance(weights.exact_form(n).to_mpf(40), weights.eval(n), 40) <= 1


@pytest.mark.parametrize("p", [0, 1, 3])
def test_generalized_beta_two_is_classic(p):
    generalized = make_weights(SpaceSpec.generalized(2, p=p))
    classic = make_weights(SpaceSpec.classic(p))
    for n in range(p, p + 50):
        assert abs(generalized.eval(n) / classic.eval(n) - 1) <= mpmath.mpf("1e-12")


def test_weights_are_positive_and_increasing():
    for spec in SPACES:
        weights = make_weights(spec.with_p(1))
        values = weights.values(1, 60)
        assert all(v > 0 for v in values)
        assert all(b > a for a, b in zip(values, values[1:]))


def test_gamma_ratio_exact_cases():
    assert gamma_ratio(7, 2) == (7, 0)
    assert gamma_ratio(5, 1).value == 110
    assert gamma_ratio(5, 1).error == 0
    assert gamma_ratio(0, 3).value == 0


def test_gamma_ratio_general_beta():
    estimate = gamma_ratio(40, 3, dps=40)
    with mpmath.mp.workdps(60):
        a = mpmath.mpf(2) / 3
        expected = mpmath.gamma(a * 41) / mpmath.gamma(a * 40)
        assert abs(estimate.value - expected) <= mpmath.mpf(10) ** -28 * expected
    assert estimate.error <= mpmath.mpf(10) ** -30 * estimate.value


def test_gamma_ratio_rejects_bad_arguments():
    with pytest.raises(ParameterError):
        gamma_ratio(-1, 2)
    with pytest.raises(ParameterError):
        gamma_ratio(3, 0)


@pytest.mark.parametrize("p", [0, 1, 2])
def test_theta_log_slope(p):
    weights = make_weights(SpaceSpec.theta_two_pi(p=p))
    with mpmath.mp.workdps(weights.dps):
        for n in range(p, p + 10):
            slope = mpmath.log(weights.eval(n + 1)) - mpmath.log(weights.eval(n))
            assert abs(slope - (2 * p + 1)) <= mpmath.mpf("1e-30")


def test_asymptotic_classes():
    assert make_weights(SpaceSpec.classic(1)).asympt_class.exponent == Fraction(3, 2)
    assert make_weights(SpaceSpec.classic(0)).asympt_class.reciprocal_summable is False
    assert make_weights(SpaceSpec.disk("2", p=0)).asympt_class.exponent == 1
    assert make_weights(SpaceSpec.generalized("1", p=1)).asympt_class.exponent == 3
    theta = make_weights(SpaceSpec.theta_two_pi(p=1)).asympt_class
    assert theta.growth == "exponential"
    assert theta.reciprocal_summable is True
    assert float(mpmath.mpf(theta.rate)) == pytest.approx(3)


def test_asymptotic_check_classic():
    report = asymptotic_check(make_weights(SpaceSpec.classic(1)), [10, 100, 1000, 10000])
    assert report.flags == []
    assert report.monotone and report.converging
    assert float(report.limit_estimate) == pytest.approx(1, abs=1e-4)


def test_asymptotic_check_flags_index_below_order():
    report = asymptotic_check(make_weights(SpaceSpec.classic(2)), [1, 100, 1000])
    assert any("below p+1" in flag for flag in report.flags)


@pytest.mark.parametrize("beta", ["1", "2", "3", "4"])
def test_m_deviation_decreases(beta):
    report = m_deviation_report(beta, probes=(100, 1000, 10000))
    assert report["decreasing"]
    assert report["observed_constant"] < 2


def test_m_deviation_beta_two_is_exact():
    report = m_deviation_report("2", probes=(10, 100))
    assert all(row["deviation"] == 0 for row in report["rows"])


def test_raw_weights():
    constant = RawWeights.constant("2.5")
    assert constant.eval(0) is ZERO_ACTION
    assert constant.eval(4) == mpmath.mpf("2.5")
    assert constant.exact_form(3) == Fraction(5, 2)
    assert constant.recurrence_offset == 0
    assert constant.asympt_class.reciprocal_summable is False

    table = RawWeights.from_sequence(["1", "2", "3"])
    assert table.eval(3) == 3
    with pytest.raises(ParameterError):
        table.eval(4)
    with pytest.raises(ParameterError):
        RawWeights.constant("0")


def test_weight_table():
    frame = make_weights(SpaceSpec.classic(1)).table(0, 5)
    assert list(frame["n"]) == [1, 2, 3, 4, 5]
    assert list(frame.columns) == ["n", "omega", "exact_r", "exact_s"]


def test_ulp_distance():
    with mpmath.mp.workdps(30):
        one = mpmath.mpf(1)
        step = mpmath.ldexp(1, 1 - mpmath.mp.prec)
        assert ulp_distance(one + step, one, 30) == 1
        assert ulp_distance(one, one, 30) == 0


@pytest.mark.parametrize("spec", [SpaceSpec.generalized("3", p=2), SpaceSpec.theta_two_pi(alpha="0.25", p=1)],
                         ids=["generalized", "theta"])
def test_composed_closed_forms_do_not_use_base_weights(spec, monkeypatch):
    weights = make_weights(spec, dps=40)
    expected = {n: weights.eval(n) for n in (spec.p, spec.p + 7, 200)}

    def forbidden(*args, **kwargs):
        raise AssertionError("composed() went through the base-weight product")

    monkeypatch.setattr("backend.weights._base_weight", forbidden)
    for n, value in expected.items():
        assert ulp_distance(weights.composed(n), value, 40) <= 1
