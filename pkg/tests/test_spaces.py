import mpmath
import numpy as np
import pytest

from backend.exceptions import EvaluationRangeError, ParameterError, QuadratureError, TruncationError
from backend.operators import VectorState
from backend.spaces import (
    BasisFunction,
    Polynomial,
    adjoint_check_disk,
    adjoint_weight_check,
    as_function,
    basis_eval_theta,
    coherent_norm_check,
    disk_rule,
    inner_product,
    kernel_eval,
    make_rule,
    monomial_norm_disk,
    monomial_norm_raw,
    plane_rule,
    reproducing_check,
    sample_function,
    theta_multiplication_check,
    theta_quasi_periodicity,
)
from backend.weights import SpaceSpec, make_weights


@pytest.mark.parametrize("nu", ["1.1", "1.5", "3"])
def test_disk_monomial_norms(nu):
    rule = disk_rule(nu)
    space = SpaceSpec.disk(nu)
    for n in range(13):
        zn = Polynomial.monomial(n)
        raw = inner_product(space, zn, zn, rule, normalized=False)
        closed = float(monomial_norm_disk(n, nu))
        assert raw.value.real == pytest.approx(closed, rel=1e-10)
        assert abs(raw.value.imag) < 1e-12


def test_disk_norm_forms_agree():
    for nu in ("1.1", "2.5"):
        for n in (0, 4, 17):
            with mpmath.mp.workdps(30):
                assert abs(monomial_norm_disk(n, nu) - monomial_norm_raw(n, nu)) < mpmath.mpf(10) ** -25


def test_unweighted_disk_constant_norm():
    assert float(monomial_norm_disk(0, 1)) == pytest.approx(2 * np.pi)


def test_disk_basis_is_orthonormal():
    space = SpaceSpec.disk("1.5")
    rule = make_rule(space)
    for n in range(8):
        for m in range(8):
            value = inner_product(space, BasisFunction(space, n), BasisFunction(space, m), rule).value
            assert abs(value - (1.0 if n == m else 0.0)) < 1e-10


@pytest.mark.parametrize("nu", ["1.5", "2"])
def test_disk_adjoint(nu):
    rule = disk_rule(nu)
    for n in range(1, 7):
        for m in range(7):
            assert adjoint_check_disk(n, m, nu, rule) < 1e-10


def test_disk_adjoint_matches_weights():
    rule = disk_rule("1.5")
    for n in range(9):
        report = adjoint_weight_check(n, "1.5", rule)
        assert report["difference"] < 1e-9
        assert abs(report["imag"]) < 1e-12


@pytest.mark.parametrize("spec", [SpaceSpec.classic(), SpaceSpec.generalized("1")], ids=["classic", "beta1"])
def test_plane_basis_is_orthonormal(spec):
    rule = make_rule(spec)
    for n in range(10):
        for m in range(10):
            value = inner_product(spec, BasisFunction(spec, n), BasisFunction(spec, m), rule).value
            assert abs(value - (1.0 if n == m else 0.0)) < 1e-10


def test_classic_kernel_is_exponential():
    z, lam = 0.8 + 0.3j, -0.5 + 1.1j
    result = kernel_eval(SpaceSpec.classic(), z, lam, 60)
    assert result["value"] == pytest.approx(np.exp(z * np.conj(lam)), rel=1e-12)
    assert result["tail_bound"] < 1e-12


def test_kernel_tail_too_large():
    with pytest.raises(TruncationError):
        kernel_eval(SpaceSpec.classic(), 5.0, 5.0, 3)
    with pytest.raises(ParameterError):
        kernel_eval(SpaceSpec.disk("1.5"), 0.1, 0.1, 10)


def test_generalized_kernel_converges():
    result = kernel_eval(SpaceSpec.generalized("3"), 0.5 + 0.5j, 1.0, 80)
    assert np.isfinite(result["value"])


@pytest.mark.parametrize("spec", [SpaceSpec.classic(), SpaceSpec.generalized("1")], ids=["classic", "beta1"])
def test_reproducing_property(spec):
    report = reproducing_check(spec, 0.4 - 0.2j, phi_index=2, N_terms=12)
    assert report["difference"] < 1e-6


def test_coherent_state_norm():
    report = coherent_norm_check(1.5, N=80)
    assert report["within_tail"]
    assert report["norm_sq"] == pytest.approx(np.exp(2.25), rel=1e-12)


def test_quadrature_order_is_enforced():
    rule = disk_rule("1.5", radial=4, angular=8)
    space = SpaceSpec.disk("1.5")
    with pytest.raises(QuadratureError):
        inner_product(space, Polynomial.monomial(4), Polynomial.monomial(4), rule)
    with pytest.raises(QuadratureError):
        inner_product(SpaceSpec.disk("2"), Polynomial.monomial(1), Polynomial.monomial(1), rule)


def test_quadrature_error_estimate_without_degree():
    space = SpaceSpec.classic()
    rule = plane_rule(2)
    result = inner_product(space, lambda z: np.exp(-0.1 * np.abs(z) ** 2), lambda z: np.ones_like(z), rule)
    # (1/pi) int exp(-1.1 |z|^2) = 1/1.1
    assert result.value.real == pytest.approx(1 / 1.1, rel=1e-8)
    assert result.error < 1e-6


def test_theta_has_no_quadrature():
    with pytest.raises(QuadratureError):
        make_rule(SpaceSpec.theta_two_pi())
    with pytest.raises(QuadratureError):
        disk_rule("0.5")


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_theta_multiplication(n):
    report = theta_multiplication_check(n)
    assert report["holds"]
    assert report["implied_weight"] > 0


@pytest.mark.parametrize("alpha, nu", [(0, 2 * np.pi), ("0.25", "3")])
def test_theta_multiplication_module_weight_comes_from_weights(alpha, nu):
    report = theta_multiplication_check(2, alpha, nu)
    omega = float(make_weights(SpaceSpec.theta(nu, alpha=alpha)).eval(2))
    assert report["module_weight"] == pytest.approx(omega, rel=1e-14)
    assert report["ratio_to_module"] == pytest.approx(report["implied_weight"] / omega, rel=1e-12)


def test_theta_quasi_periodicity_table():
    frame = theta_quasi_periodicity(1)
    assert list(frame.columns) == ["x", "y", "ratio", "lattice_model"]
    assert np.all(frame["ratio"] > 0)


def test_theta_evaluation_range():
    with pytest.raises(EvaluationRangeError):
        basis_eval_theta(0, 0, 2 * np.pi, 20.0)
    assert np.isfinite(basis_eval_theta(2, 0.25, 2 * np.pi, 0.3 + 0.1j))


def test_as_function_matches_basis():
    space = SpaceSpec.disk("1.5", p=1)
    v = VectorState.from_mapping({1: "1", 3: "-0.5"}, 4, 1)
    fn = as_function(space, v)
    z = np.array([0.1 + 0.2j, -0.4 + 0.1j])
    expected = BasisFunction(space, 1).eval(z) - 0.5 * BasisFunction(space, 3).eval(z)
    assert np.allclose(fn(z), expected, rtol=1e-12, atol=1e-14)


def test_sample_function_layout():
    frame = sample_function(lambda z: z ** 2, [0.0, 0.5], [0.0, 1.0])
    assert list(frame.columns) == ["x", "y", "re", "im"]
    assert len(frame) == 4
    row = frame[(frame["x"] == 0.5) & (frame["y"] == 1.0)].iloc[0]
    assert (row["re"], row["im"]) == pytest.approx((-0.75, 1.0))
