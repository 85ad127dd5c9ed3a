import mpmath
import pytest

from backend.exceptions import (
    ConvergenceError,
    DimensionError,
    ParameterError,
    PreconditionError,
    TruncationError,
)
from backend.operators import (
    OperatorKind,
    VectorState,
    apply_s,
    approximate_by_periodic,
    build_operator,
    eigen_residual,
    eigenvector_Hp,
    eigenvector_sum,
    orbit,
    periodic_point_Hp,
    periodic_point_sum,
    right_inverse_check,
    s_operator_decay,
    spectrum_proxy,
    telescoping_identity,
    transpose_duality_check,
    verify_periodicity,
)
from backend.weights import RawWeights, SpaceSpec, make_weights
from utils.exact import Surd


def classic(p=0, dps=None):
    return make_weights(SpaceSpec.classic(p), dps=dps)


def disk(nu="1.5", p=0):
    return make_weights(SpaceSpec.disk(nu, p=p))


def test_build_operator_needs_room():
    with pytest.raises(DimensionError):
        build_operator(OperatorKind.BACKWARD, classic(2), 3)
    op = build_operator("JacobiSum", classic(2), 4)
    assert op.basis_offset == 2
    assert op.top == 5
    assert op.kind is OperatorKind.JACOBI


def test_backward_and_forward_act_on_basis_exactly():
    weights = classic()
    backward = build_operator(OperatorKind.BACKWARD, weights, 6)
    image = backward.apply(VectorState.basis(3, 6, 0))
    assert image.exact
    assert image[2] == Surd.sqrt(3)
    assert image.support() == [2]

    forward = build_operator(OperatorKind.FORWARD, weights, 6)
    image = forward.apply(VectorState.basis(2, 6, 0))
    assert image[3] == Surd.sqrt(3)
    assert image.support() == [3]


def test_backward_annihilates_first_basis_vector():
    op = build_operator(OperatorKind.BACKWARD, disk(p=1), 5)
    assert op.apply(VectorState.basis(1, 5, 1)).support() == []


def test_jacobi_is_symmetric():
    op = build_operator(OperatorKind.JACOBI, disk(p=1), 6)
    dense = op.to_dense()
    assert all(dense[i][j] == dense[j][i] for i in range(6) for j in range(6))
    assert op.entry(2, 3) == op.weight(2, exact=True)


def test_transpose_duality():
    op = build_operator(OperatorKind.BACKWARD, disk(p=1), 8)
    u = VectorState.from_mapping({1: "0.5", 3: "-1.25", 8: "2"}, 8, 1)
    v = VectorState.from_mapping({2: "1", 4: "0.75", 7: "-3"}, 8, 1)
    assert transpose_duality_check(op, u, v)["holds"]


def test_vector_bounds_are_checked():
    with pytest.raises(DimensionError):
        VectorState.basis(0, 5, 1)
    with pytest.raises(DimensionError):
        VectorState.from_mapping({9: "1"}, 5, 1)
    op = build_operator(OperatorKind.BACKWARD, classic(), 5)
    with pytest.raises(DimensionError):
        op.apply(VectorState.basis(1, 6, 0))


def test_eigenvector_of_backward_shift():
    weights = classic(1)
    phi = eigenvector_Hp(weights, "0.5", 30)
    op = build_operator(OperatorKind.BACKWARD, weights, 30)
    residual = eigen_residual(op, phi)
    assert residual.interior_ulps <= 10
    assert phi.boundary_residual != 0
    assert 0 < phi.tail_bound < mpmath.mpf(10) ** -40


def test_eigenvector_needs_growing_weights():
    with pytest.raises(ConvergenceError):
        eigenvector_Hp(RawWeights.constant(1), "0.5", 10)


def test_eigenvector_orbit_scales_by_lambda():
    weights = classic(1)
    lam = mpmath.mpc("0.3", "0.4")
    phi = eigenvector_Hp(weights, lam, 30)
    trace = orbit(build_operator(OperatorKind.BACKWARD, weights, 30), phi, 5)
    assert [s.window for s in trace.steps] == [(1, 30 - k) for k in range(6)]
    assert all(s.residual <= mpmath.mpf(10) ** -40 for s in trace.steps)
    with mpmath.mp.workdps(50):
        assert abs(trace.norms[1] - abs(lam) * phi.norm((1, 29))) <= mpmath.mpf(10) ** -40


def test_orbit_runs_out_of_trusted_window():
    weights = classic(1)
    phi = eigenvector_Hp(weights, "0.5", 4)
    with pytest.raises(TruncationError):
        orbit(build_operator(OperatorKind.BACKWARD, weights, 4), phi, 5)


def test_backward_orbit_of_basis_vector_dies():
    weights = disk(p=1)
    op = build_operator(OperatorKind.BACKWARD, weights, 20)
    trace = orbit(op, VectorState.basis(5, 20, 1), 6)
    assert trace.final.support() == []
    assert trace.steps[4].vector.support() == [1]
    assert all(s.window == (1, 20) for s in trace.steps)


def test_forward_orbit_keeps_window_until_mass_reaches_top():
    weights = classic()
    op = build_operator(OperatorKind.FORWARD, weights, 4)
    trace = orbit(op, VectorState.basis(1, 4, 0), 3)
    assert trace.steps[2].vector.support() == [3]
    assert trace.steps[3].vector.support() == []


def test_jacobi_eigenvector_sum():
    weights = classic(1, dps=30)
    phi = eigenvector_sum(weights, mpmath.mpc("0.5", "0.5"), 60, certify=False)
    op = build_operator(OperatorKind.JACOBI, weights, 60)
    residual = eigen_residual(op, phi, target_dps=30)
    assert residual.interior_ulps <= 10
    with mpmath.mp.workdps(phi.dps):
        assert abs(residual.boundary - phi.boundary_residual) <= mpmath.mpf(10) ** -25


def test_spectrum_proxy_grid():
    frame = spectrum_proxy(classic(1, dps=30), 200, radii=("1",), phases=2)
    assert len(frame) == 2
    assert frame["interior_ok"].all()
    assert frame["within_bound"].all()
    assert (frame["certified_N"] != "").all()
    assert (frame["certified_2N"] != "").all()


def test_spectrum_proxy_backward_ratio_is_not_pointwise_gamma_bounded():
    frame = spectrum_proxy(classic(1, dps=30), 100, radii=("1",), phases=1)
    row = frame.iloc[0]
    # |lam| = 1 does not lock in by N = 100
    assert row["certified_N"] == ""
    assert 0.70 < float(row["backward_ratio"]) < 0.76
    assert 0.60 < float(row["gamma_factor"]) < 0.63
    assert float(row["ratio_over_gamma"]) > 1


@pytest.mark.parametrize("roots, expected_period", [(["1/2"], 2), (["1/3", "1/4"], 12)],
                         ids=["minus-one", "third-and-quarter"])
def test_periodic_point_sum_of_eigenvectors(roots, expected_period):
    phi, period = periodic_point_sum(classic(1), roots, None, 200)
    check = phi.checks["periodicity"]
    assert period == expected_period
    assert phi.checks["tail_certified"]
    assert check["verified"]
    assert mpmath.mpf(check["error"]) <= mpmath.mpf("1e-8")


def test_periodic_point_sum_period_is_lcm():
    phi, period = periodic_point_sum(classic(1, dps=30), ["1/4", "1/6"], ["1", "0.5"], 150)
    assert period == 12
    assert phi.checks["period_product"] == 24


def test_periodic_point_sum_validates_inputs():
    with pytest.raises(ParameterError):
        periodic_point_sum(classic(1), [], None, 20)
    with pytest.raises(ParameterError):
        periodic_point_sum(classic(1), ["1/2", "1/3"], ["1"], 20)


def test_periodic_point_of_hp_is_exact_on_disk():
    phi = periodic_point_Hp(disk(p=1), s=1, N_period=2, N_trunc=10)
    assert phi.exact
    assert phi.support() == [1, 3, 5, 7, 9]
    check = phi.checks["periodicity"]
    assert check["exact"] and check["verified"]
    assert phi.tail_bound > 0


def test_periodic_point_of_hp_numeric_for_theta():
    weights = make_weights(SpaceSpec.theta_two_pi(p=1))
    phi = periodic_point_Hp(weights, s=2, N_period=2, N_trunc=12)
    assert not phi.exact
    assert phi.checks["periodicity"]["verified"]


def test_periodic_point_rejects_bad_periods():
    weights = disk(p=1)
    with pytest.raises(ParameterError):
        periodic_point_Hp(weights, s=0, N_period=2, N_trunc=20)
    with pytest.raises(ParameterError):
        periodic_point_Hp(weights, s=3, N_period=2, N_trunc=20)
    with pytest.raises(DimensionError):
        periodic_point_Hp(weights, s=1, N_period=4, N_trunc=10)
    with pytest.raises(DimensionError):
        periodic_point_Hp(disk(p=0), s=2, N_period=2, N_trunc=20)


def test_perturbed_periodic_point_fails_verification():
    weights = disk(p=1)
    phi = periodic_point_Hp(weights, s=1, N_period=2, N_trunc=10)
    coefficients = list(phi.coefficients)
    coefficients[2] = coefficients[2] * 2
    bent = VectorState(tuple(coefficients), phi.basis_offset, tail_bound=phi.tail_bound, exact=True)
    op = build_operator(OperatorKind.BACKWARD, weights, 10)
    assert not verify_periodicity(op, bent, 2).verified


@pytest.mark.parametrize("nu", ["1", "1.5"])
@pytest.mark.parametrize("p", [0, 1])
@pytest.mark.parametrize("N_period", [1, 2, 4])
@pytest.mark.parametrize("shift", [0, 1])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_telescoping_identity(nu, p, N_period, shift, k):
    s = p + shift
    if N_period < s or N_period <= shift:
        pytest.skip("N_period must be at least s and exceed s - p")
    report = telescoping_identity(disk(nu, p), s, N_period, k)
    assert report.exact
    assert report.holds


def test_approximation_needs_smallness():
    weights = disk(p=0)
    phi = VectorState.from_mapping({0: "1", 1: "0.1"}, 2, 0)
    with pytest.raises(PreconditionError):
        approximate_by_periodic(weights, phi, "1e-4")


@pytest.mark.parametrize("epsilon", ["1e-2", "1e-4", "1e-8"])
def test_approximation_by_periodic_points(epsilon):
    weights = disk(p=0)
    phi = VectorState.from_mapping({0: "0.5", 1: "0.1"}, 2, 0)
    psi, N_used = approximate_by_periodic(weights, phi, epsilon)
    assert N_used >= 2
    assert mpmath.mpf(psi.checks["distance"]) <= mpmath.mpf(epsilon)
    assert psi.checks["smallness_ok"]
    assert psi[0] == phi[0]
    assert psi[1] == phi[1]


def test_approximation_gets_finer_with_epsilon():
    weights = disk(p=0)
    phi = VectorState.from_mapping({0: "0.5", 1: "0.1"}, 2, 0)
    _, coarse = approximate_by_periodic(weights, phi, "1e-2")
    _, fine = approximate_by_periodic(weights, phi, "1e-12")
    assert fine >= coarse


def test_approximation_without_smallness_still_reports():
    weights = disk(p=0)
    phi = VectorState.from_mapping({0: "1", 1: "0.1"}, 2, 0)
    psi, _ = approximate_by_periodic(weights, phi, "1e-4", require_smallness=False)
    assert not psi.checks["smallness_ok"]


@pytest.mark.parametrize("weights", [classic(1), disk(p=2)], ids=["classic", "disk"])
def test_right_inverse_exact(weights):
    report = right_inverse_check(weights, k_max=12)
    assert report["exact"]
    assert report["holds"]


def test_right_inverse_numeric_for_generalized():
    report = right_inverse_check(make_weights(SpaceSpec.generalized("3", p=1), dps=30), k_max=8)
    assert not report["exact"]
    assert report["holds"]


def test_apply_s_grows_by_one_coordinate():
    weights = classic(0)
    image = apply_s(weights, VectorState.basis(2, 3, 0))
    assert image.N == 4
    assert image[3] == 1 / Surd.sqrt(3)


def test_s_operator_decay():
    trace = s_operator_decay(classic(1), k=1, n_steps=10, threshold="1e-6")
    assert trace.strictly_decreasing
    assert trace.below("1e-6") is not None
    assert trace.right_inverse["holds"]
    with pytest.raises(ParameterError):
        s_operator_decay(classic(2), k=1, n_steps=3)


def test_s_operator_decay_flat_first_step_when_omega_is_one():
    trace = s_operator_decay(classic(0), k=0, n_steps=10)
    assert trace.norms[0] == trace.norms[1] == 1
    assert not trace.strictly_decreasing
    assert trace.nonincreasing
    assert trace.strict_from == 1
    assert abs(trace.norms[10] - 1 / mpmath.sqrt(mpmath.factorial(10))) < mpmath.mpf("1e-12")
    assert abs(trace.norms[10] - mpmath.mpf("5.25e-4")) < mpmath.mpf("1e-6")
    assert trace.to_json()["strict_from"] == 1
