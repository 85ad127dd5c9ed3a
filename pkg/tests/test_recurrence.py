import mpmath
import pytest

from backend import config
from backend.exceptions import ConfigurationError, ParameterError
from backend.recurrence import (
    Certificate,
    Hypothesis,
    Verdict,
    certify_l2,
    certify_theta_threshold,
    check_alt311,
    check_damping_grid,
    check_hyp1,
    check_hyp2,
    check_hyp3,
    conjugation_check,
    interpolation_check,
    make_gamma,
    max_residual_ulps,
    parity_check,
    solve_recurrence,
    truncation_report,
)
from backend.weights import RawWeights, SpaceSpec, make_weights


def test_constant_weights_linear_solution():
    solution = solve_recurrence(RawWeights.constant(1), 2, 12)
    assert [int(mpmath.re(u)) for u in solution.u] == list(range(1, 13))
    assert solution.u_next == 13
    assert solution.basis_index(1) == 1


def test_constant_weights_period_four():
    solution = solve_recurrence(RawWeights.constant(1), 0, 9)
    assert [int(mpmath.re(u)) for u in solution.u] == [1, 0, -1, 0, 1, 0, -1, 0, 1]
    assert all(mpmath.im(u) == 0 for u in solution.u)


def test_recurrence_offset_follows_shift_order():
    solution = solve_recurrence(make_weights(SpaceSpec.classic(2)), "0.5", 5)
    assert solution.basis_index(1) == 2
    # u_2 = lam / omega_{p,p}
    weights = make_weights(SpaceSpec.classic(2))
    with mpmath.mp.workdps(solution.internal_dps):
        assert abs(solution.u_at(2) - mpmath.mpf("0.5") / weights.eval(2)) < mpmath.mpf(10) ** -45


def test_solve_recurrence_rejects_short_runs():
    with pytest.raises(ParameterError):
        solve_recurrence(RawWeights.constant(1), 1, 1)


def test_residuals_within_tolerance():
    solution = solve_recurrence(make_weights(SpaceSpec.classic(1)), mpmath.mpc("0.7", "-1.2"), 120)
    assert max_residual_ulps(solution) <= config.ULP_TOLERANCE


def test_to_frame_columns():
    frame = solve_recurrence(make_weights(SpaceSpec.disk("1.5", p=1)), 1, 10).to_frame()
    assert list(frame.columns) == ["n", "u_re", "u_im", "abs2", "partial_sum"]
    assert list(frame["n"]) == list(range(1, 11))


def test_u_n_is_polynomial_of_degree_n_minus_one():
    for weights in (RawWeights.constant(1), make_weights(SpaceSpec.classic(1))):
        for n in (3, 6, 10):
            assert interpolation_check(weights, n) <= mpmath.mpf("1e-20")


def test_parity_and_conjugation():
    weights = make_weights(SpaceSpec.generalized("3", p=1), dps=30)
    assert parity_check(weights, ["0.5", "1.5"], n_max=30) <= mpmath.mpf("1e-25")
    assert conjugation_check(weights, [mpmath.mpc("0.4", "0.9")], n_max=30) <= mpmath.mpf("1e-25")


def test_hyp1_verdicts():
    assert check_hyp1(make_weights(SpaceSpec.classic(0)), 1000).verdict is Verdict.FAIL
    assert check_hyp1(make_weights(SpaceSpec.classic(1)), 1000).verdict is Verdict.PASS
    assert check_hyp1(make_weights(SpaceSpec.theta_two_pi()), 100).verdict is Verdict.PASS
    assert check_hyp1(RawWeights.constant(1), 100).verdict is Verdict.FAIL
    tabulated = RawWeights.from_sequence([str(n * n) for n in range(1, 200)])
    assert check_hyp1(tabulated, 100).verdict is Verdict.INCONCLUSIVE


def test_hyp1_failure_carries_witnesses():
    cert = check_hyp1(make_weights(SpaceSpec.classic(0)), 1000)
    assert cert.witnesses
    assert all(w.lhs >= w.rhs for w in cert.witnesses)


def test_hyp1_needs_a_range():
    with pytest.raises(ParameterError):
        check_hyp1(make_weights(SpaceSpec.classic(1)), 5)


@pytest.mark.parametrize("spec", [SpaceSpec.classic(1), SpaceSpec.disk("1.5", p=2)])
def test_hyp2_exact_pass(spec):
    cert = check_hyp2(make_weights(spec), (spec.p + 1, 500))
    assert cert.verdict is Verdict.PASS
    assert cert.details["comparison"] == "exact"
    assert cert.margin > 0


def test_hyp2_floating_for_theta():
    cert = check_hyp2(make_weights(SpaceSpec.theta_two_pi(p=1)), (2, 100))
    assert cert.verdict is Verdict.PASS
    assert cert.details["comparison"] == "floating"
    assert cert.margin == 0


def test_hyp2_detects_violation():
    weights = RawWeights.from_sequence(["1", "3", "4", "9", "10", "11"])
    cert = check_hyp2(weights, (2, 4))
    assert cert.verdict is Verdict.FAIL
    assert cert.witnesses[0].n == 3


def test_hyp2_range_must_follow_first_index():
    with pytest.raises(ParameterError):
        check_hyp2(make_weights(SpaceSpec.classic(2)), (2, 10))


def test_hyp3_classic_p1_locks_early():
    weights = make_weights(SpaceSpec.classic(1), dps=30)
    cert = check_hyp3(weights, "sqrt_n_log_n", 1, (3, 2000))
    assert cert.verdict is Verdict.PASS
    assert cert.threshold_n0 <= 1000
    assert cert.lambda_abs == "1"


def test_hyp3_classic_p0_fails_lower_bound():
    cert = check_hyp3(make_weights(SpaceSpec.classic(0), dps=30), "sqrt_n_log_n", 1, (3, 500))
    assert cert.verdict is Verdict.FAIL
    assert "alpha" in cert.witnesses[0].note


def test_alt311_is_stricter_but_agrees_here():
    weights = make_weights(SpaceSpec.classic(1), dps=30)
    cert = check_alt311(weights, "sqrt_n_log_n", 1, (3, 2000))
    assert cert.hypothesis is Hypothesis.ALT311
    assert cert.verdict is Verdict.PASS


@pytest.mark.parametrize("hypothesis, check", [(Hypothesis.HYP3, check_hyp3), ("Alt311", check_alt311)])
def test_damping_grid_matches_single_lambda_checks(hypothesis, check):
    weights = make_weights(SpaceSpec.classic(1), dps=30)
    grid = check_damping_grid(hypothesis, weights, "sqrt_n_log_n", ["1", "2"], (3, 2000))
    assert [c.lambda_abs for c in grid] == ["1", "2"]
    for cert, lam in zip(grid, ["1", "2"]):
        single = check(weights, "sqrt_n_log_n", lam, (3, 2000))
        assert cert.hypothesis is single.hypothesis
        assert cert.verdict is single.verdict
        assert cert.threshold_n0 == single.threshold_n0
        assert cert.margin == single.margin
    assert grid[0].threshold_n0 <= grid[1].threshold_n0


def test_damping_grid_rejects_other_hypotheses():
    with pytest.raises(ParameterError):
        check_damping_grid(Hypothesis.HYP1, make_weights(SpaceSpec.classic(1)), "sqrt_n_log_n", ["1"], (3, 100))

@pytest.mark.slow
@pytest.mark.parametrize("lam", ["1", "2"])
@pytest.mark.parametrize("p", [1, 2])
def test_hyp3_classic_full_range(p, lam):
    weights = make_weights(SpaceSpec.classic(p), dps=30)
    cert = check_hyp3(weights, "sqrt_n_log_n", lam, (3, 100_000))
    assert cert.verdict is Verdict.PASS
    assert cert.threshold_n0 <= 1000


def test_theta_threshold_closed_form():
    weights = make_weights(SpaceSpec.theta_two_pi(p=0))
    cert = certify_theta_threshold(weights, "3", "1", n_extra=200)
    assert cert.verdict is Verdict.PASS
    assert cert.hypothesis is Hypothesis.THETA_THRESHOLD
    assert cert.details["n_star"] == 2
    assert cert.threshold_n0 == 2
    assert cert.details["threshold_sharp"] is True
    assert cert.details["consistent_with_direct"] is True


def test_theta_threshold_needs_theta_weights():
    with pytest.raises(ParameterError):
        certify_theta_threshold(make_weights(SpaceSpec.classic(1)), "3", "1")


def test_certify_l2_locks_inside_range():
    solution = solve_recurrence(make_weights(SpaceSpec.classic(1), dps=30), 1, 200)
    report = certify_l2(solution)
    assert report.locked
    assert report.threshold_n0 <= 200
    assert report.tail_bound is not None
    assert report.M > 0


def test_certify_l2_tail_bound_at_thousand_terms():
    solution = solve_recurrence(make_weights(SpaceSpec.classic(1)), 1, 1000)
    report = certify_l2(solution)
    assert report.locked
    assert report.threshold_n0 == 127
    assert 0.45 < report.tail_bound < 0.55
    assert 2.3 < report.partial_sum < 2.5
    # M^2 / log N decays too slowly for a tail below 1e-3 of the partial sum
    assert report.tail_bound / report.partial_sum > mpmath.mpf("1e-3")


def test_certify_l2_theta_locks_at_closed_form_threshold():
    weights = make_weights(SpaceSpec.theta_two_pi(p=0))
    gamma = make_gamma("theta_geometric", weights, beta_prime="3")
    report = certify_l2(solve_recurrence(weights, 2, 200), gamma)
    closed = certify_theta_threshold(weights, "3", "2", n_extra=200)
    assert report.locked
    assert report.threshold_n0 == 3
    assert closed.verdict is Verdict.PASS
    assert report.threshold_n0 <= max(closed.threshold_n0, 3)
    assert report.tail_bound is not None


def test_certify_l2_reports_impossible_certification():
    solution = solve_recurrence(RawWeights.constant(1), "0.5", 20)
    report = certify_l2(solution, n_check=200)
    assert not report.locked
    assert report.tail_bound is None
    assert report.message.startswith("certification impossible")


def test_truncation_report_backward_error_under_bound():
    report = truncation_report(make_weights(SpaceSpec.classic(1), dps=30), mpmath.mpc(0, 1), 200)
    assert report.locked
    assert report.backward_error <= report.certified_bound
    assert report.interior_residual_ulps <= config.ULP_TOLERANCE


def test_certificate_json_round_trip():
    cert = check_hyp1(make_weights(SpaceSpec.classic(0)), 200)
    again = Certificate.from_json(cert.to_json())
    assert again.verdict is cert.verdict
    assert again.spec == cert.spec
    assert again.checked_range == cert.checked_range
    assert again.artifact_version == config.ARTIFACT_VERSION


def test_fail_certificate_needs_witness():
    with pytest.raises(ValueError):
        Certificate(Hypothesis.HYP1, None, "x", (1, 10), Verdict.FAIL)


def test_make_gamma():
    gamma = make_gamma("sqrt_n_log_n")
    assert gamma.summable
    assert gamma.first_index == 2
    with pytest.raises(ParameterError):
        gamma(1)
    with pytest.raises(ConfigurationError):
        make_gamma("nope")
    with pytest.raises(ConfigurationError):
        make_gamma("theta_geometric", make_weights(SpaceSpec.classic(1)))
    with pytest.raises(ConfigurationError):
        make_gamma("theta_geometric", make_weights(SpaceSpec.theta_two_pi()), beta_prime=2)
    tabulated = make_gamma("tabulated", values=["1", "2", "3"])
    assert tabulated(3) == 3
    assert tabulated.summable is None


def test_verdict_ordering():
    assert Verdict.worst([]) is Verdict.PASS
    assert Verdict.worst([Verdict.PASS, Verdict.INCONCLUSIVE]) is Verdict.INCONCLUSIVE
    assert Verdict.worst([Verdict.INCONCLUSIVE, Verdict.FAIL, Verdict.PASS]) is Verdict.FAIL
    assert [v.exit_code for v in Verdict] == [0, 2, 1]
