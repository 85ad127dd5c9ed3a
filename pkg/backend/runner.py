"""Scenario runner behind `shiftlab run` and `shiftlab report`.

A scenario file is one JSON object:

    {
      "name": "classic-p1-certify",
      "space": {"kind": "ClassicBargmann", "p": 1},
      "task": "certify",
      "params": {"lambda_abs": ["1", "2"], "gamma": "sqrt_n_log_n"},
      "dps": 30,
      "output": "data/runs/classic-p1-certify"
    }

Numeric parameters are decimal (or rational) strings parsed at full
precision; integers are accepted for counts. Each run writes
certificates.json and checks.json (byte-stable for identical inputs), the
task's CSV traces, and run_meta.json with the timestamp.

Exit codes: 0 when every check passes, 2 when the worst check is
inconclusive, 1 on failure.
"""

from __future__ import annotations

import concurrent.futures
import logging
import os
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import mpmath
import numpy as np
import orjson
import pandas as pd

from backend import config
from backend.exceptions import (
    BundleError,
    ConfigurationError,
    ParameterError,
    ScenarioError,
    ShiftLabError,
)
from backend.operators import (
    OperatorKind,
    VectorState,
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
)
from backend.recurrence import (
    Certificate,
    Hypothesis,
    Verdict,
    certify_l2,
    certify_theta_threshold,
    check_damping_grid,
    check_hyp1,
    check_hyp2,
    conjugation_check,
    interpolation_check,
    make_gamma,
    max_residual_ulps,
    parity_check,
    solve_recurrence,
)
from backend.spaces import (
    BasisFunction,
    Polynomial,
    adjoint_check_disk,
    adjoint_weight_check,
    coherent_norm_check,
    inner_product,
    kernel_eval,
    make_rule,
    monomial_norm_disk,
    monomial_norm_raw,
    reproducing_check,
    sample_function,
    theta_multiplication_check,
    theta_quasi_periodicity,
)
from backend.weights import (
    RawWeights,
    SpaceKind,
    SpaceSpec,
    Weights,
    asymptotic_check,
    m_deviation_report,
    make_weights,
    to_fraction,
    ulp_distance,
)
from utils.export import load_json, num, write_csv, write_json

logger = logging.getLogger(__name__)


class Task(str, Enum):
    WEIGHTS = "weights"
    CERTIFY = "certify"
    RECURRENCE = "recurrence"
    EIGENSUM = "eigensum"
    ORBIT = "orbit"
    PERIODIC_SUM = "periodic_sum"
    PERIODIC_HP = "periodic_hp"
    APPROXIMATE = "approximate"
    QUADRATURE = "quadrature"
    ASYMPTOTICS = "asymptotics"


SCENARIO_FIELDS = ("name", "space", "weights", "task", "params", "dps", "output")
# tasks that may run on user-supplied weights instead of a space
RAW_WEIGHT_TASKS = (Task.RECURRENCE, Task.EIGENSUM, Task.ORBIT)
MIN_DPS = 15


# --- scenario parsing -------------------------------------------------------------


def _locate(text: str, key: Optional[str]) -> Tuple[Optional[int], Optional[int]]:
    """1-based line and column of the first `"key"` in the scenario text."""
    if not text or not key:
        return None, None
    idx = text.find(f'"{key}"')
    if idx < 0:
        return None, None
    line = text.count("\n", 0, idx) + 1
    column = idx - (text.rfind("\n", 0, idx) + 1) + 1
    return line, column


def _error(text: str, message: str, field_path: Optional[str]) -> ScenarioError:
    key = field_path.split(".")[-1] if field_path else None
    line, column = _locate(text, key)
    return ScenarioError(message, field=field_path, line=line, column=column)


def _space_field(message: str) -> str:
    for name in ("kind", "beta", "nu", "alpha", "p"):
        if re.search(rf"\b{name}\b", message):
            return f"space.{name}"
    return "space"


class Params:
    """Typed access to a scenario's `params` object with field diagnostics."""

    def __init__(self, values: Dict[str, Any], text: str = ""):
        self.values = dict(values)
        self.text = text
        self.used: set = set()

    def __contains__(self, key: str) -> bool:
        return key in self.values

    def error(self, key: str, message: str) -> ScenarioError:
        return _error(self.text, message, f"params.{key}")

    def get(self, key: str, default: Any = None) -> Any:
        self.used.add(key)
        return self.values.get(key, default)

    def get_int(self, key: str, default: Optional[int] = None, minimum: Optional[int] = None) -> int:
        value = self.get(key, default)
        if isinstance(value, str) and value.strip().lstrip("-").isdigit():
            value = int(value)
        if value is None or isinstance(value, bool) or not isinstance(value, int):
            raise self.error(key, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.error(key, f"must be >= {minimum}, got {value}")
        return value

    def get_bool(self, key: str, default: bool) -> bool:
        value = self.get(key, default)
        if not isinstance(value, bool):
            raise self.error(key, f"expected true or false, got {value!r}")
        return value

    def get_decimal(self, key: str, default: Any = None) -> Fraction:
        return parse_decimal(self.get(key, default), f"params.{key}", self.text)

    def get_mpf(self, key: str, default: Any = None):
        q = self.get_decimal(key, default)
        return mpmath.mpf(q.numerator) / q.denominator

    def get_complex(self, key: str, default: Any = None):
        return parse_complex(self.get(key, default), f"params.{key}", self.text)

    def get_list(self, key: str, default: Sequence[Any] = ()) -> List[Any]:
        value = self.get(key, list(default))
        if not isinstance(value, list):
            raise self.error(key, f"expected a list, got {type(value).__name__}")
        return value

    def get_str(self, key: str, default: Optional[str] = None,
                choices: Optional[Iterable[str]] = None) -> str:
        value = self.get(key, default)
        if not isinstance(value, str):
            raise self.error(key, f"expected a string, got {value!r}")
        if choices is not None and value not in choices:
            raise self.error(key, f"unknown value {value!r}; expected one of {sorted(choices)}")
        return value

    def unused(self) -> List[str]:
        return sorted(set(self.values) - self.used)


def parse_decimal(value: Any, field_path: str, text: str = "") -> Fraction:
    """Exact value of a decimal/rational string or an integer; binary floats are refused."""
    if isinstance(value, float):
        raise _error(text, f"give numbers as decimal strings, not the float {value!r}", field_path)
    if value is None:
        raise _error(text, "value is required", field_path)
    try:
        return to_fraction(value, field_path)
    except ParameterError as exc:
        raise _error(text, str(exc), field_path) from exc


def parse_complex(value: Any, field_path: str, text: str = ""):
    """Complex parameter from "a+bj", [re, im], {"re", "im"} or {"abs", "turns"}.

    {"abs": r, "turns": t} is r * exp(2 pi i t), so roots of unity stay exact
    in the input.
    """
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise _error(text, "complex pair must be [re, im]", field_path)
        re_, im_ = (parse_decimal(v, field_path, text) for v in value)
        return mpmath.mpc(mpmath.mpf(re_.numerator) / re_.denominator,
                          mpmath.mpf(im_.numerator) / im_.denominator)
    if isinstance(value, dict):
        if set(value) == {"abs", "turns"}:
            r = parse_decimal(value["abs"], f"{field_path}.abs", text)
            t = parse_decimal(value["turns"], f"{field_path}.turns", text)
            return (mpmath.mpf(r.numerator) / r.denominator) * mpmath.expjpi(
                2 * mpmath.mpf(t.numerator) / t.denominator)
        if set(value) <= {"re", "im"}:
            return parse_complex([value.get("re", "0"), value.get("im", "0")], field_path, text)
        raise _error(text, "complex object needs {re, im} or {abs, turns}", field_path)
    if isinstance(value, str) and "j" in value.lower():
        try:
            return mpmath.mpc(mpmath.mpmathify(value.replace(" ", "")))
        except (ValueError, TypeError) as exc:
            raise _error(text, f"not a complex number: {value!r}", field_path) from exc
    q = parse_decimal(value, field_path, text)
    return mpmath.mpc(mpmath.mpf(q.numerator) / q.denominator)


def _raw_weights(data: Any, dps: int, text: str) -> RawWeights:
    if not isinstance(data, dict) or len(data) != 1 or not set(data) <= {"constant", "values"}:
        raise _error(text, 'weights must be {"constant": c} or {"values": [...]}', "weights")
    try:
        if "constant" in data:
            return RawWeights.constant(parse_decimal(data["constant"], "weights.constant", text), dps=dps)
        values = data["values"]
        if not isinstance(values, list) or not values:
            raise _error(text, "weights.values must be a non-empty list", "weights.values")
        return RawWeights.from_sequence([parse_decimal(v, "weights.values", text) for v in values], dps=dps)
    except ParameterError as exc:
        raise _error(text, str(exc), "weights") from exc


@dataclass
class Scenario:
    """A parsed scenario; `weights()` builds the sequence the task runs on."""

    name: str
    task: Task
    space: Optional[SpaceSpec]
    params: Dict[str, Any]
    dps: int
    output: Path
    raw_weights: Optional[Dict[str, Any]] = None
    source: Optional[str] = None
    text: str = field(default="", repr=False)

    def weights(self, dps: Optional[int] = None) -> Weights:
        dps = dps or self.dps
        if self.raw_weights is not None:
            return _raw_weights(self.raw_weights, dps, self.text)
        if self.space is None:
            raise _error(self.text, f"task {self.task.value} needs a space", "space")
        return make_weights(self.space, dps=dps)

    def resolved(self) -> Dict[str, Any]:
        """Configuration embedded in the artifacts (the output path is not part of it)."""
        return {
            "name": self.name,
            "task": self.task.value,
            "space": self.space.to_json() if self.space is not None else None,
            "weights": self.raw_weights,
            "params": self.params,
            "dps": self.dps,
        }


def parse_scenario(text: str, source: Optional[str] = None,
                   output_root: Optional[str] = None) -> Scenario:
    """Parse and validate scenario text.

    Raises:
        ScenarioError: malformed JSON or an invalid field, with the field path
            and the line/column where it was found.
    """
    try:
        data = orjson.loads(text)
    except orjson.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object", line=1, column=1)
    unknown = sorted(set(data) - set(SCENARIO_FIELDS))
    if unknown:
        raise _error(text, f"unknown field(s) {unknown}; expected {list(SCENARIO_FIELDS)}", unknown[0])

    try:
        task = Task(data.get("task"))
    except ValueError:
        raise _error(text, f"unknown task {data.get('task')!r}; expected one of "
                           f"{[t.value for t in Task]}", "task") from None

    spec = None
    if "space" in data:
        try:
            spec = SpaceSpec.from_json(data["space"])
        except ParameterError as exc:
            raise _error(text, str(exc), _space_field(str(exc))) from exc
    if "weights" in data:
        if spec is not None:
            raise _error(text, "give either space or weights, not both", "weights")
        if task not in RAW_WEIGHT_TASKS:
            raise _error(text, f"raw weights are only accepted by {[t.value for t in RAW_WEIGHT_TASKS]}",
                         "weights")
    elif spec is None and task is not Task.ASYMPTOTICS:
        raise _error(text, "space is required", "space")

    params = data.get("params", {})
    if not isinstance(params, dict):
        raise _error(text, "params must be an object", "params")

    default_dps = config.CERTIFY_DPS if task is Task.CERTIFY else config.DEFAULT_DPS
    dps = data.get("dps", default_dps)
    if isinstance(dps, bool) or not isinstance(dps, int) or not MIN_DPS <= dps <= config.MAX_DPS:
        raise _error(text, f"dps must be an integer in [{MIN_DPS}, {config.MAX_DPS}], got {dps!r}", "dps")

    default_name = Path(source).stem if source else task.value
    name = data.get("name", default_name)
    if not isinstance(name, str) or not name.strip():
        raise _error(text, "name must be a non-empty string", "name")

    output = data.get("output")
    if output is None:
        output = os.path.join(output_root or config.OUTPUT_DIR, name)
    elif not isinstance(output, str):
        raise _error(text, "output must be a path string", "output")
    elif output_root is not None:
        output = os.path.join(output_root, name)
    elif not os.path.isabs(output):
        output = os.path.join(config.ROOT_DIR, output)

    scenario = Scenario(name=name, task=task, space=spec, params=params, dps=dps,
                        output=Path(output), raw_weights=data.get("weights"),
                        source=source, text=text)
    if scenario.raw_weights is not None:
        scenario.weights()
    return scenario


def load_scenario(path: str, output_root: Optional[str] = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text, source=str(path), output_root=output_root)


# --- results ------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    verdict: Verdict
    detail: Dict[str, Any] = field(default_factory=dict)
    message: str = ""

    def to_json(self) -> Dict[str, Any]:
        return {"name": self.name, "verdict": self.verdict.value,
                "detail": self.detail, "message": self.message}


def _check(name: str, ok: bool, detail: Optional[Dict[str, Any]] = None, message: str = "",
           soft: bool = False) -> CheckResult:
    """PASS when ok; otherwise FAIL, or INCONCLUSIVE for report-only checks."""
    if ok:
        verdict = Verdict.PASS
    else:
        verdict = Verdict.INCONCLUSIVE if soft else Verdict.FAIL
    return CheckResult(name, verdict, detail or {}, message)


@dataclass
class TaskResult:
    checks: List[CheckResult] = field(default_factory=list)
    certificates: List[Certificate] = field(default_factory=list)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    artifacts: Dict[str, Any] = field(default_factory=dict)


@dataclass
class RunOutcome:
    name: str
    output: str
    verdict: Verdict
    failing: List[str] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def exit_code(self) -> int:
        return self.verdict.exit_code


def _tol(params: Params, key: str, default: Any):
    return params.get_mpf(key, default)


def _decimal_texts(params: Params, key: str, default: Sequence[Any]) -> List[str]:
    """Validated decimal strings, kept as written so certificates echo the input."""
    values = params.get_list(key, default)
    for value in values:
        parse_decimal(value, f"params.{key}", params.text)
    return [str(value) for value in values]


# --- task handlers --------------------------------------------------------------------


def _gamma(params: Params, weights: Weights, default: Optional[str] = None):
    """Dominating sequence from params.gamma (a name or {"name": ..., **params})."""
    value = params.get("gamma", default or config.DEFAULT_GAMMA)
    try:
        if isinstance(value, str):
            return make_gamma(value, weights)
        if isinstance(value, dict) and isinstance(value.get("name"), str):
            extra = {k: v for k, v in value.items() if k != "name"}
            if "beta_prime" in extra:
                extra["beta_prime"] = str(parse_decimal(extra["beta_prime"], "params.gamma.beta_prime",
                                                        params.text))
            if "values" in extra:
                extra["values"] = [str(parse_decimal(v, "params.gamma.values", params.text))
                                   for v in extra["values"]]
            return make_gamma(value["name"], weights, **extra)
    except ConfigurationError as exc:
        raise params.error("gamma", str(exc)) from exc
    raise params.error("gamma", 'expected a name or {"name": ..., ...}')


def _task_weights(scenario: Scenario, params: Params) -> TaskResult:
    """Composition rule, exact forms, positivity and monotonicity per p."""
    result = TaskResult()
    n_max = params.get_int("n_max", 1000, minimum=1)
    p_values = params.get_list("p_values", [scenario.space.p])
    table_rows = params.get_int("table_rows", 50, minimum=1)
    for p in p_values:
        spec = scenario.space.with_p(int(p))
        weights = make_weights(spec, dps=scenario.dps)
        n_lo = weights.first_index
        worst_ulps, worst_exact = mpmath.mpf(0), mpmath.mpf(0)
        positive, increasing = True, True
        previous = None
        with mpmath.mp.workdps(scenario.dps):
            for n in range(n_lo, n_max + 1):
                value = weights.eval(n)
                worst_ulps = max(worst_ulps, ulp_distance(weights.composed(n), value, scenario.dps))
                exact = weights.exact_form(n)
                if exact is not None:
                    worst_exact = max(worst_exact, ulp_distance(exact.to_mpf(scenario.dps), value,
                                                                scenario.dps))
                positive = positive and value > 0
                if previous is not None:
                    increasing = increasing and value > previous
                previous = value
        tag = spec.label
        result.checks.append(_check(f"composition rule [{tag}]", worst_ulps <= 1,
                                    {"n_range": [n_lo, n_max], "max_ulps": num(worst_ulps, 6)}))
        if weights.has_exact_forms:
            result.checks.append(_check(f"exact forms [{tag}]", worst_exact <= 1,
                                        {"max_ulps": num(worst_exact, 6)}))
        result.checks.append(_check(f"positive [{tag}]", positive))
        result.checks.append(_check(f"strictly increasing [{tag}]", increasing, soft=True,
                                    message="" if increasing else "weights are not strictly increasing"))

        if spec.kind is SpaceKind.GENERALIZED and spec.beta == 2:
            classic = make_weights(SpaceSpec.classic(spec.p), dps=scenario.dps)
            with mpmath.mp.workdps(scenario.dps):
                worst = max(abs(weights.eval(n) / classic.eval(n) - 1) for n in range(n_lo, n_max + 1))
            result.checks.append(_check(f"beta=2 matches classic [{tag}]", worst <= mpmath.mpf("1e-12"),
                                        {"max_relative": num(worst, 6)}))
        if spec.kind is SpaceKind.THETA:
            with mpmath.mp.workdps(scenario.dps):
                slope = (2 * spec.p + 1) * spec.mu()
                tol = mpmath.mpf(10) ** (-(scenario.dps - 10)) * max(1, abs(slope))
                worst = max(abs(mpmath.log(weights.eval(n + 1)) - mpmath.log(weights.eval(n)) - slope)
                            for n in range(n_lo, min(n_max, n_lo + 200)))
            result.checks.append(_check(f"affine log weights [{tag}]", worst <= tol,
                                        {"slope": num(slope), "max_deviation": num(worst, 6)}))
        result.tables[f"weights_p{spec.p}.csv"] = weights.table(n_lo, n_lo + table_rows - 1)
        result.artifacts[f"p{spec.p}"] = weights.to_json()
    return result


def _certify_hypotheses(spec: SpaceSpec) -> List[str]:
    if spec.kind is SpaceKind.THETA:
        return ["Hyp1", "Hyp2", Hypothesis.THETA_THRESHOLD.value]
    return ["Hyp1", "Hyp2", "Hyp3"]


def _expected(params: Params, name: str) -> Optional[Verdict]:
    expect = params.get("expect", {})
    if not isinstance(expect, dict):
        raise params.error("expect", "expect must map hypothesis names to verdicts")
    if name not in expect:
        return None
    try:
        return Verdict(expect[name])
    except ValueError:
        raise params.error("expect", f"unknown verdict {expect[name]!r} for {name}") from None


def _certificate_check(cert: Certificate, expected: Optional[Verdict]) -> CheckResult:
    name = cert.hypothesis.value
    if cert.lambda_abs is not None:
        name = f"{name} |lam|={cert.lambda_abs}"
    detail = {"verdict": cert.verdict.value, "threshold_n0": cert.threshold_n0,
              "checked_range": list(cert.checked_range)}
    if expected is None:
        message = ""
        if cert.verdict is not Verdict.PASS:
            first = cert.witnesses[0] if cert.witnesses else None
            message = (f"{first.note} at n={first.n}" if first is not None
                       else str(cert.details.get("reason", "")))
        return CheckResult(name, cert.verdict, detail, message)
    detail["expected"] = expected.value
    return _check(name, cert.verdict is expected, detail,
                  f"expected {expected.value}, got {cert.verdict.value}")


def _task_certify(scenario: Scenario, params: Params) -> TaskResult:
    """Hypothesis certificates for one space over the |lambda| grid."""
    result = TaskResult()
    spec = scenario.space
    weights = make_weights(spec, dps=scenario.dps)
    hypotheses = params.get_list("hypotheses", _certify_hypotheses(spec))
    lambdas = _decimal_texts(params, "lambda_abs", config.LAMBDA_GRID)
    lo = weights.first_index + 1
    is_theta = spec.kind is SpaceKind.THETA
    gamma_default = None
    if is_theta:
        gamma_default = {"name": "theta_geometric", "beta_prime": params.get("beta_prime", "3")}
    gamma = None

    for name in hypotheses:
        if name == Hypothesis.HYP1.value:
            n_max = params.get_int("hyp1_n_max", config.DEFAULT_HYP1_N_MAX, minimum=lo)
            result.certificates.append(check_hyp1(weights, n_max))
        elif name == Hypothesis.HYP2.value:
            n_hi = params.get_int("hyp2_n_hi", config.DEFAULT_HYP2_N_HI, minimum=lo)
            result.certificates.append(check_hyp2(weights, (lo, n_hi)))
        elif name in (Hypothesis.HYP3.value, Hypothesis.ALT311.value):
            gamma = gamma or _gamma(params, weights, gamma_default)
            n_lo = max(3, lo, gamma.first_index + 1)
            n_hi = params.get_int("hyp3_n_hi", config.DEFAULT_HYP3_N_HI, minimum=n_lo + 1)
            result.certificates.extend(
                check_damping_grid(Hypothesis(name), weights, gamma, lambdas, (n_lo, n_hi))
            )
        elif name == Hypothesis.THETA_THRESHOLD.value:
            if not is_theta:
                raise params.error("hypotheses", "ThetaThreshold needs a ThetaFockBargmann space")
            beta_prime = str(params.get_decimal("beta_prime", "3"))
            n_extra = params.get_int("n_extra", 1000, minimum=1)
            for lam in lambdas:
                result.certificates.append(certify_theta_threshold(weights, beta_prime, lam, n_extra))
        else:
            raise params.error("hypotheses", f"unknown hypothesis {name!r}")

    max_n0 = params.get("max_threshold_n0")
    for cert in result.certificates:
        key = cert.hypothesis.value
        result.checks.append(_certificate_check(cert, _expected(params, key)))
        if max_n0 is not None and cert.threshold_n0 is not None:
            limit = params.get_int("max_threshold_n0", minimum=1)
            result.checks.append(_check(f"threshold_n0 <= {limit} ({cert.hypothesis.value} "
                                        f"|lam|={cert.lambda_abs})",
                                        cert.threshold_n0 <= limit, {"threshold_n0": cert.threshold_n0}))
    return result


def _task_recurrence(scenario: Scenario, params: Params) -> TaskResult:
    """u_n(lam) with residual, l2 certification and the oracle checks."""
    result = TaskResult()
    weights = scenario.weights()
    lam = params.get_complex("lambda", "1")
    N = params.get_int("N", 100, minimum=2)
    solution = solve_recurrence(weights, lam, N)
    ulps = max_residual_ulps(solution)
    result.checks.append(_check("recurrence residual", ulps <= config.ULP_TOLERANCE,
                                {"max_ulps": num(ulps, 6), "confirmed_digits": solution.confirmed_digits}))
    result.tables["recurrence.csv"] = solution.to_frame()

    if params.get_bool("certify", True):
        gamma = _gamma(params, weights)
        n_check = params.get("n_check")
        l2 = certify_l2(solution, gamma, n_check=params.get_int("n_check") if n_check else None)
        result.certificates.append(l2.hyp3)
        verdict = Verdict.PASS if l2.locked else (
            Verdict.FAIL if l2.hyp3.verdict is Verdict.FAIL else Verdict.INCONCLUSIVE)
        result.checks.append(CheckResult("l2 certification", verdict, l2.to_json(), l2.message))

    expected = params.get_list("expect_prefix", [])
    if expected:
        with mpmath.mp.workdps(solution.internal_dps):
            tol = mpmath.mpf(10) ** (-(scenario.dps - 5))
            worst = mpmath.mpf(0)
            for k, value in enumerate(expected, start=1):
                target = parse_complex(value, "params.expect_prefix", scenario.text)
                worst = max(worst, abs(solution.u_at(k) - target) / max(1, abs(target)))
        result.checks.append(_check("expected coefficients", worst <= tol,
                                    {"terms": len(expected), "max_relative": num(worst, 6)}))

    degree_max = params.get_int("degree_check_n_max", 0, minimum=0)
    if degree_max:
        tol = _tol(params, "degree_tolerance", "1e-20")
        worst = max(interpolation_check(weights, n) for n in range(1, degree_max + 1))
        result.checks.append(_check("degree n-1 in lambda", worst <= tol,
                                    {"n_max": degree_max, "max_error": num(worst, 6)}))

    if params.get_bool("symmetry_checks", False):
        n_sym = min(N, 50)
        with mpmath.mp.workdps(solution.internal_dps):
            tol = mpmath.mpf(10) ** (-(scenario.dps - config.GUARD_DPS))
            parity = parity_check(weights, [lam], n_sym)
            conj = conjugation_check(weights, [lam], n_sym)
        result.checks.append(_check("parity u_n(-lam)", parity <= tol, {"max_error": num(parity, 6)}))
        result.checks.append(_check("conjugation u_n(conj lam)", conj <= tol, {"max_error": num(conj, 6)}))
    return result


def _task_eigensum(scenario: Scenario, params: Params) -> TaskResult:
    """Eigenvector of the Jacobi model at one lambda, or the residual grid."""
    result = TaskResult()
    weights = scenario.weights()
    N = params.get_int("N", 100, minimum=weights.p + 2)
    gamma = _gamma(params, weights)

    if params.get_bool("grid", False):
        radii = _decimal_texts(params, "radii", ["0.5", "1", "2"])
        phases = params.get_int("phases", 4, minimum=1)
        frame = spectrum_proxy(weights, N, radii, phases, gamma)
        result.tables["eigensum_grid.csv"] = frame
        result.checks.append(_check("interior residual <= ulp tolerance at N and 2N",
                                    bool(frame["interior_ok"].all()),
                                    {"points": len(frame), "N": N}))
        certified = frame["certified_2N"] != ""
        detail = {"points": len(frame), "certified_points": int(certified.sum())}
        ratios = frame["ratio_over_gamma"].map(mpmath.mpf)
        result.artifacts["backward_ratio_over_gamma"] = {"min": num(min(ratios), 6),
                                                         "max": num(max(ratios), 6)}
        if certified.all():
            result.checks.append(_check("backward error within certified bound at N and 2N",
                                        bool(frame["within_bound"].all()), detail))
        else:
            result.checks.append(CheckResult(
                "certified bound at N and 2N", Verdict.INCONCLUSIVE, detail,
                f"damping bound does not lock in within N={N} for every grid point; increase N"))
        return result

    lam = params.get_complex("lambda", "1")
    v = eigenvector_sum(weights, lam, N, gamma=gamma)
    op = build_operator(OperatorKind.JACOBI, weights.with_dps(v.dps), N)
    residual = eigen_residual(op, v, target_dps=scenario.dps)
    result.checks.append(_check("interior residual", residual.interior_ulps <= config.ULP_TOLERANCE,
                                residual.to_json()))
    with mpmath.mp.workdps(v.dps):
        gap = abs(residual.boundary - v.boundary_residual)
        ok = gap <= mpmath.mpf(10) ** (-(scenario.dps - config.GUARD_DPS)) * max(1, abs(v.boundary_residual))
    result.checks.append(_check("boundary residual equals -omega_N u_(N+1)", ok,
                                {"boundary": num(mpmath.mpc(v.boundary_residual)), "gap": num(gap, 6)}))
    if params.get_bool("require_certificates", True):
        verdicts = [Verdict(value) for value in v.checks["certificates"].values()]
        worst = Verdict.worst(verdicts)
        result.checks.append(CheckResult("hypothesis certificates", worst, v.checks["certificates"],
                                         "" if worst is Verdict.PASS else "eigenvector built without certification"))
    result.tables["eigensum.csv"] = v.to_frame()
    result.artifacts["tail_bound"] = num(v.tail_bound) if v.tail_bound is not None else None
    return result


def _orbit_vector(params: Params, scenario: Scenario, weights: Weights, N: int) -> VectorState:
    spec = params.get("vector", {"basis": weights.first_index})
    if not isinstance(spec, dict) or len(spec) != 1:
        raise params.error("vector", 'vector must be {"basis": n}, {"coefficients": {...}}, '
                                     '{"eigenvector": lam} or {"eigensum": lam}')
    (key, value), = spec.items()
    offset = weights.first_index
    if key == "basis":
        return VectorState.basis(int(value), N, offset, exact=weights.has_exact_forms, dps=weights.dps)
    if key == "coefficients":
        if not isinstance(value, dict):
            raise params.error("vector", "coefficients must map basis indices to decimal strings")
        values = {int(n): parse_decimal(a, "params.vector.coefficients", scenario.text)
                  for n, a in value.items()}
        return VectorState.from_mapping(values, N, offset, dps=weights.dps)
    lam = parse_complex(value, f"params.vector.{key}", scenario.text)
    if key == "eigenvector":
        return eigenvector_Hp(weights, lam, N)
    if key == "eigensum":
        return eigenvector_sum(weights, lam, N, gamma=_gamma(params, weights))
    raise params.error("vector", f"unknown vector type {key!r}")


def _task_orbit(scenario: Scenario, params: Params) -> TaskResult:
    """Iterates of a vector with norms on the trusted window."""
    result = TaskResult()
    weights = scenario.weights()
    kind_name = params.get_str("operator", OperatorKind.BACKWARD.value,
                               choices=[k.value for k in OperatorKind])
    kind = OperatorKind(kind_name)
    N = params.get_int("N", 50, minimum=weights.p + 2)
    steps = params.get_int("steps", 10, minimum=0)
    v = _orbit_vector(params, scenario, weights, N)
    op = build_operator(kind, weights.with_dps(v.dps), N)
    trace = orbit(op, v, steps)
    result.tables["orbit.csv"] = trace.to_frame()
    last = trace.steps[-1]
    result.checks.append(_check("trusted window non-empty", last.window[0] <= last.window[1],
                                {"window": list(last.window), "steps": steps}))

    if v.eigenvalue is not None:
        tol = _tol(params, "tolerance", config.DEFAULT_REPORT_TOLERANCE)
        with mpmath.mp.workdps(v.dps):
            lam_abs = abs(mpmath.mpc(v.eigenvalue))
            norm0 = v.norm()
            worst = max(s.residual / max(1, lam_abs ** s.step * norm0) for s in trace.steps)
        result.checks.append(_check("eigen-relation along the orbit", worst <= tol,
                                    {"max_relative_residual": num(worst, 6)}))
    if params.get_bool("expect_zero", False):
        result.checks.append(_check("orbit reaches zero", last.full_norm == 0,
                                    {"final_norm": num(last.full_norm, 6)}))
    return result


def _task_periodic_sum(scenario: Scenario, params: Params) -> TaskResult:
    """Periodic point of the Jacobi model from eigenvectors at roots of unity."""
    result = TaskResult()
    weights = scenario.weights()
    roots = params.get_list("roots")
    if not roots:
        raise params.error("roots", "at least one root n/k is required")
    amplitudes = params.get("amplitudes")
    if amplitudes is not None:
        amplitudes = [parse_complex(a, "params.amplitudes", scenario.text) for a in amplitudes]
    N = params.get_int("N", 200, minimum=weights.p + 2)
    phi, period = periodic_point_sum(weights, roots, amplitudes, N, gamma=_gamma(params, weights))
    check = phi.checks["periodicity"]
    detail = dict(check, period_product=phi.checks["period_product"])
    result.checks.append(_check(f"J^{period} phi = phi", check["verified"], detail))
    result.checks.append(_check("tail bound certified", phi.checks["tail_certified"], soft=True,
                                message="" if phi.checks["tail_certified"]
                                else "damping bound not locked; absolute tolerance used"))
    result.tables["periodic_sum.csv"] = phi.to_frame()
    result.artifacts["period"] = period
    return result


def _periodic_cases(params: Params, p: int) -> List[Tuple[int, int]]:
    cases = params.get("cases")
    if cases is None:
        cases = [(s, n) for s in range(p, p + 3) for n in range(1, 5) if n >= s and n > s - p]
        return cases
    out = []
    for case in cases:
        if not isinstance(case, dict) or set(case) != {"s", "N_period"}:
            raise params.error("cases", 'each case must be {"s": ..., "N_period": ...}')
        out.append((int(case["s"]), int(case["N_period"])))
    return out


def _task_periodic_hp(scenario: Scenario, params: Params) -> TaskResult:
    """Periodic points phi_{s,N} of H_p with the block identities."""
    result = TaskResult()
    weights = scenario.weights()
    k_max = params.get_int("telescoping_k", 3, minimum=1)
    exact = params.get("exact")
    rows = []
    for s, n_period in _periodic_cases(params, weights.p):
        n_trunc = params.get_int("N_trunc", 0, minimum=0) or s + 3 * n_period + 4
        phi = periodic_point_Hp(weights, s, n_period, n_trunc, exact=exact)
        check = phi.checks["periodicity"]
        result.checks.append(_check(f"H^{n_period} phi_(s={s}) = phi", check["verified"], check))
        for k in range(1, k_max + 1):
            report = telescoping_identity(weights, s, n_period, k, exact=exact)
            result.checks.append(_check(f"block identities s={s} N={n_period} k={k}",
                                        report.holds, report.to_json()))
        rows.append({"s": s, "N_period": n_period, "N_trunc": n_trunc, "exact": phi.exact,
                     "support": " ".join(str(n) for n in phi.support()),
                     "tail_bound": num(phi.tail_bound, 12), "verified": check["verified"]})
    result.tables["periodic_hp.csv"] = pd.DataFrame(rows)

    inverse = right_inverse_check(weights, params.get_int("right_inverse_k_max", weights.first_index + 20))
    result.checks.append(_check("H S = I on basis vectors", inverse["holds"], inverse))
    decay = params.get("s_decay")
    if decay is not None:
        if not isinstance(decay, dict):
            raise params.error("s_decay", 's_decay must be {"k": ..., "n_steps": ...}')
        trace = s_operator_decay(weights, int(decay.get("k", weights.first_index)),
                                 int(decay.get("n_steps", 10)))
        result.checks.append(_check("||S^n P_k|| nonincreasing and eventually strictly decreasing",
                                    trace.nonincreasing and trace.strict_from is not None,
                                    {"k": trace.k, "steps": len(trace.norms) - 1,
                                     "strict_from": trace.strict_from}))
        result.tables["s_decay.csv"] = pd.DataFrame({"n": range(len(trace.norms)), "norm": trace.norms})
    return result


def _task_approximate(scenario: Scenario, params: Params) -> TaskResult:
    """Approximation of a finitely supported vector by periodic points."""
    result = TaskResult()
    weights = scenario.weights()
    coefficients = params.get("coefficients")
    if not isinstance(coefficients, dict) or not coefficients:
        raise params.error("coefficients", "coefficients must map basis indices to decimal strings")
    values = {int(n): parse_decimal(a, "params.coefficients", scenario.text)
              for n, a in coefficients.items()}
    offset = weights.first_index
    top = max(values)
    if min(values) < offset:
        raise params.error("coefficients", f"basis indices must be >= {offset}")
    phi = VectorState.from_mapping(values, top - offset + 1, offset, dps=weights.dps, label="phi")
    require = params.get_bool("require_smallness", True)
    N_max = params.get("N_max")
    rows = []
    for eps_value in params.get_list("epsilons", ["1e-2", "1e-4"]):
        eps = parse_decimal(eps_value, "params.epsilons", scenario.text)
        eps_text = str(eps_value)
        psi, n_used = approximate_by_periodic(weights, phi, eps_text, require_smallness=require,
                                              N_max=int(N_max) if N_max is not None else None)
        with mpmath.mp.workdps(weights.dps):
            distance = mpmath.mpf(psi.checks["distance"])
            ok = distance <= mpmath.mpf(eps.numerator) / eps.denominator
        result.checks.append(_check(f"||phi - psi|| <= {eps_text}", ok,
                                    {"N_used": n_used, "distance": psi.checks["distance"],
                                     "smallness_ok": psi.checks["smallness_ok"]}))
        rows.append({"epsilon": eps_text, "N_used": n_used, "distance": psi.checks["distance"],
                     "smallness_ok": psi.checks["smallness_ok"]})
    result.tables["approximate.csv"] = pd.DataFrame(rows)
    return result


def _sample_grid(params: Params, radius: float) -> Tuple[np.ndarray, np.ndarray]:
    points = params.get_int("sample_points", 11, minimum=2)
    axis = np.linspace(-radius, radius, points)
    return axis, axis


def _quadrature_disk(scenario: Scenario, params: Params, result: TaskResult):
    spec = scenario.space
    rule = make_rule(spec, params.get_int("radial", config.DEFAULT_RADIAL_NODES, minimum=2),
                     params.get_int("angular", config.DEFAULT_ANGULAR_NODES, minimum=4))
    n_max = params.get_int("n_max", 12, minimum=0)
    tol_norm = float(_tol(params, "norm_tolerance", "1e-10"))
    rows = []
    worst_norm = worst_raw = 0.0
    for n in range(n_max + 1):
        zn = Polynomial.monomial(n)
        quad = inner_product(spec, zn, zn, rule, normalized=False).real
        closed = float(monomial_norm_disk(n, spec.nu))
        raw = float(monomial_norm_raw(n, spec.nu))
        worst_norm = max(worst_norm, abs(quad / closed - 1))
        worst_raw = max(worst_raw, abs(raw / closed - 1))
        rows.append({"n": n, "quadrature": quad, "closed_form": closed, "beta_form": raw})
    result.tables["monomial_norms.csv"] = pd.DataFrame(rows)
    result.checks.append(_check("monomial norms match the closed form", worst_norm <= tol_norm,
                                {"n_max": n_max, "max_relative": worst_norm}))
    result.checks.append(_check("Gamma and Beta forms agree", worst_raw <= tol_norm,
                                {"max_relative": worst_raw}))

    adjoint_max = params.get_int("adjoint_n_max", 8, minimum=0)
    tol_adj = float(_tol(params, "adjoint_tolerance", "1e-10"))
    worst_adj = max(adjoint_check_disk(n, m, spec.nu, rule)
                    for n in range(adjoint_max + 1) for m in range(adjoint_max + 1))
    result.checks.append(_check("A and A* are adjoint", worst_adj <= tol_adj,
                                {"n_max": adjoint_max, "max_residual": worst_adj}))

    tol_w = float(_tol(params, "weight_tolerance", "1e-9"))
    reports = [adjoint_weight_check(n, spec.nu, rule) for n in range(adjoint_max + 1)]
    worst_w = max(r["difference"] for r in reports)
    result.checks.append(_check("<A* e_n, e_(n+1)> equals omega_n", worst_w <= tol_w,
                                {"max_difference": worst_w}))
    result.tables["adjoint_weights.csv"] = pd.DataFrame(reports)


def _quadrature_plane(scenario: Scenario, params: Params, result: TaskResult):
    spec = scenario.space
    rule = make_rule(spec, params.get_int("radial", config.DEFAULT_RADIAL_NODES, minimum=2),
                     params.get_int("angular", config.DEFAULT_ANGULAR_NODES, minimum=4))
    n_max = params.get_int("n_max", 12, minimum=0)
    tol = float(_tol(params, "tolerance", "1e-10"))
    worst = 0.0
    for n in range(n_max + 1):
        for m in range(n_max + 1):
            value = inner_product(spec, BasisFunction(spec, n), BasisFunction(spec, m), rule,
                                  degree=n + m).value
            worst = max(worst, abs(value - (1.0 if n == m else 0.0)))
    result.checks.append(_check("basis is orthonormal", worst <= tol,
                                {"n_max": n_max, "max_deviation": worst,
                                 "truncation_bound": rule.truncation_bound}))

    z = complex(parse_complex(params.get("kernel_z", "0.5+0.25j"), "params.kernel_z", scenario.text))
    lam = complex(parse_complex(params.get("kernel_lambda", "0.3-0.4j"), "params.kernel_lambda",
                                scenario.text))
    kernel = kernel_eval(spec, z, lam, params.get_int("kernel_terms", 60, minimum=1))
    if spec.kind is SpaceKind.CLASSIC:
        expected = complex(np.exp(z * np.conj(lam)))
        gap = abs(kernel["value"] - expected) / abs(expected)
        result.checks.append(_check("kernel equals exp(z conj lam)", gap <= 1e-12,
                                    {"relative": gap, "tail_bound": kernel["tail_bound"]}))
    reproducing = reproducing_check(spec, z, N_terms=params.get_int("reproducing_terms", 20, minimum=3),
                                    rule=rule)
    result.checks.append(_check("reproducing property", reproducing["difference"] <= 1e-6,
                                {"difference": reproducing["difference"]}))
    if spec.kind is SpaceKind.CLASSIC:
        coherent = coherent_norm_check(params.get("coherent_lambda", "1"))
        result.checks.append(_check("coherent norm exp(|lam|^2)",
                                    coherent["difference"] <= 1e-8 and coherent["within_tail"],
                                    {k: v for k, v in coherent.items() if k != "lambda"}))


def _quadrature_theta(scenario: Scenario, params: Params, result: TaskResult):
    spec = scenario.space
    n_max = params.get_int("n_max", 5, minimum=0)
    reports = [theta_multiplication_check(n, spec.alpha, spec.nu) for n in range(n_max + 1)]
    result.checks.append(_check("exp(2 pi i z) e_n is a multiple of e_(n+1)",
                                all(r["holds"] for r in reports),
                                {"max_relative_error": max(r["max_relative_error"] for r in reports)}))
    result.tables["theta_multiplication.csv"] = pd.DataFrame(reports)
    result.tables["theta_quasi_periodicity.csv"] = theta_quasi_periodicity(
        params.get_int("quasi_n", 0, minimum=0), spec.alpha, spec.nu)


def _task_quadrature(scenario: Scenario, params: Params) -> TaskResult:
    """Function-space ground truth for the scenario's space."""
    result = TaskResult()
    kind = scenario.space.kind
    if kind is SpaceKind.DISK:
        _quadrature_disk(scenario, params, result)
        radius = 0.9
    elif kind is SpaceKind.THETA:
        _quadrature_theta(scenario, params, result)
        radius = 0.5
    else:
        _quadrature_plane(scenario, params, result)
        radius = 2.0
    sample_n = params.get_int("sample_n", 3, minimum=0)
    xs, ys = _sample_grid(params, radius)
    result.tables["samples.csv"] = sample_function(BasisFunction(scenario.space, sample_n), xs, ys)
    return result


def _task_asymptotics(scenario: Scenario, params: Params) -> TaskResult:
    """Weight asymptotics and the generalized m_n deviation."""
    result = TaskResult()
    probes = [int(n) for n in params.get_list("probes", [100, 1000, 10000])]
    if scenario.space is not None:
        report = asymptotic_check(scenario.weights(), probes)
        result.checks.append(_check(f"asymptotic ratio [{scenario.space.label}]", not report.flags,
                                    {"model": report.model, "flags": report.flags}, soft=True,
                                    message="; ".join(report.flags)))
        result.tables["asymptotics.csv"] = report.to_frame()
    betas = params.get_list("betas", [])
    if scenario.space is None and not betas:
        raise params.error("betas", "asymptotics without a space needs a betas list")
    tol = _tol(params, "deviation_tolerance", "1e-3")
    rows = []
    for beta in betas:
        beta_q = parse_decimal(beta, "params.betas", scenario.text)
        report = m_deviation_report(beta_q, probes, dps=scenario.dps)
        last = report["rows"][-1]["deviation"]
        result.checks.append(_check(f"m_n deviation beta={beta}", last <= tol and report["decreasing"],
                                    {"deviation": num(last, 6), "decreasing": report["decreasing"],
                                     "observed_constant": num(report["observed_constant"], 6)}))
        for row in report["rows"]:
            rows.append(dict(row, beta=str(beta)))
    if rows:
        result.tables["m_deviation.csv"] = pd.DataFrame(rows)
    return result


TASKS: Dict[Task, Callable[[Scenario, Params], TaskResult]] = {
    Task.WEIGHTS: _task_weights,
    Task.CERTIFY: _task_certify,
    Task.RECURRENCE: _task_recurrence,
    Task.EIGENSUM: _task_eigensum,
    Task.ORBIT: _task_orbit,
    Task.PERIODIC_SUM: _task_periodic_sum,
    Task.PERIODIC_HP: _task_periodic_hp,
    Task.APPROXIMATE: _task_approximate,
    Task.QUADRATURE: _task_quadrature,
    Task.ASYMPTOTICS: _task_asymptotics,
}


# --- running ----------------------------------------------------------------------


def precision_settings(scenario: Scenario) -> Dict[str, Any]:
    return {
        "dps": scenario.dps,
        "quadrature_dps": config.QUADRATURE_DPS,
        "certify_dps": config.CERTIFY_DPS,
        "recurrence_precision_factor": config.RECURRENCE_PRECISION_FACTOR,
        "recurrence_confirm_factor": config.RECURRENCE_CONFIRM_FACTOR,
        "ulp_tolerance": config.ULP_TOLERANCE,
        "report_tolerance": config.DEFAULT_REPORT_TOLERANCE,
    }


def run_scenario(scenario: Scenario) -> RunOutcome:
    """Run one scenario and write its artifacts into `scenario.output`."""
    out = Path(scenario.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _error(scenario.text, f"output directory {out} is not writable: {exc}", "output") from exc

    logger.info("=" * 60)
    logger.info(f"Scenario {scenario.name}: task={scenario.task.value} dps={scenario.dps}")
    logger.info("=" * 60)
    started = time.perf_counter()
    params = Params(scenario.params, scenario.text)
    with mpmath.mp.workdps(scenario.dps):
        result = TASKS[scenario.task](scenario, params)
    for key in params.unused():
        logger.warning(f"{scenario.name}: parameter '{key}' is not used by task {scenario.task.value}")

    verdict = Verdict.worst(c.verdict for c in result.checks)
    failing = [c.name for c in result.checks if c.verdict is not Verdict.PASS]
    resolved = scenario.resolved()
    precision = precision_settings(scenario)
    header = {"artifact": config.ARTIFACT_NAME, "artifact_version": config.ARTIFACT_VERSION,
              "schema_version": config.CERTIFICATE_SCHEMA_VERSION,
              "scenario": resolved, "precision": precision}
    write_json(out / config.CERTIFICATES_FILE,
               dict(header, certificates=[c.to_json() for c in result.certificates]))
    write_json(out / config.CHECKS_FILE,
               dict(header, checks=[c.to_json() for c in result.checks], verdict=verdict.value,
                    exit_code=verdict.exit_code, artifacts=result.artifacts))
    for name, frame in sorted(result.tables.items()):
        write_csv(out / name, frame)
    write_json(out / config.RUN_META_FILE, {
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "duration_seconds": round(time.perf_counter() - started, 3),
        "source": scenario.source,
        "output": str(out),
    })

    for check in result.checks:
        if check.verdict is Verdict.FAIL:
            logger.error(f"{scenario.name}: check failed: {check.name} {check.message}".rstrip())
        elif check.verdict is Verdict.INCONCLUSIVE:
            logger.warning(f"{scenario.name}: inconclusive: {check.name} {check.message}".rstrip())
    logger.info(f"Scenario {scenario.name}: {verdict.value} ({len(result.checks)} checks) -> {out}")
    return RunOutcome(scenario.name, str(out), verdict, failing)


def _run_file(job: Tuple[str, Optional[str]]) -> RunOutcome:
    path, output_root = job
    try:
        return run_scenario(load_scenario(path, output_root))
    except ShiftLabError as exc:
        logger.error(f"{path}: {exc}")
        return RunOutcome(Path(path).stem, "", Verdict.FAIL, error=str(exc))


def run_many(paths: Sequence[str], workers: int = config.WORKERS,
             output_root: Optional[str] = None) -> List[RunOutcome]:
    """Run scenario files, each into its own output directory.

    With workers > 1 the files run in a process pool; results keep the input
    order.
    """
    jobs = [(str(p), output_root) for p in paths]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_file(job) for job in jobs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_file, jobs))


# --- reports ---------------------------------------------------------------------


SUMMARY_COLUMNS = ["space", "p", "hypothesis", "verdict", "margin", "threshold_n0", "n_lo", "n_hi"]


def _space_key(cert: Certificate) -> str:
    if cert.spec is None:
        return cert.label
    data = cert.spec.to_json()
    extra = [f"{k}={data[k]}" for k in ("beta", "nu", "alpha") if k in data]
    return " ".join([data["kind"]] + extra)


@dataclass
class BundleReport:
    frame: pd.DataFrame
    text: str
    verdict: Verdict

    @property
    def exit_code(self) -> int:
        return self.verdict.exit_code


def report_bundle(certificates: Sequence[Certificate], output_dir: Optional[str] = None) -> BundleReport:
    """One summary row per (space, p, hypothesis) with the worst verdict.

    Margins are the smallest reported, thresholds the largest, ranges the
    union.

    Raises:
        BundleError: certificates carry different artifact or schema versions.
    """
    versions = {(c.artifact_version, c.schema_version) for c in certificates}
    if len(versions) > 1:
        raise BundleError(f"certificates mix artifact/schema versions {sorted(versions)}; refusing to merge")

    groups: Dict[Tuple[str, int, str], List[Certificate]] = {}
    for cert in certificates:
        groups.setdefault((_space_key(cert), cert.p, cert.hypothesis.value), []).append(cert)

    rows = []
    for (space, p, hypothesis), certs in sorted(groups.items()):
        margins = [c.margin for c in certs if c.margin is not None]
        thresholds = [c.threshold_n0 for c in certs if c.threshold_n0 is not None]
        rows.append({
            "space": space,
            "p": p,
            "hypothesis": hypothesis,
            "verdict": Verdict.worst(c.verdict for c in certs).value,
            "margin": num(min(margins), 12) if margins else "",
            "threshold_n0": max(thresholds) if thresholds else "",
            "n_lo": min(c.checked_range[0] for c in certs),
            "n_hi": max(c.checked_range[1] for c in certs),
        })
    frame = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    verdict = Verdict.worst(Verdict(v) for v in frame["verdict"])
    version = next(iter(versions))[0] if versions else config.ARTIFACT_VERSION
    lines = [f"{config.ARTIFACT_NAME} {version} summary: {len(frame)} rows, worst verdict {verdict.value}"]
    if len(frame):
        lines.append(frame.to_string(index=False))
    text = "\n".join(lines) + "\n"

    if output_dir is not None:
        out = Path(output_dir)
        write_csv(out / config.SUMMARY_CSV, frame)
        (out / config.SUMMARY_TXT).write_text(text, encoding="utf-8")
        logger.info(f"Wrote {out / config.SUMMARY_TXT}")
    return BundleReport(frame, text, verdict)


def load_certificates(paths: Sequence[str]) -> List[Certificate]:
    """Certificates from certificates.json files or directories holding them."""
    files: List[Path] = []
    for path in map(Path, paths):
        if path.is_dir():
            files.extend(sorted(path.rglob(config.CERTIFICATES_FILE)))
        elif path.is_file():
            files.append(path)
        else:
            raise BundleError(f"no certificates at {path}")
    certificates = []
    for path in files:
        try:
            data = load_json(path)
            certificates.extend(Certificate.from_json(c) for c in data.get("certificates", []))
        except (orjson.JSONDecodeError, KeyError, ValueError, AttributeError) as exc:
            raise BundleError(f"{path} is not a certificate file: {exc}") from exc
    logger.info(f"Loaded {len(certificates)} certificates from {len(files)} files")
    return certificates
