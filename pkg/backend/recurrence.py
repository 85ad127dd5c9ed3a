"""Three-term recurrence for the symmetrized shift and its certificates.

For weights w_1, w_2, ... (recurrence index k) the coefficients solve

    u_1 = 1,  w_1 u_2 = lam,  w_{k-1} u_{k-1} + w_k u_{k+1} = lam u_k

Recurrence index k sits at basis index k + offset (offset = p - 1 for a
WeightSequence of order p, 0 for RawWeights); certificates and dominating
sequences always use the basis index n.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import mpmath
import pandas as pd
from tqdm import tqdm

from backend import config
from backend.exceptions import ConfigurationError, ParameterError, PrecisionError
from backend.weights import (
    ZERO_ACTION,
    AsymptoticClass,
    SpaceKind,
    SpaceSpec,
    WeightSequence,
    Weights,
    to_fraction,
)
from utils.export import num

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    PASS = "pass"
    INCONCLUSIVE = "inconclusive"
    FAIL = "fail"

    @property
    def rank(self) -> int:
        return {"pass": 0, "inconclusive": 1, "fail": 2}[self.value]

    @property
    def exit_code(self) -> int:
        return {"pass": 0, "inconclusive": 2, "fail": 1}[self.value]

    @classmethod
    def worst(cls, verdicts) -> "Verdict":
        verdicts = list(verdicts)
        if not verdicts:
            return cls.PASS
        return max(verdicts, key=lambda v: v.rank)


class Hypothesis(str, Enum):
    HYP1 = "Hyp1"
    HYP2 = "Hyp2"
    HYP3 = "Hyp3"
    ALT311 = "Alt311"
    THETA_THRESHOLD = "ThetaThreshold"


def working_eps(dps: int):
    """Unit roundoff at `dps` decimal digits."""
    with mpmath.mp.workdps(dps):
        return +mpmath.eps


# --- certificates ---------------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    n: int
    lhs: Any
    rhs: Any
    note: str = ""

    def to_json(self) -> Dict[str, Any]:
        data = {"n": self.n, "lhs": num(self.lhs), "rhs": num(self.rhs)}
        if self.note:
            data["note"] = self.note
        return data


@dataclass(frozen=True)
class Certificate:
    """Verdict for one hypothesis over a checked range of basis indices."""

    hypothesis: Hypothesis
    spec: Optional[SpaceSpec]
    label: str
    checked_range: Tuple[int, int]
    verdict: Verdict
    margin: Any = None
    threshold_n0: Optional[int] = None
    witnesses: Tuple[Witness, ...] = ()
    lambda_abs: Optional[str] = None
    details: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)
    artifact_version: str = config.ARTIFACT_VERSION
    schema_version: str = config.CERTIFICATE_SCHEMA_VERSION

    def __post_init__(self):
        if self.verdict is Verdict.FAIL and not self.witnesses:
            raise ValueError(f"{self.hypothesis.value} fail certificate needs a witness")

    @property
    def space(self) -> str:
        return self.spec.kind.value if self.spec is not None else self.label

    @property
    def p(self) -> int:
        return self.spec.p if self.spec is not None else 0

    def to_json(self) -> Dict[str, Any]:
        return {
            "artifact_version": self.artifact_version,
            "schema_version": self.schema_version,
            "hypothesis": self.hypothesis.value,
            "spec": self.spec.to_json() if self.spec is not None else None,
            "label": self.label,
            "checked_range": list(self.checked_range),
            "verdict": self.verdict.value,
            "margin": num(self.margin) if self.margin is not None else None,
            "threshold_n0": self.threshold_n0,
            "lambda_abs": self.lambda_abs,
            "witnesses": [w.to_json() for w in self.witnesses],
            "details": self.details,
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "Certificate":
        spec = SpaceSpec.from_json(data["spec"]) if data.get("spec") else None
        witnesses = tuple(
            Witness(w["n"], mpmath.mpf(w["lhs"]), mpmath.mpf(w["rhs"]), w.get("note", ""))
            for w in data.get("witnesses", [])
        )
        margin = data.get("margin")
        return cls(
            hypothesis=Hypothesis(data["hypothesis"]),
            spec=spec,
            label=data.get("label", ""),
            checked_range=tuple(data["checked_range"]),
            verdict=Verdict(data["verdict"]),
            margin=mpmath.mpf(margin) if margin is not None else None,
            threshold_n0=data.get("threshold_n0"),
            witnesses=witnesses,
            lambda_abs=data.get("lambda_abs"),
            details=data.get("details", {}),
            artifact_version=data.get("artifact_version", ""),
            schema_version=data.get("schema_version", ""),
        )


# --- dominating sequences ---------------------------------------------------------


@dataclass(frozen=True)
class DominatingSequence:
    """gamma_n used to bound |u_n| <= M / gamma_n.

    `tail_sq_sum(N)` bounds sum_{n>N} 1/gamma_n^2 from above; None when the
    sequence carries no summability class.
    """

    name: str
    fn: Callable[[int], Any]
    first_index: int
    summable: Optional[bool]
    tail_sq_sum: Optional[Callable[[int], Any]] = None
    params: Dict[str, str] = field(default_factory=dict, compare=False, hash=False)

    def __call__(self, n: int):
        if n < self.first_index:
            raise ParameterError(f"{self.name} is defined from n={self.first_index}, got {n}")
        return self.fn(n)


def _sqrt_n_log_n() -> DominatingSequence:
    def tail(N):
        # decreasing integrand: sum_{n>N} f(n) <= int_N^inf dx / (x log^2 x) = 1 / log N
        return 1 / mpmath.log(max(N, 2))

    return DominatingSequence("sqrt_n_log_n", lambda n: mpmath.sqrt(n) * mpmath.log(n),
                              first_index=2, summable=True, tail_sq_sum=tail)


def _theta_geometric(weights: Optional[Weights], beta_prime) -> DominatingSequence:
    spec = getattr(weights, "spec", None)
    if spec is None or spec.kind is not SpaceKind.THETA:
        raise ConfigurationError("theta_geometric needs ThetaFockBargmann weights")
    bp = mpmath.mpf(beta_prime)
    if bp <= 2:
        raise ConfigurationError(f"theta_geometric needs beta' > 2, got {beta_prime}")
    p = spec.p

    def rate():
        return (2 * p + 1) * spec.mu() / bp

    def gamma(n):
        return spec.c_alpha() ** (2 * p + 1) * mpmath.exp(rate() * n)

    def tail(N):
        r = rate()
        return gamma(N + 1) ** -2 / (1 - mpmath.exp(-2 * r))

    return DominatingSequence("theta_geometric", gamma, first_index=0, summable=True,
                              tail_sq_sum=tail, params={"beta_prime": str(beta_prime)})


def _tabulated(values=None, fn=None, first_index: int = 1,
               summable: Optional[bool] = None) -> DominatingSequence:
    if fn is None:
        if values is None:
            raise ConfigurationError("tabulated gamma needs `values` or `fn`")
        table = [mpmath.mpf(v) for v in values]

        def fn(n):
            k = n - first_index
            if k >= len(table):
                raise ParameterError(f"tabulated gamma has no value at n={n}")
            return table[k]

    return DominatingSequence("tabulated", fn, first_index=first_index, summable=summable)


def make_gamma(name: Union[str, DominatingSequence], weights: Optional[Weights] = None,
               **params) -> DominatingSequence:
    """Resolve a dominating sequence by name.

    Names: sqrt_n_log_n, theta_geometric (needs beta_prime > 2 and theta
    weights), tabulated (needs values or fn).
    """
    if isinstance(name, DominatingSequence):
        return name
    if name == "sqrt_n_log_n":
        return _sqrt_n_log_n()
    if name == "theta_geometric":
        return _theta_geometric(weights, params.get("beta_prime", 3))
    if name in ("tabulated", "user-tabulated", "user_tabulated"):
        return _tabulated(**params)
    raise ConfigurationError(f"unknown dominating sequence {name!r}")


# --- recurrence -------------------------------------------------------------


@dataclass(frozen=True)
class RecurrenceSolution:
    lam: Any
    u: Tuple[Any, ...]
    u_next: Any
    tail_partial_sums: Tuple[Any, ...]
    index_offset: int
    dps: int
    internal_dps: int
    confirmed_digits: int
    weights: Any = field(compare=False, repr=False)
    gamma_used: Optional[str] = None

    @property
    def N(self) -> int:
        return len(self.u)

    def u_at(self, k: int):
        """u_k for recurrence index 1 <= k <= N + 1."""
        if k == self.N + 1:
            return self.u_next
        if not 1 <= k <= self.N:
            raise ParameterError(f"u_{k} is outside 1..{self.N + 1}")
        return self.u[k - 1]

    def basis_index(self, k: int) -> int:
        return k + self.index_offset

    def to_frame(self) -> pd.DataFrame:
        rows = []
        with mpmath.mp.workdps(self.internal_dps):
            for k, (u, s) in enumerate(zip(self.u, self.tail_partial_sums), start=1):
                rows.append({"n": self.basis_index(k), "u_re": u.real, "u_im": u.imag,
                             "abs2": abs(u) ** 2, "partial_sum": s})
        return pd.DataFrame(rows, columns=["n", "u_re", "u_im", "abs2", "partial_sum"])


def _forward(weights: Weights, lam, N: int, dps: int) -> List[Any]:
    offset = weights.recurrence_offset
    with mpmath.mp.workdps(dps):
        lam = mpmath.mpc(lam)
        w_prev = None
        u = [mpmath.mpc(1)]
        for k in range(1, N + 1):
            w_k = weights.eval(k + offset)
            if w_k is ZERO_ACTION or w_k <= 0:
                raise ParameterError(f"weight at basis index {k + offset} is not positive")
            if k == 1:
                nxt = lam / w_k
            else:
                nxt = (lam * u[k - 1] - w_prev * u[k - 2]) / w_k
            if not mpmath.isfinite(nxt) or (nxt != 0 and mpmath.mag(nxt) > config.MAX_BINARY_EXPONENT):
                raise PrecisionError(f"recurrence overflows at index {k + 1}")
            u.append(nxt)
            w_prev = w_k
    return u


def solve_recurrence(weights: Weights, lam, N: int, dps: Optional[int] = None) -> RecurrenceSolution:
    """Coefficients u_1..u_N (and u_{N+1}) of the eigenvector recurrence.

    Runs at 2x the target precision and confirms the target digits with a
    rerun at 4x.

    Args:
        weights: WeightSequence or RawWeights.
        lam: complex spectral parameter.
        N: number of coefficients, N >= 2.
        dps: target precision (default: the weights' precision).

    Returns:
        RecurrenceSolution holding values at the internal precision.
    """
    if isinstance(N, bool) or not isinstance(N, int) or N < 2:
        raise ParameterError(f"solve_recurrence needs N >= 2, got {N!r}")
    target = dps or weights.dps
    internal = target * config.RECURRENCE_PRECISION_FACTOR
    confirm = target * config.RECURRENCE_CONFIRM_FACTOR

    u = _forward(weights.with_dps(internal), lam, N, internal)
    check = _forward(weights.with_dps(confirm), lam, N, confirm)

    confirmed = confirm
    with mpmath.mp.workdps(confirm):
        tol = mpmath.mpf(10) ** (-target)
        scale = max(abs(x) for x in check)
        floor = mpmath.mpf(10) ** (-(internal - config.GUARD_DPS)) * scale
        for k, (a, b) in enumerate(zip(u, check), start=1):
            diff = abs(a - b)
            if diff > tol * abs(b) + floor:
                raise PrecisionError(
                    f"recurrence unstable: u_{k} agrees to fewer than {target} digits between "
                    f"{internal} and {confirm} digit runs"
                )
            if diff:
                ref = abs(b) if b != 0 else scale
                confirmed = min(confirmed, int(-mpmath.log10(diff / ref)))

    with mpmath.mp.workdps(internal):
        sums = []
        total = mpmath.mpf(0)
        for x in u[:N]:
            total += abs(x) ** 2
            sums.append(+total)

    logger.debug(f"solve_recurrence: {weights.label}, lam={lam}, N={N}, confirmed {confirmed} digits")
    return RecurrenceSolution(
        lam=mpmath.mpc(lam),
        u=tuple(u[:N]),
        u_next=u[N],
        tail_partial_sums=tuple(sums),
        index_offset=weights.recurrence_offset,
        dps=target,
        internal_dps=internal,
        confirmed_digits=min(confirmed, internal),
        weights=weights,
    )


def residuals(solution: RecurrenceSolution) -> List[Any]:
    """|w_{k-1}u_{k-1} + w_k u_{k+1} - lam u_k| / (1 + |lam u_k|) for 2 <= k <= N-1."""
    weights = solution.weights.with_dps(solution.internal_dps)
    offset = solution.index_offset
    out = []
    with mpmath.mp.workdps(solution.internal_dps):
        lam = solution.lam
        for k in range(2, solution.N):
            w_prev = weights.eval(k - 1 + offset)
            w_k = weights.eval(k + offset)
            u_prev, u_k, u_next = solution.u_at(k - 1), solution.u_at(k), solution.u_at(k + 1)
            out.append(abs(w_prev * u_prev + w_k * u_next - lam * u_k) / (1 + abs(lam * u_k)))
    return out


def max_residual_ulps(solution: RecurrenceSolution):
    """Largest recurrence residual in units of the target precision's roundoff."""
    values = residuals(solution)
    if not values:
        return mpmath.mpf(0)
    with mpmath.mp.workdps(solution.internal_dps):
        return max(values) / working_eps(solution.dps)


def _lagrange(nodes: Sequence[Any], values: Sequence[Any], x):
    total = 0
    for i, (xi, yi) in enumerate(zip(nodes, values)):
        term = yi
        for j, xj in enumerate(nodes):
            if j != i:
                term *= (x - xj) / (xi - xj)
        total += term
    return total


def interpolation_check(weights: Weights, n: int, nodes: Optional[Sequence[Any]] = None,
                        held_out: Any = None, dps: Optional[int] = None):
    """|p(held_out) - u_n(held_out)| where p interpolates lam -> u_n(lam) at n nodes.

    u_n is a polynomial of degree n-1 in lam, so n nodes determine it.
    """
    if n < 1:
        raise ParameterError(f"interpolation_check needs n >= 1, got {n}")
    dps = dps or weights.dps
    with mpmath.mp.workdps(dps):
        if nodes is None:
            nodes = [mpmath.mpf(j + 1) / (n + 1) * 3 - mpmath.mpf(1.5) for j in range(n)]
        if len(nodes) != n:
            raise ParameterError(f"degree check at n={n} needs exactly {n} nodes")
        held_out = mpmath.mpf("0.731") if held_out is None else held_out
        N = max(n, 2)
        values = [solve_recurrence(weights, x, N, dps=dps).u_at(n) for x in nodes]
        expected = solve_recurrence(weights, held_out, N, dps=dps).u_at(n)
        with mpmath.mp.workdps(2 * dps):
            return abs(_lagrange(nodes, values, held_out) - expected)


def parity_check(weights: Weights, lams: Sequence[Any], n_max: int = 50):
    """max |u_n(-lam) - (-1)^(n-1) u_n(lam)| over n <= n_max and the given lam."""
    worst = mpmath.mpf(0)
    for lam in lams:
        plus = solve_recurrence(weights, lam, n_max)
        minus = solve_recurrence(weights, -mpmath.mpc(lam), n_max)
        with mpmath.mp.workdps(plus.internal_dps):
            for k in range(1, n_max + 1):
                worst = max(worst, abs(minus.u_at(k) - (-1) ** (k - 1) * plus.u_at(k)))
    return worst


def conjugation_check(weights: Weights, lams: Sequence[Any], n_max: int = 50):
    """max |u_n(conj lam) - conj u_n(lam)| for real weights."""
    worst = mpmath.mpf(0)
    for lam in lams:
        lam = mpmath.mpc(lam)
        direct = solve_recurrence(weights, lam, n_max)
        conj = solve_recurrence(weights, mpmath.conj(lam), n_max)
        with mpmath.mp.workdps(direct.internal_dps):
            for k in range(1, n_max + 1):
                worst = max(worst, abs(conj.u_at(k) - mpmath.conj(direct.u_at(k))))
    return worst


# --- Hyp1: summability of 1/omega --------------------------------------------


def check_hyp1(weights: Weights, n_max: int, probe_model: Any = None) -> Certificate:
    """Partial sums of 1/omega_n combined with the asymptotic class.

    A finite partial sum never passes on its own; the verdict comes from the
    growth class (exponent > 1 or exponential => summable).
    """
    if n_max < 10:
        raise ParameterError(f"check_hyp1 needs n_max >= 10, got {n_max}")
    asym = weights.asympt_class
    if probe_model is not None:
        exponent = to_fraction(probe_model, "probe_model")
        asym = AsymptoticClass("power", f"n^{exponent}", exponent=exponent)
    lo = max(weights.first_index, 1)
    spec = getattr(weights, "spec", None)

    with mpmath.mp.workdps(weights.dps):
        partial = mpmath.mpf(0)
        for n in range(lo, n_max + 1):
            partial += 1 / weights.eval(n)

        details: Dict[str, Any] = {"partial_sum": num(partial), "asympt_class": asym.to_json()}
        summable = asym.reciprocal_summable
        witnesses: List[Witness] = []
        margin = None

        if summable and asym.growth == "exponential":
            rate = mpmath.mpf(asym.rate)
            tail = 1 / weights.eval(n_max + 1) / (1 - mpmath.exp(-rate))
            details["tail_bound"] = num(tail)
            margin = rate
            verdict = Verdict.PASS
        elif summable:
            e = mpmath.mpf(asym.exponent.numerator) / asym.exponent.denominator
            samples = [max(lo, n_max // 2 + j * (n_max // 16)) for j in range(9)]
            constant = max(mpmath.mpf(n) ** e / weights.eval(n) for n in samples)
            tail = constant * mpmath.mpf(n_max) ** (1 - e) / (e - 1)
            details["tail_bound"] = num(tail)
            details["tail_constant"] = num(constant)
            margin = e - 1
            verdict = Verdict.PASS
        elif summable is False:
            e = mpmath.mpf(asym.exponent.numerator) / asym.exponent.denominator
            probes = sorted({max(lo, 2), max(lo, n_max // 100), max(lo, n_max // 10), n_max})
            constant = min(mpmath.mpf(n) ** e / weights.eval(n) for n in probes)
            for n in probes:
                witnesses.append(Witness(n, 1 / weights.eval(n), constant * mpmath.mpf(n) ** (-e),
                                         note=f"1/omega_n >= c n^-{asym.exponent}, exponent <= 1"))
            details["comparison"] = f"1/omega_n >= c n^-{asym.exponent} with c={num(constant)}; divergent"
            margin = e - 1
            verdict = Verdict.FAIL
        else:
            details["reason"] = "asymptotic class unknown; partial sums alone cannot certify"
            verdict = Verdict.INCONCLUSIVE

    cert = Certificate(Hypothesis.HYP1, spec, weights.label, (lo, n_max), verdict,
                       margin=margin, witnesses=tuple(witnesses), details=details)
    logger.info(f"Hyp1 {weights.label}: {verdict.value}")
    return cert


# --- Hyp2: log-concavity ------------------------------------------------------


def check_hyp2(weights: Weights, n_range: Tuple[int, int]) -> Certificate:
    """omega_{n-1} omega_{n+1} <= omega_n^2 on n_range, exactly when exact forms exist."""
    n_lo, n_hi = n_range
    if n_lo < weights.first_index + 1 or n_hi < n_lo:
        raise ParameterError(
            f"check_hyp2 range must lie in n >= {weights.first_index + 1}, got {n_range}"
        )
    spec = getattr(weights, "spec", None)
    exact = weights.has_exact_forms
    witnesses: List[Witness] = []
    min_margin, min_at = None, n_lo
    violated = False

    with mpmath.mp.workdps(weights.dps):
        tol = config.ULP_TOLERANCE * working_eps(weights.dps)
        if exact:
            window = [weights.exact_form(n_lo - 1), weights.exact_form(n_lo)]
        else:
            window = [weights.eval(n_lo - 1), weights.eval(n_lo)]
        for n in range(n_lo, n_hi + 1):
            if exact:
                window.append(weights.exact_form(n + 1))
                lhs_sq = window[0].square() * window[2].square()
                rhs_sq = window[1].square() ** 2
                failed = lhs_sq > rhs_sq
                # 1 - omega_{n-1} omega_{n+1} / omega_n^2 from the exact squares
                margin = 1 - mpmath.sqrt(mpmath.mpf(lhs_sq.numerator) / lhs_sq.denominator
                                         / (mpmath.mpf(rhs_sq.numerator) / rhs_sq.denominator))
            else:
                window.append(weights.eval(n + 1))
                lhs, rhs = window[0] * window[2], window[1] ** 2
                margin = (rhs - lhs) / rhs
                failed = margin < -tol
                if abs(margin) <= tol:
                    margin = mpmath.mpf(0)
            if failed:
                violated = True
                if len(witnesses) < 5:
                    witnesses.append(Witness(n, weights.eval(n - 1) * weights.eval(n + 1),
                                             weights.eval(n) ** 2,
                                             note="omega_{n-1} omega_{n+1} > omega_n^2"))
            if min_margin is None or margin < min_margin:
                min_margin, min_at = margin, n
            window.pop(0)

        if not violated:
            witnesses.append(Witness(min_at, weights.eval(min_at - 1) * weights.eval(min_at + 1),
                                     weights.eval(min_at) ** 2, note="minimum slack"))

    verdict = Verdict.FAIL if violated else Verdict.PASS
    details = {"comparison": "exact" if exact else "floating", "min_slack_at": min_at}
    logger.info(f"Hyp2 {weights.label} on [{n_lo}, {n_hi}]: {verdict.value}")
    return Certificate(Hypothesis.HYP2, spec, weights.label, (n_lo, n_hi), verdict,
                       margin=min_margin, witnesses=tuple(witnesses), details=details)


# --- Hyp3 and the damping bound -------------------------------------------------


@dataclass
class DampingScan:
    n_lo: int
    n_hi: int
    lambda_abs: Any = None
    last_violation: Optional[int] = None
    alpha_best: Any = None
    alpha_at: Optional[int] = None
    alpha_lhs: Any = None
    min_margin: Any = None
    min_margin_at: Optional[int] = None
    damping_at_end: Any = None
    trend_samples: List[Tuple[int, Any]] = field(default_factory=list)

    @property
    def threshold_n0(self) -> Optional[int]:
        n0 = self.n_lo if self.last_violation is None else self.last_violation + 1
        return n0 if n0 <= self.n_hi else None


def _trend_points(lo: int, hi: int) -> List[int]:
    lo = max(lo, 1)
    if hi <= lo:
        return [hi]
    count = config.TREND_SAMPLES
    ratio = (hi / lo) ** (1 / (count - 1))
    return sorted({min(hi, int(round(lo * ratio ** j))) for j in range(count)} | {hi})


def damping_value(weights: Weights, gamma: DominatingSequence, lambda_abs, n: int):
    """(|lam|/w_n)(g_{n+1}/g_n) + (w_{n-1}/w_n)(g_{n+1}/g_{n-1}) at basis index n."""
    w_prev, w_n = weights.eval(n - 1), weights.eval(n)
    g_prev, g_n, g_next = gamma(n - 1), gamma(n), gamma(n + 1)
    return (mpmath.mpf(lambda_abs) / w_n) * (g_next / g_n) + (w_prev / w_n) * (g_next / g_prev)


def _damping_scans(weights: Weights, gamma: DominatingSequence, lambda_values: Sequence[Any],
                   n_lo: int, n_hi: int, strict: bool) -> List[DampingScan]:
    """One pass over [n_lo, n_hi] for every |lam|; weights and gamma are evaluated once per n.

    The damping bound is |lam| a_n + b_n with a_n = g_{n+1} / (w_n g_n) and
    b_n = (w_{n-1}/w_n)(g_{n+1}/g_{n-1}).
    """
    scans = [DampingScan(n_lo, n_hi, lambda_abs=lam) for lam in lambda_values]
    trend_set = set(_trend_points(max(n_lo, n_hi // 10), n_hi))
    with mpmath.mp.workdps(weights.dps):
        lams = [mpmath.mpf(lam) for lam in lambda_values]
        alpha_best = alpha_at = alpha_lhs = None
        w = [weights.eval(n_lo - 1), weights.eval(n_lo)]
        g = [gamma(n_lo - 1), gamma(n_lo)]
        margins: List[Dict[int, Any]] = [{} for _ in scans]
        iterator = tqdm(range(n_lo, n_hi + 1), desc=f"damping {weights.label}",
                        disable=not config.SHOW_PROGRESS, leave=False)
        for n in iterator:
            g.append(gamma(n + 1))
            w_prev, w_n = w
            g_prev, g_n, g_next = g
            # lower bound omega_n gamma_n / gamma_{n+1} >= n^(1+alpha)
            lhs = w_n * g_n / g_next
            if n >= 2:
                alpha = mpmath.log(lhs) / mpmath.log(n) - 1
                if alpha_best is None or alpha < alpha_best:
                    alpha_best, alpha_at, alpha_lhs = alpha, n, lhs
            a = 1 / lhs
            b = (w_prev / w_n) * (g_next / g_prev)
            for scan, lam, kept in zip(scans, lams, margins):
                damping = lam * a + b
                if damping >= 1 if strict else damping > 1:
                    scan.last_violation = n
                    kept.clear()
                else:
                    kept[n] = 1 - damping
                if n in trend_set:
                    scan.trend_samples.append((n, damping))
                scan.damping_at_end = damping
            g.pop(0)
            w = [w_n, weights.eval(n + 1)]
        for scan, kept in zip(scans, margins):
            scan.alpha_best, scan.alpha_at, scan.alpha_lhs = alpha_best, alpha_at, alpha_lhs
            if kept:
                at = min(kept, key=lambda k: kept[k])
                scan.min_margin, scan.min_margin_at = kept[at], at
    return scans


def _trend_ok(scan: DampingScan) -> Tuple[bool, str]:
    """Damping values eventually nonincreasing, or n*(1 - D_n) nondecreasing, on the tail samples."""
    n0 = scan.threshold_n0
    samples = [(n, d) for n, d in scan.trend_samples if n0 is not None and n >= n0]
    if len(samples) < 3:
        return False, "too few tail samples beyond threshold"
    values = [d for _, d in samples]
    if all(b <= a for a, b in zip(values, values[1:])):
        return True, "damping nonincreasing on tail samples"
    scaled = [n * (1 - d) for n, d in samples]
    if all(b >= a for a, b in zip(scaled, scaled[1:])) and scaled[0] > 0:
        return True, "n*(1 - damping) nondecreasing and positive on tail samples"
    return False, "no monotone tail trend"


def _hyp3_certificate(hypothesis: Hypothesis, weights: Weights, gamma: DominatingSequence,
                      scan: DampingScan) -> Certificate:
    lambda_abs = scan.lambda_abs
    n_lo, n_hi = scan.n_lo, scan.n_hi
    spec = getattr(weights, "spec", None)
    trend, trend_note = _trend_ok(scan)
    n0 = scan.threshold_n0
    witnesses: List[Witness] = []
    details: Dict[str, Any] = {
        "gamma": gamma.name,
        "gamma_params": dict(gamma.params),
        "alpha_best": num(scan.alpha_best),
        "alpha_at": scan.alpha_at,
        "damping_at_end": num(scan.damping_at_end),
        "scaled_margins": [[n, num(n * (1 - d))] for n, d in scan.trend_samples],
        "trend": trend_note,
        "gamma_square_summable": gamma.summable,
        "strict": hypothesis is Hypothesis.ALT311,
    }

    with mpmath.mp.workdps(weights.dps):
        if scan.alpha_best is not None and scan.alpha_best <= 0:
            witnesses.append(Witness(scan.alpha_at, scan.alpha_lhs, mpmath.mpf(scan.alpha_at),
                                     note="omega_n gamma_n / gamma_{n+1} < n^(1+alpha) for every alpha > 0"))
            verdict = Verdict.FAIL
        elif n0 is None:
            witnesses.append(Witness(n_hi, scan.damping_at_end, mpmath.mpf(1),
                                     note="damping bound not below 1 at the end of the range"))
            verdict = Verdict.FAIL
        elif trend and gamma.summable:
            verdict = Verdict.PASS
        else:
            verdict = Verdict.INCONCLUSIVE
            if not gamma.summable:
                details["reason"] = "summability of 1/gamma^2 unknown"
            else:
                details["reason"] = trend_note

        if verdict is not Verdict.FAIL and scan.min_margin_at is not None:
            witnesses.append(Witness(scan.min_margin_at, 1 - scan.min_margin, mpmath.mpf(1),
                                     note="smallest damping slack beyond threshold"))
        if scan.last_violation is not None and verdict is not Verdict.FAIL:
            witnesses.append(Witness(scan.last_violation,
                                     damping_value(weights, gamma, lambda_abs, scan.last_violation),
                                     mpmath.mpf(1), note="last violation before threshold"))

    logger.info(f"{hypothesis.value} {weights.label} |lam|={lambda_abs}: {verdict.value}, n0={n0}")
    return Certificate(hypothesis, spec, weights.label, (n_lo, n_hi), verdict,
                       margin=scan.min_margin, threshold_n0=n0, witnesses=tuple(witnesses),
                       lambda_abs=str(lambda_abs), details=details)


def _hyp3_like(hypothesis: Hypothesis, weights: Weights, gamma, lambda_values: Sequence[Any],
               n_range: Tuple[int, int]) -> List[Certificate]:
    gamma = make_gamma(gamma, weights)
    n_lo, n_hi = n_range
    min_lo = max(3, weights.first_index + 1, gamma.first_index + 1)
    if n_lo < min_lo or n_hi <= n_lo:
        raise ParameterError(f"{hypothesis.value} range must start at n >= {min_lo}, got {n_range}")
    strict = hypothesis is Hypothesis.ALT311
    scans = _damping_scans(weights, gamma, lambda_values, n_lo, n_hi, strict)
    return [_hyp3_certificate(hypothesis, weights, gamma, scan) for scan in scans]


def check_hyp3(weights: Weights, gamma, lambda_abs, n_range: Tuple[int, int]) -> Certificate:
    """Lower bound omega_n gamma_n/gamma_{n+1} >= n^(1+alpha), the damping bound <= 1
    from a threshold on, and summability of 1/gamma_n^2."""
    return _hyp3_like(Hypothesis.HYP3, weights, gamma, [lambda_abs], n_range)[0]


def check_alt311(weights: Weights, gamma, lambda_abs, n_range: Tuple[int, int]) -> Certificate:
    """Strict damping bound < 1 eventually, plus summability of 1/gamma_n^2."""
    return _hyp3_like(Hypothesis.ALT311, weights, gamma, [lambda_abs], n_range)[0]


def check_damping_grid(hypothesis: Union[Hypothesis, str], weights: Weights, gamma,
                       lambda_values: Sequence[Any], n_range: Tuple[int, int]) -> List[Certificate]:
    """Hyp3 or Alt311 certificates for several |lam| from a single scan of the range."""
    hypothesis = Hypothesis(hypothesis)
    if hypothesis not in (Hypothesis.HYP3, Hypothesis.ALT311):
        raise ParameterError(f"damping grid covers Hyp3 and Alt311, not {hypothesis.value}")
    return _hyp3_like(hypothesis, weights, gamma, lambda_values, n_range)


def certify_theta_threshold(weights: WeightSequence, beta_prime, lambda_abs,
                            n_extra: int = 1000) -> Certificate:
    """Closed-form threshold of the damping bound for theta weights.

    With omega_{n,p} = K exp(r n), r = (2p+1) mu, and gamma_n growing like
    exp(r n / beta'), the damping bound equals m exp(-r n) + C with

        m = |lam| exp(r / beta') / K,   C = exp(-r (1 - 2/beta'))

    so it is below 1 for n > log(m / (1 - C)) / r. The inequality is checked
    over the next `n_extra` indices and compared with the direct damping
    values.
    """
    spec = getattr(weights, "spec", None)
    if spec is None or spec.kind is not SpaceKind.THETA:
        raise ParameterError("certify_theta_threshold needs ThetaFockBargmann weights")
    gamma = make_gamma("theta_geometric", weights, beta_prime=beta_prime)
    p = spec.p
    with mpmath.mp.workdps(weights.dps):
        bp = mpmath.mpf(beta_prime)
        lam = mpmath.mpf(lambda_abs)
        r = (2 * p + 1) * spec.mu()
        K = weights.eval(p) / mpmath.exp(r * p)
        m_beta = lam * mpmath.exp(r / bp) / K
        c_beta = mpmath.exp(-r * (1 - 2 / bp))
        x = mpmath.log(m_beta / (1 - c_beta)) / r
        n_star = int(mpmath.floor(x)) + 1
        n0 = max(n_star, p + 1, gamma.first_index + 1)

        tol = mpmath.mpf(10) ** (-(weights.dps - 10))
        worst_closed, worst_gap = None, mpmath.mpf(0)
        witnesses: List[Witness] = []
        for n in range(n0, n0 + n_extra + 1):
            closed = m_beta * mpmath.exp(-r * n) + c_beta
            direct = damping_value(weights, gamma, lam, n)
            worst_gap = max(worst_gap, abs(closed - direct))
            if worst_closed is None or closed > worst_closed[1]:
                worst_closed = (n, closed)
            if closed >= 1 and len(witnesses) < 5:
                witnesses.append(Witness(n, closed, mpmath.mpf(1), note="closed-form bound not below 1"))
        consistent = worst_gap <= tol
        sharp = None
        if n_star - 1 >= p + 1:
            sharp = bool(m_beta * mpmath.exp(-r * (n_star - 1)) + c_beta >= 1)

        if witnesses:
            verdict = Verdict.FAIL
        elif not consistent:
            verdict = Verdict.INCONCLUSIVE
        else:
            verdict = Verdict.PASS
            witnesses.append(Witness(worst_closed[0], worst_closed[1], mpmath.mpf(1),
                                     note="largest closed-form value beyond threshold"))
        margin = 1 - worst_closed[1]
        details = {
            "m_beta": num(m_beta),
            "C_beta": num(c_beta),
            "prefactor_K": num(K),
            "rate": num(r),
            "beta_prime": str(beta_prime),
            "closed_form_threshold": num(x),
            "n_star": n_star,
            "threshold_sharp": sharp,
            "max_gap_to_direct": num(worst_gap),
            "consistent_with_direct": consistent,
            "gamma": gamma.name,
        }
    logger.info(f"theta threshold {weights.label} |lam|={lambda_abs}: n0={n0}, {verdict.value}")
    return Certificate(Hypothesis.THETA_THRESHOLD, spec, weights.label, (n0, n0 + n_extra), verdict,
                       margin=margin, threshold_n0=n0, witnesses=tuple(witnesses),
                       lambda_abs=str(lambda_abs), details=details)


# --- l2 certification of a computed solution ----------------------------------------


@dataclass
class L2Report:
    M: Any
    M_at: int
    locked: bool
    threshold_n0: Optional[int]
    partial_sum: Any
    tail_bound: Any
    message: str
    hyp3: Optional[Certificate] = None

    def to_json(self) -> Dict[str, Any]:
        return {
            "M": num(self.M),
            "M_at": self.M_at,
            "locked": self.locked,
            "threshold_n0": self.threshold_n0,
            "partial_sum": num(self.partial_sum),
            "tail_bound": num(self.tail_bound) if self.tail_bound is not None else None,
            "message": self.message,
            "hyp3": self.hyp3.to_json() if self.hyp3 is not None else None,
        }


def certify_l2(solution: RecurrenceSolution, gamma=None, n_check: Optional[int] = None) -> L2Report:
    """Smallest M with |u_n| <= M/gamma_n on the computed range, and whether the
    damping induction locks in so the bound holds for every larger n."""
    weights = solution.weights
    gamma = make_gamma(gamma or config.DEFAULT_GAMMA, weights)
    with mpmath.mp.workdps(solution.internal_dps):
        M, M_at = mpmath.mpf(0), None
        for k in range(1, solution.N + 1):
            n = solution.basis_index(k)
            if n < gamma.first_index or gamma(n) <= 0:
                continue
            value = abs(solution.u_at(k)) * gamma(n)
            if M_at is None or value > M:
                M, M_at = value, n
        partial = solution.tail_partial_sums[-1]

    n_last = solution.basis_index(solution.N)
    lo = max(3, weights.first_index + 1, gamma.first_index + 1)
    hi = n_check or max(10 * n_last, 1000)
    hyp3 = check_hyp3(weights, gamma, abs(solution.lam), (lo, hi))
    n0 = hyp3.threshold_n0
    locked = hyp3.verdict is Verdict.PASS and n0 is not None and n0 <= n_last
    tail = None
    if locked and gamma.tail_sq_sum is not None:
        with mpmath.mp.workdps(solution.internal_dps):
            tail = M ** 2 * gamma.tail_sq_sum(n_last)
        message = f"induction locks at n0={n0}; |u_n| <= M/gamma_n for all n >= {n0 - 1}"
    elif hyp3.verdict is Verdict.FAIL:
        message = f"certification impossible: {hyp3.witnesses[0].note} (n={hyp3.witnesses[0].n})"
    elif n0 is not None and n0 > n_last:
        message = f"damping locks at n0={n0}, beyond the computed range ending at {n_last}"
    else:
        message = f"damping bound holds on the range but is not certified: {hyp3.details.get('reason')}"
    logger.info(f"certify_l2 {weights.label} lam={solution.lam}: {message}")
    return L2Report(M=M, M_at=M_at, locked=locked, threshold_n0=n0, partial_sum=partial,
                    tail_bound=tail, message=message, hyp3=hyp3)


@dataclass
class TruncationReport:
    N: int
    interior_residual_ulps: Any
    boundary_residual: Any
    backward_error: Any
    certified_bound: Any
    locked: bool

    def to_json(self) -> Dict[str, Any]:
        return {
            "N": self.N,
            "interior_residual_ulps": num(self.interior_residual_ulps),
            "boundary_residual": num(self.boundary_residual),
            "backward_error": num(self.backward_error),
            "certified_bound": num(self.certified_bound) if self.certified_bound is not None else None,
            "locked": self.locked,
        }


def truncation_report(weights: Weights, lam, N: int, gamma=None,
                      n_check: Optional[int] = None) -> TruncationReport:
    """Residual picture of the N-term eigenvector of the Jacobi model.

    The boundary residual -w_N u_{N+1} grows with the weights; the backward
    error |u_{N+1}| = |residual| / w_N is what the gamma bound controls.
    """
    solution = solve_recurrence(weights, lam, N)
    l2 = certify_l2(solution, gamma, n_check=n_check)
    gamma = make_gamma(gamma or config.DEFAULT_GAMMA, weights)
    n_last = solution.basis_index(N)
    with mpmath.mp.workdps(solution.internal_dps):
        w_last = weights.with_dps(solution.internal_dps).eval(n_last)
        boundary = -w_last * solution.u_next
        backward = abs(solution.u_next)
        bound = l2.M / gamma(n_last + 1) if l2.locked else None
    return TruncationReport(N=N, interior_residual_ulps=max_residual_ulps(solution),
                            boundary_residual=boundary, backward_error=backward,
                            certified_bound=bound, locked=l2.locked)
