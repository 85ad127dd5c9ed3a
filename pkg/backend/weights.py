"""Weight sequences of the four Fock-Bargmann-type spaces.

Every space contributes base weights omega_n; the shift of order p uses

    omega_{n,p} = omega_n * prod_{j=1..p} omega_{n-j}^2,   n >= p

which is the only composition used anywhere in the package. Indices are the
basis indices n of the space; for n < p the backward action is zero and
queries return ZERO_ACTION.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Union

import mpmath
import pandas as pd

from backend import config
from backend.exceptions import ParameterError, PrecisionError
from utils.exact import Surd

logger = logging.getLogger(__name__)

Number = Union[int, str, Fraction, float]


class SpaceKind(str, Enum):
    CLASSIC = "ClassicBargmann"
    GENERALIZED = "GeneralizedBargmann"
    THETA = "ThetaFockBargmann"
    DISK = "PoincareDisk"


class _ZeroAction:
    """Marker for omega_{n,p} with n < p: the shift annihilates that basis vector."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ZERO_ACTION"

    def __bool__(self):
        return False


ZERO_ACTION = _ZeroAction()


def to_fraction(value: Number, name: str) -> Fraction:
    """Parse a parameter at full precision; floats go through their repr."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ParameterError(f"{name} must be a number, got a bool")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ParameterError(f"{name} must be finite, got {value}")
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ParameterError(f"{name} is not a decimal or rational string: {value!r}") from exc
    raise ParameterError(f"{name} has unsupported type {type(value).__name__}")


def _mpf(value: Fraction):
    return mpmath.mpf(value.numerator) / value.denominator


def ulp_distance(a, b, dps: int):
    """|a - b| in units of the last place of b at `dps` digits."""
    with mpmath.mp.workdps(dps):
        if b == 0:
            return abs(a) / mpmath.ldexp(1, -mpmath.mp.prec)
        unit = mpmath.ldexp(1, mpmath.mag(b) - mpmath.mp.prec)
        return abs(a - b) / unit


@dataclass(frozen=True)
class SpaceSpec:
    """One of the four spaces plus its parameters."""

    kind: SpaceKind
    p: int = 0
    beta: Optional[Fraction] = None
    nu: Optional[Fraction] = None
    alpha: Optional[Fraction] = None

    def __post_init__(self):
        try:
            kind = SpaceKind(self.kind)
        except ValueError as exc:
            raise ParameterError(f"unknown space kind {self.kind!r}") from exc
        object.__setattr__(self, "kind", kind)

        if isinstance(self.p, bool) or not isinstance(self.p, int) or self.p < 0:
            raise ParameterError(f"p must be a nonnegative integer, got {self.p!r}")

        beta = to_fraction(self.beta, "beta") if self.beta is not None else None
        nu = to_fraction(self.nu, "nu") if self.nu is not None else None
        alpha = to_fraction(self.alpha, "alpha") if self.alpha is not None else None

        if kind is SpaceKind.GENERALIZED:
            if beta is None or beta <= 0:
                raise ParameterError(f"GeneralizedBargmann requires beta > 0, got {beta}")
        elif beta is not None:
            raise ParameterError(f"beta only applies to GeneralizedBargmann, not {kind.value}")

        if kind is SpaceKind.THETA:
            if nu is None or nu <= 0:
                raise ParameterError(f"ThetaFockBargmann requires nu > 0, got {nu}")
            if alpha is None:
                alpha = Fraction(0)
        elif alpha is not None:
            raise ParameterError(f"alpha only applies to ThetaFockBargmann, not {kind.value}")

        if kind is SpaceKind.DISK:
            # nu = 1 is the unweighted Bergman case and stays admissible
            if nu is None or nu < 1:
                raise ParameterError(f"PoincareDisk requires nu >= 1, got {nu}")
        if kind in (SpaceKind.CLASSIC, SpaceKind.GENERALIZED) and nu is not None:
            raise ParameterError(f"nu does not apply to {kind.value}")

        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def classic(cls, p: int = 0) -> "SpaceSpec":
        return cls(SpaceKind.CLASSIC, p=p)

    @classmethod
    def generalized(cls, beta: Number, p: int = 0) -> "SpaceSpec":
        return cls(SpaceKind.GENERALIZED, p=p, beta=beta)

    @classmethod
    def theta(cls, nu: Number, alpha: Number = 0, p: int = 0) -> "SpaceSpec":
        return cls(SpaceKind.THETA, p=p, nu=nu, alpha=alpha)

    @classmethod
    def theta_two_pi(cls, alpha: Number = 0, p: int = 0) -> "SpaceSpec":
        """Theta space with nu = 2*pi (mu = 1); nu is stored to 80 digits."""
        with mpmath.mp.workdps(90):
            two_pi = mpmath.nstr(2 * mpmath.pi, 80)
        return cls.theta(two_pi, alpha=alpha, p=p)

    @classmethod
    def disk(cls, nu: Number, p: int = 0) -> "SpaceSpec":
        return cls(SpaceKind.DISK, p=p, nu=nu)

    def with_p(self, p: int) -> "SpaceSpec":
        return SpaceSpec(self.kind, p=p, beta=self.beta, nu=self.nu, alpha=self.alpha)

    # --- derived constants (current mpmath precision) ---

    def mu(self):
        """mu = 2*pi/nu (theta only)."""
        self._require(SpaceKind.THETA, "mu")
        return 2 * mpmath.pi / _mpf(self.nu)

    def c_alpha(self):
        """c_alpha = exp(mu/2 + 2*alpha), equal to exp(pi/nu + 2*alpha)."""
        self._require(SpaceKind.THETA, "c_alpha")
        return mpmath.exp(self.mu() / 2 + 2 * _mpf(self.alpha))

    def _require(self, kind: SpaceKind, what: str):
        if self.kind is not kind:
            raise ParameterError(f"{what} is only defined for {kind.value}")

    @property
    def label(self) -> str:
        parts = [self.kind.value, f"p={self.p}"]
        for name in ("beta", "nu", "alpha"):
            value = getattr(self, name)
            if value is not None:
                parts.append(f"{name}={_fraction_text(value)}")
        return " ".join(parts)

    def to_json(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value, "p": self.p}
        for name in ("beta", "nu", "alpha"):
            value = getattr(self, name)
            if value is not None:
                data[name] = _fraction_text(value)
        return data

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "SpaceSpec":
        if not isinstance(data, dict):
            raise ParameterError("space must be an object")
        unknown = set(data) - {"kind", "p", "beta", "nu", "alpha"}
        if unknown:
            raise ParameterError(f"unknown space fields: {sorted(unknown)}")
        if "kind" not in data:
            raise ParameterError("space.kind is required")
        p = data.get("p", 0)
        if isinstance(p, str) and p.strip().isdigit():
            p = int(p)
        return cls(data["kind"], p=p, beta=data.get("beta"), nu=data.get("nu"),
                   alpha=data.get("alpha"))


def _fraction_text(value: Fraction) -> str:
    """Exact text form; decimal inputs round-trip as decimals."""
    if value.denominator == 1:
        return str(value.numerator)
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
    places = max(twos, fives)
    scaled = abs(value.numerator) * (10**places // value.denominator)
    digits = str(scaled).rjust(places + 1, "0")
    sign = "-" if value < 0 else ""
    return f"{sign}{digits[:-places]}.{digits[-places:]}".rstrip("0").rstrip(".")


@dataclass(frozen=True)
class AsymptoticClass:
    """Growth of omega_{n,p}: power n^exponent or exponential exp(rate*n)."""

    growth: str
    model: str
    exponent: Optional[Fraction] = None
    rate: Optional[str] = None
    constant: Optional[str] = None

    @property
    def is_unbounded(self) -> bool:
        if self.growth == "exponential":
            return True
        return self.growth == "power" and self.exponent is not None and self.exponent > 0

    @property
    def reciprocal_summable(self) -> Optional[bool]:
        """Whether sum 1/omega_n converges; None when the class is unknown."""
        if self.growth == "exponential":
            return True
        if self.growth in ("power", "bounded") and self.exponent is not None:
            return self.exponent > 1
        return None

    def to_json(self) -> Dict[str, Any]:
        data = {"growth": self.growth, "model": self.model}
        if self.exponent is not None:
            data["exponent"] = str(self.exponent)
        if self.rate is not None:
            data["rate"] = self.rate
        if self.constant is not None:
            data["constant"] = self.constant
        return data


UNKNOWN_CLASS = AsymptoticClass(growth="unknown", model="unknown")


class Estimate(NamedTuple):
    value: Any
    error: Any


# --- gamma ratios -----------------------------------------------------------


def _gamma_ratio_at(a, n: int, dps: int):
    with mpmath.mp.workdps(dps):
        return mpmath.rf(a * n, a)


def gamma_ratio(n: int, beta: Number, dps: Optional[int] = None,
                rel_tol: Optional[str] = None) -> Estimate:
    """m_n = Gamma(2(n+1)/beta) / Gamma(2n/beta) with an absolute error bound.

    When 2/beta is an integer the ratio is a finite rising factorial and the
    result is exact (m_n = n for beta = 2). Otherwise the ratio is computed at
    two guard levels and the difference is the error bound; the guard grows
    until the relative tolerance is met or MAX_DPS is reached.

    Args:
        n: index, n >= 0 (m_0 = 0 by convention).
        beta: exponent of the Gaussian-type weight, beta > 0.
        dps: working precision of the returned value.
        rel_tol: required relative accuracy (default GAMMA_RELATIVE_TOLERANCE).

    Returns:
        Estimate(value, error).
    """
    dps = dps or mpmath.mp.dps
    if isinstance(n, bool) or not isinstance(n, int) or n < 0:
        raise ParameterError(f"gamma_ratio needs an integer n >= 0, got {n!r}")
    beta_q = to_fraction(beta, "beta")
    if beta_q <= 0:
        raise ParameterError(f"gamma_ratio needs beta > 0, got {beta_q}")
    with mpmath.mp.workdps(dps):
        if n == 0:
            return Estimate(mpmath.mpf(0), mpmath.mpf(0))
        a = Fraction(2) / beta_q
        if a.denominator == 1:
            k = a.numerator
            value = 1
            for j in range(k):
                value *= k * n + j
            return Estimate(mpmath.mpf(value), mpmath.mpf(0))

        tol = mpmath.mpf(rel_tol or config.GAMMA_RELATIVE_TOLERANCE)
        guard = config.GAMMA_GUARD_DPS
        while dps + 2 * guard <= config.MAX_DPS:
            with mpmath.mp.workdps(dps + 2 * guard):
                a_mp = _mpf(a)
            coarse = _gamma_ratio_at(a_mp, n, dps + guard)
            fine = _gamma_ratio_at(a_mp, n, dps + 2 * guard)
            with mpmath.mp.workdps(dps + 2 * guard):
                error = abs(fine - coarse)
                ok = error <= tol * abs(fine)
            if ok:
                return Estimate(+fine, +error)
            logger.info(f"gamma_ratio(n={n}, beta={beta_q}): guard {guard} too small, retrying")
            guard *= 2
    raise PrecisionError(
        f"gamma_ratio(n={n}, beta={beta_q}) cannot reach relative tolerance "
        f"{rel_tol or config.GAMMA_RELATIVE_TOLERANCE} below MAX_DPS={config.MAX_DPS}"
    )


def gamma_factorial(n: int, beta: Number):
    """[m_n]! = m_1 ... m_n = Gamma(2(n+1)/beta) / Gamma(2/beta)."""
    a = 2 / _mpf(to_fraction(beta, "beta"))
    return mpmath.rf(a, a * n)


# --- base weights -----------------------------------------------------------


@lru_cache(maxsize=config.WEIGHT_CACHE_SIZE)
def _base_weight(spec: SpaceSpec, n: int, dps: int):
    with mpmath.mp.workdps(dps):
        if spec.kind is SpaceKind.CLASSIC:
            return mpmath.sqrt(n + 1)
        if spec.kind is SpaceKind.GENERALIZED:
            return mpmath.sqrt(gamma_ratio(n + 1, spec.beta, dps=dps).value)
        if spec.kind is SpaceKind.THETA:
            return spec.c_alpha() * mpmath.exp(spec.mu() * n)
        nu = _mpf(spec.nu)
        return mpmath.sqrt((n + 1) * (2 * nu + n))


def _base_exact(spec: SpaceSpec, n: int) -> Optional[Surd]:
    if spec.kind is SpaceKind.CLASSIC:
        return Surd.sqrt(n + 1)
    if spec.kind is SpaceKind.DISK:
        return Surd.sqrt((n + 1) * (2 * spec.nu + n))
    return None


@lru_cache(maxsize=config.WEIGHT_CACHE_SIZE)
def _composed_weight(spec: SpaceSpec, n: int, dps: int):
    exact = _composed_exact(spec, n)
    if exact is not None:
        return exact.to_mpf(dps)
    guard = dps + config.GUARD_DPS
    with mpmath.mp.workdps(guard):
        value = _base_weight(spec, n, guard)
        for j in range(1, spec.p + 1):
            value *= _base_weight(spec, n - j, guard) ** 2
    with mpmath.mp.workdps(dps):
        return +value


def _composed_exact(spec: SpaceSpec, n: int) -> Optional[Surd]:
    base = _base_exact(spec, n)
    if base is None:
        return None
    for j in range(1, spec.p + 1):
        base = base * Surd(_base_exact(spec, n - j).square())
    return base


def _asymptotic_class(spec: SpaceSpec) -> AsymptoticClass:
    p = spec.p
    if spec.kind is SpaceKind.CLASSIC:
        return AsymptoticClass("power", f"n^({p}+1/2)", exponent=Fraction(2 * p + 1, 2),
                               constant="1")
    if spec.kind is SpaceKind.GENERALIZED:
        exponent = Fraction(2 * p + 1) / spec.beta
        with mpmath.mp.workdps(30):
            a = 2 / _mpf(spec.beta)
            constant = mpmath.nstr(a ** (a * (2 * p + 1) / 2), 25)
        return AsymptoticClass("power", f"(2/beta)^((2p+1)/beta) n^((2p+1)/beta)",
                               exponent=exponent, constant=constant)
    if spec.kind is SpaceKind.THETA:
        with mpmath.mp.workdps(30):
            rate = mpmath.nstr((2 * p + 1) * spec.mu(), 25)
            constant = mpmath.nstr(spec.c_alpha() ** (2 * p + 1), 25)
        return AsymptoticClass("exponential", "c_alpha^(2p+1) exp((2p+1) mu n)", rate=rate,
                               constant=constant)
    return AsymptoticClass("power", f"n^(2*{p}+1)", exponent=Fraction(2 * p + 1), constant="1")


class WeightSequence:
    """Lazily evaluated omega_{n,p} for one SpaceSpec.

    `eval` and `exact_form` are pure functions of (spec, n, precision);
    memoization is keyed on all three so cached and fresh values agree.
    """

    def __init__(self, spec: SpaceSpec, dps: Optional[int] = None):
        self.spec = spec
        self.dps = dps or config.DEFAULT_DPS
        self.asympt_class = _asymptotic_class(spec)

    def __repr__(self):
        return f"WeightSequence({self.spec.label}, dps={self.dps})"

    def with_dps(self, dps: int) -> "WeightSequence":
        return WeightSequence(self.spec, dps=dps)

    @property
    def p(self) -> int:
        return self.spec.p

    @property
    def first_index(self) -> int:
        return self.spec.p

    @property
    def recurrence_offset(self) -> int:
        """Basis index of recurrence term u_k is k + recurrence_offset."""
        return self.spec.p - 1

    @property
    def label(self) -> str:
        return self.spec.label

    @property
    def has_exact_forms(self) -> bool:
        return self.spec.kind in (SpaceKind.CLASSIC, SpaceKind.DISK)

    def base(self, n: int):
        """Base weight omega_n (order 0)."""
        _check_index(n)
        return _base_weight(self.spec, n, self.dps)

    def eval(self, n: int):
        """omega_{n,p} at the sequence precision, or ZERO_ACTION for n < p."""
        _check_index(n)
        if n < self.spec.p:
            return ZERO_ACTION
        return _composed_weight(self.spec, n, self.dps)

    __call__ = eval

    def exact_form(self, n: int) -> Optional[Surd]:
        """omega_{n,p} = r*sqrt(s) exactly for classic and disk weights."""
        _check_index(n)
        if n < self.spec.p:
            return None
        return _composed_exact(self.spec, n)

    def composed(self, n: int):
        """omega_{n,p} by a route independent of `eval`.

        Classic/disk: product of base weights (eval goes through the exact
        forms). Generalized: sqrt(m_{n+1}) [m_n]! / [m_{n-p}]! as a rising
        factorial. Theta: c_alpha^(2p+1) exp((2p+1) mu n - mu p (p+1)).
        """
        _check_index(n)
        spec, p = self.spec, self.spec.p
        guard = self.dps + config.GUARD_DPS
        with mpmath.mp.workdps(guard):
            if spec.kind is SpaceKind.GENERALIZED:
                a = 2 / _mpf(spec.beta)
                value = mpmath.sqrt(gamma_ratio(n + 1, spec.beta, dps=guard).value)
                value *= mpmath.rf(a * (n - p + 1), a * p)
            elif spec.kind is SpaceKind.THETA:
                mu = spec.mu()
                value = spec.c_alpha() ** (2 * p + 1) * mpmath.exp((2 * p + 1) * mu * n - mu * p * (p + 1))
            else:
                value = _base_weight(spec, n, guard)
                for j in range(1, p + 1):
                    value *= _base_weight(spec, n - j, guard) ** 2
        with mpmath.mp.workdps(self.dps):
            return +value

    def values(self, n_lo: int, n_hi: int) -> List[Any]:
        return [self.eval(n) for n in range(n_lo, n_hi + 1)]

    def table(self, n_lo: int, n_hi: int) -> pd.DataFrame:
        rows = []
        for n in range(max(n_lo, self.first_index), n_hi + 1):
            exact = self.exact_form(n)
            rows.append({
                "n": n,
                "omega": mpmath.nstr(self.eval(n), 30),
                "exact_r": str(exact.r) if exact is not None else "",
                "exact_s": str(exact.s) if exact is not None else "",
            })
        return pd.DataFrame(rows, columns=["n", "omega", "exact_r", "exact_s"])

    def to_json(self) -> Dict[str, Any]:
        return {
            "spec": self.spec.to_json(),
            "asympt_class": self.asympt_class.to_json(),
            "offset": self.first_index,
            "dps": self.dps,
        }


class RawWeights:
    """User-supplied weights w_1, w_2, ... indexed from 1.

    Accepted wherever a WeightSequence is; the shift order is 0 and the first
    basis index is 1, so recurrence term u_k sits at basis index k.
    """

    p = 0
    first_index = 1
    recurrence_offset = 0
    spec = None

    def __init__(self, fn: Callable[[int], Any], label: str = "raw",
                 asympt_class: AsymptoticClass = UNKNOWN_CLASS,
                 exact: Optional[Callable[[int], Surd]] = None,
                 dps: Optional[int] = None):
        self._fn = fn
        self._exact = exact
        self.label = label
        self.asympt_class = asympt_class
        self.dps = dps or config.DEFAULT_DPS

    def __repr__(self):
        return f"RawWeights({self.label})"

    def with_dps(self, dps: int) -> "RawWeights":
        return RawWeights(self._fn, label=self.label, asympt_class=self.asympt_class,
                          exact=self._exact, dps=dps)

    @classmethod
    def constant(cls, value: Number = 1, dps: Optional[int] = None) -> "RawWeights":
        q = to_fraction(value, "weight")
        if q <= 0:
            raise ParameterError(f"weights must be positive, got {q}")
        return cls(lambda n: _mpf(q), label=f"constant {_fraction_text(q)}",
                   asympt_class=AsymptoticClass("bounded", "constant", exponent=Fraction(0)),
                   exact=lambda n: Surd(q), dps=dps)

    @classmethod
    def from_sequence(cls, values: Sequence[Number], label: str = "tabulated",
                      dps: Optional[int] = None) -> "RawWeights":
        table = [to_fraction(v, f"w_{k + 1}") if not isinstance(v, mpmath.mpf) else v
                 for k, v in enumerate(values)]

        def lookup(n):
            if n > len(table):
                raise ParameterError(f"{label} has {len(table)} weights, index {n} requested")
            v = table[n - 1]
            return _mpf(v) if isinstance(v, Fraction) else v

        return cls(lookup, label=label, dps=dps)

    @property
    def has_exact_forms(self) -> bool:
        return self._exact is not None

    def eval(self, n: int):
        if n < self.first_index:
            return ZERO_ACTION
        with mpmath.mp.workdps(self.dps):
            value = mpmath.mpf(self._fn(n))
        if value <= 0:
            raise ParameterError(f"{self.label}: weight w_{n} = {value} is not positive")
        return value

    __call__ = eval

    def base(self, n: int):
        return self.eval(n)

    def exact_form(self, n: int) -> Optional[Surd]:
        if self._exact is None or n < self.first_index:
            return None
        return self._exact(n)

    def to_json(self) -> Dict[str, Any]:
        return {"label": self.label, "asympt_class": self.asympt_class.to_json(),
                "offset": self.first_index, "dps": self.dps}


Weights = Union[WeightSequence, RawWeights]


def _check_index(n: int):
    if isinstance(n, bool) or not isinstance(n, int) or n < 0:
        raise ParameterError(f"weight index must be a nonnegative integer, got {n!r}")


def make_weights(spec: SpaceSpec, dps: Optional[int] = None) -> WeightSequence:
    """Weight sequence omega_{n,p} of `spec` (composition of base weights)."""
    weights = WeightSequence(spec, dps=dps)
    logger.debug(f"Built {weights!r}")
    return weights


# --- asymptotics --------------------------------------------------------------


@dataclass
class AsymptoticReport:
    label: str
    model: str
    rows: List[Dict[str, Any]] = field(default_factory=list)
    monotone: bool = True
    converging: bool = True
    flags: List[str] = field(default_factory=list)

    @property
    def limit_estimate(self):
        return self.rows[-1]["ratio"] if self.rows else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def to_json(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "model": self.model,
            "rows": [{k: (mpmath.nstr(v, 20) if isinstance(v, mpmath.mpf) else v)
                      for k, v in row.items()} for row in self.rows],
            "monotone": self.monotone,
            "converging": self.converging,
            "flags": list(self.flags),
        }


def _model_value(seq: WeightSequence, n: int):
    spec = seq.spec
    p = spec.p
    if spec.kind is SpaceKind.CLASSIC:
        return mpmath.mpf(n) ** (mpmath.mpf(2 * p + 1) / 2)
    if spec.kind is SpaceKind.GENERALIZED:
        a = 2 / _mpf(spec.beta)
        return (a * n) ** (a * (2 * p + 1) / 2)
    if spec.kind is SpaceKind.THETA:
        return spec.c_alpha() ** (2 * p + 1) * mpmath.exp((2 * p + 1) * spec.mu() * n)
    return mpmath.mpf(n) ** (2 * p + 1)


def _flag_sequence(values: Sequence[Any]) -> tuple[bool, bool]:
    diffs = [b - a for a, b in zip(values, values[1:])]
    monotone = all(d >= 0 for d in diffs) or all(d <= 0 for d in diffs)
    converging = all(abs(b) <= abs(a) for a, b in zip(diffs, diffs[1:]))
    return monotone, converging


def asymptotic_check(seq: WeightSequence, n_probe: Iterable[int]) -> AsymptoticReport:
    """Ratios omega_{n,p}/model(n) at the probes; irregularities are flagged, never raised."""
    probes = list(n_probe)
    report = AsymptoticReport(label=seq.label, model=seq.asympt_class.model)
    if probes != sorted(probes):
        report.flags.append("probes not sorted")
    if probes and probes[0] < seq.p + 1:
        report.flags.append(f"probe {probes[0]} below p+1={seq.p + 1}")
    with mpmath.mp.workdps(seq.dps):
        ratios = []
        for n in probes:
            if n < seq.p + 1:
                continue
            ratio = seq.eval(n) / _model_value(seq, n)
            ratios.append(ratio)
            report.rows.append({"n": n, "ratio": ratio, "deviation": abs(ratio - 1)})
        report.monotone, report.converging = _flag_sequence(ratios)
        if not report.monotone:
            report.flags.append("ratio not monotone across probes")
        if not report.converging:
            report.flags.append("ratio increments do not shrink")
        if any(not mpmath.isfinite(r) or r <= 0 for r in ratios):
            report.flags.append("ratio not finite and positive")
    return report


def m_deviation_report(beta: Number, probes: Sequence[int] = (100, 1000, 10000),
                       dps: Optional[int] = None) -> Dict[str, Any]:
    """Deviation |m_n / ((2/beta)^(2/beta) n^(2/beta)) - 1| over the probes.

    Reports the observed constant C = max n * deviation and whether the
    deviation decreases monotonically.
    """
    dps = dps or config.DEFAULT_DPS
    beta_q = to_fraction(beta, "beta")
    rows = []
    with mpmath.mp.workdps(dps):
        a = 2 / _mpf(beta_q)
        for n in probes:
            m_n = gamma_ratio(n, beta_q, dps=dps).value
            deviation = abs(m_n / ((a * n) ** a) - 1)
            rows.append({"n": n, "m_n": m_n, "deviation": deviation, "scaled": n * deviation})
        deviations = [row["deviation"] for row in rows]
        decreasing = all(b <= a_ for a_, b in zip(deviations, deviations[1:]))
        constant = max((row["scaled"] for row in rows), default=mpmath.mpf(0))
    return {"beta": beta_q, "rows": rows, "decreasing": decreasing, "observed_constant": constant}
