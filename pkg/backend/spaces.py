"""Function-space layer: basis functions, quadrature inner products, kernels.

Measures (normalized so the bases below are orthonormal):

    ClassicBargmann      (1/pi) exp(-|z|^2) dxdy
    GeneralizedBargmann  beta / (2 pi Gamma(2/beta)) exp(-|z|^beta) dxdy
    PoincareDisk         (2nu - 1)/pi (1 - |z|^2)^(2nu - 2) dxdy

The raw disk form integrates against (1 - |z|^2)^(2nu-2) dt dtheta with
t = |z|^2, i.e. twice the Lebesgue measure; see DISK_NORM_EXPLAINED.md.
Quadrature runs in double precision with numpy/scipy; closed-form oracles
use mpmath.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Optional, Sequence, Union

import mpmath
import numpy as np
import pandas as pd
from numpy.polynomial import polynomial as P
from scipy.special import gammaincc, gammaln, roots_genlaguerre, roots_jacobi

from backend import config
from backend.exceptions import (
    EvaluationRangeError,
    ParameterError,
    QuadratureError,
    TruncationError,
)
from backend.operators import VectorState, eigenvector_Hp
from backend.weights import (
    SpaceKind,
    SpaceSpec,
    gamma_factorial,
    gamma_ratio,
    make_weights,
    to_fraction,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[complex, np.ndarray]


def _beta_of(spec: SpaceSpec) -> float:
    if spec.kind is SpaceKind.CLASSIC:
        return 2.0
    if spec.kind is SpaceKind.GENERALIZED:
        return float(spec.beta)
    raise ParameterError(f"{spec.kind.value} is not a plane space")


def _log_norm_const(spec: SpaceSpec, n: int) -> float:
    """log of the coefficient c_n with e_n(z) = c_n z^n."""
    if spec.kind is SpaceKind.DISK:
        two_nu = 2 * float(spec.nu)
        return 0.5 * (gammaln(two_nu + n) - gammaln(two_nu) - gammaln(n + 1))
    a = 2.0 / _beta_of(spec)
    # [m_n]! = Gamma(a (n + 1)) / Gamma(a)
    return -0.5 * (gammaln(a * (n + 1)) - gammaln(a))


# --- basis functions ------------------------------------------------------------


@dataclass(frozen=True)
class BasisFunction:
    """e_n of a space, evaluated on numpy arrays of complex points."""

    space: SpaceSpec
    n: int

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 0:
            raise ParameterError(f"basis index must be a nonnegative integer, got {self.n!r}")

    @property
    def degree(self) -> Optional[int]:
        return None if self.space.kind is SpaceKind.THETA else self.n

    @property
    def coefficient(self) -> float:
        if self.space.kind is SpaceKind.THETA:
            raise ParameterError("theta basis functions are not monomials")
        return float(np.exp(_log_norm_const(self.space, self.n)))

    def eval(self, z: ArrayLike) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.space.kind is SpaceKind.THETA:
            return basis_eval_theta(self.n, self.space.alpha, self.space.nu, z)
        return self.coefficient * np.power(z, self.n)

    __call__ = eval

    def polynomial(self) -> "Polynomial":
        coeffs = np.zeros(self.n + 1, dtype=complex)
        coeffs[self.n] = self.coefficient
        return Polynomial(coeffs)


@dataclass(frozen=True)
class Polynomial:
    """sum_k c_k z^k with numpy coefficients (lowest degree first)."""

    coefficients: np.ndarray

    @classmethod
    def monomial(cls, n: int, scale: complex = 1.0) -> "Polynomial":
        coeffs = np.zeros(n + 1, dtype=complex)
        coeffs[n] = scale
        return cls(coeffs)

    @property
    def degree(self) -> int:
        nonzero = np.nonzero(self.coefficients)[0]
        return int(nonzero[-1]) if len(nonzero) else 0

    def __call__(self, z: ArrayLike) -> np.ndarray:
        return P.polyval(np.asarray(z, dtype=complex), self.coefficients)

    def derivative(self) -> "Polynomial":
        if len(self.coefficients) == 1:
            return Polynomial(np.zeros(1, dtype=complex))
        return Polynomial(P.polyder(self.coefficients))

    def times_z(self, power: int = 1) -> "Polynomial":
        return Polynomial(np.concatenate([np.zeros(power, dtype=complex), self.coefficients]))

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(P.polyadd(self.coefficients, other.coefficients))

    def __mul__(self, scale: complex) -> "Polynomial":
        return Polynomial(self.coefficients * scale)

    __rmul__ = __mul__


def disk_A(f: Polynomial) -> Polynomial:
    """A = d/dz."""
    return f.derivative()


def disk_A_star(f: Polynomial, nu) -> Polynomial:
    """A* = z^2 d/dz + 2 nu z."""
    return f.derivative().times_z(2) + f.times_z(1) * (2 * float(nu))


# --- theta basis ------------------------------------------------------------------


def basis_eval_theta(n: int, alpha, nu, z: ArrayLike) -> np.ndarray:
    """(2nu/pi)^(1/4) exp(nu z^2 / 2 - pi^2 (n+alpha)^2 / nu + 2 i pi (n+alpha) z).

    Raises:
        EvaluationRangeError: the real part of the exponent exceeds
            THETA_EXPONENT_LIMIT (large |Im z| or |Re z|).
    """
    nu_f, alpha_f = float(nu), float(alpha)
    if nu_f <= 0:
        raise ParameterError(f"theta basis needs nu > 0, got {nu}")
    z = np.asarray(z, dtype=complex)
    shift = n + alpha_f
    exponent = 0.5 * nu_f * z ** 2 - (np.pi ** 2 / nu_f) * shift ** 2 + 2j * np.pi * shift * z
    worst = float(np.max(exponent.real)) if exponent.size else 0.0
    if worst > config.THETA_EXPONENT_LIMIT:
        raise EvaluationRangeError(
            f"theta basis e_{n}: exponent real part {worst:.1f} exceeds {config.THETA_EXPONENT_LIMIT}"
        )
    return (2 * nu_f / np.pi) ** 0.25 * np.exp(exponent)


def theta_multiplication_check(n: int, alpha=0, nu=2 * np.pi, samples: Optional[Sequence[complex]] = None,
                               tolerance: float = 1e-10) -> Dict[str, Any]:
    """M e_n = w e_{n+1} pointwise with M(z) = exp(2 i pi z).

    The basis fixes w = exp(pi^2 (2n + 1 + 2 alpha) / nu); the report also
    gives its ratio to omega_n of the ThetaFockBargmann weights (p = 0).
    """
    if samples is None:
        samples = [0.1 + 0.05j, -0.3 + 0.2j, 0.25 - 0.1j, 0.5 + 0.0j, -0.15 - 0.25j]
    z = np.asarray(samples, dtype=complex)
    nu_f, alpha_f = float(nu), float(alpha)
    implied = np.exp(np.pi ** 2 * (2 * n + 1 + 2 * alpha_f) / nu_f)
    lhs = np.exp(2j * np.pi * z) * basis_eval_theta(n, alpha_f, nu_f, z)
    rhs = implied * basis_eval_theta(n + 1, alpha_f, nu_f, z)
    rel = np.abs(lhs - rhs) / np.maximum(np.abs(lhs), np.finfo(float).tiny)
    module_weight = float(make_weights(SpaceSpec.theta(nu, alpha=alpha)).eval(n))
    return {
        "n": n,
        "implied_weight": float(implied),
        "module_weight": float(module_weight),
        "ratio_to_module": float(implied / module_weight),
        "max_relative_error": float(np.max(rel)),
        "holds": bool(np.max(rel) <= tolerance),
    }


def theta_quasi_periodicity(n: int, alpha=0, nu=2 * np.pi,
                            samples: Optional[Sequence[complex]] = None) -> pd.DataFrame:
    """|e_n(z + 1)| / |e_n(z)| at sample points (report only)."""
    if samples is None:
        samples = [0.0, 0.2 + 0.1j, -0.4 + 0.3j, 0.7 - 0.2j]
    z = np.asarray(samples, dtype=complex)
    ratio = np.abs(basis_eval_theta(n, alpha, nu, z + 1)) / np.abs(basis_eval_theta(n, alpha, nu, z))
    return pd.DataFrame({"x": z.real, "y": z.imag, "ratio": ratio,
                         "lattice_model": np.exp(float(nu) * (z.real + 0.5))})


# --- quadrature ---------------------------------------------------------------------


class QuadratureDomain(str, Enum):
    PLANE = "Plane"
    DISK = "Disk"
    STRIP = "Strip"


@dataclass(frozen=True)
class QuadratureRule:
    """Radial x angular product rule for the normalized measure of `space`.

    Exact for z^n conj(z)^m with n + m <= order when `radial_exact` holds.
    Plane rules with non-integer 2/beta integrate t^(n/beta) inexactly; the
    order then only bounds the angular aliasing.
    `raw_factor` converts normalized integrals to the raw form.
    """

    domain: QuadratureDomain
    space: SpaceSpec
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    radial_nodes: int
    angular_nodes: int
    order: int
    raw_factor: float
    cutoff: Optional[float] = None
    truncation_bound: float = 0.0
    radial_exact: bool = True

    def coarsened(self) -> "QuadratureRule":
        radial = max(2, (3 * self.radial_nodes) // 4)
        angular = max(4, (3 * self.angular_nodes) // 4)
        return make_rule(self.space, radial, angular)

    def integrate(self, values: np.ndarray) -> complex:
        return complex(np.sum(self.weights * values))


def _angular(angular: int):
    theta = 2 * np.pi * np.arange(angular) / angular
    return np.exp(1j * theta), 1.0 / angular


def disk_rule(nu, radial: int = config.DEFAULT_RADIAL_NODES,
              angular: int = config.DEFAULT_ANGULAR_NODES, space: Optional[SpaceSpec] = None) -> QuadratureRule:
    """Gauss-Jacobi in t = r^2 with weight (1 - t)^(2nu-2), trapezoid in theta."""
    nu_f = float(nu)
    if nu_f <= 0.5:
        raise QuadratureError(f"disk quadrature needs nu > 1/2, got {nu}")
    a = 2 * nu_f - 2
    x, w = roots_jacobi(radial, a, 0.0)
    t = (x + 1) / 2
    radial_w = w * 2.0 ** (-a - 1) * (2 * nu_f - 1)
    phase, ang_w = _angular(angular)
    nodes = (np.sqrt(t)[:, None] * phase[None, :]).ravel()
    weights = (radial_w[:, None] * ang_w * np.ones(angular)[None, :]).ravel()
    return QuadratureRule(QuadratureDomain.DISK, space or SpaceSpec.disk(nu), nodes, weights,
                          radial, angular, order=min(4 * radial - 2, angular - 1),
                          raw_factor=2 * np.pi / (2 * nu_f - 1))


def plane_rule(beta, radial: int = config.DEFAULT_RADIAL_NODES,
               angular: int = config.DEFAULT_ANGULAR_NODES, space: Optional[SpaceSpec] = None) -> QuadratureRule:
    """Generalized Gauss-Laguerre in t = r^beta, trapezoid in theta.

    The cutoff is the largest node radius; the reported truncation bound is
    the normalized mass beyond it, Gamma(2/beta, R^beta) / Gamma(2/beta).
    """
    beta_f = float(beta)
    if beta_f <= 0:
        raise QuadratureError(f"plane quadrature needs beta > 0, got {beta}")
    a = 2.0 / beta_f
    t, w = roots_genlaguerre(radial, a - 1)
    radial_w = w / np.exp(gammaln(a))
    phase, ang_w = _angular(angular)
    r = t ** (1.0 / beta_f)
    nodes = (r[:, None] * phase[None, :]).ravel()
    weights = (radial_w[:, None] * ang_w * np.ones(angular)[None, :]).ravel()
    if space is None:
        space = SpaceSpec.classic() if beta_f == 2.0 else SpaceSpec.generalized(beta)
    return QuadratureRule(QuadratureDomain.PLANE, space, nodes, weights, radial, angular,
                          order=min(4 * radial - 2, angular - 1),
                          raw_factor=2 * np.pi * np.exp(gammaln(a)) / beta_f,
                          cutoff=float(r.max()), truncation_bound=float(gammaincc(a, t.max())),
                          radial_exact=(2 / to_fraction(beta, "beta")).denominator == 1)


def make_rule(space: SpaceSpec, radial: int = config.DEFAULT_RADIAL_NODES,
              angular: int = config.DEFAULT_ANGULAR_NODES) -> QuadratureRule:
    if space.kind is SpaceKind.DISK:
        return disk_rule(space.nu, radial, angular, space=space)
    if space.kind in (SpaceKind.CLASSIC, SpaceKind.GENERALIZED):
        beta = space.beta if space.kind is SpaceKind.GENERALIZED else 2
        return plane_rule(beta, radial, angular, space=space)
    raise QuadratureError("strip quadrature for ThetaFockBargmann is not implemented")


@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    error: float

    def __complex__(self):
        return self.value

    @property
    def real(self) -> float:
        return self.value.real


def _same_space(a: SpaceSpec, b: SpaceSpec) -> bool:
    return a.with_p(0) == b.with_p(0)


def inner_product(space: SpaceSpec, f: Callable, g: Callable, rule: QuadratureRule,
                  normalized: bool = True, degree: Optional[int] = None) -> QuadratureResult:
    """<f, g> = integral of f conj(g) against the space measure.

    With `normalized=False` the raw form is returned (disk: the dt dtheta
    integral). The error estimate is rounding-level when the combined degree
    is within the rule order, otherwise the difference to a coarser rule.

    Raises:
        QuadratureError: combined degree above the rule order, or a rule
            built for a different space.
    """
    if space.kind is SpaceKind.THETA:
        raise QuadratureError("strip quadrature for ThetaFockBargmann is not implemented")
    if not _same_space(space, rule.space):
        raise QuadratureError(f"rule built for {rule.space.label}, not {space.label}")
    if degree is None:
        df, dg = getattr(f, "degree", None), getattr(g, "degree", None)
        degree = df + dg if df is not None and dg is not None else None
    if degree is not None and degree > rule.order:
        raise QuadratureError(f"rule order {rule.order} below combined degree {degree}")

    def integrate(r: QuadratureRule) -> complex:
        return r.integrate(np.asarray(f(r.nodes)) * np.conj(np.asarray(g(r.nodes))))

    value = integrate(rule)
    if degree is not None and rule.radial_exact:
        scale = float(np.sum(np.abs(rule.weights * f(rule.nodes) * np.conj(g(rule.nodes)))))
        error = 4 * len(rule.nodes) * np.finfo(float).eps * scale + rule.truncation_bound * abs(value)
    else:
        error = abs(value - integrate(rule.coarsened()))
    factor = 1.0 if normalized else rule.raw_factor
    return QuadratureResult(value * factor, float(error * factor))


def _real(value):
    q = to_fraction(value, "nu")
    return mpmath.mpf(q.numerator) / q.denominator


def monomial_norm_disk(n: int, nu) -> Any:
    """Raw norm of z^n on the disk: 2pi/(2nu-1) Gamma(2nu) Gamma(n+1) / Gamma(2nu+n)."""
    if n < 0:
        raise ParameterError(f"monomial degree must be >= 0, got {n}")
    with mpmath.mp.workdps(config.QUADRATURE_DPS):
        nu_mp = _real(nu)
        if nu_mp <= mpmath.mpf(1) / 2:
            raise ParameterError(f"monomial_norm_disk needs nu > 1/2, got {nu}")
        log_value = mpmath.loggamma(2 * nu_mp) + mpmath.loggamma(n + 1) - mpmath.loggamma(2 * nu_mp + n)
        return 2 * mpmath.pi / (2 * nu_mp - 1) * mpmath.exp(log_value)


def monomial_norm_raw(n: int, nu) -> Any:
    """The same raw norm from the t-integral directly: 2 pi B(n + 1, 2nu - 1)."""
    with mpmath.mp.workdps(config.QUADRATURE_DPS):
        nu_mp = _real(nu)
        return 2 * mpmath.pi * mpmath.beta(n + 1, 2 * nu_mp - 1)


def adjoint_check_disk(n: int, m: int, nu, rule: Optional[QuadratureRule] = None) -> float:
    """|<A z^n, z^m> - <z^n, A* z^m>| in the normalized disk inner product."""
    rule = rule or disk_rule(nu)
    if rule.order < n + m + 2:
        raise QuadratureError(f"adjoint check needs rule order >= {n + m + 2}, got {rule.order}")
    space = rule.space
    zn, zm = Polynomial.monomial(n), Polynomial.monomial(m)
    lhs = inner_product(space, disk_A(zn), zm, rule)
    rhs = inner_product(space, zn, disk_A_star(zm, nu), rule)
    return abs(lhs.value - rhs.value)


def adjoint_weight_check(n: int, nu, rule: Optional[QuadratureRule] = None) -> Dict[str, Any]:
    """<A* P_n, P_{n+1}> by quadrature against omega_n from the weights module."""
    rule = rule or disk_rule(nu)
    space = SpaceSpec.disk(nu)
    p_n = BasisFunction(space, n).polynomial()
    p_next = BasisFunction(space, n + 1).polynomial()
    value = inner_product(rule.space, disk_A_star(p_n, nu), p_next, rule).value
    omega = float(make_weights(space).eval(n))
    return {"n": n, "quadrature": value.real, "imag": value.imag, "omega": omega,
            "difference": abs(value - omega)}


# --- reproducing kernel ------------------------------------------------------------


def _log_factorial_m(spec: SpaceSpec, n: int):
    if spec.kind is SpaceKind.CLASSIC:
        return mpmath.loggamma(n + 1)
    return mpmath.log(gamma_factorial(n, spec.beta))


def kernel_eval(space: SpaceSpec, z, lam, N_terms: int,
                tolerance: float = config.KERNEL_TAIL_TOLERANCE) -> Dict[str, Any]:
    """Partial sum of e(z, lam) = sum_n z^n conj(lam)^n / [m_n]! with a tail bound.

    Raises:
        TruncationError: the tail bound exceeds `tolerance` (relative to the
            partial sum when that is larger than 1).
    """
    if space.kind not in (SpaceKind.CLASSIC, SpaceKind.GENERALIZED):
        raise ParameterError(f"kernel_eval is defined for plane spaces, not {space.kind.value}")
    if N_terms < 1:
        raise ParameterError(f"N_terms must be >= 1, got {N_terms}")
    with mpmath.mp.workdps(config.QUADRATURE_DPS):
        w = mpmath.mpc(z) * mpmath.conj(mpmath.mpc(lam))
        total = mpmath.mpc(0)
        for n in range(N_terms):
            total += w ** n / mpmath.exp(_log_factorial_m(space, n))
        x = abs(w)
        if x == 0:
            tail = mpmath.mpf(0)
        else:
            beta = space.beta if space.kind is SpaceKind.GENERALIZED else 2
            q = x / gamma_ratio(N_terms + 1, beta).value
            last = mpmath.exp(N_terms * mpmath.log(x) - _log_factorial_m(space, N_terms))
            tail = last / (1 - q) if q < 1 else mpmath.inf
        bound = tolerance * max(1, abs(total))
        if tail > bound:
            raise TruncationError(f"kernel tail bound {mpmath.nstr(tail, 5)} above {tolerance} "
                                  f"with {N_terms} terms at |z conj(lam)| = {mpmath.nstr(x, 5)}")
        return {"value": complex(total), "tail_bound": float(tail), "N_terms": N_terms}


def kernel_function(space: SpaceSpec, z, N_terms: int) -> Callable[[np.ndarray], np.ndarray]:
    """lam -> e(lam, z) = sum_n e_n(lam) conj(e_n(z)), truncated."""
    basis = [BasisFunction(space, n) for n in range(N_terms)]
    conj_at_z = [np.conj(b.eval(np.asarray(z))) for b in basis]

    def fn(points):
        return sum(c * b.eval(points) for b, c in zip(basis, conj_at_z))

    fn.degree = N_terms - 1
    return fn


def reproducing_check(space: SpaceSpec, z, phi_index: int = 2, N_terms: int = 20,
                      rule: Optional[QuadratureRule] = None) -> Dict[str, Any]:
    """<phi, e_z> by quadrature against phi(z) for phi = e_{phi_index}."""
    rule = rule or make_rule(space)
    phi = BasisFunction(space, phi_index)
    kernel = kernel_function(space, z, N_terms)
    result = inner_product(space, phi, kernel, rule)
    expected = complex(phi.eval(np.asarray(z)))
    return {"quadrature": result.value, "expected": expected,
            "difference": abs(result.value - expected), "error_estimate": result.error}


# --- functions from coefficient vectors -------------------------------------------


def as_function(space: SpaceSpec, v: VectorState) -> Callable[[np.ndarray], np.ndarray]:
    """z -> sum_n a_n e_n(z) for a coefficient vector over the basis of `space`."""
    values = [complex(c) for c in v.numeric()]
    if space.kind is SpaceKind.THETA:
        def theta_series(z):
            z = np.asarray(z, dtype=complex)
            return sum(a * basis_eval_theta(n, space.alpha, space.nu, z)
                       for n, a in zip(v.indices, values) if a != 0)
        return theta_series
    coeffs = np.zeros(v.top + 1, dtype=complex)
    for n, a in zip(v.indices, values):
        coeffs[n] = a * BasisFunction(space, n).coefficient
    return Polynomial(coeffs)


def sample_function(fn: Callable, xs: Sequence[float], ys: Sequence[float]) -> pd.DataFrame:
    """Grid samples in the (x, y, re, im) layout."""
    X, Y = np.meshgrid(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
    values = np.asarray(fn((X + 1j * Y).ravel()), dtype=complex)
    return pd.DataFrame({"x": X.ravel(), "y": Y.ravel(), "re": values.real, "im": values.imag})


def coherent_norm_check(lam, N: int = 80) -> Dict[str, Any]:
    """||phi_lam||^2 = exp(|lam|^2) for the classic p = 0 eigenvector of H."""
    weights = make_weights(SpaceSpec.classic(0), dps=config.QUADRATURE_DPS)
    phi = eigenvector_Hp(weights, lam, N)
    with mpmath.mp.workdps(config.QUADRATURE_DPS):
        computed = phi.norm_sq()
        expected = mpmath.exp(abs(mpmath.mpc(lam)) ** 2)
        difference = abs(expected - computed)
        return {"lambda": complex(mpmath.mpc(lam)), "N": N, "norm_sq": float(computed),
                "expected": float(expected), "difference": float(difference),
                "tail_bound": float(phi.tail_bound),
                "within_tail": bool(difference <= phi.tail_bound * (1 + mpmath.mpf(10) ** -10)
                                    + mpmath.mpf(10) ** (-config.QUADRATURE_DPS + 5))}
