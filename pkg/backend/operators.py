"""Truncated models of H_p, H_p* and H_p + H_p*.

Coordinates are basis indices n = offset .. offset + N - 1 where offset is
the first index of the weight sequence (p, or 1 for raw weights). The
acting entries are

    BackwardShift   (H x)_n      = omega_n x_{n+1}
    ForwardShift    (H* x)_{n+1} = omega_n x_n
    JacobiSum       both, symmetric, zero diagonal

Every iterate carries a trusted window: the coordinates whose values agree
with the infinite operator applied to the infinite vector.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import mpmath
import pandas as pd

from backend import config
from backend.exceptions import (
    ConvergenceError,
    DimensionError,
    ParameterError,
    PreconditionError,
    TruncationError,
)
from backend.recurrence import (
    Certificate,
    Verdict,
    check_hyp1,
    check_hyp2,
    certify_l2,
    make_gamma,
    solve_recurrence,
    truncation_report,
    working_eps,
)
from backend.weights import Weights, to_fraction
from utils.exact import Surd
from utils.export import num

logger = logging.getLogger(__name__)

Coefficient = Union[Surd, Any]


class OperatorKind(str, Enum):
    BACKWARD = "BackwardShift"
    FORWARD = "ForwardShift"
    JACOBI = "JacobiSum"


def _value(c: Coefficient, dps: int):
    return c.to_mpf(dps) if isinstance(c, Surd) else c


# --- vectors ------------------------------------------------------------------


@dataclass(frozen=True)
class VectorState:
    """Coefficients a_n, n = basis_offset .. basis_offset + N - 1.

    `tail_bound` bounds sum_{n >= offset + N} |a_n|^2 of the infinite vector
    the truncation samples; 0 means finitely supported inside the truncation.
    Exact states hold Surd coefficients.
    """

    coefficients: Tuple[Coefficient, ...]
    basis_offset: int
    tail_bound: Any = None
    exact: bool = False
    dps: int = config.DEFAULT_DPS
    label: str = ""
    eigenvalue: Any = None
    boundary_residual: Any = None
    checks: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    @classmethod
    def basis(cls, n: int, N: int, basis_offset: int, exact: bool = True,
              dps: Optional[int] = None) -> "VectorState":
        """Basis vector P_n inside an N-coordinate truncation."""
        if not basis_offset <= n < basis_offset + N:
            raise DimensionError(f"P_{n} lies outside coordinates {basis_offset}..{basis_offset + N - 1}")
        zero, one = (Surd(0), Surd(1)) if exact else (mpmath.mpc(0), mpmath.mpc(1))
        coeffs = [zero] * N
        coeffs[n - basis_offset] = one
        return cls(tuple(coeffs), basis_offset, tail_bound=0, exact=exact,
                   dps=dps or config.DEFAULT_DPS, label=f"P_{n}")

    @classmethod
    def from_mapping(cls, values: Mapping[int, Any], N: int, basis_offset: int,
                     dps: Optional[int] = None, label: str = "") -> "VectorState":
        """Finitely supported vector from {n: a_n}; decimal strings parse exactly."""
        dps = dps or config.DEFAULT_DPS
        coeffs = [mpmath.mpc(0)] * N
        with mpmath.mp.workdps(dps):
            for n, a in values.items():
                n = int(n)
                if not basis_offset <= n < basis_offset + N:
                    raise DimensionError(
                        f"coefficient index {n} outside {basis_offset}..{basis_offset + N - 1}"
                    )
                if isinstance(a, (str, Fraction, int)):
                    q = to_fraction(a, f"a_{n}")
                    a = mpmath.mpf(q.numerator) / q.denominator
                coeffs[n - basis_offset] = mpmath.mpc(a)
        return cls(tuple(coeffs), basis_offset, tail_bound=0, dps=dps, label=label)

    @property
    def N(self) -> int:
        return len(self.coefficients)

    @property
    def top(self) -> int:
        return self.basis_offset + self.N - 1

    @property
    def indices(self) -> range:
        return range(self.basis_offset, self.basis_offset + self.N)

    def __getitem__(self, n: int) -> Coefficient:
        if self.basis_offset <= n <= self.top:
            return self.coefficients[n - self.basis_offset]
        return Surd(0) if self.exact else mpmath.mpc(0)

    def support(self) -> List[int]:
        return [n for n, a in zip(self.indices, self.coefficients) if a != 0]

    def numeric(self) -> List[Any]:
        with mpmath.mp.workdps(self.dps):
            return [mpmath.mpc(_value(a, self.dps)) for a in self.coefficients]

    def as_numeric(self) -> "VectorState":
        if not self.exact:
            return self
        return replace(self, coefficients=tuple(self.numeric()), exact=False)

    def norm_sq(self, window: Optional[Tuple[int, int]] = None):
        lo, hi = window or (self.basis_offset, self.top)
        with mpmath.mp.workdps(self.dps):
            total = mpmath.mpf(0)
            for n in range(max(lo, self.basis_offset), min(hi, self.top) + 1):
                total += abs(mpmath.mpc(_value(self[n], self.dps))) ** 2
            return total

    def norm(self, window: Optional[Tuple[int, int]] = None):
        with mpmath.mp.workdps(self.dps):
            return mpmath.sqrt(self.norm_sq(window))

    def distance(self, other: "VectorState", window: Optional[Tuple[int, int]] = None):
        """l2 distance on the common coordinates (or on `window`)."""
        lo = max(self.basis_offset, other.basis_offset)
        hi = max(self.top, other.top)
        if window is not None:
            lo, hi = max(lo, window[0]), min(hi, window[1])
        dps = max(self.dps, other.dps)
        with mpmath.mp.workdps(dps):
            total = mpmath.mpf(0)
            for n in range(lo, hi + 1):
                total += abs(mpmath.mpc(_value(self[n], dps)) - mpmath.mpc(_value(other[n], dps))) ** 2
            return mpmath.sqrt(total)

    def to_frame(self) -> pd.DataFrame:
        values = self.numeric()
        return pd.DataFrame({"n": list(self.indices),
                             "re": [v.real for v in values],
                             "im": [v.imag for v in values]})

    def to_json(self) -> Dict[str, Any]:
        if self.exact:
            coeffs = [a.to_json() for a in self.coefficients]
        else:
            coeffs = [num(a) for a in self.coefficients]
        data = {
            "label": self.label,
            "basis_offset": self.basis_offset,
            "N": self.N,
            "exact": self.exact,
            "coefficients": coeffs,
            "tail_bound": num(self.tail_bound) if self.tail_bound is not None else None,
            "checks": self.checks,
        }
        if self.eigenvalue is not None:
            data["eigenvalue"] = num(mpmath.mpc(self.eigenvalue))
        if self.boundary_residual is not None:
            data["boundary_residual"] = num(mpmath.mpc(self.boundary_residual))
        return data


# --- operators --------------------------------------------------------------------


@dataclass(frozen=True)
class TruncatedOperator:
    """Banded N x N model; `band[i]` is omega at basis index basis_offset + i."""

    kind: OperatorKind
    weights: Any = field(repr=False, compare=False)
    N: int
    basis_offset: int
    band: Tuple[Any, ...]
    exact_band: Optional[Tuple[Surd, ...]] = None
    dps: int = config.DEFAULT_DPS

    @property
    def bandwidth(self) -> int:
        return 1

    @property
    def top(self) -> int:
        return self.basis_offset + self.N - 1

    @property
    def label(self) -> str:
        return f"{self.kind.value}[{self.weights.label}, N={self.N}]"

    def weight(self, n: int, exact: bool = False):
        """Acting weight between coordinates n and n + 1."""
        i = n - self.basis_offset
        if not 0 <= i < self.N - 1:
            raise DimensionError(f"no acting entry at index {n} in {self.label}")
        return self.exact_band[i] if exact else self.band[i]

    def transpose(self) -> "TruncatedOperator":
        flipped = {OperatorKind.BACKWARD: OperatorKind.FORWARD,
                   OperatorKind.FORWARD: OperatorKind.BACKWARD}.get(self.kind, self.kind)
        return replace(self, kind=flipped)

    def with_dps(self, dps: int) -> "TruncatedOperator":
        if dps == self.dps:
            return self
        return build_operator(self.kind, self.weights.with_dps(dps), self.N)

    def entry(self, row: int, col: int):
        """Matrix entry at basis indices (row, col)."""
        zero = Surd(0) if self.exact_band is not None else mpmath.mpf(0)
        exact = self.exact_band is not None
        if col == row + 1 and self.kind in (OperatorKind.BACKWARD, OperatorKind.JACOBI):
            return self.weight(row, exact)
        if row == col + 1 and self.kind in (OperatorKind.FORWARD, OperatorKind.JACOBI):
            return self.weight(col, exact)
        return zero

    def to_dense(self) -> List[List[Any]]:
        idx = range(self.basis_offset, self.top + 1)
        return [[self.entry(r, c) for c in idx] for r in idx]

    def apply(self, v: VectorState) -> VectorState:
        """Truncated matrix-vector product; exact when both sides are exact."""
        if v.basis_offset != self.basis_offset or v.N != self.N:
            raise DimensionError(
                f"vector on {v.basis_offset}..{v.top} does not match {self.label}"
            )
        exact = v.exact and self.exact_band is not None and self.kind is not OperatorKind.JACOBI
        dps = max(self.dps, v.dps)
        x = list(v.coefficients) if exact else v.numeric()
        zero = Surd(0) if exact else mpmath.mpc(0)
        out = [zero] * self.N
        with mpmath.mp.workdps(dps):
            for i in range(self.N - 1):
                w = self.exact_band[i] if exact else self.band[i]
                if self.kind in (OperatorKind.BACKWARD, OperatorKind.JACOBI):
                    term = w * x[i + 1]
                    out[i] = term if exact else out[i] + term
                if self.kind in (OperatorKind.FORWARD, OperatorKind.JACOBI):
                    term = w * x[i]
                    out[i + 1] = term if exact else out[i + 1] + term
        return replace(v, coefficients=tuple(out), exact=exact, dps=dps,
                       label=f"{self.kind.value}({v.label})", eigenvalue=None,
                       boundary_residual=None, checks={})

    def power(self, v: VectorState, m: int) -> VectorState:
        if m < 0:
            raise ParameterError(f"operator power must be >= 0, got {m}")
        for _ in range(m):
            v = self.apply(v)
        return v

    def to_json(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "kind": self.kind.value,
            "weights": self.weights.to_json(),
            "N": self.N,
            "basis_offset": self.basis_offset,
            "bandwidth": self.bandwidth,
            "superdiagonal": [num(w) for w in self.band] if self.kind is not OperatorKind.FORWARD else [],
            "subdiagonal": [num(w) for w in self.band] if self.kind is not OperatorKind.BACKWARD else [],
        }
        if self.exact_band is not None:
            data["exact_band"] = [w.to_json() for w in self.exact_band]
        return data


def build_operator(kind: Union[OperatorKind, str], weights: Weights, N: int) -> TruncatedOperator:
    """Banded model of H_p, H_p* or H_p + H_p* on N coordinates.

    Raises:
        DimensionError: N < p + 2.
    """
    kind = OperatorKind(kind)
    if isinstance(N, bool) or not isinstance(N, int) or N < weights.p + 2:
        raise DimensionError(f"build_operator needs N >= p + 2 = {weights.p + 2}, got {N!r}")
    offset = weights.first_index
    band = tuple(weights.eval(n) for n in range(offset, offset + N - 1))
    exact_band = None
    if weights.has_exact_forms:
        exact_band = tuple(weights.exact_form(n) for n in range(offset, offset + N - 1))
    op = TruncatedOperator(kind, weights, N, offset, band, exact_band, dps=weights.dps)
    logger.debug(f"Built {op.label}")
    return op


# --- eigenvectors ---------------------------------------------------------------


def _geometric_tail(weights: Weights, lam, start: int, a_start, max_terms: int = 10**6):
    """Bound on sum_{n >= start} |a_n|^2 for a_{n+1} = a_n lam / omega_n.

    Sums explicitly until the ratio |lam| / omega_n drops below 1/2, then
    closes with a geometric series (omega is increasing).
    """
    lam_abs = abs(lam)
    total = mpmath.mpf(0)
    a = abs(a_start)
    for n in range(start, start + max_terms):
        q = lam_abs / weights.eval(n)
        if q < mpmath.mpf(1) / 2:
            return total + a ** 2 / (1 - q ** 2)
        total += a ** 2
        a *= q
    raise ConvergenceError(f"eigenvector tail of {weights.label} does not settle within {max_terms} terms")


def eigenvector_Hp(weights: Weights, lam, N: int) -> VectorState:
    """Truncation of phi_lam = sum_k a_k P_k, a_k = prod_{j=p}^{k-1} lam / omega_{j,p}.

    Left unnormalized (a_p = 1). The truncated relation H phi = lam phi is
    exact except at the last coordinate, where the dropped term
    omega_{n_last} a_{n_last + 1} is recorded as the boundary residual.
    """
    if not weights.asympt_class.is_unbounded:
        raise ConvergenceError(f"{weights.label}: weights do not grow, the eigenvector product does not decay")
    if N < weights.p + 2:
        raise DimensionError(f"eigenvector_Hp needs N >= p + 2 = {weights.p + 2}, got {N}")
    offset = weights.first_index
    dps = weights.dps
    with mpmath.mp.workdps(dps):
        lam = mpmath.mpc(lam)
        coeffs = [mpmath.mpc(1)]
        for n in range(offset, offset + N - 1):
            coeffs.append(coeffs[-1] * lam / weights.eval(n))
        n_last = offset + N - 1
        a_next = coeffs[-1] * lam / weights.eval(n_last)
        boundary = -weights.eval(n_last) * a_next
        tail = _geometric_tail(weights, lam, n_last + 1, a_next) if lam != 0 else mpmath.mpf(0)
    return VectorState(tuple(coeffs), offset, tail_bound=tail, dps=dps,
                       label=f"phi_lam[H, {weights.label}]", eigenvalue=lam,
                       boundary_residual=boundary)


def hypothesis_certificates(weights: Weights, n_hi: int) -> List[Certificate]:
    """Hyp1 and Hyp2 over [first_index + 1, n_hi]."""
    lo = weights.first_index + 1
    n_hi = max(n_hi, lo + 10)
    return [check_hyp1(weights, n_max=n_hi), check_hyp2(weights, (lo, n_hi))]


def eigenvector_sum(weights: Weights, lam, N: int, gamma=None, certify: bool = True,
                    certificates: Optional[Sequence[Certificate]] = None) -> VectorState:
    """Eigenvector of the Jacobi model from the recurrence u_n(lam).

    Certificates for Hyp1-Hyp3 are computed (or taken from `certificates`);
    when any does not pass a warning is logged and the vector is built
    anyway. The residual of (J - lam) sits on the last coordinate and equals
    -omega_{n_last} u_{N+1}.
    """
    solution = solve_recurrence(weights, lam, N)
    n_last = solution.basis_index(N)
    certs: List[Certificate] = list(certificates or [])
    tail = None
    if certify and not certs:
        l2 = certify_l2(solution, gamma)
        certs = hypothesis_certificates(weights, n_last) + [l2.hyp3]
        tail = l2.tail_bound
    failing = [c for c in certs if c.verdict is not Verdict.PASS]
    if failing:
        names = ", ".join(f"{c.hypothesis.value}={c.verdict.value}" for c in failing)
        logger.warning(f"eigenvector_sum {weights.label}: {names}; proceeding without certification")
    with mpmath.mp.workdps(solution.internal_dps):
        w_last = weights.with_dps(solution.internal_dps).eval(n_last)
        boundary = -w_last * solution.u_next
    checks = {"certificates": {c.hypothesis.value: c.verdict.value for c in certs},
              "confirmed_digits": solution.confirmed_digits}
    return VectorState(tuple(solution.u), weights.first_index, tail_bound=tail,
                       dps=solution.internal_dps, label=f"phi_lam[J, {weights.label}]",
                       eigenvalue=solution.lam, boundary_residual=boundary, checks=checks)


@dataclass
class EigenResidual:
    interior_max: Any
    interior_ulps: Any
    boundary: Any
    relative_norm: Any

    def to_json(self) -> Dict[str, Any]:
        return {k: num(mpmath.mpc(v)) if isinstance(v, mpmath.mpc) else num(v)
                for k, v in self.__dict__.items()}


def eigen_residual(op: TruncatedOperator, v: VectorState, lam=None,
                   target_dps: Optional[int] = None) -> EigenResidual:
    """(op - lam) v split into interior coordinates and the last one.

    Interior entries are scaled by 1 + |lam v_n| and expressed in units of the
    roundoff at `target_dps`.
    """
    lam = v.eigenvalue if lam is None else lam
    if lam is None:
        raise ParameterError("eigen_residual needs an eigenvalue")
    op = op.with_dps(max(op.dps, v.dps))
    image = op.apply(v.as_numeric())
    dps = image.dps
    with mpmath.mp.workdps(dps):
        lam = mpmath.mpc(lam)
        x, y = v.numeric(), image.numeric()
        interior = mpmath.mpf(0)
        for xi, yi in zip(x[:-1], y[:-1]):
            interior = max(interior, abs(yi - lam * xi) / (1 + abs(lam * xi)))
        boundary = y[-1] - lam * x[-1]
        ulps = interior / working_eps(target_dps or config.DEFAULT_DPS)
        relative = abs(boundary) / v.norm()
    return EigenResidual(interior, ulps, boundary, relative)


def spectrum_proxy(weights: Weights, N: int, radii: Sequence[Any] = ("0.5", "1", "2"),
                   phases: int = 4, gamma=None) -> pd.DataFrame:
    """Eigenvector residual picture at N and 2N for lam on a radius x phase grid.

    The backward error |u_{N+1}| must stay under the certified M/gamma_{N+1}
    wherever the damping bound locks in. `backward_ratio` is the measured
    |u_{2N+1}| / |u_{N+1}|; it is reported next to the gamma factor
    gamma_{N+1} / gamma_{2N+1} and need not stay below it pointwise.
    """
    gamma_seq = make_gamma(gamma or config.DEFAULT_GAMMA, weights)
    rows = []
    with mpmath.mp.workdps(weights.dps):
        for r in radii:
            for j in range(phases):
                lam = mpmath.mpf(r) * mpmath.expjpi(mpmath.mpf(2 * j) / phases)
                small = truncation_report(weights, lam, N, gamma_seq)
                large = truncation_report(weights, lam, 2 * N, gamma_seq)
                n1 = N + weights.recurrence_offset + 1
                n2 = 2 * N + weights.recurrence_offset + 1
                factor = gamma_seq(n1) / gamma_seq(n2)
                ratio = large.backward_error / small.backward_error if small.backward_error else mpmath.mpf(0)
                within = all(rep.backward_error <= rep.certified_bound
                             for rep in (small, large) if rep.certified_bound is not None)
                rows.append({
                    "lambda": num(lam, 12),
                    "interior_ulps_N": num(small.interior_residual_ulps, 6),
                    "interior_ulps_2N": num(large.interior_residual_ulps, 6),
                    "backward_error_N": num(small.backward_error, 12),
                    "backward_error_2N": num(large.backward_error, 12),
                    "certified_N": num(small.certified_bound, 12) if small.certified_bound is not None else "",
                    "certified_2N": num(large.certified_bound, 12) if large.certified_bound is not None else "",
                    "gamma_factor": num(factor, 12),
                    "backward_ratio": num(ratio, 12),
                    "ratio_over_gamma": num(ratio / factor, 6),
                    "within_bound": bool(within and large.certified_bound is not None),
                    "interior_ok": bool(small.interior_residual_ulps <= config.ULP_TOLERANCE
                                        and large.interior_residual_ulps <= config.ULP_TOLERANCE),
                })
    return pd.DataFrame(rows)


# --- orbits -------------------------------------------------------------------


@dataclass
class OrbitStep:
    step: int
    vector: VectorState
    norm: Any
    full_norm: Any
    residual: Any
    window: Tuple[int, int]


@dataclass
class OrbitTrace:
    operator: str
    steps: List[OrbitStep] = field(default_factory=list)

    @property
    def norms(self) -> List[Any]:
        return [s.norm for s in self.steps]

    @property
    def final(self) -> VectorState:
        return self.steps[-1].vector

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"step": s.step, "norm": s.norm, "residual": s.residual if s.residual is not None else "",
              "trusted_lo": s.window[0], "trusted_hi": s.window[1]} for s in self.steps],
            columns=["step", "norm", "residual", "trusted_lo", "trusted_hi"],
        )


def _next_window(kind: OperatorKind, window: Tuple[int, int], zero_tail: bool) -> Tuple[int, int]:
    # a forward step only loses mass past the top; retained coordinates stay exact
    lo, hi = window
    if zero_tail or kind is OperatorKind.FORWARD:
        return lo, hi
    return lo, hi - 1


def orbit(op: TruncatedOperator, v: VectorState, steps: int,
          finite_support: Optional[bool] = None) -> OrbitTrace:
    """Iterates v, op v, ..., op^steps v with norms on the trusted window.

    A finitely supported v (tail_bound == 0) keeps the full window until mass
    reaches the top coordinate under a forward action. When v carries an
    eigenvalue the residual column is ||op^k v - lam^k v|| on the window.

    Raises:
        TruncationError: the trusted window empties before `steps` iterations.
    """
    if steps < 0:
        raise ParameterError(f"orbit needs steps >= 0, got {steps}")
    zero_tail = (v.tail_bound == 0) if finite_support is None else finite_support
    window = (op.basis_offset, op.top)
    trace = OrbitTrace(op.label)
    lam = v.eigenvalue
    current = v
    for k in range(steps + 1):
        if k > 0:
            if zero_tail and op.kind is not OperatorKind.BACKWARD and current[op.top] != 0:
                zero_tail = False
            current = op.apply(current)
            window = _next_window(op.kind, window, zero_tail)
            if window[0] > window[1]:
                raise TruncationError(f"trusted window empty at step {k} of {steps} for {op.label}")
        residual = None
        if lam is not None:
            with mpmath.mp.workdps(current.dps):
                ref = replace(v.as_numeric(), coefficients=tuple(
                    mpmath.mpc(lam) ** k * c for c in v.numeric()))
                residual = current.distance(ref, window)
        trace.steps.append(OrbitStep(k, current, current.norm(window), current.norm(),
                                     residual, window))
    logger.info(f"orbit {op.label}: {steps} steps, trusted window {window}")
    return trace


# --- periodicity ----------------------------------------------------------------


@dataclass
class PeriodicityCheck:
    period: int
    window: Tuple[int, int]
    exact: bool
    error: Any
    tolerance: Any
    verified: bool

    def to_json(self) -> Dict[str, Any]:
        return {"period": self.period, "window": list(self.window), "exact": self.exact,
                "error": num(self.error), "tolerance": num(self.tolerance),
                "verified": self.verified}


def verify_periodicity(op: TruncatedOperator, v: VectorState, period: int,
                       tolerance: Any = None) -> PeriodicityCheck:
    """op^period v == v on the trusted window; exact comparison for exact states."""
    if period < 1:
        raise ParameterError(f"period must be >= 1, got {period}")
    image = op.power(v, period)
    if v.tail_bound == 0:
        window = (op.basis_offset, op.top)
    else:
        shrink = period if op.kind is not OperatorKind.FORWARD else 0
        window = (op.basis_offset, op.top - shrink)
    if window[0] > window[1]:
        raise TruncationError(f"period {period} leaves no trusted coordinates in {op.label}")
    if image.exact and v.exact:
        bad = [n for n in range(window[0], window[1] + 1) if image[n] != v[n]]
        error = mpmath.mpf(len(bad))
        return PeriodicityCheck(period, window, True, error, mpmath.mpf(0), not bad)
    with mpmath.mp.workdps(max(v.dps, image.dps)):
        error = image.distance(v, window)
        if tolerance is None:
            tolerance = mpmath.mpf(config.PERIODICITY_TOLERANCE) * max(v.norm(window), 1)
        return PeriodicityCheck(period, window, False, error, tolerance, bool(error <= tolerance))


def _parse_root(root) -> Fraction:
    if isinstance(root, (tuple, list)):
        n, k = root
        if int(k) < 1:
            raise ParameterError(f"root denominator k must be >= 1, got {k}")
        return Fraction(int(n), int(k))
    q = to_fraction(root, "root")
    return q


def periodic_point_sum(weights: Weights, roots: Sequence[Any], amplitudes: Optional[Sequence[Any]],
                       N: int, gamma=None) -> Tuple[VectorState, int]:
    """phi = sum_m a_m phi_{delta_m}, delta_m = exp(2 pi i n_m / k_m), with its period.

    The period is lcm(k_m); prod(k_m) is also a period and is recorded. The
    identity J^l phi = phi is checked on the trusted window against a
    tolerance from the certified tails (default report threshold otherwise).
    """
    if not roots:
        raise ParameterError("periodic_point_sum needs at least one root")
    fractions = [_parse_root(r) for r in roots]
    amplitudes = list(amplitudes) if amplitudes is not None else [1] * len(fractions)
    if len(amplitudes) != len(fractions):
        raise ParameterError(f"{len(fractions)} roots but {len(amplitudes)} amplitudes")
    period = 1
    for q in fractions:
        period = period * q.denominator // math.gcd(period, q.denominator)
    product = math.prod(q.denominator for q in fractions)

    parts = []
    for q in fractions:
        with mpmath.mp.workdps(weights.dps * config.RECURRENCE_PRECISION_FACTOR):
            delta = mpmath.expjpi(2 * mpmath.mpf(q.numerator) / q.denominator)
        parts.append(eigenvector_sum(weights, delta, N, gamma=gamma))

    dps = parts[0].dps
    with mpmath.mp.workdps(dps):
        amps = []
        for a in amplitudes:
            if isinstance(a, (str, int, Fraction)):
                fa = to_fraction(a, "amplitude")
                a = mpmath.mpf(fa.numerator) / fa.denominator
            amps.append(mpmath.mpc(a))
        coeffs = [sum(a * part.coefficients[i] for a, part in zip(amps, parts))
                  for i in range(N)]
        tails = [part.tail_bound for part in parts]
        certified = all(t is not None for t in tails)
        tail = (sum(abs(a) * mpmath.sqrt(t) for a, t in zip(amps, tails)) ** 2) if certified else None

    phi = VectorState(tuple(coeffs), weights.first_index, tail_bound=tail, dps=dps,
                      label=f"periodic[{', '.join(str(q) for q in fractions)}]")
    op = build_operator(OperatorKind.JACOBI, weights.with_dps(dps), N)
    tolerance = mpmath.mpf(config.DEFAULT_REPORT_TOLERANCE)
    if tail is not None:
        tolerance = min(tolerance, 2 * mpmath.sqrt(tail))
    check = verify_periodicity(op, phi, period, tolerance=tolerance)
    phi.checks.update({"period": period, "period_product": product,
                       "periodicity": check.to_json(), "tail_certified": certified})
    if not check.verified:
        logger.warning(f"periodic_point_sum: ||J^{period} phi - phi|| = {num(check.error, 6)} "
                       f"exceeds {num(tolerance, 6)}")
    logger.info(f"periodic_point_sum {weights.label}: period {period}, verified={check.verified}")
    return phi, period


def _block_products(weights: Weights, s: int, N_period: int, blocks: int, exact: bool) -> List[Coefficient]:
    """c_k = 1 / prod_{j=s}^{kN+s-1} omega_j for k = 0 .. blocks - 1."""
    out: List[Coefficient] = [Surd(1) if exact else mpmath.mpf(1)]
    with mpmath.mp.workdps(weights.dps + config.GUARD_DPS):
        for k in range(1, blocks):
            c = out[-1]
            for j in range((k - 1) * N_period + s, k * N_period + s):
                c = c / (weights.exact_form(j) if exact else weights.eval(j))
            out.append(c)
    return out


def block_tail(weights: Weights, s: int, N_period: int, first_block: int, max_blocks: int = 10**5):
    """Bound on sum_{k >= first_block} c_k^2 for the periodic-point blocks."""
    with mpmath.mp.workdps(weights.dps):
        c = mpmath.mpf(1)
        for j in range(s, first_block * N_period + s):
            c /= weights.eval(j)
        total = mpmath.mpf(0)
        for k in range(first_block, first_block + max_blocks):
            q = mpmath.mpf(1)
            for j in range(k * N_period + s, (k + 1) * N_period + s):
                q /= weights.eval(j)
            if q < mpmath.mpf(1) / 2:
                return total + c ** 2 / (1 - q ** 2)
            total += c ** 2
            c *= q
    raise ConvergenceError(f"periodic-point blocks of {weights.label} do not decay")


def _check_period(weights: Weights, s: int, N_period: int):
    p = weights.p
    if s < p:
        raise ParameterError(f"periodic point index s must be >= p = {p}, got {s}")
    if N_period < s:
        raise ParameterError(f"N_period must be >= s = {s}, got {N_period}")
    if N_period <= s - p or N_period < 1:
        raise DimensionError(f"N_period must exceed s - p = {s - p} so H_p^N annihilates P_s")


def periodic_point_Hp(weights: Weights, s: int, N_period: int, N_trunc: int,
                      exact: Optional[bool] = None) -> VectorState:
    """phi_{s,N} = P_s + sum_{k>=1} c_k P_{kN+s} truncated to N_trunc coordinates.

    Exact (Surd) coefficients for classic and disk weights. Periodicity under
    H_p^N is verified on the trusted window and stored in `checks`.

    Raises:
        DimensionError: s + 3 N_period > N_trunc, or N_period <= s - p.
    """
    _check_period(weights, s, N_period)
    if s + 3 * N_period > N_trunc:
        raise DimensionError(f"need s + 3*N_period <= N_trunc, got {s} + 3*{N_period} > {N_trunc}")
    exact = weights.has_exact_forms if exact is None else exact
    if exact and not weights.has_exact_forms:
        raise ParameterError(f"{weights.label} has no exact forms")
    offset = weights.first_index
    top = offset + N_trunc - 1
    blocks = (top - s) // N_period + 1
    c = _block_products(weights, s, N_period, blocks, exact)
    zero = Surd(0) if exact else mpmath.mpf(0)
    coeffs = [zero] * N_trunc
    for k in range(blocks):
        coeffs[k * N_period + s - offset] = c[k]
    tail = block_tail(weights, s, N_period, blocks)
    phi = VectorState(tuple(coeffs), offset, tail_bound=tail, exact=exact, dps=weights.dps,
                      label=f"phi_(s={s},N={N_period})")
    op = build_operator(OperatorKind.BACKWARD, weights, N_trunc)
    check = verify_periodicity(op, phi, N_period)
    phi.checks["periodicity"] = check.to_json()
    logger.info(f"periodic_point_Hp {weights.label} s={s} N={N_period}: verified={check.verified}")
    return phi


@dataclass
class TelescopingReport:
    s: int
    N_period: int
    k: int
    block_step: bool
    full_return: bool
    exact: bool

    @property
    def holds(self) -> bool:
        return self.block_step and self.full_return

    def to_json(self) -> Dict[str, Any]:
        return dict(self.__dict__, holds=self.holds)


def telescoping_identity(weights: Weights, s: int, N_period: int, k: int,
                         exact: Optional[bool] = None) -> TelescopingReport:
    """Block identities behind the periodic points, applied with the operator.

    block_step:  H_p^N (c_k P_{kN+s}) = c_{k-1} P_{(k-1)N+s}
    full_return: H_p^{kN} (c_k P_{kN+s}) = P_s
    """
    _check_period(weights, s, N_period)
    if k < 1:
        raise ParameterError(f"block index k must be >= 1, got {k}")
    exact = weights.has_exact_forms if exact is None else exact
    offset = weights.first_index
    N_trunc = k * N_period + s - offset + 2
    op = build_operator(OperatorKind.BACKWARD, weights, max(N_trunc, weights.p + 2))
    c = _block_products(weights, s, N_period, k + 1, exact)

    def block(j: int) -> VectorState:
        v = VectorState.basis(j * N_period + s, op.N, offset, exact=exact, dps=weights.dps)
        return replace(v, coefficients=tuple(x * c[j] if x else x for x in v.coefficients))

    def same(a: VectorState, b: VectorState) -> bool:
        if exact:
            return all(x == y for x, y in zip(a.coefficients, b.coefficients))
        tol = mpmath.mpf(config.PERIODICITY_TOLERANCE)
        return a.distance(b) <= tol * max(b.norm(), 1)

    step = same(op.power(block(k), N_period), block(k - 1))
    full = same(op.power(block(k), k * N_period), block(0))
    return TelescopingReport(s, N_period, k, step, full, exact)


def _smallness(weights: Weights, phi: VectorState) -> Dict[int, Any]:
    """|a_s prod_{j=p}^{s-1} omega_j| for each s in the support."""
    values = {}
    with mpmath.mp.workdps(weights.dps):
        for s in phi.support():
            prod = mpmath.mpf(1)
            for j in range(weights.first_index, s):
                prod *= weights.eval(j)
            values[s] = abs(mpmath.mpc(_value(phi[s], weights.dps))) * prod
    return values


def approximate_by_periodic(weights: Weights, phi: VectorState, epsilon,
                            require_smallness: bool = True,
                            N_max: Optional[int] = None) -> Tuple[VectorState, int]:
    """psi = sum_s a_s phi_{s,N} with the smallest admissible N for ||phi - psi|| <= epsilon.

    The supports of the phi_{s,N} beyond P_s are disjoint, so
    ||phi - psi||^2 = sum_s |a_s|^2 sum_{k>=1} c_k(s)^2 is computed in
    coefficient space with certified block tails.

    Raises:
        PreconditionError: the smallness condition |a_s prod omega_j| < 1
            fails (only when require_smallness).
    """
    if phi.tail_bound != 0:
        raise ParameterError("approximate_by_periodic needs a finitely supported phi")
    support = phi.support()
    if not support:
        raise ParameterError("phi is zero")
    p = weights.p
    if min(support) < p:
        raise ParameterError(f"phi must be supported on indices >= p = {p}")
    M = max(support)
    small = _smallness(weights, phi)
    offending = sorted(s for s, v in small.items() if v >= 1)
    if offending:
        if require_smallness:
            raise PreconditionError(f"smallness |a_s prod omega_j| < 1 fails at s = {offending}")
        logger.warning(f"approximate_by_periodic: smallness fails at s = {offending}; continuing")

    eps = mpmath.mpf(epsilon)
    N_start = max(M, 1) if p >= 1 else M + 1
    N_max = N_max or N_start + 10**4
    with mpmath.mp.workdps(weights.dps):
        for N in range(N_start, N_max + 1):
            err_sq = mpmath.mpf(0)
            for s in support:
                a = abs(mpmath.mpc(_value(phi[s], weights.dps)))
                err_sq += a ** 2 * block_tail(weights, s, N, 1)
            if mpmath.sqrt(err_sq) <= eps:
                break
        else:
            raise ConvergenceError(f"no N <= {N_max} reaches ||phi - psi|| <= {epsilon}")
        error = mpmath.sqrt(err_sq)

    N_trunc = M + 3 * N - weights.first_index + 1
    coeffs = [mpmath.mpc(0)] * N_trunc
    for s in support:
        a = mpmath.mpc(_value(phi[s], weights.dps))
        blocks = (N_trunc - 1 + weights.first_index - s) // N + 1
        for k, c in enumerate(_block_products(weights, s, N, blocks, exact=False)):
            coeffs[k * N + s - weights.first_index] += a * c
    residual_tail = sum(abs(mpmath.mpc(_value(phi[s], weights.dps))) ** 2
                        * block_tail(weights, s, N, (N_trunc - 1 + weights.first_index - s) // N + 1)
                        for s in support)
    psi = VectorState(tuple(coeffs), weights.first_index, tail_bound=residual_tail,
                      dps=weights.dps, label=f"psi(N={N})",
                      checks={"distance": num(error), "epsilon": str(epsilon),
                              "smallness": {str(s): num(v) for s, v in small.items()},
                              "smallness_ok": not offending})
    logger.info(f"approximate_by_periodic {weights.label}: N_used={N}, ||phi - psi||={num(error, 6)}")
    return psi, N


# --- the right inverse S ------------------------------------------------------------


def apply_s(weights: Weights, v: VectorState) -> VectorState:
    """(S x)_{n+1} = x_n / omega_n; grows the truncation by one coordinate."""
    exact = v.exact and weights.has_exact_forms
    zero = Surd(0) if exact else mpmath.mpc(0)
    out = [zero]
    with mpmath.mp.workdps(v.dps):
        x = list(v.coefficients) if exact else v.numeric()
        for n, a in zip(v.indices, x):
            w = weights.exact_form(n) if exact else weights.with_dps(v.dps).eval(n)
            out.append(a / w if a else zero)
    return replace(v, coefficients=tuple(out), exact=exact, label=f"S({v.label})",
                   eigenvalue=None, boundary_residual=None, checks={})


def right_inverse_check(weights: Weights, k_max: int = 20) -> Dict[str, Any]:
    """H_p S P_k = P_k for p <= k <= k_max; exact for classic and disk weights."""
    exact = weights.has_exact_forms
    offset = weights.first_index
    worst = mpmath.mpf(0)
    failures = []
    for k in range(offset, k_max + 1):
        N = k - offset + 1
        v = VectorState.basis(k, N, offset, exact=exact, dps=weights.dps)
        sv = apply_s(weights, v)
        back = build_operator(OperatorKind.BACKWARD, weights, max(sv.N, weights.p + 2))
        zero = Surd(0) if sv.exact else mpmath.mpc(0)
        padded = replace(sv, coefficients=sv.coefficients + (zero,) * (back.N - sv.N))
        image = back.apply(padded)
        if exact:
            ok = image[k] == Surd(1) and all(image[n] == 0 for n in image.indices if n != k)
        else:
            with mpmath.mp.workdps(weights.dps):
                dev = image.distance(VectorState.basis(k, back.N, offset, exact=False, dps=weights.dps))
                dev_ulps = dev / working_eps(weights.dps)
                worst = max(worst, dev_ulps)
                ok = dev_ulps <= config.ULP_TOLERANCE
        if not ok:
            failures.append(k)
    return {"exact": exact, "k_max": k_max, "holds": not failures, "failures": failures,
            "max_deviation_ulps": num(worst)}


@dataclass
class SDecayTrace:
    k: int
    norms: List[Any]
    strictly_decreasing: bool
    log_slopes: List[Any]
    right_inverse: Dict[str, Any]
    nonincreasing: bool = True
    # first n from which ||S^n P_k|| decreases strictly; steps across omega_j = 1 are flat
    strict_from: Optional[int] = 0

    def below(self, threshold) -> Optional[int]:
        """First n with ||S^n P_k|| < threshold."""
        threshold = mpmath.mpf(threshold)
        for n, value in enumerate(self.norms):
            if value < threshold:
                return n
        return None

    def to_json(self) -> Dict[str, Any]:
        return {"k": self.k, "norms": [num(x) for x in self.norms],
                "strictly_decreasing": self.strictly_decreasing,
                "nonincreasing": self.nonincreasing, "strict_from": self.strict_from,
                "log_slopes": [num(x) for x in self.log_slopes],
                "right_inverse": self.right_inverse}


def s_operator_decay(weights: Weights, k: int, n_steps: int,
                     threshold: Any = None) -> SDecayTrace:
    """||S^n P_k|| = 1 / prod_{j=k}^{n+k-1} omega_j for n = 0 .. n_steps."""
    if k < weights.first_index:
        raise ParameterError(f"start index k must be >= {weights.first_index}, got {k}")
    norms, slopes = [], []
    with mpmath.mp.workdps(weights.dps):
        value = mpmath.mpf(1)
        norms.append(value)
        for n in range(1, n_steps + 1):
            value = value / weights.eval(k + n - 1)
            slopes.append(mpmath.log(value) - mpmath.log(norms[-1]))
            norms.append(value)
    steps = list(zip(norms, norms[1:]))
    flat = [n for n, (a, b) in enumerate(steps) if not b < a]
    strict_from = 0 if not flat else flat[-1] + 1
    trace = SDecayTrace(k, norms, not flat, slopes,
                        right_inverse_check(weights, min(k + 20, k + n_steps)),
                        nonincreasing=all(b <= a for a, b in steps),
                        strict_from=strict_from if strict_from < len(steps) else None)
    if threshold is not None and trace.below(threshold) is None:
        logger.warning(f"s_operator_decay: ||S^n P_{k}|| stays above {threshold} for n <= {n_steps}")
    return trace


def transpose_duality_check(op: TruncatedOperator, u: VectorState, v: VectorState) -> Dict[str, Any]:
    """<H u, v> against <u, H* v> for vectors inside the truncation."""
    forward = op.transpose()
    dps = max(op.dps, u.dps, v.dps)
    with mpmath.mp.workdps(dps):
        hu, hv = op.apply(u.as_numeric()).numeric(), forward.apply(v.as_numeric()).numeric()
        x, y = u.numeric(), v.numeric()
        left = mpmath.fsum(a * mpmath.conj(b) for a, b in zip(hu, y))
        right = mpmath.fsum(a * mpmath.conj(b) for a, b in zip(x, hv))
        diff = abs(left - right)
        scale = 1 + abs(left)
        ulps = diff / scale / working_eps(dps)
    return {"lhs": num(left), "rhs": num(right), "difference": num(diff),
            "ulps": num(ulps), "holds": bool(ulps <= config.ULP_TOLERANCE)}
