"""Exact scalars of the form r * sqrt(s) with rational r and s >= 0.

Classic and disk weights, and every product or quotient of them, stay inside
this set, so block identities built from them can be compared exactly.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Union

import mpmath

from backend import config

RationalLike = Union[int, Fraction]


def _as_fraction(value: RationalLike) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    raise TypeError(f"expected an int or Fraction, got {type(value).__name__}")


class Surd:
    """r * sqrt(s), stored unsimplified; equality is decided on r^2 * s and sign."""

    __slots__ = ("r", "s", "_hash")

    def __init__(self, r: RationalLike, s: RationalLike = 1):
        s = _as_fraction(s)
        if s < 0:
            raise ValueError(f"radicand must be nonnegative, got {s}")
        r = _as_fraction(r)
        if r == 0 or s == 0:
            r, s = Fraction(0), Fraction(1)
        self.r = r
        self.s = s
        self._hash = None

    @classmethod
    def sqrt(cls, s: RationalLike) -> "Surd":
        return cls(1, s)

    def __iter__(self):
        return iter((self.r, self.s))

    def __repr__(self):
        if self.s == 1:
            return f"Surd({self.r})"
        return f"Surd({self.r}, sqrt={self.s})"

    # --- structure ---

    def sign(self) -> int:
        if self.r == 0:
            return 0
        return 1 if self.r > 0 else -1

    def square(self) -> Fraction:
        return self.r * self.r * self.s

    def is_zero(self) -> bool:
        return self.r == 0

    def __bool__(self):
        return not self.is_zero()

    # --- arithmetic (closed under *, /, integer powers) ---

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return Surd(self.r * other, self.s)
        if not isinstance(other, Surd):
            return NotImplemented
        if self.s == other.s:
            return Surd(self.r * other.r * self.s, 1)
        return Surd(self.r * other.r, self.s * other.s)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Surd(other)
        if not isinstance(other, Surd):
            return NotImplemented
        if other.is_zero():
            raise ZeroDivisionError("division by an exact zero")
        # a sqrt(b) / (c sqrt(d)) = (a / (c d)) sqrt(b d)
        return Surd(self.r / (other.r * other.s), self.s * other.s)

    def __rtruediv__(self, other):
        if isinstance(other, (int, Fraction)):
            return Surd(other) / self
        return NotImplemented

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int):
            return NotImplemented
        if exponent < 0:
            return Surd(1) / (self ** (-exponent))
        half, odd = divmod(exponent, 2)
        base = Surd(self.square() ** half)
        return base * self if odd else base

    def __neg__(self):
        return Surd(-self.r, self.s)

    def __abs__(self):
        return Surd(abs(self.r), self.s)

    # --- comparisons ---

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Surd(other)
        if not isinstance(other, Surd):
            return NotImplemented
        return self.sign() == other.sign() and self.square() == other.square()

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.sign(), self.square()))
        return self._hash

    def __lt__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Surd(other)
        if not isinstance(other, Surd):
            return NotImplemented
        a, b = self.sign(), other.sign()
        if a != b:
            return a < b
        if a >= 0:
            return self.square() < other.square()
        return self.square() > other.square()

    def __le__(self, other):
        return self == other or self < other

    def __gt__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Surd(other)
        if not isinstance(other, Surd):
            return NotImplemented
        return other < self

    def __ge__(self, other):
        return self == other or self > other

    # --- numeric views ---

    def to_mpf(self, dps: int | None = None):
        """Value rounded to `dps` digits (default: current mpmath precision)."""
        dps = dps or mpmath.mp.dps
        with mpmath.mp.workdps(dps + config.GUARD_DPS):
            value = mpmath.mpf(self.r.numerator) / self.r.denominator
            if self.s != 1:
                value *= mpmath.sqrt(mpmath.mpf(self.s.numerator) / self.s.denominator)
        with mpmath.mp.workdps(dps):
            return +value

    def __float__(self):
        return float(self.to_mpf(20))

    def to_json(self) -> dict:
        return {"r": str(self.r), "s": str(self.s)}


ZERO = Surd(0)
ONE = Surd(1)
