from fractions import Fraction

import mpmath
import pytest

from utils.exact import Surd


def test_products_and_quotients_stay_exact():
    root2 = Surd.sqrt(2)
    assert root2 * root2 == 2
    assert root2 / root2 == 1
    assert root2 ** 3 == Surd(2, 2)
    assert root2 ** -2 == Fraction(1, 2)


def test_equality_ignores_unsimplified_form():
    assert Surd(1, 8) == Surd(2, 2)
    assert hash(Surd(1, 8)) == hash(Surd(2, 2))
    assert Surd(-1, 8) != Surd(2, 2)


def test_zero_is_normalized():
    assert Surd(0, 7) == Surd(3, 0) == 0
    assert not Surd(0, 5)
    assert Surd(0, 5).s == 1


def test_ordering():
    assert Surd.sqrt(2) < Surd.sqrt(3) < 2
    assert Surd(-2) < Surd(-1, 3) < 0
    assert Surd(2, 3) >= Surd.sqrt(12)


def test_to_mpf():
    value = Surd(Fraction(1, 2), 3).to_mpf(40)
    with mpmath.mp.workdps(40):
        assert abs(value - mpmath.sqrt(3) / 2) < mpmath.mpf(10) ** -39


def test_error_contract():
    with pytest.raises(ValueError):
        Surd(1, -2)
    with pytest.raises(ZeroDivisionError):
        Surd.sqrt(2) / Surd(0)
    with pytest.raises(TypeError):
        Surd(0.5)
