import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mclab.core import MassVector, ParamTriple, grind, join, ord_masses, s_k
from mclab.errors import InvalidInputError

mass_lists = st.lists(
    st.floats(min_value=0.0, max_value=10.0, allow_nan=False), min_size=0, max_size=12
)


def test_ord_examples():
    assert ord_masses([1, 3, 2]).masses == (3.0, 2.0, 1.0)
    assert ord_masses([]).masses == ()
    assert ord_masses([2, 2, 2]).masses == (2.0, 2.0, 2.0)


def test_ord_rejects_negative():
    with pytest.raises(InvalidInputError):
        ord_masses([1.0, -0.5])


def test_mass_vector_requires_canonical_order():
    with pytest.raises(InvalidInputError):
        MassVector((1.0, 2.0))


@given(mass_lists)
@settings(max_examples=200, deadline=None)
def test_ord_idempotent(values):
    once = ord_masses(values)
    assert ord_masses(once.masses).masses == once.masses


def test_s_k_examples():
    assert s_k(ord_masses([1, 1]), 2) == 2.0
    assert s_k(ord_masses([2, 1]), 3) == 9.0
    assert s_k(ord_masses([]), 5) == 0.0


def test_s_k_rejects_bad_order():
    with pytest.raises(InvalidInputError):
        s_k(ord_masses([1.0]), 0)


def test_join_examples():
    assert join(ord_masses([3, 1]), ord_masses([2])).masses == (3.0, 2.0, 1.0)
    x = ord_masses([2.5, 0.5])
    assert join(x, ord_masses([])).masses == x.masses
    assert join(ord_masses([1, 1]), ord_masses([1, 1])).masses == (1.0, 1.0, 1.0, 1.0)


@given(mass_lists, mass_lists)
@settings(max_examples=100, deadline=None)
def test_join_commutative_and_additive(a, b):
    x, y = ord_masses(a), ord_masses(b)
    assert join(x, y).masses == join(y, x).masses
    for k in (1, 2, 3):
        assert s_k(join(x, y), k) == pytest.approx(s_k(x, k) + s_k(y, k), rel=1e-12, abs=1e-12)


@given(mass_lists, mass_lists, mass_lists)
@settings(max_examples=60, deadline=None)
def test_join_associative(a, b, c):
    x, y, z = ord_masses(a), ord_masses(b), ord_masses(c)
    assert join(join(x, y), z).masses == join(x, join(y, z)).masses


def test_grind_examples():
    assert grind(ord_masses([4, 1]), 1, 2).masses == (2.0, 2.0, 1.0)
    x = ord_masses([3.0, 2.0, 1.0])
    assert grind(x, 2, 1).masses == x.masses
    g = grind(ord_masses([3.0]), 1, 3)
    assert g.masses == (1.0, 1.0, 1.0)
    assert s_k(g, 2) == pytest.approx(3.0)


def test_grind_errors():
    x = ord_masses([2.0, 1.0])
    with pytest.raises(InvalidInputError):
        grind(x, 0, 2)
    with pytest.raises(InvalidInputError):
        grind(x, 3, 2)
    with pytest.raises(InvalidInputError):
        grind(x, 1, 0)


@given(mass_lists.filter(lambda v: len(v) >= 1), st.integers(1, 6))
@settings(max_examples=150, deadline=None)
def test_grind_mass_and_square_accounting(values, M):
    x = ord_masses(values)
    m = max(1, len(x) // 2)
    g = grind(x, m, M)
    assert s_k(g, 1) == pytest.approx(s_k(x, 1), rel=1e-12, abs=1e-12)
    expected_sq = sum(v * v / M for v in x.masses[:m]) + sum(v * v for v in x.masses[m:])
    assert s_k(g, 2) == pytest.approx(expected_sq, rel=1e-12, abs=1e-12)


@given(mass_lists, st.integers(2, 6))
@settings(max_examples=150, deadline=None)
def test_power_sum_dominated_by_norm(values, k):
    # s_k <= s_2^(k/2) whenever every entry is below the l2 norm
    x = ord_masses(values)
    nsq = s_k(x, 2) if len(x) else 0.0
    if nsq == 0.0:
        assert s_k(x, k) == 0.0
        return
    assert s_k(x, k) <= nsq ** (k / 2.0) * (1 + 1e-12)


def test_param_triple_validation():
    c = ord_masses([0.5, 0.25])
    p = ParamTriple(1.0, -1.0, c)
    assert p.kappa == 1.0 and p.c.masses == (0.5, 0.25)
    with pytest.raises(InvalidInputError):
        ParamTriple(-0.1, 0.0, c)


def test_mass_vector_norms():
    x = ord_masses([3.0, 4.0])
    assert x.norm_sq == pytest.approx(25.0)
    assert x.norm == pytest.approx(5.0)
    assert x.total == pytest.approx(7.0)
