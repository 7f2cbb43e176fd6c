import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carnot_hconv.groups import (
    CarnotGroup,
    Polynomial,
    apply_field,
    bracket,
    dilate,
    horizontal_projection,
    make_euclidean,
    make_heisenberg,
    parse_group,
)

finite = st.floats(-50, 50, allow_nan=False)


def test_euclidean_basics():
    g = make_euclidean(2)
    assert (g.Q, g.m, g.n, g.step) == (2, 2, 2, 1)
    e1 = make_euclidean(1)
    np.testing.assert_array_equal(e1.coeff_row(0, [0.3]), [1.0])
    e3 = make_euclidean(3)
    for x in ([0, 0, 0], [1.5, -2, 7]):
        rows = np.array([e3.coeff_row(i, x) for i in range(3)])
        np.testing.assert_array_equal(rows, np.eye(3))


def test_euclidean_rejects_bad_dimension():
    with pytest.raises(ValueError):
        make_euclidean(0)


def test_heisenberg_coefficients():
    h = make_heisenberg()
    assert h.Q == 4 and h.m == 2 and h.n == 3 and h.step == 2
    np.testing.assert_array_equal(h.coeff_row(0, [0, 0, 0]), [1, 0, 0])
    np.testing.assert_array_equal(h.coeff_row(0, [0, 2, 0]), [1, 0, -1])
    np.testing.assert_array_equal(h.coeff_row(1, [2, 0, 0]), [0, 1, 1])


def test_heisenberg_bracket_is_vertical():
    h = make_heisenberg()
    comm = bracket(h, 0, 1)
    assert comm[0].is_zero and comm[1].is_zero
    assert comm[2] == Polynomial.constant(3, 1.0)
    assert all(c.is_zero for c in bracket(h, 0, 0))


def test_apply_field_to_t():
    h = make_heisenberg()
    t = Polynomial.coordinate(3, 2)
    x1t = apply_field(h, 0, t)
    x2t = apply_field(h, 1, t)
    pt = np.array([0.4, -1.2, 3.0])
    assert x1t(pt) == pytest.approx(0.6)
    assert x2t(pt) == pytest.approx(0.2)


def test_projection():
    h = make_heisenberg()
    np.testing.assert_array_equal(horizontal_projection(h, [1, 2, 3]), [1, 2])
    np.testing.assert_array_equal(horizontal_projection(h, [0, 0, 9]), [0, 0])
    np.testing.assert_array_equal(horizontal_projection(make_euclidean(2), [4, 5]), [4, 5])
    with pytest.raises(ValueError):
        horizontal_projection(h, [1, 2])


def test_dilation_examples():
    np.testing.assert_array_equal(dilate(make_euclidean(2), 3, [1, 1]), [3, 3])
    np.testing.assert_array_equal(dilate(make_heisenberg(), 2, [1, 1, 1]), [2, 2, 4])
    with pytest.raises(ValueError):
        dilate(make_heisenberg(), 0.0, [1, 1, 1])
    with pytest.raises(ValueError):
        dilate(make_heisenberg(), 2.0, [1, 1])


@given(st.lists(finite, min_size=3, max_size=3), st.floats(0.1, 10), st.floats(0.1, 10))
def test_dilation_is_a_one_parameter_group(x, a, b):
    h = make_heisenberg()
    lhs = dilate(h, a, dilate(h, b, x))
    np.testing.assert_allclose(lhs, dilate(h, a * b, x), rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(dilate(h, 1.0, x), np.asarray(x, dtype=float))


@given(st.lists(finite, min_size=3, max_size=3), st.floats(0.1, 10))
def test_fields_are_homogeneous_of_degree_one(x, lam):
    # X_i(f o delta_lam) = lam (X_i f) o delta_lam, checked on coefficient rows:
    # c_ij(delta_lam x) = lam^(w_j - 1) c_ij(x)
    h = make_heisenberg()
    w = np.asarray(h.dilation_exponents, dtype=float)
    for i in range(h.m):
        lhs = h.coeff_row(i, dilate(h, lam, x))
        rhs = lam ** (w - 1.0) * h.coeff_row(i, x)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-10)


def test_polynomial_algebra():
    x = Polynomial.coordinate(2, 0)
    y = Polynomial.coordinate(2, 1)
    p = x * x * y - y + Polynomial.constant(2, 3.0)
    assert p.degree == 3
    assert p([2.0, 1.0]) == pytest.approx(6.0)
    assert p.diff(0) == (x * y) + (x * y)
    assert (p - p).is_zero
    np.testing.assert_allclose(p(np.array([[2.0, 1.0], [0.0, 0.0]])), [6.0, 3.0])
    with pytest.raises(ValueError):
        Polynomial.from_dict(2, {(1,): 1.0})


def test_group_validation():
    one = Polynomial.constant(2, 1.0)
    zero = Polynomial(2)
    with pytest.raises(ValueError):
        CarnotGroup("bad", (2,), ((one, one), (zero, one)), (1, 1))
    with pytest.raises(ValueError):
        CarnotGroup("bad", (2,), ((one, zero), (zero, one)), (1, 2))


def test_parse_group():
    assert parse_group("heisenberg1").n == 3
    assert parse_group("euclidean:3").n == 3
    for bad in ("euclidean", "euclidean:x", "heisenberg2", "sphere"):
        with pytest.raises(ValueError):
            parse_group(bad)
