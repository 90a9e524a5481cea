"""Holder-norm machinery: exact evaluators, norms, inequality checks."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crlab.normlab import (
    CallableEvaluator,
    MonomialEvaluator,
    ProductEvaluator,
    SampledField,
    ScaledEvaluator,
    TrigPolynomial,
    ball_grid,
    check_interpolation,
    check_product,
    check_scaled_products,
    ck_alpha_norm,
    holder_seminorm,
    norm_value,
    sup_derivative_norm,
)


def coord_field(per_axis=7):
    pts = ball_grid(3, radius=1.0, per_axis=per_axis)
    return SampledField(pts, MonomialEvaluator((1, 0, 0)))


def test_trig_partial_matches_fd():
    rng = np.random.default_rng(0)
    tp = TrigPolynomial.random(rng, 3)
    x = rng.uniform(-1, 1, (5, 3))
    h = 1e-6
    for i in range(3):
        xp = x.copy()
        xp[:, i] += h
        xm = x.copy()
        xm[:, i] -= h
        fd = (tp.value(xp) - tp.value(xm)) / (2 * h)
        assert np.allclose(tp.partial(x, (i,)), fd, atol=1e-7)
    # second mixed partial
    fd2 = (tp.partial(x + [0, h, 0], (0,)) - tp.partial(x - [0, h, 0], (0,))) \
        / (2 * h)
    assert np.allclose(tp.partial(x, (0, 1)), fd2, atol=1e-6)


def test_monomial_partials_exact():
    m = MonomialEvaluator((2, 1, 0), coeff=3.0)
    x = np.array([[0.5, -0.4, 0.7]])
    assert m.value(x)[0] == pytest.approx(3.0 * 0.25 * -0.4)
    assert m.partial(x, (0,))[0] == pytest.approx(6.0 * 0.5 * -0.4)
    assert m.partial(x, (0, 0))[0] == pytest.approx(6.0 * -0.4)
    assert m.partial(x, (2,))[0] == 0.0


def test_callable_evaluator_fd_partial():
    c = CallableEvaluator(lambda x: x[..., 0] ** 3)
    x = np.array([[0.5, 0.0, 0.0]])
    assert c.partial(x, (0,))[0] == pytest.approx(0.75, abs=1e-6)


def test_product_evaluator_leibniz():
    f = MonomialEvaluator((2, 0, 0))
    g = MonomialEvaluator((0, 1, 0))
    p = ProductEvaluator(f, g)
    x = np.array([[0.3, 0.7, 0.1]])
    # d/dx0 d/dx1 (x0^2 x1) = 2 x0
    assert p.partial(x, (0, 1))[0] == pytest.approx(0.6)


def test_scaled_evaluator_chain_rule():
    f = MonomialEvaluator((3, 0, 0))
    s = ScaledEvaluator(f, 2.0)
    x = np.array([[0.25, 0.0, 0.0]])
    assert s.value(x)[0] == pytest.approx(0.5**3)
    assert s.partial(x, (0,))[0] == pytest.approx(2.0 * 3 * 0.25)


def test_holder_seminorm_of_coordinate_is_sqrt2():
    """Best pair for |x1| with alpha = 1/2 is the axis diameter: 2/2^0.5."""
    f = coord_field()
    val, (p, q) = holder_seminorm(f, 0.5)
    assert val == pytest.approx(np.sqrt(2.0), rel=1e-12)
    assert np.linalg.norm(p - q) == pytest.approx(2.0, rel=1e-12)


def test_ck_alpha_norm_of_square():
    pts = ball_grid(3, radius=1.0, per_axis=7)
    f = SampledField(pts, MonomialEvaluator((2, 0, 0)))
    rep = ck_alpha_norm(f, 2, 0.0)
    assert rep.sup_norms[0] == pytest.approx(1.0)
    assert rep.sup_norms[1] == pytest.approx(2.0)
    assert rep.sup_norms[2] == pytest.approx(2.0)
    assert rep.total == pytest.approx(2.0)


def test_norm_value_monotone_in_order():
    rng = np.random.default_rng(1)
    pts = ball_grid(3, radius=1.0, per_axis=7)
    f = SampledField(pts, TrigPolynomial.random(rng, 3))
    orders = [0.0, 0.5, 1.0, 1.5, 2.0]
    vals = [norm_value(f, a) for a in orders]
    assert all(v > 0 for v in vals)
    # C^a norms of a fixed smooth field cannot decrease with the order
    # by more than the seminorm convention allows; sup norm <= C^a norm
    assert all(vals[0] <= v + 1e-12 for v in vals)


def test_interpolation_exact_for_coordinate():
    f = coord_field()
    rep = check_interpolation(f, 0.0, 1.0, 0.5)
    # ||x1||_0 = 1, ||x1||_1 = 1 on the unit ball; the C^{1/2} norm is the
    # seminorm sqrt(2) attained on the axis pair
    assert rep["lhs"] == pytest.approx(np.sqrt(2.0), rel=1e-12)
    assert rep["rhs"] == pytest.approx(1.0, rel=1e-12)
    assert rep["ratio"] == pytest.approx(np.sqrt(2.0), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_interpolation_ratio_bounded_for_trig(seed):
    rng = np.random.default_rng(seed)
    pts = ball_grid(3, radius=1.0, per_axis=5)
    f = SampledField(pts, TrigPolynomial.random(rng, 3))
    rep = check_interpolation(f, 0.0, 2.0, 0.5)
    assert rep["ratio"] <= 10.0


def test_product_ratio_bounded():
    rng = np.random.default_rng(2)
    pts = ball_grid(3, radius=1.0, per_axis=6)
    u = SampledField(pts, TrigPolynomial.random(rng, 3))
    v = SampledField(pts, TrigPolynomial.random(rng, 3))
    rep = check_product(u, v, 1.5)
    assert 0.0 < rep["ratio"] <= 10.0


def test_scaled_products_exponent_and_validation():
    rng = np.random.default_rng(3)
    pts = ball_grid(3, radius=1.0, per_axis=5)
    fields = [SampledField(pts, TrigPolynomial.random(rng, 3))
              for _ in range(2)]
    rep = check_scaled_products(fields, d=[0, 0], a=[0, 0], b=[0.5, 0.5],
                                c=[1, 1], rho=0.5)
    assert rep["exponent"] == pytest.approx(1.0)
    assert rep["ratio"] > 0.0
    with pytest.raises(ValueError):
        check_scaled_products(fields, d=[0, 0], a=[0, 0], b=[0.2, 0.8],
                              c=[1, 1], rho=0.5)


def test_sup_derivative_norm_coordinate():
    f = coord_field()
    assert sup_derivative_norm(f, 0) == pytest.approx(1.0)
    assert sup_derivative_norm(f, 1) == pytest.approx(1.0)
    assert sup_derivative_norm(f, 2) == 0.0
