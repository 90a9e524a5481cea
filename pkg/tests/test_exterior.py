"""Sparse exterior algebra vs a dense reference implementation."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crlab.exterior import (
    GradedElement,
    indices_mask,
    mask_indices,
    merge_sign,
)

NGEN = 6


# ---------------------------------------------------------------------------
# dense reference: dict {sorted index tuple: coeff}, sign by insertion sort
# ---------------------------------------------------------------------------


def perm_sign(seq):
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def dense_from(elem):
    return {tuple(mask_indices(m)): c for m, c in elem.terms.items()}


def dense_wedge(a, b):
    out = {}
    for ia, ca in a.items():
        for ib, cb in b.items():
            if set(ia) & set(ib):
                continue
            merged = ia + ib
            key = tuple(sorted(merged))
            out[key] = out.get(key, 0.0) + perm_sign(merged) * ca * cb
    return {k: v for k, v in out.items() if v != 0}


def random_element(rng, ngen=NGEN, nterms=4):
    e = GradedElement.zero(ngen)
    for _ in range(nterms):
        k = int(rng.integers(0, ngen + 1))
        idx = tuple(sorted(rng.choice(ngen, size=k, replace=False).tolist()))
        c = complex(rng.standard_normal(), rng.standard_normal())
        e = e + GradedElement.monomial(ngen, idx, c)
    return e


def test_mask_round_trip():
    for idx in [(), (0,), (2, 4), (0, 1, 5)]:
        assert tuple(mask_indices(indices_mask(idx))) == idx


def test_merge_sign_matches_permutation_parity():
    rng = np.random.default_rng(0)
    for _ in range(200):
        k1 = int(rng.integers(0, 4))
        k2 = int(rng.integers(0, 4))
        i1 = tuple(sorted(rng.choice(NGEN, size=k1, replace=False).tolist()))
        i2 = tuple(sorted(rng.choice(NGEN, size=k2, replace=False).tolist()))
        if set(i1) & set(i2):
            continue
        assert merge_sign(indices_mask(i1), indices_mask(i2)) == perm_sign(
            i1 + i2
        )


def test_wedge_matches_dense_reference():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = random_element(rng)
        b = random_element(rng)
        got = dense_from(a.wedge(b))
        want = dense_wedge(dense_from(a), dense_from(b))
        keys = set(got) | set(want)
        for k in keys:
            assert got.get(k, 0) == pytest.approx(want.get(k, 0), abs=1e-12)


def test_wedge_associative_and_distributive():
    rng = np.random.default_rng(2)
    for _ in range(25):
        a, b, c = (random_element(rng) for _ in range(3))
        lhs = dense_from(a.wedge(b).wedge(c))
        rhs = dense_from(a.wedge(b.wedge(c)))
        for k in set(lhs) | set(rhs):
            assert lhs.get(k, 0) == pytest.approx(rhs.get(k, 0), abs=1e-10)
        d1 = dense_from((a + b).wedge(c))
        d2 = dense_from(a.wedge(c) + b.wedge(c))
        for k in set(d1) | set(d2):
            assert d1.get(k, 0) == pytest.approx(d2.get(k, 0), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, NGEN - 1), st.integers(0, NGEN - 1))
def test_generators_anticommute(i, j):
    gi = GradedElement.generator(NGEN, i)
    gj = GradedElement.generator(NGEN, j)
    s = gi.wedge(gj) + gj.wedge(gi)
    assert s.is_zero(tol=0.0)


def test_wedge_power_matches_repeated_wedge():
    rng = np.random.default_rng(3)
    # an inhomogeneous element with even-degree parts so powers are nonzero
    e = (GradedElement.monomial(NGEN, (0, 1), 1.5)
         + GradedElement.monomial(NGEN, (2, 3), -0.5)
         + GradedElement.monomial(NGEN, (4, 5), 2.0))
    p = GradedElement.scalar(NGEN, 1.0)
    for k in range(4):
        got = dense_from(e.wedge_power(k))
        want = dense_from(p)
        for key in set(got) | set(want):
            assert got.get(key, 0) == pytest.approx(want.get(key, 0),
                                                    abs=1e-12)
        p = p.wedge(e)
    del rng


def test_degree_part_and_degrees():
    e = (GradedElement.scalar(NGEN, 2.0)
         + GradedElement.monomial(NGEN, (1, 3), 1.0))
    assert set(e.degrees()) == {0, 2}
    assert dense_from(e.degree_part(2)) == {(1, 3): 1.0}


def test_evaluate_monomial_is_determinant():
    rng = np.random.default_rng(4)
    k = 3
    idx = (0, 2, 5)
    vals = rng.standard_normal((NGEN, k)) + 1j * rng.standard_normal((NGEN, k))
    e = GradedElement.monomial(NGEN, idx, 2.0)
    got = e.evaluate(vals)
    want = 2.0 * np.linalg.det(vals[list(idx), :])
    assert got == pytest.approx(want, rel=1e-12)


def test_evaluate_is_linear_in_terms():
    rng = np.random.default_rng(5)
    a = random_element(rng)
    b = random_element(rng)
    k = 2
    # only degree-k parts contribute against k covector columns
    vals = rng.standard_normal((NGEN, k))
    ga = a.degree_part(k).evaluate(vals)
    gb = b.degree_part(k).evaluate(vals)
    gab = (a + b).degree_part(k).evaluate(vals)
    assert gab == pytest.approx(ga + gb, rel=1e-10, abs=1e-12)


def test_conjugate_swap_involution():
    swap = {0: 3, 3: 0, 1: 4, 4: 1, 2: 5, 5: 2}
    rng = np.random.default_rng(6)
    e = random_element(rng)
    back = e.conjugate(swap).conjugate(swap)
    diff = dense_from(e + back * (-1.0))
    assert all(abs(v) < 1e-12 for v in diff.values())
