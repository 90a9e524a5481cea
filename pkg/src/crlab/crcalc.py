"""Tangential Cauchy-Riemann calculus in the graph chart.

Coefficient functions live on the base domain in R^(2n-1).  The tangential
antiholomorphic fields are Xbar_a = d/dzbar_a - (r_zbar_a / r_zbar_n) d/dzbar_n
for a = 1..n-1, applied through the chart as

    d/dzbar_a f = (f_{x_{2a-1}} + i f_{x_{2a}}) / 2,
    d/dzbar_n f = f_{x_n} / 2.

Tangential (0,q)-forms are stored per ascending multi-index over {1..n-1}
(0-based internally).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .geometry import GraphDefiningFunction


def multi_indices(n, q):
    """Ascending q-tuples over the tangential indices 0..n-2."""
    return list(combinations(range(n - 1), q))


def insert_index(a, J):
    """Insert a into ascending tuple J: returns (sign, K) or (0, None).

    Sign accounts for moving dzbar_a past the leading entries of dzbar^J.
    """
    if a in J:
        return 0, None
    pos = sum(1 for j in J if j < a)
    K = tuple(sorted(J + (a,)))
    return (-1) ** pos, K


def extract_index(a, K):
    """Inverse of insert_index: sign with which dzbar_a ^ dzbar^(K\\a) = dzbar^K."""
    pos = K.index(a)
    return (-1) ** pos, K[:pos] + K[pos + 1 :]


def wirtinger_bar(gradients):
    """Chart Wirtinger derivatives (d/dzbar_1 .. d/dzbar_n) from real gradients.

    ``gradients`` has shape (..., 2n-1); returns shape (..., n).
    """
    g = np.asarray(gradients)
    d = g.shape[-1]
    n = (d + 1) // 2
    out = np.empty(g.shape[:-1] + (n,), dtype=complex)
    for a in range(n - 1):
        out[..., a] = 0.5 * (g[..., 2 * a] + 1j * g[..., 2 * a + 1])
    out[..., n - 1] = 0.5 * g[..., d - 1]
    return out


def xbar_coefficients(M: GraphDefiningFunction, x):
    """The multipliers -r_zbar_a / r_zbar_n of d/dzbar_n, shape (..., n-1)."""
    pack = M.derivatives(x)
    rzb = pack.r_zbar
    return -rzb[..., : M.n - 1] / rzb[..., M.n - 1 : M.n]


def xbar_apply(M: GraphDefiningFunction, x, gradients):
    """Apply all Xbar_a to a function given its real chart gradient.

    Returns shape (..., n-1) of Xbar_a f values.
    """
    wb = wirtinger_bar(gradients)
    mult = xbar_coefficients(M, x)
    return wb[..., : M.n - 1] + mult * wb[..., M.n - 1 : M.n]


def tangential_projection(M: GraphDefiningFunction, x, full_components):
    """Project a (0,1)-form given on dzbar_1..dzbar_n onto tangential indices.

    Modulo the contact form, dzbar_n = -sum_b (r_zbar_b / r_zbar_n) dzbar_b;
    ``full_components`` has shape (..., n) and the result (..., n-1).
    """
    comp = np.asarray(full_components)
    pack = M.derivatives(x)
    rzb = pack.r_zbar
    ratio = rzb[..., : M.n - 1] / rzb[..., M.n - 1 : M.n]
    return comp[..., : M.n - 1] - comp[..., M.n - 1 : M.n] * ratio


@dataclass
class TangentialForm:
    """Tangential (0,q)-form with callable coefficients.

    ``coeffs`` maps ascending multi-indices (tuples over 0..n-2) to functions
    x -> array; ``grads`` optionally maps the same keys to functions returning
    real chart gradients of shape (..., 2n-1).  Missing indices are zero.
    """

    n: int
    q: int
    coeffs: dict
    grads: dict | None = None

    def value(self, x, J):
        fn = self.coeffs.get(tuple(J))
        if fn is None:
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape[:-1], dtype=complex)
        return np.asarray(fn(x), dtype=complex)

    def values(self, x):
        return {J: self.value(x, J) for J in multi_indices(self.n, self.q)}

    def gradient(self, x, J, fd_step=1e-4):
        """Real chart gradient of coefficient J (exact if provided, else FD)."""
        x = np.asarray(x, dtype=float)
        if self.grads is not None and tuple(J) in self.grads:
            return np.asarray(self.grads[tuple(J)](x), dtype=complex)
        d = x.shape[-1]
        out = np.empty(x.shape[:-1] + (d,), dtype=complex)
        for i in range(d):
            xp = x.copy()
            xp[..., i] += fd_step
            xm = x.copy()
            xm[..., i] -= fd_step
            out[..., i] = (self.value(xp, J) - self.value(xm, J)) / (2 * fd_step)
        return out


def dbar_m(form: TangentialForm, M: GraphDefiningFunction, x, fd_step=1e-4):
    """Tangential dbar of a form at points x: dict K (q+1 indices) -> values.

    (dbar f)_K = sum_{a in K} sign(a, K) Xbar_a f_{K \\ a}.
    """
    x = np.asarray(x, dtype=float)
    n, q = form.n, form.q
    out = {K: np.zeros(x.shape[:-1], dtype=complex)
           for K in multi_indices(n, q + 1)}
    mult = xbar_coefficients(M, x)
    for J in multi_indices(n, q):
        if form.coeffs.get(J) is None and (
            form.grads is None or J not in form.grads
        ):
            continue
        g = form.gradient(x, J, fd_step=fd_step)
        wb = wirtinger_bar(g)
        xb = wb[..., : n - 1] + mult * wb[..., n - 1 : n]
        for a in range(n - 1):
            sign, K = insert_index(a, J)
            if sign == 0:
                continue
            out[K] = out[K] + sign * xb[..., a]
    return out


def as_tangential_form(n, q, coeffs, grads=None):
    return TangentialForm(n=n, q=q, coeffs=dict(coeffs),
                          grads=None if grads is None else dict(grads))


def wedge_values(n, qa, va, qb, vb):
    """Pointwise wedge of two tangential forms given as value dicts.

    Returns dict over (qa+qb)-indices.  Used for matrix-valued connection
    forms via entrywise application by the caller.
    """
    out = {K: 0.0 for K in multi_indices(n, qa + qb)}
    for Ja, ca in va.items():
        for Jb, cb in vb.items():
            if set(Ja) & set(Jb):
                continue
            merged = Ja + Jb
            # parity of sorting the concatenation
            perm = np.argsort(merged, kind="stable")
            inv = 0
            for i in range(len(perm)):
                for j in range(i + 1, len(perm)):
                    if perm[i] > perm[j]:
                        inv += 1
            K = tuple(sorted(merged))
            out[K] = out[K] + ((-1) ** inv) * ca * cb
    return out
