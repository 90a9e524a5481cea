"""Picklable scalar fields and test-form builders on the base domain.

Fields expose exact values and (where available) exact real chart gradients so
the tangential dbar of a test form can be computed without finite differences.
"""

from __future__ import annotations

import numpy as np

from .crcalc import TangentialForm
from .geometry import GraphDefiningFunction
from .kernels import Cutoff, smooth_step


class ScalarField:
    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def __mul__(self, other):
        return ProductField(self, other)


class ConstantField(ScalarField):
    def __init__(self, c):
        self.c = c

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.c, dtype=complex)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (x.shape[-1],), dtype=complex)


class ConjCoordinate(ScalarField):
    """zbar_{a+1} restricted to the chart (a < n-1): x_{2a} - i x_{2a+1}."""

    def __init__(self, a):
        self.a = int(a)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., 2 * self.a] - 1j * x[..., 2 * self.a + 1]

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape[:-1] + (x.shape[-1],), dtype=complex)
        g[..., 2 * self.a] = 1.0
        g[..., 2 * self.a + 1] = -1j
        return g


class ProductField(ScalarField):
    def __init__(self, f, g):
        self.f = f
        self.g = g

    def value(self, x):
        return self.f.value(x) * self.g.value(x)

    def gradient(self, x):
        fv = self.f.value(x)[..., None]
        gv = self.g.value(x)[..., None]
        return self.f.gradient(x) * gv + fv * self.g.gradient(x)


class CutoffField(ScalarField):
    """Radial cutoff chi as a scalar field (exact first derivatives)."""

    def __init__(self, M: GraphDefiningFunction, rho, sigma):
        self.cut = Cutoff(M, rho, sigma)

    def value(self, x):
        return self.cut.value(np.asarray(x, dtype=float)) + 0j

    def gradient(self, x):
        return self.cut.gradient(np.asarray(x, dtype=float)) + 0j


class HolderPeak(ScalarField):
    """|x - x0|^alpha times a radial bump: C^0 but not C^1 at x0."""

    def __init__(self, x0, alpha=0.6, width=0.25):
        self.x0 = np.asarray(x0, dtype=float)
        self.alpha = float(alpha)
        self.width = float(width)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x - self.x0, axis=-1)
        bump = smooth_step(2.0 - 2.0 * r / self.width)
        return (r**self.alpha) * bump + 0j

    def gradient(self, x):  # a.e. gradient; unused at the singular point
        x = np.asarray(x, dtype=float)
        diff = x - self.x0
        r = np.linalg.norm(diff, axis=-1)
        rsafe = np.maximum(r, 1e-300)
        bump = smooth_step(2.0 - 2.0 * r / self.width)
        dbump = smooth_step(2.0 - 2.0 * r / self.width, 1) * (-2.0 / self.width)
        radial = self.alpha * rsafe ** (self.alpha - 1.0) * bump \
            + rsafe**self.alpha * dbump
        return (radial / rsafe)[..., None] * diff + 0j


class FieldCoeff:
    """Picklable value adapter for TangentialForm coefficients."""

    def __init__(self, fld):
        self.fld = fld

    def __call__(self, x):
        return self.fld.value(x)


class FieldGrad:
    def __init__(self, fld):
        self.fld = fld

    def __call__(self, x):
        return self.fld.gradient(x)


def form_from_fields(n, q, fields, with_grads=True):
    """TangentialForm from {multi-index: ScalarField}."""
    coeffs = {tuple(J): FieldCoeff(f) for J, f in fields.items()}
    grads = {tuple(J): FieldGrad(f) for J, f in fields.items()} if with_grads else None
    return TangentialForm(n=n, q=q, coeffs=coeffs, grads=grads)


def standard_test_form(M: GraphDefiningFunction, rho, sigma, component=(1,),
                       factor=0):
    """chi * zbar_1 on dzbar^component: the compactly supported test field."""
    chi = CutoffField(M, rho, sigma)
    f = ProductField(chi, ConjCoordinate(factor))
    return form_from_fields(M.n, len(component), {tuple(component): f})
