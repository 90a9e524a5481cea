"""Strongly pseudoconvex graph hypersurfaces in C^n.

The hypersurface is the zero set of r(z) = -Im z_n + |z'|^2 + rhat(x), where
x = (Re z_1, Im z_1, ..., Re z_{n-1}, Im z_{n-1}, Re z_n) are base coordinates
in R^(2n-1) and the perturbation rhat is small in C^2.  Base points are lifted
by z_n = x_n + i(|z'|^2 + rhat(x)).

Domains are sublevel sets D_rho = {phi < rho^2} of phi(x) = |x|^2 + rhat(x).
All evaluators are vectorized over leading axes of x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


# ---------------------------------------------------------------------------
# perturbation presets with closed-form partial derivatives (order <= 4)
# ---------------------------------------------------------------------------


class Perturbation:
    """Base class: closed-form partial derivatives of rhat up to order four.

    ``partial(x, alpha)`` takes a tuple of coordinate indices (repetitions
    allowed, order irrelevant) and returns the corresponding mixed partial.
    """

    def partial(self, x, alpha):
        raise NotImplementedError

    def value(self, x):
        return self.partial(x, ())

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        return np.stack([self.partial(x, (i,)) for i in range(d)], axis=-1)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        rows = []
        for i in range(d):
            rows.append(
                np.stack([self.partial(x, (i, j)) for j in range(d)], axis=-1)
            )
        return np.stack(rows, axis=-2)


class ZeroPerturbation(Perturbation):
    """rhat = 0: the model quadric."""

    def partial(self, x, alpha):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])


class QuarticPerturbation(Perturbation):
    """rhat(x) = eps * sum_j x_j^4 / scale^2."""

    def __init__(self, eps, scale=1.0):
        self.eps = float(eps)
        self.scale = float(scale)

    def partial(self, x, alpha):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        c = self.eps / self.scale**2
        if len(alpha) == 0:
            return c * np.sum(x**4, axis=-1)
        if len(set(alpha)) > 1:
            return out  # separable: mixed partials vanish
        j = alpha[0]
        k = len(alpha)
        coeff = {1: 4.0, 2: 12.0, 3: 24.0, 4: 24.0}[k]
        return c * coeff * x[..., j] ** (4 - k)


class TrigPerturbation(Perturbation):
    """rhat(x) = eps * sin(x_1) * sin(x_n)."""

    def __init__(self, eps):
        self.eps = float(eps)

    def partial(self, x, alpha):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        k1 = sum(1 for a in alpha if a == 0)
        kn = sum(1 for a in alpha if a == d - 1)
        if k1 + kn != len(alpha):
            return np.zeros(x.shape[:-1])
        cyc = [np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t)]
        f1 = cyc[k1 % 4](x[..., 0])
        fn = cyc[kn % 4](x[..., d - 1])
        return self.eps * f1 * fn


class DilatedPerturbation(Perturbation):
    """Non-isotropic dilation rhat_delta(x) = delta^-2 rhat(delta x', delta^2 x_n).

    The base coordinates x' scale by delta and the last coordinate by delta^2,
    matching the holomorphic ambient map z -> (delta z', delta^2 z_n).
    """

    def __init__(self, base: Perturbation, delta: float):
        self.base = base
        self.delta = float(delta)

    def partial(self, x, alpha):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        y = x.copy()
        y[..., : d - 1] *= self.delta
        y[..., d - 1] *= self.delta**2
        scale = self.delta ** (-2)
        for a in alpha:
            scale *= self.delta**2 if a == d - 1 else self.delta
        return scale * self.base.partial(y, alpha)


# ---------------------------------------------------------------------------
# derivative pack and the hypersurface itself
# ---------------------------------------------------------------------------


@dataclass
class DerivPack:
    """Complex derivative data of the defining function along the graph."""

    z: np.ndarray        # lifted point, shape (..., n)
    r_z: np.ndarray      # holomorphic gradient, shape (..., n)
    r_zz: np.ndarray     # pure second derivatives, shape (..., n, n)
    r_zzbar: np.ndarray  # mixed second derivatives (j, kbar), shape (..., n, n)
    rhat_xn: np.ndarray  # d rhat / d x_n, shape (...)

    @property
    def r_zbar(self):
        return np.conj(self.r_z)


class GraphDefiningFunction:
    """Graph hypersurface r = -Im z_n + |z'|^2 + rhat(x) with its calculus.

    Construction is rejected when the measured perturbation size eps satisfies
    eps * c0_gate >= 1 (the smallness regime of the kernel machinery).
    """

    def __init__(self, n, rhat=None, rho0=1.0, c0_gate=100.0, check_gate=True):
        if n < 2:
            raise ValueError("need n >= 2")
        self.n = int(n)
        self.d = 2 * n - 1
        self.rhat = rhat if rhat is not None else ZeroPerturbation()
        self.rho0 = float(rho0)
        self.c0_gate = float(c0_gate)
        self.eps = self._measure_eps()
        if check_gate and self.eps * self.c0_gate >= 1.0:
            raise ValueError(
                f"perturbation too large: eps={self.eps:.3g} fails the "
                f"C0*eps < 1 gate with C0={self.c0_gate}"
            )

    # -- size measurement --------------------------------------------------

    def _measure_eps(self, samples=512):
        rng = np.random.Generator(np.random.Philox(12345))
        u = rng.standard_normal((samples, self.d))
        u /= np.linalg.norm(u, axis=-1, keepdims=True)
        radii = self.rho0 * rng.random((samples, 1)) ** (1.0 / self.d)
        x = u * radii
        vals = [np.abs(self.rhat.value(x)).max()]
        g = self.rhat.gradient(x)
        vals.append(np.abs(g).max())
        h = self.rhat.hessian(x)
        vals.append(np.abs(h).max())
        return float(max(vals))

    # -- basic maps --------------------------------------------------------

    def split(self, x):
        """Base point -> (z', x_n) with z' complex of shape (..., n-1)."""
        x = np.asarray(x, dtype=float)
        zp = x[..., 0 : 2 * self.n - 2 : 2] + 1j * x[..., 1 : 2 * self.n - 2 : 2]
        return zp, x[..., self.d - 1]

    def lift(self, x):
        """Lift base coordinates to the hypersurface point z in C^n."""
        x = np.asarray(x, dtype=float)
        zp, xn = self.split(x)
        yn = np.sum(np.abs(zp) ** 2, axis=-1) + self.rhat.value(x)
        z = np.empty(x.shape[:-1] + (self.n,), dtype=complex)
        z[..., : self.n - 1] = zp
        z[..., self.n - 1] = xn + 1j * yn
        return z

    def phi(self, x):
        """Domain gauge: phi(x) = |x|^2 + rhat(x); D_rho = {phi < rho^2}."""
        x = np.asarray(x, dtype=float)
        return np.sum(x**2, axis=-1) + self.rhat.value(x)

    def phi_gradient(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * x + self.rhat.gradient(x)

    def inside(self, x, rho):
        return self.phi(x) < rho**2

    # -- Wirtinger derivatives of r along the graph ------------------------

    def derivatives(self, x) -> DerivPack:
        x = np.asarray(x, dtype=float)
        n, d = self.n, self.d
        base = x.shape[:-1]
        z = self.lift(x)
        g = self.rhat.gradient(x)
        H = self.rhat.hessian(x)

        # holomorphic Wirtinger operator on functions of the base coordinates:
        # D_a = (d/dx_{2a} - i d/dx_{2a+1})/2 for a < n-1, D_n = (d/dx_n)/2.
        r_z = np.empty(base + (n,), dtype=complex)
        for a in range(n - 1):
            r_z[..., a] = np.conj(z[..., a]) + 0.5 * (
                g[..., 2 * a] - 1j * g[..., 2 * a + 1]
            )
        r_z[..., n - 1] = 0.5j + 0.5 * g[..., d - 1]

        def DD(a, b):
            # D_a D_b rhat from the real Hessian
            if a < n - 1 and b < n - 1:
                return 0.25 * (
                    H[..., 2 * a, 2 * b]
                    - 1j * H[..., 2 * a, 2 * b + 1]
                    - 1j * H[..., 2 * a + 1, 2 * b]
                    - H[..., 2 * a + 1, 2 * b + 1]
                )
            if a < n - 1:
                return 0.25 * (H[..., 2 * a, d - 1] - 1j * H[..., 2 * a + 1, d - 1])
            if b < n - 1:
                return 0.25 * (H[..., d - 1, 2 * b] - 1j * H[..., d - 1, 2 * b + 1])
            return 0.25 * H[..., d - 1, d - 1]

        def DDbar(a, b):
            # D_a Dbar_b rhat from the real Hessian
            if a < n - 1 and b < n - 1:
                return 0.25 * (
                    H[..., 2 * a, 2 * b]
                    + 1j * H[..., 2 * a, 2 * b + 1]
                    - 1j * H[..., 2 * a + 1, 2 * b]
                    + H[..., 2 * a + 1, 2 * b + 1]
                )
            if a < n - 1:
                return 0.25 * (H[..., 2 * a, d - 1] - 1j * H[..., 2 * a + 1, d - 1])
            if b < n - 1:
                return 0.25 * (H[..., d - 1, 2 * b] + 1j * H[..., d - 1, 2 * b + 1])
            return 0.25 * H[..., d - 1, d - 1]

        r_zz = np.empty(base + (n, n), dtype=complex)
        r_zzbar = np.empty(base + (n, n), dtype=complex)
        for a in range(n):
            for b in range(n):
                r_zz[..., a, b] = DD(a, b)
                r_zzbar[..., a, b] = DDbar(a, b)
                if a == b and a < n - 1:
                    r_zzbar[..., a, b] = r_zzbar[..., a, b] + 1.0

        return DerivPack(z=z, r_z=r_z, r_zz=r_zz, r_zzbar=r_zzbar,
                         rhat_xn=g[..., d - 1])

    # -- boundary parametrization ------------------------------------------

    def boundary_radius(self, rho, u):
        """Solve phi(t u) = rho^2 for t > 0 along unit directions u."""
        u = np.asarray(u, dtype=float)
        t = np.full(u.shape[:-1], float(rho))
        for _ in range(60):
            x = t[..., None] * u
            f = self.phi(x) - rho**2
            df = np.sum(self.phi_gradient(x) * u, axis=-1)
            step = f / df
            t = np.clip(t - step, 0.05 * rho, 4.0 * rho)
            if np.max(np.abs(step)) < 1e-14 * rho:
                break
        return t

    def boundary_parametrize(self, rho, thetas, h=1e-5):
        """Chart of the boundary sphere {phi = rho^2}.

        ``thetas``: spherical angles of shape (N, d-1).  Returns (points,
        tangents) where points has shape (N, d) and tangents (N, d, d-1) holds
        the pushforwards of the chart basis, computed by central differences
        with step h (these carry the full surface element).
        """
        thetas = np.asarray(thetas, dtype=float)

        def chart(th):
            u = sphere_point(th)
            t = self.boundary_radius(rho, u)
            return t[..., None] * u

        pts = chart(thetas)
        tangents = np.empty(pts.shape + (thetas.shape[-1],))
        for i in range(thetas.shape[-1]):
            tp = thetas.copy()
            tp[..., i] += h
            tm = thetas.copy()
            tm[..., i] -= h
            tangents[..., i] = (chart(tp) - chart(tm)) / (2.0 * h)
        return pts, tangents


# ---------------------------------------------------------------------------
# spheres: chart and product quadrature grid
# ---------------------------------------------------------------------------


def sphere_point(th):
    """Spherical-coordinate chart of S^(k) in R^(k+1), k = th.shape[-1]."""
    th = np.asarray(th, dtype=float)
    k = th.shape[-1]
    out = np.empty(th.shape[:-1] + (k + 1,))
    sin_prod = np.ones(th.shape[:-1])
    for i in range(k):
        out[..., i] = sin_prod * np.cos(th[..., i])
        sin_prod = sin_prod * np.sin(th[..., i])
    out[..., k] = sin_prod
    return out


def sphere_grid(k, m):
    """Product quadrature nodes/weights in the angles of S^k.

    Gauss-Legendre with m nodes on each polar angle (0, pi) and m uniform
    nodes on the azimuth [0, 2 pi).  Weights are the bare chart weights; the
    surface element comes from evaluating forms on chart tangent vectors.
    """
    nodes_1d, weights_1d = np.polynomial.legendre.leggauss(m)
    polar = 0.5 * np.pi * (nodes_1d + 1.0)
    wpolar = 0.5 * np.pi * weights_1d
    az = 2.0 * np.pi * (np.arange(m) + 0.5) / m
    waz = np.full(m, 2.0 * np.pi / m)

    axes = [polar] * (k - 1) + [az]
    waxes = [wpolar] * (k - 1) + [waz]
    mesh = np.meshgrid(*axes, indexing="ij")
    wmesh = np.meshgrid(*waxes, indexing="ij")
    thetas = np.stack([g.ravel() for g in mesh], axis=-1)
    weights = np.ones(thetas.shape[0])
    for g in wmesh:
        weights *= g.ravel()
    return thetas, weights
