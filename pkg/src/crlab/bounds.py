"""Analytic bounds for the model singular integrals and geometric reports.

The model integral is int |(z', zbar', x_n)^J| / ||z'|^2 + i x_n|^a dV over
the inner region {|z'| <= rho1} or the annulus {rho1 <= |z'| <= rho0}, with
|x_n| <= rho0 in both cases.  ``outl_bound`` returns the predicted rho1
dependence (regime selected by beta = j_{2n-1} + |J| - 2a + 2n - 1) with the
constant normalized to one; ``outl_oracle`` evaluates the integral by an
angular closed form times a log-dyadic 2D Gauss quadrature.

The report functions sample the quasi-distance, the approximate Heisenberg
transformation, and the kernel ratio invariants on a hypersurface preset.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma, lgamma

import numpy as np

from .geometry import GraphDefiningFunction
from .kernels import kernel_point_data

# ---------------------------------------------------------------------------
# model integral: regimes and quadrature oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutlCase:
    """One instance of the model integral."""

    n: int
    a: float
    J: tuple          # 2n-1 non-negative integer exponents
    rho1: float
    rho0: float
    region: str = "inner"   # 'inner' or 'annulus'

    def __post_init__(self):
        if len(self.J) != 2 * self.n - 1:
            raise ValueError("J must have 2n-1 entries")
        if not 0.0 < self.rho1 <= self.rho0:
            raise ValueError("need 0 < rho1 <= rho0")
        if self.region not in ("inner", "annulus"):
            raise ValueError("region must be 'inner' or 'annulus'")

    @property
    def beta(self):
        J = self.J
        return (J[-1] + sum(J) - 2.0 * self.a) + 2 * self.n - 1


def outl_bound(case: OutlCase):
    """(regime label, bound value with C = 1) for the case's region."""
    beta = case.beta
    n, r1, r0 = case.n, case.rho1, case.rho0
    if case.region == "inner":
        if beta >= 2 * n - 3:
            return "bounded", r1 ** (2 * n - 2)
        if abs(beta + 1.0) < 1e-12:
            return "log", 1.0 + abs(np.log(r1))
        if beta > -1.0:
            return "power", r1 ** (1.0 + beta)
        raise ValueError("inner integral diverges for beta < -1")
    # annulus
    if beta >= 2 * n - 3:
        return "bounded", r0 - r1
    if abs(beta + 1.0) < 1e-12:
        return "log", np.log(r0 / r1)
    return "power", abs(r1 ** (1.0 + beta) - r0 ** (1.0 + beta))


def _angular_moment(n, pair_exponents):
    """int_{S^{2n-3}} prod_i |w_i|^{p_i} dsigma(w) for w in C^{n-1}, |w| = 1.

    Under t_i = |w_i|^2 the normalized round measure pushes to the uniform
    (flat Dirichlet) measure on the simplex, giving a Gamma-function closed
    form for the moments.
    """
    k = n - 1
    area = 2.0 * np.pi**k / gamma(k)  # area of S^(2k-1)
    logm = lgamma(k) - lgamma(k + sum(p / 2.0 for p in pair_exponents))
    for p in pair_exponents:
        logm += lgamma(1.0 + p / 2.0)
    return area * np.exp(logm)


def _dyadic_panels(lo, hi, nodes=12, min_scale=1e-14):
    """Gauss-Legendre nodes/weights on log-dyadic panels of [lo, hi]."""
    gl_x, gl_w = np.polynomial.legendre.leggauss(nodes)
    edges = [hi]
    bottom = max(lo, hi * min_scale)
    while edges[-1] > bottom * (1.0 + 1e-12):
        edges.append(max(edges[-1] / 2.0, bottom))
    xs, ws = [], []
    for top, bot in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (top + bot), 0.5 * (top - bot)
        xs.append(mid + half * gl_x)
        ws.append(half * gl_w)
    return np.concatenate(xs), np.concatenate(ws)


def outl_oracle(case: OutlCase, nodes=12):
    """Quadrature value of the model integral for the case's region."""
    n, J = case.n, case.J
    pair = [J[i] + J[n - 1 + i] for i in range(n - 1)]
    ang = _angular_moment(n, pair)
    rpow = 2 * n - 3 + sum(pair)
    jlast = J[-1]

    if case.region == "inner":
        r, wr = _dyadic_panels(0.0, case.rho1, nodes)
    else:
        r, wr = _dyadic_panels(case.rho1, case.rho0, nodes)
    t, wt = _dyadic_panels(0.0, case.rho0, nodes)

    R, T = np.meshgrid(r, t, indexing="ij")
    WR, WT = np.meshgrid(wr, wt, indexing="ij")
    integrand = R**rpow * T**jlast / (R**4 + T**2) ** (case.a / 2.0)
    # factor 2: x_n integral symmetrized to [0, rho0]
    return 2.0 * ang * float(np.sum(WR * WT * integrand))


def outl_slope(case: OutlCase, rho1_values, nodes=12):
    """Log-log regression slope of the oracle against rho1."""
    vals = [
        outl_oracle(
            OutlCase(case.n, case.a, case.J, float(r1), case.rho0, case.region),
            nodes,
        )
        for r1 in rho1_values
    ]
    lx = np.log(np.asarray(rho1_values, dtype=float))
    ly = np.log(np.asarray(vals))
    slope = np.polyfit(lx, ly, 1)[0]
    return float(slope), vals


def predicted_slope(case: OutlCase):
    """The rho1 exponent of the selected bound (0 for the log regime)."""
    beta = case.beta
    n = case.n
    if case.region == "inner":
        if beta >= 2 * n - 3:
            return 2.0 * n - 2.0
        if abs(beta + 1.0) < 1e-12:
            return 0.0
        return 1.0 + beta
    if beta >= 2 * n - 3 or abs(beta + 1.0) < 1e-12:
        return 0.0
    # annulus, power regime: dominated by the rho1 endpoint when 1+beta < 0
    return min(1.0 + beta, 0.0)


# ---------------------------------------------------------------------------
# sampling helpers
# ---------------------------------------------------------------------------


def sample_domain(M: GraphDefiningFunction, rho, count, rng):
    """Approximately uniform draws from D_rho via the radial boundary solve."""
    u = rng.standard_normal((count, M.d))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    tmax = M.boundary_radius(rho, u)
    t = tmax * rng.random(count) ** (1.0 / M.d)
    return t[:, None] * u


def sample_boundary(M: GraphDefiningFunction, rho, count, rng):
    u = rng.standard_normal((count, M.d))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    t = M.boundary_radius(rho, u)
    return t[:, None] * u


# ---------------------------------------------------------------------------
# geometric reports
# ---------------------------------------------------------------------------


def quasi_distance_report(M: GraphDefiningFunction, rho, sigmas=(0.1, 0.3, 0.5),
                          samples=100_000, seed=0):
    """Empirical constants of the quasi-distance d(zeta, z) = |r_z.(zeta-z)|.

    Reports the minimum of d/|zeta-z|^2, the maximum quasi-triangle ratio
    d(zeta,z)/(d(zeta,v)+d(v,z)), and per sigma the boundary gaps
    min d/(rho*sigma)^2 and min |zeta_n - z_n|/(rho^2 sigma) between interior
    points of D_{(1-sigma)rho} and boundary points of D_rho.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    x = sample_domain(M, rho, samples, rng)
    xi = sample_domain(M, rho, samples, rng)
    z = M.lift(x)
    zeta = M.lift(xi)
    kpd = kernel_point_data(M, x, xi)
    sep2 = np.sum(np.abs(zeta - z) ** 2, axis=-1)
    ok = sep2 > 1e-20
    lower = float(np.min(kpd.dist[ok] / sep2[ok]))

    v = sample_domain(M, rho, samples, rng)
    d_xz = kernel_point_data(M, x, xi).dist
    d_xv = kernel_point_data(M, v, xi).dist   # d(zeta, v)
    d_vz = kernel_point_data(M, x, v).dist    # d(v, z)
    den = d_xv + d_vz
    ok = den > 1e-20
    triangle = float(np.max(d_xz[ok] / den[ok]))

    gaps = {}
    m = max(samples // 4, 1000)
    for sigma in sigmas:
        xin = sample_domain(M, (1.0 - sigma) * rho, m, rng)
        xbd = sample_boundary(M, rho, m, rng)
        k = kernel_point_data(M, xin, xbd)
        zn_in = M.lift(xin)[..., M.n - 1]
        zn_bd = M.lift(xbd)[..., M.n - 1]
        gaps[sigma] = {
            "dist_over_rhosigma2": float(np.min(k.dist) / (rho * sigma) ** 2),
            "zn_gap_over_rho2sigma": float(
                np.min(np.abs(zn_bd - zn_in)) / (rho**2 * sigma)
            ),
        }
    return {
        "lower_ratio": lower,
        "triangle_ratio": triangle,
        "boundary_gaps": gaps,
    }


def transform_report(M: GraphDefiningFunction, rho, samples=100_000, seed=0):
    """Sampling checks of the approximate Heisenberg transformation.

    Containment of the image in B_{9 rho}, the bi-Lipschitz ratio over random
    pairs, the graph-expansion residual h = Im zeta*_n - |zeta*'|^2, and the
    kernel ratio invariants |T1 - 1|, |T2 - 1| and |N(z,zeta)|/|N(zeta,z)|.
    """
    rng = np.random.Generator(np.random.Philox(seed + 1))
    x = sample_domain(M, rho, samples, rng)
    xi = sample_domain(M, rho, samples, rng)
    eta = sample_domain(M, rho, samples, rng)

    k1 = kernel_point_data(M, x, xi)
    k2 = kernel_point_data(M, x, eta)
    norms = np.linalg.norm(k1.xi_star, axis=-1)
    violations = int(np.sum(norms > 9.0 * rho))

    dpts = np.linalg.norm(xi - eta, axis=-1)
    dimg = np.linalg.norm(k1.xi_star - k2.xi_star, axis=-1)
    ok = dpts > 1e-12
    ratios = dimg[ok] / dpts[ok]
    h = np.imag(k1.zeta_star[..., M.n - 1]) - np.sum(
        np.abs(k1.zeta_star[..., : M.n - 1]) ** 2, axis=-1
    )
    gsq = np.sum(k1.xi_star**2, axis=-1)
    ok2 = gsq > 1e-20

    ksw = kernel_point_data(M, xi, x)  # swapped arguments
    okn = np.abs(k1.Ncal) > 1e-20
    return {
        "containment_violations": violations,
        "max_image_norm_over_rho": float(norms.max() / rho),
        "bilip_min": float(ratios.min()),
        "bilip_max": float(ratios.max()),
        "h_max": float(np.max(np.abs(h))),
        "h_over_xi2_max": float(np.max(np.abs(h[ok2]) / gsq[ok2])),
        "t1_dev_max": float(np.max(np.abs(k1.T1[okn] - 1.0))),
        "t2_dev_max": float(np.max(np.abs(k1.T2[okn] - 1.0))),
        "n_swap_ratio_max": float(
            np.max(np.abs(ksw.Ncal[okn]) / np.abs(k1.Ncal[okn]))
        ),
    }
