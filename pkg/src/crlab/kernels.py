"""Integral-kernel building blocks on a graph hypersurface.

Pointwise kernel quantities (the two denominator pairings, the model quadric
polarization N and its remainders, the ratio invariants), the approximate
Heisenberg transformation and its inverse, the smooth radial cutoff, and the
exterior-algebra assembly of the interior/boundary homotopy kernels.

Generator layout for the assembly, given n (ngen = 3n-2):
    0 .. n-2        dzeta_1 .. dzeta_{n-1}      (integration variable)
    n-1 .. 2n-3     dzetabar_1 .. dzetabar_{n-1}
    2n-2            dxi_n (real chart coordinate on the hypersurface)
    2n-1 .. 3n-3    dzbar_1 .. dzbar_{n-1}      (target variable, tangential)

dzeta_n and dzetabar_n are substituted at assembly time by their tangential
expressions; dzbar_n is folded into dzbar_1..dzbar_{n-1} via the contact-form
relation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crcalc import multi_indices
from .exterior import GradedElement, indices_mask, mask_indices
from .geometry import GraphDefiningFunction


# ---------------------------------------------------------------------------
# pointwise kernel data
# ---------------------------------------------------------------------------


@dataclass
class KernelPointData:
    """Scalar kernel quantities for pairs (xi, x) of base points."""

    N0: np.ndarray        # r_zeta . (zeta - z)
    S0: np.ndarray        # r_z . (zeta - z)
    Ncal: np.ndarray      # |zeta' - z'|^2 + 2i Im S0
    A_rem: np.ndarray     # -2 S0 - conj(Ncal)
    B_rem: np.ndarray     # 2 N0 - Ncal
    T1: np.ndarray        # 2 N0 / Ncal
    T2: np.ndarray        # -2 S0 / conj(Ncal)
    zeta_star: np.ndarray  # Heisenberg image in C^n
    xi_star: np.ndarray    # base coordinates of the transformed point
    dist: np.ndarray       # quasi-distance |S0|


def kernel_point_data(M: GraphDefiningFunction, x, xi) -> KernelPointData:
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n = M.n
    z = M.lift(x)
    zeta = M.lift(xi)
    rz = M.derivatives(x).r_z
    rzeta = M.derivatives(xi).r_z
    diff = zeta - z
    N0 = np.sum(rzeta * diff, axis=-1)
    S0 = np.sum(rz * diff, axis=-1)
    dp = np.sum(np.abs(diff[..., : n - 1]) ** 2, axis=-1)
    Ncal = dp + 2j * np.imag(S0)
    A_rem = -2.0 * S0 - np.conj(Ncal)
    B_rem = 2.0 * N0 - Ncal
    T1 = 2.0 * N0 / Ncal
    T2 = -2.0 * S0 / np.conj(Ncal)
    zeta_star = np.empty(np.shape(N0) + (n,), dtype=complex)
    zeta_star[..., : n - 1] = diff[..., : n - 1]
    zeta_star[..., n - 1] = -2j * S0
    xi_star = np.empty(xi.shape[:-1] + (M.d,))
    xi_star[..., 0 : 2 * n - 2 : 2] = np.real(zeta_star[..., : n - 1])
    xi_star[..., 1 : 2 * n - 2 : 2] = np.imag(zeta_star[..., : n - 1])
    xi_star[..., M.d - 1] = np.real(zeta_star[..., n - 1])
    return KernelPointData(
        N0=N0, S0=S0, Ncal=Ncal, A_rem=A_rem, B_rem=B_rem, T1=T1, T2=T2,
        zeta_star=zeta_star, xi_star=xi_star, dist=np.abs(S0),
    )


def gauge(xi_star):
    """Non-isotropic gauge s = | |zeta*'|^2 + i xi*_n |."""
    xi_star = np.asarray(xi_star, dtype=float)
    d = xi_star.shape[-1]
    rp2 = np.sum(xi_star[..., : d - 1] ** 2, axis=-1)
    return np.hypot(rp2, xi_star[..., d - 1])


def heisenberg_forward(M: GraphDefiningFunction, x, xi):
    """Base coordinates of the approximate Heisenberg image of xi about x."""
    return kernel_point_data(M, x, xi).xi_star


def heisenberg_inverse(M: GraphDefiningFunction, x, xi_star, tol=1e-10,
                       max_iter=80):
    """Invert the approximate Heisenberg transformation about x.

    The tangential part is a translation, so only the last coordinate needs a
    (safeguarded, damped) Newton solve of 2 Im[r_z(x) . (zeta(t) - z)] =
    xi*_n.  Returns (xi, converged_mask).
    """
    x = np.asarray(x, dtype=float)
    xi_star = np.asarray(xi_star, dtype=float)
    n, d = M.n, M.d
    z = M.lift(x)
    rz = M.derivatives(x).r_z

    xi = np.empty(xi_star.shape)
    xi[..., : d - 1] = x[..., : d - 1] + xi_star[..., : d - 1]
    target = xi_star[..., d - 1]

    zp = xi[..., 0 : 2 * n - 2 : 2] + 1j * xi[..., 1 : 2 * n - 2 : 2]
    tang = 2.0 * np.imag(np.sum(rz[..., : n - 1] * (zp - z[..., : n - 1]), axis=-1))
    t = x[..., d - 1] + (target - tang) / (2.0 * np.imag(rz[..., n - 1]))

    step_cap = 2.0 * (np.abs(target) + M.rho0 + 1.0)
    converged = np.zeros(target.shape, dtype=bool)
    for _ in range(max_iter):
        xi[..., d - 1] = t
        kpd_xi_star = kernel_point_data(M, x, xi).xi_star
        resid = kpd_xi_star[..., d - 1] - target
        converged = np.abs(resid) <= tol
        if np.all(converged):
            break
        rh_xn = M.rhat.gradient(xi)[..., d - 1]
        deriv = 2.0 * np.imag(rz[..., n - 1] * (1.0 + 1j * rh_xn))
        deriv = np.where(np.abs(deriv) < 1e-6, np.sign(deriv + 1e-30), deriv)
        step = np.clip(resid / deriv, -step_cap, step_cap)
        t = np.where(converged, t, t - step)
    xi[..., d - 1] = t
    return xi, converged


# ---------------------------------------------------------------------------
# smooth radial cutoff
# ---------------------------------------------------------------------------


def _bump(s):
    out = np.zeros_like(s)
    pos = s > 1e-8
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _bump_d1(s):
    out = np.zeros_like(s)
    pos = s > 1e-8
    out[pos] = np.exp(-1.0 / s[pos]) / s[pos] ** 2
    return out


def _bump_d2(s):
    out = np.zeros_like(s)
    pos = s > 1e-8
    out[pos] = np.exp(-1.0 / s[pos]) * (1.0 / s[pos] ** 4 - 2.0 / s[pos] ** 3)
    return out


def smooth_step(s, order=0):
    """C-infinity step S with S=0 for s<=0, S=1 for s>=1, and derivatives."""
    s = np.asarray(s, dtype=float)
    f, g = _bump(s), _bump(1.0 - s)
    f1, g1 = _bump_d1(s), -_bump_d1(1.0 - s)
    f2, g2 = _bump_d2(s), _bump_d2(1.0 - s)
    tot = f + g
    if order == 0:
        return f / tot
    if order == 1:
        return (f1 * g - f * g1) / tot**2
    if order == 2:
        num = f1 * g - f * g1
        return (f2 * g - f * g2) / tot**2 - 2.0 * num * (f1 + g1) / tot**3
    raise ValueError("order must be 0, 1 or 2")


class Cutoff:
    """Radial cutoff: 1 on D_{rho(1-sigma/2)}, 0 outside D_{rho(1-sigma/4)}.

    Exact gradient and Hessian via the chain rule through phi.
    """

    def __init__(self, M: GraphDefiningFunction, rho, sigma):
        self.M = M
        self.rho = float(rho)
        self.sigma = float(sigma)
        self.lo = (1.0 - sigma / 2.0) ** 2
        self.hi = (1.0 - sigma / 4.0) ** 2

    def _s(self, x):
        t = self.M.phi(x) / self.rho**2
        return (self.hi - t) / (self.hi - self.lo)

    def value(self, x):
        return smooth_step(self._s(x))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        ds_dt = -1.0 / (self.hi - self.lo)
        s1 = smooth_step(self._s(x), 1)
        tgrad = self.M.phi_gradient(x) / self.rho**2
        return (s1 * ds_dt)[..., None] * tgrad

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        ds_dt = -1.0 / (self.hi - self.lo)
        s = self._s(x)
        s1 = smooth_step(s, 1)
        s2 = smooth_step(s, 2)
        tgrad = self.M.phi_gradient(x) / self.rho**2
        thess = (2.0 * np.eye(self.M.d) + self.M.rhat.hessian(x)) / self.rho**2
        outer = tgrad[..., :, None] * tgrad[..., None, :]
        return (s2 * ds_dt**2)[..., None, None] * outer \
            + (s1 * ds_dt)[..., None, None] * thess


# ---------------------------------------------------------------------------
# kernel assembly
# ---------------------------------------------------------------------------


def _gen_layout(n):
    dz = list(range(0, n - 1))
    dzb = list(range(n - 1, 2 * n - 2))
    dxin = 2 * n - 2
    dzbar = list(range(2 * n - 1, 3 * n - 2))
    return dz, dzb, dxin, dzbar


# Orientation of the hypersurface chart relative to the coordinate volume
# dx_1 ^ dy_1 ^ ... ^ dx_n.  The graph is oriented as the boundary of the
# subgraph region {y_n < |z'|^2 + rhat}, whose induced orientation is minus
# the coordinate one; with this choice the calibrated homotopy constant lies
# on the negative real axis for n = 4.
CHART_ORIENTATION = -1.0


def zeta_top_constant(n):
    """Constant kappa with dzeta'^ dzetabar'^ dxi_n (ascending) = kappa dV_M.

    dV_M is the oriented chart volume (CHART_ORIENTATION times the coordinate
    volume element of R^(2n-1)).
    """
    dz, dzb, dxin, _ = _gen_layout(n)
    ngen = 3 * n - 2
    d = 2 * n - 1
    val = np.zeros((ngen, d), dtype=complex)
    for a in range(n - 1):
        val[dz[a], 2 * a] = 1.0
        val[dz[a], 2 * a + 1] = 1j
        val[dzb[a], 2 * a] = 1.0
        val[dzb[a], 2 * a + 1] = -1j
    val[dxin, d - 1] = 1.0
    top = GradedElement.monomial(ngen, dz + dzb + [dxin])
    return CHART_ORIENTATION * complex(top.evaluate(val))


class KernelAssembly:
    """Exterior-algebra factory for the homotopy kernels about a target x.

    All coefficient arrays are batched over the integration points xi.
    ``q_out`` is the antiholomorphic output degree (input degree q_out + 1).
    """

    def __init__(self, M: GraphDefiningFunction, x):
        self.M = M
        self.n = M.n
        self.ngen = 3 * M.n - 2
        self.x = np.asarray(x, dtype=float)
        self.packx = M.derivatives(self.x)
        self.dz, self.dzb, self.dxin, self.dzbar = _gen_layout(M.n)

    # -- one-form substitutions -------------------------------------------

    def _dzeta_n(self, pack):
        """dzeta_n restricted to the hypersurface chart."""
        n, ngen = self.n, self.ngen
        terms = {1 << self.dxin: 1.0 + 1j * pack.rhat_xn}
        for a in range(n - 1):
            terms[1 << self.dz[a]] = 1j * pack.r_z[..., a]
            terms[1 << self.dzb[a]] = 1j * np.conj(pack.r_z[..., a])
        return GradedElement(ngen, terms)

    def _dzeta(self, pack, j):
        if j < self.n - 1:
            return GradedElement.generator(self.ngen, self.dz[j])
        return self._dzeta_n(pack)

    def _dzetabar(self, pack, k):
        if k < self.n - 1:
            return GradedElement.generator(self.ngen, self.dzb[k])
        # dzetabar_n = 2 dxi_n - dzeta_n
        dzn = self._dzeta_n(pack)
        return GradedElement(self.ngen, {1 << self.dxin: 2.0}) - dzn

    def _dzbar_tangential(self, k):
        """Target-side dzbar_k with dzbar_n folded through the contact form."""
        if k < self.n - 1:
            return GradedElement.generator(self.ngen, self.dzbar[k])
        rzb = self.packx.r_zbar
        terms = {}
        for b in range(self.n - 1):
            terms[1 << self.dzbar[b]] = -(rzb[..., b] / rzb[..., self.n - 1])
        return GradedElement(self.ngen, terms)

    # -- kernel factors ----------------------------------------------------

    def factors(self, pack):
        """(dbar_zeta r, r_z . dzeta, Levi two-form, mixed z-factor)."""
        n = self.n
        dzeta = [self._dzeta(pack, j) for j in range(n)]
        dzetabar = [self._dzetabar(pack, k) for k in range(n)]

        dbar_r = GradedElement(self.ngen)
        rzdz = GradedElement(self.ngen)
        for j in range(n):
            dbar_r = dbar_r + pack.r_z[..., j] * dzeta[j]
            rzdz = rzdz + self.packx.r_z[..., j] * dzeta[j]

        levi = GradedElement(self.ngen)
        for j in range(n):
            for k in range(n):
                c = pack.r_zzbar[..., j, k]
                if np.all(c == 0):
                    continue
                levi = levi + c * dzetabar[k].wedge(dzeta[j])

        mixed = GradedElement(self.ngen)
        rzzb_x = self.packx.r_zzbar
        for j in range(n):
            col = GradedElement(self.ngen)
            for k in range(n):
                c = rzzb_x[..., j, k]
                if np.all(c == 0):
                    continue
                col = col + c * self._dzbar_tangential(k)
            mixed = mixed + col.wedge(dzeta[j])
        return dbar_r, rzdz, levi, mixed, dzeta

    def numerator(self, pack, q_out, variant):
        """Kernel numerator form for output degree q_out.

        variant 'interior': dbar_r ^ rzdz ^ levi^(n-2-q) ^ mixed^q;
        variant 'boundary': dzeta_n ^ (same with levi power n-3-q).
        """
        n = self.n
        dbar_r, rzdz, levi, mixed, dzeta = self.factors(pack)
        if variant == "interior":
            lp = n - 2 - q_out
        elif variant == "boundary":
            lp = n - 3 - q_out
        else:
            raise ValueError("variant must be 'interior' or 'boundary'")
        if q_out < 0:
            raise ValueError("negative output degree")
        if lp < 0:
            # not enough Levi factors left: the kernel vanishes identically
            return GradedElement(self.ngen)
        out = dbar_r.wedge(rzdz).wedge(levi.wedge_power(lp)).wedge(
            mixed.wedge_power(q_out)
        )
        if variant == "boundary":
            out = dzeta[n - 1].wedge(out)
        return out

    def denominator(self, kpd: KernelPointData, pack, q_out, variant):
        if variant == "interior":
            return kpd.N0 ** (self.n - 1 - q_out) * kpd.S0 ** (q_out + 1)
        zn_diff = pack.z[..., self.n - 1] - self.packx.z[..., self.n - 1]
        return zn_diff * kpd.N0 ** (self.n - 2 - q_out) * kpd.S0 ** (q_out + 1)

    # -- full integrand ----------------------------------------------------

    def integrand_terms(self, xi, psi_values, q_out, variant):
        """Kernel wedge input-form, split by output multi-index.

        ``psi_values``: dict multi-index (length q_out+1) -> batch coefficient
        of the input form in dzetabar'.  Returns dict output multi-index I ->
        list of (zeta_mask, coeff) pairs where zeta_mask is a monomial in the
        integration-variable generators of full degree (2n-1 interior, 2n-2
        boundary) and coeff includes the 1/denominator factor.
        """
        xi = np.asarray(xi, dtype=float)
        n = self.n
        pack = self.M.derivatives(xi)
        kpd = kernel_point_data(self.M, self.x, xi)
        num = self.numerator(pack, q_out, variant)
        den = self.denominator(kpd, pack, q_out, variant)

        psi_elem = GradedElement(self.ngen)
        for J, c in psi_values.items():
            psi_elem = psi_elem + GradedElement.monomial(
                self.ngen, [self.dzb[j] for j in J], c
            )
        full = num.wedge(psi_elem)

        zeta_deg = 2 * n - 1 if variant == "interior" else 2 * n - 2
        zeta_all = (1 << (2 * n - 1)) - 1
        out = {I: [] for I in multi_indices(n, q_out)}
        for mask, coeff in full.terms.items():
            zmask = mask & zeta_all
            bmask = mask & ~zeta_all
            if zmask.bit_count() != zeta_deg:
                continue
            I = tuple(i - self.dzbar[0] for i in mask_indices(bmask))
            if I not in out:
                continue
            # our canonical order puts all zeta generators before dzbar ones,
            # so no extra sign is needed to split off dzbar^I
            out[I].append((zmask, coeff / den))
        return out


def interior_integrand(assembly: KernelAssembly, xi, psi_values, q_out,
                       kappa=None):
    """Volume-density coefficients of the interior kernel integrand.

    Returns dict I -> batch array: the dV(xi) coefficient of the (2n-1)-form
    kernel ^ input at each xi.
    """
    n = assembly.n
    if kappa is None:
        kappa = zeta_top_constant(n)
    terms = assembly.integrand_terms(xi, psi_values, q_out, "interior")
    out = {}
    for I, pieces in terms.items():
        total = 0.0
        for _zmask, coeff in pieces:  # unique top monomial
            total = total + coeff
        out[I] = total * kappa
    return out
