"""Graph hypersurface geometry: charts, derivatives, gating, presets."""

import numpy as np
import pytest

from crlab.geometry import (
    DilatedPerturbation,
    GraphDefiningFunction,
    QuarticPerturbation,
    TrigPerturbation,
    ZeroPerturbation,
)


def fd_partial(fn, x, i, h=1e-6):
    xp = x.copy()
    xp[i] += h
    xm = x.copy()
    xm[i] -= h
    return (fn(xp) - fn(xm)) / (2 * h)


@pytest.mark.parametrize("pert", [
    QuarticPerturbation(0.003),
    TrigPerturbation(0.003),
    DilatedPerturbation(TrigPerturbation(0.003), 0.5),
])
def test_perturbation_partials_match_finite_differences(pert):
    rng = np.random.default_rng(0)
    d = 5
    for _ in range(5):
        x = rng.uniform(-0.8, 0.8, d)
        g = pert.gradient(x)
        h = pert.hessian(x)
        for i in range(d):
            assert g[..., i] == pytest.approx(
                fd_partial(pert.value, x, i), abs=1e-7)
            for j in range(d):
                assert h[..., i, j] == pytest.approx(
                    fd_partial(lambda y: pert.gradient(y)[..., j], x, i),
                    abs=1e-6)


def test_zero_perturbation_vanishes():
    z = ZeroPerturbation()
    x = np.ones((3, 5))
    assert np.all(z.value(x) == 0)
    assert np.all(z.gradient(x) == 0)


def test_gate_rejects_large_perturbation():
    with pytest.raises(ValueError):
        GraphDefiningFunction(3, QuarticPerturbation(5.0))


def test_lift_satisfies_defining_equation():
    M = GraphDefiningFunction(3, TrigPerturbation(0.005))
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.5, 0.5, (20, 5))
    z = M.lift(x)
    zp, xn = z[..., :2], x[..., -1]
    # Im z_n = |z'|^2 + rhat(x) and Re z_n = x_n
    assert np.allclose(np.real(z[..., 2]), xn)
    assert np.allclose(
        np.imag(z[..., 2]),
        np.sum(np.abs(zp) ** 2, axis=-1) + np.real(M.rhat.value(x)),
        atol=1e-12,
    )


def test_phi_gradient_matches_fd():
    M = GraphDefiningFunction(2, QuarticPerturbation(0.0008))
    rng = np.random.default_rng(2)
    for _ in range(5):
        x = rng.uniform(-0.5, 0.5, 3)
        g = M.phi_gradient(x)
        for i in range(3):
            assert g[..., i] == pytest.approx(
                fd_partial(M.phi, x, i), abs=1e-7)


def test_derivatives_closed_forms_on_quadric():
    """On the quadric: r_z = (zbar', i/2), r_zzbar = diag(1,...,1,0), r_zz = 0."""
    rng = np.random.default_rng(3)
    x = rng.uniform(-0.4, 0.4, 5)
    Mq = GraphDefiningFunction(3)
    pq = Mq.derivatives(x[None])
    zq = Mq.lift(x[None])
    assert np.allclose(pq.r_z[0, :2], np.conj(zq[0, :2]))
    assert np.allclose(pq.r_z[0, 2], 0.5j)
    assert np.allclose(pq.r_zzbar[0, :2, :2], np.eye(2))
    assert np.allclose(pq.r_zz[0], 0.0)


def test_inside_and_boundary_radius_consistent():
    M = GraphDefiningFunction(2, QuarticPerturbation(0.0008))
    rng = np.random.default_rng(4)
    u = rng.standard_normal((50, 3))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    rho = 0.7
    t = M.boundary_radius(rho, u)
    pts = t[:, None] * u
    assert np.allclose(M.phi(pts), rho**2, atol=1e-8)
    assert np.all(M.inside(0.99 * pts, rho))
    assert not np.any(M.inside(1.01 * pts, rho))


def test_boundary_parametrize_lies_on_level_set():
    M = GraphDefiningFunction(3, TrigPerturbation(0.005))
    rho = 0.6
    rng = np.random.default_rng(5)
    thetas = rng.uniform(0.1, np.pi - 0.1, (10, 4))
    pts, tangents = M.boundary_parametrize(rho, thetas)
    assert np.allclose(M.phi(pts), rho**2, atol=1e-6)
    # tangents stay on the level set to first order
    g = M.phi_gradient(pts)
    proj = np.einsum("...ik,...i->...k", tangents, g)
    assert np.max(np.abs(proj)) < 1e-3


def test_measured_eps_small_for_small_perturbation():
    M = GraphDefiningFunction(3, QuarticPerturbation(0.0008))
    assert 0.0 < M.eps < 1.0 / M.c0_gate
    Mq = GraphDefiningFunction(3)
    assert Mq.eps == 0.0


def test_dilated_perturbation_scaling_identity():
    base = TrigPerturbation(0.005)
    delta = 0.3
    dil = DilatedPerturbation(base, delta)
    rng = np.random.default_rng(6)
    x = rng.uniform(-0.5, 0.5, (7, 5))
    y = x.copy()
    y[..., :-1] *= delta
    y[..., -1] *= delta**2
    assert np.allclose(dil.value(x), base.value(y) / delta**2)
