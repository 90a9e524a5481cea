"""Rapid-iteration solver: dilation, gates, contraction, residual audit."""

import numpy as np
import pytest

from crlab.bounds import sample_domain
from crlab.geometry import GraphDefiningFunction
from crlab.kam import (
    DilatedMatrixForm,
    ExactMatrixForm,
    GateError,
    GridMatrixForm,
    IterationState,
    ScalarPotentialForm,
    Schedule,
    dilate,
    form_sup_norm,
    integrability_residual,
    kam_step,
    neumann_inverse,
    solve,
    wedge_square_is_zero,
)
from crlab.operators import QuadratureSpec


class SinCos:
    """u = amp * sin(x_1) cos(x_last) with exact gradient."""

    def __init__(self, amp, d=5):
        self.amp = float(amp)
        self.d = d

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.amp * np.sin(x[..., 0]) * np.cos(x[..., -1])

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape, dtype=float)
        g[..., 0] = self.amp * np.cos(x[..., 0]) * np.cos(x[..., -1])
        g[..., -1] = -self.amp * np.sin(x[..., 0]) * np.sin(x[..., -1])
        return g


def small_quad(samples=4000):
    return QuadratureSpec(samples=samples, strata=10, seed=0, boundary_res=4,
                          min_per_stratum=16)


def test_neumann_inverse_gate_and_exactness():
    with pytest.raises(GateError):
        neumann_inverse(np.array([[0.9]]))
    B = np.array([[0.1 + 0.05j]])
    D, rep = neumann_inverse(B)
    assert abs((1 + D[0, 0]) * (1 + B[0, 0]) - 1) < 1e-14
    assert rep["d_norm"] <= rep["bound"] * rep["b_norm"]
    # 2x2 within the gate
    B2 = np.array([[0.1, 0.05], [-0.08, 0.2]])
    D2, _ = neumann_inverse(B2)
    assert np.allclose((np.eye(2) + D2) @ (np.eye(2) + B2), np.eye(2))


def test_dilated_form_matches_composed_potential():
    """Pullback of -dbar u agrees with -dbar(u o T_delta) on the dilated
    surface: the sqrt(delta) coefficient scaling is forced by naturality."""
    M = GraphDefiningFunction(3)
    omega = ScalarPotentialForm(M, SinCos(0.05))
    delta = 0.25
    Md, wd = dilate(M, omega, delta)

    class Composed:
        def value(self, x):
            y = np.asarray(x, float).copy()
            y[..., :-1] *= np.sqrt(delta)
            y[..., -1] *= delta
            return SinCos(0.05).value(y)

        def gradient(self, x):
            y = np.asarray(x, float).copy()
            y[..., :-1] *= np.sqrt(delta)
            y[..., -1] *= delta
            g = SinCos(0.05).gradient(y)
            g[..., :-1] *= np.sqrt(delta)
            g[..., -1] *= delta
            return g

    wd2 = ScalarPotentialForm(Md, Composed())
    rng = np.random.Generator(np.random.Philox(3))
    xs = sample_domain(Md, 0.8, 40, rng)
    v1, v2 = wd.values(xs), wd2.values(xs)
    for J in v1:
        assert np.allclose(v1[J], v2[J], atol=1e-14)


def test_scalar_potential_form_is_integrable():
    M = GraphDefiningFunction(3)
    omega = ScalarPotentialForm(M, SinCos(0.05))
    rng = np.random.Generator(np.random.Philox(1))
    xs = sample_domain(M, 0.5, 8, rng)
    assert integrability_residual(M, omega, xs) < 1e-10
    assert wedge_square_is_zero(omega)


def test_grid_matrix_form_interpolates_and_clamps():
    axes = [np.linspace(-1, 1, 5)] * 3
    mesh = np.meshgrid(*axes, indexing="ij")
    vals = (mesh[0] + 2 * mesh[1])[..., None, None] * np.eye(1)
    g = GridMatrixForm(axes, {(0,): vals.astype(complex)}, 1)
    x = np.array([[0.25, -0.5, 0.0]])
    assert g.values(x)[(0,)][0, 0, 0] == pytest.approx(0.25 - 1.0, abs=1e-12)
    far = np.array([[5.0, 0.0, 0.0]])   # clamped to the grid edge
    assert g.values(far)[(0,)][0, 0, 0] == pytest.approx(1.0, abs=1e-12)


def test_exact_matrix_form_missing_entries_are_zero():
    f = ExactMatrixForm(3, 2, {0: lambda x: np.broadcast_to(
        np.eye(2), x.shape[:-1] + (2, 2))})
    x = np.zeros((4, 5))
    v = f.values(x)
    assert np.allclose(v[(0,)], np.eye(2))
    assert np.allclose(v[(1,)], 0.0)


def test_kam_step_contracts_quadratically():
    M = GraphDefiningFunction(3)
    sch = Schedule(rho0=0.5)
    quad = small_quad()
    pairs = []
    for amp in (0.05, 0.025):
        omega = ScalarPotentialForm(M, SinCos(amp))
        n0 = form_sup_norm(M, omega, 0.5)
        state = IterationState(j=0, rho=0.5, omega=omega, norm_history=[n0])
        state = kam_step(M, state, quad, sch, grid_res=3)
        pairs.append((n0, state.norm_history[-1]))
        assert state.norm_history[-1] < 0.05 * n0
    slope = (np.log(pairs[0][1]) - np.log(pairs[1][1])) / (
        np.log(pairs[0][0]) - np.log(pairs[1][0]))
    assert slope > 1.8


def test_solve_converges_and_audits():
    M = GraphDefiningFunction(3)
    omega = ScalarPotentialForm(M, SinCos(0.05))
    quad = small_quad()
    audit = QuadratureSpec(samples=60_000, strata=20, seed=0, boundary_res=5)
    rep = solve(M, omega, quad, schedule=Schedule(max_steps=4, tol_rel=0.02),
                grid_res=3, audit_quad=audit)
    assert rep["converged"]
    assert 0.0 < rep["delta"] <= 1.0
    assert rep["history"][-1] <= 0.02 * rep["history"][0]
    assert rep["audit"]["residual_rel"] < 0.5
    # the frame product is near the identity for small data
    grid = rep["product_grid"]
    x = np.zeros((1, 5))
    a = grid.values(x)[()][0]
    assert abs(a[0, 0] - 1.0) < 0.1


def test_schedule_gate_shrinks_with_steps():
    sch = Schedule()
    gates = [sch.gate(j, 4, 1) for j in range(4)]
    assert all(g2 < g1 for g1, g2 in zip(gates, gates[1:]))
    assert sch.sigma(0) == 0.5
