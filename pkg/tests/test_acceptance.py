"""End-to-end acceptance runs at production quadrature budgets.

These tests exercise the full pipeline at the advertised tolerances and
budgets; together they take on the order of an hour or more of CPU time,
far longer than the unit tests.  Wall-clock gates that assume an 8-worker
machine are scaled by the parallelism actually available.
"""

import os
import time

import numpy as np
import pytest

from crlab.bounds import (
    outl_slope,
    predicted_slope,
    quasi_distance_report,
    sample_domain,
    transform_report,
)
from crlab.cli import (
    SinCosPotential,
    contraction_experiment,
    holder_gain_ratios,
    main,
    standard_outl_cases,
)
from crlab.fields import standard_test_form
from crlab.geometry import (
    GraphDefiningFunction,
    QuarticPerturbation,
    TrigPerturbation,
)
from crlab.kam import ScalarPotentialForm, Schedule, solve
from crlab.normlab import (
    SampledField,
    TrigPolynomial,
    ball_grid,
    check_interpolation,
)
from crlab.operators import (
    QuadratureSpec,
    calibrate_constant,
    homotopy_residual,
    normalization_constant,
)

CPUS = os.cpu_count() or 1
WORKERS = min(8, CPUS)
# wall budgets below are stated for an 8-worker machine; scale for fewer
CORE_SCALE = 8.0 / WORKERS


def rel_sup_residual(results):
    """Relative sup residual over targets/components plus its rel. SE."""
    worst, ref, se = 0.0, 0.0, 0.0
    for res in results:
        for r in res.values():
            ref = max(ref, abs(r["phi"]))
            if abs(r["residual"]) > worst:
                worst, se = abs(r["residual"]), r["se"]
    return worst / ref, se / ref


def test_homotopy_identity_production_budget():
    """The homotopy identity closes on the quadric in C^4 for a (0,1)-form.

    Ten interior targets, relative sup residual <= 0.15 at 2e6 samples per
    integral; quadrupling the budget to 8e6 must not move the residual by
    more than three combined standard errors.  Wall budget: 45 minutes on
    8 workers.
    """
    t0 = time.time()
    M = GraphDefiningFunction(4)
    rho = sigma = 0.5
    phi = standard_test_form(M, rho, sigma)
    rng = np.random.Generator(np.random.Philox(0))
    targets = sample_domain(M, (1.0 - sigma) * rho, 10, rng)

    quad2 = QuadratureSpec(samples=2_000_000, strata=40, seed=0,
                           boundary_res=6, workers=WORKERS)
    rel2, se2 = rel_sup_residual(
        homotopy_residual(M, rho, sigma, phi, 1, targets, quad2))
    assert rel2 <= 0.15

    quad8 = QuadratureSpec(samples=8_000_000, strata=40, seed=1,
                           boundary_res=6, workers=WORKERS)
    rel8, se8 = rel_sup_residual(
        homotopy_residual(M, rho, sigma, phi, 1, targets, quad8))
    assert rel8 <= rel2 + 3.0 * float(np.hypot(se2, se8))
    assert time.time() - t0 <= 45 * 60 * CORE_SCALE


def test_operator_constant_calibration():
    """Least-squares fit of the overall operator constant in C^4.

    Stated target: -2/(2 pi i)^4 to 5% in modulus and 0.1 rad in phase.
    """
    M = GraphDefiningFunction(4)
    rho = sigma = 0.5
    phi = standard_test_form(M, rho, sigma)
    rng = np.random.Generator(np.random.Philox(2))
    targets = sample_domain(M, (1.0 - sigma) * rho, 6, rng)
    quad = QuadratureSpec(samples=400_000, strata=40, seed=0, boundary_res=6)
    c_fit, _, _ = calibrate_constant(M, rho, sigma, phi, 1, targets, quad)

    stated = -2.0 / (2.0j * np.pi) ** 4
    ratio = c_fit / stated
    assert abs(np.angle(ratio)) <= 0.1
    assert abs(abs(ratio) - 1.0) <= 0.05, (
        f"fitted constant {c_fit:.6g} has modulus {abs(ratio):.4f} times the "
        f"stated target -2/(2 pi i)^4 = {stated:.6g}.  Calibrations at "
        f"increasing budgets converge to -1/(2 pi i)^4 = "
        f"{normalization_constant(4):.6g}, exactly half the stated value, "
        f"and the homotopy identity closes with that constant (see the "
        f"production-budget identity test above and the calibrate-constants "
        f"suite).  The factor-2 discrepancy is therefore in the stated "
        f"target, not in the operators."
    )


def test_model_integral_slopes():
    """Twenty model-integral cases in C^2 and C^3 match the predicted
    small-parameter slopes to 0.15, inside a 10-minute wall budget."""
    t0 = time.time()
    for case, grid in standard_outl_cases():
        slope, vals = outl_slope(case, grid)
        assert all(v > 0 for v in vals)
        assert slope == pytest.approx(predicted_slope(case), abs=0.15), case
    assert time.time() - t0 <= 10 * 60


def test_interpolation_inequality_ratios():
    """Empirical interpolation-inequality ratios stay below 10 for fifty
    random trigonometric fields on the unit ball of R^3."""
    rng = np.random.Generator(np.random.Philox(4))
    pts = ball_grid(3, radius=1.0, per_axis=7)
    for i in range(50):
        u = SampledField(pts, TrigPolynomial.random(rng, 3))
        for a, b in [(0.0, 1.0), (0.0, 2.0), (1.0, 2.0)]:
            for lam in (0.25, 0.5, 0.75):
                rep = check_interpolation(u, a, b, lam)
                assert rep["ratio"] <= 10.0, (i, a, b, lam, rep["ratio"])


# the quartic preset at eps = 0.01 satisfies the admissibility gate on the
# reference ball of radius 0.25, so it is built and sampled at that scale
PERTURBED = dict(rhat=QuarticPerturbation(0.01), rho0=0.25, rho=0.25)


def test_quasi_distance_constants():
    """Quasi-distance lower bound, quasi-triangle inequality, and boundary
    gap constants stay within a factor 20 on the quadric and on the
    eps = 0.01 quartic perturbation, at 1e5 samples."""
    surfaces = [
        (GraphDefiningFunction(3), 0.5),
        (GraphDefiningFunction(3, PERTURBED["rhat"], rho0=PERTURBED["rho0"]),
         PERTURBED["rho"]),
    ]
    for M, rho in surfaces:
        rep = quasi_distance_report(M, rho, samples=100_000, seed=0)
        assert rep["lower_ratio"] >= 1.0 / 20.0
        assert rep["triangle_ratio"] <= 20.0
        for g in rep["boundary_gaps"].values():
            assert g["dist_over_rhosigma2"] >= 1.0 / 20.0
            assert g["zn_gap_over_rho2sigma"] >= 1.0 / 20.0


def test_transform_containment_and_bilipschitz():
    """The approximate Heisenberg transform maps D_rho into the gauge ball
    of radius 9 rho with zero violations over 1e5 samples and is
    bi-Lipschitz within [1/10, 10]."""
    surfaces = [
        (GraphDefiningFunction(3), 0.5),
        (GraphDefiningFunction(3, PERTURBED["rhat"], rho0=PERTURBED["rho0"]),
         PERTURBED["rho"]),
    ]
    for M, rho in surfaces:
        rep = transform_report(M, rho, samples=100_000, seed=0)
        assert rep["containment_violations"] == 0
        assert rep["max_image_norm_over_rho"] <= 9.0
        assert 1.0 / 10.0 <= rep["bilip_min"] <= rep["bilip_max"] <= 10.0


def test_kernel_denominator_ratios():
    """The two kernel denominators stay within 1/2 of their model values
    (zero violations over 1e5 samples) on admissible perturbations, and are
    exact on the quadric."""
    rep0 = transform_report(GraphDefiningFunction(3), 0.5,
                            samples=100_000, seed=0)
    assert rep0["t1_dev_max"] <= 1e-12
    assert rep0["t2_dev_max"] <= 1e-12
    surfaces = [
        (GraphDefiningFunction(3, TrigPerturbation(0.009)), 0.5),
        (GraphDefiningFunction(3, PERTURBED["rhat"], rho0=PERTURBED["rho0"]),
         PERTURBED["rho"]),
    ]
    for M, rho in surfaces:
        rep = transform_report(M, rho, samples=100_000, seed=0)
        assert rep["t1_dev_max"] < 0.5
        assert rep["t2_dev_max"] < 0.5


def test_rapid_iteration_contraction_and_solve():
    """One iteration step contracts quadratically in C^4 (log-log slope of
    the post-step norm against the pre-step norm >= 1.8 over amplitudes
    0.1/0.05/0.025 at a shared dilation), and the full solver drives a
    manufactured connection form to an audited relative residual <= 0.1.
    Wall budget: 60 minutes."""
    t0 = time.time()
    M = GraphDefiningFunction(4)
    quad = QuadratureSpec(samples=10_000, strata=12, seed=0, boundary_res=4,
                          min_per_stratum=16)
    schedule = Schedule(rho0=1.0, max_steps=6, tol_rel=0.05)

    rep = contraction_experiment(M, [0.1, 0.05, 0.025], quad, schedule,
                                 grid_res=3)
    assert rep["slope"] >= 1.8, rep

    audit = QuadratureSpec(samples=400_000, strata=40, seed=0, boundary_res=6)
    sol = solve(M, ScalarPotentialForm(M, SinCosPotential(0.05, M.d)), quad,
                schedule=schedule, grid_res=3, audit_quad=audit)
    assert sol["converged"], sol
    assert sol["history"][-1] <= 0.05 * sol["history"][0]
    assert sol["audit"]["residual_rel"] <= 0.1
    assert time.time() - t0 <= 60 * 60


def test_holder_gain_of_integral_operator():
    """P applied to a rough (0,1)-form gains regularity: 1/2-Holder
    difference quotients stay flat (final/initial <= 2) while 0.9-Holder
    quotients grow (final/initial >= 2) as the separation shrinks."""
    M = GraphDefiningFunction(2)
    quad = QuadratureSpec(samples=200_000, strata=40, seed=0, boundary_res=6)
    rep = holder_gain_ratios(M, 0.5, 0.5, quad)
    assert rep["half"][-1] / rep["half"][0] <= 2.0
    assert rep["nine_tenths"][-1] / rep["nine_tenths"][0] >= 2.0


def test_cli_reports_are_deterministic(tmp_path):
    """results.csv is byte-identical across 1/4/8 workers and across
    re-runs with the same seed."""
    base = ["verify-homotopy", "--n", "3", "--samples", "50000",
            "--strata", "20", "--boundary-res", "5", "--targets", "3",
            "--tol", "0.5"]
    blobs = []
    for w in ("1", "4", "8"):
        out = tmp_path / f"w{w}"
        assert main(base + ["--workers", w, "--output-dir", str(out)]) == 0
        blobs.append((out / "results.csv").read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]
    out2 = tmp_path / "rerun"
    assert main(base + ["--workers", "4", "--output-dir", str(out2)]) == 0
    assert (out2 / "results.csv").read_bytes() == blobs[0]
