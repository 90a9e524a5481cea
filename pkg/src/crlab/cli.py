"""Experiment runner: configures presets, runs verification suites, writes
results.csv + summary.json.

Subcommands: verify-homotopy, calibrate-constants, measure-holder,
check-bounds, check-inequalities, transform-report, kam-solve.  Every flag can
also be given in a key=value config file (--config); explicit flags win.
Output goes to --output-dir (default: $CRLAB_OUTPUT_DIR or the working
directory).  Exit status: 0 all gates pass, 2 configuration error,
3 numerical failure or failed gate.

results.csv is long-format with columns experiment, case, metric, value,
stderr, seed, wall_ms.  The wall_ms column is written as 0 so that re-runs
with the same seed are byte-identical regardless of machine load and worker
count; real timings go to summary.json.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .bounds import (
    OutlCase,
    outl_bound,
    outl_oracle,
    outl_slope,
    predicted_slope,
    quasi_distance_report,
    sample_domain,
    transform_report,
)
from .fields import (
    CutoffField,
    HolderPeak,
    ProductField,
    form_from_fields,
    standard_test_form,
)
from .geometry import (
    GraphDefiningFunction,
    QuarticPerturbation,
    TrigPerturbation,
)
from .kam import (
    GateError,
    IterationState,
    ScalarPotentialForm,
    Schedule,
    dilate,
    form_sup_norm,
    kam_step,
    solve,
)
from .normlab import (
    SampledField,
    TrigPolynomial,
    ball_grid,
    check_interpolation,
    check_product,
)
from .operators import (
    FormValues,
    QuadratureSpec,
    apply_operator,
    calibrate_constant,
    homotopy_residual,
    normalization_constant,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------


def make_surface(n, preset, eps, rho0=1.0):
    if preset == "quadric":
        rhat = None
    elif preset == "quartic":
        rhat = QuarticPerturbation(eps)
    elif preset == "trig":
        rhat = TrigPerturbation(eps)
    else:
        raise ConfigError(f"unknown preset {preset!r}")
    return GraphDefiningFunction(n, rhat, rho0=rho0)


def quad_from_args(args, workers=None):
    return QuadratureSpec(
        samples=int(args.samples),
        strata=int(args.strata),
        seed=int(args.seed),
        boundary_res=int(args.boundary_res),
        workers=int(workers if workers is not None else args.workers),
    )


def read_config_file(path):
    """key=value lines ('#' comments); keys match flag names."""
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"bad config line: {raw.rstrip()}")
            key, val = line.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def fmt(v):
    """Deterministic scalar formatting for the CSV."""
    if isinstance(v, complex):
        return f"{v.real:.12g}{v.imag:+.12g}j"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_reports(outdir, experiment, rows, summary, seed):
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, "results.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["experiment", "case", "metric", "value", "stderr",
                    "seed", "wall_ms"])
        for case, metric, value, stderr in rows:
            w.writerow([experiment, case, metric, fmt(value),
                        fmt(stderr), seed, 0])
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return csv_path


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def run_verify_homotopy(args):
    M = make_surface(args.n, args.preset, args.eps, rho0=max(1.0, args.rho))
    quad = quad_from_args(args)
    phi = standard_test_form(M, args.rho, args.sigma)
    rng = np.random.Generator(np.random.Philox(args.seed))
    targets = sample_domain(M, (1.0 - args.sigma) * args.rho, args.targets, rng)

    results = homotopy_residual(M, args.rho, args.sigma, phi, args.q,
                                targets, quad)
    rows, worst, ref, se_worst = [], 0.0, 0.0, 0.0
    for i, res in enumerate(results):
        for K, r in res.items():
            case = f"target{i}/K{''.join(map(str, K))}"
            rows.append((case, "phi", r["phi"], 0.0))
            rows.append((case, "residual", r["residual"], r["se"]))
            ref = max(ref, abs(r["phi"]))
            if abs(r["residual"]) > worst:
                worst, se_worst = abs(r["residual"]), r["se"]
    rel = worst / ref if ref > 0 else float("inf")
    rows.append(("all", "rel_sup_residual", rel, se_worst / ref if ref else 0))
    ok = rel <= args.tol
    return rows, {"rel_sup_residual": rel, "reference": ref,
                  "tolerance": args.tol, "targets": int(args.targets)}, ok


def run_calibrate_constants(args):
    M = make_surface(args.n, args.preset, args.eps, rho0=max(1.0, args.rho))
    quad = quad_from_args(args)
    phi = standard_test_form(M, args.rho, args.sigma)
    rng = np.random.Generator(np.random.Philox(args.seed))
    targets = sample_domain(M, (1.0 - args.sigma) * args.rho, args.targets, rng)

    c_fit, expected, _results = calibrate_constant(
        M, args.rho, args.sigma, phi, args.q, targets, quad
    )
    ratio = c_fit / expected
    mod_err = abs(abs(ratio) - 1.0)
    phase_err = abs(np.angle(ratio))
    rows = [
        ("fit", "c_fit", c_fit, 0.0),
        ("fit", "expected", expected, 0.0),
        ("fit", "modulus_error", mod_err, 0.0),
        ("fit", "phase_error_rad", phase_err, 0.0),
    ]
    ok = mod_err <= args.tol_mod and phase_err <= args.tol_phase
    return rows, {"c_fit": c_fit, "expected": expected,
                  "modulus_error": mod_err, "phase_error_rad": phase_err}, ok


def holder_gain_ratios(M, rho, sigma, quad, kmax=6, x0=None, alpha=0.6,
                       width=0.25, tag=0):
    """Holder difference quotients of P applied to a rough (0,1)-form.

    The coefficient is |x - x0|^alpha times a bump: continuous but not C^1 at
    x0.  Quotients |u(x0 + 2s e) - u(x0 + s e)| / s^gamma are measured at
    separations s = 2^-k, k = 1..kmax, along the first coordinate, with the
    pairs approaching the singular point.  (Pairs straddling x0 are useless
    here: the peak is radially even about x0, so symmetric differences cancel
    the singular response and leave only quadrature noise.)  All pairs share
    one quadrature stream, so the differences benefit from common random
    numbers.  Returns {"seps": [...], "half": [...], "nine_tenths": [...]}.
    """
    d = M.d
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    peak = ProductField(CutoffField(M, rho, sigma),
                        HolderPeak(x0, alpha=alpha, width=width))
    form = form_from_fields(M.n, 1, {(0,): peak})
    seps = [2.0**-k for k in range(1, kmax + 1)]
    pts = []
    for s in seps:
        e = np.zeros(d)
        e[0] = s
        pts.append(x0 + 2.0 * e)
        pts.append(x0 + e)
    vals, _ses = apply_operator(M, rho, "P", FormValues(form), 1, pts, quad,
                                tag=tag)
    u = vals[()]
    half, nine = [], []
    for k, s in enumerate(seps):
        diff = abs(u[2 * k] - u[2 * k + 1])
        half.append(diff / s**0.5)
        nine.append(diff / s**0.9)
    return {"seps": seps, "half": half, "nine_tenths": nine}


def run_measure_holder(args):
    M = make_surface(args.n, args.preset, args.eps, rho0=max(1.0, args.rho))
    quad = quad_from_args(args)
    rep = holder_gain_ratios(M, args.rho, args.sigma, quad, kmax=args.kmax)
    rows = []
    for s, h, n9 in zip(rep["seps"], rep["half"], rep["nine_tenths"]):
        case = f"sep{s:g}"
        rows.append((case, "ratio_half", h, 0.0))
        rows.append((case, "ratio_0.9", n9, 0.0))
    half_trend = rep["half"][-1] / rep["half"][0]
    nine_trend = rep["nine_tenths"][-1] / rep["nine_tenths"][0]
    rows.append(("all", "half_trend", half_trend, 0.0))
    rows.append(("all", "nine_tenths_trend", nine_trend, 0.0))
    ok = half_trend <= 2.0 and nine_trend >= 2.0
    return rows, {"half_trend": half_trend, "nine_tenths_trend": nine_trend,
                  "gates": "half_trend <= 2 and 0.9-trend >= 2"}, ok


def standard_outl_cases():
    """20 model-integral cases strictly inside their asymptotic regimes.

    Inner power cases keep -1 < beta < 2n-3 with j_{2n-1} + 1 < a (so the
    small-scale window dominates); inner bounded cases keep j_{2n-1} >= a (so
    the integrand is order one and the volume scaling is attained); the log
    regime is exercised on the annulus where it is the true asymptotic, and
    annulus power cases keep beta < -1 (inner-endpoint dominated).
    """
    inner = [0.1, 0.05, 0.025]
    ann_log = [1e-4, 2.5e-5, 6.25e-6]
    ann_pow = [1e-3, 5e-4, 2.5e-4]
    cases = []
    for n, a, J, region, grid in [
        (2, 1.25, (0, 0, 0), "inner", inner),
        (2, 1.6, (1, 0, 0), "inner", inner),
        (2, 1.4, (0, 0, 0), "inner", inner),
        (2, 1.5, (0, 0, 0), "inner", inner),
        (2, 1.0, (0, 0, 2), "inner", inner),
        (2, 2.0, (0, 0, 2), "inner", inner),
        (2, 1.0, (0, 0, 1), "inner", inner),
        (2, 2.0, (0, 0, 0), "annulus", ann_log),
        (2, 2.5, (1, 0, 0), "annulus", ann_log),
        (2, 2.5, (0, 0, 0), "annulus", ann_pow),
        (2, 3.0, (0, 0, 0), "annulus", ann_pow),
        (3, 2.0, (0, 0, 0, 0, 0), "inner", inner),
        (3, 2.75, (0, 0, 0, 0, 1), "inner", inner),
        (3, 2.5, (1, 0, 0, 0, 0), "inner", inner),
        (3, 1.0, (0, 0, 0, 0, 1), "inner", inner),
        (3, 2.0, (0, 0, 0, 0, 2), "inner", inner),
        (3, 3.0, (0, 0, 0, 0, 0), "annulus", ann_log),
        (3, 3.5, (0, 0, 1, 0, 0), "annulus", ann_log),
        (3, 4.0, (0, 0, 0, 0, 0), "annulus", ann_pow),
        (3, 3.5, (0, 0, 0, 0, 0), "annulus", ann_pow),
    ]:
        cases.append((OutlCase(n, a, J, grid[0], 1.0, region), grid))
    return cases


def run_check_bounds(args):
    rows = []
    worst_dev = 0.0
    fitted_c = {}
    for case, grid in standard_outl_cases():
        slope, vals = outl_slope(case, grid)
        pred = predicted_slope(case)
        label, bound = outl_bound(case)
        ratio = vals[0] / bound
        cid = (f"n{case.n}_a{case.a:g}_J{''.join(map(str, case.J))}"
               f"_{case.region}")
        rows.append((cid, "beta", case.beta, 0.0))
        rows.append((cid, "regime", label, 0.0))
        rows.append((cid, "oracle", vals[0], 0.0))
        rows.append((cid, "oracle_over_bound", ratio, 0.0))
        rows.append((cid, "slope", slope, 0.0))
        rows.append((cid, "predicted_slope", pred, 0.0))
        worst_dev = max(worst_dev, abs(slope - pred))
        if not (np.isfinite(ratio) and ratio > 0):
            worst_dev = float("inf")
        fitted_c[case.n] = max(fitted_c.get(case.n, 0.0), ratio)
    for n, c in sorted(fitted_c.items()):
        rows.append((f"n{n}", "fitted_constant", c, 0.0))
    rows.append(("all", "worst_slope_deviation", worst_dev, 0.0))
    ok = worst_dev <= args.slope_tol
    return rows, {"worst_slope_deviation": worst_dev,
                  "fitted_constants": {str(k): v for k, v in fitted_c.items()},
                  "slope_tolerance": args.slope_tol}, ok


def run_check_inequalities(args):
    rng = np.random.Generator(np.random.Philox(args.seed))
    pts = ball_grid(3, radius=1.0, per_axis=args.per_axis)
    rows = []
    worst = 0.0
    pairs = [(0.0, 1.0), (0.0, 2.0), (1.0, 2.0)]
    lams = [0.25, 0.5, 0.75]
    for i in range(args.fields):
        u = SampledField(pts, TrigPolynomial.random(rng, 3))
        for a, b in pairs:
            for lam in lams:
                rep = check_interpolation(u, a, b, lam)
                case = f"field{i}_a{a:g}_b{b:g}_lam{lam:g}"
                rows.append((case, "interp_ratio", rep["ratio"], 0.0))
                worst = max(worst, rep["ratio"])
    worst_prod = 0.0
    for i in range(args.product_cases):
        u = SampledField(pts, TrigPolynomial.random(rng, 3))
        v = SampledField(pts, TrigPolynomial.random(rng, 3))
        for a in (0.5, 1.0, 1.5):
            rep = check_product(u, v, a)
            rows.append((f"prod{i}_a{a:g}", "product_ratio", rep["ratio"], 0.0))
            worst_prod = max(worst_prod, rep["ratio"])
    rows.append(("all", "worst_interp_ratio", worst, 0.0))
    rows.append(("all", "worst_product_ratio", worst_prod, 0.0))
    ok = worst <= args.ratio_bound and worst_prod <= args.ratio_bound
    return rows, {"worst_interp_ratio": worst,
                  "worst_product_ratio": worst_prod,
                  "ratio_bound": args.ratio_bound}, ok


def run_transform_report(args):
    rows = []
    ok = True
    for preset, eps in [("quadric", 0.0), ("quartic", args.eps)]:
        M = make_surface(args.n, preset, eps, rho0=max(1.0, args.rho))
        qd = quasi_distance_report(M, args.rho, samples=args.samples_geo,
                                   seed=args.seed)
        tr = transform_report(M, args.rho, samples=args.samples_geo,
                              seed=args.seed)
        cid = preset
        rows.append((cid, "lower_ratio", qd["lower_ratio"], 0.0))
        rows.append((cid, "triangle_ratio", qd["triangle_ratio"], 0.0))
        for sig, g in qd["boundary_gaps"].items():
            rows.append((cid, f"dist_gap_sigma{sig:g}",
                         g["dist_over_rhosigma2"], 0.0))
            rows.append((cid, f"zn_gap_sigma{sig:g}",
                         g["zn_gap_over_rho2sigma"], 0.0))
            ok &= g["dist_over_rhosigma2"] >= 1.0 / 20.0
            ok &= g["zn_gap_over_rho2sigma"] >= 1.0 / 20.0
        for key in ("containment_violations", "max_image_norm_over_rho",
                    "bilip_min", "bilip_max", "t1_dev_max", "t2_dev_max",
                    "h_over_xi2_max"):
            rows.append((cid, key, tr[key], 0.0))
        ok &= qd["lower_ratio"] >= 1.0 / 20.0
        ok &= qd["triangle_ratio"] <= 20.0
        ok &= tr["containment_violations"] == 0
        ok &= 1.0 / 10.0 <= tr["bilip_min"] and tr["bilip_max"] <= 10.0
        ok &= tr["t1_dev_max"] < 0.5 and tr["t2_dev_max"] < 0.5
        if preset == "quadric":
            ok &= tr["t1_dev_max"] <= 1e-12 and tr["t2_dev_max"] <= 1e-12
    return rows, {"gates": "quasi-distance, containment, bi-Lipschitz, "
                           "kernel-ratio"}, bool(ok)


class SinCosPotential:
    """u(x) = amp * sin(x_1) cos(x_last) with exact gradient."""

    def __init__(self, amp, d):
        self.amp = float(amp)
        self.d = int(d)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.amp * np.sin(x[..., 0]) * np.cos(x[..., -1])

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape, dtype=float)
        g[..., 0] = self.amp * np.cos(x[..., 0]) * np.cos(x[..., -1])
        g[..., -1] = -self.amp * np.sin(x[..., 0]) * np.sin(x[..., -1])
        return g


def contraction_experiment(M, amps, quad, schedule=None, grid_res=3,
                           delta=None):
    """One rapid-iteration step per amplitude at a shared dilation.

    Returns per-amplitude (norm0, norm1) on the dilated problem plus the
    log-log slope of norm1 against norm0; a slope near 2 exhibits the
    quadratic contraction.
    """
    schedule = schedule or Schedule()
    amps = sorted(amps, reverse=True)
    if delta is None:
        gate0 = schedule.gate(0, M.n, 1)
        delta = 1.0
        while True:
            Md, wd = dilate(M, ScalarPotentialForm(M, SinCosPotential(
                amps[0], M.d)), delta)
            if form_sup_norm(Md, wd, schedule.rho0) <= gate0:
                break
            if delta <= 2.0**-40:
                raise GateError("dilation search failed")
            delta /= 2.0
    pairs = []
    for amp in amps:
        omega = ScalarPotentialForm(M, SinCosPotential(amp, M.d))
        Md, wd = dilate(M, omega, delta)
        n0 = form_sup_norm(Md, wd, schedule.rho0)
        state = IterationState(j=0, rho=schedule.rho0, omega=wd,
                               norm_history=[n0])
        state = kam_step(Md, state, quad, schedule, grid_res=grid_res)
        pairs.append((n0, state.norm_history[-1]))
    lx = np.log([p[0] for p in pairs])
    ly = np.log([p[1] for p in pairs])
    slope = float(np.polyfit(lx, ly, 1)[0]) if len(pairs) > 1 else float("nan")
    return {"delta": delta, "pairs": pairs, "slope": slope}


def run_kam_solve(args):
    M = make_surface(args.n, args.preset, args.eps, rho0=1.0)
    quad = quad_from_args(args)
    schedule = Schedule(rho0=args.rho, max_steps=args.max_steps,
                        tol_rel=args.tol_rel)
    rows = []
    ok = True
    summary = {}

    amps = [float(a) for a in args.amps.split(",")] if args.amps else []
    if len(amps) > 1:
        rep = contraction_experiment(M, amps, quad, schedule,
                                     grid_res=args.grid_res)
        for (n0, n1), amp in zip(rep["pairs"], sorted(amps, reverse=True)):
            rows.append((f"amp{amp:g}", "norm0", n0, 0.0))
            rows.append((f"amp{amp:g}", "norm1", n1, 0.0))
        rows.append(("contraction", "slope", rep["slope"], 0.0))
        rows.append(("contraction", "delta", rep["delta"], 0.0))
        summary["contraction_slope"] = rep["slope"]
        ok &= rep["slope"] >= args.slope_min

    omega = ScalarPotentialForm(M, SinCosPotential(args.amp, M.d))
    audit_quad = QuadratureSpec(
        samples=int(args.audit_samples), strata=int(args.strata),
        seed=int(args.seed), boundary_res=int(args.boundary_res),
    )
    rep = solve(M, omega, quad, schedule=schedule, grid_res=args.grid_res,
                audit_quad=audit_quad)
    if not rep.get("converged"):
        rows.append(("solve", "converged", 0, 0.0))
        summary["solve"] = {k: rep[k] for k in ("converged", "delta")
                            if k in rep}
        return rows, summary, False
    for jstep, nrm in enumerate(rep["history"]):
        rows.append((f"step{jstep}", "omega_norm", nrm, 0.0))
    rows.append(("solve", "delta", rep["delta"], 0.0))
    rows.append(("solve", "steps", rep["steps"], 0.0))
    rows.append(("solve", "residual_rel", rep["audit"]["residual_rel"], 0.0))
    summary["solve"] = {
        "delta": rep["delta"], "steps": rep["steps"],
        "norm0": rep["norm0"],
        "residual_rel": rep["audit"]["residual_rel"],
        "history": rep["history"],
    }
    ok &= rep["audit"]["residual_rel"] <= args.residual_tol
    return rows, summary, bool(ok)


# ---------------------------------------------------------------------------
# argument parsing and entry point
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="crlab",
                                description="CR homotopy-formula laboratory")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, n=4, q=1, rho=0.5, sigma=0.5, samples=200_000):
        sp.add_argument("--config", default=None,
                        help="key=value file mirroring the flags")
        sp.add_argument("--n", type=int, default=n)
        sp.add_argument("--q", type=int, default=q)
        sp.add_argument("--preset", default="quadric",
                        choices=["quadric", "quartic", "trig"])
        sp.add_argument("--eps", type=float, default=0.0)
        sp.add_argument("--rho", type=float, default=rho)
        sp.add_argument("--sigma", type=float, default=sigma)
        sp.add_argument("--samples", type=float, default=samples)
        sp.add_argument("--strata", type=int, default=40)
        sp.add_argument("--boundary-res", type=int, default=6)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--output-dir",
                        default=os.environ.get("CRLAB_OUTPUT_DIR", "."))

    sp = sub.add_parser("verify-homotopy",
                        help="residual of the local homotopy identity")
    common(sp)
    sp.add_argument("--targets", type=int, default=10)
    sp.add_argument("--tol", type=float, default=0.15)
    sp.set_defaults(func=run_verify_homotopy)

    sp = sub.add_parser("calibrate-constants",
                        help="least-squares fit of the operator constant")
    common(sp)
    sp.add_argument("--targets", type=int, default=6)
    sp.add_argument("--tol-mod", type=float, default=0.1)
    sp.add_argument("--tol-phase", type=float, default=0.2)
    sp.set_defaults(func=run_calibrate_constants)

    sp = sub.add_parser("measure-holder",
                        help="Holder difference quotients of the P operator")
    common(sp, n=2, rho=0.5, sigma=0.5)
    sp.add_argument("--kmax", type=int, default=6)
    sp.set_defaults(func=run_measure_holder)

    sp = sub.add_parser("check-bounds",
                        help="model-integral regimes and slopes")
    common(sp, n=2)
    sp.add_argument("--slope-tol", type=float, default=0.15)
    sp.set_defaults(func=run_check_bounds)

    sp = sub.add_parser("check-inequalities",
                        help="interpolation/product norm inequality ratios")
    common(sp, n=2)
    sp.add_argument("--fields", type=int, default=50)
    sp.add_argument("--product-cases", type=int, default=5)
    sp.add_argument("--per-axis", type=int, default=7)
    sp.add_argument("--ratio-bound", type=float, default=10.0)
    sp.set_defaults(func=run_check_inequalities)

    sp = sub.add_parser("transform-report",
                        help="quasi-distance and transformation constants")
    common(sp, n=3)
    sp.add_argument("--samples-geo", type=int, default=100_000)
    sp.set_defaults(func=run_transform_report)

    sp = sub.add_parser("kam-solve",
                        help="rapid-iteration flat-frame solver")
    common(sp, n=4, rho=1.0, samples=20_000)
    sp.add_argument("--amp", type=float, default=0.05)
    sp.add_argument("--amps", default="",
                    help="comma list for the contraction-slope experiment")
    sp.add_argument("--grid-res", type=int, default=3)
    sp.add_argument("--max-steps", type=int, default=6)
    sp.add_argument("--tol-rel", type=float, default=0.05)
    sp.add_argument("--slope-min", type=float, default=1.8)
    sp.add_argument("--residual-tol", type=float, default=0.1)
    sp.add_argument("--audit-samples", type=float, default=200_000)
    sp.set_defaults(func=run_kam_solve)
    return p


def parse_args(argv):
    parser = build_parser()
    # a first pass picks up --config so file values become defaults that
    # explicit flags still override
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    pre, _ = probe.parse_known_args(argv)
    args = parser.parse_args(argv)
    if pre.config:
        cfg = read_config_file(pre.config)
        merged = list(argv)
        explicit = {a.split("=", 1)[0].lstrip("-").replace("-", "_")
                    for a in argv if a.startswith("--")}
        for key, val in cfg.items():
            if key in ("config", "command") or key in explicit:
                continue
            merged.extend([f"--{key.replace('_', '-')}", val])
        args = parser.parse_args(merged)
    return args


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        t0 = time.monotonic()
        rows, extra, ok = args.func(args)
        wall = time.monotonic() - t0
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (GateError, ValueError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    summary = {
        "schema_version": SCHEMA_VERSION,
        "experiment": args.command,
        "passed": bool(ok),
        "seed": int(args.seed),
        "workers": int(getattr(args, "workers", 1)),
        "wall_seconds": wall,
        "details": extra,
    }
    path = write_reports(args.output_dir, args.command, rows, summary,
                         args.seed)
    print(f"{args.command}: {'PASS' if ok else 'FAIL'} -> {path}")
    return 0 if ok else 3


if __name__ == "__main__":
    sys.exit(main())
