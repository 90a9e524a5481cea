"""Empirical Holder-norm machinery on sampled fields.

C^{k+alpha} norms are estimated on point clouds: sup norms of exact (or
finite-difference) partial derivatives, and Holder seminorms as maxima over a
deterministic subsample of point pairs.  On top of the norms sit the ratio
checks for the interpolation, product, and scaled-product inequalities; the
harness certifies a uniform empirical constant rather than the existential
constants of the theory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np


# ---------------------------------------------------------------------------
# evaluators with closed-form partial derivatives of any order
# ---------------------------------------------------------------------------


class TrigPolynomial:
    """u(x) = sum_m amp_m * cos(k_m . x + phase_m) with exact partials."""

    def __init__(self, amps, wavevectors, phases):
        self.amps = np.asarray(amps, dtype=float)
        self.wavevectors = np.atleast_2d(np.asarray(wavevectors, dtype=float))
        self.phases = np.asarray(phases, dtype=float)

    @classmethod
    def random(cls, rng, dim, terms=4, max_freq=2.0, amp=1.0):
        amps = amp * rng.uniform(0.2, 1.0, terms)
        kvecs = rng.uniform(-max_freq, max_freq, (terms, dim))
        phases = rng.uniform(0.0, 2.0 * np.pi, terms)
        return cls(amps, kvecs, phases)

    def partial(self, x, alpha=()):
        x = np.asarray(x, dtype=float)
        out = 0.0
        shift = 0.5 * np.pi * len(alpha)
        for amp, k, ph in zip(self.amps, self.wavevectors, self.phases):
            coeff = amp * np.prod([k[i] for i in alpha]) if alpha else amp
            out = out + coeff * np.cos(x @ k + ph + shift)
        return out

    def value(self, x):
        return self.partial(x, ())


class MonomialEvaluator:
    """u(x) = c * prod_i x_i^{p_i} with exact partials."""

    def __init__(self, powers, coeff=1.0):
        self.powers = tuple(int(p) for p in powers)
        self.coeff = float(coeff)

    def partial(self, x, alpha=()):
        x = np.asarray(x, dtype=float)
        p = list(self.powers)
        c = self.coeff
        for i in alpha:
            if p[i] == 0:
                return np.zeros(x.shape[:-1])
            c *= p[i]
            p[i] -= 1
        out = np.full(x.shape[:-1], c)
        for i, pi in enumerate(p):
            if pi:
                out = out * x[..., i] ** pi
        return out

    def value(self, x):
        return self.partial(x, ())


class CallableEvaluator:
    """Wrap a plain value function; partials by central finite differences."""

    def __init__(self, fn, fd_step=1e-4):
        self.fn = fn
        self.fd_step = float(fd_step)

    def partial(self, x, alpha=()):
        x = np.asarray(x, dtype=float)
        if not alpha:
            return np.asarray(self.fn(x))
        i, rest = alpha[0], alpha[1:]
        xp = x.copy()
        xp[..., i] += self.fd_step
        xm = x.copy()
        xm[..., i] -= self.fd_step
        return (self.partial(xp, rest) - self.partial(xm, rest)) / (
            2.0 * self.fd_step
        )

    def value(self, x):
        return np.asarray(self.fn(x))


class ProductEvaluator:
    """Pointwise product with Leibniz-rule partials."""

    def __init__(self, f, g):
        self.f = f
        self.g = g

    def partial(self, x, alpha=()):
        k = len(alpha)
        out = 0.0
        for bits in range(1 << k):
            a = tuple(alpha[i] for i in range(k) if bits >> i & 1)
            b = tuple(alpha[i] for i in range(k) if not bits >> i & 1)
            out = out + self.f.partial(x, a) * self.g.partial(x, b)
        return out

    def value(self, x):
        return self.f.value(x) * self.g.value(x)


class ScaledEvaluator:
    """u(c * x) with the chain-rule factor c per derivative."""

    def __init__(self, base, scale):
        self.base = base
        self.scale = float(scale)

    def partial(self, x, alpha=()):
        y = np.asarray(x, dtype=float) * self.scale
        return self.scale ** len(alpha) * self.base.partial(y, alpha)

    def value(self, x):
        return self.base.value(np.asarray(x, dtype=float) * self.scale)


# ---------------------------------------------------------------------------
# sampled fields and norms
# ---------------------------------------------------------------------------


MAX_PAIRS = 1_000_000


@dataclass
class SampledField:
    """Point cloud with an evaluator exposing value() and partial()."""

    points: np.ndarray
    evaluator: object

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] < 2:
            raise ValueError("need at least two sample points")

    @property
    def dim(self):
        return self.points.shape[1]

    def derived(self, alpha):
        """The field of the partial derivative d^alpha u on the same cloud."""
        return SampledField(self.points, _PartialEvaluator(self.evaluator, alpha))


class _PartialEvaluator:
    def __init__(self, base, alpha):
        self.base = base
        self.alpha = tuple(alpha)

    def partial(self, x, alpha=()):
        return self.base.partial(x, self.alpha + tuple(alpha))

    def value(self, x):
        return self.base.partial(x, self.alpha)


def ball_grid(dim, radius=1.0, per_axis=7):
    """Tensor grid over the cube, pruned to the closed ball."""
    axes = [np.linspace(-radius, radius, per_axis)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=-1)
    return pts[np.linalg.norm(pts, axis=-1) <= radius]


def _pair_indices(npts, max_pairs=MAX_PAIRS):
    """Deterministic pair subsample: all pairs when small, else strided."""
    total = npts * (npts - 1) // 2
    i, j = np.triu_indices(npts, k=1)
    if total <= max_pairs:
        return i, j
    stride = int(np.ceil(total / max_pairs))
    return i[::stride], j[::stride]


def holder_seminorm(field: SampledField, alpha):
    """Sampled Holder-alpha seminorm; returns (value, (x, y) attaining pair)."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    vals = np.asarray(field.evaluator.value(field.points))
    i, j = _pair_indices(field.points.shape[0])
    num = np.abs(vals[i] - vals[j])
    den = np.linalg.norm(field.points[i] - field.points[j], axis=-1) ** alpha
    ratios = num / den
    best = int(np.argmax(ratios))
    return float(ratios[best]), (field.points[i[best]], field.points[j[best]])


def _order_multis(dim, k):
    return list(combinations_with_replacement(range(dim), k))


def sup_derivative_norm(field: SampledField, k):
    """sup over the cloud of max_{|alpha| = k} |d^alpha u|."""
    best = 0.0
    for alpha in _order_multis(field.dim, k):
        v = np.abs(np.asarray(field.evaluator.partial(field.points, alpha)))
        best = max(best, float(v.max()))
    return best


@dataclass
class NormReport:
    k: int
    alpha: float
    sup_norms: list = field(default_factory=list)  # ||d^j u||_0 for j <= k
    seminorm: float = 0.0
    attaining_pair: tuple | None = None

    @property
    def total(self):
        return max(max(self.sup_norms), self.seminorm)


def ck_alpha_norm(field: SampledField, k, alpha=0.0) -> NormReport:
    """C^{k+alpha} norm report: max of derivative sups and the top seminorm."""
    k = int(k)
    sups = [sup_derivative_norm(field, j) for j in range(k + 1)]
    semi, pair = 0.0, None
    if alpha > 0.0:
        for a in _order_multis(field.dim, k):
            s, p = holder_seminorm(field.derived(a), alpha)
            if s > semi:
                semi, pair = s, p
    return NormReport(k=k, alpha=float(alpha), sup_norms=sups, seminorm=semi,
                      attaining_pair=pair)


def norm_value(field: SampledField, a):
    """The C^a norm for real order a >= 0 (fractional part as seminorm)."""
    k = int(np.floor(a + 1e-12))
    alpha = a - k
    if alpha < 1e-12:
        alpha = 0.0
    return ck_alpha_norm(field, k, alpha).total


# ---------------------------------------------------------------------------
# inequality ratio checks
# ---------------------------------------------------------------------------


def check_interpolation(field: SampledField, a, b, lam):
    """Ratio ||u||_{lam*a+(1-lam)*b} / (||u||_a^lam ||u||_b^(1-lam))."""
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0, 1)")
    if not 0.0 <= a < b:
        raise ValueError("need 0 <= a < b")
    c = lam * a + (1.0 - lam) * b
    na = norm_value(field, a)
    nb = norm_value(field, b)
    nc = norm_value(field, c)
    rhs = na**lam * nb ** (1.0 - lam)
    if rhs == 0.0:
        if nc > 0.0:
            raise ValueError("zero right-hand side with nonzero left-hand side")
        return {"lhs": 0.0, "rhs": 0.0, "ratio": 0.0, "order": c}
    return {"lhs": nc, "rhs": rhs, "ratio": nc / rhs, "order": c}


def check_product(u: SampledField, v: SampledField, a):
    """Ratio ||uv||_a / (||u||_0 ||v||_a + ||u||_a ||v||_0)."""
    uv = SampledField(u.points, ProductEvaluator(u.evaluator, v.evaluator))
    lhs = norm_value(uv, a)
    rhs = norm_value(u, 0.0) * norm_value(v, a) + norm_value(u, a) * norm_value(
        v, 0.0
    )
    ratio = lhs / rhs if rhs > 0.0 else 0.0
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio}


def check_scaled_products(fields, d, a, b, c, rho):
    """Scaled-product inequality ratio on a domain comparable to B_rho.

    LHS = rho^e * prod_j ||u_j||_{d_j + b_j} with
    e = sum_j (b_j + d_j - floor(d_j)); RHS = prod ||u_j||_{d_j + a_j} +
    prod ||u_j||_{d_j + c_j}.  Requires (b_j) on the segment [(a_j), (c_j)].
    """
    d = np.asarray(d, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    # b must be a convex combination of the endpoints
    span = c - a
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(np.abs(span) > 1e-12, (b - a) / span, 0.0)
    if np.any(np.abs(b - a - lam * span) > 1e-9) or np.any(
        (lam < -1e-9) | (lam > 1.0 + 1e-9)
    ):
        raise ValueError("(b_j) must lie between (a_j) and (c_j)")
    lam_vals = lam[np.abs(span) > 1e-12]
    if lam_vals.size and np.ptp(lam_vals) > 1e-9:
        raise ValueError("(b_j) must lie on the segment [(a_j), (c_j)]")

    e = float(np.sum(b + d - np.floor(d)))
    lhs = rho**e
    rhs_a, rhs_c = 1.0, 1.0
    for j, f in enumerate(fields):
        lhs *= norm_value(f, d[j] + b[j])
        rhs_a *= norm_value(f, d[j] + a[j])
        rhs_c *= norm_value(f, d[j] + c[j])
    rhs = rhs_a + rhs_c
    ratio = lhs / rhs if rhs > 0.0 else 0.0
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio, "exponent": e}
