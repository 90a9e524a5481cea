"""Sparse exterior algebra over an ordered set of odd (degree-one) generators.

A graded element is a dict mapping a bitmask (set of generator indices, each
appearing at most once) to a coefficient.  Coefficients may be python/numpy
scalars or numpy arrays of a common broadcastable shape, so a single algebraic
assembly can be amortized over a whole batch of quadrature samples.

Monomials are stored in ascending generator order; the wedge of two monomials
picks up the parity of the merge permutation.
"""

from __future__ import annotations

import numpy as np

_ZERO_TOL = 0.0  # exact algebra; no coefficient pruning beyond literal zeros


def merge_sign(a: int, b: int) -> int:
    """Sign of sorting the concatenation of ascending monomials a and b.

    Counts inversions: for each generator j in b, the number of generators in a
    with index greater than j.  Returns +1/-1, or 0 if the monomials share a
    generator (the wedge vanishes).
    """
    if a & b:
        return 0
    inversions = 0
    bb = b
    while bb:
        j = (bb & -bb).bit_length() - 1
        inversions += (a >> (j + 1)).bit_count()
        bb &= bb - 1
    return -1 if inversions & 1 else 1


class GradedElement:
    """Element of the exterior algebra on ``ngen`` one-form generators."""

    __slots__ = ("ngen", "terms")

    # defer mixed arithmetic with numpy arrays to our __rmul__
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, ngen, terms=None):
        self.ngen = ngen
        self.terms = {} if terms is None else terms

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, ngen):
        return cls(ngen)

    @classmethod
    def scalar(cls, ngen, value):
        return cls(ngen, {0: value})

    @classmethod
    def generator(cls, ngen, index, coeff=1.0):
        if not 0 <= index < ngen:
            raise ValueError("generator index out of range")
        return cls(ngen, {1 << index: coeff})

    @classmethod
    def monomial(cls, ngen, indices, coeff=1.0):
        """Monomial from an iterable of distinct generator indices.

        Indices need not be sorted; the sorting parity is absorbed into the
        coefficient.
        """
        mask = 0
        sign = 1
        for i in indices:
            bit = 1 << i
            if mask & bit:
                return cls(ngen)
            # parity of moving the new generator past those above it
            sign *= merge_sign(mask, bit)
            mask |= bit
        return cls(ngen, {mask: sign * coeff}) if sign != 0 else cls(ngen)

    # -- ring operations ---------------------------------------------------

    def copy(self):
        return GradedElement(self.ngen, dict(self.terms))

    def __add__(self, other):
        if not isinstance(other, GradedElement):
            return NotImplemented
        out = dict(self.terms)
        for m, c in other.terms.items():
            if m in out:
                out[m] = out[m] + c
            else:
                out[m] = c
        return GradedElement(self.ngen, out)

    def __sub__(self, other):
        return self + (other * (-1.0))

    def __mul__(self, scalar):
        return GradedElement(
            self.ngen, {m: c * scalar for m, c in self.terms.items()}
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def wedge(self, other):
        if self.ngen != other.ngen:
            raise ValueError("generator count mismatch")
        out: dict = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                s = merge_sign(ma, mb)
                if s == 0:
                    continue
                m = ma | mb
                c = ca * cb if s > 0 else -(ca * cb)
                if m in out:
                    out[m] = out[m] + c
                else:
                    out[m] = c
        return GradedElement(self.ngen, out)

    def wedge_power(self, k):
        if k < 0:
            raise ValueError("negative wedge power")
        out = GradedElement.scalar(self.ngen, 1.0)
        for _ in range(k):
            out = out.wedge(self)
        return out

    def conjugate(self, swap):
        """Complex conjugate: conjugate coefficients and relabel generators.

        ``swap`` maps each generator index to the index of its conjugate
        generator (e.g. dzeta <-> dzetabar); self-conjugate generators map to
        themselves.  Relabeling parity is absorbed into the coefficients.
        """
        out = GradedElement(self.ngen)
        for m, c in self.terms.items():
            idx = [swap[i] for i in mask_indices(m)]
            out = out + GradedElement.monomial(self.ngen, idx, np.conj(c))
        return out

    # -- queries -----------------------------------------------------------

    def coefficient(self, mask):
        return self.terms.get(mask, 0.0)

    def degree_part(self, k):
        return GradedElement(
            self.ngen,
            {m: c for m, c in self.terms.items() if m.bit_count() == k},
        )

    def degrees(self):
        return sorted({m.bit_count() for m in self.terms})

    def is_zero(self, tol=0.0):
        for c in self.terms.values():
            if np.any(np.abs(c) > tol):
                return False
        return True

    def evaluate(self, valuations):
        """Evaluate on an ordered family of tangent vectors.

        ``valuations`` is an array of shape (..., ngen, k): component i,j is
        the value of generator i on vector j.  Every monomial must have degree
        k; the result is the sum of coefficient * det of the corresponding
        k x k minor.
        """
        valuations = np.asarray(valuations)
        k = valuations.shape[-1]
        total = 0.0
        for m, c in self.terms.items():
            idx = mask_indices(m)
            if len(idx) != k:
                raise ValueError("monomial degree does not match vector count")
            minor = valuations[..., idx, :]
            total = total + c * np.linalg.det(minor)
        return total

    def __repr__(self):
        bits = []
        for m in sorted(self.terms):
            bits.append(f"{self.terms[m]!r}*e{mask_indices(m)}")
        return "GradedElement(" + " + ".join(bits or ["0"]) + ")"


def mask_indices(mask: int):
    """Ascending generator indices of a monomial bitmask."""
    out = []
    while mask:
        out.append((mask & -mask).bit_length() - 1)
        mask &= mask - 1
    return out


def indices_mask(indices) -> int:
    mask = 0
    for i in indices:
        mask |= 1 << i
    return mask
