"""Observables on the state space of an interval map.

An :class:`Observable` is a vector of closed-form components, each a sum
of terms drawn from a small basis (cosine, sine, monomial, one-sided
Hölder bump).  The term-table layout is shared with the compiled Monte
Carlo kernels, so an observable built here evaluates identically inside
and outside numba code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TERM_COS = 0  # c0 * cos(c1 * x + c2)
TERM_SIN = 1  # c0 * sin(c1 * x + c2)
TERM_POLY = 2  # c0 * x**c1
TERM_BUMP = 3  # c0 * max(0, 1 - |x - c1| / c2) ** c3

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Observable:
    """Vector observable with an explicit centering offset.

    ``terms[k]`` is the tuple of ``(kind, c0, c1, c2, c3)`` rows making up
    component ``k``; ``offset[k]`` is subtracted so the component has mean
    zero with respect to the invariant measure of the map it is paired
    with (see :func:`center`).
    """

    terms: tuple
    offset: tuple = field(default=None)

    def __post_init__(self):
        if self.offset is None:
            object.__setattr__(self, "offset", (0.0,) * len(self.terms))
        if len(self.offset) != len(self.terms):
            raise ValueError("offset length must match the number of components")

    @property
    def dim(self) -> int:
        return len(self.terms)

    # -- constructors -------------------------------------------------

    @staticmethod
    def cosine(k: int = 1, coef: float = 1.0) -> "Observable":
        """coef * cos(2*pi*k*x)."""
        return Observable((((TERM_COS, coef, TWO_PI * k, 0.0, 0.0),),))

    @staticmethod
    def sine(k: int = 1, coef: float = 1.0) -> "Observable":
        return Observable((((TERM_SIN, coef, TWO_PI * k, 0.0, 0.0),),))

    @staticmethod
    def polynomial(coeffs) -> "Observable":
        """sum_p coeffs[p] * x**p."""
        rows = tuple(
            (TERM_POLY, float(c), float(p), 0.0, 0.0)
            for p, c in enumerate(coeffs)
            if c != 0.0
        )
        return Observable((rows,))

    @staticmethod
    def bump(center: float, width: float, eta: float = 1.0, coef: float = 1.0) -> "Observable":
        """Hölder bump ``coef * max(0, 1 - |x-center|/width)**eta``."""
        if not 0.0 < eta <= 1.0:
            raise ValueError("Hölder exponent eta must lie in (0, 1]")
        if width <= 0.0:
            raise ValueError("width must be positive")
        return Observable(
            (((TERM_BUMP, coef, float(center), float(width), float(eta)),),)
        )

    @staticmethod
    def coboundary_pair(k_outer: int, k_inner: int) -> "Observable":
        """sin(2*pi*k_outer*x) - sin(2*pi*k_inner*x), a coboundary for the
        doubling map when k_outer = lam * k_inner."""
        return Observable(
            (
                (
                    (TERM_SIN, 1.0, TWO_PI * k_outer, 0.0, 0.0),
                    (TERM_SIN, -1.0, TWO_PI * k_inner, 0.0, 0.0),
                ),
            )
        )

    @staticmethod
    def stack(*components: "Observable") -> "Observable":
        """Concatenate scalar observables into one vector observable."""
        terms = []
        offset = []
        for c in components:
            terms.extend(c.terms)
            offset.extend(c.offset)
        return Observable(tuple(terms), tuple(offset))

    # -- algebra ------------------------------------------------------

    def __add__(self, other: "Observable") -> "Observable":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        terms = tuple(a + b for a, b in zip(self.terms, other.terms))
        offset = tuple(a + b for a, b in zip(self.offset, other.offset))
        return Observable(terms, offset)

    def __mul__(self, c: float) -> "Observable":
        terms = tuple(
            tuple((row[0], row[1] * c) + row[2:] for row in comp) for comp in self.terms
        )
        return Observable(terms, tuple(o * c for o in self.offset))

    __rmul__ = __mul__

    def with_offset(self, offset) -> "Observable":
        return replace(self, offset=tuple(float(o) for o in np.atleast_1d(offset)))

    # -- evaluation ---------------------------------------------------

    def term_table(self):
        """Flattened ``(rows, component offsets)`` arrays for the kernels."""
        rows = []
        starts = [0]
        for comp in self.terms:
            rows.extend(comp)
            starts.append(len(rows))
        table = np.asarray(rows, dtype=np.float64).reshape(len(rows), 5)
        return table, np.asarray(starts, dtype=np.int64), np.asarray(self.offset)

    def __call__(self, x):
        """Evaluate at ``x`` (scalar or array); returns shape ``x.shape + (dim,)``."""
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape + (self.dim,))
        for k, comp in enumerate(self.terms):
            acc = np.zeros_like(x)
            for kind, c0, c1, c2, c3 in comp:
                if kind == TERM_COS:
                    acc += c0 * np.cos(c1 * x + c2)
                elif kind == TERM_SIN:
                    acc += c0 * np.sin(c1 * x + c2)
                elif kind == TERM_POLY:
                    acc += c0 * x**c1
                else:
                    u = 1.0 - np.abs(x - c1) / c2
                    acc += c0 * np.where(u > 0.0, u, 0.0) ** c3
            out[..., k] = acc - self.offset[k]
        return out

    def support_bounds(self, k: int = 0):
        """Hull of the support of component ``k`` (finite only for bumps)."""
        lo, hi = math.inf, -math.inf
        for kind, _, c1, c2, _ in self.terms[k]:
            if kind == TERM_BUMP:
                lo, hi = min(lo, c1 - c2), max(hi, c1 + c2)
            else:
                return -math.inf, math.inf
        return lo, hi

    def lebesgue_mean(self, lo: float, hi: float) -> np.ndarray:
        """Exact Lebesgue average of each raw component over [lo, hi]."""
        out = np.zeros(self.dim)
        for k, comp in enumerate(self.terms):
            total = 0.0
            for kind, c0, c1, c2, c3 in comp:
                if kind == TERM_COS:
                    total += c0 * (math.sin(c1 * hi + c2) - math.sin(c1 * lo + c2)) / c1
                elif kind == TERM_SIN:
                    total += -c0 * (math.cos(c1 * hi + c2) - math.cos(c1 * lo + c2)) / c1
                elif kind == TERM_POLY:
                    total += c0 * (hi ** (c1 + 1) - lo ** (c1 + 1)) / (c1 + 1)
                else:
                    # bump integrates to 2*width/(eta+1) when its support
                    # fits inside the interval; clip otherwise
                    a, b = max(lo, c1 - c2), min(hi, c1 + c2)
                    if a >= b:
                        continue
                    if a == c1 - c2 and b == c1 + c2:
                        total += c0 * 2.0 * c2 / (c3 + 1.0)
                    else:
                        xs = np.linspace(a, b, 20001)
                        u = np.maximum(0.0, 1.0 - np.abs(xs - c1) / c2) ** c3
                        total += c0 * np.trapezoid(u, xs)
            out[k] = total / (hi - lo)
        return out
