"""Ulam discretisation of the induced transfer operator.

The induced map F on Y acts on observables through its transfer operator
P (the adjoint of composition by F with respect to the F-invariant
measure on Y).  The discretisation is a two-stage Ulam scheme:

1. a row-stochastic matrix T of cell-to-cell transition weights under F
   with respect to Lebesgue reference measure on Y, assembled branch by
   branch from exact interval overlaps of the branch preimages of the
   grid cells;
2. the stationary vector pi of T (cell masses of the invariant measure),
   followed by the density conjugation P = D^-1 T' D that represents the
   operator with respect to the invariant measure itself.

With this convention P fixes constants exactly, pi is a fixed vector of
the adjoint action, and the kernel equation P m' = 0 of the martingale
part becomes a directly testable residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConvergenceError
from .maps import InducedSystem

DEFAULT_N = 4096


@dataclass(frozen=True, eq=False)
class GridY:
    """Uniform grid of N cells on Y."""

    y_lo: float
    y_hi: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid needs at least 2 cells")

    @property
    def width(self) -> float:
        return (self.y_hi - self.y_lo) / self.n

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.y_lo, self.y_hi, self.n + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.y_lo + (np.arange(self.n) + 0.5) * self.width


@dataclass(frozen=True, eq=False)
class TransferApproximation:
    """Grid representation of the induced transfer operator.

    ``matrix`` acts on cell-averaged functions (row-stochastic, rows sum
    to one); ``invariant_density`` holds the invariant cell masses
    (nonnegative, summing to one); ``cell_tau`` is the return time of the
    branch containing each midpoint.
    """

    grid: GridY
    matrix: np.ndarray
    invariant_density: np.ndarray
    cell_tau: np.ndarray

    @property
    def n(self) -> int:
        return self.grid.n

    def density_values(self) -> np.ndarray:
        """Invariant density per unit length at the midpoints."""
        return self.invariant_density / self.grid.width

    def expectation(self, g: np.ndarray) -> np.ndarray:
        """Integral of a grid function against the invariant measure."""
        return np.tensordot(self.invariant_density, g, axes=(0, 0))

    def mean_tau(self) -> float:
        return float(self.invariant_density @ self.cell_tau)


def _stationary_vector(T: np.ndarray, tol: float = 1e-12,
                       max_iter: int = 10**5) -> np.ndarray:
    n = T.shape[0]
    pi = np.full(n, 1.0 / n)
    Tt = np.ascontiguousarray(T.T)
    for _ in range(max_iter):
        nxt = Tt @ pi
        nxt /= nxt.sum()
        delta = np.abs(nxt - pi).sum()
        pi = nxt
        if delta < tol:
            return pi
    raise ConvergenceError(
        f"power iteration did not reach L1 tolerance {tol} in {max_iter} steps"
    )


def build_ulam(sys: InducedSystem, n: int = DEFAULT_N) -> TransferApproximation:
    """Discretise the induced transfer operator on an n-cell grid."""
    grid = GridY(sys.y_lo, sys.y_hi, n)
    edges = grid.edges
    pre_edges = sys.inverse_at_edges(edges)

    T = np.zeros((n, n))
    _kernels.ulam_accumulate(pre_edges, sys.y_lo, grid.width, T)

    # ignore-and-renormalise: rows lose only the mass of the uncovered
    # tail sliver, bounded by sys.tail_mass_bound
    row_sums = T.sum(axis=1)
    empty = row_sums <= 0.0
    if empty.any():
        T[empty] = 1.0 / n
        row_sums[empty] = 1.0
    T /= row_sums[:, None]

    pi = _stationary_vector(T)

    # represent P with respect to the invariant measure: P = D^-1 T' D
    P = T.T * (pi[None, :] / pi[:, None])
    P /= P.sum(axis=1)[:, None]

    mids = grid.midpoints
    idx = sys.locate(mids)
    cell_tau = np.where(idx >= 0, sys.branch_tau[np.maximum(idx, 0)],
                        sys.tau_max).astype(np.int64)
    return TransferApproximation(grid=grid, matrix=P, invariant_density=pi,
                                 cell_tau=cell_tau)


def apply_P(op: TransferApproximation, g: np.ndarray, k: int = 1) -> np.ndarray:
    """P^k g on the grid; g may be (N,) or (N, d)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    out = np.asarray(g, dtype=np.float64)
    for _ in range(k):
        out = op.matrix @ out
    return out


@dataclass(frozen=True)
class DistortionReport:
    max_ratio: float
    holder_constant: float


def check_distortion(sys: InducedSystem, op: TransferApproximation,
                     samples: int = 100) -> DistortionReport:
    """Empirical surrogates for the branch-weight bounds.

    zeta(x) = h(x) / (h(Fx) |F'(x)|) is estimated from the numerical
    invariant density h and the chain-rule branch derivative; the report
    holds sup over branches of sup zeta / mu_Y(branch) and the largest
    observed Hölder ratio |log zeta(x) - log zeta(y)| / |Fx - Fy|.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples per branch")
    grid = op.grid
    mids = grid.midpoints
    dens = op.density_values()
    edges = grid.edges
    # cumulative mass for exact-ish branch masses
    cum = np.concatenate([[0.0], np.cumsum(op.invariant_density)])

    def mass(a: float, b: float) -> float:
        fa = np.interp(a, edges, cum)
        fb = np.interp(b, edges, cum)
        return max(fb - fa, 1e-300)

    max_ratio = 0.0
    holder = 0.0
    kind, param = sys.map.kind, sys.map.param
    for b in range(sys.n_branches):
        lo, hi = sys.branch_lo[b], sys.branch_hi[b]
        tau = int(sys.branch_tau[b])
        pad = (hi - lo) * 1e-3
        xs = np.linspace(lo + pad, hi - pad, samples)
        logdF = np.empty(samples)
        _kernels.branch_log_derivative(kind, param, xs, tau, logdF)
        fx = sys.forward(xs)
        h_x = np.interp(xs, mids, dens)
        h_fx = np.interp(fx, mids, dens)
        log_zeta = np.log(h_x) - np.log(h_fx) - logdF
        zeta = np.exp(log_zeta)
        mu_a = mass(lo, hi)
        max_ratio = max(max_ratio, float(zeta.max() / mu_a))
        dlog = np.abs(np.diff(log_zeta))
        dfx = np.abs(np.diff(fx))
        ok = dfx > 1e-12
        if ok.any():
            holder = max(holder, float((dlog[ok] / dfx[ok]).max()))
    return DistortionReport(max_ratio=max_ratio, holder_constant=holder)
