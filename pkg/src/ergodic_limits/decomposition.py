"""Martingale-coboundary decompositions on the grid.

Given the induced observable phi' on Y, the primary decomposition solves

    chi' = sum_{k>=1} P^k phi',        m' = phi' - chi' o F + chi',

with the series truncated adaptively using the observed geometric decay
of |P^k phi'|_inf.  The martingale part m' lies in the kernel of P up to
the series tail and the O(1/N) discretisation error, which is recorded
as ``kernel_residual``.

The decomposition lifts to the tower extension: with tower coordinates
(y, l), 0 <= l < tau(y),

    chi(y, l) = chi'(y) + sum_{k<l} v(T^k y),
    m(y, l)   = m'(y) if l = tau(y) - 1 else 0,

and phi = m + chi o f - chi pointwise (f the tower map).

The secondary decomposition applies the same series to the conditional
variance observable breve-phi = UL(m m^T) - Sigma, whose induced version
satisfies P breve-phi' = P(m' m'^T) - (P tau) Sigma exactly on the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, rng
from .errors import ConvergenceError
from .maps import InducedSystem, MapDescriptor
from .observables import Observable
from .transfer import GridY, TransferApproximation, apply_P

DEFAULT_SERIES_TOL = 1e-10


def induced_observable(sys: InducedSystem, m: MapDescriptor, obs: Observable,
                       grid: GridY, cell_tau: np.ndarray) -> np.ndarray:
    """phi'(y) = sum_{l < tau(y)} v(T^l y) at the grid midpoints."""
    table, starts, offset = obs.term_table()
    out = np.empty((grid.n, obs.dim))
    _kernels.induced_sums(m.kind, m.param, table, starts, offset,
                          grid.midpoints, cell_tau, out)
    return out


def _forward_midpoints(sys: InducedSystem, grid: GridY,
                       cell_tau: np.ndarray) -> np.ndarray:
    """F at the midpoints, iterating the branch return time directly."""
    mids = grid.midpoints
    out = np.empty_like(mids)
    for i, (y, t) in enumerate(zip(mids, cell_tau)):
        out[i] = _kernels.iterate_map(sys.map.kind, sys.map.param, y, int(t))
    return out


def _interp_columns(mids: np.ndarray, values: np.ndarray,
                    points: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation of each column of ``values``."""
    points = np.asarray(points)
    out = np.empty(points.shape + (values.shape[1],))
    for k in range(values.shape[1]):
        out[..., k] = np.interp(points, mids, values[:, k])
    return out


def _adaptive_series(op: TransferApproximation, g0: np.ndarray, tol: float,
                     k_fixed: int | None = None, k_max: int = 10**4):
    """sum_{k>=0} P^k g0 with a geometric-ratio stopping rule.

    Returns (series sum, K, tail_bound) where K counts the summed terms
    and tail_bound estimates the sup-norm of the discarded tail.
    """
    total = np.array(g0, dtype=np.float64, copy=True)
    term = g0
    sups = [float(np.max(np.abs(term)))]
    if sups[0] == 0.0:
        return total, 1, 0.0
    k = 1
    while True:
        if k_fixed is not None and k >= k_fixed:
            break
        term = op.matrix @ term
        total += term
        sups.append(float(np.max(np.abs(term))))
        k += 1
        if k_fixed is not None:
            continue
        if k >= 5:
            recent = [sups[i] / sups[i - 1] for i in range(len(sups) - 4, len(sups))
                      if sups[i - 1] > 0]
            r = min(max(recent) if recent else 1.0, 0.999)
            if sups[-1] < tol * (1.0 - r):
                break
        if k >= k_max:
            raise ConvergenceError(
                f"transfer-operator series showed no geometric decay within "
                f"{k_max} terms (last sup {sups[-1]:.3g})"
            )
        if sups[-1] == 0.0:
            break
    if len(sups) >= 2 and sups[-2] > 0:
        r = min(sups[-1] / sups[-2], 0.999) if sups[-1] > 0 else 0.0
    else:
        r = 0.0
    tail = sups[-1] * r / (1.0 - r)
    return total, k, tail


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Grid-sampled primary decomposition phi' = m' + chi' o F - chi'."""

    phi_prime: np.ndarray
    chi_prime: np.ndarray
    m_prime: np.ndarray
    K: int
    tail_bound: float
    kernel_residual: float
    chi_prime_at_F: np.ndarray

    @property
    def dim(self) -> int:
        return self.phi_prime.shape[1]


def primary_decomposition(op: TransferApproximation, sys: InducedSystem,
                          phi_prime: np.ndarray,
                          tol: float = DEFAULT_SERIES_TOL,
                          k_fixed: int | None = None) -> Decomposition:
    """Construct chi' and the kernel part m' from the induced observable."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    phi_prime = np.atleast_2d(np.asarray(phi_prime, dtype=np.float64))
    if phi_prime.shape[0] != op.n:
        phi_prime = phi_prime.T
    p_phi = op.matrix @ phi_prime
    chi, K, tail = _adaptive_series(op, p_phi, tol, k_fixed=k_fixed)
    f_mids = _forward_midpoints(sys, op.grid, op.cell_tau)
    chi_at_F = _interp_columns(op.grid.midpoints, chi, f_mids)
    m_prime = phi_prime - chi_at_F + chi
    kernel_residual = float(np.max(np.abs(op.matrix @ m_prime)))
    return Decomposition(
        phi_prime=phi_prime,
        chi_prime=chi,
        m_prime=m_prime,
        K=K,
        tail_bound=tail,
        kernel_residual=kernel_residual,
        chi_prime_at_F=chi_at_F,
    )


# ---------------------------------------------------------------------------
# tower lift
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TowerFunction:
    """Evaluators for chi and m at arbitrary tower points (y, l)."""

    dec: Decomposition
    sys: InducedSystem
    map: MapDescriptor
    obs: Observable
    grid: GridY

    def _chi_prime(self, y):
        return _interp_columns(self.grid.midpoints, self.dec.chi_prime, y)

    def _partial_sums(self, y, ell):
        """sum_{k < ell} v(T^k y), exactly, per point."""
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        ell = np.atleast_1d(np.asarray(ell, dtype=np.int64))
        out = np.zeros((len(y), self.obs.dim))
        x = y.copy()
        live = ell > 0
        k = 0
        while live.any():
            out[live] += self.obs(x[live])
            x[live] = np.array(
                [_kernels.map_step(self.map.kind, self.map.param, t)
                 for t in x[live]]
            )
            k += 1
            live = ell > k
        return out

    def chi(self, y, ell):
        """chi(y, l) = chi'(y) + sum_{k<l} v(T^k y)."""
        base = self._chi_prime(np.atleast_1d(y))
        return base + self._partial_sums(y, ell)

    def phi(self, y, ell):
        """phi(y, l) = v(T^l y)."""
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        ell = np.atleast_1d(np.asarray(ell, dtype=np.int64))
        x = np.array([_kernels.iterate_map(self.map.kind, self.map.param,
                                           yy, int(l))
                      for yy, l in zip(y, ell)])
        return self.obs(x)

    def m_prime_at(self, y):
        """m'(y) = phi'(y) - chi'(F y) + chi'(y) off the grid."""
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        tau = np.asarray(self.sys.tau(y))
        phi_p = self._partial_sums(y, tau)
        fy = self.sys.forward(y)
        return phi_p - self._chi_prime(fy) + self._chi_prime(y)

    def m(self, y, ell):
        """m(y, l): zero except on the top level l = tau(y) - 1."""
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        ell = np.atleast_1d(np.asarray(ell, dtype=np.int64))
        tau = np.asarray(self.sys.tau(y))
        out = np.zeros((len(y), self.obs.dim))
        top = ell == tau - 1
        if top.any():
            out[top] = self.m_prime_at(y[top])
        return out

    def identity_residual(self, y, ell):
        """|phi - (m + chi o f - chi)| at the given tower points."""
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        ell = np.atleast_1d(np.asarray(ell, dtype=np.int64))
        tau = np.asarray(self.sys.tau(y))
        chi_here = self.chi(y, ell)
        # f(y, l) = (y, l+1) below the top, (F y, 0) on it
        top = ell == tau - 1
        chi_next = np.empty_like(chi_here)
        if (~top).any():
            chi_next[~top] = self.chi(y[~top], ell[~top] + 1)
        if top.any():
            fy = self.sys.forward(y[top])
            chi_next[top] = self._chi_prime(fy)
        resid = self.phi(y, ell) - self.m(y, ell) - chi_next + chi_here
        return np.max(np.abs(resid), axis=1)


def lift_to_tower(dec: Decomposition, sys: InducedSystem, m: MapDescriptor,
                  obs: Observable, grid: GridY) -> TowerFunction:
    return TowerFunction(dec=dec, sys=sys, map=m, obs=obs, grid=grid)


def sample_tower_points(sys: InducedSystem, op: TransferApproximation,
                        n: int, seed: int = 0):
    """Draw (y, l) approximately distributed as the tower measure.

    Cells are weighted by mass times return time, the level is uniform on
    {0, ..., tau(y) - 1}.
    """
    gen = rng.philox(seed, rng.TOWER)
    weights = op.invariant_density * op.cell_tau
    weights = weights / weights.sum()
    cells = gen.choice(op.n, size=n, p=weights)
    y = op.grid.edges[cells] + gen.random(n) * op.grid.width
    tau = np.asarray(sys.tau(y))
    # points in the uncovered tail sliver carry tau = -1; resample them
    # onto the nearest retained branch
    bad = tau < 0
    if bad.any():
        y[bad] = sys.branch_lo[0] + gen.random(bad.sum()) * (
            sys.branch_hi[0] - sys.branch_lo[0]
        )
        tau = np.asarray(sys.tau(y))
    ell = (gen.random(n) * tau).astype(np.int64)
    return y, ell


# ---------------------------------------------------------------------------
# secondary decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SecondaryDecomposition:
    """Decomposition of the conditional-variance observable.

    All grid arrays have shape (N, d*d), storing the row-major flattening
    of the matrix value; ``sigma_mart`` is the martingale covariance
    Sigma = int m m^T dmu (tower measure).
    """

    phi_breve_prime: np.ndarray
    chi_breve_prime: np.ndarray
    m_breve_prime: np.ndarray
    p_m2: np.ndarray
    sigma_mart: np.ndarray
    K: int
    tail_bound: float
    kernel_residual: float


def secondary_decomposition(op: TransferApproximation, dec: Decomposition,
                            sys: InducedSystem,
                            tol: float = DEFAULT_SERIES_TOL,
                            k_fixed: int | None = None) -> SecondaryDecomposition:
    """Decompose breve-phi' = (P(m'm'^T)) o F - tau * Sigma on the grid."""
    d = dec.dim
    mp = dec.m_prime
    outer = mp[:, :, None] * mp[:, None, :]          # (N, d, d)
    m2 = outer.reshape(op.n, d * d)
    mean_tau = op.mean_tau()
    sigma = op.expectation(outer) / mean_tau          # (d, d)
    sigma = 0.5 * (sigma + sigma.T)

    p_m2 = op.matrix @ m2
    p_tau = op.matrix @ op.cell_tau.astype(np.float64)
    sig_flat = sigma.reshape(d * d)
    # exact grid identity for the first series term: P breve-phi'
    psi1 = p_m2 - p_tau[:, None] * sig_flat[None, :]

    chi_breve, K, tail = _adaptive_series(op, psi1, tol, k_fixed=k_fixed)

    f_mids = _forward_midpoints(sys, op.grid, op.cell_tau)
    phi_breve = (
        _interp_columns(op.grid.midpoints, p_m2, f_mids)
        - op.cell_tau.astype(np.float64)[:, None] * sig_flat[None, :]
    )
    chi_breve_at_F = _interp_columns(op.grid.midpoints, chi_breve, f_mids)
    m_breve = phi_breve - chi_breve_at_F + chi_breve
    kernel_residual = float(np.max(np.abs(op.matrix @ m_breve)))
    return SecondaryDecomposition(
        phi_breve_prime=phi_breve,
        chi_breve_prime=chi_breve,
        m_breve_prime=m_breve,
        p_m2=p_m2,
        sigma_mart=sigma,
        K=K,
        tail_bound=tail,
        kernel_residual=kernel_residual,
    )


# ---------------------------------------------------------------------------
# growth diagnostics
# ---------------------------------------------------------------------------

def growth_p_for(m: MapDescriptor) -> float:
    """Moment exponent used in growth diagnostics: safely inside tau in L^p."""
    if m.kind == _kernels.K_LSV:
        return min(2.0, 0.9 / m.param)
    return 2.0


def chi_growth_exponent(tf: TowerFunction, n_max: int = 10**4,
                        samples: int = 2000, seed: int = 0,
                        p: float | None = None,
                        burn_in: int = 1000) -> float:
    """Log-log slope of the L^p norm of max_{k<=n} |chi o f^k - chi|.

    The maximum is taken along stationary tower orbits; the regression
    runs over a geometric ladder of n between 100 and n_max.
    """
    if n_max < 100:
        raise ValueError("n_max must be at least 100")
    if samples < 2:
        raise ValueError("need at least 2 samples")
    if p is None:
        p = growth_p_for(tf.map)
    n_pts = 8
    ladder = np.unique(
        np.geomspace(100, n_max, n_pts).astype(np.int64)
    )
    table, starts, offset = tf.obs.term_table()
    keys = rng.sample_keys(seed, rng.TOWER, samples)
    out = np.empty((samples, len(ladder)))
    _kernels.tower_chi_growth(
        tf.map.kind, tf.map.param, table, starts, offset,
        tf.grid.midpoints, tf.dec.chi_prime, keys, burn_in, ladder, out
    )
    norms = np.mean(out**p, axis=0) ** (1.0 / p)
    slope = np.polyfit(np.log(ladder.astype(float)), np.log(norms), 1)[0]
    return float(slope)


# ---------------------------------------------------------------------------
# pipeline convenience
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DecompositionPipeline:
    """Everything derived from one (map, observable, grid) triple."""

    map: MapDescriptor
    obs: Observable
    sys: InducedSystem
    op: TransferApproximation
    dec: Decomposition
    tower: TowerFunction
    secondary: SecondaryDecomposition

    @property
    def grid(self) -> GridY:
        return self.op.grid

    @property
    def sigma_mart(self) -> np.ndarray:
        return self.secondary.sigma_mart


def build_pipeline(m: MapDescriptor, obs: Observable, n_grid: int = 4096,
                   tau_max: int = 500, tol: float = DEFAULT_SERIES_TOL,
                   with_secondary: bool = True) -> DecompositionPipeline:
    from .maps import build_induced
    from .transfer import build_ulam

    sys = build_induced(m, tau_max=tau_max)
    op = build_ulam(sys, n_grid)
    phi_p = induced_observable(sys, m, obs, op.grid, op.cell_tau)
    dec = primary_decomposition(op, sys, phi_p, tol=tol)
    tower = lift_to_tower(dec, sys, m, obs, op.grid)
    secondary = (
        secondary_decomposition(op, dec, sys, tol=tol) if with_secondary else None
    )
    return DecompositionPipeline(map=m, obs=obs, sys=sys, op=op, dec=dec,
                                 tower=tower, secondary=secondary)
