"""Interval map families and their induced first-return structure.

Three families are provided:

* ``doubling``: x -> lam*x mod 1 on [0, 1] for an integer lam >= 2;
* ``lsv``: the intermittent map x -> x*(1 + (2x)**gamma) on [0, 1/2),
  2x - 1 on [1/2, 1], for gamma in (0, 1);
* ``quadratic``: x -> 1 - a*x^2 on [-1, 1] for a in [0, 2]
  (orbit-only; no inducing scheme is constructed for it).

For the first two, :func:`build_induced` assembles the full-branch
uniformly expanding first-return map on the reference interval Y
(Y = [0, 1] with return time 1 for doubling, Y = [1/2, 1] with the
first-return time for lsv).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, rng
from ._kernels import K_DOUBLING, K_LSV, K_QUADRATIC
from .errors import DomainError, TruncationError, UnsupportedMapError
from .observables import Observable

_KIND_NAMES = {K_DOUBLING: "doubling", K_LSV: "lsv", K_QUADRATIC: "quadratic"}
_KIND_CODES = {v: k for k, v in _KIND_NAMES.items()}


@dataclass(frozen=True)
class MapDescriptor:
    """One member of a parameterised map family."""

    kind: int
    param: float

    def __post_init__(self):
        if self.kind == K_DOUBLING:
            lam = self.param
            if lam != int(lam) or lam < 2:
                raise ValueError("doubling slope must be an integer >= 2")
        elif self.kind == K_LSV:
            if not 0.0 < self.param < 1.0:
                raise ValueError("lsv exponent gamma must lie in (0, 1)")
        elif self.kind == K_QUADRATIC:
            if not 0.0 <= self.param <= 2.0:
                raise ValueError("quadratic parameter a must lie in [0, 2]")
        else:
            raise ValueError(f"unknown map kind {self.kind}")

    @staticmethod
    def doubling(lam: int = 2) -> "MapDescriptor":
        return MapDescriptor(K_DOUBLING, float(lam))

    @staticmethod
    def lsv(gamma: float) -> "MapDescriptor":
        return MapDescriptor(K_LSV, float(gamma))

    @staticmethod
    def quadratic(a: float) -> "MapDescriptor":
        return MapDescriptor(K_QUADRATIC, float(a))

    @property
    def kind_name(self) -> str:
        return _KIND_NAMES[self.kind]

    @property
    def domain(self) -> tuple:
        return (-1.0, 1.0) if self.kind == K_QUADRATIC else (0.0, 1.0)

    def to_dict(self) -> dict:
        key = {"doubling": "lam", "lsv": "gamma", "quadratic": "a"}[self.kind_name]
        value = int(self.param) if self.kind == K_DOUBLING else self.param
        return {"kind": self.kind_name, key: value}

    @staticmethod
    def from_dict(data: dict) -> "MapDescriptor":
        kind = data.get("kind")
        if kind == "doubling":
            return MapDescriptor.doubling(data["lam"])
        if kind == "lsv":
            return MapDescriptor.lsv(data["gamma"])
        if kind == "quadratic":
            return MapDescriptor.quadratic(data["a"])
        raise ValueError(f"unknown map kind {kind!r}")


def _check_domain(m: MapDescriptor, x: float):
    lo, hi = m.domain
    if not lo <= x <= hi:
        raise DomainError(f"x={x} outside domain [{lo}, {hi}] of {m.kind_name} map")


def evaluate(m: MapDescriptor, x: float) -> float:
    """Apply the map once."""
    _check_domain(m, x)
    return _kernels.map_step(m.kind, m.param, float(x))


def derivative(m: MapDescriptor, x: float) -> float:
    _check_domain(m, x)
    return _kernels.map_derivative(m.kind, m.param, float(x))


def orbit(m: MapDescriptor, x0: float, n: int) -> np.ndarray:
    """The forward orbit (x0, T x0, ..., T^n x0), length n + 1."""
    _check_domain(m, x0)
    if n < 0:
        raise ValueError("n must be >= 0")
    out = np.empty(n + 1)
    out[0] = x0
    x = float(x0)
    for j in range(n):
        x = _kernels.map_step(m.kind, m.param, x)
        out[j + 1] = x
    return out


def sample_observable(obs: Observable, m: MapDescriptor, x: float) -> np.ndarray:
    """v(x) minus the centering offset, with the map's domain check."""
    _check_domain(m, x)
    return obs(x)


# ---------------------------------------------------------------------------
# induced first-return systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InducedSystem:
    """First-return map F = T^tau on the reference interval Y.

    Branches are stored in ascending position order; branch i is the
    interval [branch_lo[i], branch_hi[i]) (the last one closed) with
    constant return time branch_tau[i], and F maps it bijectively onto Y.
    """

    map: MapDescriptor
    y_lo: float
    y_hi: float
    branch_lo: np.ndarray
    branch_hi: np.ndarray
    branch_tau: np.ndarray
    tau_max: int
    tail_mass_bound: float
    # backward orbit of 1/2 under the left branch (lsv only): xi[n] is the
    # n-fold left-inverse of 1/2, so the tau = n+1 branch starts at
    # (1 + xi[n]) / 2
    xi: np.ndarray

    @property
    def n_branches(self) -> int:
        return len(self.branch_lo)

    def locate(self, y) -> np.ndarray:
        """Branch index containing y (-1 for the uncovered tail sliver)."""
        y = np.asarray(y)
        idx = np.searchsorted(self.branch_lo, y, side="right") - 1
        idx = np.where(
            (idx >= 0) & (y <= np.where(idx < 0, np.inf, self.branch_hi[np.maximum(idx, 0)])),
            idx,
            -1,
        )
        return idx

    def tau(self, y):
        idx = np.asarray(self.locate(y))
        tau = np.where(idx >= 0, self.branch_tau[np.maximum(idx, 0)], -1)
        return tau if np.ndim(y) else int(tau)

    def forward(self, y):
        """F(y) = T^tau(y) by direct iteration of the underlying map."""
        y_arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
        idx = np.atleast_1d(self.locate(y_arr))
        out = np.empty_like(y_arr)
        for i, (yy, b) in enumerate(zip(y_arr, idx)):
            if b < 0:
                raise DomainError(f"point {yy} is not in any retained branch")
            out[i] = _kernels.iterate_map(
                self.map.kind, self.map.param, yy, int(self.branch_tau[b])
            )
        return out if np.ndim(y) else float(out[0])

    def inverse(self, y, branch: int):
        """The preimage of y in the given branch."""
        y_arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
        if self.map.kind == K_DOUBLING:
            lam = int(self.map.param)
            out = (y_arr + branch) / lam
        else:
            n = int(self.branch_tau[branch])
            u = y_arr.copy()
            for _ in range(n - 1):
                u = np.array(
                    [_kernels.lsv_left_inverse(t, self.map.param) for t in u]
                )
            out = 0.5 * (1.0 + u)
        return out if np.ndim(y) else float(out[0])

    def inverse_at_edges(self, edges: np.ndarray) -> np.ndarray:
        """Preimages of the grid edges in every branch.

        Returns an array of shape (n_branches, len(edges)); row i holds
        the branch-i preimages, ascending along the row.
        """
        if self.map.kind == K_DOUBLING:
            lam = int(self.map.param)
            return np.stack([(edges + i) / lam for i in range(lam)])
        kmax = int(self.branch_tau.max())
        table = np.empty((kmax, len(edges)))
        _kernels.lsv_backward_table(edges, self.map.param, kmax, table)
        # branch with return time n (stored at descending-tau position)
        out = np.empty((self.n_branches, len(edges)))
        for i in range(self.n_branches):
            n = int(self.branch_tau[i])
            out[i] = 0.5 * (1.0 + table[n - 1])
        return out


def build_induced(m: MapDescriptor, tau_max: int = 500,
                  tail_tol: float = 0.05) -> InducedSystem:
    """Construct the first-return system on Y for a doubling or lsv map."""
    if m.kind == K_QUADRATIC:
        raise UnsupportedMapError(
            "no inducing scheme is constructed for the quadratic family"
        )
    if tau_max < 1:
        raise ValueError("tau_max must be >= 1")

    if m.kind == K_DOUBLING:
        lam = int(m.param)
        edges = np.linspace(0.0, 1.0, lam + 1)
        return InducedSystem(
            map=m,
            y_lo=0.0,
            y_hi=1.0,
            branch_lo=edges[:-1].copy(),
            branch_hi=edges[1:].copy(),
            branch_tau=np.ones(lam, dtype=np.int64),
            tau_max=1,
            tail_mass_bound=0.0,
            xi=np.empty(0),
        )

    gamma = m.param
    # xi[k] is the k-fold left-branch preimage of 1/2 (xi[0] = 1/2); the
    # branch with return time n is [(1 + xi[n-1])/2, (1 + xi[n-2])/2),
    # with the tau = 1 branch [3/4, 1]
    xi = np.empty(tau_max)
    xi[0] = 0.5
    for k in range(1, tau_max):
        xi[k] = _kernels.lsv_left_inverse(xi[k - 1], gamma)

    lo = 0.5 * (1.0 + xi)                               # tau = 1..tau_max
    hi = np.concatenate([[1.0], 0.5 * (1.0 + xi[:-1])])
    order = np.argsort(lo)        # ascending position = descending tau
    branch_lo = lo[order]
    branch_hi = hi[order]
    branch_tau = np.arange(tau_max, 0, -1, dtype=np.int64)

    # Lebesgue mass (w.r.t. normalised Lebesgue on Y) beyond tau_max is
    # exactly xi[tau_max - 1]; a factor 2 covers the density of mu_Y, and
    # the amplitude c is reported through the form c * K^(1 - 1/gamma)
    leb_tail = float(xi[tau_max - 1])
    c = 2.0 * leb_tail * tau_max ** (1.0 / gamma - 1.0)
    tail_mass_bound = c * tau_max ** (1.0 - 1.0 / gamma)
    if tail_mass_bound > tail_tol:
        raise TruncationError(
            f"tail mass bound {tail_mass_bound:.3g} exceeds {tail_tol} at "
            f"tau_max={tau_max}; increase tau_max"
        )
    return InducedSystem(
        map=m,
        y_lo=0.5,
        y_hi=1.0,
        branch_lo=branch_lo,
        branch_hi=branch_hi,
        branch_tau=branch_tau,
        tau_max=tau_max,
        tail_mass_bound=tail_mass_bound,
        xi=xi,
    )


def first_return_time(m: MapDescriptor, y: float, cap: int = 10**6) -> int:
    """Empirical first-return time of y to Y (direct iteration)."""
    y_lo = 0.5 if m.kind == K_LSV else 0.0
    tau = _kernels.first_return_time(m.kind, m.param, y, y_lo, 1.0, cap)
    if tau < 0:
        raise DomainError(f"orbit of {y} did not return within {cap} steps")
    return tau


# ---------------------------------------------------------------------------
# centering
# ---------------------------------------------------------------------------

def center(obs: Observable, m: MapDescriptor, n: int = 10**7,
           burn_in: int = 10**3, seed: int = 0,
           tol: float = 1e-3) -> Observable:
    """Return a copy of ``obs`` whose mean vanishes under the invariant
    measure of ``m``.

    For doubling maps the invariant measure is Lebesgue and the offset is
    exact; otherwise it is a Birkhoff average along a long burnt-in orbit
    (the empirical mean of the centered observable is checked against
    ``tol``).
    """
    raw = obs.with_offset(np.zeros(obs.dim))
    if m.kind == K_DOUBLING:
        offset = raw.lebesgue_mean(0.0, 1.0)
        return obs.with_offset(offset)
    table, starts, off0 = raw.term_table()
    key = rng.stream_key(seed, rng.CENTERING)
    mean, _, half = _kernels.orbit_moments(
        m.kind, m.param, table, starts, off0, np.uint64(key), n, burn_in
    )
    resid = np.max(np.abs(mean - half))
    scale = max(1.0, np.max(np.abs(mean)))
    if resid > tol * scale * 10:
        raise ValueError(
            f"centering mean did not stabilise (split-half residual {resid:.2e})"
        )
    return obs.with_offset(mean)
