"""Orthonormal systems, their evolved densities and mixed space-time norms.

An operator ``gamma = sum_j n_j |u_j><u_j|`` is held as a :class:`LowRankState`.
Densities of the freely evolved operator are computed slice by slice.  Late
slices need far larger boxes than early ones, so each slice is evaluated on
its own grid (same spacing, box sized from exact second moments of the
evolved vectors) after zero-padding the stored vectors.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg

from .errors import ExponentMismatch, LeakageExceeded, QuadratureUnderresolved, ShapeMismatch
from .oracle import CoherentEnsembleParams, _as_fraction
from .quadrature import space_lq, time_lp
from .schatten import DenseOperator, schatten_norm
from .spectral import (LEAK_TOL, SHELL, SpatialGrid, TimeWindow, WaveFunction,
                       evolve_values)

GRAM_TOL = 1e-8
MGS_TOL = 1e-10
DECAY = 1e-4
_CHUNK_ELEMS = 1 << 22


# -- exponents ----------------------------------------------------------------

@dataclass(frozen=True)
class MixedNormSpec:
    """Exponent pair for ``L^p_t L^q_x``.

    ``side="primal"`` requires ``1 < q <= 1 + 2/d`` and ``2/p + d/q = d``;
    ``side="dual"`` requires ``1 + d/2 <= q < inf`` and ``2/p + d/q = 2``.
    Both relations are checked in exact rational arithmetic.
    """

    p: Fraction
    q: Fraction
    d: int = 1
    side: str = "primal"

    def __post_init__(self):
        p, q, d = _as_fraction(self.p), _as_fraction(self.q), self.d
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if d < 1:
            raise ValueError("d must be positive")
        if p < 1 or q < 1:
            raise ExponentMismatch("exponents must be >= 1")
        if self.side == "primal":
            if not (1 < q <= 1 + Fraction(2, d)) or 2 / p + d / q != d:
                raise ExponentMismatch(f"(p, q) = ({p}, {q}) is not a primal pair for d={d}")
        elif self.side == "dual":
            if not (q >= 1 + Fraction(d, 2)) or 2 / p + d / q != 2:
                raise ExponentMismatch(f"(p', q') = ({p}, {q}) is not a dual pair for d={d}")
        else:
            raise ValueError(f"unknown side {self.side!r}")

    @classmethod
    def primal(cls, q, d=1) -> "MixedNormSpec":
        q = _as_fraction(q)
        if q <= 1:
            raise ExponentMismatch("q must exceed 1")
        return cls(2 / (d - d / q), q, d, "primal")

    @classmethod
    def dual(cls, q, d=1) -> "MixedNormSpec":
        q = _as_fraction(q)
        return cls(2 / (2 - d / q), q, d, "dual")

    @property
    def pf(self) -> float:
        return float(self.p)

    @property
    def qf(self) -> float:
        return float(self.q)

    @property
    def schatten_exponent(self) -> float:
        """``2q/(q+1)`` on the primal side, ``2q'`` on the dual side."""
        if self.side == "primal":
            return float(2 * self.q / (self.q + 1))
        return float(2 * self.q)


# -- states -------------------------------------------------------------------

def _gram(vectors: np.ndarray, cell: float) -> np.ndarray:
    flat = vectors.reshape(vectors.shape[0], -1)
    return (flat.conj() @ flat.T) * cell


def orthonormalize(vectors: np.ndarray, cell: float, tol: float = MGS_TOL) -> np.ndarray:
    """Modified Gram-Schmidt (two passes) in the ``h^d``-weighted inner product.

    Raises ``ValueError`` if a vector is dependent on its predecessors to
    within ``tol`` (relative to its own norm).
    """
    flat = np.array(vectors.reshape(vectors.shape[0], -1), dtype=complex)
    for k in range(flat.shape[0]):
        v = flat[k]
        n0 = np.sqrt(np.vdot(v, v).real * cell)
        if n0 == 0:
            raise ValueError(f"vector {k} is zero")
        for _ in range(2):
            for j in range(k):
                v -= np.vdot(flat[j], v) * cell * flat[j]
        nk = np.sqrt(np.vdot(v, v).real * cell)
        if nk <= tol * n0:
            raise ValueError(f"vector {k} is linearly dependent (residual {nk / n0:.1e})")
        flat[k] = v / nk
    return flat.reshape(vectors.shape)


@dataclass(frozen=True, eq=False)
class LowRankState:
    """``gamma = sum_j n_j |u_j><u_j|`` with orthonormal ``u_j`` on one grid.

    ``vectors`` has shape ``(rank, *grid.shape)``.
    """

    grid: SpatialGrid
    weights: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights))
        v = np.asarray(self.vectors)
        if v.shape[1:] != self.grid.shape or v.shape[0] != w.size:
            raise ShapeMismatch(f"vectors {v.shape} vs weights {w.shape} on grid {self.grid.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        err = np.max(np.abs(_gram(v, self.grid.cell) - np.eye(w.size))) if w.size else 0.0
        if err > GRAM_TOL:
            raise ValueError(f"vectors are not orthonormal (Gram error {err:.1e})")
        if np.all(np.isreal(w)):
            w = w.real.astype(float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "vectors", v)

    @classmethod
    def from_functions(cls, grid: SpatialGrid, weights, functions) -> "LowRankState":
        """Orthonormalize arbitrary linearly independent functions first."""
        vals = np.stack([f.values if isinstance(f, WaveFunction) else np.asarray(f)
                         for f in functions])
        return cls(grid, np.asarray(weights), orthonormalize(vals, grid.cell))

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def real_weights(self) -> bool:
        return np.isrealobj(self.weights)

    def functions(self) -> list:
        return [WaveFunction(self.grid, v) for v in self.vectors]

    def scaled(self, c) -> "LowRankState":
        return LowRankState(self.grid, self.weights * c, self.vectors)

    def schatten_norm(self, r: float) -> float:
        """``(sum |n_j|^r)^(1/r)``."""
        a = np.abs(self.weights)
        if np.isinf(r):
            return float(a.max(initial=0.0))
        return float(np.sum(a ** r) ** (1.0 / r))

    def trace_power(self, r: float) -> float:
        return float(np.sum(np.abs(self.weights) ** r))

    def to_operator(self) -> DenseOperator:
        flat = self.vectors.reshape(self.rank, -1)
        kernel = (flat.T * self.weights) @ flat.conj()
        return DenseOperator(kernel, "position", self.grid.cell, self.real_weights)


# -- free-flow moments and box sizing -----------------------------------------

@dataclass(frozen=True)
class _Moments:
    # per vector and axis: mean position, mean momentum, variances, symmetric covariance
    mz: np.ndarray
    mp: np.ndarray
    vz: np.ndarray
    vp: np.ndarray
    cov: np.ndarray
    w: np.ndarray

    def extent(self, t: float, width: float = 9.0) -> float:
        """``|<z>| + width * sd(z)`` of the ``|n_j|``-weighted mixture at time ``t``,
        maximized over axes."""
        w = self.w[:, None] / self.w.sum()
        centre = self.mz + 2 * t * self.mp
        var = np.maximum(self.vz + 4 * t * self.cov + 4 * t * t * self.vp, 0.0)
        mean = np.sum(w * centre, axis=0)
        second = np.sum(w * (var + centre ** 2), axis=0)
        sd = np.sqrt(np.maximum(second - mean ** 2, 0.0))
        return float(np.max(np.abs(mean) + width * sd))


def _moments(state: LowRankState) -> _Moments:
    g = state.grid
    v = state.vectors
    ax = tuple(range(1, g.dim + 1))
    dens = np.abs(v) ** 2 * g.cell
    hat = np.fft.fftn(v, axes=ax)
    mz, mp, vz, vp, cov = ([] for _ in range(5))
    for a, c in enumerate(g.coords):
        ks = np.meshgrid(*([g.momentum_axis] * g.dim), indexing="ij")[a]
        pv = np.fft.ifftn(hat * ks, axes=ax)
        m1 = np.sum(dens * c, axis=ax)
        m2 = np.sum(dens * c * c, axis=ax)
        p1 = np.sum(np.conj(v) * pv, axis=ax).real * g.cell
        p2 = np.sum(np.abs(pv) ** 2, axis=ax) * g.cell
        zp = np.sum(np.conj(v) * c * pv, axis=ax).real * g.cell
        mz.append(m1)
        mp.append(p1)
        vz.append(m2 - m1 ** 2)
        vp.append(p2 - p1 ** 2)
        cov.append(zp - m1 * p1)
    w = np.abs(state.weights)
    if not np.any(w):
        w = np.ones_like(w)
    return _Moments(*(np.stack(x, axis=-1) for x in (mz, mp, vz, vp, cov)), w)


def _grid_for(state: LowRankState, extent: float) -> SpatialGrid:
    g = state.grid
    need = extent / (1.0 - SHELL)
    n = g.n
    while n * g.h / 2 < need:
        n *= 2
    if n == g.n:
        return g
    return SpatialGrid(g.dim, n * g.h / 2, n)


# -- densities ----------------------------------------------------------------

def _density_leakage(rho, grid, tol, t):
    if tol is None:
        return
    a = np.abs(rho)
    total = a.sum()
    if total > 0 and (a * grid.shell_mask).sum() / total > tol:
        raise LeakageExceeded(f"density at t={t:g}: shell mass fraction "
                              f"{(a * grid.shell_mask).sum() / total:.2e} exceeds {tol:.1e}")


def _slice(state: LowRankState, t: float, moments: _Moments | None, leak_tol):
    if moments is None:
        grid = state.grid
    else:
        grid = _grid_for(state, moments.extent(t))
    rho = np.zeros(grid.shape, dtype=np.result_type(state.weights, float))
    step = max(1, _CHUNK_ELEMS // grid.size)
    for i in range(0, state.rank, step):
        vals = state.vectors[i:i + step]
        if grid is not state.grid:
            vals = state.grid.embed(vals, grid)
        ev = evolve_values(vals, grid, t)
        rho += np.tensordot(state.weights[i:i + step], np.abs(ev) ** 2, axes=1)
    _density_leakage(rho, grid, leak_tol, t)
    return grid, rho


def density_slice(state: LowRankState, t: float, leak_tol=LEAK_TOL,
                  adaptive: bool = False) -> np.ndarray:
    """``rho(t, z) = sum_j n_j |exp(i t Laplacian) u_j(z)|^2`` on the state's grid.

    With ``adaptive=True`` the slice is computed on an enlarged box sized for
    the evolved spread and returned on that box; see :func:`density_field`.

    Raises
    ------
    LeakageExceeded
        If more than ``leak_tol`` of the (absolute) density mass lies in the
        outer shell of the box.
    """
    return _slice(state, t, _moments(state) if adaptive else None, leak_tol)[1]


@dataclass(frozen=True, eq=False)
class DensityField:
    """Density samples on a time axis; each slice may live on its own grid."""

    times: np.ndarray
    weights: np.ndarray
    slices: tuple
    grids: tuple

    def __post_init__(self):
        if not (len(self.times) == len(self.weights) == len(self.slices) == len(self.grids)):
            raise ShapeMismatch("times, weights, slices and grids must have equal length")

    @classmethod
    def uniform(cls, grid: SpatialGrid, samples: np.ndarray, window: TimeWindow | None = None,
                times=None) -> "DensityField":
        samples = np.asarray(samples)
        if window is not None:
            times, w = window.nodes(), window.weights()
        else:
            times = np.atleast_1d(np.asarray(times, dtype=float))
            if times.size == 1:
                w = np.ones(1)
            else:
                w = np.zeros(times.size)
                dt = np.diff(times)
                w[:-1] += dt / 2
                w[1:] += dt / 2
        if samples.shape != (len(times),) + grid.shape:
            raise ShapeMismatch("samples must have shape (len(times), *grid.shape)")
        return cls(np.asarray(times), w, tuple(samples), (grid,) * len(times))

    def masses(self) -> np.ndarray:
        return np.array([np.sum(s).real * g.cell for s, g in zip(self.slices, self.grids)])

    def space_norms(self, q: float) -> np.ndarray:
        return np.array([space_lq(s, g.cell, q, g.dim) for s, g in zip(self.slices, self.grids)])


def density_field(state: LowRankState, window: TimeWindow, leak_tol=LEAK_TOL,
                  adaptive: bool = True) -> DensityField:
    """Evaluate the density on every node of ``window``."""
    mom = _moments(state) if adaptive else None
    grids, slices = [], []
    for t in window.nodes():
        g, rho = _slice(state, float(t), mom, leak_tol)
        grids.append(g)
        slices.append(rho)
    return DensityField(window.nodes(), window.weights(), tuple(slices), tuple(grids))


def _require_primal(spec: MixedNormSpec):
    if not isinstance(spec, MixedNormSpec):
        raise TypeError("spec must be a MixedNormSpec")
    if spec.side != "primal":
        raise ExponentMismatch("mixed norms of densities use a primal pair")


def mixed_norm(field: DensityField, spec: MixedNormSpec) -> float:
    """``L^p_t L^q_x`` norm: trapezoid in time, Riemann sum in space."""
    _require_primal(spec)
    return time_lp(field.times, field.space_norms(spec.qf), spec.pf, field.weights)


# -- ratios -------------------------------------------------------------------

def characteristic_time(state: LowRankState) -> float:
    """Time over which position spread grows appreciably: ``sd(z)/(2 sd(p))``."""
    m = _moments(state)
    w = np.abs(state.weights)[:, None]
    vz = np.sum(w * m.vz) / np.sum(w * np.ones_like(m.vz))
    vp = np.sum(w * m.vp) / np.sum(w * np.ones_like(m.vp))
    return float(np.sqrt(vz / vp) / 2)


def _integrand(state, spec, mom, leak_tol):
    def f(t):
        g, rho = _slice(state, t, mom, leak_tol)
        return space_lq(rho, g.cell, spec.qf, g.dim) ** spec.pf
    return f


def auto_window(state: LowRankState, spec: MixedNormSpec, decay: float = DECAY,
                leak_tol=LEAK_TOL, centre: float = 0.0) -> tuple:
    """Symmetric window ``[c - T, c + T]`` outside which the time integrand is below
    ``decay`` times its value at ``c``.

    Returns ``(T, t_char)``.  ``T`` is located by doubling from the
    characteristic time, then bisection to 2% on each side.
    """
    _require_primal(spec)
    mom = _moments(state)
    f = _integrand(state, spec, mom, leak_tol)
    tc = characteristic_time(state)
    level = decay * f(centre)
    T = 0.0
    for sgn in (1.0, -1.0):
        lo, hi = 0.0, tc
        while f(centre + sgn * hi) >= level:
            lo, hi = hi, 2 * hi
            if hi > 1e8 * tc:
                raise QuadratureUnderresolved("time integrand does not decay")
        while hi - lo > 0.02 * hi:
            mid = 0.5 * (lo + hi)
            if f(centre + sgn * mid) >= level:
                lo = mid
            else:
                hi = mid
        T = max(T, hi)
    return T, tc


@dataclass(frozen=True)
class StrichartzReport:
    d: int
    p: float
    q: float
    N: float
    window: tuple
    lhs: float
    rhs: float
    ratio: float
    refinement_delta: float

    def row(self) -> dict:
        return {"d": self.d, "p": self.p, "q": self.q, "N": self.N,
                "window": f"{self.window[0]:.6g}:{self.window[1]:.6g}",
                "lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio}


def strichartz_ratio(state: LowRankState, spec: MixedNormSpec, window: TimeWindow | None = None,
                     nodes: int = 129, leak_tol=LEAK_TOL) -> StrichartzReport:
    """Left side of the orthonormal Strichartz bound over its right side.

    The left side is the windowed mixed norm of the evolved density; the right
    side is ``(sum |n_j|^(2q/(q+1)))^((q+1)/(2q))``.  Without an explicit
    ``window`` one is chosen where the time integrand has decayed to 1e-4 of
    its peak, with tangent-stretched nodes.  ``refinement_delta`` is the
    relative change of the left side when every other node is dropped.
    """
    _require_primal(spec)
    if window is None:
        T, tc = auto_window(state, spec, leak_tol=leak_tol)
        if nodes % 2 == 0:
            nodes += 1
        window = TimeWindow(-T, T, nodes, scale=tc)
    fld = density_field(state, window, leak_tol)
    per_t = fld.space_norms(spec.qf)
    lhs = time_lp(fld.times, per_t, spec.pf, fld.weights)
    delta = float("nan")
    if window.m % 2 == 1 and window.m >= 5:
        coarse = window.coarsened()
        lhs_c = time_lp(fld.times[::2], per_t[::2], spec.pf, coarse.weights())
        delta = abs(lhs - lhs_c) / lhs if lhs else 0.0
    rhs = state.schatten_norm(spec.schatten_exponent)
    ratio = lhs / rhs if rhs else 0.0
    N = float(np.sum(np.abs(state.weights)))
    return StrichartzReport(state.grid.dim, spec.pf, spec.qf, N,
                            (window.t_start, window.t_end), lhs, rhs, ratio, delta)


def triangle_bound_check(state: LowRankState, times=(0.0,), leak_tol=LEAK_TOL,
                         slack: float = 1e-8) -> bool:
    """``sup_t integral |rho(t)| <= sum_j |n_j|`` on the given times."""
    mom = _moments(state)
    bound = float(np.sum(np.abs(state.weights)))
    for t in np.atleast_1d(times):
        g, rho = _slice(state, float(t), mom, leak_tol)
        if np.sum(np.abs(rho)) * g.cell > bound * (1 + slack) + slack:
            return False
    return True


def write_ratio_csv(path, reports) -> None:
    cols = ["d", "p", "q", "N", "window", "lhs", "rhs", "ratio"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.row())


# -- inhomogeneous problem ----------------------------------------------------

def conjugate_free(action: np.ndarray, grid: SpatialGrid, tau: float) -> np.ndarray:
    """``U M U^*`` for ``U = exp(i tau Laplacian)`` acting on flattened samples."""
    if tau == 0:
        return np.array(action, dtype=complex)
    n = grid.size
    cols = evolve_values(action.T.reshape((n,) + grid.shape), grid, tau).reshape(n, n)
    um = cols.T  # U M
    rows = evolve_values(um.conj().reshape((n,) + grid.shape), grid, tau).reshape(n, n)
    return rows.conj()  # (U (U M)^*)^* = U M U^*


def _source_nodes(t0, t, step):
    m = max(1, int(np.ceil(abs(t - t0) / step)))
    s = np.linspace(t0, t, m + 1)
    w = np.full(m + 1, (t - t0) / m)
    w[0] *= 0.5
    w[-1] *= 0.5
    return s, w


def _source_action(R, s, grid):
    a = np.asarray(R(s))
    if a.shape != (grid.size, grid.size):
        raise ShapeMismatch(f"source matrix has shape {a.shape}, expected {(grid.size,) * 2}")
    if np.max(np.abs(a - a.conj().T), initial=0.0) > 1e-10 * max(np.max(np.abs(a), initial=0.0), 1.0):
        raise ValueError(f"source is not Hermitian at s={s:g}")
    return a


def _duhamel(R, grid, t0, t, step):
    s, w = _source_nodes(t0, t, step)
    acc = np.zeros((grid.size, grid.size), dtype=complex)
    for sk, wk in zip(s, w):
        acc += wk * conjugate_free(_source_action(R, sk, grid), grid, -sk)
    return conjugate_free(acc, grid, t)


def inhomogeneous_solution(R, grid: SpatialGrid, t0: float, t: float, step: float,
                           gate: float = 0.01) -> DenseOperator:
    """``gamma(t) = integral_{t0}^t U(t-s) R(s) U(t-s)^* ds`` by the trapezoid rule.

    ``R(s)`` returns the Hermitian action matrix of the source on flattened
    samples of ``grid``.  The result at ``step`` is compared with the result
    at ``step/2``; a relative Hilbert-Schmidt change above ``gate`` raises
    :class:`QuadratureUnderresolved`.  The half-step result is returned.
    """
    if t == t0:
        return DenseOperator(np.zeros((grid.size, grid.size), complex), "position", grid.cell, True)
    coarse = _duhamel(R, grid, t0, t, step)
    fine = _duhamel(R, grid, t0, t, step / 2)
    nf = np.linalg.norm(fine)
    if nf > 0 and np.linalg.norm(fine - coarse) / nf > gate:
        raise QuadratureUnderresolved(
            f"step halving changed the solution by {np.linalg.norm(fine - coarse) / nf:.2%}")
    fine = 0.5 * (fine + fine.conj().T)
    return DenseOperator.from_action(fine, "position", grid.cell, hermitian=True)


@dataclass(frozen=True)
class InhomogeneousReport:
    lhs: float
    rhs: float
    ratio: float
    degenerate: bool
    refinement_delta: float


def _abs_hermitian(a: np.ndarray) -> np.ndarray:
    lam, vec = scipy.linalg.eigh(0.5 * (a + a.conj().T))
    return (vec * np.abs(lam)) @ vec.conj().T


def _inhomogeneous_sides(R, spec, grid, t0, t_end, step, leak_tol):
    s, w = _source_nodes(t0, t_end, step)
    n = grid.size
    cum = np.zeros((n, n), dtype=complex)
    absint = np.zeros((n, n), dtype=complex)
    per_t = np.zeros(s.size)
    prev = None
    for k, sk in enumerate(s):
        a = _source_action(R, sk, grid)
        q_k = conjugate_free(a, grid, -sk)
        if prev is not None:
            cum += 0.5 * (s[k] - s[k - 1]) * (prev + q_k)
        prev = q_k
        absint += w[k] * conjugate_free(_abs_hermitian(a), grid, -sk)
        gam = conjugate_free(cum, grid, sk)
        rho = np.diagonal(gam).real.reshape(grid.shape) / grid.cell
        _density_leakage(rho, grid, leak_tol, sk)
        per_t[k] = space_lq(rho, grid.cell, spec.qf, grid.dim)
    wt = np.full(s.size, s[1] - s[0] if s.size > 1 else 1.0)
    if s.size > 1:
        wt[0] *= 0.5
        wt[-1] *= 0.5
    lhs = time_lp(s, per_t, spec.pf, wt)
    absint = 0.5 * (absint + absint.conj().T)
    rhs = schatten_norm(DenseOperator.from_action(absint, "position", grid.cell, True),
                        spec.schatten_exponent)
    return lhs, rhs


def inhomogeneous_ratio(R, spec: MixedNormSpec, grid: SpatialGrid, t0: float, t_end: float,
                        step: float, leak_tol=LEAK_TOL) -> InhomogeneousReport:
    """Mixed norm of the solution density over ``[t0, t_end]`` divided by
    ``|| integral U(-s) |R(s)| U(-s)^* ds ||_{S^(2q/(q+1))}``.

    The source is assumed to vanish outside ``[t0, t_end]``.  A zero source
    gives ``0/0``, reported as ratio 0 with ``degenerate=True``.
    ``refinement_delta`` is the relative change of the ratio under step
    halving.
    """
    _require_primal(spec)
    lhs, rhs = _inhomogeneous_sides(R, spec, grid, t0, t_end, step, leak_tol)
    if rhs == 0:
        return InhomogeneousReport(lhs, rhs, 0.0, True, 0.0)
    lhs2, rhs2 = _inhomogeneous_sides(R, spec, grid, t0, t_end, step / 2, leak_tol)
    r1, r2 = lhs / rhs, lhs2 / rhs2
    return InhomogeneousReport(lhs2, rhs2, r2, False, abs(r2 - r1) / abs(r2))


# -- builders -----------------------------------------------------------------

def hermite_system(grid: SpatialGrid, count: int, scale: float = 1.0,
                   weights=None) -> LowRankState:
    """First ``count`` Hermite functions of width ``scale`` (d=1), orthonormalized on the grid."""
    if grid.dim != 1:
        raise ValueError("hermite_system is one-dimensional")
    x = grid.axis / scale
    funcs = np.zeros((count, grid.n))
    h0 = np.pi ** -0.25 * np.exp(-x * x / 2)
    funcs[0] = h0
    if count > 1:
        funcs[1] = np.sqrt(2.0) * x * h0
    for k in range(2, count):
        funcs[k] = np.sqrt(2.0 / k) * x * funcs[k - 1] - np.sqrt((k - 1) / k) * funcs[k - 2]
    funcs /= np.sqrt(scale)
    w = np.ones(count) if weights is None else np.asarray(weights)
    return LowRankState.from_functions(grid, w, funcs)


def ensemble_grid(e: CoherentEnsembleParams, min_n: int = 64) -> SpatialGrid:
    """Smallest grid resolving the ensemble at time 0 (spacing from momentum spread)."""
    sz = np.sqrt(e.L ** 2 / 2 + e.beta)
    sk = np.sqrt(e.mu / 2 + 1 / (4 * e.beta))
    h = np.pi / (8.5 * sk)
    need = 9.0 * sz / (1 - SHELL)
    n = min_n
    while n * h / 2 < need:
        n *= 2
    return SpatialGrid(1, n * h / 2, n)


def coherent_ensemble_operator(e: CoherentEnsembleParams, grid: SpatialGrid) -> np.ndarray:
    """Action matrix of the phase-space average of coherent-state projectors (d=1).

    The average over centres ``x`` and momenta ``xi`` is done by lattice
    quadrature with spacings fine enough that aliasing is below 1e-13.  The
    two lattice sums factorize, so the kernel is an elementwise product.
    """
    if e.dim != 1 or grid.dim != 1:
        raise ValueError("discretized ensembles are one-dimensional")
    b = e.beta
    z = grid.axis
    dx = 0.7 * np.sqrt(b) if e.L > 0.7 * np.sqrt(b) else e.L / 2
    xs = np.arange(-np.ceil(6.5 * e.L / dx), np.ceil(6.5 * e.L / dx) + 1) * dx
    dk = min(0.4 / np.sqrt(b), np.sqrt(e.mu) / 2)
    ks = np.arange(-np.ceil(6.5 * np.sqrt(e.mu) / dk), np.ceil(6.5 * np.sqrt(e.mu) / dk) + 1) * dk
    # centre sum: G(z, z') = sum_a dx w(x_a) |F|(z) |F|(z')
    env = np.exp(-(z[None, :] - xs[:, None]) ** 2 / (4 * b)) * (2 * np.pi * b) ** -0.25
    G = (env.T * (dx * np.exp(-xs ** 2 / e.L ** 2))) @ env
    # momentum sum: S(z - z') = sum_b dk w(xi_b) exp(i xi_b (z - z')), a Toeplitz matrix
    lag = grid.h * np.arange(grid.n)
    col = (dk * np.exp(-ks ** 2 / e.mu)) @ np.exp(1j * np.outer(ks, lag))
    S = scipy.linalg.toeplitz(col, col.conj())
    kernel = G * S / (2 * np.pi)
    return kernel * grid.cell


def coherent_ensemble_state(e: CoherentEnsembleParams, grid: SpatialGrid | None = None,
                            rel_cut: float = 1e-11) -> LowRankState:
    """Discretized coherent-state ensemble as a truncated eigen-expansion."""
    grid = ensemble_grid(e) if grid is None else grid
    act = coherent_ensemble_operator(e, grid)
    act = 0.5 * (act + act.conj().T)
    lam, vec = scipy.linalg.eigh(act)
    keep = lam > rel_cut * lam.max()
    lam, vec = lam[keep][::-1], vec[:, keep][:, ::-1]
    vectors = vec.T / np.sqrt(grid.cell)
    return LowRankState(grid, lam, vectors)
