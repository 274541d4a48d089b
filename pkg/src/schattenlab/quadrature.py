"""Mixed-norm quadrature, time-ordered simplex integration and the
multilinear Hardy-Littlewood-Sobolev (HLS) form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import integrate

from .errors import InadmissibleExponents, QuadratureUnderresolved

GATE = 0.01
HLS_MAX_N = 4


# -- mixed norms ----------------------------------------------------------------

def time_lp(times: np.ndarray, values: np.ndarray, p: float, weights=None) -> float:
    """``(integral |values|^p dt)^(1/p)`` by the composite trapezoid rule.

    ``weights`` overrides the trapezoid weights on ``times`` (e.g. those of a
    stretched :class:`~schattenlab.spectral.TimeWindow`).
    """
    values = np.abs(np.asarray(values, dtype=float))
    if np.isinf(p):
        return float(np.max(values))
    if values.size == 1:
        return float(values[0])
    if weights is not None:
        return float(np.dot(weights, values ** p) ** (1.0 / p))
    return float(np.trapezoid(values ** p, np.asarray(times, dtype=float)) ** (1.0 / p))


def space_lq(samples: np.ndarray, cell: float, q: float, ndim: int) -> np.ndarray:
    """Per-slice ``L^q`` norms of ``samples`` over their trailing ``ndim`` axes."""
    ax = tuple(range(-ndim, 0))
    a = np.abs(samples)
    if np.isinf(q):
        return np.max(a, axis=ax)
    return (np.sum(a ** q, axis=ax) * cell) ** (1.0 / q)


def lp_lq_norm(samples: np.ndarray, times: np.ndarray, cell: float, p: float, q: float,
               weights=None) -> float:
    """``L^p_t L^q_x`` norm of space-time samples of shape ``(len(times), *space)``.

    Time integral by trapezoid on ``times``; space by a Riemann sum with cell
    volume ``cell``.  A single time slice is treated as a unit time cell.
    """
    samples = np.asarray(samples)
    times = np.atleast_1d(times)
    if samples.shape[0] != times.size:
        raise ValueError("first axis of samples must match times")
    per_t = space_lq(samples, cell, q, samples.ndim - 1)
    return time_lp(times, per_t, p, weights)


# -- ordered simplex ----------------------------------------------------------------

def _composite_gl(panels: int, order: int = 4):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _simplex_rule(n: int, t0: float, t1: float, panels: int):
    s, w = _composite_gl(panels)
    grids = np.meshgrid(*([s] * n), indexing="ij")
    wts = np.meshgrid(*([w] * n), indexing="ij")
    S = np.stack([g.ravel() for g in grids], axis=-1)   # column k -> s_{k+1}
    W = np.prod(np.stack([g.ravel() for g in wts], axis=-1), axis=-1)
    T = np.empty_like(S)
    upper = np.full(S.shape[0], t1 - t0)
    jac = np.ones(S.shape[0])
    for k in range(n - 1, -1, -1):
        jac *= upper
        T[:, k] = upper * S[:, k]
        upper = T[:, k]
    return T + t0, W * jac


def _simplex_sum(f, n, t0, t1, panels, batch):
    pts, wts = _simplex_rule(n, t0, t1, panels)
    total = None
    for a in range(0, pts.shape[0], batch):
        vals = np.asarray(f(pts[a:a + batch]))
        part = np.tensordot(wts[a:a + batch], vals, axes=(0, 0))
        total = part if total is None else total + part
    return total


def ordered_simplex_integrate(f, n: int, window, step: float, gate: float = GATE,
                              batch: int = 4096):
    """Integrate ``f(t_1, ..., t_n)`` over ``t0 <= t_1 <= ... <= t_n <= t``.

    ``f`` receives an array of shape ``(K, n)`` whose columns are
    ``t_1 .. t_n`` and returns an array of shape ``(K, ...)``; array-valued
    integrands are summed componentwise.  The simplex is mapped onto the
    unit cube and integrated with composite 4-point Gauss-Legendre panels of
    width about ``step``; the result is accepted only if halving the step
    changes it by less than ``gate`` (relative).
    """
    t0, t1 = map(float, window)
    if n < 1:
        raise ValueError("n must be positive")
    if t1 == t0:
        return 0.0
    panels = max(1, int(np.ceil(abs(t1 - t0) / step)))
    coarse = _simplex_sum(f, n, t0, t1, panels, batch)
    fine = _simplex_sum(f, n, t0, t1, 2 * panels, batch)
    scale = np.linalg.norm(fine)
    if np.linalg.norm(fine - coarse) > gate * max(scale, 1e-300) and scale > 0:
        raise QuadratureUnderresolved(
            f"simplex quadrature changed by {np.linalg.norm(fine - coarse) / scale:.2e} on refinement")
    return fine


# -- multilinear HLS ----------------------------------------------------------------

@dataclass(frozen=True)
class HlsExponents:
    """Pair exponents ``beta`` (``N x N``) and Lebesgue exponents ``r`` (``N``)."""

    beta: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float)
        r = np.asarray(self.r, dtype=float).ravel()
        if b.shape != (r.size, r.size):
            raise ValueError("beta must be N x N with N = len(r)")
        if r.size < 2:
            raise ValueError("need at least two functions")
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "r", r)

    @property
    def N(self) -> int:
        return self.r.size


@dataclass(frozen=True)
class HlsCheck:
    admissible: bool
    violations: tuple = field(default_factory=tuple)

    def __bool__(self):
        return self.admissible


def hls_admissible(e: HlsExponents, tol: float = 1e-12) -> HlsCheck:
    """Check the five admissibility conditions of the multilinear HLS inequality.

    Violated conditions are reported by id: ``beta_diagonal``,
    ``beta_symmetric``, ``beta_range``, ``r_gt_1``, ``sum_inverse_r_gt_1``,
    ``beta_row_sum``.
    """
    b, r = e.beta, e.r
    bad = []
    if np.any(np.abs(np.diag(b)) > tol):
        bad.append("beta_diagonal")
    if np.any(np.abs(b - b.T) > tol):
        bad.append("beta_symmetric")
    off = b[~np.eye(e.N, dtype=bool)]
    if np.any(off < -tol) or np.any(off >= 1 - tol):
        bad.append("beta_range")
    if np.any(r <= 1 + tol):
        bad.append("r_gt_1")
    if not np.sum(1.0 / r) > 1 + tol:
        bad.append("sum_inverse_r_gt_1")
    with np.errstate(divide="ignore", invalid="ignore"):
        target = 2 * (r - 1) / r
    if np.any(np.abs(b.sum(axis=0) - target) > tol):
        bad.append("beta_row_sum")
    return HlsCheck(not bad, tuple(bad))


def _with_edges(N, edges, value):
    b = np.zeros((N, N))
    for i, j in edges:
        b[i, j] += value
        b[j, i] += value
    return b


def chain_exponents(d: int) -> HlsExponents:
    """``d+2`` functions on a chain: ``r = (2(d+1)/(d+2), d+1, ..., d+1, 2(d+1)/(d+2))``,
    neighbour exponent ``d/(d+1)``."""
    N = d + 2
    r = np.full(N, d + 1.0)
    r[0] = r[-1] = 2 * (d + 1) / (d + 2)
    return HlsExponents(_with_edges(N, [(k, k + 1) for k in range(N - 1)], d / (d + 1)), r)


def cyclic_exponents(d: int) -> HlsExponents:
    """``d+2`` functions on a cycle, all ``r = 1 + d/2``, neighbour exponent ``d/(d+2)``."""
    N = d + 2
    edges = [(k, (k + 1) % N) for k in range(N)]
    return HlsExponents(_with_edges(N, edges, d / (d + 2)), np.full(N, 1 + d / 2))


def endpoint_exponents(d: int) -> HlsExponents:
    """``d+1`` functions on a cycle with ``r = d+1``: here ``sum 1/r_k = 1``."""
    N = d + 1
    edges = [(k, (k + 1) % N) for k in range(N)]
    return HlsExponents(_with_edges(N, edges, d / (d + 1)), np.full(N, d + 1.0))


def _second_antiderivative(x, beta, eps):
    # Phi with Phi'' = |x|^-beta 1{|x| >= eps}, Phi(0) = Phi'(0) = 0
    y = np.abs(x)
    if beta == 0:
        return 0.5 * y * y
    a, b = 1 - beta, 2 - beta
    yy = np.maximum(y, eps)
    val = yy * (yy ** a - eps ** a) / a - (yy ** b - eps ** b) / b
    return np.where(y >= eps, val, 0.0)


def cell_kernel(m: int, h: float, beta: float, eps: float) -> np.ndarray:
    """Cell-averaged ``|t - s|^-beta 1{|t-s| >= eps}`` on ``m`` uniform cells."""
    k = np.arange(-(m - 1), m)
    phi = lambda x: _second_antiderivative(x, beta, eps)
    avg = (phi((k + 1) * h) - 2 * phi(k * h) + phi((k - 1) * h)) / (h * h)
    idx = np.arange(m)
    return avg[(idx[:, None] - idx[None, :]) + (m - 1)]


def lr_norm(f, r: float, lo=-np.inf, hi=np.inf) -> float:
    val, _ = integrate.quad(lambda t: abs(f(t)) ** r, lo, hi, limit=200)
    return val ** (1.0 / r)


_LETTERS = "abcd"


def hls_form(fs, e: HlsExponents, eps_cut: float, half_width: float = 6.0, m: int = 240) -> float:
    """Regularized multilinear HLS integral (unnormalized) on ``[-half_width, half_width]^N``."""
    N = e.N
    h = 2 * half_width / m
    t = -half_width + h * (np.arange(m) + 0.5)
    operands, subs = [], []
    for k, f in enumerate(fs):
        operands.append(np.asarray(f(t), dtype=float) * h)
        subs.append(_LETTERS[k])
    for i, j in combinations(range(N), 2):
        if e.beta[i, j] > 0:
            operands.append(cell_kernel(m, h, e.beta[i, j], eps_cut))
            subs.append(_LETTERS[i] + _LETTERS[j])
    return float(np.einsum(",".join(subs) + "->", *operands, optimize=True))


def multilinear_hls_estimate(fs, e: HlsExponents, eps_cut: float, half_width: float = 6.0,
                             m: int = 240) -> float:
    """HLS integral with ``|t_i - t_j| >= eps_cut`` on singular pairs, divided by
    ``prod ||f_k||_{r_k}``.

    Raises
    ------
    InadmissibleExponents
        If ``e`` fails the admissibility conditions or ``N > 4``.
    """
    check = hls_admissible(e)
    if not check:
        raise InadmissibleExponents(f"inadmissible exponents: {', '.join(check.violations)}")
    if e.N > HLS_MAX_N:
        raise InadmissibleExponents(f"N = {e.N} exceeds the cap {HLS_MAX_N}")
    if len(fs) != e.N:
        raise ValueError("need one profile per exponent")
    raw = hls_form(fs, e, eps_cut, half_width, m)
    norms = np.prod([lr_norm(f, r) for f, r in zip(fs, e.r)])
    return 0.0 if norms == 0 else raw / norms


@dataclass
class HlsStudy:
    eps: np.ndarray
    values: np.ndarray
    richardson: np.ndarray
    last_changes: np.ndarray

    @property
    def extrapolated(self) -> float:
        return float(self.richardson[-1])

    @property
    def stable(self) -> bool:
        return bool(np.all(self.last_changes < 0.02))

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) >= -1e-12 * np.abs(self.values[1:])))


def hls_epsilon_study(fs, e: HlsExponents, eps0: float = 0.1, levels: int = 8,
                      half_width: float = 6.0, m: int = 240) -> HlsStudy:
    """Halve ``eps_cut`` ``levels - 1`` times and Richardson-extrapolate each
    consecutive pair with the leading exponent ``1 - max(beta)``.

    ``last_changes`` holds the relative changes of the extrapolated sequence
    over its last two halvings.
    """
    if levels < 4:
        raise ValueError("need at least 4 levels")
    eps = eps0 * 0.5 ** np.arange(levels)
    vals = np.array([multilinear_hls_estimate(fs, e, x, half_width, m) for x in eps])
    a = 1.0 - float(np.max(e.beta))
    rich = (2 ** a * vals[1:] - vals[:-1]) / (2 ** a - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.abs(np.diff(rich)) / np.abs(rich[1:])
    return HlsStudy(eps, vals, rich, rel[-2:])
