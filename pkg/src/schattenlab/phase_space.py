"""Phase-space operators, product bounds and the dual space-time operator.

Functions of a linear phase-space observable ``alpha x + beta p`` are built by
conjugating a multiplication operator with a quadratic chirp.  The dual
operator ``B_V = integral exp(-i t Laplacian) V(t) exp(i t Laplacian) dt`` is
assembled directly from its momentum kernel

    B(p, q) = (2 pi)^((1 - d)/2) * Vhat(q^2 - p^2, p - q),

with ``Vhat(omega, k) = (2 pi)^(-(d+1)/2) integral exp(-i omega t - i k.x) V dt dx``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateCoeffs, ExponentMismatch, FourierUnavailable, ShapeMismatch
from .schatten import DenseOperator, MAX_DIM, schatten_norm, singular_values
from .spectral import SpatialGrid, dft_matrix, fft_values, propagator_matrix, sorted_momenta

DET_TOL = 1e-12
KSS_SLACK = 0.02


# -- linear observables ---------------------------------------------------------

@dataclass(frozen=True)
class LinearPhaseCoeffs:
    """Two observables ``a x + b p`` and ``c x + e p``."""

    a: float
    b: float
    c: float = 0.0
    e: float = 1.0

    def __post_init__(self):
        if abs(self.det) < DET_TOL:
            raise DegenerateCoeffs(f"|a e - b c| = {abs(self.det):.1e} is below {DET_TOL}")

    @property
    def det(self) -> float:
        return self.a * self.e - self.b * self.c

    @property
    def first(self) -> tuple:
        return (self.a, self.b)

    @property
    def second(self) -> tuple:
        return (self.c, self.e)


def _pair(co) -> tuple:
    if isinstance(co, LinearPhaseCoeffs):
        return co.first
    a, b = co
    return float(a), float(b)


def _profile(f, pts: np.ndarray) -> np.ndarray:
    # pts has shape (size, d); profiles take one array per axis
    return np.asarray(f(*pts.T), dtype=complex) * np.ones(pts.shape[0])


def _positions(grid: SpatialGrid) -> np.ndarray:
    return np.stack([c.ravel() for c in grid.coords], axis=-1)


def quadratic_observable(f, co, grid: SpatialGrid) -> DenseOperator:
    """``f(alpha x + beta p)`` as a position-basis operator.

    ``f`` maps ``d`` coordinate arrays to values.  With ``|alpha| >= |beta|``
    the operator is ``exp(i k p^2) f(alpha x) exp(-i k p^2)`` with
    ``k = beta/(2 alpha)``; otherwise ``exp(-i m x^2) f(beta p) exp(i m x^2)``
    with ``m = alpha/(2 beta)``.  Picking the branch with the smaller chirp
    keeps both well conditioned and covers ``alpha = 0`` and ``beta = 0``.

    Raises
    ------
    DegenerateCoeffs
        If ``alpha = beta = 0``.
    """
    alpha, beta = _pair(co)
    if alpha == 0 and beta == 0:
        raise DegenerateCoeffs("alpha and beta are both zero")
    z = _positions(grid)
    if abs(alpha) >= abs(beta):
        diag = _profile(f, alpha * z)
        if beta == 0:
            act = np.diag(diag)
        else:
            k = beta / (2 * alpha)
            # exp(i k p^2) is free evolution for time -k
            act = propagator_matrix(grid, -k) @ (diag[:, None] * propagator_matrix(grid, k))
    else:
        F = dft_matrix(grid)
        vals = _profile(f, beta * sorted_momenta(grid))
        act = F.conj().T @ (vals[:, None] * F)
        if alpha != 0:
            chirp = np.exp(1j * alpha / (2 * beta) * np.sum(z ** 2, axis=1))
            act = chirp.conj()[:, None] * act * chirp[None, :]
    herm = bool(np.allclose(act, act.conj().T, atol=1e-10 * max(1.0, np.abs(act).max())))
    if herm:
        act = 0.5 * (act + act.conj().T)
    return DenseOperator.from_action(act, "position", grid.cell, hermitian=herm)


def profile_lr_norm(f, grid: SpatialGrid, r: float) -> float:
    """``||f||_r`` by a Riemann sum on ``grid``."""
    vals = np.abs(_profile(f, _positions(grid)))
    if np.isinf(r):
        return float(vals.max())
    return float((np.sum(vals ** r) * grid.cell) ** (1.0 / r))


@dataclass(frozen=True)
class KssResult:
    value: float
    bound: float
    passed: bool


def kss_product_norm(f, g, c1, c2, r: float, grid: SpatialGrid,
                     slack: float = KSS_SLACK) -> KssResult:
    """``||f(a x + b p) g(c x + e p)||_{S^r}`` against
    ``||f||_r ||g||_r / ((2 pi)^(d/r) |a e - b c|^(d/r))``.

    Raises
    ------
    DegenerateCoeffs
        If the two observables are (numerically) parallel.
    """
    if r < 2:
        raise ValueError("the product bound holds for r >= 2")
    a, b = _pair(c1)
    c, e = _pair(c2)
    co = LinearPhaseCoeffs(a, b, c, e)
    A = quadratic_observable(f, co.first, grid)
    B = quadratic_observable(g, co.second, grid)
    value = schatten_norm(A @ B, r)
    d = grid.dim
    bound = (profile_lr_norm(f, grid, r) * profile_lr_norm(g, grid, r)
             / ((2 * np.pi) ** (d / r) * abs(co.det) ** (d / r)))
    return KssResult(value, bound, value <= bound * (1 + slack))


# -- time-dependent potentials ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class TimeDependentPotential:
    """``V(t, x)``: a separable Gaussian pulse or samples on times x grid.

    Separable Gaussian:
    ``amplitude * exp(-(t - t_c)^2/(2 sigma_t^2)) * exp(-|x - x_c|^2/(2 sigma_x^2))``.
    Sampled: ``samples[i]`` is ``V(times[i], .)`` on ``grid``; values between
    samples are interpolated linearly and vanish outside ``[times[0], times[-1]]``.
    """

    kind: str
    dim: int = 1
    amplitude: float = 0.0
    sigma_t: float = 1.0
    sigma_x: float = 1.0
    t_c: float = 0.0
    x_c: tuple = ()
    times: np.ndarray | None = None
    grid: SpatialGrid | None = None
    samples: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "separable_gaussian":
            if self.sigma_t <= 0 or self.sigma_x <= 0:
                raise ValueError("widths must be positive")
            xc = tuple(float(v) for v in self.x_c) or (0.0,) * self.dim
            if len(xc) != self.dim:
                raise ValueError("x_c must have dim entries")
            object.__setattr__(self, "x_c", xc)
        elif self.kind == "sampled":
            s = np.asarray(self.samples)
            t = np.asarray(self.times, dtype=float)
            if self.grid is None or s.shape != (t.size,) + self.grid.shape:
                raise ShapeMismatch("samples must have shape (len(times), *grid.shape)")
            if t.size < 2 or np.any(np.diff(t) <= 0):
                raise ValueError("times must be increasing with at least two samples")
            object.__setattr__(self, "samples", s)
            object.__setattr__(self, "times", t)
            object.__setattr__(self, "dim", self.grid.dim)
        else:
            raise ValueError(f"unknown potential kind {self.kind!r}")

    @classmethod
    def gaussian(cls, amplitude, sigma_t=1.0, sigma_x=1.0, t_c=0.0, x_c=None, dim=1):
        return cls("separable_gaussian", dim, float(amplitude), float(sigma_t), float(sigma_x),
                   float(t_c), tuple(x_c) if x_c is not None else ())

    @classmethod
    def sampled(cls, times, grid: SpatialGrid, samples):
        return cls("sampled", grid.dim, times=np.asarray(times), grid=grid,
                   samples=np.asarray(samples))

    @classmethod
    def zero(cls, dim=1):
        return cls.gaussian(0.0, dim=dim)

    @property
    def is_zero(self) -> bool:
        if self.kind == "separable_gaussian":
            return self.amplitude == 0
        return not np.any(self.samples)

    @property
    def has_transform(self) -> bool:
        return self.kind == "separable_gaussian"

    @property
    def real(self) -> bool:
        return self.kind == "separable_gaussian" or np.isrealobj(self.samples)

    @property
    def nonneg(self) -> bool:
        """``V >= 0``; for the Gaussian pulse also ``Vhat >= 0`` when centred."""
        if self.kind == "separable_gaussian":
            return self.amplitude >= 0
        return bool(np.isrealobj(self.samples) and np.all(self.samples >= 0))

    def scaled(self, c) -> "TimeDependentPotential":
        if self.kind == "separable_gaussian":
            return TimeDependentPotential.gaussian(self.amplitude * c, self.sigma_t, self.sigma_x,
                                                   self.t_c, self.x_c, self.dim)
        return TimeDependentPotential.sampled(self.times, self.grid, self.samples * c)

    def shifted(self, s: float) -> "TimeDependentPotential":
        """``V(t - s, x)``."""
        if self.kind == "separable_gaussian":
            return TimeDependentPotential.gaussian(self.amplitude, self.sigma_t, self.sigma_x,
                                                   self.t_c + s, self.x_c, self.dim)
        return TimeDependentPotential.sampled(self.times + s, self.grid, self.samples)

    def time_profile(self, t) -> np.ndarray:
        """``sup_x |V(t, x)|`` (exact for the Gaussian pulse)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "separable_gaussian":
            return abs(self.amplitude) * np.exp(-(t - self.t_c) ** 2 / (2 * self.sigma_t ** 2))
        sup = np.max(np.abs(self.samples.reshape(self.times.size, -1)), axis=1)
        return np.interp(t, self.times, sup, left=0.0, right=0.0)

    def support(self, tail: float = 1e-6) -> tuple:
        """Time interval outside which the omitted ``L^1_t L^inf_x`` mass is below ``tail``
        (relative)."""
        if self.kind == "sampled":
            return float(self.times[0]), float(self.times[-1])
        from scipy.special import erfcinv
        half = self.sigma_t * np.sqrt(2.0) * erfcinv(tail)
        return self.t_c - half, self.t_c + half

    def slice(self, t: float, grid: SpatialGrid) -> np.ndarray:
        """``V(t, .)`` sampled on ``grid``."""
        if self.kind == "separable_gaussian":
            if grid.dim != self.dim:
                raise ShapeMismatch("grid dimension does not match potential")
            r2 = sum((c - x0) ** 2 for c, x0 in zip(grid.coords, self.x_c))
            return (self.amplitude * np.exp(-(t - self.t_c) ** 2 / (2 * self.sigma_t ** 2))
                    * np.exp(-r2 / (2 * self.sigma_x ** 2)))
        if grid is not self.grid and (grid.n != self.grid.n or grid.half_width != self.grid.half_width):
            raise ShapeMismatch("sampled potential lives on its own grid")
        t0, t1 = self.times[0], self.times[-1]
        if t < t0 or t > t1:
            return np.zeros(grid.shape, dtype=self.samples.dtype)
        i = min(int(np.searchsorted(self.times, t, side="right")) - 1, self.times.size - 2)
        w = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return (1 - w) * self.samples[i] + w * self.samples[i + 1]

    def mixed_norm(self, p: float, q: float) -> float:
        """``||V||_{L^p_t L^q_x}`` (closed form for the Gaussian pulse)."""
        if self.kind == "separable_gaussian":
            d = self.dim
            sx = 1.0 if np.isinf(q) else (2 * np.pi * self.sigma_x ** 2 / q) ** (d / (2 * q))
            st = 1.0 if np.isinf(p) else (2 * np.pi * self.sigma_t ** 2 / p) ** (1 / (2 * p))
            return abs(self.amplitude) * sx * st
        from .quadrature import lp_lq_norm
        return lp_lq_norm(self.samples, self.times, self.grid.cell, p, q)

    def fourier(self, omega, k) -> np.ndarray:
        """Space-time transform ``Vhat(omega, k)``; ``k`` has shape ``(..., d)``.

        Raises
        ------
        FourierUnavailable
            For sampled potentials (use :func:`build_dual_operator`, which
            handles the lattice-compatible case).
        """
        if self.kind != "separable_gaussian":
            raise FourierUnavailable("analytic transform only for separable Gaussian pulses")
        omega = np.asarray(omega, dtype=float)
        k = np.asarray(k, dtype=float)
        st, sx = self.sigma_t, self.sigma_x
        k2 = np.sum(k ** 2, axis=-1)
        kx = np.sum(k * np.asarray(self.x_c), axis=-1)
        return (self.amplitude * st * sx ** self.dim
                * np.exp(-0.5 * st ** 2 * omega ** 2 - 0.5 * sx ** 2 * k2)
                * np.exp(-1j * (omega * self.t_c + kx)))

    def k_extent(self, rel: float = 1e-17) -> float:
        """``|k|`` beyond which ``|Vhat(., k)|`` is below ``rel`` of its peak."""
        if self.kind == "separable_gaussian":
            return np.sqrt(-2 * np.log(rel)) / self.sigma_x
        return np.inf


# -- dual operator ----------------------------------------------------------------

def momentum_lattice(cutoff: float, delta: float, dim: int = 1) -> np.ndarray:
    """Lattice ``delta * m``, ``m = -M..M-1`` per axis with ``M = cutoff/delta``; shape (size, d)."""
    M = int(round(cutoff / delta))
    if M < 1 or abs(M * delta - cutoff) > 1e-9 * cutoff:
        raise ValueError("cutoff must be an integer multiple of delta")
    ax = delta * np.arange(-M, M)
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def lattice_grid(cutoff: float, delta: float, dim: int = 1) -> SpatialGrid:
    """Position grid whose momentum lattice is :func:`momentum_lattice`."""
    M = int(round(cutoff / delta))
    return SpatialGrid(dim, np.pi / delta, 2 * M)


def _sampled_transform(V: TimeDependentPotential, omega, kidx):
    # trapezoid in time of the spatial FFT; kidx are integer lattice offsets (..., d)
    g = V.grid
    sh = np.fft.fftshift(fft_values(V.samples, g), axes=tuple(range(1, g.dim + 1)))
    centre = g.n // 2
    idx = tuple((kidx[..., a] + centre) for a in range(g.dim))
    w = np.zeros(V.times.size)
    dt = np.diff(V.times)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    vals = sh[(slice(None),) + idx]  # (times, ...)
    phase = np.exp(-1j * np.multiply.outer(V.times, omega))
    return np.tensordot(w, vals * phase, axes=1) / np.sqrt(2 * np.pi)


def _kernel_block(V: TimeDependentPotential, P: np.ndarray, Q: np.ndarray, delta: float):
    d = V.dim
    pref = (2 * np.pi) ** ((1 - d) / 2)
    omega = np.sum(Q[None, :, :] ** 2, -1) - np.sum(P[:, None, :] ** 2, -1)
    k = P[:, None, :] - Q[None, :, :]
    if V.has_transform:
        return pref * V.fourier(omega, k)
    g = V.grid
    if not np.isclose(g.delta, delta, rtol=1e-12):
        raise FourierUnavailable("sampled potential: grid momentum spacing must equal delta")
    kidx = np.rint(k / delta).astype(int)
    if np.max(np.abs(kidx)) >= g.n // 2:
        raise FourierUnavailable("sampled potential grid does not resolve momentum differences")
    return pref * _sampled_transform(V, omega, kidx)


def build_dual_operator(V: TimeDependentPotential, cutoff: float, delta: float,
                        allow_large: bool = False) -> DenseOperator:
    """Momentum-basis kernel of ``B_V`` on the lattice of spacing ``delta`` and cutoff ``cutoff``.

    Raises
    ------
    FourierUnavailable
        For sampled potentials whose grid is incompatible with the lattice.
    """
    P = momentum_lattice(cutoff, delta, V.dim)
    if P.shape[0] > MAX_DIM and not allow_large:
        raise ValueError(f"lattice size {P.shape[0]} exceeds {MAX_DIM}; pass allow_large=True")
    K = _kernel_block(V, P, P, delta)
    herm = V.real
    if herm:
        K = 0.5 * (K + K.conj().T)
    return DenseOperator(K, "momentum", delta ** V.dim, hermitian=herm)


def _dual_band(V: TimeDependentPotential, cutoff: float, delta: float):
    """Lower band storage of the Hermitian action matrix (d=1), for large lattices."""
    if V.dim != 1 or not V.has_transform or not V.real:
        raise FourierUnavailable("banded assembly needs a real separable Gaussian pulse, d=1")
    P = momentum_lattice(cutoff, delta, 1)[:, 0]
    n = P.size
    w = min(n - 1, int(np.ceil(V.k_extent() / delta)))
    band = np.zeros((w + 1, n), dtype=complex)
    for j in range(w + 1):
        q = P[: n - j]
        p = P[j:]
        band[j, : n - j] = (V.fourier(q * q - p * p, (p - q)[:, None]) * delta)
    return band


def _banded_singular_values(V, cutoff, delta) -> np.ndarray:
    band = _dual_band(V, cutoff, delta)
    lam = scipy.linalg.eigvals_banded(band, lower=True)
    return np.sort(np.abs(lam))[::-1]


def dual_singular_values(V: TimeDependentPotential, cutoff: float, delta: float) -> np.ndarray:
    """Singular values of ``B_V``; banded Hermitian path for large d=1 lattices."""
    n = int(round(cutoff / delta)) * 2
    if n ** V.dim <= MAX_DIM:
        return singular_values(build_dual_operator(V, cutoff, delta))
    return _banded_singular_values(V, cutoff, delta)


@dataclass(frozen=True)
class DualRatioReport:
    d: int
    p: float
    q: float
    cutoff: float
    delta: float
    lhs: float
    rhs: float
    ratio: float
    degenerate: bool

    def row(self) -> dict:
        return {"d": self.d, "p'": self.p, "q'": self.q, "cutoff": self.cutoff,
                "delta": self.delta, "ratio": self.ratio}


def dual_inequality_ratio(V: TimeDependentPotential, spec, cutoff: float, delta: float) -> DualRatioReport:
    """``||B_V||_{S^(2q')} / ||V||_{L^p'_t L^q'_x}`` for a dual exponent pair.

    A zero potential gives ``0/0``, reported as ratio 0 with ``degenerate=True``.
    """
    if spec.side != "dual":
        raise ExponentMismatch("dual_inequality_ratio needs a dual exponent pair")
    rhs = V.mixed_norm(spec.pf, spec.qf)
    if V.is_zero or rhs == 0:
        return DualRatioReport(V.dim, spec.pf, spec.qf, cutoff, delta, 0.0, 0.0, 0.0, True)
    s = dual_singular_values(V, cutoff, delta)
    r = 2 * spec.qf
    lhs = float(s[0] * np.sum((s / s[0]) ** r) ** (1 / r)) if s[0] > 0 else 0.0
    return DualRatioReport(V.dim, spec.pf, spec.qf, cutoff, delta, lhs, rhs, lhs / rhs, False)


def operator_norm_check(V: TimeDependentPotential, cutoff: float, delta: float) -> tuple:
    """``(||B_V||, ||V||_{L^1_t L^inf_x})``; the first never exceeds the second."""
    s = dual_singular_values(V, cutoff, delta)
    return float(s[0]), V.mixed_norm(1.0, np.inf)


# -- end-point divergence ---------------------------------------------------------

def endpoint_trace(V: TimeDependentPotential, cutoff: float, delta: float) -> float:
    """``Tr B_V^2`` (d=1) as a Frobenius sum over kernel diagonals.

    Only diagonals ``|p - q| <= k_extent`` are visited, so no matrix is formed.
    """
    if V.dim != 1:
        raise ValueError("endpoint_trace is exact for d=1; use endpoint_trace_mc for d=2")
    if not V.nonneg:
        raise ValueError("end-point experiment needs V >= 0")
    if V.is_zero:
        return 0.0
    P = momentum_lattice(cutoff, delta, 1)[:, 0]
    n = P.size
    w = min(n - 1, int(np.ceil(V.k_extent() / delta))) if V.has_transform else n - 1
    total = 0.0
    for j in range(w + 1):
        q = P[: n - j]
        p = P[j:]
        if V.has_transform:
            b = V.fourier(q * q - p * p, (p - q)[:, None])
        else:
            b = _kernel_block(V, p[:, None], q[:, None], delta).diagonal()
        s = float(np.sum(np.abs(b) ** 2))
        total += s if j == 0 else 2 * s
    return total * delta ** 2


def endpoint_slope_oracle(V: TimeDependentPotential) -> float:
    """Coefficient of ``log(1/delta)`` in ``Tr B_V^2`` (d=1): ``integral |Vhat(omega, 0)|^2 d omega``."""
    if V.kind != "separable_gaussian" or V.dim != 1:
        raise FourierUnavailable("slope oracle needs a d=1 Gaussian pulse")
    return V.amplitude ** 2 * V.sigma_t * V.sigma_x ** 2 * np.sqrt(np.pi)


@dataclass(frozen=True)
class MonteCarloEstimate:
    eps: float
    value: float
    stderr: float
    samples: int


def endpoint_trace_mc(V: TimeDependentPotential, eps: float, samples: int = 200_000,
                      seed: int = 0, shards: int = 4) -> MonteCarloEstimate:
    """Exploratory ``Tr B_V^3`` for d=2 with ``|det(k1, k2)| < eps`` excluded.

    The inner momentum integral is Gaussian and done exactly; the remaining
    integral over the two momentum transfers carries a ``1/|det(k1, k2)|``
    singularity and is sampled with a Gaussian proposal, one counter-based
    stream per shard.
    """
    if V.dim != 2 or V.kind != "separable_gaussian":
        raise FourierUnavailable("Monte Carlo end-point needs a d=2 Gaussian pulse")
    a, st, sx = V.amplitude, V.sigma_t, V.sigma_x
    pref = ((2 * np.pi) ** -0.5 * a * st * sx ** 2) ** 3 * 2 * np.pi / (np.sqrt(3) * st ** 2) / 4
    s = 1.0 / sx  # proposal width per component
    vals = []
    per = samples // shards
    for shard in range(shards):
        rng = np.random.Generator(np.random.Philox(key=seed + (shard << 64)))
        k = rng.normal(scale=s, size=(per, 4))
        k1, k2 = k[:, :2], k[:, 2:]
        det = np.abs(k1[:, 0] * k2[:, 1] - k1[:, 1] * k2[:, 0])
        e = np.exp(-0.5 * sx ** 2 * (np.sum(k1 ** 2, 1) + np.sum(k2 ** 2, 1) + np.sum((k1 + k2) ** 2, 1)))
        dens = np.exp(-0.5 * np.sum(k ** 2, 1) / s ** 2) / (2 * np.pi * s * s) ** 2
        f = np.where(det >= eps, pref * e / np.maximum(det, eps) / dens, 0.0)
        vals.append(f)
    f = np.concatenate(vals)
    return MonteCarloEstimate(eps, float(f.mean()), float(f.std(ddof=1) / np.sqrt(f.size)), f.size)


def weak_schatten_profile(V: TimeDependentPotential, cutoff: float, deltas, r: float | None = None):
    """Exploratory ``sup_k k^(1/r) s_k`` of ``B_V`` (default ``r = d + 1``) per ``delta``."""
    r = V.dim + 1 if r is None else r
    out = []
    for dl in deltas:
        s = dual_singular_values(V, cutoff, dl)
        k = np.arange(1, s.size + 1)
        out.append((dl, float(np.max(k ** (1.0 / r) * s))))
    return out


def write_endpoint_csv(path, rows) -> None:
    """Rows of ``(delta, cutoff, trace, fit_residual)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "cutoff", "trace", "fit_residual"])
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def write_dual_ratio_csv(path, reports) -> None:
    cols = ["d", "p'", "q'", "cutoff", "delta", "ratio"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.row())
