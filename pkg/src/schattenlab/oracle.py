"""Closed-form evaluators for the Gaussian coherent-state ensemble.

A coherent state of width ``beta`` centred at the phase-space point
``(x, xi)`` is

    F(z) = (2 pi beta)^(-d/4) exp(-(z - x)^2 / (4 beta)) exp(i xi.z).

The ensemble operator averages ``|F><F|`` against the phase-space weight
``exp(-x^2/L^2 - xi^2/mu) / (2 pi)^d``.  Everything here is exact and is
used as the reference for the discretized pipelines.  Closed forms are
evaluated in the log domain so large ``mu L^2`` does not overflow.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate

from .errors import ExponentMismatch
from .spectral import LEAK_TOL, SpatialGrid, WaveFunction, check_leakage


@dataclass(frozen=True)
class CoherentStateParams:
    beta: float
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "xi", np.atleast_1d(np.asarray(self.xi, dtype=float)))
        if self.x.shape != self.xi.shape:
            raise ValueError("x and xi must have the same dimension")

    @property
    def dim(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class CoherentEnsembleParams:
    beta: float
    L: float
    mu: float
    dim: int = 1

    def __post_init__(self):
        if min(self.beta, self.L, self.mu) <= 0:
            raise ValueError("beta, L, mu must be positive")

    @property
    def semiclassical(self) -> bool:
        """``1/mu <= beta/10`` and ``beta <= L^2/10``."""
        return 1.0 / self.mu <= self.beta / 10 and self.beta <= self.L ** 2 / 10

    @property
    def N(self) -> float:
        return particle_number(self)

    def spread(self, t: float) -> float:
        """``2 beta^2 + beta L^2 + 2 t^2 + 4 beta mu t^2``."""
        b, L, mu = self.beta, self.L, self.mu
        return 2 * b * b + b * L * L + 2 * t * t + 4 * b * mu * t * t


def A_d(d: int) -> float:
    """Constant in ``N = A_d L^d mu^(d/2)``."""
    return 2.0 ** (-d)


def _A_d_by_quadrature(d: int) -> float:
    # N at L = mu = 1: the phase-space integral of exp(-x^2 - xi^2) / (2 pi)^d
    one, _ = integrate.quad(lambda s: np.exp(-s * s), -np.inf, np.inf)
    return (one * one / (2 * np.pi)) ** d


def _self_test():
    for d in (1, 2, 3):
        if not np.isclose(A_d(d), _A_d_by_quadrature(d), rtol=1e-10):
            raise RuntimeError(f"A_{d} self-test failed")


_self_test()


def particle_number(e: CoherentEnsembleParams) -> float:
    d = e.dim
    return float(np.exp(np.log(A_d(d)) + d * np.log(e.L) + 0.5 * d * np.log(e.mu)))


def coherent_state(p: CoherentStateParams, g: SpatialGrid, leak_tol=LEAK_TOL) -> WaveFunction:
    if p.dim != g.dim:
        raise ValueError("parameter dimension does not match grid")
    sq = sum((c - x0) ** 2 for c, x0 in zip(g.coords, p.x))
    phase = sum(c * k for c, k in zip(g.coords, p.xi))
    vals = (2 * np.pi * p.beta) ** (-g.dim / 4) * np.exp(-sq / (4 * p.beta) + 1j * phase)
    check_leakage(vals, g, leak_tol, "coherent state")
    return WaveFunction(g, vals)


def evolved_coherent_amplitude(p: CoherentStateParams, t: float, z) -> np.ndarray:
    """``|exp(i t Laplacian) F(z)|`` for points ``z`` of shape ``(..., d)``.

    The packet centre moves to ``x + 2 t xi`` under ``i du/dt = -Laplacian u``.
    """
    z = np.asarray(z, dtype=float)
    if p.dim == 1 and (z.ndim == 0 or z.shape[-1] != 1):
        z = z[..., None]
    d = p.dim
    b = p.beta
    s = b * b + t * t
    dist2 = np.sum((z - p.x - 2 * t * p.xi) ** 2, axis=-1)
    return (b / (2 * np.pi * s)) ** (d / 4) * np.exp(-b * dist2 / (4 * s))


def ensemble_density(e: CoherentEnsembleParams, t: float, z) -> np.ndarray:
    """Density of the evolved ensemble at points ``z`` (``(..., d)``, or scalars for d=1)."""
    z = np.asarray(z, dtype=float)
    r2 = z ** 2 if e.dim == 1 and (z.ndim == 0 or z.shape[-1] != 1) else np.sum(z ** 2, axis=-1)
    D = e.spread(t)
    logpref = 0.5 * e.dim * (np.log(e.beta) + np.log(e.mu) + 2 * np.log(e.L)
                             - np.log(4 * np.pi) - np.log(D))
    return np.exp(logpref - e.beta * r2 / D)


def ensemble_space_lq(e: CoherentEnsembleParams, t: float, q: float) -> float:
    """``integral rho(t, z)^q dz``."""
    if q <= 1:
        raise ValueError("q must exceed 1")
    d = e.dim
    logv = (0.5 * d * np.log(np.pi / q) - 0.5 * d * q * np.log(4 * np.pi)
            + 0.5 * d * q * np.log(e.mu * e.L ** 2)
            + 0.5 * (q - 1) * d * (np.log(e.beta) - np.log(e.spread(t))))
    return float(np.exp(logv))


def _as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    return Fraction(v).limit_denominator(10 ** 6)


def check_primal_exponents(p, q, d: int) -> tuple:
    """Validate ``2/p + d/q = d`` exactly in rationals; return the pair as Fractions."""
    fp, fq = _as_fraction(p), _as_fraction(q)
    if fp <= 0 or fq <= 0 or 2 / fp + Fraction(d) / fq != d:
        raise ExponentMismatch(f"2/p + d/q != d for p={p}, q={q}, d={d}")
    # identity used by the closed form: d/2 - 1/(2p) == d (q+1) / (4q)
    assert Fraction(d, 2) - 1 / (2 * fp) == d * (fq + 1) / (4 * fq)
    return fp, fq


def A_dp_power(d: int, p: float, q: float) -> float:
    """``A_{d,p}^p = (pi/q)^(dp/(2q)) (4 pi)^(-dp/2) pi``.

    With ``2/p + d/q = d`` this reduces to ``q^(1 - dp/2) 2^(-dp)``.
    """
    return (np.pi / q) ** (d * p / (2 * q)) * (4 * np.pi) ** (-d * p / 2) * np.pi


def ensemble_mixed_norm(e: CoherentEnsembleParams, p, q) -> float:
    """Exact ``L^p_t L^q_x`` norm of the evolved ensemble density over all ``t``."""
    fp, fq = check_primal_exponents(p, q, e.dim)
    p, q, d = float(fp), float(fq), e.dim
    log_a = np.log(A_dp_power(d, p, q)) / p
    logv = (log_a + (d / 2 - 1 / (2 * p)) * np.log(e.mu * e.L ** 2)
            - np.log1p(2 * e.beta / e.L ** 2) / (2 * p)
            - np.log(4 + 2 / (e.beta * e.mu)) / (2 * p))
    return float(np.exp(logv))


def ensemble_mixed_norm_asymptotic(e: CoherentEnsembleParams, p, q) -> float:
    """Leading semiclassical form ``2^(-1/p) A_{d,p} / A_d^((q+1)/(2q)) N^((q+1)/(2q))``."""
    fp, fq = check_primal_exponents(p, q, e.dim)
    p, q, d = float(fp), float(fq), e.dim
    a = A_dp_power(d, p, q) ** (1 / p)
    ex = (q + 1) / (2 * q)
    return 2 ** (-1 / p) * a / A_d(d) ** ex * e.N ** ex


def ensemble_window_lp(e: CoherentEnsembleParams, p, q, t_start: float, t_end: float) -> float:
    """Same as :func:`ensemble_mixed_norm` with the time integral restricted to a window."""
    fp, fq = check_primal_exponents(p, q, e.dim)
    p, q = float(fp), float(fq)
    f = lambda t: ensemble_space_lq(e, t, q) ** (p / q)
    peak = f(0.0)
    val, _ = integrate.quad(lambda t: f(t) / peak, t_start, t_end, limit=400,
                            epsabs=0, epsrel=1e-12, points=[0.0] if t_start < 0 < t_end else None)
    return float((val * peak) ** (1 / p))


def berezin_lieb_bound(e: CoherentEnsembleParams, r: float) -> float:
    """Upper bound ``r^(-d) N`` on ``Tr gamma^r``."""
    if r < 1:
        raise ValueError("r must be >= 1")
    return r ** (-e.dim) * e.N
