"""Periodic spectral discretization of the free Schrodinger flow.

The box ``[-X, X)^d`` carries ``n`` points per axis.  Fourier transforms use
the symmetric continuum normalization

    u_hat(xi) = (2 pi)^(-d/2) * integral exp(-i xi.z) u(z) dz,

so Parseval holds with cell weights ``h^d`` (position) and ``delta^d``
(momentum).  Free evolution follows ``i du/dt = -Laplacian u``, i.e. the
multiplier ``exp(-i t |xi|^2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import LeakageExceeded, ShapeMismatch

#: Default tolerance on the fraction of mass inside the outer 10% shell.
LEAK_TOL = 1e-6
SHELL = 0.1


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Uniform periodic grid with ``n`` points per axis on ``[-X, X)^d``."""

    dim: int
    half_width: float
    n: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def delta(self) -> float:
        """Momentum lattice spacing ``pi / X``."""
        return np.pi / self.half_width

    @property
    def cutoff(self) -> float:
        """Momentum cutoff ``pi / h``."""
        return np.pi / self.h

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def cell(self) -> float:
        return self.h ** self.dim

    @property
    def momentum_cell(self) -> float:
        return self.delta ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_width + self.h * np.arange(self.n)

    @cached_property
    def momentum_axis(self) -> np.ndarray:
        """Momenta along one axis in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    @cached_property
    def coords(self) -> tuple:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def r2(self) -> np.ndarray:
        return sum(c ** 2 for c in self.coords)

    @cached_property
    def k2(self) -> np.ndarray:
        """``|xi|^2`` on the momentum lattice, FFT order."""
        ks = np.meshgrid(*([self.momentum_axis] * self.dim), indexing="ij")
        return sum(k ** 2 for k in ks)

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(i xi.X) for a grid starting at -X; equals (-1)^(sum m)
        m = np.rint(self.momentum_axis / self.delta).astype(int)
        s = np.meshgrid(*([m] * self.dim), indexing="ij")
        return np.where(sum(s) % 2 == 0, 1.0, -1.0)

    @cached_property
    def shell_mask(self) -> np.ndarray:
        edge = (1.0 - SHELL) * self.half_width
        mask = np.zeros(self.shape, dtype=bool)
        for c in self.coords:
            mask |= np.abs(c) > edge
        return mask

    def embed(self, values: np.ndarray, target: "SpatialGrid") -> np.ndarray:
        """Zero-pad samples into a larger grid with the same spacing."""
        if target.dim != self.dim or not np.isclose(target.h, self.h, rtol=1e-12):
            raise ShapeMismatch("embedding requires equal dim and spacing")
        if target.n < self.n:
            raise ShapeMismatch("target grid is smaller than source grid")
        off = (target.n - self.n) // 2
        batch = values.shape[: values.ndim - self.dim]
        out = np.zeros(batch + target.shape, dtype=np.result_type(values, complex))
        sl = (Ellipsis,) + (slice(off, off + self.n),) * self.dim
        out[sl] = values
        return out


@dataclass(frozen=True, eq=False)
class WaveFunction:
    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ShapeMismatch(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}")

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell))

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.grid, self.values / self.norm())


@dataclass(frozen=True)
class TimeWindow:
    """Time axis ``[t_start, t_end]`` sampled with ``m`` nodes.

    With ``scale`` set, nodes are ``scale * tan(theta)`` for uniform
    ``theta``; this concentrates nodes near the origin for integrands with
    algebraic tails.
    """

    t_start: float
    t_end: float
    m: int
    scale: float | None = None

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.m < 2:
            raise ValueError("m must be at least 2")

    def _theta(self):
        a = np.arctan(self.t_start / self.scale)
        b = np.arctan(self.t_end / self.scale)
        return np.linspace(a, b, self.m)

    def nodes(self) -> np.ndarray:
        if self.scale is None:
            return np.linspace(self.t_start, self.t_end, self.m)
        return self.scale * np.tan(self._theta())

    def weights(self) -> np.ndarray:
        """Composite trapezoid weights (in the mapped variable when stretched)."""
        if self.scale is None:
            w = np.full(self.m, (self.t_end - self.t_start) / (self.m - 1))
        else:
            th = self._theta()
            w = (th[1] - th[0]) * self.scale / np.cos(th) ** 2
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def coarsened(self) -> "TimeWindow":
        """Every other node; requires odd ``m``."""
        if self.m % 2 == 0 or self.m < 5:
            raise ValueError("coarsening needs odd m >= 5")
        return TimeWindow(self.t_start, self.t_end, (self.m + 1) // 2, self.scale)


def _axes(grid: SpatialGrid) -> tuple:
    return tuple(range(-grid.dim, 0))


def fft_values(values: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Continuum-normalized forward transform over the trailing ``d`` axes."""
    scale = grid.cell / (2.0 * np.pi) ** (grid.dim / 2)
    return np.fft.fftn(values, axes=_axes(grid)) * (grid._phase * scale)


def ifft_values(values_hat: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    scale = grid.cell / (2.0 * np.pi) ** (grid.dim / 2)
    return np.fft.ifftn(values_hat * (grid._phase / scale), axes=_axes(grid))


def evolve_values(values: np.ndarray, grid: SpatialGrid, t: float) -> np.ndarray:
    """Apply ``exp(i t Laplacian)`` to a batch of sample arrays."""
    if t == 0:
        return np.array(values, dtype=complex)
    mult = np.exp(-1j * t * grid.k2)
    return np.fft.ifftn(np.fft.fftn(values, axes=_axes(grid)) * mult, axes=_axes(grid))


def shell_fraction(values: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Fraction of squared mass in the outer shell, per batch element."""
    w = np.abs(values) ** 2
    ax = _axes(grid)
    total = np.sum(w, axis=ax)
    outer = np.sum(w * grid.shell_mask, axis=ax)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, outer / np.where(total > 0, total, 1.0), 0.0)


def check_leakage(values: np.ndarray, grid: SpatialGrid, tol: float | None, what="state"):
    if tol is None:
        return
    frac = float(np.max(shell_fraction(values, grid)))
    if frac > tol:
        raise LeakageExceeded(f"{what}: shell mass fraction {frac:.3e} exceeds {tol:.1e}")


def forward_fourier(u: WaveFunction) -> np.ndarray:
    """Momentum-space samples of ``u`` (FFT order), continuum normalized."""
    return fft_values(u.values, u.grid)


def inverse_fourier(u_hat: np.ndarray, grid: SpatialGrid) -> WaveFunction:
    return WaveFunction(grid, ifft_values(u_hat, grid))


def free_propagate(u: WaveFunction, t: float, leak_tol: float | None = LEAK_TOL) -> WaveFunction:
    """Evolve ``u`` by the free flow for time ``t``.

    Raises
    ------
    LeakageExceeded
        If the evolved state puts more than ``leak_tol`` of its mass in the
        outer 10% shell of the box.  Pass ``leak_tol=None`` to skip the check.
    """
    out = evolve_values(u.values, u.grid, t)
    check_leakage(out, u.grid, leak_tol)
    return WaveFunction(u.grid, out)


def apply_potential_slice(u: WaveFunction, v: np.ndarray) -> WaveFunction:
    v = np.asarray(v)
    if v.shape != u.grid.shape:
        raise ShapeMismatch(f"potential shape {v.shape} != grid shape {u.grid.shape}")
    return WaveFunction(u.grid, u.values * v)


# -- operator helpers -------------------------------------------------------

def propagator_matrix(grid: SpatialGrid, t: float) -> np.ndarray:
    """Matrix of ``exp(i t Laplacian)`` acting on flattened samples."""
    eye = np.eye(grid.size, dtype=complex).reshape((grid.size,) + grid.shape)
    cols = evolve_values(eye, grid, t).reshape(grid.size, grid.size)
    return cols.T.copy()


def dft_matrix(grid: SpatialGrid) -> np.ndarray:
    """Unitary map from position samples to momentum samples.

    Rows are ordered by increasing momentum (lexicographic for ``d > 1``)
    and carry the continuum phase convention, so that for an action matrix
    ``M`` the momentum-basis action is ``F @ M @ F.conj().T``.
    """
    eye = np.eye(grid.size, dtype=complex).reshape((grid.size,) + grid.shape)
    cols = fft_values(eye, grid)
    cols = np.fft.fftshift(cols, axes=_axes(grid)).reshape(grid.size, grid.size)
    # columns scale: sqrt(delta^d / h^d) converts to orthonormal coordinates
    return cols.T * np.sqrt(grid.momentum_cell / grid.cell)


def sorted_momenta(grid: SpatialGrid) -> np.ndarray:
    """Momentum lattice points in the row order of :func:`dft_matrix`, shape (size, d)."""
    ax = np.fft.fftshift(grid.momentum_axis)
    mesh = np.meshgrid(*([ax] * grid.dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)
