"""Singular-value machinery for dense discretized operators.

A :class:`DenseOperator` stores kernel samples ``K(z_i, z_j)`` together with
the cell weight ``w`` (``h^d`` in position, ``delta^d`` in momentum).  The
operator acting on sample vectors is ``w * K``; the weight is folded into the
singular values once, so every norm below is in continuum units.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalBreakdown

BASES = ("position", "momentum")
MAX_DIM = 4096
_HEADER = struct.Struct("<IIII")


@dataclass(frozen=True, eq=False)
class DenseOperator:
    matrix: np.ndarray
    basis: str = "position"
    weight: float = 1.0
    hermitian: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator matrix must be square, got {m.shape}")
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}")
        if not np.all(np.isfinite(m)):
            raise NumericalBreakdown("operator has non-finite entries")
        if self.hermitian and m.size:
            scale = max(np.max(np.abs(m)), 1.0)
            if np.max(np.abs(m - m.conj().T)) > 1e-10 * scale:
                raise ValueError("hermitian flag set on a non-Hermitian matrix")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_action(cls, action, basis="position", weight=1.0, hermitian=False):
        """Wrap an action matrix (operator on sample vectors) as a kernel."""
        return cls(np.asarray(action) / weight, basis, weight, hermitian)

    @property
    def action(self) -> np.ndarray:
        return self.matrix * self.weight

    @property
    def shape(self):
        return self.matrix.shape

    def adjoint(self) -> "DenseOperator":
        return DenseOperator(self.matrix.conj().T, self.basis, self.weight, self.hermitian)

    def __matmul__(self, other: "DenseOperator") -> "DenseOperator":
        if other.basis != self.basis:
            raise ValueError("basis mismatch")
        return DenseOperator.from_action(self.action @ other.action, self.basis, self.weight)

    def __add__(self, other: "DenseOperator") -> "DenseOperator":
        if other.basis != self.basis:
            raise ValueError("basis mismatch")
        return DenseOperator.from_action(self.action + other.action, self.basis, self.weight)

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def scaled(self, c) -> "DenseOperator":
        return DenseOperator(self.matrix * c, self.basis, self.weight,
                             self.hermitian and np.isreal(c))


def _check_size(n, allow_large):
    if n > MAX_DIM and not allow_large:
        raise ValueError(f"matrix dimension {n} exceeds {MAX_DIM}; pass allow_large=True")


def singular_values(A: DenseOperator, allow_large=False) -> np.ndarray:
    """Continuum singular values, nonincreasing."""
    _check_size(A.shape[0], allow_large)
    try:
        if A.hermitian:
            s = np.abs(scipy.linalg.eigvalsh(A.matrix))
            s = np.sort(s)[::-1]
        else:
            s = scipy.linalg.svdvals(A.matrix)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalBreakdown(str(exc)) from exc
    return s * abs(A.weight)


def _norm_from_sv(s: np.ndarray, r: float) -> float:
    if s.size == 0 or s[0] == 0:
        return 0.0
    if np.isinf(r):
        return float(s[0])
    return float(s[0] * np.sum((s / s[0]) ** r) ** (1.0 / r))


def schatten_norm(A: DenseOperator, r: float, allow_large=False) -> float:
    """``(sum_k s_k^r)^(1/r)``; ``r = inf`` gives the operator norm."""
    if r < 1:
        raise ValueError("Schatten norm requires r >= 1")
    return _norm_from_sv(singular_values(A, allow_large), r)


def weak_schatten_quasinorm(A: DenseOperator, r: float, allow_large=False) -> float:
    """``sup_k k^(1/r) s_k``."""
    if r <= 0:
        raise ValueError("r must be positive")
    s = singular_values(A, allow_large)
    if s.size == 0:
        return 0.0
    k = np.arange(1, s.size + 1)
    return float(np.max(k ** (1.0 / r) * s))


def trace_power(A: DenseOperator, m: int, allow_large=False) -> complex:
    """``Tr A^m`` in continuum units."""
    if m < 1:
        raise ValueError("m must be a positive integer")
    _check_size(A.shape[0], allow_large)
    if m == 1:
        return complex(np.trace(A.matrix) * A.weight)
    try:
        if A.hermitian:
            lam = scipy.linalg.eigvalsh(A.matrix) * A.weight
        else:
            lam = scipy.linalg.eigvals(A.matrix) * A.weight
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalBreakdown(str(exc)) from exc
    return complex(np.sum(lam.astype(complex) ** m))


def hilbert_schmidt_norm(A: DenseOperator) -> float:
    """``S^2`` norm straight from the entries (no decomposition)."""
    return float(np.linalg.norm(A.matrix) * abs(A.weight))


# -- binary dump --------------------------------------------------------------
#
# 16-byte header: rows, cols, basis tag, reserved (all little-endian uint32),
# then row-major float64 pairs (re, im).  The payload is the action matrix
# (weight folded in), so a reloaded operator has weight 1 and identical spectra.

def dump_operator(A: DenseOperator, path) -> None:
    rows, cols = A.shape
    payload = np.ascontiguousarray(A.action, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(rows, cols, BASES.index(A.basis), 0))
        fh.write(payload.tobytes())


def load_operator(path) -> DenseOperator:
    with open(path, "rb") as fh:
        raw = fh.read()
    rows, cols, tag, _ = _HEADER.unpack_from(raw)
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if data.size != rows * cols:
        raise ValueError("truncated operator dump")
    return DenseOperator(data.reshape(rows, cols).copy(), BASES[tag], 1.0)
