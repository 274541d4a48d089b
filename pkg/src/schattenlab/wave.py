"""Dyson series of the interaction-picture propagator and the scattering matrix.

With ``U(tau) = exp(i tau Laplacian)`` and ``i du/dt = (-Laplacian + V(t)) u``,
the interaction-picture propagator ``Omega(t, t0) = U(t0 - t) U_V(t, t0)``
solves ``dOmega/dt = -i Vt(t) Omega`` with
``Vt(s) = U(t0 - s) V(s) U(s - t0)``.  Its Dyson terms obey
``W_n(t) = -i integral_{t0}^t Vt(s) W_{n-1}(s) ds``, ``W_0 = 1``.

All operators here are action matrices on flattened samples of one grid,
wrapped as position-basis :class:`DenseOperator` objects.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import LeakageExceeded, QuadratureUnderresolved
from .fitting import fit
from .phase_space import TimeDependentPotential, build_dual_operator
from .schatten import DenseOperator, schatten_norm, singular_values
from .spectral import LEAK_TOL, SpatialGrid, dft_matrix, evolve_values, sorted_momenta
from .strichartz import MixedNormSpec, conjugate_free

GATE = 0.01
FACTORIAL_SLACK = 0.05


def _wrap(action, grid, hermitian=False) -> DenseOperator:
    return DenseOperator.from_action(action, "position", grid.cell, hermitian=hermitian)


def _nodes(t0, t, step):
    m = max(1, int(np.ceil(abs(t - t0) / step)))
    return np.linspace(t0, t, m + 1)


def check_potential_leakage(V: TimeDependentPotential, grid: SpatialGrid, times,
                            tol=LEAK_TOL) -> None:
    """Require ``|V(s, .)|`` in the outer 10% shell to stay below ``tol`` times its peak."""
    if tol is None or V.is_zero:
        return
    peak = 0.0
    edge = 0.0
    for s in np.atleast_1d(times):
        v = np.abs(V.slice(float(s), grid))
        peak = max(peak, float(v.max()))
        edge = max(edge, float(np.max(v * grid.shell_mask)))
    if peak > 0 and edge > tol * peak:
        raise LeakageExceeded(f"potential reaches the box shell ({edge / peak:.1e} of its peak)")


def _interaction_action(V, s, t0, grid) -> np.ndarray:
    v = V.slice(float(s), grid).ravel()
    return conjugate_free(np.diag(v.astype(complex)), grid, t0 - s)


def interaction_potential(V: TimeDependentPotential, t: float, t0: float, grid: SpatialGrid,
                          leak_tol=LEAK_TOL) -> DenseOperator:
    """``U(t0 - t) V(t, .) U(t - t0)``; unitarily equivalent to multiplication by ``V(t, .)``."""
    check_potential_leakage(V, grid, np.linspace(min(t0, t), max(t0, t), 9), leak_tol)
    act = _interaction_action(V, t, t0, grid)
    herm = V.real
    if herm:
        act = 0.5 * (act + act.conj().T)
    return _wrap(act, grid, herm)


def dyson_sweep(V: TimeDependentPotential, order: int, t: float, t0: float, grid: SpatialGrid,
                step: float) -> list:
    """Action matrices ``[W_1(t), ..., W_order(t)]`` by one cumulative-trapezoid sweep.

    All orders advance together node by node, so only the current and
    previous node are kept in memory.
    """
    n = grid.size
    eye = np.eye(n, dtype=complex)
    if t == t0 or V.is_zero:
        return [np.zeros((n, n), complex) for _ in range(order)]
    s = _nodes(t0, t, step)
    ds = s[1] - s[0]
    W = [eye] + [np.zeros((n, n), complex) for _ in range(order)]
    vt = _interaction_action(V, s[0], t0, grid)
    prev = [vt @ W[k] for k in range(order)]  # Vt(s_{j-1}) W_k(s_{j-1}), k = 0..order-1
    for sj in s[1:]:
        vt = _interaction_action(V, sj, t0, grid)
        cur = [None] * order
        # W_k at s_j depends on W_{k-1} at s_j: ascend in k
        for k in range(1, order + 1):
            head = vt @ W[k - 1] if k > 1 else vt
            W[k] = W[k] - 0.5j * ds * (prev[k - 1] + head)
            cur[k - 1] = head
        prev = cur
    return W[1:]


@dataclass(frozen=True, eq=False)
class DysonTerm:
    order: int
    operator: DenseOperator
    t0: float
    t_horizon: float
    step: float
    refinement_delta: float


def _gated_sweep(V, order, t, t0, grid, step, gate):
    coarse = dyson_sweep(V, order, t, t0, grid, step)
    fine = dyson_sweep(V, order, t, t0, grid, step / 2)
    deltas = []
    for k, (a, b) in enumerate(zip(coarse, fine), start=1):
        nb = np.linalg.norm(b)
        dk = float(np.linalg.norm(a - b) / nb) if nb > 0 else 0.0
        deltas.append(dk)
        if dk > gate:
            raise QuadratureUnderresolved(
                f"order {k}: step halving changed the S2 norm by {dk:.2%} (gate {gate:.0%})")
    return coarse, fine, deltas


def dyson_terms(V, order, t, t0, grid, step, gate=GATE, leak_tol=LEAK_TOL) -> list:
    """All terms ``W_1 .. W_order`` at ``t``, each gated by step halving."""
    check_potential_leakage(V, grid, _nodes(t0, t, step), leak_tol)
    _, fine, deltas = _gated_sweep(V, order, t, t0, grid, step, gate)
    return [DysonTerm(k, _wrap(w, grid), t0, t, step / 2, dk)
            for k, (w, dk) in enumerate(zip(fine, deltas), start=1)]


def dyson_term(V, n: int, t: float, t0: float, grid: SpatialGrid, step: float,
               gate: float = GATE, leak_tol=LEAK_TOL) -> DysonTerm:
    """``W_n(t, t0)`` by the trapezoid recursion.

    Raises
    ------
    QuadratureUnderresolved
        If halving ``step`` changes the Hilbert-Schmidt norm of any term up
        to order ``n`` by more than ``gate``.
    """
    if n < 1:
        raise ValueError("order must be positive")
    return dyson_terms(V, n, t, t0, grid, step, gate, leak_tol)[-1]


# -- direct propagation --------------------------------------------------------

def _strang(V, t0, t, grid, step):
    n = grid.size
    s = _nodes(t0, t, step)
    ds = s[1] - s[0]
    u = np.eye(n, dtype=complex).reshape((n,) + grid.shape)  # columns as batch
    for a, b in zip(s[:-1], s[1:]):
        half = np.exp(-0.5j * ds * V.slice(0.5 * (a + b), grid))
        u = half * evolve_values(half * u, grid, ds)
    # interaction picture: U(t0 - t) U_V(t, t0)
    u = evolve_values(u, grid, t0 - t)
    return u.reshape(n, n).T


@dataclass(frozen=True, eq=False)
class DirectPropagator:
    operator: DenseOperator
    step: float
    refinement_delta: float
    unitarity_defect: float
    order_estimate: float


def direct_propagator(V: TimeDependentPotential, t0: float, t: float, grid: SpatialGrid,
                      step: float, gate: float = GATE, interaction: bool = False,
                      leak_tol=LEAK_TOL) -> DirectPropagator:
    """``U_V(t, t0)`` by Strang splitting (half potential, free step, half potential).

    The potential is evaluated at step midpoints.  With ``interaction=True``
    the result is ``U(t0 - t) U_V(t, t0)``.  Steps ``step``, ``step/2`` and
    ``step/4`` give a refinement delta (operator norm, relative to 1) and an
    observed convergence order.

    Raises
    ------
    QuadratureUnderresolved
        If the step-halving change exceeds ``gate``.
    """
    check_potential_leakage(V, grid, _nodes(t0, t, step), leak_tol)
    if t == t0:
        eye = np.eye(grid.size, dtype=complex)
        return DirectPropagator(_wrap(eye, grid), step, 0.0, 0.0, np.nan)
    mats = [_strang(V, t0, t, grid, step / 2 ** j) for j in range(3)]
    if not interaction:
        mats = [_free_action(grid, t - t0) @ m for m in mats]
    d1 = float(np.linalg.norm(mats[0] - mats[1], 2))
    d2 = float(np.linalg.norm(mats[1] - mats[2], 2))
    if d2 > gate:
        raise QuadratureUnderresolved(f"split-step refinement changed the propagator by {d2:.2e}")
    order = float(np.log2(d1 / d2)) if d2 > 0 and d1 > 0 else np.nan
    fine = mats[2]
    defect = float(np.linalg.norm(fine.conj().T @ fine - np.eye(grid.size), 2))
    return DirectPropagator(_wrap(fine, grid), step / 4, d2, defect, order)


def _free_action(grid, tau):
    n = grid.size
    cols = evolve_values(np.eye(n, dtype=complex).reshape((n,) + grid.shape), grid, tau)
    return cols.reshape(n, n).T


# -- checks -----------------------------------------------------------------------

@dataclass(frozen=True)
class FactorialRow:
    n: int
    op_norm: float
    bound: float
    passed: bool


def operator_norm_factorial_check(V: TimeDependentPotential, n_max: int, t0: float,
                                  horizon: float, grid: SpatialGrid, step: float,
                                  slack: float = FACTORIAL_SLACK) -> list:
    """``||W_n(horizon, t0)|| <= ||V||^n_{L^1_t L^inf_x} / n!`` for ``n = 1..n_max``."""
    terms = dyson_terms(V, n_max, horizon, t0, grid, step)
    v1 = _l1_linf(V, t0, horizon)
    rows = []
    for term in terms:
        s = singular_values(term.operator)[0] if not V.is_zero else 0.0
        b = v1 ** term.order / math.factorial(term.order)
        rows.append(FactorialRow(term.order, float(s), b, bool(s <= b * (1 + slack))))
    return rows


def _l1_linf(V, t0, t):
    from scipy import integrate
    if V.is_zero:
        return 0.0
    val, _ = integrate.quad(V.time_profile, t0, t, limit=200, points=None)
    return float(val)


@dataclass(frozen=True)
class GrowthRow:
    n: int
    m: int
    schatten_norm: float
    op_norm: float
    bound: float
    ratio: float


@dataclass(frozen=True)
class GrowthReport:
    rows: tuple
    rate: float
    r2: float
    within_envelope: bool


def growth_exponent(q_dual: float, n: int) -> int:
    """Schatten exponent ``2 ceil(q'/n)`` controlling the ``n``-th Dyson term."""
    return 2 * math.ceil(q_dual / n - 1e-12)


def schatten_growth_check(V: TimeDependentPotential, spec: MixedNormSpec, n_max: int, t0: float,
                          horizon: float, grid: SpatialGrid, step: float) -> GrowthReport:
    """Per-order Schatten norms against ``||V||^n_{L^p' L^q'} / (n!)^(1/p')``.

    A geometric model ``A C^n`` is fitted to the normalized ratios; the
    envelope check asks that every ratio lies below the fitted line shifted
    up to its largest residual, i.e. that log ratios grow at most linearly.
    """
    if spec.side != "dual":
        raise ValueError("growth check needs a dual exponent pair")
    terms = dyson_terms(V, n_max, horizon, t0, grid, step)
    vn = V.mixed_norm(spec.pf, spec.qf)
    rows = []
    for term in terms:
        m = growth_exponent(spec.qf, term.order)
        sn = schatten_norm(term.operator, m)
        op = float(singular_values(term.operator)[0])
        bound = vn ** term.order / math.factorial(term.order) ** (1 / spec.pf)
        rows.append(GrowthRow(term.order, m, sn, op, bound, sn / bound if bound else 0.0))
    pos = [(r.n, r.ratio) for r in rows if r.ratio > 0]
    rate, r2, within = float("nan"), float("nan"), True
    if len(pos) >= 4:
        rep = fit("geometric", pos)
        rate, r2 = rep.params["rate"], rep.r2
        # linear growth of log ratios: no strongly convex kink
        logs = np.log([r for _, r in pos])
        within = bool(np.all(np.diff(logs, 2) <= np.log(2.0)))
    return GrowthReport(tuple(rows), rate, r2, within)


def write_growth_csv(path, report: GrowthReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "m", "schatten_norm", "op_norm", "bound", "ratio"])
        for r in report.rows:
            w.writerow([r.n, r.m, repr(r.schatten_norm), repr(r.op_norm), repr(r.bound), repr(r.ratio)])


@dataclass(frozen=True)
class DysonDirectReport:
    order: int
    discrepancy: float
    tail: float
    dyson_tol: float
    direct_tol: float
    passed: bool

    @property
    def allowed(self) -> float:
        return self.tail + 2 * (self.dyson_tol + self.direct_tol)


def exponential_tail(v: float, order: int) -> float:
    """``sum_{n > order} v^n / n!``, summed directly (no cancellation)."""
    total, term = 0.0, 1.0
    for k in range(1, order + 200):
        term *= v / k
        if k > order:
            total += term
            if term < 1e-17 * total:
                break
    return total


# absolute slack for accumulated rounding in products of n x n unitaries
ROUNDOFF_FLOOR = 1e-10


def dyson_vs_direct(V: TimeDependentPotential, order: int, t0: float, t: float, grid: SpatialGrid,
                    step: float, direct_step: float | None = None) -> DysonDirectReport:
    """Operator-norm distance between ``1 + sum_{n<=order} W_n`` and the split-step
    interaction-picture propagator, against the exponential tail plus twice the
    declared quadrature tolerances (step-halving changes of each side)."""
    n = grid.size
    eye = np.eye(n, dtype=complex)
    check_potential_leakage(V, grid, _nodes(t0, t, step))
    coarse, fine, _ = _gated_sweep(V, order, t, t0, grid, step, 1.0)
    series = eye + sum(fine)
    dyson_tol = float(np.linalg.norm(sum(coarse) - sum(fine), 2))
    direct = direct_propagator(V, t0, t, grid, direct_step or step, interaction=True)
    disc = float(np.linalg.norm(series - direct.operator.action, 2))
    tail = exponential_tail(_l1_linf(V, t0, t), order)
    allowed = tail + 2 * (dyson_tol + direct.refinement_delta) + ROUNDOFF_FLOOR
    return DysonDirectReport(order, disc, tail, dyson_tol, direct.refinement_delta,
                             bool(disc <= allowed))


@dataclass(frozen=True, eq=False)
class ScatteringMatrix:
    operator: DenseOperator
    horizon: float
    t0: float
    unitarity_defect: float
    refinement_delta: float

    def distance_to_identity(self, r: float) -> float:
        """``||S - 1||_{S^r}``."""
        eye = np.eye(self.operator.shape[0])
        return schatten_norm(_wrap_like(self.operator.action - eye, self.operator), r)


def _wrap_like(action, op):
    return DenseOperator.from_action(action, op.basis, op.weight)


def scattering_matrix(V: TimeDependentPotential, t0: float, horizon: float, grid: SpatialGrid,
                      step: float) -> ScatteringMatrix:
    """``S = W_+ W_-^*`` with ``W_(+/-) = Omega(+/-horizon, t0)`` from split-step propagation."""
    plus = direct_propagator(V, t0, horizon, grid, step, interaction=True)
    minus = direct_propagator(V, t0, -horizon, grid, step, interaction=True)
    S = plus.operator.action @ minus.operator.action.conj().T
    defect = float(np.linalg.norm(S.conj().T @ S - np.eye(grid.size), 2))
    return ScatteringMatrix(_wrap(S, grid), horizon, t0, defect,
                            plus.refinement_delta + minus.refinement_delta)


def first_order_consistency(V: TimeDependentPotential, t0: float, t: float, grid: SpatialGrid,
                            step: float, frac: float = 0.75) -> float:
    """Relative Frobenius distance between the first Dyson term and
    ``-i exp(-i t0 (p^2 - q^2)) B_V`` on momenta ``|p|, |q| <= frac * cutoff``.

    The lattice Laplacian is periodic, so couplings across the zone edge differ
    from the whole-line kernel; only the central block is compared.
    """
    w1 = dyson_term(V, 1, t, t0, grid, step)
    F = dft_matrix(grid)
    wm = F @ w1.operator.action @ F.conj().T
    B = build_dual_operator(V, grid.cutoff, grid.delta).action
    p = sorted_momenta(grid)
    p2 = np.sum(p * p, axis=1)
    ref = -1j * np.exp(-1j * t0 * (p2[:, None] - p2[None, :])) * B
    keep = np.all(np.abs(p) <= frac * grid.cutoff, axis=1)
    blk = np.ix_(keep, keep)
    scale = np.linalg.norm(ref[blk])
    return 0.0 if scale == 0 else float(np.linalg.norm(wm[blk] - ref[blk]) / scale)
