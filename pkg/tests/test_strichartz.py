import numpy as np
import pytest
from hypothesis import given, strategies as st

from schattenlab.errors import ExponentMismatch, QuadratureUnderresolved
from schattenlab.oracle import CoherentEnsembleParams, ensemble_density, ensemble_window_lp
from schattenlab.quadrature import space_lq
from schattenlab.spectral import SpatialGrid, TimeWindow, evolve_values
from schattenlab.strichartz import (DensityField, LowRankState, MixedNormSpec,
                                    coherent_ensemble_state, density_field, density_slice,
                                    hermite_system, inhomogeneous_ratio, inhomogeneous_solution,
                                    mixed_norm, orthonormalize, strichartz_ratio,
                                    triangle_bound_check, write_ratio_csv)

G = SpatialGrid(1, 20.0, 256)


def random_system(seed, rank=16, grid=G, complex_weights=False):
    r = np.random.default_rng(seed)
    z = grid.axis
    raw = np.array([np.exp(-(z - r.uniform(-3, 3)) ** 2 / (2 * r.uniform(0.5, 2.0)) ** 2
                           + 1j * r.uniform(-2, 2) * z) for _ in range(rank)])
    vecs = orthonormalize(raw, grid.cell)
    w = r.uniform(-1, 2, rank)
    if complex_weights:
        w = w * np.exp(1j * r.uniform(0, 2 * np.pi, rank))
    return LowRankState(grid, w, vecs)


def test_spec_relations():
    s = MixedNormSpec.primal(3, 1)
    assert s.pf == 3 and s.schatten_exponent == pytest.approx(1.5)
    assert MixedNormSpec.primal(2, 2).pf == 2
    d = MixedNormSpec.dual(2, 1)
    assert d.pf == pytest.approx(4 / 3) and d.schatten_exponent == 4
    with pytest.raises(ExponentMismatch):
        MixedNormSpec(2, 3, 1, "primal")
    with pytest.raises(ExponentMismatch):
        MixedNormSpec.primal(4, 1)
    with pytest.raises(ExponentMismatch):
        MixedNormSpec.dual(1.2, 1)


def test_gram_invariant_enforced():
    v = np.array([np.exp(-G.axis ** 2), np.exp(-G.axis ** 2)], dtype=complex)
    with pytest.raises(ValueError):
        LowRankState(G, [1.0, 1.0], v)
    with pytest.raises(ValueError):
        orthonormalize(v, G.cell)


def test_rank_one_density_at_zero():
    u = hermite_system(G, 1)
    rho = density_slice(u, 0.0)
    assert np.allclose(rho, np.abs(u.vectors[0]) ** 2)
    assert np.sum(rho) * G.cell == pytest.approx(1.0, abs=1e-12)


def test_density_additivity_disjoint():
    z = G.axis
    a = np.exp(-(z + 8) ** 2)
    b = np.exp(-(z - 8) ** 2)
    both = LowRankState.from_functions(G, [1.0, 2.0], [a, b])
    one = LowRankState.from_functions(G, [1.0], [a])
    two = LowRankState.from_functions(G, [2.0], [b])
    assert np.allclose(density_slice(both, 0.0), density_slice(one, 0.0) + density_slice(two, 0.0))


def test_discretized_ensemble_density_matches_closed_form():
    e = CoherentEnsembleParams(1.0, 4.0, 10.0)
    g = SpatialGrid(1, 64.0, 1024)
    state = coherent_ensemble_state(e, g)
    for t in (0.0, 0.5, 1.0):
        rho = density_slice(state, t)
        ex = ensemble_density(e, t, g.axis)
        assert np.max(np.abs(rho - ex)) / ex.max() < 1e-3


def test_mixed_norm_constant_field():
    g = SpatialGrid(1, 0.5, 8)
    samples = np.full((3,) + g.shape, 2.5)
    f = DensityField.uniform(g, samples, times=[0.0, 0.5, 1.0])
    assert mixed_norm(f, MixedNormSpec.primal(3, 1)) == pytest.approx(2.5)


def test_mixed_norm_gaussian_constant_in_time():
    g = SpatialGrid(1, 12.0, 512)
    rho = np.exp(-g.axis ** 2)
    f = DensityField.uniform(g, np.tile(rho, (5, 1)), TimeWindow(0.0, 2.0, 5))
    exact = (2.0 * (np.sqrt(np.pi / 3))) ** (1 / 3)
    assert mixed_norm(f, MixedNormSpec.primal(3, 1)) == pytest.approx(exact, rel=1e-10)
    with pytest.raises(ExponentMismatch):
        mixed_norm(f, MixedNormSpec.dual(2, 1))


def test_ensemble_field_against_windowed_closed_form():
    e = CoherentEnsembleParams(1.0, np.sqrt(10.0), 10.0)
    state = coherent_ensemble_state(e)
    spec = MixedNormSpec.primal(3, 1)
    rep = strichartz_ratio(state, spec, nodes=129)
    exact = ensemble_window_lp(e, 3, 3, *rep.window)
    assert rep.lhs == pytest.approx(exact, rel=1e-2)
    assert rep.refinement_delta < 1e-2


def test_rank_one_ratio_denominator_is_one():
    rep = strichartz_ratio(hermite_system(G, 1), MixedNormSpec.primal(3, 1), nodes=65)
    assert rep.rhs == pytest.approx(1.0)
    assert rep.ratio == rep.lhs


def test_hermite_ratios_bounded(tmp_path):
    spec = MixedNormSpec.primal(3, 1)
    reps = [strichartz_ratio(hermite_system(G, k), spec, nodes=65) for k in (1, 2, 4, 8, 16, 32)]
    ratios = np.array([r.ratio for r in reps])
    assert np.all(ratios < 1.0) and ratios.max() / ratios.min() < 1.2
    # N-fold projection: the right side is exactly N^((q+1)/(2q))
    for r in reps:
        assert r.rhs == pytest.approx(r.N ** (2 / 3))
    path = tmp_path / "r.csv"
    write_ratio_csv(path, reps)
    assert path.read_text().splitlines()[0] == "d,p,q,N,window,lhs,rhs,ratio"


def test_ratio_weight_scaling_covariance():
    s = random_system(7, rank=6)
    spec = MixedNormSpec.primal(3, 1)
    w = TimeWindow(-20.0, 20.0, 65, scale=0.5)
    a = strichartz_ratio(LowRankState(G, np.abs(s.weights), s.vectors), spec, w).ratio
    b = strichartz_ratio(LowRankState(G, 3.7 * np.abs(s.weights), s.vectors), spec, w).ratio
    assert abs(a - b) < 1e-8


def test_triangle_check_examples():
    assert triangle_bound_check(hermite_system(G, 4), (0.0, 1.0))
    s = hermite_system(G, 3, weights=[1j * 2.0, 1j * 2.0, 1j * 2.0])
    assert triangle_bound_check(s, (0.0, 0.5))
    for seed in range(10):
        assert triangle_bound_check(random_system(seed, complex_weights=True), (0.0, 0.5, 1.0))


@given(st.integers(0, 2 ** 32 - 1), st.floats(-1.0, 1.0))
def test_orthonormality_and_mass_preserved(seed, t):
    s = random_system(seed, rank=8)
    ev = evolve_values(s.vectors, G, t)
    gram = (ev.conj() @ ev.T) * G.cell
    assert np.max(np.abs(gram - np.eye(8))) < 1e-8
    pos = LowRankState(G, np.abs(s.weights), s.vectors)
    fld = density_field(pos, TimeWindow(-abs(t) - 0.1, abs(t) + 0.1, 3))
    assert np.allclose(fld.masses(), np.sum(np.abs(s.weights)), rtol=1e-8)
    assert all(np.all(sl >= 0) for sl in fld.slices)


# -- inhomogeneous problem --------------------------------------------------------

GI = SpatialGrid(1, 16.0, 128)


def _pulse_source(centre=0.0, width=0.3):
    phi = np.exp(-GI.axis ** 2 / 2) * np.pi ** -0.25
    P = np.outer(phi, phi) * GI.cell
    return lambda s: np.exp(-(s - centre) ** 2 / (2 * width ** 2)) * P


def test_inhomogeneous_zero_and_degenerate():
    zero = lambda s: np.zeros((128, 128))
    sol = inhomogeneous_solution(zero, GI, 0.0, 1.0, 0.1)
    assert np.all(sol.action == 0)
    rep = inhomogeneous_ratio(zero, MixedNormSpec.primal(2, 1), GI, 0.0, 1.0, 0.1)
    assert rep.degenerate and rep.ratio == 0.0
    assert np.all(inhomogeneous_solution(_pulse_source(), GI, 0.3, 0.3, 0.1).action == 0)


def test_inhomogeneous_single_node_is_free_evolved_rank_one():
    phi = np.exp(-GI.axis ** 2 / 2) * np.pi ** -0.25
    P = np.outer(phi, phi) * GI.cell
    R = lambda s: P if s == 0.5 else np.zeros_like(P)
    # nodes at step/2 = 0.125 include s = 0.5 with trapezoid weight 0.125
    sol = inhomogeneous_solution(R, GI, 0.0, 1.0, 0.25, gate=np.inf)
    ev = evolve_values(phi, GI, 0.5)
    expect = 0.125 * np.outer(ev, ev.conj()) * GI.cell
    assert np.linalg.norm(sol.action - expect) / np.linalg.norm(expect) < 1e-12


def test_inhomogeneous_hermitian_and_refined():
    R = _pulse_source()
    sol = inhomogeneous_solution(R, GI, -1.5, 1.5, 0.05)
    a = sol.action
    assert np.max(np.abs(a - a.conj().T)) < 1e-12
    ref = inhomogeneous_solution(R, GI, -1.5, 1.5, 0.025).action
    assert np.linalg.norm(a - ref) / np.linalg.norm(ref) < 1e-3
    with pytest.raises(QuadratureUnderresolved):
        inhomogeneous_solution(_pulse_source(width=0.05), GI, -1.5, 1.5, 1.0)


def test_inhomogeneous_ratio_stable_and_translation_invariant():
    spec = MixedNormSpec.primal(2, 1)
    a = inhomogeneous_ratio(_pulse_source(0.0), spec, GI, -1.5, 1.5, 0.05)
    b = inhomogeneous_ratio(_pulse_source(0.75), spec, GI, -0.75, 2.25, 0.05)
    assert np.isfinite(a.ratio) and a.ratio > 0
    assert a.refinement_delta < 1e-2
    assert b.ratio == pytest.approx(a.ratio, rel=1e-8)
    with pytest.raises(ValueError):
        inhomogeneous_solution(lambda s: np.triu(np.ones((128, 128))), GI, 0.0, 1.0, 0.5)
