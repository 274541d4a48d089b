import numpy as np
import pytest
from hypothesis import given, strategies as st

from schattenlab.errors import LeakageExceeded, ShapeMismatch
from schattenlab.oracle import CoherentStateParams, coherent_state, evolved_coherent_amplitude
from schattenlab.spectral import (SpatialGrid, TimeWindow, WaveFunction, apply_potential_slice,
                                  dft_matrix, forward_fourier, free_propagate, inverse_fourier,
                                  propagator_matrix, shell_fraction)


def gauss(grid, beta=1.0, x0=0.0, k0=0.0):
    z = grid.axis
    return WaveFunction(grid, np.exp(-(z - x0) ** 2 / (4 * beta) + 1j * k0 * z).astype(complex))


def test_grid_lattices():
    g = SpatialGrid(1, 16.0, 128)
    assert g.h == pytest.approx(0.25)
    assert g.delta == pytest.approx(np.pi / 16)
    assert g.cutoff == pytest.approx(np.pi / 0.25)
    assert SpatialGrid(2, 4.0, 16).size == 256


@pytest.mark.parametrize("n", [4, 12, 100])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(ValueError):
        SpatialGrid(1, 1.0, n)


def test_time_window_invariants():
    with pytest.raises(ValueError):
        TimeWindow(1.0, 1.0, 4)
    with pytest.raises(ValueError):
        TimeWindow(0.0, 1.0, 1)
    w = TimeWindow(0.0, 2.0, 5)
    assert w.weights().sum() == pytest.approx(2.0)
    s = TimeWindow(-3.0, 3.0, 129, scale=0.5)
    assert s.weights().sum() == pytest.approx(6.0, rel=1e-2)
    assert s.coarsened().m == 65


def test_impulse_has_flat_spectrum():
    g = SpatialGrid(1, 8.0, 64)
    v = np.zeros(64, complex)
    v[32] = 1.0
    m = np.abs(forward_fourier(WaveFunction(g, v)))
    assert np.ptp(m) < 1e-14 * m.max()


def test_gaussian_transform_matches_analytic():
    g = SpatialGrid(1, 24.0, 256)
    u = gauss(g, beta=1.0)
    uh = forward_fourier(u)
    k = g.momentum_axis
    exact = np.sqrt(2.0) * np.exp(-k ** 2)  # (2 pi)^(-1/2) * integral exp(-z^2/4 - i k z)
    assert np.max(np.abs(uh - exact)) / exact.max() < 1e-8


def test_round_trip_and_parseval(rng):
    g = SpatialGrid(2, 6.0, 16)
    v = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    u = WaveFunction(g, v)
    uh = forward_fourier(u)
    assert np.max(np.abs(inverse_fourier(uh, g).values - v)) < 1e-12
    assert np.sqrt(np.sum(np.abs(uh) ** 2) * g.momentum_cell) == pytest.approx(u.norm(), rel=1e-10)


def test_propagate_zero_time_is_identity():
    g = SpatialGrid(1, 16.0, 128)
    u = gauss(g)
    assert np.array_equal(free_propagate(u, 0.0).values, u.values)


def test_coherent_packet_matches_closed_form():
    g = SpatialGrid(1, 40.0, 1024)
    p = CoherentStateParams(1.0, [0.0], [2.0])
    u = free_propagate(coherent_state(p, g), 0.5)
    exact = evolved_coherent_amplitude(p, 0.5, g.axis)
    mask = exact > 1e-3 * exact.max()
    assert np.max(np.abs(np.abs(u.values[mask]) - exact[mask]) / exact[mask]) < 1e-6


def test_plane_wave_only_gains_phase():
    g = SpatialGrid(1, 8.0, 64)
    k = g.momentum_axis[5]
    u = WaveFunction(g, np.exp(1j * k * g.axis))
    out = free_propagate(u, 0.3, leak_tol=None)
    assert np.max(np.abs(out.values - np.exp(-0.3j * k * k) * u.values)) < 1e-12


def test_evolution_is_fourier_diagonal():
    g = SpatialGrid(1, 8.0, 32)
    F = dft_matrix(g)
    M = F @ propagator_matrix(g, 0.7) @ F.conj().T
    off = M - np.diag(np.diag(M))
    assert np.max(np.abs(off)) < 1e-12
    assert np.allclose(np.abs(np.diag(M)), 1.0)


def test_leakage_is_detected():
    g = SpatialGrid(1, 8.0, 128)
    u = gauss(g, beta=0.2)
    with pytest.raises(LeakageExceeded):
        free_propagate(u, 5.0)
    assert shell_fraction(u.values, g) < 1e-6


def test_potential_slice():
    g = SpatialGrid(1, 8.0, 64)
    u = WaveFunction(g, np.ones(64, complex))
    assert np.all(apply_potential_slice(u, np.zeros(64)).values == 0)
    assert np.array_equal(apply_potential_slice(u, np.ones(64)).values, u.values)
    half = apply_potential_slice(u, (g.axis < 0).astype(float))
    assert half.norm() ** 2 == pytest.approx(0.5 * u.norm() ** 2)
    with pytest.raises(ShapeMismatch):
        apply_potential_slice(u, np.ones(32))


@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0), st.integers(0, 2 ** 32 - 1))
def test_group_law_and_time_reversal(s, t, seed):
    g = SpatialGrid(1, 8.0, 64)
    r = np.random.default_rng(seed)
    u = WaveFunction(g, r.normal(size=64) + 1j * r.normal(size=64))
    a = free_propagate(free_propagate(u, s, None), t, None)
    b = free_propagate(u, s + t, None)
    assert np.max(np.abs(a.values - b.values)) < 1e-9 * max(1.0, np.abs(u.values).max())
    back = free_propagate(free_propagate(u, t, None), -t, None)
    assert np.max(np.abs(back.values - u.values)) < 1e-9 * max(1.0, np.abs(u.values).max())
    assert abs(b.norm() - u.norm()) < 1e-9 * u.norm()
