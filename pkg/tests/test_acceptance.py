"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import time

import numpy as np
import pytest

from schattenlab.config import load_config
from schattenlab.experiments import (run_dyson_suite, run_endpoint_divergence, run_hls_check,
                                     run_kss_suite, run_scaling_sweep)
from schattenlab.oracle import CoherentEnsembleParams, berezin_lieb_bound, ensemble_density
from schattenlab.phase_space import TimeDependentPotential
from schattenlab.spectral import SpatialGrid, check_leakage, evolve_values, propagator_matrix
from schattenlab.strichartz import (LowRankState, coherent_ensemble_state, density_field,
                                    density_slice, orthonormalize, triangle_bound_check)
from schattenlab.spectral import TimeWindow
from schattenlab.wave import direct_propagator

BATTERY = 1000


def report(capsys, k, ok, detail, seconds):
    with capsys.disabled():
        print(f"\nACCEPTANCE {k}: {'PASS' if ok else 'FAIL'} ({seconds:.1f} s) {detail}")


def timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def sweep():
    return timed(run_scaling_sweep, load_config("scaling-sweep", None, ["discrete=true"]))


@pytest.fixture(scope="module")
def dyson():
    return timed(run_dyson_suite, load_config("dyson", None, []))


def test_1_density_oracle(capsys):
    t0 = time.perf_counter()
    e = CoherentEnsembleParams(1.0, 4.0, 10.0)
    g = SpatialGrid(1, 64.0, 1024)
    state = coherent_ensemble_state(e, g)
    errs = []
    for t in (0.0, 0.5, 1.0):
        rho = density_slice(state, t)
        check_leakage(np.sqrt(rho), g, 1e-6)
        ex = ensemble_density(e, t, g.axis)
        errs.append(np.max(np.abs(rho - ex)) / ex.max())
    sec = time.perf_counter() - t0
    ok = max(errs) <= 1e-3 and sec < 60
    report(capsys, 1, ok, f"max relative sup error {max(errs):.3g} (tol 1e-3)", sec)
    assert ok


def test_2_scaling_exponents(capsys, sweep):
    res, sec = sweep
    mixed = res.fits["mixed"].params["exponent"]
    ratio = res.fits["ratio"].params["exponent"]
    disc = res.fits["discrete"].params["exponent"]
    N = [row[0] for row in res.tables["scaling_closed_form"].rows]
    ok = (len(N) >= 5 and np.log10(N[-1] / N[0]) >= 2 - 1e-9 and abs(mixed - 2 / 3) <= 0.02
          and abs(disc - 2 / 3) <= 0.05 and abs(ratio - 1 / 6) <= 0.03
          and len(res.tables["scaling_discrete"].rows) >= 3 and sec < 600)
    report(capsys, 2, ok, f"closed form {mixed:.5f}, discretized {disc:.5f} (targets 2/3), "
           f"ratio {ratio:.5f} (target 1/6)", sec)
    assert ok


def test_3_product_bounds(capsys):
    res, sec = timed(run_kss_suite, load_config("kss", None, ["seed=20260101"]))
    ident = res.details["identity"]
    rows = res.tables["kss"].rows
    worst = max(row[8] for row in rows)
    rs = {row[0] for row in rows}
    ok = (abs(ident - 0.5) <= 0.005 and worst <= 1.02 and rs == {2.0, 3.0, 4.0, 6.0}
          and sec < 120)
    report(capsys, 3, ok, f"S^2 identity {ident:.8f} vs 0.5, {len(rows)} random cases, "
           f"worst ratio {worst:.4f} (slack 1.02)", sec)
    assert ok


def test_4_endpoint_divergence(capsys):
    res, sec = timed(run_endpoint_divergence, load_config("endpoint", None, []))
    rep = res.fits["trace"]
    halvings = len(res.tables["endpoint"].rows) - 1
    changes = res.details["contrast_changes"]
    ok = (rep.r2 >= 0.99 and res.details["increasing"] and halvings >= 4
          and np.all(changes <= 0.02) and sec < 300)
    report(capsys, 4, ok, f"{halvings} halvings, R^2 {rep.r2:.6f}, slope {rep.params['slope']:.5f}, "
           f"contrast max change {changes.max():.3g}", sec)
    assert ok


def test_5_factorial_bound(capsys, dyson):
    res, sec = dyson
    rows = res.tables["dyson_factorial"].rows
    norms = sorted({row[0] for row in rows})
    worst = max(row[2] / row[3] for row in rows)
    ok = norms == [0.5, 2.0] and all(row[4] for row in rows) and worst <= 1.05 and sec < 600
    report(capsys, 5, ok, f"n = 1..4 at norms {norms}, worst op_norm / bound {worst:.4f}", sec)
    assert ok


def test_6_dyson_vs_direct(capsys, dyson):
    res, sec = dyson
    rows = res.tables["dyson_direct"].rows
    orders = sorted(int(row[1]) for row in rows)
    ok = orders == [4, 8] and all(row[7] for row in rows)
    det = ", ".join(f"N={row[1]}: {row[2]:.3g} <= {row[6]:.3g}" for row in rows)
    report(capsys, 6, ok, det, sec)
    assert ok


def test_7_scattering(capsys, dyson):
    res, sec = dyson
    rows = res.tables["scattering"].rows
    defect = max(row[2] for row in rows)
    changes = []
    for v in sorted({row[0] for row in rows}):
        d = [row[3] for row in rows if row[0] == v]
        changes.append(abs(d[-1] - d[0]) / d[0])
    ok = defect <= 1e-4 and max(changes) <= 0.02
    report(capsys, 7, ok, f"max unitarity defect {defect:.3g}, max horizon change "
           f"{max(changes):.3g}", sec)
    assert ok


def _random_system(rng, grid, rank):
    z = grid.axis
    raw = np.array([np.exp(-(z - rng.uniform(-3, 3)) ** 2 / (2 * rng.uniform(0.5, 1.5) ** 2)
                           + 1j * rng.uniform(-2, 2) * z) for _ in range(rank)])
    vecs = orthonormalize(raw, grid.cell)
    w = rng.uniform(-1, 2, rank) * np.exp(1j * rng.uniform(0, 2 * np.pi, rank))
    return LowRankState(grid, w, vecs)


def test_8_invariant_batteries(capsys, sweep):
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(key=8))
    fails = {"unitarity": 0, "mass": 0, "orthonormality": 0, "triangle": 0, "berezin_lieb": 0}

    # unitarity: free propagators on random grids, and interacting ones on random pulses
    for k in range(BATTERY):
        n = int(rng.choice([16, 32, 64]))
        g = SpatialGrid(1, float(rng.uniform(4, 20)), n)
        U = propagator_matrix(g, float(rng.uniform(-5, 5)))
        if np.linalg.norm(U.conj().T @ U - np.eye(n), 2) > 1e-10:
            fails["unitarity"] += 1
    gi = SpatialGrid(1, 16.0, 64)
    props = []
    for k in range(20):
        V = TimeDependentPotential.gaussian(float(rng.uniform(-2, 2)), float(rng.uniform(0.5, 1.5)),
                                            float(rng.uniform(0.5, 1.5)),
                                            t_c=float(rng.uniform(-1, 1)),
                                            x_c=(float(rng.uniform(-2, 2)),))
        P = direct_propagator(V, -5.0, 5.0, gi, 0.1)
        props.append(P.operator.action)
        if P.unitarity_defect > 1e-10:
            fails["unitarity"] += 1

    # mass: random states through interacting propagators and free evolution
    for k in range(BATTERY):
        U = props[k % len(props)]
        v = rng.normal(size=gi.size) + 1j * rng.normal(size=gi.size)
        w = evolve_values(U @ v, gi, float(rng.uniform(-3, 3)))
        if abs(np.linalg.norm(w) / np.linalg.norm(v) - 1) > 1e-10:
            fails["mass"] += 1

    # orthonormality: random systems evolved freely and by interacting propagators;
    # every generated system also goes through the density triangle check
    go = SpatialGrid(1, 20.0, 256)
    for k in range(BATTERY):
        rank = int(rng.integers(1, 9))
        s = _random_system(rng, go, rank)
        t = float(rng.uniform(-1, 1))
        ev = evolve_values(s.vectors, go, t)
        gram = (ev.conj() @ ev.T) * go.cell
        if np.max(np.abs(gram - np.eye(rank))) > 1e-10:
            fails["orthonormality"] += 1
        if k % 10 == 0:
            U = props[(k // 10) % len(props)]
            u = rng.normal(size=(rank, gi.size)) + 1j * rng.normal(size=(rank, gi.size))
            u = orthonormalize(u, gi.cell)
            ui = (U @ u.T).T
            if np.max(np.abs((ui.conj() @ ui.T) * gi.cell - np.eye(rank))) > 1e-10:
                fails["orthonormality"] += 1
        if not triangle_bound_check(s, (0.0, t)):
            fails["triangle"] += 1
        if k % 100 == 0:
            pos = LowRankState(go, np.abs(s.weights), s.vectors)
            fld = density_field(pos, TimeWindow(-1.0, 1.0, 5))
            if not np.allclose(fld.masses(), np.sum(np.abs(s.weights)), rtol=1e-10):
                fails["mass"] += 1

    # Berezin-Lieb on discretized ensembles (sweep points plus extra exponents)
    res, _ = sweep
    for row in res.tables["scaling_discrete"].rows:
        if row[9] > row[10] * 1.01:
            fails["berezin_lieb"] += 1
    for beta, L, mu in [(1.0, 4.0, 10.0), (1.0, 6.0, 20.0), (0.5, 5.0, 40.0)]:
        e = CoherentEnsembleParams(beta, L, mu)
        st = coherent_ensemble_state(e)
        for r in (1.5, 2.0, 3.0, 4.0):
            if st.trace_power(r) > berezin_lieb_bound(e, r) * 1.01:
                fails["berezin_lieb"] += 1
    sec = time.perf_counter() - t0
    ok = not any(fails.values())
    report(capsys, 8, ok, f"{BATTERY} cases per battery, failures {fails}", sec)
    assert ok


def test_9_hls_admissibility(capsys):
    res, sec = timed(run_hls_check, load_config("hls-check", None, ["study=false"]))
    rows = {row[0]: row for row in res.tables["hls_admissibility"].rows}
    ok = (rows["chain"][3] and rows["cyclic"][3] and not rows["endpoint"][3]
          and "sum_inverse_r" in rows["endpoint"][4])
    report(capsys, 9, ok, f"chain {rows['chain'][3]}, cyclic {rows['cyclic'][3]}, endpoint "
           f"rejected for: {rows['endpoint'][4]}", sec)
    assert ok
