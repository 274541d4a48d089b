import math

import numpy as np
import pytest

from schattenlab.cli import main
from schattenlab.config import ExperimentConfig, load_config, parse_lines, parse_value
from schattenlab.errors import ExponentMismatch, InsufficientData, RegimeViolated
from schattenlab.experiments import (kss_identity, run, run_endpoint_divergence,
                                     run_scaling_sweep)
from schattenlab.fitting import fit
from schattenlab.phase_space import TimeDependentPotential, endpoint_trace


# -- fitting -------------------------------------------------------------------

def test_power_law_exact():
    x = np.geomspace(1, 1e3, 6)
    rep = fit("power_law", zip(x, 2.5 * x ** (2 / 3)))
    assert rep.params["exponent"] == pytest.approx(2 / 3, abs=1e-12)
    assert rep.params["prefactor"] == pytest.approx(2.5, rel=1e-12)
    assert rep.r2 == pytest.approx(1.0)
    assert np.allclose(rep.predict(x), 2.5 * x ** (2 / 3))


def test_log_growth_exact():
    x = [2.0, 4.0, 8.0, 16.0, 32.0]
    rep = fit("log_growth", [(v, 3 * math.log(v) + 1) for v in x])
    assert rep.params["slope"] == pytest.approx(3.0, abs=1e-12)
    assert rep.params["intercept"] == pytest.approx(1.0, abs=1e-12)


def test_geometric_exact():
    rep = fit("geometric", [(n, 0.7 * 1.5 ** n) for n in range(1, 7)])
    assert rep.params["rate"] == pytest.approx(1.5, rel=1e-12)


def test_noisy_power_law_recovers_exponent():
    rng = np.random.Generator(np.random.Philox(key=11))
    x = np.geomspace(10, 1e4, 20)
    y = x ** 0.5 * np.exp(rng.normal(scale=0.01, size=x.size))
    rep = fit("power_law", zip(x, y))
    assert abs(rep.params["exponent"] - 0.5) < 0.01
    assert rep.r2 > 0.99


def test_fit_errors():
    with pytest.raises(InsufficientData):
        fit("power_law", [(1, 1), (2, 2), (3, 3)])
    with pytest.raises(ValueError):
        fit("cubic", [(1, 1)] * 4)
    with pytest.raises(ValueError):
        fit("power_law", [(1, -1), (2, 2), (3, 3), (4, 4)])


# -- configuration ---------------------------------------------------------------

def test_parse_values():
    assert parse_value("3") == 3
    assert parse_value("2.5") == 2.5
    assert parse_value("true") is True
    assert parse_value("5/3") == pytest.approx(5 / 3)
    assert parse_value("1, 2.5,4") == [1, 2.5, 4]
    assert parse_value("gaussian") == "gaussian"


def test_parse_lines_and_errors():
    vals = parse_lines(["# comment", "", "q = 3  # trailing", "sigma-x = 0.5"])
    assert vals == {"q": 3, "sigma_x": 0.5}
    with pytest.raises(ValueError):
        parse_lines(["no equals sign"])


def test_exponents_filled_and_checked():
    cfg = ExperimentConfig("scaling-sweep", d=1, q=3)
    assert cfg.p == pytest.approx(3.0)
    cfg2 = ExperimentConfig("scaling-sweep", d=2, q=2)
    assert cfg2.p == pytest.approx(2.0)
    with pytest.raises(ExponentMismatch):
        ExperimentConfig("scaling-sweep", d=1, q=3, p=2)
    dual = ExperimentConfig("dual-ratio", d=1, q=1.5)
    assert 1 / dual.p + 1 / (2 * dual.q) == pytest.approx(1.0)


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig("nonsense")
    with pytest.raises(ValueError):
        ExperimentConfig("kss")
    assert ExperimentConfig("kss", seed=3).stochastic
    assert not ExperimentConfig("endpoint").stochastic
    with pytest.raises(ValueError):
        ExperimentConfig("endpoint", d=2)
    path = tmp_path / "c.cfg"
    path.write_text("experiment = kss\nseed = 5\ncases = 3\n")
    cfg = load_config("kss", path, ["cases=4"])
    assert cfg.seed == 5 and cfg.get("cases") == 4
    with pytest.raises(ValueError):
        load_config("endpoint", path)


def test_echo_is_sorted_and_round_trips():
    cfg = load_config("dual-ratio", None, ["q=1.5", "cutoffs=8,16"])
    lines = cfg.echo()
    assert lines == sorted(lines)
    again = load_config("dual-ratio", None, [line.replace(" ", "") for line in lines
                                             if not line.startswith("experiment")])
    assert again.echo() == lines


# -- experiments -----------------------------------------------------------------

def test_scaling_sweep_regime_violation():
    cfg = load_config("scaling-sweep", None, ["L=10,20,40,80", "mu=1"])
    with pytest.raises(RegimeViolated):
        run_scaling_sweep(cfg)


def test_scaling_sweep_closed_form_exponent():
    res = run_scaling_sweep(load_config("scaling-sweep", None, []))
    assert res.passed
    assert abs(res.fits["mixed"].params["exponent"] - 2 / 3) <= 0.02


def test_endpoint_zero_potential_degenerate():
    res = run_endpoint_divergence(load_config("endpoint", None, ["amplitude=0"]))
    assert res.details["degenerate"] and res.passed
    assert all(row[2] == 0.0 for row in res.tables["endpoint"].rows)
    assert "trace" not in res.fits


def test_endpoint_trace_quadratic_in_amplitude():
    V = TimeDependentPotential.gaussian(1.0, 1.0, 0.5)
    a = endpoint_trace(V, 4.0, 0.25)
    b = endpoint_trace(V.scaled(2.0), 4.0, 0.25)
    assert b == pytest.approx(4 * a, rel=1e-12)


def test_kss_identity_value():
    assert kss_identity() == pytest.approx(0.5, abs=5e-3)


def test_kss_reproducible():
    cfg = load_config("kss", None, ["seed=9", "cases=2", "r=2,4"])
    a, _ = run(cfg)
    b, _ = run(cfg)
    assert a.tables["kss"].rows == b.tables["kss"].rows
    other, _ = run(load_config("kss", None, ["seed=10", "cases=2", "r=2,4"]))
    assert other.tables["kss"].rows != a.tables["kss"].rows


# -- command line --------------------------------------------------------------------

def _run_cli(args):
    return main(args)


def test_cli_hls_check(tmp_path, capsys):
    out = tmp_path / "hls"
    assert _run_cli(["hls-check", "--out", str(out), "levels=4"]) == 0
    assert (out / "run_manifest.txt").exists()
    man = (out / "run_manifest.txt").read_text()
    assert "# config" in man and "numpy = " in man and "verdict = pass" in man


def test_cli_dual_ratio_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run_cli(["dual-ratio", "--out", str(a)]) == 0
    assert _run_cli(["dual-ratio", "--out", str(b)]) == 0
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cli_kss_requires_seed(tmp_path, capsys):
    assert _run_cli(["kss", "--out", str(tmp_path / "k")]) == 2
    assert "seed" in capsys.readouterr().err


def test_cli_kss_seeded(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert _run_cli(["kss", "--seed", "7", "--out", str(d), "cases=2"]) == 0
    assert (a / "kss.csv").read_bytes() == (b / "kss.csv").read_bytes()


def test_cli_rejects_mismatched_exponents(tmp_path, capsys):
    assert _run_cli(["scaling-sweep", "--out", str(tmp_path / "s"), "q=3", "p=2"]) == 2
    with pytest.raises(SystemExit):
        _run_cli(["kss", "--seed", "-1"])
