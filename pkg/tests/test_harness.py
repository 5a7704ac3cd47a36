import json

import numpy as np
import pytest

from bandhomog import ConfigError, fit_slope, parse_config, run_convergence
from bandhomog.harness import format_float, truncation_check, write_csv
from bandhomog.presets import free_chain_config, mathieu_chain_config


# -- slope fitting ---------------------------------------------------------


def test_fit_slope_exact_first_order():
    eps = [0.1, 0.05, 0.025, 0.0125]
    slope, resid = fit_slope([(e, 3.7 * e) for e in eps])
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert resid < 1e-12


def test_fit_slope_exact_second_order():
    eps = [0.1, 0.05, 0.025]
    slope, resid = fit_slope([(e, 0.2 * e**2) for e in eps])
    assert slope == pytest.approx(2.0, abs=1e-12)
    assert resid < 1e-12


def test_fit_slope_noisy_first_order():
    rng = np.random.default_rng(17)
    eps = np.array([0.1, 0.05, 0.025, 0.0125, 0.00625])
    errs = 2.0 * eps * np.exp(rng.normal(scale=0.03, size=eps.size))
    slope, _ = fit_slope(list(zip(eps, errs)))
    assert abs(slope - 1.0) < 0.1


def test_fit_slope_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_slope([(0.1, 1.0), (0.05, 0.5)])
    with pytest.raises(ValueError):
        fit_slope([(0.1, 1.0), (0.05, -0.5), (0.025, 0.2)])


# -- configuration -----------------------------------------------------------


def test_parse_config_roundtrip():
    cfg = parse_config(mathieu_chain_config())
    assert cfg.lattice.shape == (1, 1)
    assert cfg.band == 1
    assert cfg.potential[(1,)] == 1.0
    assert cfg.epsilons[0] == 0.1


def test_parse_config_missing_key():
    with pytest.raises(ConfigError):
        parse_config({"lattice": [[1.0]]})


def test_parse_config_bad_entries():
    doc = free_chain_config()
    doc["coefficients"]["g_check"] = [[[[[0], "x", 0.0]]]]
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_parse_config_bad_epsilons():
    doc = free_chain_config()
    doc["epsilons"] = [0.1, -0.2]
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_empty_epsilon_list_rejected():
    doc = free_chain_config()
    doc["epsilons"] = []
    with pytest.raises(ConfigError):
        run_convergence(parse_config(doc))


def test_nonmonotone_epsilons_rejected():
    doc = free_chain_config()
    doc["epsilons"] = [0.05, 0.1, 0.025]
    with pytest.raises(ConfigError):
        run_convergence(parse_config(doc))


def test_bad_tolerance_rejected():
    doc = free_chain_config()
    doc["tolerances"] = {"noise_floor": -1.0}
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_stage_failure_carries_identity():
    from bandhomog.errors import PipelineError

    doc = free_chain_config()
    doc["threshold"]["band"] = 999
    with pytest.raises(PipelineError) as excinfo:
        run_convergence(parse_config(doc))
    assert excinfo.value.stage == "ground-state/threshold"
    assert "999" in str(excinfo.value)


# -- convergence runs -----------------------------------------------------------


def test_convergence_free_noise_floor():
    report = run_convergence(parse_config(free_chain_config()))
    assert report.passed
    assert all(r["error"] <= 1e-10 for r in report.rows)
    for s in report.slopes.values():
        assert s["slope"] is None
        assert s["note"] == "errors at noise floor"


def test_convergence_mathieu_first_order():
    report = run_convergence(parse_config(mathieu_chain_config()))
    assert report.passed
    assert all(r["certified"] for r in report.rows)
    assert all(r["satisfied"] for r in report.rows)
    slope = report.slopes["tau=1"]["slope"]
    assert 0.8 <= slope <= 1.3
    # report embeds the ledger and certification status
    assert report.ledger["c7"] > 0
    assert "certified_for" in report.packet


def test_convergence_report_deterministic():
    doc = mathieu_chain_config(epsilons=(0.1, 0.05, 0.025), packet_nodes=32)
    a = run_convergence(parse_config(doc)).to_json()
    b = run_convergence(parse_config(doc)).to_json()
    assert a == b
    json.loads(a)


def test_truncation_check_converges():
    doc = mathieu_chain_config(k0=np.pi)
    cfg = parse_config(doc)
    rows = truncation_check(cfg, deltas=[0.02], taus=[1.0, 10.0])
    assert all(r["converged"] for r in rows)


# -- delimited output --------------------------------------------------------------


def test_format_float_full_precision():
    x = 0.1 + 0.2
    assert float(format_float(x)) == x
    assert format_float(1.0) == "1"


def test_write_csv(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [[1.0 / 3.0, True], [2, False]])
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b"
    assert float(lines[1].split(",")[0]) == 1.0 / 3.0
    assert lines[1].split(",")[1] == "1"
    assert lines[2] == "2,0"
