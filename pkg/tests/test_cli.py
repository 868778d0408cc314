import json

import pytest

from lindtorus.cli import DEFAULTS, load_config, load_schema, main
from lindtorus.errors import ConfigError


def _run(tmp_path, command, cfg=None):
    args = [command, "--out", str(tmp_path)]
    if cfg is not None:
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg))
        args += ["--config", str(p)]
    return main(args)


def test_schema_accepts_defaults():
    import jsonschema
    jsonschema.validate(DEFAULTS, load_schema())


def test_config_problems_are_collected():
    with pytest.raises(ConfigError) as exc:
        load_config({"K": 0, "n_max": -1, "bogus": 1})
    assert len(exc.value.problems) == 3


def test_semantic_checks():
    with pytest.raises(ConfigError) as exc:
        load_config({"d": 3, "epsilon": [0.5]})
    text = " ".join(exc.value.problems)
    assert "d:" in text and "epsilon" in text


def test_resonant_omega_reported():
    with pytest.raises(ConfigError):
        load_config({"omega": [1.0, 0.5], "f": [{"nu": [1, 0], "m": 0, "re": 0.5, "im": 0.0},
                                                {"nu": [-1, 0], "m": 0, "re": 0.5, "im": 0.0}]})


def test_error_report_written(tmp_path):
    assert _run(tmp_path, "smalldiv", {"K": 99}) == 2
    rep = json.loads((tmp_path / "error.json").read_text())
    assert rep["error"] == "config"
    assert rep["problems"]


def test_smalldiv_command(tmp_path):
    assert _run(tmp_path, "smalldiv") == 0
    out = json.loads((tmp_path / "smalldiv.json").read_text())
    assert len(out["alpha"]) == 21
    assert (tmp_path / "alpha.csv").read_text().startswith("m,alpha,argmin")


def test_series_command(tmp_path):
    assert _run(tmp_path, "series", {"K": 2, "epsilon": [1e-3], "beta0": [0.0]}) == 0
    data = json.loads((tmp_path / "series.json").read_text())
    assert data["K"] == 2
    fields = json.loads((tmp_path / "fields.json").read_text())["fields"]
    assert len(fields) == 1


def test_floats_round_trip(tmp_path):
    _run(tmp_path, "smalldiv")
    from lindtorus.smalldiv import Frequency
    al = json.loads((tmp_path / "smalldiv.json").read_text())["alpha"]
    assert tuple(al) == Frequency.golden2().alpha_table


def test_bifurcation_and_torus(tmp_path):
    cfg = {"epsilon": [1e-3, -1e-3], "ode": {"T": 2.0}}
    assert _run(tmp_path, "bifurcation", cfg) == 0
    bif = json.loads((tmp_path / "bifurcation.json").read_text())
    assert bif["k0"] == 0
    assert _run(tmp_path, "torus", cfg) == 0
    tor = json.loads((tmp_path / "torus.json").read_text())
    assert all(c["pass"] for c in tor["checks"])


def test_assertion_failure_exit_code(tmp_path):
    # an impossible residual tolerance must fail the run with exit code 1
    cfg = {"epsilon": [1e-3], "tolerances": {"r_range": 1e-30}, "ode": {"T": 1.0}}
    assert _run(tmp_path, "torus", cfg) == 1
    rep = json.loads((tmp_path / "error.json").read_text())
    assert "residual_tolerance" in rep["failed"]


def test_self_energy_command(tmp_path):
    assert _run(tmp_path, "self-energy", {"K_tree": 2, "x_samples": 3}) == 0
    data = json.loads((tmp_path / "self_energy.json").read_text())
    assert data["plain"]


@pytest.mark.slow
def test_identity_suite_command(tmp_path):
    assert _run(tmp_path, "verify-lemmas", {"K_tree": 2, "K": 2, "x_samples": 5}) == 0
    rep = json.loads((tmp_path / "identity_report.json").read_text())
    assert all(c["pass"] for c in rep["checks"])
