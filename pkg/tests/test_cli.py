import json

import numpy as np
import pytest

from riskimpute.cli import main

EVAL_CONFIG = {
    "measure": {"spectral_mix": {"lambda": 0.2, "alpha": "9/10"}},
    "distribution": [[-0.0325, "1/2"], [0.0755, "1/2"]],
}

FORWARD_CONFIG = {
    "measure": {"spectral_mix": {"lambda": 0.2, "alpha": "9/10"}},
    "returns": [[0.0325, 0.1370], [-0.0755, -0.1712]],
}


def _write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_eval(tmp_path, capsys):
    code = main(["eval", "--config", _write(tmp_path, "c.json", EVAL_CONFIG)])
    assert code == 0
    assert float(capsys.readouterr().out.strip()) == pytest.approx(0.0647, abs=1e-9)


def test_forward(tmp_path, capsys):
    code = main(["forward", "--config", _write(tmp_path, "c.json", FORWARD_CONFIG)])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(payload["x"], [1.0, 0.0], atol=1e-8)
    assert payload["value"] == pytest.approx(0.0647, abs=1e-9)


def test_forward_with_entropic(tmp_path, capsys):
    cfg = dict(FORWARD_CONFIG, measure={"entropic": {"s": 0.01}})
    code = main(["forward", "--config", _write(tmp_path, "c.json", cfg)])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(payload["x"], [0.0, 1.0], atol=1e-3)


def test_impute_writes_result(tmp_path, capsys):
    cfg = {
        "reference": {"spectral_mix": {"lambda": 0.2, "alpha": "9/10"}},
        "family": "law_inv_cvx_measure",
        "observations": [
            {"returns": FORWARD_CONFIG["returns"], "x_star": [0.0, 1.0]}
        ],
    }
    code = main(
        [
            "impute",
            "--config",
            _write(tmp_path, "c.json", cfg),
            "--out-dir",
            str(tmp_path / "out"),
        ]
    )
    assert code == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["deviation"] == pytest.approx(0.11650637, abs=1e-6)
    stored = json.loads((tmp_path / "out" / "imputed.json").read_text())
    assert stored["function"]["law_invariant"] is True
    assert len(stored["deltas"]) == len(stored["reference_values"])


def test_impute_family_flag_overrides(tmp_path, capsys):
    cfg = {
        "reference": {"spectral_mix": {"lambda": 0.2, "alpha": "9/10"}},
        "observations": [
            {"returns": FORWARD_CONFIG["returns"], "x_star": [1.0, 0.0]}
        ],
    }
    code = main(
        [
            "impute",
            "--config",
            _write(tmp_path, "c.json", cfg),
            "--family",
            "cvx",
            "--out-dir",
            str(tmp_path / "out"),
        ]
    )
    assert code == 0
    stored = json.loads((tmp_path / "out" / "imputed.json").read_text())
    assert stored["function"]["law_invariant"] is False


def test_impute_infeasible_exit_code(tmp_path, capsys):
    cfg = {
        "reference": {"spectral_mix": {"lambda": 0.2, "alpha": "9/10"}},
        "family": "cvx_measure",
        "observations": [
            {"returns": FORWARD_CONFIG["returns"], "x_star": [1.0, 0.0]}
        ],
        "preferences": [
            {"lower": {"loss": [1.0, 5.0]}, "upper": {"loss": [0.0, 4.0]}}
        ],
    }
    code = main(["impute", "--config", _write(tmp_path, "c.json", cfg)])
    assert code == 2
    printed = json.loads(capsys.readouterr().out)
    assert printed["infeasible"] is True
    assert printed["preference_violations"][0][1] == pytest.approx(1.0, abs=1e-6)


def test_study_and_determinism(tmp_path, capsys):
    cfg = {"n_experiments": 2, "n_assets": 3, "s_grid": [1.0]}
    cfg_path = _write(tmp_path, "c.json", cfg)
    code = main(
        ["study", "--config", cfg_path, "--seed", "9", "--out-dir", str(tmp_path / "a")]
    )
    assert code == 0
    assert json.loads(capsys.readouterr().out)["failures"] == 0
    code = main(
        [
            "study",
            "--config",
            cfg_path,
            "--seed",
            "9",
            "--jobs",
            "2",
            "--out-dir",
            str(tmp_path / "b"),
        ]
    )
    assert code == 0
    capsys.readouterr()
    for name in ("table_in.csv", "table_out.csv", "ordering.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_study_missing_data_exit_code(tmp_path, capsys):
    cfg = {"mode": "historical", "n_experiments": 1}
    code = main(["study", "--config", _write(tmp_path, "c.json", cfg)])
    assert code == 3


def test_illustrate(tmp_path, capsys):
    cfg = {"s_grid": [1.0], "grid_points": 3}
    code = main(
        [
            "illustrate",
            "--config",
            _write(tmp_path, "c.json", cfg),
            "--out-dir",
            str(tmp_path / "grids"),
        ]
    )
    assert code == 0
    assert (tmp_path / "grids" / "grid_spec.csv").exists()
    assert (tmp_path / "grids" / "grid_ic_s=1.0.csv").exists()
    assert (tmp_path / "grids" / "deviations.csv").exists()


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["eval", "--config", str(path)]) == 3
    assert main(["eval", "--config", str(tmp_path / "missing.json")]) == 3
