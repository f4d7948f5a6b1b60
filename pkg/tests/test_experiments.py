import csv

import numpy as np
import pytest
from fractions import Fraction

from riskimpute import experiments as ex
from riskimpute.errors import DataMissing
from riskimpute.probspace import DiscreteDistribution, distribution_of
from riskimpute.forward import ForwardProblem, loss_of
from riskimpute import riskmeasures as rm

F = Fraction


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- run_single ----------------------------------------------------------------


def test_run_single_51_s1_zero_deviation():
    rets = ex.TWO_ASSET_RETURNS
    res = ex.run_single(rets, rets, s=1.0)
    np.testing.assert_allclose(res.x_oce, [1.0, 0.0], atol=1e-6)
    np.testing.assert_allclose(res.x_spec, [1.0, 0.0], atol=1e-8)
    assert res.u_star <= 1e-8
    np.testing.assert_allclose(res.x_ic, [1.0, 0.0], atol=1e-6)


def test_run_single_51_small_s_bends():
    rets = ex.TWO_ASSET_RETURNS
    res = ex.run_single(rets, rets, s=0.01)
    np.testing.assert_allclose(res.x_oce, [0.0, 1.0], atol=1e-6)
    assert res.u_star > 1e-3
    # rendered optimality: the observed portfolio attains the forward optimum
    in_vals = {k: v for k, v in res.evaluations.items() if k[2] == "in"}
    assert set(k[0] for k in in_vals) == {"x_Spec", "x_IC", "x_OCE"}


def test_run_single_constant_returns_all_equivalent():
    rets = np.full((6, 3), 0.01)
    res = ex.run_single(rets, rets, s=1.0)
    vals = [
        res.evaluations[(p, "rho_OCE", "in")] for p in ("x_Spec", "x_IC", "x_OCE")
    ]
    np.testing.assert_allclose(vals, vals[0], atol=1e-9)
    np.testing.assert_allclose(vals[0], -0.01, atol=1e-9)


def test_run_single_evaluations_match_reevaluation():
    rets = ex.simulate_returns([7, 0], n=3, days=60)
    res = ex.run_single(rets[:30], rets[30:], s=1.0)
    prob_in = ForwardProblem.portfolio(rets[:30])
    spec = rm.mix_to_spectral(0.2, F(9, 10))
    d = distribution_of(loss_of(prob_in, res.x_spec))
    assert res.evaluations[("x_Spec", "rho_Spec", "in")] == pytest.approx(
        rm.evaluate(spec, d), abs=1e-9
    )
    assert res.evaluations[("x_Spec", "rho_OCE", "in")] == pytest.approx(
        rm.evaluate(rm.Entropic(1.0), d), abs=1e-9
    )


def test_run_single_cross_check_agrees():
    rets = ex.simulate_returns([8, 0], n=3, days=20)
    ex.run_single(rets[:10], rets[10:], s=1.0, cross_check=True, lift_cap=30)


# -- simulated data -------------------------------------------------------------


def test_simulate_returns_deterministic():
    a = ex.simulate_returns([3, 1])
    b = ex.simulate_returns([3, 1])
    np.testing.assert_array_equal(a, b)
    assert a.shape == (60, 5)


def test_simulated_covariance_is_psd_with_unit_scaled_vols():
    rng = np.random.default_rng(42)
    mu, cov = ex.simulate_parameters(rng, n=6)
    w = np.linalg.eigvalsh(cov)
    assert w.min() >= -1e-12
    np.testing.assert_allclose(np.sqrt(np.diag(cov)), 0.1, atol=1e-9)


def test_simulated_column_means_statistical():
    rng = np.random.default_rng([11, 0])
    mu, cov = ex.simulate_parameters(rng, n=5)
    days = 100_000
    rets = ex.simulate_returns([11, 0], n=5, days=days)
    se = np.sqrt(np.diag(cov) / days)
    assert np.all(np.abs(rets.mean(axis=0) - mu) <= 3.0 * se)


def test_nearest_correlation_repairs():
    rng = np.random.default_rng(1)
    raw = rng.uniform(-1, 1, size=(5, 5))
    raw = (raw + raw.T) / 2
    np.fill_diagonal(raw, 1.0)
    c = ex.nearest_correlation(raw)
    assert np.linalg.eigvalsh(c).min() >= -1e-12
    np.testing.assert_allclose(np.diag(c), 1.0, atol=1e-12)
    np.testing.assert_allclose(c, c.T, atol=1e-14)


# -- study driver ------------------------------------------------------------------


def _tiny_cfg(tmp_path, **kw):
    base = dict(
        mode="simulate",
        n_assets=3,
        n_experiments=2,
        s_grid=(1.0,),
        seed=5,
        out_dir=str(tmp_path / "out"),
        jobs=1,
    )
    base.update(kw)
    return ex.ExperimentConfig(**base)


def test_run_study_table_shapes(tmp_path):
    cfg = _tiny_cfg(tmp_path)
    summary = ex.run_study(cfg)
    assert summary["failures"] == 0 and summary["kept"] == 2
    rows = _read_csv(tmp_path / "out" / "table_in.csv")
    assert rows[0] == ["portfolio", "measure", "s=1.0"]
    assert len(rows) == 1 + 6  # 3 portfolios x 2 measures
    rows_out = _read_csv(tmp_path / "out" / "table_out.csv")
    assert len(rows_out) == 7
    ordering = _read_csv(tmp_path / "out" / "ordering.csv")
    assert ordering[0] == ["s", "oce_in_order_fraction", "spec_in_order_fraction"]


def test_run_study_percentage_points(tmp_path):
    cfg = _tiny_cfg(tmp_path, n_experiments=1)
    summary = ex.run_study(cfg)
    rets = ex.simulate_returns([5, 0], n=3, days=60)
    res = ex.run_single(rets[:30], rets[30:], s=1.0)
    want = 100.0 * res.evaluations[("x_Spec", "rho_OCE", "in")]
    assert summary["averages"][("x_Spec", "rho_OCE", "in", 1.0)] == pytest.approx(
        want, abs=1e-9
    )


def test_run_study_deterministic_across_jobs(tmp_path):
    cfg1 = _tiny_cfg(tmp_path / "a", out_dir=str(tmp_path / "a"))
    cfg2 = _tiny_cfg(tmp_path / "b", out_dir=str(tmp_path / "b"), jobs=2)
    ex.run_study(cfg1)
    ex.run_study(cfg2)
    for name in ("table_in.csv", "table_out.csv", "ordering.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_study_historical_smoke(tmp_path):
    cfg = ex.ExperimentConfig(
        mode="historical",
        data_path=str(ex.bundled_sample_path()),
        n_assets=5,
        n_experiments=10,
        s_grid=(1.0,),
        seed=3,
        out_dir=str(tmp_path / "hist"),
    )
    summary = ex.run_study(cfg)
    assert summary["failures"] == 0
    assert (tmp_path / "hist" / "table_in.csv").exists()


def test_run_study_historical_needs_data(tmp_path):
    cfg = ex.ExperimentConfig(mode="historical", out_dir=str(tmp_path))
    with pytest.raises(DataMissing):
        ex.run_study(cfg)


def test_read_returns_csv_validation(tmp_path):
    with pytest.raises(DataMissing):
        ex.read_returns_csv(tmp_path / "absent.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("time,a\n2020-01-01,0.01\n")
    with pytest.raises(DataMissing):
        ex.read_returns_csv(bad)
    good = tmp_path / "good.csv"
    good.write_text("date,a,b\n2020-01-01,0.01,-0.02\n2020-01-02,0.0,0.03\n")
    names, data = ex.read_returns_csv(good)
    assert names == ["a", "b"]
    np.testing.assert_allclose(data, [[0.01, -0.02], [0.0, 0.03]])


# -- illustration ---------------------------------------------------------------------


def test_illustrate_grids(tmp_path):
    cfg = ex.ExperimentConfig(
        mode="illustrate", s_grid=(0.01, 1.0), grid_points=5, out_dir=str(tmp_path)
    )
    ex.illustrate(cfg)
    rows = _read_csv(tmp_path / "grid_spec.csv")
    assert rows[0] == ["z1", "z2", "value"]
    assert len(rows) == 1 + 25
    table = {(r[0], r[1]): float(r[2]) for r in rows[1:]}
    assert table[("0.0", "0.0")] == pytest.approx(0.0, abs=1e-12)
    # constant losses: value equals the constant (normalization + translation)
    assert table[("0.125", "0.125")] == pytest.approx(0.125, abs=1e-12)
    assert table[("-0.25", "-0.25")] == pytest.approx(-0.25, abs=1e-12)

    dev = _read_csv(tmp_path / "deviations.csv")
    assert dev[0] == ["s", "u_star", "max_vertex_deviation"]
    for row in dev[1:]:
        assert float(row[1]) == pytest.approx(float(row[2]), abs=1e-8)

    # s=1 observes the spectral-optimal portfolio: zero deviation, surfaces agree
    ic1 = {(r[0], r[1]): float(r[2]) for r in _read_csv(tmp_path / "grid_ic_s=1.0.csv")[1:]}
    for key, v_spec in table.items():
        assert ic1[key] == pytest.approx(v_spec, abs=1e-7)

    # s=0.01 observes the other vertex: the surface stays below the coherent
    # reference and strictly bends down somewhere
    ic = {(r[0], r[1]): float(r[2]) for r in _read_csv(tmp_path / "grid_ic_s=0.01.csv")[1:]}
    gaps = []
    for key, v_spec in table.items():
        assert ic[key] <= v_spec + 1e-7
        gaps.append(ic[key] - v_spec)
    assert min(gaps) < -0.01


def test_run_study_typed_tables(tmp_path):
    cfg = _tiny_cfg(tmp_path)
    summary = ex.run_study(cfg)
    tables = summary["tables"]
    assert len(tables) == 4  # {in, out} x {rho_OCE, rho_Spec}
    table = next(t for t in tables if t.sample == "in" and t.measure == "rho_OCE")
    assert len(table.row("x_IC")) == len(cfg.s_grid)
    assert table.cells[("x_Spec", 1.0)] == pytest.approx(
        summary["averages"][("x_Spec", "rho_OCE", "in", 1.0)]
    )
