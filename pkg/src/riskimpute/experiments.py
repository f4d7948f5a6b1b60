"""Portfolio-selection studies: two-asset illustration, simulated and historical runs.

The pipeline per window: solve the forward problem under the two-step spectral
reference, solve it under the entropic ground truth, impute a law-invariant
risk measure from the entropic portfolio, re-solve under the imputed measure,
and evaluate all three portfolios in- and out-of-sample under both the
entropic and the spectral measure.  Table cells are averages in percentage
points.  Everything is deterministic under a fixed seed, including parallel
runs: each experiment draws from its own (seed, index) stream.
"""

from __future__ import annotations

import concurrent.futures
import csv
import importlib.resources
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from . import dualpwl as dp
from . import inverse as iv
from . import riskmeasures as rm
from .errors import DataMissing, RiskImputeError
from .forward import ForwardProblem, loss_of, solve_forward, solve_forward_entropic
from .probspace import DiscreteDistribution, distribution_of

__all__ = [
    "ExperimentConfig",
    "SingleRunResult",
    "ResultTable",
    "TWO_ASSET_RETURNS",
    "run_single",
    "simulate_returns",
    "nearest_correlation",
    "run_study",
    "illustrate",
    "read_returns_csv",
    "bundled_sample_path",
]

# Two-asset, two-outcome returns of the illustration study.
TWO_ASSET_RETURNS = np.array([[0.0325, 0.1370], [-0.0755, -0.1712]])

PORTFOLIOS = ("x_Spec", "x_IC", "x_OCE")
MEASURES = ("rho_OCE", "rho_Spec")
SAMPLES = ("in", "out")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "simulate"  # illustrate | simulate | historical
    n_assets: int = 5
    in_window: int = 30
    out_window: int = 30
    n_experiments: int = 100
    s_grid: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 50.0, 100.0)
    lam: float = 0.2
    alpha: Fraction = Fraction(9, 10)
    seed: int = 0
    data_path: str | None = None
    lift_cap: int = 5040
    cross_check: bool = False
    grid_points: int = 101
    out_dir: str = "out"
    jobs: int = 1

    def __post_init__(self):
        if self.in_window <= 0 or self.out_window <= 0:
            raise ValueError("window lengths must be positive")
        if any(s <= 0 for s in self.s_grid):
            raise ValueError("entropic parameters must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("spectral mixing weight must lie in [0, 1]")
        object.__setattr__(self, "alpha", rm.as_ratio(self.alpha))
        object.__setattr__(self, "s_grid", tuple(float(s) for s in self.s_grid))


@dataclass(frozen=True)
class SingleRunResult:
    s: float
    x_spec: np.ndarray
    x_oce: np.ndarray
    x_ic: np.ndarray
    u_star: float
    function: dp.DualPwlRiskFunction
    evaluations: dict  # (portfolio, measure, sample) -> raw risk value


@dataclass(frozen=True)
class ResultTable:
    """Averaged study block: portfolio rows x s-grid columns, in percentage points."""

    sample: str                       # "in" | "out"
    measure: str                      # "rho_OCE" | "rho_Spec"
    s_grid: tuple[float, ...]
    cells: dict                       # (portfolio, s) -> average in p.p.

    def __post_init__(self):
        if self.sample not in SAMPLES or self.measure not in MEASURES:
            raise ValueError("unknown sample flag or measure name")
        if len(self.cells) != len(PORTFOLIOS) * len(self.s_grid):
            raise ValueError("a table needs one cell per portfolio and s value")
        if not all(np.isfinite(v) for v in self.cells.values()):
            raise ValueError("table cells must be finite")

    def row(self, portfolio: str) -> list[float]:
        return [self.cells[(portfolio, s)] for s in self.s_grid]


def run_single(
    in_returns: np.ndarray,
    out_returns: np.ndarray,
    s: float,
    lam: float = 0.2,
    alpha=Fraction(9, 10),
    lift_cap: int = 5040,
    cross_check: bool = False,
) -> SingleRunResult:
    """One window of the three-step pipeline; returns portfolios and evaluations."""
    spec_measure = rm.mix_to_spectral(lam, alpha)
    entropic = rm.Entropic(s)
    problem_in = ForwardProblem.portfolio(in_returns)
    problem_out = ForwardProblem.portfolio(out_returns)

    x_spec = solve_forward(problem_in, spec_measure).x
    x_oce = solve_forward_entropic(problem_in, s).x

    inst = iv.InverseInstance(
        ((problem_in, x_oce),), spec_measure, family=iv.Family.LAW_INV_CVX_MEASURE
    )
    imputed = iv.solve_reduced(inst)
    if cross_check:
        lcm = int(np.lcm.reduce([int(p.denominator) for p in problem_in.probs]))
        if lcm <= lift_cap:
            lifted = iv.solve_law_invariant(inst)
            if abs(lifted.deviation - imputed.deviation) > 1e-6:
                raise RiskImputeError(
                    f"reduced/lifted deviation mismatch: {imputed.deviation} vs {lifted.deviation}"
                )
    x_ic = solve_forward(problem_in, imputed.function).x

    evaluations = {}
    for name, x in zip(PORTFOLIOS, (x_spec, x_ic, x_oce)):
        for sample, problem in (("in", problem_in), ("out", problem_out)):
            d = distribution_of(loss_of(problem, x))
            evaluations[(name, "rho_OCE", sample)] = rm.evaluate(entropic, d)
            evaluations[(name, "rho_Spec", sample)] = rm.evaluate(spec_measure, d)
    return SingleRunResult(s, x_spec, x_oce, x_ic, imputed.deviation, imputed.function, evaluations)


# -- simulated data --------------------------------------------------------------


def nearest_correlation(target: np.ndarray, iterations: int = 200, floor: float = 1e-10) -> np.ndarray:
    """Closest correlation matrix by alternating PSD/unit-diagonal projections.

    The uniform off-diagonal targets need not be consistent with any
    distribution, so the draw is repaired rather than used as-is.
    """
    Y = np.array(target, dtype=float)
    for _ in range(iterations):
        w, V = np.linalg.eigh((Y + Y.T) / 2.0)
        Y = (V * np.maximum(w, 0.0)) @ V.T
        np.fill_diagonal(Y, 1.0)
    w, V = np.linalg.eigh((Y + Y.T) / 2.0)
    Y = (V * np.maximum(w, floor)) @ V.T
    d = np.sqrt(np.diag(Y))
    Y = Y / np.outer(d, d)
    np.fill_diagonal(Y, 1.0)
    return (Y + Y.T) / 2.0


def simulate_parameters(rng, n: int = 5, sigma: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance drawn for one experiment (consumes the rng)."""
    mu = sigma * rng.standard_normal(n)
    raw = rng.uniform(-1.0, 1.0, size=(n, n))
    raw = (raw + raw.T) / 2.0
    np.fill_diagonal(raw, 1.0)
    cov = (sigma**2) * nearest_correlation(raw)
    return mu, cov


def simulate_returns(seed, n: int = 5, days: int = 60, sigma: float = 0.1) -> np.ndarray:
    """Draw daily returns: means from 0.1 * standard normal, equal volatilities,
    and a random correlation matrix repaired to the nearest valid one."""
    rng = np.random.default_rng(seed)
    mu, cov = simulate_parameters(rng, n, sigma)
    chol = np.linalg.cholesky(cov + 1e-12 * np.eye(n))
    return mu + rng.standard_normal((days, n)) @ chol.T


# -- historical data ---------------------------------------------------------------


def read_returns_csv(path) -> tuple[list[str], np.ndarray]:
    """Read `date,asset1..assetN` rows of simple decimal returns."""
    path = Path(path)
    if not path.exists():
        raise DataMissing(f"returns file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "date" or len(header) < 2:
            raise DataMissing("expected a header row 'date,asset1..assetN'")
        rows = []
        for row in reader:
            if not row:
                continue
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataMissing(f"non-numeric return in row {row!r}") from exc
    if not rows:
        raise DataMissing("returns file has no data rows")
    data = np.asarray(rows, dtype=float)
    if data.shape[1] != len(header) - 1:
        raise DataMissing("ragged returns file")
    return header[1:], data


def bundled_sample_path() -> Path:
    """Small deterministic sample shipped for smoke runs of the historical mode."""
    return Path(importlib.resources.files("riskimpute").joinpath("data/sample_returns.csv"))


# -- study driver -------------------------------------------------------------------


def _experiment_window(cfg: ExperimentConfig, index: int, data: np.ndarray | None):
    span = cfg.in_window + cfg.out_window
    if cfg.mode == "simulate":
        returns = simulate_returns([cfg.seed, index], n=cfg.n_assets, days=span)
    else:
        rng = np.random.default_rng([cfg.seed, index])
        if data.shape[0] < span:
            raise DataMissing(f"need at least {span} days of returns, have {data.shape[0]}")
        start = int(rng.integers(0, data.shape[0] - span + 1))
        n_avail = data.shape[1]
        k = min(cfg.n_assets, n_avail)
        assets = np.sort(rng.choice(n_avail, size=k, replace=False))
        returns = data[start : start + span, assets]
    return returns[: cfg.in_window], returns[cfg.in_window : span]


def _study_worker(args):
    cfg, index, data = args
    try:
        in_ret, out_ret = _experiment_window(cfg, index, data)
        out = {}
        for s in cfg.s_grid:
            res = run_single(
                in_ret,
                out_ret,
                s,
                lam=cfg.lam,
                alpha=cfg.alpha,
                lift_cap=cfg.lift_cap,
                cross_check=cfg.cross_check,
            )
            out[s] = res.evaluations
        return index, out, None
    except RiskImputeError as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


def run_study(cfg: ExperimentConfig) -> dict:
    """Run the configured experiments and write averaged tables as CSV files.

    Returns a summary dict (also written) with the in-sample ordering
    fractions and the number of excluded windows.
    """
    data = None
    if cfg.mode == "historical":
        if cfg.data_path is None:
            raise DataMissing("historical mode needs a returns CSV (data_path)")
        _, data = read_returns_csv(cfg.data_path)
    elif cfg.mode != "simulate":
        raise ValueError(f"run_study handles simulate/historical, not {cfg.mode!r}")

    tasks = [(cfg, i, data) for i in range(cfg.n_experiments)]
    results: list[tuple[int, dict | None, str | None]] = []
    if cfg.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_study_worker, tasks))
    else:
        results = [_study_worker(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    failures = [(i, msg) for i, _, msg in results if msg is not None]
    kept = [(i, out) for i, out, msg in results if msg is None]

    sums = {
        (p, m, smp, s): 0.0 for p in PORTFOLIOS for m in MEASURES for smp in SAMPLES for s in cfg.s_grid
    }
    order_counts = {("rho_OCE", s): 0 for s in cfg.s_grid}
    order_counts.update({("rho_Spec", s): 0 for s in cfg.s_grid})
    for _, out in kept:
        for s in cfg.s_grid:
            ev = out[s]
            for p in PORTFOLIOS:
                for m in MEASURES:
                    for smp in SAMPLES:
                        sums[(p, m, smp, s)] += ev[(p, m, smp)]
            if (
                ev[("x_OCE", "rho_OCE", "in")]
                <= ev[("x_IC", "rho_OCE", "in")] + 1e-12
                <= ev[("x_Spec", "rho_OCE", "in")] + 2e-12
            ):
                order_counts[("rho_OCE", s)] += 1
            if (
                ev[("x_Spec", "rho_Spec", "in")]
                <= ev[("x_IC", "rho_Spec", "in")] + 1e-12
                <= ev[("x_OCE", "rho_Spec", "in")] + 2e-12
            ):
                order_counts[("rho_Spec", s)] += 1

    n_kept = len(kept)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    averages = {}
    for smp, fname in (("in", "table_in.csv"), ("out", "table_out.csv")):
        with open(out_dir / fname, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["portfolio", "measure"] + [f"s={_fmt(s)}" for s in cfg.s_grid])
            for m in MEASURES:
                for p in PORTFOLIOS:
                    cells = []
                    for s in cfg.s_grid:
                        mean_pp = 100.0 * sums[(p, m, smp, s)] / n_kept if n_kept else float("nan")
                        averages[(p, m, smp, s)] = mean_pp
                        cells.append(_fmt(mean_pp))
                    writer.writerow([p, m] + cells)

    with open(out_dir / "ordering.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "oce_in_order_fraction", "spec_in_order_fraction"])
        for s in cfg.s_grid:
            writer.writerow(
                [
                    _fmt(s),
                    _fmt(order_counts[("rho_OCE", s)] / n_kept if n_kept else float("nan")),
                    _fmt(order_counts[("rho_Spec", s)] / n_kept if n_kept else float("nan")),
                ]
            )

    summary = {
        "mode": cfg.mode,
        "experiments": cfg.n_experiments,
        "kept": n_kept,
        "failures": len(failures),
    }
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        for k, v in summary.items():
            writer.writerow([k, v])
        for i, msg in failures:
            writer.writerow([f"failure_{i}", msg])

    summary["averages"] = averages
    summary["order_counts"] = order_counts
    if n_kept:
        summary["tables"] = tuple(
            ResultTable(
                smp,
                m,
                cfg.s_grid,
                {(p, s): averages[(p, m, smp, s)] for p in PORTFOLIOS for s in cfg.s_grid},
            )
            for smp in SAMPLES
            for m in MEASURES
        )
    return summary


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


# -- two-asset illustration -----------------------------------------------------------


def illustrate(cfg: ExperimentConfig, returns: np.ndarray | None = None) -> dict:
    """Two-asset study: impute from each entropic portfolio and export value grids.

    Writes one (z1, z2, value) CSV per measure over the loss square
    [-0.25, 0.25]^2 and a per-s deviation summary.
    """
    returns = TWO_ASSET_RETURNS if returns is None else np.asarray(returns, dtype=float)
    if returns.shape != (2, 2):
        raise ValueError("the illustration uses two assets over two outcomes")
    spec_measure = rm.mix_to_spectral(cfg.lam, cfg.alpha)
    problem = ForwardProblem.portfolio(returns)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    grid = np.linspace(-0.25, 0.25, cfg.grid_points)
    half = (Fraction(1, 2), Fraction(1, 2))

    with open(out_dir / "grid_spec.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["z1", "z2", "value"])
        for z1 in grid:
            for z2 in grid:
                d = DiscreteDistribution.from_atoms([z1, z2], half)
                v = rm.spectral_closed_value(spec_measure, d)
                writer.writerow([_fmt(float(z1)), _fmt(float(z2)), _fmt(v)])

    deviations = []
    for s in cfg.s_grid:
        x_oce = solve_forward_entropic(problem, s).x
        inst = iv.InverseInstance(
            ((problem, x_oce),), spec_measure, family=iv.Family.LAW_INV_CVX_MEASURE
        )
        res = iv.solve_reduced(inst)
        max_dev = float(np.max(np.abs(res.deltas - res.reference_values)))
        deviations.append((s, res.deviation, max_dev))
        evaluator = dp.CachedEvaluator(res.function, half)
        points = [np.array([z1, z2]) for z1 in grid for z2 in grid]
        values = evaluator.values(points)
        with open(out_dir / f"grid_ic_s={_fmt(s)}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["z1", "z2", "value"])
            for point, v in zip(points, values):
                writer.writerow([_fmt(float(point[0])), _fmt(float(point[1])), _fmt(float(v))])

    with open(out_dir / "deviations.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "u_star", "max_vertex_deviation"])
        for s, u, dev in deviations:
            writer.writerow([_fmt(s), _fmt(u), _fmt(dev)])
    return {"deviations": deviations}
