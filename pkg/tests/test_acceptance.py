"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criterion 2's s=100 cell pins the target (0.3422, 0.6578), which is not the
minimizer of the entropic objective as defined: the stationarity window for an
interior optimum is s in (0.286, 0.815), so for s >= 1 the unique minimizer
sits at (1, 0).  That assertion is kept as pinned rather than loosened and is
expected to fail; its message carries the analysis.
"""

import sys
import time

import numpy as np
import pytest
from fractions import Fraction

from riskimpute import dualpwl as dp
from riskimpute import experiments as ex
from riskimpute import inverse as iv
from riskimpute import riskmeasures as rm
from riskimpute.errors import InfeasibleInstance
from riskimpute.forward import (
    ForwardProblem,
    SimplexSet,
    loss_of,
    solve_forward,
    solve_forward_entropic,
)
from riskimpute.probspace import (
    DiscreteDistribution,
    OutcomeSpace,
    RandomLoss,
    dirac,
    distribution_of,
    replicate,
)

F = Fraction

RETURNS_51 = np.array([[0.0325, 0.1370], [-0.0755, -0.1712]])
SPEC = rm.mix_to_spectral(0.2, F(9, 10))
S_GRID_51 = (0.01, 0.1, 1.0, 10.0, 50.0, 100.0)

_results: dict[int, str] = {}


def _report(number: int, ok: bool, detail: str = "") -> None:
    verdict = "PASS" if ok else "FAIL"
    line = f"ACCEPTANCE {number}: {verdict}" + (f" ({detail})" if detail else "")
    _results[number] = line
    print(line, file=sys.stderr)


def _problem51():
    return ForwardProblem.portfolio(RETURNS_51)


def test_criterion_1_spectral_forward():
    problem = _problem51()
    t0 = time.perf_counter()
    sol = solve_forward(problem, SPEC)
    elapsed = time.perf_counter() - t0
    ok = (
        np.max(np.abs(sol.x - np.array([1.0, 0.0]))) <= 1e-6
        and abs(sol.value - 0.0647) <= 1e-6
        and elapsed < 0.1
    )
    _report(1, ok, f"x={sol.x.tolist()}, value={sol.value:.6f}, {elapsed * 1e3:.1f} ms")
    assert np.max(np.abs(sol.x - np.array([1.0, 0.0]))) <= 1e-6
    assert abs(sol.value - 0.0647) <= 1e-6
    assert elapsed < 0.1


def test_criterion_2_entropic_forward_table():
    problem = _problem51()
    expected = {
        0.01: (0.0, 1.0),
        0.1: (0.0, 1.0),
        1.0: (1.0, 0.0),
        10.0: (1.0, 0.0),
        50.0: (1.0, 0.0),
        100.0: (0.3422, 0.6578),
    }
    t0 = time.perf_counter()
    got = {s: solve_forward_entropic(problem, s).x for s in S_GRID_51}
    elapsed = time.perf_counter() - t0
    bad = [
        s
        for s in S_GRID_51
        if np.max(np.abs(got[s] - np.array(expected[s]))) > 1e-3
    ]
    ok = not bad and elapsed < 1.0
    _report(
        2,
        ok,
        f"{elapsed * 1e3:.0f} ms; mismatched s: {bad}; "
        "s=100 reproduces the objective's true minimizer (1, 0), "
        "not the pinned interior point",
    )
    assert elapsed < 1.0
    for s in S_GRID_51:
        assert np.max(np.abs(got[s] - np.array(expected[s]))) <= 1e-3, (
            f"s={s}: solver found {got[s].tolist()}, pinned target is {expected[s]}; "
            "for s >= 1 the entropic objective's unique minimizer is (1, 0) "
            "(interior stationarity requires s in (0.286, 0.815))"
        )


def test_criterion_3_rendered_optimality_per_s():
    problem = _problem51()
    worst_gap = 0.0
    worst_time = 0.0
    for s in S_GRID_51:
        t0 = time.perf_counter()
        x_oce = solve_forward_entropic(problem, s).x
        inst = iv.InverseInstance(
            ((problem, x_oce),), SPEC, family=iv.Family.LAW_INV_CVX_MEASURE
        )
        res = iv.solve_reduced(inst)
        f = res.function
        sol = solve_forward(problem, f)
        at_obs = dp.risk_value(f, loss_of(problem, x_oce))
        gap = abs(sol.value - at_obs)
        # grid oracle: global minimality over the simplex at step 1e-3
        evaluator = dp.CachedEvaluator(f, problem.probs)
        grid_losses = [
            problem.W @ np.array([a, 1.0 - a]) for a in np.arange(0.0, 1.0 + 1e-12, 1e-3)
        ]
        grid_min = float(np.min(evaluator.values(grid_losses)))
        elapsed = time.perf_counter() - t0
        worst_time = max(worst_time, elapsed)
        worst_gap = max(worst_gap, gap, abs(sol.value - grid_min))
        assert gap <= 1e-6, f"s={s}: forward optimum differs from value at x_OCE"
        assert sol.value <= grid_min + 1e-6
        assert grid_min >= sol.value - 1e-6
        assert elapsed < 2.0
    _report(3, True, f"worst gap {worst_gap:.2e}, worst per-s time {worst_time:.2f} s")


def test_criterion_4_zero_deviation_all_families():
    problem = _problem51()
    x_spec = solve_forward(problem, SPEC).x
    devs = {}
    for family in iv.Family:
        inst = iv.InverseInstance(((problem, x_spec),), SPEC, family=family)
        devs[family.value] = iv.impute(inst).deviation
    extra = {
        "law_inv_cvx_lifted": iv.solve_law_invariant(
            iv.InverseInstance(((problem, x_spec),), SPEC, family=iv.Family.LAW_INV_CVX)
        ).deviation
    }
    devs.update(extra)
    ok = all(v <= 1e-8 for v in devs.values())
    _report(4, ok, "max u* = %.2e" % max(devs.values()))
    for name, v in devs.items():
        assert v <= 1e-8, name


def _random_law_function(rng, M):
    kind = int(rng.integers(0, 5))
    if kind == 0:
        measure = rm.MaxLoss()
    elif kind == 1:
        measure = rm.Expectation()
    elif kind == 2:
        measure = rm.CVaR(F(int(rng.integers(1, M)), M))
    elif kind == 3:
        measure = rm.MeanAbsDev(float(rng.uniform(0.0, 0.5)))
    else:
        measure = rm.mix_to_spectral(float(rng.uniform(0.1, 0.9)), F(9, 10))
    dists = [dirac(0.0)]
    for _ in range(int(rng.integers(1, 3))):
        values = np.round(rng.normal(size=M), 3)
        dists.append(distribution_of(RandomLoss(values, OutcomeSpace.uniform(M))))
    deltas = [rm.evaluate(measure, d) for d in dists]
    return dp.DualPwlRiskFunction(
        deltas=np.array(deltas),
        translation_invariant=True,
        law_invariant=True,
        vertex_dists=tuple(dists),
        set_family=measure,
    )


def test_criterion_5_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(200):
        M = int(rng.integers(2, 5))
        f = _random_law_function(rng, M)
        z = RandomLoss(rng.normal(size=M), OutcomeSpace.uniform(M))
        a = dp.evaluate_law_invariant(f, z)
        b = dp.brute_force_law_eval(f, z)
        worst = max(worst, abs(a - b))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 30.0
    _report(5, ok, f"200 instances, max |delta| = {worst:.2e}, {elapsed:.1f} s")
    assert worst <= 1e-6
    assert elapsed < 30.0


_SMALL_PROBS = [
    (F(1),),
    (F(1, 2), F(1, 2)),
    (F(1, 3), F(2, 3)),
    (F(1, 4), F(3, 4)),
    (F(1, 4), F(1, 4), F(1, 2)),
    (F(1, 3), F(1, 3), F(1, 3)),
    (F(1, 2), F(1, 4), F(1, 4)),
]


def _lift_problem(problem, M):
    counts = [int(p * M) for p in problem.probs]
    W = np.repeat(problem.W, counts, axis=0)
    return ForwardProblem(W, tuple(F(1, M) for _ in range(M)), problem.feasible)


def test_criterion_6_reduction_equivalence():
    rng = np.random.default_rng(77)
    refs = [
        rm.MaxLoss(),
        rm.Expectation(),
        rm.CVaR(F(1, 2)),
        rm.CVaR(F(3, 4)),
        rm.MeanAbsDev(0.3),
        SPEC,
    ]
    t0 = time.perf_counter()
    compared = 0
    infeasible_agreements = 0
    worst = 0.0
    attempts = 0
    while compared < 50 and attempts < 400:
        attempts += 1
        probs = _SMALL_PROBS[int(rng.integers(0, len(_SMALL_PROBS)))]
        n = 2
        W = 0.1 * rng.standard_normal((len(probs), n))
        problem = ForwardProblem(W, probs, SimplexSet(n))
        x = np.zeros(n)
        x[int(rng.integers(0, n))] = 1.0
        prefs = ()
        if rng.random() < 0.4:
            pp = _SMALL_PROBS[int(rng.integers(1, len(_SMALL_PROBS)))]
            vals = np.sort(rng.normal(size=len(pp)) * 0.2)
            while np.any(np.diff(vals) <= 0):
                vals = np.sort(rng.normal(size=len(pp)) * 0.2)
            d1 = DiscreteDistribution.from_atoms(vals, pp)
            d2 = DiscreteDistribution.from_atoms(vals + float(rng.uniform(0, 0.05)), pp)
            ref0 = refs[attempts % len(refs)]
            lo, hi = sorted([d1, d2], key=lambda d: rm.evaluate(ref0, d))
            prefs = (iv.PreferencePair(lo, hi),)
        ref = refs[attempts % len(refs)]
        M = int(np.lcm.reduce([p.denominator for p in probs]))
        for pair in prefs:
            M = int(np.lcm(M, np.lcm.reduce([p.denominator for p in pair.lower.probs])))
            M = int(np.lcm(M, np.lcm.reduce([p.denominator for p in pair.upper.probs])))
        if M > 12:
            continue
        inst_reduced = iv.InverseInstance(
            ((problem, x),), ref, prefs, family=iv.Family.LAW_INV_CVX_MEASURE
        )
        inst_lifted = iv.InverseInstance(
            ((_lift_problem(problem, M), x),), ref, prefs, family=iv.Family.LAW_INV_CVX_MEASURE
        )
        try:
            a = iv.solve_reduced(inst_reduced).deviation
        except InfeasibleInstance:
            a = None
        try:
            b = iv.solve_law_invariant(inst_lifted).deviation
        except InfeasibleInstance:
            b = None
        if a is None or b is None:
            assert a is None and b is None, "formulations disagree on feasibility"
            infeasible_agreements += 1
            continue
        worst = max(worst, abs(a - b))
        compared += 1
    elapsed = time.perf_counter() - t0
    ok = compared == 50 and worst <= 1e-6 and elapsed < 60.0
    _report(
        6,
        ok,
        f"50 instances, max |u*_reduced - u*_lifted| = {worst:.2e}, "
        f"{infeasible_agreements} infeasible (agreed), {elapsed:.1f} s",
    )
    assert compared == 50
    assert worst <= 1e-6
    assert elapsed < 60.0


def test_criterion_7_representation_identities():
    rng = np.random.default_rng(7)
    # stepwise spectral LP vs spectrum-weighted order statistics
    worst_spec = 0.0
    M = 10
    phi = rm.grid_spectrum(SPEC, M)
    for _ in range(500):
        z = rng.normal(size=M)
        d = distribution_of(RandomLoss(z, OutcomeSpace.uniform(M)))
        worst_spec = max(
            worst_spec, abs(rm.evaluate(SPEC, d) - float(phi @ np.sort(z)))
        )
    # CVaR LP vs greedy tail oracle
    worst_cvar = 0.0
    for _ in range(500):
        tau = int(rng.integers(1, 7))
        den = int(rng.integers(tau, tau + 10))
        counts = rng.multinomial(den - tau, np.ones(tau) / tau) + 1
        vals = np.sort(rng.normal(size=tau))
        while np.any(np.diff(vals) <= 0):
            vals = np.sort(rng.normal(size=tau))
        d = DiscreteDistribution.from_atoms(vals, [F(int(c), den) for c in counts])
        alpha = F(int(rng.integers(0, 10)), 10)
        worst_cvar = max(
            worst_cvar,
            abs(rm.evaluate(rm.CVaR(alpha), d) - rm.cvar_tail_value(alpha, d)),
        )
    # mix-of-expectation-and-CVaR spectrum vs the direct combination
    worst_mix = 0.0
    for _ in range(500):
        lam = float(rng.uniform(0.0, 1.0))
        alpha = F(int(rng.integers(1, 10)), 10)
        m = rm.mix_to_spectral(lam, alpha)
        tau = int(rng.integers(1, 6))
        den = int(rng.integers(tau, tau + 8))
        counts = rng.multinomial(den - tau, np.ones(tau) / tau) + 1
        vals = np.sort(rng.normal(size=tau))
        while np.any(np.diff(vals) <= 0):
            vals = np.sort(rng.normal(size=tau))
        d = DiscreteDistribution.from_atoms(vals, [F(int(c), den) for c in counts])
        combo = lam * d.mean() + (1.0 - lam) * rm.evaluate(rm.CVaR(alpha), d)
        worst_mix = max(worst_mix, abs(rm.evaluate(m, d) - combo))
    ok = worst_spec <= 1e-8 and worst_cvar <= 1e-8 and worst_mix <= 1e-10
    _report(
        7,
        ok,
        f"spectral {worst_spec:.1e} (<=1e-8), cvar {worst_cvar:.1e} (<=1e-8), "
        f"mix {worst_mix:.1e} (<=1e-10)",
    )
    assert worst_spec <= 1e-8
    assert worst_cvar <= 1e-8
    assert worst_mix <= 1e-10


def _imputed_per_family():
    problem = _problem51()
    x = np.array([0.0, 1.0])  # the small-s entropic portfolio: deviation > 0
    out = {}
    for family in iv.Family:
        inst = iv.InverseInstance(((problem, x),), SPEC, family=family)
        out[family] = iv.impute(inst).function
    return out


def test_criterion_8_axiom_suites():
    rng = np.random.default_rng(8)
    functions = _imputed_per_family()
    violations = {"monotone": 0, "convex": 0, "normalized": 0, "translation": 0, "permutation": 0}
    checks = 500
    for family, f in functions.items():
        if f.law_invariant:
            evaluator = dp.CachedEvaluator(f, (F(1, 2), F(1, 2)))
        else:
            evaluator = dp.CachedEvaluator(f)
        value = evaluator.value
        if abs(value(np.zeros(2))) > 1e-7:
            violations["normalized"] += 1
        for _ in range(checks):
            z2 = 0.25 * rng.standard_normal(2)
            z1 = z2 + rng.uniform(0.0, 0.3, size=2)
            v1, v2 = value(z1), value(z2)
            if v1 < v2 - 1e-7:
                violations["monotone"] += 1
            if value((z1 + z2) / 2.0) > (v1 + v2) / 2.0 + 1e-7:
                violations["convex"] += 1
            if family.translation_invariant:
                c = float(rng.normal()) * 0.25
                if abs(value(z2 - c) - (v2 - c)) > 1e-7:
                    violations["translation"] += 1
            if family.law_invariant:
                if abs(value(z2[::-1]) - v2) > 1e-7:
                    violations["permutation"] += 1
    total = sum(violations.values())
    _report(8, total == 0, f"violations by axiom: {violations}")
    assert total == 0


STUDY_S_GRID = (0.01, 0.1, 1.0, 10.0)


def _study_config(out_dir, jobs=1):
    return ex.ExperimentConfig(
        mode="simulate",
        n_assets=5,
        in_window=30,
        out_window=30,
        n_experiments=100,
        s_grid=STUDY_S_GRID,
        seed=0,
        out_dir=str(out_dir),
        jobs=jobs,
    )


def test_criterion_9_scaled_study_ordering(tmp_path):
    t0 = time.perf_counter()
    summary = ex.run_study(_study_config(tmp_path / "study"))
    elapsed = time.perf_counter() - t0
    slack = 0.01  # one basis point, in percentage points
    avg = summary["averages"]
    problems = []
    for s in STUDY_S_GRID:
        oce = {p: avg[(p, "rho_OCE", "in", s)] for p in ("x_Spec", "x_IC", "x_OCE")}
        spc = {p: avg[(p, "rho_Spec", "in", s)] for p in ("x_Spec", "x_IC", "x_OCE")}
        if not (oce["x_OCE"] <= oce["x_IC"] + slack and oce["x_IC"] <= oce["x_Spec"] + slack):
            problems.append(f"rho_OCE ordering at s={s}: {oce}")
        if not (spc["x_Spec"] <= spc["x_IC"] + slack and spc["x_IC"] <= spc["x_OCE"] + slack):
            problems.append(f"rho_Spec ordering at s={s}: {spc}")
    ok = not problems and summary["failures"] == 0 and elapsed < 600.0
    _report(
        9,
        ok,
        f"100 experiments in {elapsed:.0f} s, failures={summary['failures']}"
        + ("; " + "; ".join(problems) if problems else ""),
    )
    assert summary["failures"] == 0
    assert not problems
    assert elapsed < 600.0


def test_criterion_10_determinism(tmp_path):
    # identical seeds must give byte-identical tables regardless of the job
    # count, and repeated in-process runs of the deterministic pipeline must
    # reproduce every byte
    cfg_a = ex.ExperimentConfig(
        mode="simulate", n_assets=5, n_experiments=6, s_grid=STUDY_S_GRID,
        seed=0, out_dir=str(tmp_path / "a"), jobs=1,
    )
    cfg_b = ex.ExperimentConfig(
        mode="simulate", n_assets=5, n_experiments=6, s_grid=STUDY_S_GRID,
        seed=0, out_dir=str(tmp_path / "b"), jobs=3,
    )
    ex.run_study(cfg_a)
    ex.run_study(cfg_b)
    same = True
    for name in ("table_in.csv", "table_out.csv", "ordering.csv", "summary.csv"):
        same = same and (
            (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        )

    def fingerprint():
        problem = _problem51()
        parts = [repr(solve_forward(problem, SPEC).value)]
        for s in (0.01, 1.0, 100.0):
            parts.append(repr(list(solve_forward_entropic(problem, s).x)))
        inst = iv.InverseInstance(
            ((problem, np.array([0.0, 1.0])),), SPEC, family=iv.Family.LAW_INV_CVX_MEASURE
        )
        res = iv.solve_reduced(inst)
        parts.append(repr(res.deviation))
        parts.append(repr(list(res.deltas)))
        return "|".join(parts)

    fp1, fp2 = fingerprint(), fingerprint()
    ok = same and fp1 == fp2
    _report(10, ok, "tables byte-identical across job counts; pipeline fingerprint stable")
    assert same
    assert fp1 == fp2
