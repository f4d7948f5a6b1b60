# A reduced-scale run of the simulated rolling-window study: per window, the
# entropic ground truth produces the observed portfolio, a risk measure is
# imputed from it against the spectral reference, and all three portfolios are
# compared in and out of sample under both measures.

from pathlib import Path

from riskimpute import experiments as ex

out = Path("/tmp/riskimpute_study")
cfg = ex.ExperimentConfig(
    mode="simulate",
    n_assets=5,
    n_experiments=20,          # the acceptance run uses 100
    s_grid=(0.01, 0.1, 1.0, 10.0),
    seed=0,
    out_dir=str(out),
    jobs=1,
)
summary = ex.run_study(cfg)
print(f"experiments kept: {summary['kept']} of {summary['experiments']}"
      f" (failures: {summary['failures']})")

print("\naverage in-sample performance (percentage points):")
print(f"{'portfolio':10s} {'measure':9s} " + " ".join(f"s={s:<6}" for s in cfg.s_grid))
for m in ("rho_OCE", "rho_Spec"):
    for p in ("x_Spec", "x_IC", "x_OCE"):
        cells = " ".join(f"{summary['averages'][(p, m, 'in', s)]:8.3f}" for s in cfg.s_grid)
        print(f"{p:10s} {m:9s} {cells}")

# The imputed portfolio x_IC sits between the reference optimum x_Spec and the
# ground-truth optimum x_OCE under either evaluation measure: it recovers most
# of the ground-truth performance while staying close to the reference.
print("\nCSV tables in", out, ":", sorted(p.name for p in out.iterdir()))
