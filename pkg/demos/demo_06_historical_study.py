# The same rolling-window pipeline on historical data.  Each experiment picks
# a random 60-day window and a random subset of assets from a returns CSV with
# header `date,asset1..assetN`.  A small bundled sample makes the demo
# self-contained; point `data_path` at a real file for a full study.

from pathlib import Path

from riskimpute import experiments as ex

out = Path("/tmp/riskimpute_historical")
cfg = ex.ExperimentConfig(
    mode="historical",
    data_path=str(ex.bundled_sample_path()),
    n_assets=5,
    n_experiments=10,
    s_grid=(0.1, 1.0, 10.0),
    seed=1,
    out_dir=str(out),
)
summary = ex.run_study(cfg)
print(f"windows kept: {summary['kept']} (failures: {summary['failures']})")

print("\naverage out-of-sample performance (percentage points):")
print(f"{'portfolio':10s} {'measure':9s} " + " ".join(f"s={s:<6}" for s in cfg.s_grid))
for m in ("rho_OCE", "rho_Spec"):
    for p in ("x_Spec", "x_IC", "x_OCE"):
        cells = " ".join(f"{summary['averages'][(p, m, 'out', s)]:8.3f}" for s in cfg.s_grid)
        print(f"{p:10s} {m:9s} {cells}")

print("\ninput format: date,asset1..assetN with simple daily returns as decimals")
names, data = ex.read_returns_csv(ex.bundled_sample_path())
print("bundled sample:", data.shape[0], "days x", len(names), "assets")
