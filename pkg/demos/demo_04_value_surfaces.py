# Export plot-ready value surfaces over the two-outcome loss square: the
# spectral reference has a cone shape; imputing from an entropic decision
# bends the cone down around the observed loss while keeping the sides.

from pathlib import Path

import numpy as np

from riskimpute import experiments as ex

out = Path("/tmp/riskimpute_surfaces")
cfg = ex.ExperimentConfig(
    mode="illustrate",
    s_grid=(0.01, 1.0, 100.0),
    grid_points=41,  # use 101 for the full-resolution grids
    out_dir=str(out),
)
summary = ex.illustrate(cfg)

print("files written to", out)
for name in sorted(p.name for p in out.iterdir()):
    print("  ", name)

print("\nper-s sup-norm deviations (equal to the largest vertex deviation):")
for s, u_star, max_dev in summary["deviations"]:
    print(f"  s = {s:>6}: u* = {u_star:.6f}, max vertex deviation = {max_dev:.6f}")

# Each grid CSV holds (z1, z2, value) rows; any plotting tool can render the
# surfaces or contours, e.g. with matplotlib:
#
#   data = np.loadtxt(out / "grid_spec.csv", delimiter=",", skiprows=1)
#   n = int(np.sqrt(data.shape[0]))
#   plt.contourf(data[:, 0].reshape(n, n), data[:, 1].reshape(n, n),
#                data[:, 2].reshape(n, n))
data = np.loadtxt(out / "grid_spec.csv", delimiter=",", skiprows=1)
print("\nreference surface sample:", data.shape[0], "points,",
      f"range [{data[:, 2].min():.4f}, {data[:, 2].max():.4f}]")
