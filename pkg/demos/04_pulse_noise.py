"""
Robustness of the TAT pulse scheme to random pulse errors.  Every rotation angle
(area noise) or free-evolution duration (separation noise) is multiplied by
1 + eps with eps Gaussian.  Each trajectory draws from its own counter-based
stream, so results do not depend on scheduling.
"""

from spinsqueeze.experiments import ExperimentConfig, run_noise_mc

cfg = ExperimentConfig(scheme="tat-pulse", n_s=12, n_j=1200, seed=7)
grid = [(1e-4, 0.0), (5e-4, 0.0), (0.0, 1e-4), (0.0, 5e-4), (5e-3, 5e-3)]
res = run_noise_mc(cfg, grid, trajectories=10)

print(f"noiseless xi2_min = {res['nominal']['xi2_min']:.4f}")
print(" sigma_area  sigma_sep   mean xi2_min   std")
for c in res["cells"]:
    print(f"{c['sigma_area']:10.1e} {c['sigma_sep']:10.1e}   {c['xi2_min_mean']:11.4f}   {c['xi2_min_std']:.1e}")
