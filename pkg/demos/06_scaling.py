"""
How optimal squeezing scales with ensemble size: xi2_min ~ n_s^(-2/3) for
one-axis twisting and ~ n_s^(-1) for two-axis twisting.  The TAT exponent
converges slowly, so the sweep starts at n_s = 40.
"""

from spinsqueeze.experiments import ExperimentConfig, run_scaling

for scheme, sizes in (("free-oat", [10, 20, 40, 80, 160]), ("free-tat", [40, 80, 160, 320])):
    r = run_scaling(ExperimentConfig(scheme=scheme, n_s=sizes[0]), "n_s", sizes)
    print(scheme)
    for p in r["points"]:
        print(f"  n_s = {p['n_s']:4d}: xi2_min = {p['xi2_min']:.5f}, t_min = {p['t_min']:.4f}")
    print(f"  fit: xi2_min ~ n_s^{r['fit_xi2']['exponent']:.3f}, t_min ~ n_s^{r['fit_t']['exponent']:.3f}")

# ratio sweep: the exact model approaches ideal twisting as J grows
r = run_scaling(ExperimentConfig(scheme="free-int", n_s=10, n_j=100), "ratio", [10, 30, 100, 300])
print("free-int, n_s = 10")
for p in r["points"]:
    print(f"  n_j / n_s = {p['value']:5.0f}: xi2_min = {p['xi2_min']:.4f}")
