"""Does any simple unilateral deviation beat the equilibrium?

Player 2 keeps the b = 5 threshold strategy for the linear-growth model
with a unit profit rate.  Player 1 tries full extraction, neighbouring
thresholds, extra extraction, an immediate jump to the threshold and
doing nothing.  Each estimate must stay below the equilibrium value up to
three standard errors plus the Monte Carlo recovery error of the
equilibrium itself.
"""
from definetti_nash import (DiffusionModel, ProfitRate, SimConfig, build_equilibrium, deviation_suite,
                            solve_psi)

model = DiffusionModel(0.08, "0.25*x", "2")
eq = build_equilibrium(model, ProfitRate.constant(1.0), solve_psi(model), 5.0)
report = deviation_suite(eq, 5.0, SimConfig(dt=1e-3, t_max=60.0, n_paths=1000, seed=11))

print(f"V(5) = {report['analytic']:.4f}, equilibrium MC {report['calibration']['mean']:.4f}")
for d in report["deviations"]:
    verdict = "no gain" if d["verdict"] else "GAIN"
    print(f"  {d['name']:<24} {d['mean']:8.4f} +/- {d['stderr']:.4f}  margin {d['margin']:7.4f}  {verdict}")
print("equilibrium survives all deviations:", report["all_pass"])
