"""Monte Carlo check of the reflect-and-jump equilibrium.

Profit is 1/4 per unit below 10, 1 at 10 and nothing above.  Both players
reflect the reserve at 10 with intensity 1/2 each and, when the reserve
starts above 10, each takes half the excess at once.  The analytic value is
``(1 + w)/4 * psi(x)/psi'(10)`` below the level and constant above it.  The
script simulates 2000 paths from a state below and a state above the level
and compares.  The opening jump from 14 earns nothing because the profit
rate is zero above the level; all value comes from reflection at 10.
"""
from definetti_nash import SimConfig, case_study_equilibrium, get_preset, mc_estimate, solve_psi

preset = get_preset("case-study")
ell, w = preset.case_study
fs = solve_psi(preset.model, x_max=preset.x_max)
eq = case_study_equilibrium(preset.model, fs, ell, w)
s = eq.strategy()
cfg = SimConfig(dt=1e-3, t_max=60.0, n_paths=2000, seed=7)

for x0 in (6.0, 14.0):
    est = mc_estimate(preset.model, s, s, eq.g, x0, cfg, value_sup=eq.value_sup)
    v = eq.value(x0)
    rate, local, jump = est.components
    print(f"x0 = {x0:g}: analytic {v:.4f}  MC {est.mean:.4f} +/- {est.stderr:.4f}"
          f"  (local time {local:.4f}, jump {jump:.4f}, truncation bound {est.truncation_bias_bound:.1e})")
