"""Threshold equilibria for a linearly growing reserve.

The reserve drifts at 0.25x with volatility 2 and the discount rate is
0.08.  With a unit profit rate every threshold b gives an equilibrium
candidate: no extraction below b and a state-dependent rate above it.
This script prints the value and the rate on a coarse grid for three
thresholds and checks the closed form of the rate, which for g = 1 is
``mu(x) - r (x - b) - r psi(b)/psi'(b)``.
"""
import numpy as np

from definetti_nash import DiffusionModel, ProfitRate, build_equilibrium, check_conditions, solve_psi

model = DiffusionModel(0.08, "0.25*x", "2")
fs = solve_psi(model, x_max=50.0)
unit = ProfitRate.constant(1.0)
xs = np.array([0.0, 2.0, 5.0, 8.0, 10.0, 15.0, 20.0])

for b in (0.0, 5.0, 10.0):
    eq = build_equilibrium(model, unit, fs, b)
    print(f"\nthreshold b = {b:g}   K = {eq.boundary_constant:.6f}")
    print("      x        V(x)     rate(x)")
    for x, v, lam in zip(xs, eq.value(xs), eq.rate(xs)):
        print(f"{x:7.1f} {v:11.6f} {lam:11.6f}")
    above = xs[xs > b]
    closed = model.drift(above) - model.r * (above - b) - model.r * eq.boundary_ratio
    print(f"  max deviation from the closed-form rate: {np.max(np.abs(eq.rate(above) - closed)):.2e}")
    rep = check_conditions(eq)
    print(f"  verification conditions hold: {rep.verdict}")
