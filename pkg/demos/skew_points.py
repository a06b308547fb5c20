"""Where a discontinuous profit rate forces singular extraction.

When the profit rate jumps at a state l, a smooth-fit argument fails and
each player must push the reserve at l with a local-time intensity
``c = (g(l+) - g(l-)) / (g(l+) + g(l-))``.  Upward jumps give positive c
(the state is held below l), downward jumps negative c.  This script lists
the skew points of the piecewise profit rate used in the third bundled
example and verifies the skew identity on the value function.
"""
from definetti_nash import build_equilibrium, get_preset, skew_intensity, solve_psi

preset = get_preset("g-complicated")
g = preset.profit
print(preset.description)
for l in g.theta:
    c = skew_intensity(g, l, exact=True)
    print(f"  breakpoint {l:g}:  g(l-) = {g.g_left(l):.6f}  g(l+) = {g.g_right(l):.6f}  c = {c}")

fs = solve_psi(preset.model, x_max=preset.x_max)
eq = build_equilibrium(preset.model, g, fs, 0.0)
print("\nskew list of the b = 0 equilibrium:", list(eq.skew_list))
print("skew identity residuals:", [f"{r:.1e}" for r in eq.skew_residuals()])
for x in preset.x0:
    print(f"V({x:g}) = {eq.value(x):.6f}   rate = {eq.rate(x):.6f}")
