"""
Heterogeneous matrix suitability s(x) in [0, 1]: degradation carries the
factor (1 - s), and s itself decays only through bound enzymes.

With a highly unsuitable matrix (s near 0.9-1) and no bound enzymes, the
invasion barely moves. A checkerboard suitability with a boundary source
shows fingering along low-suitability channels.
"""
from invasim.invasion import InvasionSolver, ModelParams, initial_preset, integrate
from invasim.mesh import generate_rectangle

mesh = generate_rectangle([[-1, 1], [-1, 1]], 57, 57)

print("preset      mu_b mu_s delta_s   A(0)     A(5)")
for preset in ("lowsuit2d", "deakin2d"):
    for mu_b, mu_s, delta_s in ((1, 1, 1), (1, 0, 1), (0, 1, 0)):
        p = ModelParams(mu_b=mu_b, mu_s=mu_s, delta_s=delta_s, suitability_enabled=True)
        res = integrate(InvasionSolver(mesh, p), initial_preset(preset, mesh), 1e-2, 5.0)
        m = res.metrics
        print(f"{preset:<10}  {mu_b:>4} {mu_s:>4} {delta_s:>7}   {m[0]['invaded_fraction']:.4f}   "
              f"{m[-1]['invaded_fraction']:.4f}")

# lowsuit2d with mu_b = delta_s = 0 is the stalled case: (1 - s) <= 0.1
# everywhere and s never decays, so phi hardly changes.
