"""
Cancer invasion driven by matrix-degrading enzymes: three scenarios that
switch the soluble (mu_s) and membrane-bound (mu_b) degradation on or off.

Resolution is reduced (57 x 57 cells) so the demo runs in well under a
minute; the acceptance tests use 113 x 113. Snapshots at t = 1, 3, 5 are
written as legacy VTK under $INVASIM_OUT (default ./invasim_out).
"""
import os
from pathlib import Path

from invasim.invasion import InvasionSolver, ModelParams, initial_preset, integrate
from invasim.io import OUT_ENV, write_metrics_csv, write_vtu
from invasim.mesh import generate_rectangle

out = Path(os.environ.get(OUT_ENV, "invasim_out")) / "demo_scenarios"
out.mkdir(parents=True, exist_ok=True)
mesh = generate_rectangle([[-1, 1], [-1, 1]], 57, 57)

cases = {"both": (1.0, 1.0), "bound only": (1.0, 0.0), "soluble only": (0.0, 1.0)}
print("scenario        A(t=1)   A(t=3)   A(t=5)   min phi   max cs   max w")
for name, (mu_b, mu_s) in cases.items():
    params = ModelParams(mu_b=mu_b, mu_s=mu_s)
    solver = InvasionSolver(mesh, params)
    res = integrate(solver, initial_preset("ellipse2d", mesh), 1e-2, 5.0, snapshot_times=(1, 3, 5))
    tag = name.replace(" ", "_")
    for st in res.snapshots:
        write_vtu(mesh, st.fields(), out / f"{tag}_t{st.t:.0f}.vtk")
    write_metrics_csv(res.metrics, out / f"{tag}_metrics.csv")
    m = res.metrics
    a = [m[k]["invaded_fraction"] for k in (100, 300, 500)]
    print(f"{name:<14}  {a[0]:.4f}   {a[1]:.4f}   {a[2]:.4f}   {min(r['phi_min'] for r in m):.1e}"
          f"   {max(r['cs_max'] for r in m):.2f}     {max(r['w_max'] for r in m):.2f}")

# All fields stay far inside the a priori bounds (c_s <= 40, w <= 50) and phi
# stays strictly positive. The invaded area (phi < 0.25) grows fastest with
# both mechanisms active. In this parameter set the soluble-only run
# overtakes the bound-only run: near intact matrix soluble enzymes are
# produced at kappa_s f_s(0) = 4 against kappa_b f_b(1) = 2.5 for bound ones,
# and they diffuse ahead of the front.
print(f"\nfiles written to {out}")
