"""Why couple curvature to position: mesh quality under MCF.

A position-only update (discretizing H n = laplace_Gamma id) moves each node
along its own normal, so elements pile up where the surface shrinks fastest.
The coupled position-curvature scheme solves for both fields at once and the
resulting implicit tangential motion keeps elements close to uniform. We
evolve the same 2:1:1 ellipsoid with both schemes and track the ratio of the
largest to the smallest element area (1 is a perfectly uniform mesh).

Run with: python3 demos/mesh_quality.py   (about a minute)
"""

from geomflow import (Ellipsoid, SchemeConfig, build_triangulation, evolve,
                      interpolate_shape)

N_STEPS = 150  # t = 0.15; the gap keeps widening toward extinction

for variant in ("bgn_quadrature", "dziuk"):
    grid = interpolate_shape(build_triangulation(Ellipsoid(2, 1, 1)), 2)
    config = SchemeConfig("mcf", variant, degree=2, tau=1e-3)
    final, records = evolve(grid, config, N_STEPS)
    trace = " -> ".join(f"{records[m].mesh_quality:.2f}"
                        for m in range(0, N_STEPS + 1, 50))
    print(f"{variant:>16}: element area ratio {trace}")

print("\nBoth start from the same mesh; only the coupled scheme keeps the "
      "ratio bounded.")
