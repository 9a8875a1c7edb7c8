"""A circle under mean curvature flow shrinks at an exactly known rate.

The exact solution with initial radius r0 is r(t) = sqrt(r0^2 - 2t), which
makes the circle the standard convergence benchmark: evolve interpolated
polygons of increasing resolution and compare against the exact radius at
the final time. Halving h while scaling tau by 2^-(degree+1) should divide
the error by about 2^(degree+1).

Run with: python3 demos/shrinking_circle.py
"""

import math

from geomflow import (Circle, SchemeConfig, build_polygon, evolve,
                      interpolate_shape, linf_error_exact)

DEGREE = 2
T = 0.05
exact = math.sqrt(1.0 - 2.0 * T)

print(f"MCF circle, degree {DEGREE}, T = {T}, exact radius {exact:.6f}\n")
print(f"{'segments':>8} {'tau':>10} {'error':>12} {'order':>6}")

prev = None
for level in range(4):
    n = 32 * 2 ** level
    n_steps = 2 ** (level * (DEGREE + 1))
    tau = T / n_steps
    grid = interpolate_shape(build_polygon(Circle(1.0), n), DEGREE)
    config = SchemeConfig("mcf", "bgn_quadrature", degree=DEGREE, tau=tau)
    final, _ = evolve(grid, config, n_steps)
    err = linf_error_exact(final, exact)
    order = f"{math.log2(prev / err):.2f}" if prev else "  --"
    print(f"{n:>8} {tau:>10.2e} {err:>12.4e} {order:>6}")
    prev = err
