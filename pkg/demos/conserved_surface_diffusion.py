"""Surface diffusion drives a curve toward a circle without changing its area.

The continuous flow decreases length while conserving the enclosed area. The
plain linearly-implicit scheme only conserves area approximately; the
structure-preserving variant replaces the normal in the velocity pairing by
an intermediate normal built from both time levels, which makes the discrete
area exactly conserved (up to the Picard tolerance and round-off).

Run with: python3 demos/conserved_surface_diffusion.py
"""

from geomflow import (Ellipse, SchemeConfig, build_polygon, enclosed_area,
                      energy, evolve, interpolate_shape)

grid = interpolate_shape(build_polygon(Ellipse(2, 1), 96), 2)
A0 = enclosed_area(grid)
L0 = energy(grid)
print(f"2:1 ellipse, 96 segments, degree 2: area {A0:.8f}, length {L0:.8f}\n")

for variant in ("bgn_quadrature", "sp"):
    config = SchemeConfig("sd", variant, degree=2, tau=0.01)
    final, records = evolve(grid, config, 100)
    drift = abs(enclosed_area(final) - A0) / A0
    iters = max(r.picard_iters for r in records)
    print(f"{variant:>16}: length {records[-1].energy:.8f} "
          f"(down {1 - records[-1].energy_norm:.1%}), "
          f"relative area drift {drift:.2e}, max picard iters {iters}")

print("\nThe sp variant pays a few Picard sweeps per step to hold the area "
      "at round-off;\nthe linear variant drifts at the truncation level.")
