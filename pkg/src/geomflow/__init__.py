"""geomflow: isoparametric finite elements for curvature-driven geometric flows.

Mean curvature flow and surface diffusion of closed curves in the plane and
closed surfaces in space, discretized with degree 1-4 Lagrange elements over
a fixed flat reference grid.
"""

from .errors import (ConfigError, DegenerateElementError, GeomflowError,
                     NonConvergenceError, QuadratureOrderError,
                     WellPosednessError)
from .fem import (LagrangeBasis, QuadratureRule, default_rule,
                  gauss_rule_interval, lagrange_basis, lumped_endpoint_rule,
                  quad_rule_triangle)
from .geometry import (DofMap, ElementFrame, GeometryTables, ParametrizedGrid,
                       build_dofmap, enclosed_area, enclosed_measure,
                       enclosed_volume, energy, export_polyline,
                       export_vtk_polydata, frame_at, inner_product_h,
                       interpolate_shape, jacobian_transform_check,
                       lemma_terms, mesh_quality)
from .metrics import (CenterCloud, ClosestPointResult, closest_point,
                      dist_point_to_grid, l2_projected_distance,
                      linf_error_exact, projected_distance)
from .refmesh import (AffineMap, ReferenceGrid, build_polygon,
                      build_triangulation, read_off, refine_uniform,
                      write_off)
from .schemes import (DiagnosticsRecord, SchemeConfig, StepResult,
                      assemble_matrices, discrete_curvature, evolve,
                      intermediate_normal_curve, intermediate_normal_surface,
                      step_bgn, step_dziuk, step_sp)
from .shapes import (Circle, Ellipse, Ellipsoid, Flower, Sphere, Torus,
                     make_shape)

__version__ = "0.1.0"
