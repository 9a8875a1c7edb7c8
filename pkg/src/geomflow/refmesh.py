"""Flat reference grids: closed polygons in the plane and closed triangulations in space.

The moving geometry is parametrized over these fixed grids. Builders produce
grids whose vertices lie exactly on an analytic shape; uniform refinement
optionally reprojects new vertices onto the shape.
"""

import numpy as np

from .errors import GeomflowError


class AffineMap:
    """Affine map from the unit reference simplex onto a flat grid element."""

    def __init__(self, element, offset, linear):
        self.element = element
        self.offset = np.asarray(offset, dtype=float)
        self.linear = np.asarray(linear, dtype=float)  # ambient x dim

    def __call__(self, xhat):
        xhat = np.asarray(xhat, dtype=float)
        return self.offset + xhat @ self.linear.T

    def measure(self):
        """Constant Jacobian measure: segment length or twice the triangle area
        of the parallelogram factor |J(A_j)|."""
        if self.linear.shape[1] == 1:
            return float(np.linalg.norm(self.linear[:, 0]))
        return float(np.linalg.norm(np.cross(self.linear[:, 0], self.linear[:, 1])))


class ReferenceGrid:
    """Flat polygonal (dim=1) or triangulated (dim=2) closed reference grid.

    Parameters
    ----------
    vertices : (V, ambient) float array
    elements : (J, dim+1) int array
        Vertex indices per segment/triangle, consistently oriented.
    shape : analytic shape or None
        When set, refinement reprojects new vertices onto this shape.
    """

    def __init__(self, vertices, elements, shape=None, validate=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.elements = np.ascontiguousarray(elements, dtype=np.int64)
        if self.vertices.ndim != 2 or self.elements.ndim != 2:
            raise GeomflowError("vertices and elements must be 2d arrays")
        self.ambient_dim = self.vertices.shape[1]
        self.dim = self.elements.shape[1] - 1
        if (self.dim, self.ambient_dim) not in ((1, 2), (2, 3)):
            raise GeomflowError(
                f"unsupported grid: dim={self.dim}, ambient_dim={self.ambient_dim}"
            )
        self.shape = shape
        if validate:
            self.validate()

    # -- basic quantities ------------------------------------------------

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    def element_vertices(self):
        """Coordinates of every element's vertices, shape (J, dim+1, ambient)."""
        return self.vertices[self.elements]

    @property
    def h(self):
        """Maximum element diameter."""
        ev = self.element_vertices()
        if self.dim == 1:
            return float(np.linalg.norm(ev[:, 1] - ev[:, 0], axis=1).max())
        d01 = np.linalg.norm(ev[:, 1] - ev[:, 0], axis=1)
        d02 = np.linalg.norm(ev[:, 2] - ev[:, 0], axis=1)
        d12 = np.linalg.norm(ev[:, 2] - ev[:, 1], axis=1)
        return float(np.max([d01, d02, d12]))

    def element_map(self, j):
        """Affine map A_j of element j."""
        if not 0 <= j < self.n_elements:
            raise IndexError(f"element index {j} out of range [0, {self.n_elements})")
        ev = self.vertices[self.elements[j]]
        linear = (ev[1:] - ev[0]).T
        return AffineMap(j, ev[0], linear)

    def element_measures(self):
        """All affine measures |grad A_j| resp. |J(A_j)| as an array."""
        ev = self.element_vertices()
        if self.dim == 1:
            return np.linalg.norm(ev[:, 1] - ev[:, 0], axis=1)
        return np.linalg.norm(
            np.cross(ev[:, 1] - ev[:, 0], ev[:, 2] - ev[:, 0]), axis=1
        )

    # -- validation ------------------------------------------------------

    def validate(self):
        """Check the closed-manifold, orientation and nondegeneracy invariants."""
        if np.any(self.elements < 0) or np.any(self.elements >= self.n_vertices):
            raise GeomflowError("element refers to a nonexistent vertex")
        measures = self.element_measures()
        if np.any(measures <= 0.0):
            j = int(np.argmin(measures))
            raise GeomflowError(f"degenerate flat element {j} (measure {measures[j]:.3e})")
        if self.dim == 1:
            starts = np.bincount(self.elements[:, 0], minlength=self.n_vertices)
            ends = np.bincount(self.elements[:, 1], minlength=self.n_vertices)
            if not (np.all(starts == 1) and np.all(ends == 1)):
                raise GeomflowError("polygon is not a closed, consistently oriented 1-manifold")
        else:
            directed = set()
            for tri in self.elements:
                for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                    key = (int(a), int(b))
                    if key in directed:
                        raise GeomflowError("inconsistent orientation: repeated directed edge")
                    directed.add(key)
            for a, b in directed:
                if (b, a) not in directed:
                    raise GeomflowError("surface is not closed: boundary edge found")

    # -- enclosed measures of the flat grid --------------------------------

    def signed_area(self):
        """Shoelace area of a flat closed polygon (2d only)."""
        if self.dim != 1:
            raise GeomflowError("signed_area is defined for curves only")
        ev = self.element_vertices()
        a, b = ev[:, 0], ev[:, 1]
        return float(0.5 * np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))

    def signed_volume(self):
        """Divergence-theorem volume of a flat closed triangulation (3d only)."""
        if self.dim != 2:
            raise GeomflowError("signed_volume is defined for surfaces only")
        ev = self.element_vertices()
        return float(np.sum(np.einsum("ji,ji->j", ev[:, 0],
                                      np.cross(ev[:, 1], ev[:, 2]))) / 6.0)


# -- builders --------------------------------------------------------------


def build_polygon(shape, n):
    """Closed polygon with ``n`` segments and vertices on an analytic curve.

    Vertices are placed at equal parameter spacing, counterclockwise.
    """
    if n < 3:
        raise ValueError(f"need at least 3 segments, got {n}")
    if isinstance(shape, str):
        from .shapes import make_shape

        shape = make_shape(shape)
    t = np.arange(n) / n
    vertices = shape.point(t)
    elements = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    grid = ReferenceGrid(vertices, elements, shape=shape)
    if grid.signed_area() <= 0:
        raise GeomflowError("shape parametrization is not counterclockwise")
    return grid


def _octahedron():
    vertices = np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
        dtype=float,
    )
    faces = []
    for sx, ix in ((1, 0), (-1, 1)):
        for sy, iy in ((1, 2), (-1, 3)):
            for sz, iz in ((1, 4), (-1, 5)):
                if sx * sy * sz > 0:
                    faces.append((ix, iy, iz))
                else:
                    faces.append((ix, iz, iy))
    return vertices, np.array(faces, dtype=np.int64)


def _uv_sphere_grid(shape, n_lon, n_rings):
    """Latitude/longitude triangulation with (J, K) = (2*n_lon*n_rings, n_lon*n_rings + 2)."""
    phis = np.pi * np.arange(1, n_rings + 1) / (n_rings + 1)
    thetas = 2.0 * np.pi * np.arange(n_lon) / n_lon
    pts = [np.array([0.0, 0.0, 1.0])]
    for phi in phis:
        for th in thetas:
            pts.append(np.array([np.sin(phi) * np.cos(th),
                                 np.sin(phi) * np.sin(th),
                                 np.cos(phi)]))
    pts.append(np.array([0.0, 0.0, -1.0]))
    vertices = np.array(pts)
    if hasattr(shape, "axes"):
        vertices = vertices * shape.axes
    elif hasattr(shape, "r"):
        vertices = vertices * shape.r

    def ring(i, j):
        return 1 + i * n_lon + (j % n_lon)

    north, south = 0, len(pts) - 1
    faces = []
    for j in range(n_lon):
        faces.append((north, ring(0, j), ring(0, j + 1)))
    for i in range(n_rings - 1):
        for j in range(n_lon):
            faces.append((ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)))
            faces.append((ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)))
    for j in range(n_lon):
        faces.append((south, ring(n_rings - 1, j + 1), ring(n_rings - 1, j)))
    return vertices, np.array(faces, dtype=np.int64)


def _uv_torus_grid(shape, n_u, n_v):
    """Structured torus grid with matched seam: (J, K) = (2*n_u*n_v, n_u*n_v)."""
    R, r = shape.R, shape.r
    thetas = 2.0 * np.pi * np.arange(n_u) / n_u
    phis = 2.0 * np.pi * np.arange(n_v) / n_v
    th, ph = np.meshgrid(thetas, phis, indexing="ij")
    vertices = np.stack(
        [(R + r * np.cos(ph)) * np.cos(th),
         (R + r * np.cos(ph)) * np.sin(th),
         r * np.sin(ph)], axis=-1
    ).reshape(-1, 3)

    def vid(i, j):
        return (i % n_u) * n_v + (j % n_v)

    faces = []
    for i in range(n_u):
        for j in range(n_v):
            faces.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            faces.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return vertices, np.array(faces, dtype=np.int64)


def _orient_outward(vertices, faces):
    ev = vertices[faces]
    vol = np.sum(np.einsum("ji,ji->j", ev[:, 0], np.cross(ev[:, 1], ev[:, 2]))) / 6.0
    if vol < 0:
        faces = faces[:, [0, 2, 1]]
    return faces


def build_triangulation(shape, target=None, refinements=0, path=None):
    """Closed oriented triangulation of a sphere, ellipsoid, torus or file.

    Parameters
    ----------
    shape : Sphere | Ellipsoid | Torus | 'from_file' | name string
    target : (J, K) or None
        Requested element and vertex counts; the nearest achievable pair for
        the generator is used (check ``grid.n_elements``/``grid.n_vertices``).
    refinements : int
        Uniform refinements applied to the base octahedron (sphere only, and
        only when ``target`` is not given).
    path : str, optional
        OFF file to read when ``shape == 'from_file'``.
    """
    if isinstance(shape, str):
        if shape == "from_file":
            if path is None:
                raise ValueError("shape 'from_file' requires a path")
            return read_off(path)
        from .shapes import make_shape

        shape = make_shape(shape)

    from .shapes import Ellipsoid, Sphere, Torus

    if isinstance(shape, Sphere):
        if target is not None:
            # nearest refinement level: J = 8 * 4^n
            j_target = target[0]
            refinements = max(0, round(np.log(max(j_target, 8) / 8.0) / np.log(4.0)))
        vertices, faces = _octahedron()
        vertices = shape.project(vertices)
        grid = ReferenceGrid(vertices, _orient_outward(vertices, faces), shape=shape)
        for _ in range(refinements):
            grid = refine_uniform(grid)
        return grid

    if isinstance(shape, Ellipsoid):
        if target is None:
            target = (676, 340)
        n_cells = max(1, round(target[0] / 2))  # n_lon * n_rings
        # prefer n_lon close to 2 * n_rings among the divisor pairs
        best = None
        for n_rings in range(1, int(np.sqrt(n_cells)) + 1):
            if n_cells % n_rings == 0:
                n_lon = n_cells // n_rings
                score = abs(n_lon - 2 * n_rings)
                if n_lon >= 3 and (best is None or score < best[0]):
                    best = (score, n_lon, n_rings)
        if best is None:
            best = (0, max(3, n_cells), 1)
        _, n_lon, n_rings = best
        vertices, faces = _uv_sphere_grid(shape, n_lon, n_rings)
        return ReferenceGrid(vertices, _orient_outward(vertices, faces), shape=shape)

    if isinstance(shape, Torus):
        if target is None:
            target = (720, 360)
        n_cells = max(9, round(target[0] / 2))
        best = None
        for n_v in range(3, int(np.sqrt(n_cells)) + 1):
            if n_cells % n_v == 0:
                n_u = n_cells // n_v
                if n_u < 3:
                    continue
                # aim for roughly uniform edge lengths: n_u/n_v ~ R/r * 2pi ratio
                ideal = (shape.R / shape.r)
                score = abs(n_u / n_v - ideal * 1.8)
                if best is None or score < best[0]:
                    best = (score, n_u, n_v)
        if best is None:
            best = (0.0, n_cells // 3, 3)
        _, n_u, n_v = best
        vertices, faces = _uv_torus_grid(shape, n_u, n_v)
        return ReferenceGrid(vertices, _orient_outward(vertices, faces), shape=shape)

    raise GeomflowError(f"no triangulation generator for shape {shape!r}")


def refine_uniform(grid, project=None):
    """Split each segment in 2 / each triangle in 4 by edge midpoints.

    New vertices are reprojected onto the grid's analytic shape unless
    ``project=False`` (or the grid carries no shape).
    """
    if project is None:
        project = grid.shape is not None
    if project and grid.shape is None:
        raise GeomflowError("cannot project: grid has no analytic shape")

    verts = list(grid.vertices)
    midpoint_id = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoint_id:
            m = 0.5 * (grid.vertices[a] + grid.vertices[b])
            midpoint_id[key] = len(verts)
            verts.append(m)
        return midpoint_id[key]

    new_elements = []
    if grid.dim == 1:
        for v0, v1 in grid.elements:
            m = midpoint(v0, v1)
            new_elements.append((v0, m))
            new_elements.append((m, v1))
    else:
        for v0, v1, v2 in grid.elements:
            m01 = midpoint(v0, v1)
            m12 = midpoint(v1, v2)
            m02 = midpoint(v0, v2)
            new_elements.extend(
                [(v0, m01, m02), (m01, v1, m12), (m02, m12, v2), (m01, m12, m02)]
            )
    vertices = np.array(verts)
    if project:
        new_ids = np.arange(grid.n_vertices, len(verts))
        vertices[new_ids] = grid.shape.project(vertices[new_ids])
    return ReferenceGrid(vertices, np.array(new_elements, dtype=np.int64),
                         shape=grid.shape)


# -- ASCII OFF-style io -----------------------------------------------------


def write_off(grid, path):
    """Write a grid in minimal ASCII OFF style, coordinates at 17 significant digits."""
    with open(path, "w") as f:
        f.write("OFF\n")
        f.write(f"{grid.n_vertices} {grid.n_elements} 0\n")
        for v in grid.vertices:
            f.write(" ".join(f"{x:.17g}" for x in v) + "\n")
        for e in grid.elements:
            f.write(f"{len(e)} " + " ".join(str(i) for i in e) + "\n")


def read_off(path):
    """Read a grid written by :func:`write_off`."""
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != "OFF":
        raise GeomflowError(f"{path}: missing OFF header")
    try:
        nv, ne, _ = (int(x) for x in lines[1].split())
        vertices = np.array(
            [[float(x) for x in lines[2 + i].split()] for i in range(nv)]
        )
        elements = []
        for i in range(ne):
            parts = [int(x) for x in lines[2 + nv + i].split()]
            if parts[0] != len(parts) - 1:
                raise ValueError("element count prefix mismatch")
            elements.append(parts[1:])
        elements = np.array(elements, dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise GeomflowError(f"{path}: malformed OFF file ({exc})") from exc
    return ReferenceGrid(vertices, elements)
