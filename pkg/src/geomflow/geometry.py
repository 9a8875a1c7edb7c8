"""Isoparametric parametrized grids and geometric functionals.

A :class:`ParametrizedGrid` stores the Lagrange node coordinates of a
piecewise-polynomial map over a flat reference grid. All inner products,
energies and enclosed measures are evaluated through per-element pullbacks
to the reference simplex.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateElementError, GeomflowError, QuadratureOrderError
from .fem import gauss_rule_interval, lagrange_basis, quad_rule_triangle

DEGENERACY_RTOL = 1e-14


# -- global Lagrange node numbering -----------------------------------------


class DofMap:
    """Global numbering of Lagrange nodes shared between adjacent elements."""

    def __init__(self, element_dofs, n_nodes):
        self.element_dofs = np.ascontiguousarray(element_dofs, dtype=np.int64)
        self.n_nodes = int(n_nodes)

    def __getitem__(self, j):
        return self.element_dofs[j]


def build_dofmap(reference, degree):
    """C0-continuous global numbering for degree-``degree`` Lagrange nodes.

    Vertices first, then edge nodes (ordered from the lower-numbered vertex),
    then element-interior nodes.
    """
    ell = degree
    V = reference.n_vertices
    elements = reference.elements
    if reference.dim == 1:
        n_dofs = ell + 1
        dofs = np.empty((reference.n_elements, n_dofs), dtype=np.int64)
        dofs[:, 0] = elements[:, 0]
        dofs[:, -1] = elements[:, 1]
        for k in range(1, ell):
            dofs[:, k] = V + np.arange(reference.n_elements) * (ell - 1) + (k - 1)
        return DofMap(dofs, V + reference.n_elements * (ell - 1))

    basis = lagrange_basis(ell, 2)
    lattice = np.rint(basis.nodes * ell).astype(int)  # integer (i, j)
    edge_ids = {}

    def edge_id(a, b):
        key = (min(a, b), max(a, b))
        if key not in edge_ids:
            edge_ids[key] = len(edge_ids)
        return edge_ids[key]

    # pre-register edges so numbering is deterministic in element order
    for tri in elements:
        edge_id(tri[0], tri[1])
        edge_id(tri[1], tri[2])
        edge_id(tri[0], tri[2])
    E = len(edge_ids)
    n_int = (ell - 1) * (ell - 2) // 2
    edge_base = V
    int_base = V + E * (ell - 1)

    dofs = np.empty((reference.n_elements, basis.n_dofs), dtype=np.int64)
    for j, tri in enumerate(elements):
        g0, g1, g2 = (int(v) for v in tri)
        interior_count = 0
        for n, (i, k) in enumerate(lattice):
            if (i, k) == (0, 0):
                dofs[j, n] = g0
            elif (i, k) == (ell, 0):
                dofs[j, n] = g1
            elif (i, k) == (0, ell):
                dofs[j, n] = g2
            elif k == 0:  # edge g0-g1, parameter t = i from g0
                t = i
                eid = edge_id(g0, g1)
                idx = t - 1 if g0 < g1 else ell - 1 - t
                dofs[j, n] = edge_base + eid * (ell - 1) + idx
            elif i == 0:  # edge g0-g2, t = k from g0
                t = k
                eid = edge_id(g0, g2)
                idx = t - 1 if g0 < g2 else ell - 1 - t
                dofs[j, n] = edge_base + eid * (ell - 1) + idx
            elif i + k == ell:  # edge g1-g2, t = k from g1
                t = k
                eid = edge_id(g1, g2)
                idx = t - 1 if g1 < g2 else ell - 1 - t
                dofs[j, n] = edge_base + eid * (ell - 1) + idx
            else:
                dofs[j, n] = int_base + j * n_int + interior_count
                interior_count += 1
    return DofMap(dofs, int_base + reference.n_elements * n_int)


# -- the moving geometry ------------------------------------------------------


class ParametrizedGrid:
    """Degree-``degree`` isoparametric geometry over a reference grid."""

    def __init__(self, reference, basis, dofmap, coords):
        self.reference = reference
        self.basis = basis
        self.dofmap = dofmap
        self.coords = np.ascontiguousarray(coords, dtype=float)
        if self.coords.shape != (dofmap.n_nodes, reference.ambient_dim):
            raise GeomflowError(
                f"coords shape {self.coords.shape} does not match "
                f"({dofmap.n_nodes}, {reference.ambient_dim})"
            )

    @property
    def degree(self):
        return self.basis.degree

    @property
    def dim(self):
        return self.reference.dim

    @property
    def ambient_dim(self):
        return self.reference.ambient_dim

    @property
    def n_nodes(self):
        return self.dofmap.n_nodes

    @property
    def n_elements(self):
        return self.reference.n_elements

    def element_coords(self):
        """Lagrange node coordinates per element, shape (J, n_dofs, ambient)."""
        return self.coords[self.dofmap.element_dofs]

    def with_coords(self, coords):
        """Same structure, new node positions."""
        return ParametrizedGrid(self.reference, self.basis, self.dofmap, coords)

    def map_points(self, j, xhat):
        """Evaluate F_j at reference point(s)."""
        phi = self.basis.eval(xhat)
        return phi @ self.coords[self.dofmap[j]]


def interpolate_shape(reference, degree, shape=None):
    """Place degree-``degree`` Lagrange nodes on an analytic shape.

    Nodes are first distributed by the affine element maps and then projected
    onto the shape (``shape=None`` uses the reference grid's own shape; pass
    ``shape=False`` to skip projection and keep the flat grid).
    """
    basis = lagrange_basis(degree, reference.dim)
    dofmap = build_dofmap(reference, degree)
    ev = reference.element_vertices()  # (J, dim+1, d)
    linear = ev[:, 1:] - ev[:, :1]  # (J, dim, d)
    pts = ev[:, :1, :] + np.einsum("nm,jmd->jnd", basis.nodes, linear)
    coords = np.empty((dofmap.n_nodes, reference.ambient_dim))
    coords[dofmap.element_dofs] = pts
    if shape is None:
        shape = reference.shape
    if shape:
        coords = shape.project(coords)
    grid = ParametrizedGrid(reference, basis, dofmap, coords)
    # fail fast on a bad interpolation
    GeometryTables(grid, _default_rule_for(grid))
    return grid


def _default_rule_for(grid, order=None):
    if grid.dim == 1:
        return gauss_rule_interval(order or 10 * grid.degree)
    return quad_rule_triangle(order or 10 * grid.degree)


# -- tabulation and per-quadrature-point geometry ----------------------------

_TAB_CACHE = {}


def tabulate(basis, rule):
    """Basis values/gradients at the rule's points, cached per (basis, rule)."""
    key = (basis.degree, basis.dim, rule.cache_key)
    if key not in _TAB_CACHE:
        _TAB_CACHE[key] = (basis.eval(rule.points), basis.grad(rule.points))
    return _TAB_CACHE[key]


def _perp(v):
    """Clockwise quarter turn: tangent of a ccw curve -> outward normal."""
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


class GeometryTables:
    """Geometry of a parametrized grid at all quadrature points.

    Attributes (J elements, Q points, d ambient, m reference dims, n dofs):
      pos (J,Q,d), jac (J,Q,d,m), g (J,Q) measure, nw (J,Q,d) un-normalized
      normal (g * unit normal), normal (J,Q,d), sgrad (J,Q,n,d) surface
      gradients of the basis functions.
    """

    def __init__(self, grid, rule, check_degeneracy=True):
        self.grid = grid
        self.rule = rule
        phi, dphi = tabulate(grid.basis, rule)
        self.phi = phi  # (Q, n)
        self.dphi = dphi  # (Q, n, m)
        self.weights = rule.weights
        X = grid.element_coords()  # (J, n, d)
        self.pos = np.einsum("qn,jnd->jqd", phi, X)
        self.jac = np.einsum("qnm,jnd->jqdm", dphi, X)
        if grid.dim == 1:
            tangent = self.jac[..., 0]  # (J,Q,d)
            self.g = np.linalg.norm(tangent, axis=-1)
            self.nw = _perp(tangent)
        else:
            self.nw = np.cross(self.jac[..., 0], self.jac[..., 1])
            self.g = np.linalg.norm(self.nw, axis=-1)
        if check_degeneracy:
            ref = grid.reference.element_measures()  # (J,)
            bad = self.g <= DEGENERACY_RTOL * ref[:, None]
            if np.any(bad):
                j, q = np.argwhere(bad)[0]
                raise DegenerateElementError(
                    int(j), rule.points[q], float(self.g[j, q])
                )
        self.normal = self.nw / self.g[..., None]

    _sgrad = None

    @property
    def sgrad(self):
        if self._sgrad is None:
            jac, dphi = self.jac, self.dphi
            if self.grid.dim == 1:
                inv_g2 = 1.0 / (self.g ** 2)
                self._sgrad = np.einsum(
                    "jqd,qn,jq->jqnd", jac[..., 0], dphi[..., 0], inv_g2
                )
            else:
                G = np.einsum("jqdm,jqdk->jqmk", jac, jac)  # first fundamental form
                det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
                Ginv = np.empty_like(G)
                Ginv[..., 0, 0] = G[..., 1, 1]
                Ginv[..., 1, 1] = G[..., 0, 0]
                Ginv[..., 0, 1] = -G[..., 0, 1]
                Ginv[..., 1, 0] = -G[..., 1, 0]
                Ginv /= det[..., None, None]
                self._sgrad = np.einsum("jqdm,jqmk,qnk->jqnd", jac, Ginv, dphi)
        return self._sgrad

    def element_measures(self):
        """Quadrature measure |sigma_j| of every curved element."""
        return self.g @ self.weights


@dataclass
class ElementFrame:
    """Pointwise geometry of one element at one reference point."""

    position: np.ndarray
    jacobian: np.ndarray
    measure: float
    normal: np.ndarray
    surface_grads: np.ndarray  # (n_dofs, ambient)


def frame_at(grid, j, xhat):
    """Geometry of element ``j`` at reference point ``xhat``."""
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    phi = grid.basis.eval(xhat)[0]
    dphi = grid.basis.grad(xhat)[0]  # (n, m)
    X = grid.coords[grid.dofmap[j]]
    pos = phi @ X
    jac = np.einsum("nm,nd->dm", dphi, X)
    if grid.dim == 1:
        g = float(np.linalg.norm(jac[:, 0]))
        nw = _perp(jac[:, 0])
    else:
        nw = np.cross(jac[:, 0], jac[:, 1])
        g = float(np.linalg.norm(nw))
    ref = grid.reference.element_map(j).measure()
    if g <= DEGENERACY_RTOL * ref:
        raise DegenerateElementError(j, xhat[0], g)
    normal = nw / g
    G = jac.T @ jac
    sgrad = (dphi @ np.linalg.inv(G)) @ jac.T  # (n, d)
    return ElementFrame(pos, jac, g, normal, sgrad)


# -- functionals --------------------------------------------------------------


def _evaluate(arg, tables):
    if np.isscalar(arg):
        return np.full(tables.g.shape, float(arg))
    if callable(arg):
        return np.asarray(arg(tables.pos), dtype=float)
    return np.asarray(arg, dtype=float)


def inner_product_h(grid, rule, u, v):
    """Quadrature inner product (u, v)^h over the parametrized grid.

    ``u`` and ``v`` may be scalars, callables of ambient points, or arrays of
    shape (J, Q) / (J, Q, d). Vector arguments are contracted pointwise.
    """
    tables = GeometryTables(grid, rule)
    uu = _evaluate(u, tables)
    vv = _evaluate(v, tables)
    prod = uu * vv
    if prod.ndim == 3:
        prod = prod.sum(axis=-1)
    return float(np.einsum("jq,jq,q->", prod, tables.g, tables.weights))


def energy(grid, rule=None):
    """Numerical energy: perimeter L_h (curves) or surface area S_h (surfaces)."""
    tables = GeometryTables(grid, rule or _default_rule_for(grid))
    return float(np.einsum("jq,q->", tables.g, tables.weights))


def _require_exactness(rule, required, what):
    if rule.exactness_order < required:
        raise QuadratureOrderError(
            f"{what} needs quadrature exact of order >= {required}, "
            f"got order {rule.exactness_order}"
        )


def enclosed_area(grid, rule=None):
    """Enclosed area of a closed curve, exact for rules of order >= 2*degree - 1."""
    if grid.dim != 1:
        raise GeomflowError("enclosed_area applies to curves")
    required = 2 * grid.degree - 1
    if rule is None:
        rule = gauss_rule_interval(required)
    _require_exactness(rule, required, "enclosed area")
    tables = GeometryTables(grid, rule)
    dens = np.einsum("jqd,jqd->jq", tables.pos, tables.nw)
    return float(0.5 * np.einsum("jq,q->", dens, tables.weights))


def enclosed_volume(grid, rule=None):
    """Enclosed volume of a closed surface, exact for rules of order >= 3*degree - 2."""
    if grid.dim != 2:
        raise GeomflowError("enclosed_volume applies to surfaces")
    required = 3 * grid.degree - 2
    if rule is None:
        rule = quad_rule_triangle(required)
    _require_exactness(rule, required, "enclosed volume")
    tables = GeometryTables(grid, rule)
    dens = np.einsum("jqd,jqd->jq", tables.pos, tables.nw)
    return float(np.einsum("jq,q->", dens, tables.weights) / 3.0)


def enclosed_measure(grid, rule=None):
    """Enclosed area (curves) or volume (surfaces)."""
    return enclosed_area(grid, rule) if grid.dim == 1 else enclosed_volume(grid, rule)


def mesh_quality(grid, rule=None):
    """Mesh quality Psi = max_j |sigma_j| / min_j |sigma_j| (>= 1)."""
    if rule is None:
        rule = _default_rule_for(grid)
    sizes = GeometryTables(grid, rule).element_measures()
    smallest = sizes.min()
    if smallest <= 0:
        raise DegenerateElementError(int(np.argmin(sizes)), None, float(smallest))
    return float(sizes.max() / smallest)


# -- identities used by the stability and conservation arguments -------------


def lemma_terms(grid_m, grid_next, rule):
    """Pointwise dissipation terms of the local flow map between two grids.

    Returns (lhs, rhs) arrays of shape (J, Q) with
    lhs = [grad_s X : grad_s (X - id)] o Y * measure(Y) and
    rhs = measure(Y_next) - measure(Y); the stability lemma asserts
    lhs >= rhs pointwise, with equality when the grids coincide.
    """
    if (grid_m.reference is not grid_next.reference
            or grid_m.dofmap is not grid_next.dofmap):
        raise GeomflowError("grids must share reference grid and dof map")
    tab = GeometryTables(grid_m, rule)
    tab2 = GeometryTables(grid_next, rule, check_degeneracy=False)
    # grad_s X o Y = jac_next @ Ginv @ jac^T  (ambient x ambient)
    jac, jac2 = tab.jac, tab2.jac
    G = np.einsum("jqdm,jqdk->jqmk", jac, jac)
    if grid_m.dim == 1:
        Ginv = 1.0 / G
    else:
        det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
        Ginv = np.empty_like(G)
        Ginv[..., 0, 0] = G[..., 1, 1]
        Ginv[..., 1, 1] = G[..., 0, 0]
        Ginv[..., 0, 1] = -G[..., 0, 1]
        Ginv[..., 1, 0] = -G[..., 1, 0]
        Ginv /= det[..., None, None]
    A = np.einsum("jqdm,jqmk,jqek->jqde", jac2, Ginv, jac)  # grad_s X o Y
    P = np.einsum("jqdm,jqmk,jqek->jqde", jac, Ginv, jac)  # grad_s id o Y
    lhs = np.einsum("jqde,jqde->jq", A, A - P) * tab.g
    rhs = tab2.g - tab.g
    return lhs, rhs


def jacobian_transform_check(grid1, grid2=None, rule=None):
    """Numerical check of the surface-element transformation identity.

    At every quadrature point of ``grid2`` (interpreted as X o Y over the same
    reference grid as ``grid1``) the cross-product measure must agree with the
    Gram-determinant measure and with the measure composed through the affine
    factor. Returns the maximum relative residual.
    """
    if grid2 is None:
        grid2 = grid1
    if grid1.reference is not grid2.reference:
        raise GeomflowError("grids must share a reference grid")
    if rule is None:
        rule = _default_rule_for(grid2)
    tab2 = GeometryTables(grid2, rule)
    direct = tab2.g
    G = np.einsum("jqdm,jqdk->jqmk", tab2.jac, tab2.jac)
    if grid2.dim == 1:
        gram = np.sqrt(G[..., 0, 0])
    else:
        gram = np.sqrt(np.maximum(
            G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0], 0.0))
    res = np.abs(direct - gram)
    # composed path: pull the jacobian back through the affine factor R
    ev = grid2.reference.element_vertices()
    lin = np.swapaxes(ev[:, 1:] - ev[:, :1], 1, 2)  # (J, d, m)
    scale = np.abs(np.linalg.det(np.einsum("jdm,jdk->jmk", lin, lin))) ** 0.5
    R = np.linalg.qr(lin)[1]  # (J, m, m)
    jac_tau = np.einsum("jqdm,jmk->jqdk", tab2.jac, np.linalg.inv(R))
    if grid2.dim == 1:
        g_tau = np.linalg.norm(jac_tau[..., 0], axis=-1)
    else:
        g_tau = np.linalg.norm(np.cross(jac_tau[..., 0], jac_tau[..., 1]), axis=-1)
    composed = g_tau * scale[:, None]
    res = np.maximum(res, np.abs(direct - composed))
    return float((res / np.maximum(direct, 1e-300)).max())


# -- snapshot export ----------------------------------------------------------


def export_polyline(grid, path, samples_per_element=10):
    """Dense polyline sampling of a curve grid (one block per element)."""
    if grid.dim != 1:
        raise GeomflowError("polyline export applies to curves")
    t = np.linspace(0.0, 1.0, samples_per_element + 1).reshape(-1, 1)
    phi = grid.basis.eval(t)  # (s+1, n)
    pts = np.einsum("sn,jnd->jsd", phi, grid.element_coords())
    with open(path, "w") as f:
        f.write(f"# geomflow curve snapshot: {grid.n_elements} elements, "
                f"degree {grid.degree}\n")
        for block in pts:
            for p in block:
                f.write(" ".join(f"{x:.17g}" for x in p) + "\n")
            f.write("\n")


def export_vtk_polydata(grid, path, subdivision=None, rule=None):
    """Legacy-VTK POLYDATA export of a surface grid.

    Curved triangles are subdivided ``subdivision`` times per edge (default
    degree+1); the quadrature area of each curved element is attached as cell
    data on its sub-triangles.
    """
    if grid.dim != 2:
        raise GeomflowError("VTK POLYDATA export applies to surfaces")
    depth = subdivision or (grid.degree + 1)
    if rule is None:
        rule = _default_rule_for(grid)
    areas = GeometryTables(grid, rule).element_measures()

    # lattice of the subdivided reference triangle
    pts = []
    index = {}
    for i in range(depth + 1):
        for j in range(depth + 1 - i):
            index[(i, j)] = len(pts)
            pts.append((i / depth, j / depth))
    sub_tris = []
    for i in range(depth):
        for j in range(depth - i):
            sub_tris.append((index[(i, j)], index[(i + 1, j)], index[(i, j + 1)]))
            if i + j < depth - 1:
                sub_tris.append(
                    (index[(i + 1, j)], index[(i + 1, j + 1)], index[(i, j + 1)])
                )
    lattice = np.array(pts)
    phi = grid.basis.eval(lattice)  # (L, n)
    mapped = np.einsum("ln,jnd->jld", phi, grid.element_coords())

    n_loc = lattice.shape[0]
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("geomflow surface snapshot\n")
        f.write("ASCII\nDATASET POLYDATA\n")
        f.write(f"POINTS {grid.n_elements * n_loc} double\n")
        for block in mapped:
            for p in block:
                f.write(" ".join(f"{x:.17g}" for x in p) + "\n")
        n_cells = grid.n_elements * len(sub_tris)
        f.write(f"POLYGONS {n_cells} {4 * n_cells}\n")
        for j in range(grid.n_elements):
            base = j * n_loc
            for a, b, c in sub_tris:
                f.write(f"3 {base + a} {base + b} {base + c}\n")
        f.write(f"CELL_DATA {n_cells}\n")
        f.write("SCALARS element_area double 1\nLOOKUP_TABLE default\n")
        for j in range(grid.n_elements):
            for _ in sub_tris:
                f.write(f"{areas[j]:.17g}\n")
