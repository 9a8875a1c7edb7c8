"""Error measurement between parametrized grids.

L-infinity errors against exact circles/spheres, and the projected L^2
distance between two grids: quadrature points of the first grid are
projected onto the second via a kd-tree over element centers followed by a
constrained closest-point least-squares solve on the reference simplex.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeomflowError
from .fem import default_rule
from .geometry import GeometryTables

LM_TOL = 1e-12
LM_MAX_ITER = 100
DEFAULT_KNN = 8


class CenterCloud:
    """kd-tree over the element-barycenter images of a target grid."""

    def __init__(self, grid):
        self.grid = grid
        center = np.full((1, grid.dim), 1.0 / (grid.dim + 1))
        phi = grid.basis.eval(center)[0]
        self.points = np.einsum("n,jnd->jd", phi, grid.element_coords())
        self.tree = cKDTree(self.points)

    def knn(self, points, k):
        """Indices of the k nearest-center elements for each query point."""
        k = min(k, self.grid.n_elements)
        _, idx = self.tree.query(np.atleast_2d(points), k=k)
        return np.atleast_2d(idx.reshape(-1, k))


@dataclass
class ClosestPointResult:
    element: int
    xhat: np.ndarray
    sq_distance: float
    converged: bool
    iterations: int


def _project_simplex(x, dim):
    """Closest point of the unit simplex in reference coordinates."""
    if dim == 1:
        return np.clip(x, 0.0, 1.0)
    a, b = x[:, 0], x[:, 1]
    inside = (a >= 0) & (b >= 0) & (a + b <= 1)
    cands = np.stack([
        np.stack([np.clip(a, 0, 1), np.zeros_like(a)], axis=1),
        np.stack([np.zeros_like(b), np.clip(b, 0, 1)], axis=1),
        np.stack([np.clip((a - b + 1) / 2, 0, 1),
                  1 - np.clip((a - b + 1) / 2, 0, 1)], axis=1),
    ])  # (3, P, 2)
    d2 = ((cands - x) ** 2).sum(axis=2)
    best = cands[np.argmin(d2, axis=0), np.arange(x.shape[0])]
    return np.where(inside[:, None], x, best)


def _closest_point_batch(points, grid, elems):
    """Projected-step Levenberg-Marquardt for many (point, element) pairs.

    Returns (xhat, sq_distance, converged, iterations) arrays over pairs.
    """
    points = np.atleast_2d(points)
    elems = np.atleast_1d(elems)
    P, m = points.shape[0], grid.dim
    basis = grid.basis
    Xp = grid.coords[grid.dofmap.element_dofs[elems]]  # (P, n, d)

    def residual(x, sel):
        phi = basis.eval(x)
        r = np.einsum("pn,pnd->pd", phi, Xp[sel]) - points[sel]
        return r, (r * r).sum(axis=1)

    xhat = np.full((P, m), 1.0 / (m + 1))
    all_idx = np.arange(P)
    r, f = residual(xhat, all_idx)
    lam = np.full(P, 1e-3)
    iters = np.zeros(P, dtype=int)
    converged = np.zeros(P, dtype=bool)
    active = np.ones(P, dtype=bool)
    eye = np.eye(m)

    for _ in range(LM_MAX_ITER):
        sel = np.where(active)[0]
        if sel.size == 0:
            break
        iters[sel] += 1
        dphi = basis.grad(xhat[sel])  # (s, n, m)
        jac = np.einsum("pnm,pnd->pdm", dphi, Xp[sel])
        grad = np.einsum("pdm,pd->pm", jac, r[sel])
        gnorm = np.linalg.norm(grad, axis=1)
        H = np.einsum("pdm,pdk->pmk", jac, jac)
        Hd = H + lam[sel, None, None] * eye
        try:
            step = -np.linalg.solve(Hd, grad[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = -grad  # fall back to steepest descent on singular H
        trial = _project_simplex(xhat[sel] + step, m)
        snorm = np.linalg.norm(trial - xhat[sel], axis=1)
        r_t, f_t = residual(trial, sel)
        accept = f_t < f[sel]
        xhat[sel[accept]] = trial[accept]
        r[sel[accept]] = r_t[accept]
        f[sel[accept]] = f_t[accept]
        lam[sel[accept]] *= 0.1
        lam[sel[~accept]] *= 10.0
        done = (snorm < LM_TOL) | (gnorm < LM_TOL)
        converged[sel[done]] = True
        active[sel[done]] = False
    return xhat, f, converged, iters


def closest_point(p, grid2, j):
    """Constrained closest point of ``p`` on element ``j`` of ``grid2``."""
    p = np.asarray(p, dtype=float)
    xhat, f, conv, iters = _closest_point_batch(p[None, :], grid2, np.array([j]))
    return ClosestPointResult(int(j), xhat[0], float(f[0]), bool(conv[0]),
                              int(iters[0]))


def dist_point_to_grid(p, grid2, cloud=None, k=DEFAULT_KNN):
    """Distance from a point to a grid via k nearest-center candidates."""
    if k < 1:
        raise GeomflowError(f"k must be >= 1, got {k}")
    if cloud is None:
        cloud = CenterCloud(grid2)
    p = np.asarray(p, dtype=float)
    cand = cloud.knn(p[None, :], k)[0]
    pts = np.repeat(p[None, :], cand.size, axis=0)
    _, f, _, _ = _closest_point_batch(pts, grid2, cand)
    return float(np.sqrt(f.min()))


def _pointwise_distances(grid1, grid2, rule, k, cloud):
    tab = GeometryTables(grid1, rule)
    pts = tab.pos.reshape(-1, grid1.ambient_dim)
    cand = cloud.knn(pts, k)  # (P, k)
    kk = cand.shape[1]
    rep = np.repeat(pts, kk, axis=0)
    _, f, _, _ = _closest_point_batch(rep, grid2, cand.ravel())
    d = np.sqrt(f.reshape(-1, kk).min(axis=1))
    return d.reshape(tab.g.shape), tab


def projected_distance(grid1, grid2, rule=None, k=DEFAULT_KNN, norm="l2"):
    """Projected distance of grid1 to grid2 under the L2/L1/Linf reduction.

    L2 is the quadrature norm of the pointwise distance over grid1, L1 its
    manifold integral, Linf the maximum over quadrature points (a one-sided
    Hausdorff proxy).
    """
    if grid1.ambient_dim != grid2.ambient_dim:
        raise GeomflowError("grids live in different ambient dimensions")
    if rule is None:
        rule = default_rule(grid1.degree, grid1.dim)
    if not rule.positive_weights:
        raise GeomflowError("projected distance requires positive quadrature weights")
    cloud = CenterCloud(grid2)
    d, tab = _pointwise_distances(grid1, grid2, rule, k, cloud)
    if norm == "l2":
        return float(np.sqrt(np.einsum("jq,jq,q->", d * d, tab.g, tab.weights)))
    if norm == "l1":
        return float(np.einsum("jq,jq,q->", d, tab.g, tab.weights))
    if norm == "linf":
        return float(d.max())
    raise GeomflowError(f"unknown norm {norm!r} (choose l2, l1 or linf)")


def l2_projected_distance(grid1, grid2, rule=None, k=DEFAULT_KNN):
    """The projected L2 distance d_L2(Gamma_1, Gamma_2)."""
    return projected_distance(grid1, grid2, rule=rule, k=k, norm="l2")


def linf_error_exact(grid, target, rule=None):
    """Max over quadrature points of the distance to a centered circle/sphere.

    ``target`` is a shape with attribute ``r`` (circle or sphere) or a plain
    radius.
    """
    r = getattr(target, "r", target)
    r = float(r)
    if r <= 0:
        raise GeomflowError(f"target radius must be positive, got {r}")
    if rule is None:
        rule = default_rule(grid.degree, grid.dim)
    tab = GeometryTables(grid, rule)
    return float(np.abs(np.linalg.norm(tab.pos, axis=-1) - r).max())
