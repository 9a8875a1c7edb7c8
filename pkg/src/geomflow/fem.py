"""Lagrange bases on the reference simplex and positive-weight quadrature rules."""

import numpy as np

from .errors import GeomflowError

MAX_DEGREE = 4


def _interval_lattice(degree):
    return (np.arange(degree + 1) / degree).reshape(-1, 1) if degree > 0 else None


def _triangle_lattice(degree):
    pts = []
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            pts.append((i / degree, j / degree))
    return np.array(pts)


def _monomial_exponents(degree, dim):
    if dim == 1:
        return [(k,) for k in range(degree + 1)]
    return [(a, b) for a in range(degree + 1) for b in range(degree + 1 - a)]


class LagrangeBasis:
    """Degree-``degree`` Lagrange basis on the unit interval or unit triangle.

    Nodes are equispaced lattice points; evaluation goes through a monomial
    Vandermonde inverse, which is well conditioned for degree <= 4.
    """

    def __init__(self, degree, dim):
        if not 1 <= degree <= MAX_DEGREE:
            raise GeomflowError(f"unsupported degree {degree} (supported: 1..{MAX_DEGREE})")
        if dim not in (1, 2):
            raise GeomflowError(f"unsupported reference dimension {dim}")
        self.degree = degree
        self.dim = dim
        self.nodes = _interval_lattice(degree) if dim == 1 else _triangle_lattice(degree)
        self.n_dofs = self.nodes.shape[0]
        self._exponents = _monomial_exponents(degree, dim)
        V = self._monomials(self.nodes)
        self._coeffs = np.linalg.inv(V)  # (n_monomials, n_dofs)

    def _monomials(self, x):
        x = np.asarray(x, dtype=float)
        cols = []
        for exp in self._exponents:
            m = np.ones(x.shape[:-1])
            for axis, p in enumerate(exp):
                if p:
                    m = m * x[..., axis] ** p
            cols.append(m)
        return np.stack(cols, axis=-1)

    def _monomial_grads(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (len(self._exponents), self.dim))
        for k, exp in enumerate(self._exponents):
            for axis in range(self.dim):
                p = exp[axis]
                if p == 0:
                    continue
                g = p * np.ones(x.shape[:-1])
                for other, q in enumerate(exp):
                    qq = q - 1 if other == axis else q
                    if qq:
                        g = g * x[..., other] ** qq
                out[..., k, axis] = g
        return out

    def eval(self, xhat):
        """Basis values at reference point(s); output shape (..., n_dofs)."""
        xhat = np.atleast_1d(np.asarray(xhat, dtype=float))
        if xhat.shape[-1] != self.dim:
            raise GeomflowError(f"expected points with {self.dim} coordinate(s)")
        return self._monomials(xhat) @ self._coeffs

    def grad(self, xhat):
        """Basis gradients at reference point(s); output shape (..., n_dofs, dim)."""
        xhat = np.atleast_1d(np.asarray(xhat, dtype=float))
        if xhat.shape[-1] != self.dim:
            raise GeomflowError(f"expected points with {self.dim} coordinate(s)")
        dm = self._monomial_grads(xhat)
        return np.einsum("...md,mn->...nd", dm, self._coeffs)

    def __repr__(self):
        return f"LagrangeBasis(degree={self.degree}, dim={self.dim})"


_BASIS_CACHE = {}


def lagrange_basis(degree, dim):
    """Cached Lagrange basis factory."""
    key = (degree, dim)
    if key not in _BASIS_CACHE:
        _BASIS_CACHE[key] = LagrangeBasis(degree, dim)
    return _BASIS_CACHE[key]


class QuadratureRule:
    """Quadrature points/weights on the reference simplex with declared exactness."""

    def __init__(self, points, weights, exactness_order, dim):
        self.points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
        if self.points.shape[0] == 1 and self.points.shape[1] != dim:
            self.points = self.points.T
        self.weights = np.ascontiguousarray(weights, dtype=float)
        self.exactness_order = int(exactness_order)
        self.dim = dim
        self.n_points = self.points.shape[0]
        self.positive_weights = bool(np.all(self.weights > 0))

    @property
    def cache_key(self):
        return (self.dim, self.points.tobytes(), self.weights.tobytes())

    def integrate(self, values):
        """Weighted sum over the last axis."""
        return np.asarray(values) @ self.weights

    def __repr__(self):
        return (f"QuadratureRule(dim={self.dim}, Q={self.n_points}, "
                f"order={self.exactness_order})")


def gauss_rule_interval(order):
    """Gauss-Legendre rule on [0, 1] exact of the requested order.

    Uses ceil((order+1)/2) points; with order >= 2*degree - 1 it satisfies
    the unisolvence requirement Q >= degree + 1.
    """
    if order < 1:
        raise GeomflowError("order must be >= 1")
    n = (order + 2) // 2
    x, w = np.polynomial.legendre.leggauss(n)
    points = 0.5 * (x + 1.0)
    weights = 0.5 * w
    return QuadratureRule(points.reshape(-1, 1), weights, 2 * n - 1, dim=1)


def lumped_endpoint_rule():
    """Two-point endpoint rule on [0, 1] (the lumped-mass inner product)."""
    return QuadratureRule(np.array([[0.0], [1.0]]), np.array([0.5, 0.5]), 1, dim=1)


def quad_rule_triangle(order):
    """Positive-weight rule on the unit triangle, exact of the requested order.

    Built by the Duffy transform: the square (u, v) -> (u, v*(1-u)) with a
    tensor Gauss-Legendre grid. Weights stay positive at any order, at the
    cost of more points than optimal cubature.
    """
    if order < 1:
        raise GeomflowError("order must be >= 1")
    # a monomial x^a y^b, a+b <= order, pulls back to u^a (1-u)^(b+1) v^b:
    # degree order+1 in u and order in v.
    nu = (order + 3) // 2
    nv = (order + 2) // 2
    xu, wu = np.polynomial.legendre.leggauss(nu)
    xv, wv = np.polynomial.legendre.leggauss(nv)
    u = 0.5 * (xu + 1.0)
    v = 0.5 * (xv + 1.0)
    wu = 0.5 * wu
    wv = 0.5 * wv
    U, V = np.meshgrid(u, v, indexing="ij")
    points = np.stack([U, V * (1.0 - U)], axis=-1).reshape(-1, 2)
    weights = (np.outer(wu * (1.0 - u), wv)).reshape(-1)
    return QuadratureRule(points, weights, order, dim=2)


def default_rule(degree, dim, order=None):
    """The run-level default rule: Gauss of order 10*degree unless overridden."""
    if order is None:
        order = 10 * degree
    return gauss_rule_interval(order) if dim == 1 else quad_rule_triangle(order)


def monomial_integral_simplex(exponents):
    """Exact integral of a monomial over the unit interval or unit triangle.

    1d: integral of x^a = 1/(a+1); 2d: integral of x^a y^b = a! b! / (a+b+2)!.
    """
    from math import factorial

    if len(exponents) == 1:
        return 1.0 / (exponents[0] + 1)
    a, b = exponents
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def check_exactness(rule, order=None, rtol=1e-12):
    """Verify declared exactness against the analytic monomial oracle.

    Returns the maximum relative error over all monomials of total degree
    <= order; raises on clear violation.
    """
    if order is None:
        order = rule.exactness_order
    worst = 0.0
    for exp in _monomial_exponents(order, rule.dim):
        vals = np.ones(rule.n_points)
        for axis, p in enumerate(exp):
            if p:
                vals = vals * rule.points[:, axis] ** p
        approx = rule.integrate(vals)
        exact = monomial_integral_simplex(exp)
        err = abs(approx - exact) / abs(exact)
        worst = max(worst, err)
    if worst > rtol:
        raise GeomflowError(
            f"rule {rule!r} misses declared exactness {order}: rel err {worst:.3e}"
        )
    return worst


def check_unisolvence(degree, rule):
    """Assumption (quadrature unisolvence): degree-``degree`` polynomials vanishing
    at all quadrature points vanish identically. Checked by the rank of the
    n_dofs x Q evaluation matrix."""
    basis = lagrange_basis(degree, rule.dim)
    E = basis.eval(rule.points)  # (Q, n_dofs)
    return np.linalg.matrix_rank(E) == basis.n_dofs
