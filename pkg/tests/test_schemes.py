"""Scheme steps: assembly fixtures, exact-solution oracles, stability."""

import numpy as np
import pytest
from scipy.sparse.linalg import splu

from geomflow.errors import ConfigError, NonConvergenceError
from geomflow.fem import default_rule, gauss_rule_interval
from geomflow.geometry import enclosed_area, enclosed_volume, energy, interpolate_shape
from geomflow.metrics import linf_error_exact
from geomflow.refmesh import build_polygon, build_triangulation
from geomflow.schemes import (SchemeConfig, assemble_matrices,
                              discrete_curvature, evolve,
                              intermediate_normal_curve,
                              intermediate_normal_surface, step_bgn,
                              step_dziuk, step_sp)
from geomflow.shapes import Circle, Ellipse, Ellipsoid, Sphere


def circle_grid(n=32, degree=1, r=1.0):
    return interpolate_shape(build_polygon(Circle(r), n), degree)


# -- configuration -------------------------------------------------------------


def test_config_rejects_bad_combinations():
    with pytest.raises(ConfigError):
        SchemeConfig("sd", "dziuk")
    with pytest.raises(ConfigError):
        SchemeConfig("mcf", "sp")
    with pytest.raises(ConfigError):
        SchemeConfig("mcf", "bgn_quadrature", tau=-1.0)
    with pytest.raises(ConfigError):
        SchemeConfig("heat", "bgn_quadrature")
    with pytest.raises(ConfigError):
        SchemeConfig("mcf", "bgn_quadrature", degree=7)


def test_sp_quadrature_requirement():
    cfg = SchemeConfig("sd", "sp", degree=3, quad_order=3)
    with pytest.raises(ConfigError):
        cfg.rule(1)  # needs order >= 2*3 - 1 = 5
    cfg = SchemeConfig("sd", "sp", degree=3, quad_order=5)
    cfg.rule(1)


def test_bgn_exact_elevates_order():
    cfg = SchemeConfig("mcf", "bgn_exact", degree=1, quad_order=2)
    assert cfg.effective_order(1) == 4  # max(2, 2*1 + 2)
    cfg = SchemeConfig("mcf", "bgn_quadrature", degree=1, quad_order=2)
    assert cfg.effective_order(1) == 2


# -- assembly fixtures ----------------------------------------------------------


def square_p1_grid():
    # unit square, ccw; element 0 is the bottom edge (0,0)->(1,0)
    from geomflow.refmesh import ReferenceGrid

    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    elements = np.array([[0, 1], [1, 2], [2, 3], [3, 0]])
    return interpolate_shape(ReferenceGrid(vertices, elements), 1, shape=False)


def test_mass_matrix_analytic():
    grid = square_p1_grid()
    M, S, Ns, _ = assemble_matrices(grid, gauss_rule_interval(2))
    M = M.toarray()
    # each unit edge contributes [[1/3, 1/6], [1/6, 1/3]]
    assert M[0, 0] == pytest.approx(2.0 / 3.0, rel=1e-14)
    assert M[0, 1] == pytest.approx(1.0 / 6.0, rel=1e-14)
    assert M[0, 2] == pytest.approx(0.0, abs=1e-15)


def test_stiffness_matrix_analytic():
    grid = square_p1_grid()
    _, S, _, _ = assemble_matrices(grid, gauss_rule_interval(2))
    S = S.toarray()
    # each unit edge contributes [[1, -1], [-1, 1]]
    assert S[0, 0] == pytest.approx(2.0, rel=1e-14)
    assert S[0, 1] == pytest.approx(-1.0, rel=1e-14)
    # translations are in the nullspace
    assert np.abs(S @ np.ones(4)).max() < 1e-12


def test_normal_matrix_straight_segment():
    grid = square_p1_grid()
    _, _, Ns, _ = assemble_matrices(grid, gauss_rule_interval(2))
    Nx, Ny = Ns[0].toarray(), Ns[1].toarray()
    # bottom edge has normal (0, -1): x-component entries vanish there
    assert abs(Nx[0, 1]) < 1e-15 and abs(Nx[1, 0]) < 1e-15
    assert Ny[0, 1] == pytest.approx(-1.0 / 6.0, rel=1e-13)


def test_sparse_solver_matches_dense_oracle():
    grid = circle_grid(8, 1)
    cfg = SchemeConfig("mcf", "bgn_quadrature", degree=1, tau=1e-3)
    rule = cfg.rule(1)
    M, S, Ns, _ = assemble_matrices(grid, rule)
    from scipy import sparse

    d, K = 2, grid.n_nodes
    blocks = [[Ns[0], Ns[1], -cfg.tau * M],
              [S, None, Ns[0]],
              [None, S, Ns[1]]]
    A = sparse.bmat(blocks, format="csc")
    rhs = np.zeros(3 * K)
    rhs[:K] = Ns[0] @ grid.coords[:, 0] + Ns[1] @ grid.coords[:, 1]
    dense = np.linalg.solve(A.toarray(), rhs)
    res = step_bgn(grid, cfg, rule)
    got = np.concatenate([res.new_grid.coords[:, 0], res.new_grid.coords[:, 1],
                          res.curvature_dofs])
    assert np.allclose(got, dense, rtol=1e-10, atol=1e-12)


# -- exact-solution step oracles -------------------------------------------------


def test_bgn_circle_radius():
    grid = circle_grid(128, 1)
    res = step_bgn(grid, SchemeConfig("mcf", "bgn_quadrature", degree=1, tau=1e-4))
    r = np.linalg.norm(res.new_grid.coords, axis=1)
    assert np.abs(r - np.sqrt(1 - 2e-4)).max() < 1e-5


def test_dziuk_circle_radius():
    grid = circle_grid(128, 1)
    res = step_dziuk(grid, SchemeConfig("mcf", "dziuk", degree=1, tau=1e-4))
    r = np.linalg.norm(res.new_grid.coords, axis=1)
    assert np.abs(r - np.sqrt(1 - 2e-4)).max() < 1e-5


def test_dziuk_bgn_agree_on_circle():
    grid = circle_grid(256, 1)
    cfg_b = SchemeConfig("mcf", "bgn_quadrature", degree=1, tau=1e-4)
    cfg_d = SchemeConfig("mcf", "dziuk", degree=1, tau=1e-4)
    rb = np.linalg.norm(step_bgn(grid, cfg_b).new_grid.coords, axis=1)
    rd = np.linalg.norm(step_dziuk(grid, cfg_d).new_grid.coords, axis=1)
    assert np.abs(rb - rd).max() < 1e-8


def test_bgn_sphere_radius():
    ref = build_triangulation(Sphere(1.0), refinements=2)
    grid = interpolate_shape(ref, 1)
    res = step_bgn(grid, SchemeConfig("mcf", "bgn_quadrature", degree=1, tau=1e-4))
    # vertex radii track the exact flow; quadrature points sag by O(h^2)
    r = np.linalg.norm(res.new_grid.coords, axis=1)
    assert np.abs(r - np.sqrt(1 - 4e-4)).max() < 2e-3
    assert linf_error_exact(res.new_grid, np.sqrt(1 - 4e-4)) < 0.1


def test_sd_circle_stationary():
    grid = circle_grid(32, 2)
    A0 = enclosed_area(grid)
    res = step_bgn(grid, SchemeConfig("sd", "bgn_quadrature", degree=2, tau=1e-3))
    assert abs(enclosed_area(res.new_grid) - A0) / A0 < 1e-6


def test_dziuk_rejects_sd():
    grid = circle_grid(16, 1)
    cfg = SchemeConfig("sd", "bgn_quadrature", degree=1, tau=1e-3)
    with pytest.raises(ConfigError):
        step_dziuk(grid, cfg)


def test_step_is_pure():
    grid = circle_grid(32, 1)
    before = grid.coords.copy()
    step_bgn(grid, SchemeConfig("mcf", "bgn_quadrature", degree=1, tau=1e-3))
    assert np.array_equal(grid.coords, before)


def test_translation_equivariance():
    grid = circle_grid(32, 2)
    shift = np.array([3.0, -7.0])
    moved = grid.with_coords(grid.coords + shift)
    cfg = SchemeConfig("mcf", "bgn_quadrature", degree=2, tau=1e-3)
    a = step_bgn(grid, cfg)
    b = step_bgn(moved, cfg)
    assert np.allclose(b.new_grid.coords, a.new_grid.coords + shift, rtol=1e-10,
                       atol=1e-10)
    assert np.allclose(b.curvature_dofs, a.curvature_dofs, rtol=1e-8, atol=1e-10)


# -- discrete curvature and intermediate normals --------------------------------


def test_discrete_curvature_circle():
    grid = circle_grid(64, 2, r=2.0)
    kappa = discrete_curvature(grid)
    assert np.allclose(kappa, -0.5, atol=2e-3)  # kappa = -1/r with outward normal


def test_intermediate_normal_curve_trivial():
    grid = circle_grid(16, 2)
    xhat = np.array([0.4])
    n = intermediate_normal_curve(grid, grid, 3, xhat)
    from geomflow.geometry import frame_at

    assert np.allclose(n, frame_at(grid, 3, xhat).normal, atol=1e-13)
    translated = grid.with_coords(grid.coords + [1.0, 2.0])
    assert np.allclose(intermediate_normal_curve(grid, translated, 3, xhat), n,
                       atol=1e-13)
    doubled = grid.with_coords(2.0 * grid.coords)
    assert np.allclose(intermediate_normal_curve(grid, doubled, 3, xhat),
                       1.5 * n, atol=1e-13)


def test_intermediate_normal_surface_simpson_oracle():
    ref = build_triangulation(Sphere(1.0), refinements=1)
    grid = interpolate_shape(ref, 2)
    rng = np.random.default_rng(5)
    other = grid.with_coords(grid.coords + 0.1 * rng.normal(size=grid.coords.shape))
    xhat = np.array([0.2, 0.3])
    j = 7
    got = intermediate_normal_surface(grid, other, j, xhat)

    # oracle: average the Jacobian cross product along the straight line of
    # parametrizations with a 33-point Gauss rule in alpha
    dphi = grid.basis.grad(np.atleast_2d(xhat))[0]
    X0 = grid.coords[grid.dofmap[j]]
    X1 = other.coords[other.dofmap[j]]
    a, w = np.polynomial.legendre.leggauss(33)
    a = 0.5 * (a + 1)
    w = 0.5 * w
    acc = np.zeros(3)
    for ai, wi in zip(a, w):
        jac = np.einsum("nm,nd->dm", dphi, (1 - ai) * X0 + ai * X1)
        acc += wi * np.cross(jac[:, 0], jac[:, 1])
    jac0 = np.einsum("nm,nd->dm", dphi, X0)
    oracle = acc / np.linalg.norm(np.cross(jac0[:, 0], jac0[:, 1]))
    assert np.allclose(got, oracle, atol=1e-12)

    n0 = intermediate_normal_surface(grid, grid, j, xhat)
    assert np.linalg.norm(n0) == pytest.approx(1.0, rel=1e-13)


def test_intermediate_normal_surface_rotation():
    ref = build_triangulation(Sphere(1.0), refinements=1)
    grid = interpolate_shape(ref, 2)
    rng = np.random.default_rng(6)
    other = grid.with_coords(grid.coords + 0.1 * rng.normal(size=grid.coords.shape))
    Q = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    a = intermediate_normal_surface(grid, other, 3, np.array([0.25, 0.25]))
    b = intermediate_normal_surface(grid.with_coords(grid.coords @ Q.T),
                                    other.with_coords(other.coords @ Q.T),
                                    3, np.array([0.25, 0.25]))
    assert np.allclose(b, Q @ a, atol=1e-12)


# -- structure-preserving steps ---------------------------------------------------


def test_sp_circle_fixed_point():
    grid = circle_grid(64, 2)
    res = step_sp(grid, SchemeConfig("sd", "sp", degree=2, tau=1e-4))
    assert res.picard_iters <= 3
    assert np.abs(res.new_grid.coords - grid.coords).max() < 1e-6


def test_sp_conserves_area():
    grid = interpolate_shape(build_polygon(Ellipse(2, 1), 64), 2)
    cfg = SchemeConfig("sd", "sp", degree=2, tau=0.005)
    A0 = enclosed_area(grid)
    final, recs = evolve(grid, cfg, 10)
    assert abs(enclosed_area(final) - A0) / A0 < 1e-10


def test_sp_nonconvergence_error():
    grid = interpolate_shape(build_polygon(Ellipse(2, 1), 32), 1)
    cfg = SchemeConfig("sd", "sp", degree=1, tau=0.01, picard_max_iter=1)
    with pytest.raises(NonConvergenceError) as err:
        step_sp(grid, cfg)
    assert err.value.residual is not None


# -- evolve and stability ----------------------------------------------------------


def test_evolve_zero_steps():
    grid = circle_grid(16, 1)
    final, recs = evolve(grid, SchemeConfig("mcf", "bgn_quadrature", degree=1,
                                            tau=1e-3), 0)
    assert len(recs) == 1
    assert recs[0].step == 0
    assert recs[0].energy_norm == pytest.approx(1.0)
    assert final is grid


def test_evolve_error_annotated():
    # a huge MCF step past the extinction time must fail with step context
    grid = circle_grid(8, 1, r=0.1)
    cfg = SchemeConfig("mcf", "bgn_quadrature", degree=1, tau=0.5)
    with pytest.raises(Exception) as err:
        evolve(grid, cfg, 10)
    assert "at step" in str(err.value)


def test_dissipation_identity_bgn_mcf():
    # L^{m+1} - L^m <= -tau * (kappa, kappa)^h stepwise
    grid = interpolate_shape(build_polygon(Ellipse(2, 1), 48), 2)
    cfg = SchemeConfig("mcf", "bgn_quadrature", degree=2, tau=1e-3)
    rule = cfg.rule(1)
    for _ in range(5):
        L0 = energy(grid, rule)
        res = step_bgn(grid, cfg, rule)
        M, _, _, _ = assemble_matrices(grid, rule)
        dissipation = cfg.tau * res.curvature_dofs @ (M @ res.curvature_dofs)
        L1 = energy(res.new_grid, rule)
        assert L1 - L0 <= -dissipation + 1e-10 * L0
        grid = res.new_grid


def test_energy_stability_large_steps():
    grid = interpolate_shape(build_polygon(Ellipse(2, 1), 32), 2)
    for tau in (1e-3, 1e-2, 1e-1):
        cfg = SchemeConfig("sd", "bgn_quadrature", degree=2, tau=tau)
        _, recs = evolve(grid, cfg, 4)
        E = [r.energy for r in recs]
        assert all(E[i + 1] <= E[i] * (1 + 1e-10) for i in range(len(E) - 1))
