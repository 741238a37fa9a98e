"""Elliptic solver: media formula, Newton solve, norms, convergence order."""

import numpy as np
import pytest

from schwarzdict import elliptic as el


def test_media_closed_form_at_origin():
    # 2 + 0 + 2/3.8 + 2/3.8
    assert el.media_eval(0.25, 0.0, 0.0) == pytest.approx(2 + 4 / 3.8, abs=1e-14)


def test_media_fast_part_periodicity():
    eps = 2 ** -4
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, size=(64, 2))

    def fast(x, y):
        return el.media_eval(eps, x, y) - (2.0 + np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))

    a = fast(pts[:, 0], pts[:, 1])
    b = fast(pts[:, 0] + eps, pts[:, 1] + eps)
    assert np.max(np.abs(a - b)) <= 1e-12


def test_media_positivity_on_grid():
    xs = np.linspace(0, 1, 1024)
    vals = el.media_eval(2 ** -3, xs[:, None], xs[None, :])
    assert vals.min() > 0.2


def test_zero_trace_gives_zero_field():
    tr = np.zeros(2 * (8 + 8))
    u = el.solve_rectangle(el.Media(0.25), 0.0, 0.0, 8, 8, 1 / 8, tr)
    assert np.array_equal(u, np.zeros((9, 9)))


def test_maximum_principle_constant_trace():
    c = 2.0
    nx = ny = 16
    tr = np.full(2 * (nx + ny), c)
    u = el.solve_rectangle(el.Media(0.25), 0.0, 0.0, nx, ny, 1 / 16, tr)
    assert u.min() >= -1e-12
    assert u.max() <= c + 1e-8


def manufactured_error(n):
    """-lap u + u^3 = g with exact u = sin(pi x) sin(pi y); the source was
    derived symbolically so the production solver is checked end to end."""
    h = 1.0 / n
    xs = np.arange(n + 1) * h
    exact = np.sin(np.pi * xs[:, None]) * np.sin(np.pi * xs[None, :])

    def g(x, y):
        e = np.sin(np.pi * x) * np.sin(np.pi * y)
        return 2 * np.pi ** 2 * e + e ** 3

    u = el.solve_rectangle(el.ConstantMedia(1.0), 0.0, 0.0, n, n, h,
                           np.zeros(4 * n), source=g)
    return h * np.sqrt(np.sum((u - exact) ** 2))


def test_manufactured_solution_second_order():
    e1 = manufactured_error(16)
    e2 = manufactured_error(32)
    rate = np.log2(e1 / e2)
    assert 1.8 <= rate <= 2.2


def test_solver_second_order_against_fine_solve():
    """Grid refinement of the production solver on the oscillatory problem:
    the h vs h/2 solution difference shrinks under refinement."""
    media = el.Media(0.25)
    from schwarzdict.geometry import Grid2D
    sols = {}
    for n in (32, 64, 128):
        g = Grid2D(1.0, n)
        sols[n] = el.solve_global(media, g, lambda x, y: el.benchmark_boundary(x, y))
    d1 = el.relative_error_2d(sols[64], sols[32], 1 / 32)
    d2 = el.relative_error_2d(sols[128], sols[64], 1 / 64)
    assert d2 < d1
    assert d1 / d2 == pytest.approx(4.0, rel=0.5)


def test_global_solve_determinism():
    from schwarzdict.geometry import Grid2D
    g = Grid2D(1.0, 32)
    a = el.solve_global(el.Media(0.25), g, lambda x, y: el.benchmark_boundary(x, y))
    b = el.solve_global(el.Media(0.25), g, lambda x, y: el.benchmark_boundary(x, y))
    assert np.array_equal(a, b)


def test_reflection_symmetry_constant_media():
    # symmetric media + symmetric data -> solution symmetric under x-reflection
    n = 32
    h = 1.0 / n
    ii, jj = np.arange(n + 1), np.arange(n + 1)
    from schwarzdict.elliptic import trace_from_function
    tr = trace_from_function(0.0, 0.0, n, n, h,
                             lambda x, y: np.sin(np.pi * x) + 0.5 * y * (1 - y))
    u = el.solve_rectangle(el.ConstantMedia(2.0), 0.0, 0.0, n, n, h, tr.values)
    assert np.max(np.abs(u - u[::-1, :])) <= 1e-9


def test_newton_failure_raises_with_residual():
    tr = np.full(2 * (8 + 8), 1.0)
    with pytest.raises(el.SolverFailure) as e:
        el.solve_rectangle(el.Media(0.25), 0.0, 0.0, 8, 8, 1 / 8, tr,
                           el.NewtonOpts(tol=1e-10, max_iter=1, max_damping=0))
    assert e.value.residual > 0


def test_h12_weight_matrix_matches_double_sum():
    rng = np.random.default_rng(3)
    n = 16
    h = 1 / 32
    nodes = np.column_stack([np.linspace(0, 0.5, n), np.zeros(n)])
    nodes[:, 1] += rng.uniform(0, 0.3, n)  # keep nodes distinct, off a line
    phi = rng.standard_normal(n)
    W = el.h12_weight_matrix(nodes, h)
    quad = phi @ W @ phi
    brute = h * np.sum(phi ** 2)
    for i in range(n):
        for j in range(n):
            if i != j:
                brute += h * h * (phi[i] - phi[j]) ** 2 / np.sum((nodes[i] - nodes[j]) ** 2)
    assert quad == pytest.approx(brute, rel=1e-12)
    assert np.allclose(W, W.T)
    np.linalg.cholesky(W)  # positive definite


def test_h12_norm_constant_trace():
    n = 12
    h = 0.25
    nodes = np.column_stack([np.arange(n) * h, np.zeros(n)])
    tr = el.EllipticTrace(values=np.ones(n), nodes=nodes, h=h)
    assert el.h12_norm(tr) == pytest.approx(np.sqrt(n * h), rel=1e-12)
    zero = el.EllipticTrace(values=np.zeros(n), nodes=nodes, h=h)
    assert el.h12_norm(zero) == 0.0


def test_h12_weight_matrix_rejects_duplicates():
    nodes = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        el.h12_weight_matrix(nodes, 0.1)


def test_l2_norm_and_relative_error():
    h = 1 / 8
    u = np.ones((9, 9))
    assert el.l2_norm_2d(u, h) == pytest.approx(h * 9)
    assert el.relative_error_2d(u, u, h) == 0.0
    assert el.relative_error_2d(u, np.zeros_like(u), h) == 1.0


def test_relative_error_subsampling():
    n = 16
    xs = np.arange(n + 1) / n
    coarse = np.sin(xs[:, None] + 2 * xs[None, :])
    xf = np.arange(2 * n + 1) / (2 * n)
    fine = np.sin(xf[:, None] + 2 * xf[None, :])
    assert el.relative_error_2d(fine, coarse, 1 / n) == 0.0
