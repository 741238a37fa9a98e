"""Random boundary generators: norm bounds, radial laws, reproducibility."""

import numpy as np
import pytest
import scipy.linalg as sla
from scipy.stats import kstest

from schwarzdict import sampler as smp
from schwarzdict.elliptic import h12_weight_matrix, h12_norm
from schwarzdict.geometry import Grid1D
from schwarzdict.rte import rte_trace_norm, trace_weights


def line_nodes(n, h):
    # a closed rectangle perimeter: distinct nodes in the plane
    side = n // 4
    from schwarzdict.elliptic import perimeter_coords
    return perimeter_coords(0.0, 0.0, side, side, h)


def test_elliptic_interior_norm_equals_radius_law():
    h = 2 ** -5
    nodes = line_nodes(32, h)
    cfg = smp.SamplerConfig(radius=20.0, radial_exponent=5, seed=0, kind="elliptic-interior")
    rng = np.random.default_rng(0)
    W = h12_weight_matrix(nodes, h)
    for _ in range(50):
        tr = smp.sample_elliptic_interior(cfg, nodes, h, rng)
        r = np.sqrt(tr.values @ W @ tr.values)
        assert r <= 20.0 + 1e-10
        x = tr.values / r
        assert abs(np.sqrt(x @ W @ x) - 1.0) <= 1e-10


def test_elliptic_interior_radial_ks():
    h = 2 ** -5
    nodes = line_nodes(32, h)
    cfg = smp.SamplerConfig(radius=20.0, radial_exponent=5, seed=0, kind="elliptic-interior")
    rng = np.random.default_rng(1)
    W = h12_weight_matrix(nodes, h)
    chol = sla.cholesky(W, lower=False)
    # (r/R)^D should be uniform on [0, 1]
    draws = []
    for _ in range(4000):
        tr = smp.sample_elliptic_interior(cfg, nodes, h, rng, chol=chol)
        draws.append(np.sqrt(tr.values @ W @ tr.values))
    u = (np.array(draws) / 20.0) ** 5
    assert kstest(u, "uniform").statistic < 0.03


def test_elliptic_angular_uniformity_three_nodes():
    # with 3 nodes, C X is uniform on the Euclidean sphere; its z-coordinate
    # must be uniform on (-1, 1)
    h = 0.25
    nodes = np.array([[0.0, 0.0], [h, 0.0], [2 * h, 0.0]])
    cfg = smp.SamplerConfig(radius=1.0, radial_exponent=2, seed=0, kind="elliptic-interior")
    rng = np.random.default_rng(2)
    W = h12_weight_matrix(nodes, h)
    C = sla.cholesky(W, lower=False)
    zs = []
    for _ in range(6000):
        tr = smp.sample_elliptic_interior(cfg, nodes, h, rng)
        y = C @ tr.values
        y /= np.linalg.norm(y)
        zs.append(y[2])
    assert kstest(np.array(zs), "uniform", args=(-1.0, 2.0)).statistic < 0.03


def test_elliptic_boundary_budget_and_fixed_block():
    rng = np.random.default_rng(3)
    h = 0.125
    nodes = line_nodes(16, h)
    n = nodes.shape[0]
    free = np.ones(n, dtype=bool)
    free[:5] = False
    fixed_values = 0.3 * np.sin(np.arange(5))
    spec = smp.make_ellipsoid_spec(nodes, h, free, fixed_values)
    cfg = smp.SamplerConfig(radius=4.0, radial_exponent=5, seed=0, kind="elliptic-boundary")
    chol_rr = sla.cholesky(spec.blocks()[2], lower=False)
    budget2 = smp.ellipsoid_budget(4.0, spec, chol_rr)
    assert budget2 > 0
    for _ in range(50):
        tr = smp.sample_elliptic_boundary(cfg, spec, nodes, h, rng)
        assert np.array_equal(tr.values[:5], fixed_values)
        phi_r = tr.values[free]
        W_rr = spec.blocks()[2]
        assert phi_r @ W_rr @ phi_r <= budget2 + 1e-10


def test_elliptic_boundary_zero_fixed_reduces_to_interior_form():
    h = 0.125
    nodes = line_nodes(16, h)
    n = nodes.shape[0]
    free = np.ones(n, dtype=bool)
    free[:4] = False
    spec = smp.make_ellipsoid_spec(nodes, h, free, np.zeros(4))
    chol_rr = sla.cholesky(spec.blocks()[2], lower=False)
    assert smp.ellipsoid_budget(3.0, spec, chol_rr) == pytest.approx(9.0)


def test_elliptic_boundary_saturated_budget():
    h = 0.125
    nodes = line_nodes(16, h)
    n = nodes.shape[0]
    free = np.ones(n, dtype=bool)
    free[: n // 2] = False
    fixed = np.full(n // 2, 10.0)
    spec = smp.make_ellipsoid_spec(nodes, h, free, fixed)
    cfg = smp.SamplerConfig(radius=0.5, radial_exponent=5, seed=0, kind="elliptic-boundary")
    with pytest.raises(ValueError, match="exceeds sampling radius"):
        smp.sample_elliptic_boundary(cfg, spec, nodes, h, np.random.default_rng(0))


def test_rte_interior_bounds_and_nonnegativity():
    g = Grid1D.create(1.0, 0.125, 16)
    cfg = smp.SamplerConfig(radius=25.0, radial_exponent=2, seed=0, kind="rte-interior")
    rng = np.random.default_rng(4)
    for _ in range(200):
        tr = smp.sample_rte_interior(cfg, (g.v, g.w), rng)
        vec = tr.pack()
        assert np.all(vec >= 0)
        assert rte_trace_norm(tr, g.w) <= 25.0 + 1e-10


def test_rte_interior_norm_identity_and_radial_law():
    g = Grid1D.create(1.0, 0.125, 16)
    cfg = smp.SamplerConfig(radius=25.0, radial_exponent=2, seed=0, kind="rte-interior")
    rng = np.random.default_rng(5)
    tw = trace_weights(g.nv, g.w)
    rs = []
    for _ in range(4000):
        tr = smp.sample_rte_interior(cfg, (g.v, g.w), rng)
        vec = tr.pack()
        r2 = float(np.sum(tw * vec ** 2))
        rs.append(np.sqrt(r2))
    u = (np.array(rs) / 25.0) ** 2
    assert kstest(u, "uniform").statistic < 0.03


def test_rte_boundary_radius_deduction():
    g = Grid1D.create(1.0, 0.125, 8)
    tw = trace_weights(g.nv, g.w)
    fixed_mask = np.zeros(g.nv + 2, dtype=bool)
    fixed_mask[g.nv // 2:g.nv] = True
    fixed_mask[g.nv] = True
    fixed_vals = np.concatenate([np.full(g.nv // 2, 2.0), [1.5]])
    cfg = smp.SamplerConfig(radius=5.0, radial_exponent=2, seed=0, kind="rte-boundary")
    rng = np.random.default_rng(6)
    for _ in range(200):
        tr = smp.sample_rte_boundary(cfg, fixed_mask, fixed_vals, (g.v, g.w), rng)
        vec = tr.pack()
        assert np.all(vec >= 0)
        assert np.array_equal(vec[fixed_mask], fixed_vals)
        assert np.sqrt(np.sum(tw * vec ** 2)) <= 5.0 + 1e-10


def test_rte_boundary_saturated_fixed_block():
    g = Grid1D.create(1.0, 0.125, 8)
    fixed_mask = np.zeros(g.nv + 2, dtype=bool)
    fixed_mask[g.nv] = True
    cfg = smp.SamplerConfig(radius=1.0, radial_exponent=2, seed=0, kind="rte-boundary")
    with pytest.raises(ValueError, match="exceeds"):
        smp.sample_rte_boundary(cfg, fixed_mask, np.array([2.0]), (g.v, g.w),
                                np.random.default_rng(0))
    # exactly saturated: free block must come back zero
    tr = smp.sample_rte_boundary(cfg, fixed_mask, np.array([1.0]), (g.v, g.w),
                                 np.random.default_rng(0))
    vec = tr.pack()
    assert np.all(vec[~fixed_mask] == 0.0)


def test_stream_reproducibility_and_independence():
    a = smp.stream(42, 3, 7).standard_normal(5)
    b = smp.stream(42, 3, 7).standard_normal(5)
    c = smp.stream(42, 3, 8).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        smp.SamplerConfig(radius=-1.0, radial_exponent=2, seed=0, kind="rte-interior")
    with pytest.raises(ValueError):
        smp.SamplerConfig(radius=1.0, radial_exponent=0, seed=0, kind="rte-interior")
    with pytest.raises(ValueError):
        smp.SamplerConfig(radius=1.0, radial_exponent=2, seed=0, kind="bogus")
