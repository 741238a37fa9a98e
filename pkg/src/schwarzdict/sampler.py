"""Random boundary-condition generators for the offline stage.

All samplers draw radius and direction independently.  Directions are
Gaussian vectors mapped through the inverse Cholesky factor of the governing
quadratic form, which makes them uniform on that norm's unit sphere; radii
follow the power law that makes (r/R)^D uniform on [0, 1] (D = 2 for the
kinetic traces).  Boundary patches keep their physical segment fixed and
sample only the free block, with the radius budget shrunk accordingly
(ellipsoid via the Schur complement for the elliptic norm, Pythagorean
deduction for the kinetic one).

Streams are split per (patch, sample index) so offline builds are
reproducible regardless of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .elliptic import EllipticTrace, h12_weight_matrix
from .rte import RteTrace, trace_weights

__all__ = [
    "SamplerConfig",
    "EllipsoidSpec",
    "stream",
    "sample_elliptic_interior",
    "sample_elliptic_boundary",
    "sample_rte_interior",
    "sample_rte_boundary",
    "make_ellipsoid_spec",
]

_KINDS = ("elliptic-interior", "elliptic-boundary", "rte-interior", "rte-boundary")


@dataclass(frozen=True)
class SamplerConfig:
    radius: float                 # ball radius R
    radial_exponent: int          # D; (r/R)^D is uniform
    seed: int
    kind: str

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.radial_exponent < 1:
            raise ValueError("radial exponent must be >= 1")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")


def stream(seed: int, patch: int, index: int) -> np.random.Generator:
    """Independent generator for one (patch, sample) pair of an offline run."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(patch, index)))


@dataclass
class EllipsoidSpec:
    """Partitioned weight matrix of a boundary patch: ``free`` marks the
    trace positions to be sampled, the rest carry the fixed physical data."""

    W: np.ndarray
    free: np.ndarray           # boolean mask over trace positions
    phi_fixed: np.ndarray      # values on the fixed positions

    def blocks(self):
        f, d = self.free, ~self.free
        return self.W[np.ix_(d, d)], self.W[np.ix_(d, f)], self.W[np.ix_(f, f)]


def make_ellipsoid_spec(nodes: np.ndarray, h: float, free_mask: np.ndarray,
                        fixed_values: np.ndarray) -> EllipsoidSpec:
    return EllipsoidSpec(W=h12_weight_matrix(nodes, h), free=np.asarray(free_mask, bool),
                         phi_fixed=np.asarray(fixed_values, float))


def _radius(rng: np.random.Generator, R: float, D: int) -> float:
    return R * rng.uniform() ** (1.0 / D)


def sample_elliptic_interior(cfg: SamplerConfig, nodes: np.ndarray, h: float,
                             rng: np.random.Generator,
                             chol: np.ndarray | None = None) -> EllipticTrace:
    """Draw a boundary condition uniform-in-angle on the H^{1/2} sphere with
    power-law radius; the returned trace has H^{1/2} norm r <= R exactly.

    ``chol`` may carry the precomputed upper Cholesky factor of the weight
    matrix (W = C' C) to amortize repeated draws on one patch.
    """
    if cfg.kind != "elliptic-interior":
        raise ValueError(f"config kind {cfg.kind!r} does not match the interior sampler")
    nodes = np.asarray(nodes, dtype=float)
    if chol is None:
        chol = sla.cholesky(h12_weight_matrix(nodes, h), lower=False)
    y = rng.standard_normal(nodes.shape[0])
    z = sla.solve_triangular(chol, y, lower=False)
    x = z / np.linalg.norm(y)          # |z|_W = |y|_2 exactly
    r = _radius(rng, cfg.radius, cfg.radial_exponent)
    return EllipticTrace(values=r * x, nodes=nodes, h=h)


def sample_elliptic_boundary(cfg: SamplerConfig, spec: EllipsoidSpec, nodes: np.ndarray,
                             h: float, rng: np.random.Generator,
                             chol_rr: np.ndarray | None = None,
                             budget2: float | None = None) -> EllipticTrace:
    """Sample the free block of a boundary-patch trace inside the ellipsoid
    phi_r' W_rr phi_r <= R^2 - phi_d' (W_dd - W_dr W_rr^{-1} W_rd) phi_d,
    keeping the physical block fixed."""
    if cfg.kind != "elliptic-boundary":
        raise ValueError(f"config kind {cfg.kind!r} does not match the boundary sampler")
    _, _, W_rr = spec.blocks()
    if chol_rr is None:
        chol_rr = sla.cholesky(W_rr, lower=False)
    if budget2 is None:
        budget2 = ellipsoid_budget(cfg.radius, spec, chol_rr)
    if budget2 < 0:
        raise ValueError("fixed boundary data exceeds sampling radius")
    n_free = int(np.sum(spec.free))
    y = rng.standard_normal(n_free)
    z = sla.solve_triangular(chol_rr, y, lower=False)
    x = z / np.linalg.norm(y)
    r = np.sqrt(budget2) * rng.uniform() ** (1.0 / cfg.radial_exponent)
    values = np.empty(spec.free.shape[0])
    values[~spec.free] = spec.phi_fixed
    values[spec.free] = r * x
    return EllipticTrace(values=values, nodes=np.asarray(nodes, float), h=h)


def ellipsoid_budget(R: float, spec: EllipsoidSpec, chol_rr: np.ndarray) -> float:
    """R^2 minus the Schur-complement energy of the fixed block."""
    W_dd, W_dr, W_rr = spec.blocks()
    phi_d = spec.phi_fixed
    if phi_d.size == 0:
        return R * R
    t = W_dr.T @ phi_d
    s = sla.cho_solve((chol_rr, False), t)
    return float(R * R - phi_d @ W_dd @ phi_d + t @ s)


def _rte_direction(rng: np.random.Generator, weights: np.ndarray) -> np.ndarray:
    """Nonnegative direction of weighted norm 1: Gaussian scaled by the
    inverse square-root weights, reflected into the nonnegative orthant by
    componentwise absolute value, then renormalized."""
    y = rng.standard_normal(weights.shape[0])
    z = np.abs(y / np.sqrt(weights))
    return z / np.sqrt(np.sum(weights * z * z))


def sample_rte_interior(cfg: SamplerConfig, quadrature, rng: np.random.Generator) -> RteTrace:
    """Nonnegative kinetic trace with weighted norm r <= R, (r/R)^D uniform."""
    if cfg.kind != "rte-interior":
        raise ValueError(f"config kind {cfg.kind!r} does not match the interior sampler")
    v, w = quadrature
    tw = trace_weights(len(w), w)
    x = _rte_direction(rng, tw)
    r = _radius(rng, cfg.radius, cfg.radial_exponent)
    return RteTrace.unpack(r * x, len(w))


def sample_rte_boundary(cfg: SamplerConfig, fixed_mask: np.ndarray, fixed_values: np.ndarray,
                        quadrature, rng: np.random.Generator) -> RteTrace:
    """Boundary-patch kinetic trace: the physical block (mask over the packed
    vector) passes through unchanged; the free block is sampled as in the
    interior case with radius sqrt(R^2 - |fixed|^2)."""
    if cfg.kind != "rte-boundary":
        raise ValueError(f"config kind {cfg.kind!r} does not match the boundary sampler")
    v, w = quadrature
    tw = trace_weights(len(w), w)
    fixed_mask = np.asarray(fixed_mask, bool)
    fixed2 = float(np.sum(tw[fixed_mask] * np.asarray(fixed_values, float) ** 2))
    if fixed2 > cfg.radius ** 2:
        raise ValueError("fixed boundary data exceeds sampling radius")
    r_free = np.sqrt(cfg.radius ** 2 - fixed2)
    vec = np.empty(tw.shape[0])
    vec[fixed_mask] = fixed_values
    w_free = tw[~fixed_mask]
    x = _rte_direction(rng, w_free)
    r = _radius(rng, r_free, cfg.radial_exponent)
    vec[~fixed_mask] = r * x
    return RteTrace.unpack(vec, len(w))
