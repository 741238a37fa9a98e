"""Problem adapters: one object per PDE instance that the offline build, the
Schwarz loops and the benchmarks all talk to.

An adapter owns the grid, the overlapping layout, the physical boundary data
and the local solver, and exposes patch-local operations in a packed form:

* traces are flat vectors in the patch's canonical boundary order with a
  diagonal metric (the discrete L^2 trace norm of the problem),
* interior fields are flat vectors with the quadrature weights of the
  problem's field norm,
* neighbor exchange and global assembly are exact index gathers driven by
  the layout maps.

The 2D instance is the semilinear elliptic equation with oscillatory media;
the 1D instance is the kinetic transport/temperature system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import elliptic as el
from . import rte
from .geometry import (Grid1D, Grid2D, PatchLayout, build_layout_1d, build_layout_2d,
                       build_partition_of_unity, perimeter_nodes)
from .sampler import (EllipsoidSpec, SamplerConfig, ellipsoid_budget, sample_elliptic_boundary,
                      sample_elliptic_interior, sample_rte_boundary, sample_rte_interior)

__all__ = [
    "EllipticProblem",
    "RteProblem",
    "RteBoundary",
    "make_problem",
    "ELLIPTIC_BOUNDARIES",
    "RTE_BOUNDARIES",
]


def _zero_boundary(x, y):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


ELLIPTIC_BOUNDARIES = {
    "benchmark": el.benchmark_boundary,
    "zero": _zero_boundary,
}


@dataclass(frozen=True)
class RteBoundary:
    """Physical inflow/temperature data of the slab problem.  Inflows are
    a + sin(2 pi v) on the incoming half-ranges; amplitude None means zero
    inflow."""

    theta1: float
    theta2: float
    g1_amplitude: float | None = 3.0     # left inflow, v > 0
    g2_amplitude: float | None = 2.0     # right inflow, v < 0

    def g_plus(self, v_pos: np.ndarray) -> np.ndarray:
        if self.g1_amplitude is None:
            return np.zeros(v_pos.shape[0])
        return self.g1_amplitude + np.sin(2 * np.pi * v_pos)

    def g_minus(self, v_neg: np.ndarray) -> np.ndarray:
        if self.g2_amplitude is None:
            return np.zeros(v_neg.shape[0])
        return self.g2_amplitude + np.sin(2 * np.pi * v_neg)


RTE_BOUNDARIES = {
    "benchmark": RteBoundary(theta1=2.0, theta2=3.0),
    "zero": RteBoundary(theta1=0.0, theta2=0.0, g1_amplitude=None, g2_amplitude=None),
}


class EllipticProblem:
    """Semilinear elliptic instance on [0, L]^2 with an overlapping layout."""

    kind = "elliptic"

    def __init__(self, grid: Grid2D, layout: PatchLayout, eps: float,
                 boundary: str = "benchmark", newton_opts: el.NewtonOpts | None = None):
        self.grid = grid
        self.layout = layout
        self.eps = float(eps)
        self.media = el.Media(self.eps)
        self.boundary_name = boundary
        self.boundary = ELLIPTIC_BOUNDARIES[boundary]
        self.newton_opts = newton_opts or el.NewtonOpts()
        self._pou = None
        self._chol_cache: dict[int, tuple] = {}

    # -- construction ---------------------------------------------------
    @classmethod
    def create(cls, L: float, h: float, M1: int, M2: int, dxo: float, dxb: float,
               eps: float, boundary: str = "benchmark",
               newton_opts: el.NewtonOpts | None = None) -> "EllipticProblem":
        grid = Grid2D.from_h(L, h)
        layout = build_layout_2d(grid, M1, M2, dxo, dxb)
        return cls(grid, layout, eps, boundary, newton_opts)

    # -- trace structure -------------------------------------------------
    @property
    def n_patches(self) -> int:
        return self.layout.n_patches

    def trace_len(self, p: int) -> int:
        return self.layout.trace_ii[p].shape[0]

    def trace_weights_for(self, p: int) -> np.ndarray:
        return np.full(self.trace_len(p), self.grid.h)

    def trace_nodes(self, p: int) -> np.ndarray:
        h = self.grid.h
        return np.column_stack([self.layout.trace_ii[p] * h, self.layout.trace_jj[p] * h])

    def physical_mask(self, p: int) -> np.ndarray:
        return self.layout.trace_phys[p]

    def physical_values(self, p: int) -> np.ndarray:
        nodes = self.trace_nodes(p)
        mask = self.physical_mask(p)
        vals = np.zeros(self.trace_len(p))
        if np.any(mask):
            vals[mask] = self.boundary(nodes[mask, 0], nodes[mask, 1])
        return vals

    def initial_trace(self, p: int) -> np.ndarray:
        return self.physical_values(p)

    def pin_physical(self, p: int, vec: np.ndarray) -> np.ndarray:
        mask = self.physical_mask(p)
        if np.any(mask):
            vec = vec.copy()
            vec[mask] = self.physical_values(p)[mask]
        return vec

    # -- fields ------------------------------------------------------------
    def field_shape(self, p: int) -> tuple[int, int]:
        return self.layout.boxes[p].shape()

    def field_dof(self, p: int) -> int:
        s = self.field_shape(p)
        return s[0] * s[1]

    def field_weights_for(self, p: int) -> np.ndarray:
        return np.full(self.field_dof(p), self.grid.h ** 2)

    def pack_field(self, arr: np.ndarray) -> np.ndarray:
        return arr.ravel()

    def unpack_field(self, p: int, vec: np.ndarray) -> np.ndarray:
        return vec.reshape(self.field_shape(p))

    # -- solves ------------------------------------------------------------
    def local_solve(self, p: int, trace_vec: np.ndarray) -> np.ndarray:
        box = self.layout.boxes[p]
        h = self.grid.h
        u = el.solve_rectangle(self.media, box.i0 * h, box.j0 * h, box.nx, box.ny, h,
                               trace_vec, self.newton_opts)
        return u.ravel()

    def _buffered_sampler_parts(self, p: int):
        """Cholesky factors (and ellipsoid data for boundary patches) of the
        H^{1/2} weight matrix on the buffered perimeter, cached per patch."""
        cached = self._chol_cache.get(p)
        if cached is not None:
            return cached
        buf = self.layout.buffered[p]
        h = self.grid.h
        ii, jj = perimeter_nodes(buf)
        nodes = np.column_stack([ii * h, jj * h])
        n = self.grid.n
        phys = (ii == 0) | (ii == n) | (jj == 0) | (jj == n)
        if not np.any(phys):
            W = el.h12_weight_matrix(nodes, h)
            chol = sla.cholesky(W, lower=False)
            parts = ("interior", nodes, chol)
        else:
            fixed = self.boundary(nodes[phys, 0], nodes[phys, 1])
            spec = EllipsoidSpec(W=el.h12_weight_matrix(nodes, h), free=~phys, phi_fixed=fixed)
            chol_rr = sla.cholesky(spec.blocks()[2], lower=False)
            parts = ("boundary", nodes, spec, chol_rr)
        self._chol_cache[p] = parts
        return parts

    def sample_buffered_trace(self, p: int, cfg_radius: float, cfg_exponent: int,
                              seed: int, rng) -> el.EllipticTrace:
        parts = self._buffered_sampler_parts(p)
        h = self.grid.h
        if parts[0] == "interior":
            _, nodes, chol = parts
            cfg = SamplerConfig(cfg_radius, cfg_exponent, seed, "elliptic-interior")
            return sample_elliptic_interior(cfg, nodes, h, rng, chol=chol)
        _, nodes, spec, chol_rr = parts
        cfg = SamplerConfig(cfg_radius, cfg_exponent, seed, "elliptic-boundary")
        budget2 = ellipsoid_budget(cfg_radius, spec, chol_rr)
        if not np.any(spec.free):
            return el.EllipticTrace(values=spec.phi_fixed.copy(), nodes=nodes, h=h)
        return sample_elliptic_boundary(cfg, spec, nodes, h, rng, chol_rr=chol_rr,
                                        budget2=budget2)

    def sample_pair(self, p: int, cfg_radius: float, cfg_exponent: int, seed: int,
                    rng) -> tuple[np.ndarray, np.ndarray]:
        """One offline entry: sample on the buffered patch, solve, confine to
        the working patch and its boundary."""
        trace = self.sample_buffered_trace(p, cfg_radius, cfg_exponent, seed, rng)
        buf = self.layout.buffered[p]
        box = self.layout.boxes[p]
        h = self.grid.h
        u = el.solve_rectangle(self.media, buf.i0 * h, buf.j0 * h, buf.nx, buf.ny, h,
                               trace.values, self.newton_opts)
        inner = u[box.i0 - buf.i0: box.i1 - buf.i0 + 1, box.j0 - buf.j0: box.j1 - buf.j0 + 1]
        ii, jj = perimeter_nodes(box)
        trace_vec = inner[ii - box.i0, jj - box.j0].copy()
        return trace_vec, inner.ravel().copy()

    # -- exchange and assembly ----------------------------------------------
    def gather_traces(self, fields: list[np.ndarray]) -> list[np.ndarray]:
        """Jacobi exchange: every interface node of every patch takes the
        value of its owning neighbor's current field; physical nodes keep the
        prescribed data."""
        out = []
        for m in range(self.n_patches):
            vec = self.physical_values(m)
            for (l, pos, li, lj) in self.layout.owners[m]:
                u_l = self.unpack_field(l, fields[l])
                vec[pos] = u_l[li, lj]
            out.append(vec)
        return out

    def partition_of_unity(self):
        if self._pou is None:
            self._pou = build_partition_of_unity(self.layout)
        return self._pou

    def assemble(self, fields: list[np.ndarray]) -> np.ndarray:
        pou = self.partition_of_unity()
        n = self.grid.n
        out = np.zeros((n + 1, n + 1))
        for p, box in enumerate(self.layout.boxes):
            out[box.i0:box.i1 + 1, box.j0:box.j1 + 1] += pou[p] * self.unpack_field(p, fields[p])
        return out

    # -- references and errors ------------------------------------------------
    def solve_monolithic(self, refinement: int = 1) -> np.ndarray:
        grid = Grid2D(self.grid.L, self.grid.n * refinement)
        return el.solve_global(self.media, grid, self.boundary, self.newton_opts)

    def relative_error_global(self, ref: np.ndarray, approx: np.ndarray) -> float:
        return el.relative_error_2d(ref, approx, self.grid.h)

    def confine_to_patch(self, global_field: np.ndarray, p: int) -> np.ndarray:
        """Restrict a run-grid global field to patch p (packed).  Fields on an
        integer refinement are subsampled first."""
        if global_field.shape[0] != self.grid.n + 1:
            fac = (global_field.shape[0] - 1) // self.grid.n
            global_field = el.subsample_2d(global_field, fac)
        box = self.layout.boxes[p]
        return global_field[box.i0:box.i1 + 1, box.j0:box.j1 + 1].ravel().copy()

    def global_trace(self) -> np.ndarray:
        n = self.grid.n
        return el.trace_from_function(0.0, 0.0, n, n, self.grid.h, self.boundary).values

    def header_extras(self) -> dict:
        return {"boundary": self.boundary_name, "newton_tol": self.newton_opts.tol}


class RteProblem:
    """Kinetic transport/temperature instance on the slab [0, L]."""

    kind = "rte"

    def __init__(self, grid: Grid1D, layout: PatchLayout, eps: float,
                 boundary: str = "benchmark", fp_opts: rte.FixedPointOpts | None = None):
        self.grid = grid
        self.layout = layout
        self.eps = float(eps)
        self.boundary_name = boundary
        self.boundary = RTE_BOUNDARIES[boundary]
        self.fp_opts = fp_opts or rte.FixedPointOpts()
        self._pou = None

    @classmethod
    def create(cls, L: float, dx: float, nv: int, M: int, dxo: float, dxb: float,
               eps: float, boundary: str = "benchmark",
               fp_opts: rte.FixedPointOpts | None = None) -> "RteProblem":
        grid = Grid1D.create(L, dx, nv)
        layout = build_layout_1d(grid, M, dxo, dxb)
        return cls(grid, layout, eps, boundary, fp_opts)

    # -- trace structure ---------------------------------------------------
    @property
    def n_patches(self) -> int:
        return self.layout.n_patches

    @property
    def half(self) -> int:
        return self.grid.nv // 2

    def trace_len(self, p: int) -> int:
        return self.grid.nv + 2

    def trace_weights_for(self, p: int) -> np.ndarray:
        return rte.trace_weights(self.grid.nv, self.grid.w)

    def _phys_g_plus(self) -> np.ndarray:
        return self.boundary.g_plus(self.grid.v[self.half:])

    def _phys_g_minus(self) -> np.ndarray:
        return self.boundary.g_minus(self.grid.v[:self.half])

    def physical_mask(self, p: int) -> np.ndarray:
        """Mask over the packed trace [g_minus, g_plus, theta1, theta2]."""
        nv, half = self.grid.nv, self.half
        mask = np.zeros(nv + 2, dtype=bool)
        if self.layout.boxes[p].a == 0:
            mask[half:nv] = True        # left inflow prescribed
            mask[nv] = True             # theta1
        if self.layout.boxes[p].b == self.grid.nx:
            mask[:half] = True          # right inflow prescribed
            mask[nv + 1] = True         # theta2
        return mask

    def physical_values(self, p: int) -> np.ndarray:
        nv, half = self.grid.nv, self.half
        vals = np.zeros(nv + 2)
        if self.layout.boxes[p].a == 0:
            vals[half:nv] = self._phys_g_plus()
            vals[nv] = self.boundary.theta1
        if self.layout.boxes[p].b == self.grid.nx:
            vals[:half] = self._phys_g_minus()
            vals[nv + 1] = self.boundary.theta2
        return vals

    def initial_trace(self, p: int) -> np.ndarray:
        return self.physical_values(p)

    def pin_physical(self, p: int, vec: np.ndarray) -> np.ndarray:
        mask = self.physical_mask(p)
        if np.any(mask):
            vec = vec.copy()
            vec[mask] = self.physical_values(p)[mask]
        return vec

    # -- fields ---------------------------------------------------------------
    def _n_nodes(self, p: int, buffered: bool = False) -> int:
        box = self.layout.buffered[p] if buffered else self.layout.boxes[p]
        return box.nx + 1

    def field_dof(self, p: int) -> int:
        nn = self._n_nodes(p)
        return nn * self.grid.nv + nn

    def field_weights_for(self, p: int) -> np.ndarray:
        return rte.field_weights(self._n_nodes(p), self.grid.nv, self.grid.dx, self.grid.w)

    def unpack_field(self, p: int, vec: np.ndarray) -> rte.RteField:
        return rte.unpack_field(vec, self._n_nodes(p), self.grid.nv, self.grid.dx)

    # -- solves ------------------------------------------------------------------
    def _interval(self, p: int, buffered: bool = False):
        box = self.layout.buffered[p] if buffered else self.layout.boxes[p]
        return box.interval(self.grid.dx)

    def local_solve(self, p: int, trace_vec: np.ndarray) -> np.ndarray:
        tr = rte.RteTrace.unpack(trace_vec, self.grid.nv)
        f = rte.solve_local_rte(self._interval(p), self.grid.dx, (self.grid.v, self.grid.w),
                                tr, self.eps, self.fp_opts)
        return rte.pack_field(f)

    def sample_buffered_trace(self, p: int, cfg_radius: float, cfg_exponent: int,
                              seed: int, rng) -> rte.RteTrace:
        quad = (self.grid.v, self.grid.w)
        nv, half = self.grid.nv, self.half
        buf = self.layout.buffered[p]
        fixed_mask = np.zeros(nv + 2, dtype=bool)
        fixed_vals = []
        # only the true end patches keep physical data during sampling; the
        # equations are translation invariant so clipped interior buffers
        # still sample freely on both ends
        if p == 0:
            fixed_mask[half:nv] = True
            fixed_mask[nv] = True
        if p == self.n_patches - 1:
            fixed_mask[:half] = True
            fixed_mask[nv + 1] = True
        if np.any(fixed_mask):
            all_vals = np.zeros(nv + 2)
            if p == 0:
                all_vals[half:nv] = self._phys_g_plus()
                all_vals[nv] = self.boundary.theta1
            if p == self.n_patches - 1:
                all_vals[:half] = self._phys_g_minus()
                all_vals[nv + 1] = self.boundary.theta2
            if np.all(fixed_mask):
                return rte.RteTrace.unpack(all_vals, nv)
            cfg = SamplerConfig(cfg_radius, cfg_exponent, seed, "rte-boundary")
            return sample_rte_boundary(cfg, fixed_mask, all_vals[fixed_mask], quad, rng)
        cfg = SamplerConfig(cfg_radius, cfg_exponent, seed, "rte-interior")
        return sample_rte_interior(cfg, quad, rng)

    def sample_pair(self, p: int, cfg_radius: float, cfg_exponent: int, seed: int,
                    rng) -> tuple[np.ndarray, np.ndarray]:
        trace = self.sample_buffered_trace(p, cfg_radius, cfg_exponent, seed, rng)
        f = rte.solve_local_rte(self._interval(p, buffered=True), self.grid.dx,
                                (self.grid.v, self.grid.w), trace, self.eps, self.fp_opts)
        box, buf = self.layout.boxes[p], self.layout.buffered[p]
        a = box.a - buf.a
        nn = box.nx + 1
        I = f.I[a:a + nn, :]
        T = f.T[a:a + nn]
        nv, half = self.grid.nv, self.half
        tr = np.concatenate([I[-1, :half], I[0, half:], [T[0], T[-1]]])
        return tr, np.concatenate([I.ravel(), T]).copy()

    # -- exchange and assembly ----------------------------------------------------
    def gather_traces(self, fields: list[np.ndarray]) -> list[np.ndarray]:
        nv, half = self.grid.nv, self.half
        out = []
        for m in range(self.n_patches):
            vec = self.physical_values(m)
            box_m = self.layout.boxes[m]
            if m > 0:
                fl = self.unpack_field(m - 1, fields[m - 1])
                k = box_m.a - self.layout.boxes[m - 1].a
                vec[half:nv] = fl.I[k, half:]
                vec[nv] = fl.T[k]
            if m < self.n_patches - 1:
                fr = self.unpack_field(m + 1, fields[m + 1])
                k = box_m.b - self.layout.boxes[m + 1].a
                vec[:half] = fr.I[k, :half]
                vec[nv + 1] = fr.T[k]
            out.append(vec)
        return out

    def partition_of_unity(self):
        if self._pou is None:
            self._pou = build_partition_of_unity(self.layout)
        return self._pou

    def assemble(self, fields: list[np.ndarray]) -> rte.RteField:
        pou = self.partition_of_unity()
        nn = self.grid.nx + 1
        I = np.zeros((nn, self.grid.nv))
        T = np.zeros(nn)
        for p, box in enumerate(self.layout.boxes):
            f = self.unpack_field(p, fields[p])
            chi = pou[p]
            I[box.a:box.b + 1, :] += chi[:, None] * f.I
            T[box.a:box.b + 1] += chi * f.T
        return rte.RteField(I=I, T=T, dx=self.grid.dx)

    # -- references and errors ---------------------------------------------------
    def _physical_trace(self) -> rte.RteTrace:
        return rte.RteTrace(g_minus=self._phys_g_minus(), g_plus=self._phys_g_plus(),
                            theta1=self.boundary.theta1, theta2=self.boundary.theta2)

    def solve_monolithic(self, refinement: int = 1) -> rte.RteField:
        grid = Grid1D.create(self.grid.L, self.grid.dx / refinement, self.grid.nv)
        return rte.solve_local_rte((0.0, grid.L), grid.dx, (grid.v, grid.w),
                                   self._physical_trace(), self.eps, self.fp_opts)

    def relative_error_global(self, ref: rte.RteField, approx: rte.RteField) -> float:
        if ref.T.shape[0] != approx.T.shape[0]:
            fac = (ref.T.shape[0] - 1) // (approx.T.shape[0] - 1)
            if ref.T.shape[0] - 1 != fac * (approx.T.shape[0] - 1):
                raise ValueError("reference grid is not an integer refinement")
            ref = rte.RteField(I=ref.I[::fac, :], T=ref.T[::fac], dx=approx.dx)
        diff = rte.RteField(I=ref.I - approx.I, T=ref.T - approx.T, dx=approx.dx)
        denom = rte.rte_field_norm(ref, self.grid.w)
        return rte.rte_field_norm(diff, self.grid.w) / denom if denom else 0.0

    def confine_to_patch(self, global_field: rte.RteField, p: int) -> np.ndarray:
        if global_field.T.shape[0] != self.grid.nx + 1:
            fac = (global_field.T.shape[0] - 1) // self.grid.nx
            global_field = rte.RteField(I=global_field.I[::fac, :], T=global_field.T[::fac],
                                        dx=self.grid.dx)
        box = self.layout.boxes[p]
        I = global_field.I[box.a:box.b + 1, :]
        T = global_field.T[box.a:box.b + 1]
        return np.concatenate([I.ravel(), T])

    def global_trace(self) -> np.ndarray:
        return self._physical_trace().pack()

    def header_extras(self) -> dict:
        return {
            "boundary": self.boundary_name,
            "fp_tol": self.fp_opts.tol,
            "anderson_depth": self.fp_opts.anderson_depth,
        }


def make_problem(kind: str, **kwargs):
    if kind == "elliptic":
        return EllipticProblem.create(**kwargs)
    if kind == "rte":
        return RteProblem.create(**kwargs)
    raise ValueError(f"unknown problem kind {kind!r}")
