"""Semilinear elliptic solver: -div(a grad u) + u^3 = 0 on rectangles.

Node-centered finite volumes on a uniform grid.  Each node owns the dual cell
of side h around it; the flux across the face between two nodes uses the
harmonic mean of the media at the two node positions, so rough coefficients
keep their effective resistance.  The nonlinear balance at an interior node,

    sum_faces a_face (u_nbr - u_c)  =  h^2 u_c^3 ,

is solved by damped Newton with a sparse direct factorization.  Boundary
nodes carry Dirichlet values directly.

Also provides the oscillatory benchmark media, the discrete Gagliardo
H^{1/2} boundary norm (the sampling metric) and the discrete L^2 field norm
used for every error in the 2D benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SolverFailure",
    "Media",
    "NewtonOpts",
    "EllipticTrace",
    "media_eval",
    "benchmark_boundary",
    "solve_rectangle",
    "solve_local",
    "solve_global",
    "h12_weight_matrix",
    "h12_norm",
    "l2_norm_2d",
    "relative_error_2d",
    "subsample_2d",
]


class SolverFailure(RuntimeError):
    """Nonlinear solver ran out of iterations; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def media_eval(eps: float, x, y):
    """Oscillatory permeability with O(1) slow variation and eps-scale cells.

    a = 2 + sin(2 pi x) cos(2 pi y)
      + (2 + 1.8 sin(2 pi x/eps)) / (2 + 1.8 cos(2 pi y/eps))
      + (2 + sin(2 pi y/eps)) / (2 + 1.8 cos(2 pi x/eps))

    Positive everywhere (the ratios stay in (0.05..., 19)).
    """
    two_pi = 2.0 * np.pi
    xs, ys = two_pi * np.asarray(x), two_pi * np.asarray(y)
    xf, yf = xs / eps, ys / eps
    return (2.0 + np.sin(xs) * np.cos(ys)
            + (2.0 + 1.8 * np.sin(xf)) / (2.0 + 1.8 * np.cos(yf))
            + (2.0 + np.sin(yf)) / (2.0 + 1.8 * np.cos(xf)))


@dataclass(frozen=True)
class Media:
    """Permeability a(x, y) for a given small scale eps."""

    eps: float

    def __call__(self, x, y):
        return media_eval(self.eps, x, y)


@dataclass(frozen=True)
class ConstantMedia:
    """Uniform permeability, used by manufactured-solution checks."""

    value: float = 1.0

    def __call__(self, x, y):
        return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, self.value)


def benchmark_boundary(x, y, L: float = 1.0):
    """Global Dirichlet data of the 2D benchmark on the unit square:
    -sin(2 pi x) on the south edge, +sin(2 pi x) on the north,
    +sin(2 pi y) on the west, -sin(2 pi y) on the east (corners all zero)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    val = np.zeros(np.broadcast(x, y).shape)
    south, north = y == 0.0, y == L
    west, east = x == 0.0, x == L
    val = np.where(south, -np.sin(2 * np.pi * x), val)
    val = np.where(north, np.sin(2 * np.pi * x), val)
    val = np.where(west, np.sin(2 * np.pi * y), val)
    val = np.where(east, -np.sin(2 * np.pi * y), val)
    return val


@dataclass
class NewtonOpts:
    tol: float = 1e-10          # residual infinity norm
    max_iter: int = 50
    max_damping: int = 10       # step halvings per iteration


@dataclass
class EllipticTrace:
    """Ordered boundary values of a rectangular patch.

    ``values[k]`` lives at node ``nodes[k]`` (x, y); the enumeration runs
    counterclockwise from the southwest corner with corners listed once.
    """

    values: np.ndarray
    nodes: np.ndarray
    h: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.values.shape[0] != self.nodes.shape[0]:
            raise ValueError("trace values and node coordinates disagree in length")


def _perimeter_local(nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
    """Local (i, j) node indices along the rectangle perimeter, ccw from SW."""
    ii = np.concatenate([np.arange(0, nx), np.full(ny, nx),
                         np.arange(nx, 0, -1), np.full(ny, 0)])
    jj = np.concatenate([np.full(nx, 0), np.arange(0, ny),
                         np.full(nx, ny), np.arange(ny, 0, -1)])
    return ii, jj


def perimeter_coords(x0: float, y0: float, nx: int, ny: int, h: float) -> np.ndarray:
    ii, jj = _perimeter_local(nx, ny)
    return np.column_stack([x0 + ii * h, y0 + jj * h])


def trace_from_function(x0, y0, nx, ny, h, fn) -> EllipticTrace:
    nodes = perimeter_coords(x0, y0, nx, ny, h)
    return EllipticTrace(values=fn(nodes[:, 0], nodes[:, 1]), nodes=nodes, h=h)


def _apply_trace(u: np.ndarray, trace_values: np.ndarray, nx: int, ny: int):
    ii, jj = _perimeter_local(nx, ny)
    u[ii, jj] = trace_values


def _coons_start(u: np.ndarray):
    """Bilinear boundary interpolation (Coons patch) as the Newton start."""
    nx, ny = u.shape[0] - 1, u.shape[1] - 1
    s = (np.arange(nx + 1) / nx)[:, None]
    t = (np.arange(ny + 1) / ny)[None, :]
    west, east = u[0, :][None, :], u[nx, :][None, :]
    south, north = u[:, 0][:, None], u[:, ny][:, None]
    corners = ((1 - s) * (1 - t) * u[0, 0] + s * (1 - t) * u[nx, 0]
               + (1 - s) * t * u[0, ny] + s * t * u[nx, ny])
    u[1:-1, 1:-1] = ((1 - s) * west + s * east + (1 - t) * south + t * north - corners)[1:-1, 1:-1]


def solve_rectangle(media, x0: float, y0: float, nx: int, ny: int, h: float,
                    trace_values: np.ndarray, opts: NewtonOpts | None = None,
                    source=None, reaction=None) -> np.ndarray:
    """Solve -div(a grad u) + f(u) = g on a (nx x ny)-cell rectangle with the
    given perimeter Dirichlet values; returns the (nx+1, ny+1) node array.

    ``reaction`` swaps the default cubic f for (f(u), f'(u)); ``source``
    supplies g(x, y) (used by manufactured-solution checks, zero otherwise).
    """
    opts = opts or NewtonOpts()
    if trace_values.shape[0] != 2 * (nx + ny):
        raise ValueError(f"trace has {trace_values.shape[0]} values, expected {2 * (nx + ny)}")

    xs = x0 + np.arange(nx + 1) * h
    ys = y0 + np.arange(ny + 1) * h
    a_node = np.asarray(media(xs[:, None], ys[None, :]), dtype=float)
    # harmonic means across the two faces of every node pair
    ax = 2.0 * a_node[:-1, :] * a_node[1:, :] / (a_node[:-1, :] + a_node[1:, :])  # (nx, ny+1)
    ay = 2.0 * a_node[:, :-1] * a_node[:, 1:] / (a_node[:, :-1] + a_node[:, 1:])  # (nx+1, ny)

    if reaction is None:
        f_val, f_prime = (lambda u: u ** 3), (lambda u: 3.0 * u ** 2)
    else:
        f_val, f_prime = reaction
    g_int = None
    if source is not None:
        g_int = np.asarray(source(xs[1:-1, None], ys[None, 1:-1]), dtype=float)

    u = np.zeros((nx + 1, ny + 1))
    _apply_trace(u, trace_values, nx, ny)
    if np.all(trace_values == 0.0) and source is None:
        return u  # zero is the exact solution of the homogeneous problem
    _coons_start(u)

    ni, nj = nx - 1, ny - 1
    n_int = ni * nj
    idx = np.arange(n_int).reshape(ni, nj)

    aw = ax[:-1, 1:-1]   # face to the west of interior node (i, j)
    ae = ax[1:, 1:-1]
    as_ = ay[1:-1, :-1]
    an = ay[1:-1, 1:]
    diag_lin = -(aw + ae + as_ + an)

    rows, cols, vals = [idx.ravel()], [idx.ravel()], [diag_lin.ravel()]
    rows.append(idx[1:, :].ravel()); cols.append(idx[:-1, :].ravel()); vals.append(aw[1:, :].ravel())
    rows.append(idx[:-1, :].ravel()); cols.append(idx[1:, :].ravel()); vals.append(ae[:-1, :].ravel())
    rows.append(idx[:, 1:].ravel()); cols.append(idx[:, :-1].ravel()); vals.append(as_[:, 1:].ravel())
    rows.append(idx[:, :-1].ravel()); cols.append(idx[:, 1:].ravel()); vals.append(an[:, :-1].ravel())
    K = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_int, n_int))

    def residual(ui):
        full = u.copy()
        full[1:-1, 1:-1] = ui.reshape(ni, nj)
        flux = (aw * (full[:-2, 1:-1] - full[1:-1, 1:-1])
                + ae * (full[2:, 1:-1] - full[1:-1, 1:-1])
                + as_ * (full[1:-1, :-2] - full[1:-1, 1:-1])
                + an * (full[1:-1, 2:] - full[1:-1, 1:-1]))
        r = flux - h * h * f_val(full[1:-1, 1:-1])
        if g_int is not None:
            r = r + h * h * g_int
        return r.ravel()

    ui = u[1:-1, 1:-1].ravel().copy()
    r = residual(ui)
    rnorm = np.max(np.abs(r)) if r.size else 0.0
    for _ in range(opts.max_iter):
        if rnorm <= opts.tol:
            break
        J = K - sp.diags(h * h * f_prime(ui))
        step = spla.splu(J.tocsc()).solve(-r)
        lam = 1.0
        for _ in range(opts.max_damping + 1):
            cand = ui + lam * step
            rc = residual(cand)
            cnorm = np.max(np.abs(rc))
            if cnorm < rnorm or cnorm <= opts.tol:
                break
            lam *= 0.5
        ui, r, rnorm = cand, rc, cnorm
    else:
        if rnorm > opts.tol:
            raise SolverFailure(f"Newton stalled at residual {rnorm:.3e} "
                                f"after {opts.max_iter} iterations", rnorm)
    u[1:-1, 1:-1] = ui.reshape(ni, nj)
    return u


def solve_local(media, patch_rect, h: float, trace: EllipticTrace,
                opts: NewtonOpts | None = None) -> np.ndarray:
    """Patch solve from a rectangle (x0, x1, y0, y1) whose sides divide by h."""
    x0, x1, y0, y1 = patch_rect
    nx = int(round((x1 - x0) / h))
    ny = int(round((y1 - y0) / h))
    if abs(nx * h - (x1 - x0)) > 1e-9 * h or abs(ny * h - (y1 - y0)) > 1e-9 * h:
        raise ValueError("patch sides are not multiples of the mesh width")
    return solve_rectangle(media, x0, y0, nx, ny, h, trace.values, opts)


def solve_global(media, grid, boundary, opts: NewtonOpts | None = None) -> np.ndarray:
    """Monolithic solve on the whole square; ``boundary`` is a callable
    phi(x, y) or a ready perimeter value array."""
    n, h = grid.n, grid.h
    if callable(boundary):
        tr = trace_from_function(0.0, 0.0, n, n, h, boundary)
        values = tr.values
    else:
        values = np.asarray(boundary, dtype=float)
    return solve_rectangle(media, 0.0, 0.0, n, n, h, values, opts)


def h12_weight_matrix(nodes: np.ndarray, h: float) -> np.ndarray:
    """Symmetric positive-definite W with phi' W phi equal to the discrete
    Gagliardo H^{1/2} form: h sum phi_i^2 + h^2 sum_{i != j} |phi_i - phi_j|^2 / |z_i - z_j|^2."""
    z = np.asarray(nodes, dtype=float)
    d2 = np.sum((z[:, None, :] - z[None, :, :]) ** 2, axis=-1)
    if np.any(d2[~np.eye(len(z), dtype=bool)] == 0.0):
        raise ValueError("duplicate boundary nodes")
    with np.errstate(divide="ignore"):
        inv = np.where(d2 > 0, 2.0 * h * h / d2, 0.0)
    W = -inv
    np.fill_diagonal(W, h + inv.sum(axis=1))
    return W


def h12_norm(trace: EllipticTrace) -> float:
    W = h12_weight_matrix(trace.nodes, trace.h)
    return float(np.sqrt(trace.values @ W @ trace.values))


def l2_norm_2d(field: np.ndarray, h: float) -> float:
    """Classical discrete L^2 norm: h * sqrt(sum of squared node values)."""
    return float(h * np.sqrt(np.sum(np.asarray(field, dtype=float) ** 2)))


def subsample_2d(fine: np.ndarray, factor: int) -> np.ndarray:
    """Index-aligned restriction of a node field to a factor-coarser grid."""
    if (fine.shape[0] - 1) % factor or (fine.shape[1] - 1) % factor:
        raise ValueError(f"field of shape {fine.shape} is not a {factor}-fold refinement")
    return fine[::factor, ::factor]


def relative_error_2d(ref: np.ndarray, approx: np.ndarray, h: float) -> float:
    """|ref - approx| / |ref| in the discrete L^2 norm, on the coarse grid.
    ``ref`` may live on an integer refinement of approx's grid."""
    if ref.shape != approx.shape:
        fac = (ref.shape[0] - 1) // (approx.shape[0] - 1)
        if fac < 1 or ref.shape[0] - 1 != fac * (approx.shape[0] - 1):
            raise ValueError(f"reference {ref.shape} is not an integer refinement of {approx.shape}")
        ref = subsample_2d(ref, fac)
    denom = l2_norm_2d(ref, h)
    if denom == 0.0:
        return float(l2_norm_2d(approx, h) > 0.0)
    return l2_norm_2d(ref - approx, h) / denom
