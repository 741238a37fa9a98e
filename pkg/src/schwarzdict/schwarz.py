"""Online stage: Schwarz iteration with dictionary surrogates or true solves.

Each sweep is Jacobi-style: every patch evaluates its local solution from its
current boundary condition (nearest-neighbor lookup plus tangent-plane least
squares against the offline dictionary, or the actual PDE solver for the
classical baseline), then all interface conditions are refreshed at once from
the neighbors' fields.  Physical boundary segments are pinned to the
prescribed data at every step.  The loop stops when the summed trace-update
norm drops below the tolerance; assembly blends the last computed fields
through the partition of unity.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OnlineOpts",
    "SchwarzState",
    "RunReport",
    "knn",
    "tangent_interpolate",
    "boundary_update",
    "run_online",
    "run_classical",
]


@dataclass
class OnlineOpts:
    k: int = 30
    tol: float = 1e-5            # elliptic default; the slab benchmark uses 1e-3
    max_iter: int = 500
    ls_truncation: float = 1e-10


@dataclass
class SchwarzState:
    """Iteration number, current per-patch traces and fields, update history."""

    iteration: int
    traces: list[np.ndarray]
    fields: list[np.ndarray | None]
    update_norms: list[float] = field(default_factory=list)
    warn_count: int = 0


@dataclass
class RunReport:
    iterations: int
    converged: bool
    update_norms: list[float]
    timings: dict[str, float]
    warn_count: int = 0

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "update_norms": self.update_norms,
            "timings": self.timings,
            "interpolation_warnings": self.warn_count,
        }


def knn(query: np.ndarray, traces: np.ndarray, weights: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest dictionary traces in the weighted L^2 metric,
    nearest first; exact brute force, ties broken toward the lower index."""
    if k > traces.shape[0]:
        raise ValueError(f"k={k} exceeds the dictionary size {traces.shape[0]}")
    diff = traces - query[None, :]
    d2 = diff * diff @ weights
    order = np.argsort(d2, kind="stable")
    return order[:k]


def tangent_interpolate(query: np.ndarray, traces: np.ndarray, fields: np.ndarray,
                        neighbors: np.ndarray, weights: np.ndarray,
                        ls_truncation: float = 1e-10):
    """Local tangent-plane surrogate around the nearest neighbor.

    Solves min_c |query - t_1 - [t_q - t_1] c| in the weighted trace metric
    (singular values below ls_truncation * sigma_max are discarded) and maps
    the coefficients onto the paired interior fields:

        u = f_1 + [f_q - f_1] c .

    Returns (u, c, residual, degenerate_flag); a rank-zero difference matrix
    falls back to the nearest entry alone with the flag set.
    """
    i1 = neighbors[0]
    t1 = traces[i1]
    rhs = query - t1
    sw = np.sqrt(weights)
    if len(neighbors) < 2:
        res = float(np.linalg.norm(sw * rhs))
        return fields[i1].copy(), np.zeros(0), res, False

    basis = traces[neighbors[1:]] - t1[None, :]
    A = basis.T * sw[:, None]
    b = sw * rhs
    if not np.any(A):
        res = float(np.linalg.norm(b))
        return fields[i1].copy(), np.zeros(len(neighbors) - 1), res, True
    c, _, rank, _ = np.linalg.lstsq(A, b, rcond=ls_truncation)
    res = float(np.linalg.norm(b - A @ c))
    u = fields[i1] + (fields[neighbors[1:]] - fields[i1][None, :]).T @ c
    return u, c, res, rank == 0


def _trace_norm(vec: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sqrt(np.sum(weights * vec * vec)))


def boundary_update(problem, state: SchwarzState, evaluate, order=None) -> SchwarzState:
    """One Jacobi sweep: evaluate every patch's field from its current trace,
    then rebuild all traces from the neighbors' fields (physical segments
    pinned).  ``evaluate(p, trace) -> (field, warn)`` supplies the local
    solve; ``order`` only permutes the evaluation sequence and cannot change
    the result."""
    n = problem.n_patches
    fields: list = [None] * n
    warn = 0
    for p in (order if order is not None else range(n)):
        fields[p], w = evaluate(p, state.traces[p])
        warn += w
    new_traces = problem.gather_traces(fields)
    new_traces = [problem.pin_physical(p, t) for p, t in enumerate(new_traces)]
    upd = sum(_trace_norm(new_traces[p] - state.traces[p], problem.trace_weights_for(p))
              for p in range(n))
    nxt = SchwarzState(iteration=state.iteration + 1, traces=new_traces, fields=fields,
                       update_norms=state.update_norms + [upd],
                       warn_count=state.warn_count + warn)
    return nxt


def _run_loop(problem, evaluate, opts: OnlineOpts, timing_key: str):
    timings = {"knn": 0.0, "least_squares": 0.0, "assembly": 0.0, timing_key: 0.0}
    t_total = time.perf_counter()
    state = SchwarzState(iteration=0,
                         traces=[problem.initial_trace(p) for p in range(problem.n_patches)],
                         fields=[None] * problem.n_patches)
    converged = False
    while state.iteration < opts.max_iter:
        t0 = time.perf_counter()
        state = boundary_update(problem, state, evaluate)
        timings[timing_key] += time.perf_counter() - t0
        if state.update_norms[-1] < opts.tol:
            converged = True
            break
    t0 = time.perf_counter()
    assembled = problem.assemble(state.fields)
    timings["assembly"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_total
    report = RunReport(iterations=state.iteration, converged=converged,
                       update_norms=list(state.update_norms), timings=timings,
                       warn_count=state.warn_count)
    if not converged:
        warnings.warn(f"Schwarz loop stopped at max_iter={opts.max_iter} with update "
                      f"{state.update_norms[-1]:.3e} >= tol={opts.tol:.1e}", stacklevel=2)
    return assembled, state, report


def run_online(problem, dicts, opts: OnlineOpts):
    """Reduced Schwarz run: local solves replaced by dictionary surrogates.

    Returns (assembled global field, final state, report).  A run that hits
    max_iter comes back flagged, not raised.
    """
    timings = {"knn": 0.0, "least_squares": 0.0}

    def evaluate(p, trace):
        d = dicts.for_patch(p)
        w = problem.trace_weights_for(p)
        t0 = time.perf_counter()
        nb = knn(trace, d.traces, w, min(opts.k, d.n))
        t1 = time.perf_counter()
        u, _, _, degenerate = tangent_interpolate(trace, d.traces, d.fields, nb, w,
                                                  opts.ls_truncation)
        t2 = time.perf_counter()
        timings["knn"] += t1 - t0
        timings["least_squares"] += t2 - t1
        return u, int(degenerate)

    assembled, state, report = _run_loop(problem, evaluate, opts, "surrogate")
    report.timings["knn"] = timings["knn"]
    report.timings["least_squares"] = timings["least_squares"]
    return assembled, state, report


def run_classical(problem, opts: OnlineOpts):
    """Classical Schwarz baseline: every patch update is a true local solve
    on the working (unbuffered) patch, same stopping rule as the reduced run."""

    def evaluate(p, trace):
        return problem.local_solve(p, trace), 0

    return _run_loop(problem, evaluate, opts, "local_solve")
