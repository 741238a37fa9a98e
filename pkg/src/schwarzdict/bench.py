"""Benchmark harness: reproduces the error-decay and speedup experiments at
desk scale and emits machine-readable CSV tables plus JSON run reports.

Artifacts are derived from (config, seed) alone; regenerating any benchmark
CSV from the same inputs is byte-identical up to the wall-clock columns
(suffix ``_seconds``), which are excluded from reproducibility comparisons.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import dictionary as dct
from .config import ExperimentConfig
from .elliptic import NewtonOpts
from .problems import EllipticProblem, RteProblem
from .rte import FixedPointOpts
from .schwarz import OnlineOpts, run_classical, run_online

__all__ = [
    "make_problem_from_config",
    "reference_problem",
    "dict_path", "reference_path",
    "ensure_offline", "ensure_reference",
    "cmd_offline", "cmd_online", "cmd_classical", "cmd_reference",
    "bench_svd", "bench_projection", "bench_error_vs_k", "bench_timing",
    "load_reference_field",
]


def _solver_opts(cfg: ExperimentConfig):
    s = cfg.solver
    if cfg.problem == "elliptic":
        return NewtonOpts(tol=s.get("newton_tol", 1e-10),
                          max_iter=s.get("newton_max_iter", 50))
    return FixedPointOpts(tol=s.get("fp_tol", 1e-10),
                          max_iter=s.get("fp_max_iter", 500),
                          anderson_depth=s.get("anderson_depth", 5),
                          anderson_damping=s.get("anderson_damping", 1.0),
                          newton_tol=s.get("newton_tol", 1e-11))


def make_problem_from_config(cfg: ExperimentConfig, eps: float, dxb: float | None = None):
    kw = cfg.problem_kwargs(eps, dxb)
    if cfg.problem == "elliptic":
        return EllipticProblem.create(**kw, newton_opts=_solver_opts(cfg))
    return RteProblem.create(**kw, fp_opts=_solver_opts(cfg))


def reference_problem(cfg: ExperimentConfig, eps: float):
    """Single-patch instance on the reference grid, used to store solutions."""
    opts = _solver_opts(cfg)
    if cfg.problem == "elliptic":
        return EllipticProblem.create(L=cfg.L, h=cfg.h / cfg.refinement, M1=1, M2=1,
                                      dxo=0.0, dxb=0.0, eps=eps, boundary=cfg.boundary,
                                      newton_opts=opts)
    return RteProblem.create(L=cfg.L, dx=cfg.h / cfg.refinement, nv=cfg.nv, M=1,
                             dxo=0.0, dxb=0.0, eps=eps, boundary=cfg.boundary,
                             fp_opts=opts)


def run_problem(cfg: ExperimentConfig, eps: float):
    """Single-patch instance on the run grid (stores online solutions)."""
    opts = _solver_opts(cfg)
    if cfg.problem == "elliptic":
        return EllipticProblem.create(L=cfg.L, h=cfg.h, M1=1, M2=1, dxo=0.0, dxb=0.0,
                                      eps=eps, boundary=cfg.boundary, newton_opts=opts)
    return RteProblem.create(L=cfg.L, dx=cfg.h, nv=cfg.nv, M=1, dxo=0.0, dxb=0.0,
                             eps=eps, boundary=cfg.boundary, fp_opts=opts)


def dict_path(out: Path, eps: float, dxb: float) -> Path:
    return Path(out) / f"dict_eps{eps!r}_dxb{dxb!r}.tsd"


def reference_path(out: Path, eps: float) -> Path:
    return Path(out) / f"reference_eps{eps!r}.tsd"


def ensure_offline(cfg: ExperimentConfig, eps: float, dxb: float, out: Path,
                   threads: int = 1, verbose: bool = False) -> Path:
    path = dict_path(out, eps, dxb)
    if path.exists():
        return path
    path.parent.mkdir(parents=True, exist_ok=True)
    prob = make_problem_from_config(cfg, eps, dxb)
    build_times: dict[str, float] = {}
    t_mark = time.perf_counter()

    def progress(p, d):
        nonlocal t_mark
        now = time.perf_counter()
        build_times[str(p)] = now - t_mark
        t_mark = now
        if verbose:
            print(f"  patch {p}: {d.n} samples, {d.retries} retries, {build_times[str(p)]:.2f}s")

    t0 = time.perf_counter()
    dset = dct.build_all(prob, cfg.num_samples, cfg.radius, cfg.radial_exponent,
                         cfg.seed, threads=threads, progress=progress)
    dset.header["build_seconds"] = time.perf_counter() - t0
    dset.header["build_seconds_per_patch"] = build_times
    dct.save(dset, path)
    return path


def ensure_reference(cfg: ExperimentConfig, eps: float, out: Path,
                     verbose: bool = False) -> Path:
    path = reference_path(out, eps)
    if path.exists():
        return path
    path.parent.mkdir(parents=True, exist_ok=True)
    prob = reference_problem(cfg, eps)
    t0 = time.perf_counter()
    sol = prob.solve_monolithic(refinement=1)
    dt = time.perf_counter() - t0
    if verbose:
        print(f"  reference eps={eps!r}: {dt:.2f}s")
    if cfg.problem == "elliptic":
        vec = sol.ravel()
    else:
        vec = np.concatenate([sol.I.ravel(), sol.T])
    dct.save_solution(prob, vec, prob.global_trace(), path,
                      extra={"refinement": cfg.refinement, "solve_seconds": dt})
    return path


def load_reference_field(cfg: ExperimentConfig, path):
    header, vec = dct.load_solution(path)
    desc = header["problem"]
    if cfg.problem == "elliptic":
        n = desc["n"]
        return vec.reshape(n + 1, n + 1)
    from .rte import unpack_field
    nn = desc["nx"] + 1
    return unpack_field(vec, nn, desc["nv"], desc["L"] / desc["nx"])


def _write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, float):
                cells.append(repr(v))
            elif isinstance(v, (bool, np.bool_)):
                cells.append("true" if v else "false")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def _online_opts(cfg: ExperimentConfig, k: int) -> OnlineOpts:
    return OnlineOpts(k=k, tol=cfg.tol, max_iter=cfg.max_iter,
                      ls_truncation=cfg.ls_truncation)


# ---------------------------------------------------------------- commands

def cmd_offline(cfg: ExperimentConfig, out, threads: int = 1) -> list[Path]:
    """Build and save one dictionary set per (epsilon, buffer) combination."""
    out = Path(out)
    paths = []
    for eps in cfg.epsilons:
        for dxb in cfg.buffers:
            print(f"offline: eps={eps!r} dxb={dxb!r}")
            paths.append(ensure_offline(cfg, eps, dxb, out, threads, verbose=True))
    return paths


def cmd_reference(cfg: ExperimentConfig, out) -> list[Path]:
    out = Path(out)
    return [ensure_reference(cfg, eps, out, verbose=True) for eps in cfg.epsilons]


def cmd_online(cfg: ExperimentConfig, dict_file, out, k: int | None = None):
    """Reduced online run against a dictionary file; writes the assembled
    field (solution container) and a JSON report.  Returns (paths, report)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    dset = dct.load(dict_file)
    desc = dset.header["problem"]
    eps = desc["eps"]
    dxb = desc["buffer_cells"] * (cfg.L / (desc.get("n") or desc.get("nx")))
    prob = make_problem_from_config(cfg, eps, dxb)
    _validate_against_header(cfg, desc)
    k = k if k is not None else cfg.neighbor_counts[0]
    if k > cfg.num_samples:
        from .config import ConfigError
        raise ConfigError(f"k={k} exceeds the dictionary size {cfg.num_samples}")
    assembled, state, report = run_online(prob, dset, _online_opts(cfg, k))
    sol_path = out / f"online_eps{eps!r}_dxb{dxb!r}_k{k}.tsd"
    rep_path = out / f"online_eps{eps!r}_dxb{dxb!r}_k{k}.json"
    rp = run_problem(cfg, eps)
    vec = assembled.ravel() if cfg.problem == "elliptic" else \
        np.concatenate([assembled.I.ravel(), assembled.T])
    dct.save_solution(rp, vec, rp.global_trace(), sol_path,
                      extra={"k": k, "dxb": dxb, "kind": "reduced"})
    rep_path.write_text(json.dumps({"config": {"eps": eps, "dxb": dxb, "k": k},
                                    **report.as_dict()}, sort_keys=True, indent=2) + "\n")
    return (sol_path, rep_path), report


def cmd_classical(cfg: ExperimentConfig, out, eps: float | None = None):
    """Classical Schwarz run (true local solves), same stopping rule."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    eps = eps if eps is not None else cfg.epsilons[0]
    prob = make_problem_from_config(cfg, eps, 0.0)
    assembled, state, report = run_classical(prob, _online_opts(cfg, cfg.neighbor_counts[0]))
    sol_path = out / f"classical_eps{eps!r}.tsd"
    rep_path = out / f"classical_eps{eps!r}.json"
    rp = run_problem(cfg, eps)
    vec = assembled.ravel() if cfg.problem == "elliptic" else \
        np.concatenate([assembled.I.ravel(), assembled.T])
    dct.save_solution(rp, vec, rp.global_trace(), sol_path, extra={"kind": "classical"})
    rep_path.write_text(json.dumps({"config": {"eps": eps}, **report.as_dict()},
                                   sort_keys=True, indent=2) + "\n")
    return (sol_path, rep_path), report


def _validate_against_header(cfg: ExperimentConfig, desc: dict):
    from .config import ConfigError

    n_run = round(cfg.L / cfg.h)
    stored = desc.get("n", desc.get("nx"))
    if stored != n_run:
        raise ConfigError(f"dictionary grid ({stored} cells) does not match the config "
                          f"({n_run} cells)")
    if desc.get("boundary") != cfg.boundary:
        raise ConfigError("dictionary boundary data does not match the config")
    if cfg.problem == "rte" and desc.get("nv") != cfg.nv:
        raise ConfigError("dictionary velocity grid does not match the config")


def _nearest_center(problem, dset, ref_field, p: int):
    """Dictionary entry nearest the reference solution confined to patch p,
    in the problem's field metric."""
    d = dset.for_patch(p)
    target = problem.confine_to_patch(ref_field, p)
    fw = problem.field_weights_for(p)
    dist2 = np.sum(fw[None, :] * (d.fields - target[None, :]) ** 2, axis=1)
    return d, target, fw, int(np.argmin(dist2)), dist2


def bench_svd(cfg: ExperimentConfig, out, threads: int = 1) -> Path:
    """Singular-value decay of the centered dictionary on the chosen patch,
    one block per buffer width.  CSV: dxb, index (1-based), sigma_ratio."""
    out = Path(out)
    eps = cfg.epsilons[0]
    ref = load_reference_field(cfg, ensure_reference(cfg, eps, out))
    rows = []
    for dxb in cfg.buffers:
        prob = make_problem_from_config(cfg, eps, dxb)
        dset = dct.load(ensure_offline(cfg, eps, dxb, out, threads))
        p = prob.layout.index_of(*cfg.bench_patch)
        d, target, fw, nearest, _ = _nearest_center(prob, dset, ref, p)
        X = np.delete(d.fields, nearest, axis=0) - d.fields[nearest][None, :]
        sv = np.linalg.svd(X * np.sqrt(fw)[None, :], compute_uv=False)
        for j, s in enumerate(sv):
            rows.append([dxb, j + 1, float(s / sv[0])])
    return _write_csv(out / "bench_svd.csv", ["dxb", "index", "sigma_ratio"], rows)


def bench_projection(cfg: ExperimentConfig, out, threads: int = 1) -> Path:
    """Relative error of projecting the confined reference solution onto the
    affine span of its k nearest dictionary entries, k = 2 .. k_max.

    The residual is accumulated through an expanding orthonormal basis, so
    the reported curve is non-increasing by construction.
    """
    out = Path(out)
    eps = cfg.epsilons[0]
    dxb = cfg.buffer
    ref = load_reference_field(cfg, ensure_reference(cfg, eps, out))
    prob = make_problem_from_config(cfg, eps, dxb)
    dset = dct.load(ensure_offline(cfg, eps, dxb, out, threads))
    p = prob.layout.index_of(*cfg.bench_patch)
    d, target, fw, nearest, dist2 = _nearest_center(prob, dset, ref, p)
    order = np.argsort(dist2, kind="stable")
    k_max = cfg.k_max or d.n
    sw = np.sqrt(fw)
    y = (target - d.fields[order[0]]) * sw
    B = (d.fields[order[1:k_max]] - d.fields[order[0]][None, :]).T * sw[:, None]
    Q, _ = np.linalg.qr(B)
    proj2 = np.cumsum((Q.T @ y) ** 2)
    ref2 = float(np.sum((target * sw) ** 2))
    rows = []
    for k in range(2, k_max + 1):
        resid2 = max(float(np.sum(y * y)) - float(proj2[k - 2]), 0.0)
        rows.append([k, float(np.sqrt(resid2 / ref2))])
    return _write_csv(out / "bench_projection.csv", ["k", "rel_error"], rows)


def bench_error_vs_k(cfg: ExperimentConfig, out, threads: int = 1) -> Path:
    """Full online runs over the (k, epsilon, buffer) grid.  CSV columns:
    eps, dxb, k, rel_error, iterations, converged, online_seconds."""
    out = Path(out)
    rows = []
    for eps in cfg.epsilons:
        ref = load_reference_field(cfg, ensure_reference(cfg, eps, out))
        for dxb in cfg.buffers:
            prob = make_problem_from_config(cfg, eps, dxb)
            dset = dct.load(ensure_offline(cfg, eps, dxb, out, threads))
            for k in cfg.neighbor_counts:
                t0 = time.perf_counter()
                assembled, _, report = run_online(prob, dset, _online_opts(cfg, k))
                dt = time.perf_counter() - t0
                err = prob.relative_error_global(ref, assembled)
                rows.append([eps, dxb, k, float(err), report.iterations,
                             bool(report.converged), dt])
    return _write_csv(out / "bench_error_vs_k.csv",
                      ["eps", "dxb", "k", "rel_error", "iterations", "converged",
                       "online_seconds"], rows)


def bench_timing(cfg: ExperimentConfig, out, threads: int = 1) -> Path:
    """Wall-time comparison, reduced online vs classical Schwarz, identical
    stopping rules; offline time reported separately.  CSV columns: method,
    k, eps, dxb, iterations, converged, rel_error, offline_seconds,
    online_seconds."""
    out = Path(out)
    eps = cfg.epsilons[0]
    dxb = cfg.buffer
    ref = load_reference_field(cfg, ensure_reference(cfg, eps, out))
    dpath = ensure_offline(cfg, eps, dxb, out, threads)
    dset = dct.load(dpath)
    offline_seconds = float(dset.header.get("build_seconds", float("nan")))
    prob = make_problem_from_config(cfg, eps, dxb)
    rows = []
    for k in cfg.neighbor_counts:
        t0 = time.perf_counter()
        assembled, _, report = run_online(prob, dset, _online_opts(cfg, k))
        dt = time.perf_counter() - t0
        err = prob.relative_error_global(ref, assembled)
        rows.append(["reduced", k, eps, dxb, report.iterations, bool(report.converged),
                     float(err), offline_seconds, dt])
    prob_cl = make_problem_from_config(cfg, eps, 0.0)
    t0 = time.perf_counter()
    assembled, _, report = run_classical(prob_cl, _online_opts(cfg, cfg.neighbor_counts[0]))
    dt = time.perf_counter() - t0
    err = prob_cl.relative_error_global(ref, assembled)
    rows.append(["classical", 0, eps, dxb, report.iterations, bool(report.converged),
                 float(err), 0.0, dt])
    return _write_csv(out / "bench_timing.csv",
                      ["method", "k", "eps", "dxb", "iterations", "converged",
                       "rel_error", "offline_seconds", "online_seconds"], rows)
