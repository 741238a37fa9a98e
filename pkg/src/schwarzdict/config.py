"""Experiment configuration: one JSON document per benchmark campaign.

Validation is strict: unknown keys anywhere are errors (a typo in an epsilon
list must not silently run the wrong experiment), every width must sit on the
grid, and every neighbor count must fit the dictionary size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing key {key!r} in {where}")
    return d[key]


def _check_keys(d: dict, allowed: set[str], where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _aligned(width: float, step: float, what: str) -> float:
    k = round(width / step)
    if k < 0 or abs(k * step - width) > 1e-9 * max(step, abs(width)):
        raise ConfigError(f"{what} = {width} is not a nonnegative multiple of the mesh width {step}")
    return float(width)


@dataclass
class ExperimentConfig:
    problem: str
    # grid
    L: float
    h: float                      # mesh width (dx for the slab problem)
    nv: int                       # velocity nodes; 0 for the elliptic problem
    # layout
    m1: int
    m2: int                       # 1 for the slab problem
    overlap: float
    buffers: list[float]          # offline buffer widths, first entry is the default
    # media / scales
    epsilons: list[float]
    # sampler
    radius: float
    radial_exponent: int
    num_samples: int
    seed: int
    # online
    neighbor_counts: list[int]
    tol: float
    max_iter: int
    ls_truncation: float
    # reference
    refinement: int
    # misc
    boundary: str = "benchmark"
    output_dir: str = "out"
    bench_patch: tuple[int, ...] = (1,)
    k_max: int = 0                # projection sweep bound; 0 means num_samples
    solver: dict = field(default_factory=dict)

    @property
    def buffer(self) -> float:
        return self.buffers[0]

    def problem_kwargs(self, eps: float, dxb: float | None = None) -> dict:
        dxb = self.buffer if dxb is None else dxb
        if self.problem == "elliptic":
            return dict(L=self.L, h=self.h, M1=self.m1, M2=self.m2, dxo=self.overlap,
                        dxb=dxb, eps=eps, boundary=self.boundary)
        return dict(L=self.L, dx=self.h, nv=self.nv, M=self.m1, dxo=self.overlap,
                    dxb=dxb, eps=eps, boundary=self.boundary)


_SAMPLER_KEYS = {"radius", "radial_exponent", "num_samples", "seed"}
_ONLINE_KEYS = {"neighbor_counts", "tol", "max_iter", "ls_truncation"}
_SOLVER_KEYS = {"newton_tol", "newton_max_iter", "fp_tol", "fp_max_iter",
                "anderson_depth", "anderson_damping"}
_TOP_KEYS = {"problem", "grid", "layout", "epsilons", "sampler", "online",
             "reference", "boundary", "output_dir", "bench", "solver"}
_REFERENCE_KEYS = {"refinement"}
_BENCH_KEYS = {"patch", "k_max"}


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "config")
    problem = _require(doc, "problem", "config")
    if problem not in ("elliptic", "rte"):
        raise ConfigError(f"problem must be 'elliptic' or 'rte', got {problem!r}")

    grid = _require(doc, "grid", "config")
    layout = _require(doc, "layout", "config")
    sampler = _require(doc, "sampler", "config")
    online = _require(doc, "online", "config")
    reference = doc.get("reference", {"refinement": 1})
    bench = doc.get("bench", {})
    solver = doc.get("solver", {})
    _check_keys(reference, _REFERENCE_KEYS, "reference")
    _check_keys(bench, _BENCH_KEYS, "bench")
    _check_keys(solver, _SOLVER_KEYS, "solver")

    if problem == "elliptic":
        _check_keys(grid, {"L", "h"}, "grid")
        L = float(_require(grid, "L", "grid"))
        h = float(_require(grid, "h", "grid"))
        nv = 0
        _check_keys(layout, {"m1", "m2", "overlap", "buffers"}, "layout")
        m1 = int(_require(layout, "m1", "layout"))
        m2 = int(_require(layout, "m2", "layout"))
    else:
        _check_keys(grid, {"L", "dx", "nv"}, "grid")
        L = float(_require(grid, "L", "grid"))
        h = float(_require(grid, "dx", "grid"))
        nv = int(_require(grid, "nv", "grid"))
        if nv < 2 or nv % 2:
            raise ConfigError(f"nv must be a positive even integer, got {nv}")
        _check_keys(layout, {"m", "overlap", "buffers"}, "layout")
        m1 = int(_require(layout, "m", "layout"))
        m2 = 1

    n_cells = round(L / h)
    if abs(n_cells * h - L) > 1e-9 * L:
        raise ConfigError(f"L = {L} is not a multiple of the mesh width {h}")
    overlap = _aligned(float(_require(layout, "overlap", "layout")), h, "overlap")
    buffers = [_aligned(float(b), h, "buffer") for b in _require(layout, "buffers", "layout")]
    if not buffers:
        raise ConfigError("layout.buffers must list at least one width")

    epsilons = [float(e) for e in _require(doc, "epsilons", "config")]
    if not epsilons or any(e <= 0 for e in epsilons):
        raise ConfigError("epsilons must be a non-empty list of positive values")

    _check_keys(sampler, _SAMPLER_KEYS, "sampler")
    radius = float(_require(sampler, "radius", "sampler"))
    exponent = int(_require(sampler, "radial_exponent", "sampler"))
    num_samples = int(_require(sampler, "num_samples", "sampler"))
    seed = int(_require(sampler, "seed", "sampler"))
    if radius <= 0 or exponent < 1 or num_samples < 2:
        raise ConfigError("sampler needs radius > 0, radial_exponent >= 1, num_samples >= 2")

    _check_keys(online, _ONLINE_KEYS, "online")
    ks = [int(k) for k in _require(online, "neighbor_counts", "online")]
    if not ks or any(k < 2 for k in ks):
        raise ConfigError("neighbor_counts must be a non-empty list of k >= 2")
    bad = [k for k in ks if k > num_samples]
    if bad:
        raise ConfigError(f"neighbor count(s) {bad} exceed the dictionary size {num_samples}")
    tol = float(online.get("tol", 1e-5 if problem == "elliptic" else 1e-3))
    max_iter = int(online.get("max_iter", 500))
    ls_truncation = float(online.get("ls_truncation", 1e-10))

    refinement = int(_require(reference, "refinement", "reference"))
    if refinement < 1:
        raise ConfigError("reference refinement must be a positive integer")

    patch = tuple(int(v) for v in bench.get("patch", [2, 2] if problem == "elliptic" else [2]))
    k_max = int(bench.get("k_max", 0))
    if k_max > num_samples:
        raise ConfigError(f"bench.k_max = {k_max} exceeds the dictionary size {num_samples}")

    return ExperimentConfig(
        problem=problem, L=L, h=h, nv=nv, m1=m1, m2=m2, overlap=overlap, buffers=buffers,
        epsilons=epsilons, radius=radius, radial_exponent=exponent, num_samples=num_samples,
        seed=seed, neighbor_counts=ks, tol=tol, max_iter=max_iter,
        ls_truncation=ls_truncation, refinement=refinement,
        boundary=doc.get("boundary", "benchmark"),
        output_dir=doc.get("output_dir", "out"), bench_patch=patch, k_max=k_max,
        solver=dict(solver),
    )


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist")
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}")
    return parse_config(doc)
