"""Offline stage: per-patch dictionaries of paired (boundary trace, interior
field) samples, plus their binary file format.

Every entry comes from one buffered local solve: a random boundary condition
on the enlarged patch, the PDE solved there, and the solution confined to the
working patch and its boundary.  Failed solves are redrawn from the same
per-(patch, sample) stream, so serial and parallel builds agree bit for bit.

For the translation-invariant slab problem one interior dictionary is built
and aliased across all interior patches.

File format ("TSDICT1"): magic string, little-endian uint64 header length,
UTF-8 JSON header (metadata, shapes, alias table, per-array byte offsets),
the raw float64 little-endian arrays in header order, and a trailing 64-bit
FNV-1a checksum of everything preceding it.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .elliptic import NewtonOpts, SolverFailure
from .geometry import Grid1D, Grid2D, build_layout_1d, build_layout_2d
from .rte import FixedPointOpts
from .sampler import stream

__all__ = [
    "Dictionary",
    "DictionarySet",
    "DictionaryError",
    "build_dictionary",
    "build_all",
    "save",
    "load",
    "fnv1a64",
    "problem_description",
    "problem_from_description",
    "save_solution",
    "load_solution",
]

MAGIC = b"TSDICT1"
FORMAT_VERSION = 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


class DictionaryError(RuntimeError):
    pass


def fnv1a64(data: bytes, h: int = _FNV_OFFSET) -> int:
    """64-bit FNV-1a over a byte string (resumable via the h argument)."""
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _U64
    return h


@dataclass
class Dictionary:
    """N paired samples of one patch: traces (N, P) and packed fields (N, D)."""

    patch: int
    traces: np.ndarray
    fields: np.ndarray
    retries: int = 0

    @property
    def n(self) -> int:
        return self.traces.shape[0]

    def __post_init__(self):
        if self.traces.shape[0] != self.fields.shape[0]:
            raise DictionaryError("trace/field sample counts disagree")


@dataclass
class DictionarySet:
    """All dictionaries of one offline run plus the provenance header."""

    header: dict
    layout: object
    dicts: dict[int, Dictionary]
    aliases: dict[int, int]          # patch -> dictionary id

    def for_patch(self, p: int) -> Dictionary:
        return self.dicts[self.aliases[p]]

    @property
    def n_patches(self) -> int:
        return len(self.aliases)


def problem_description(problem) -> dict:
    lay = problem.layout
    if problem.kind == "elliptic":
        desc = {
            "kind": "elliptic",
            "L": problem.grid.L,
            "n": problem.grid.n,
            "m1": lay.shape[0],
            "m2": lay.shape[1],
        }
    else:
        desc = {
            "kind": "rte",
            "L": problem.grid.L,
            "nx": problem.grid.nx,
            "nv": problem.grid.nv,
            "m": lay.shape[0],
        }
    desc.update({
        "overlap_cells": lay.overlap_cells,
        "buffer_cells": lay.buffer_cells,
        "eps": problem.eps,
    })
    desc.update(problem.header_extras())
    return desc


def problem_from_description(desc: dict):
    from .problems import EllipticProblem, RteProblem

    kind = desc["kind"]
    if kind == "elliptic":
        grid = Grid2D(desc["L"], desc["n"])
        h = grid.h
        layout = build_layout_2d(grid, desc["m1"], desc["m2"],
                                 desc["overlap_cells"] * h, desc["buffer_cells"] * h)
        opts = NewtonOpts(tol=desc.get("newton_tol", 1e-10),
                          max_iter=desc.get("newton_max_iter", 50))
        return EllipticProblem(grid, layout, desc["eps"], desc["boundary"], opts)
    if kind == "rte":
        grid = Grid1D.create(desc["L"], desc["L"] / desc["nx"], desc["nv"])
        dx = grid.dx
        layout = build_layout_1d(grid, desc["m"],
                                 desc["overlap_cells"] * dx, desc["buffer_cells"] * dx)
        opts = FixedPointOpts(tol=desc.get("fp_tol", 1e-10),
                              max_iter=desc.get("fp_max_iter", 500),
                              anderson_depth=desc.get("anderson_depth", 5),
                              anderson_damping=desc.get("anderson_damping", 1.0),
                              newton_tol=desc.get("newton_tol", 1e-11))
        return RteProblem(grid, layout, desc["eps"], desc["boundary"], opts)
    raise DictionaryError(f"unknown problem kind {kind!r} in header")


def build_dictionary(problem, p: int, n_samples: int, radius: float, exponent: int,
                     seed: int, max_retries: int = 3, stream_patch: int | None = None) -> Dictionary:
    """Sample and solve N entries for patch p.

    ``stream_patch`` overrides the patch key of the random streams; aliased
    builds pass the representative patch so reuse does not change draws.
    """
    key = p if stream_patch is None else stream_patch
    traces, fields = [], []
    retries = 0
    for i in range(n_samples):
        rng = stream(seed, key, i)
        last_err = None
        for attempt in range(max_retries + 1):
            try:
                tr, fv = problem.sample_pair(p, radius, exponent, seed, rng)
                break
            except SolverFailure as err:
                last_err = err
                retries += 1
        else:
            raise DictionaryError(
                f"patch {p}, sample {i}: local solver failed {max_retries + 1} times "
                f"(last residual {last_err.residual:.3e})") from last_err
        traces.append(tr)
        fields.append(fv)
    return Dictionary(patch=p, traces=np.array(traces), fields=np.array(fields),
                      retries=retries)


def _build_worker(args):
    problem, p, n_samples, radius, exponent, seed, max_retries, stream_patch = args
    return p, build_dictionary(problem, p, n_samples, radius, exponent, seed,
                               max_retries, stream_patch)


def _alias_plan(problem) -> tuple[list[tuple[int, int]], dict[int, int]]:
    """Patches to build (patch, stream key) and the patch -> builder aliases.
    Interior slab patches share one dictionary (translation invariance)."""
    n = problem.n_patches
    if problem.kind != "rte" or n <= 2:
        return [(p, p) for p in range(n)], {p: p for p in range(n)}
    rep = 1
    builds = [(0, 0), (rep, rep), (n - 1, n - 1)]
    aliases = {0: 0, n - 1: n - 1}
    for p in range(1, n - 1):
        if not problem.layout.buffered_equal(rep, p):
            raise DictionaryError(f"interior patch {p} is not a translate of patch {rep}; "
                                  "cannot reuse the interior dictionary")
        aliases[p] = rep
    return builds, aliases


def _timestamp() -> str:
    sde = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(sde) if sde else time.time()
    return datetime.fromtimestamp(t, tz=timezone.utc).isoformat()


def build_all(problem, n_samples: int, radius: float, exponent: int, seed: int,
              max_retries: int = 3, threads: int = 1, created_at: str | None = None,
              progress=None) -> DictionarySet:
    """Build the dictionaries of every patch (aliased where reuse applies)."""
    builds, aliases = _alias_plan(problem)
    jobs = [(problem, p, n_samples, radius, exponent, seed, max_retries, key)
            for p, key in builds]
    results = {}
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            for p, d in ex.map(_build_worker, jobs):
                results[p] = d
                if progress:
                    progress(p, d)
    else:
        for job in jobs:
            p, d = _build_worker(job)
            results[p] = d
            if progress:
                progress(p, d)

    ids = {p: k for k, p in enumerate(sorted(results))}
    dicts = {ids[p]: results[p] for p in sorted(results)}
    header = {
        "format_version": FORMAT_VERSION,
        "payload": "dictionary",
        "problem": problem_description(problem),
        "sampler": {"radius": radius, "radial_exponent": exponent,
                    "num_samples": n_samples, "seed": seed},
        "created_at": created_at if created_at is not None else _timestamp(),
    }
    return DictionarySet(header=header, layout=problem.layout, dicts=dicts,
                         aliases={p: ids[q] for p, q in aliases.items()})


def _header_bytes(dset: DictionarySet) -> tuple[bytes, list[np.ndarray]]:
    arrays, records = [], []
    offset = 0
    for k in sorted(dset.dicts):
        d = dset.dicts[k]
        rec = {"id": k, "patch": d.patch, "num_samples": int(d.n), "retries": int(d.retries)}
        for name, arr in (("traces", d.traces), ("fields", d.fields)):
            a = np.ascontiguousarray(arr, dtype="<f8")
            rec[name] = {"shape": list(a.shape), "offset": offset}
            offset += a.nbytes
            arrays.append(a)
        records.append(rec)
    header = dict(dset.header)
    header["aliases"] = {str(p): q for p, q in sorted(dset.aliases.items())}
    header["dicts"] = records
    header["array_bytes"] = offset
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return blob, arrays


def save(dset: DictionarySet, path) -> None:
    """Write the set; the trailing checksum covers every preceding byte."""
    blob, arrays = _header_bytes(dset)
    h = fnv1a64(MAGIC)
    h = fnv1a64(len(blob).to_bytes(8, "little"), h)
    h = fnv1a64(blob, h)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(blob).to_bytes(8, "little"))
        f.write(blob)
        for a in arrays:
            buf = a.tobytes()
            h = fnv1a64(buf, h)
            f.write(buf)
        f.write(h.to_bytes(8, "little"))


def load(path) -> DictionarySet:
    """Read and verify a dictionary file; the layout is rebuilt from the header."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(MAGIC) + 16 or data[:len(MAGIC)] != MAGIC:
        raise DictionaryError(f"{path}: not a TSDICT1 file")
    stored = int.from_bytes(data[-8:], "little")
    if fnv1a64(data[:-8]) != stored:
        raise DictionaryError(f"{path}: checksum mismatch (truncated or corrupt)")
    hlen = int.from_bytes(data[7:15], "little")
    header = json.loads(data[15:15 + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise DictionaryError(f"{path}: unsupported format version "
                              f"{header.get('format_version')!r}")
    base = 15 + hlen
    expected = base + header["array_bytes"] + 8
    if len(data) != expected:
        raise DictionaryError(f"{path}: size {len(data)} != declared {expected}")

    problem = problem_from_description(header["problem"])
    dicts = {}
    for rec in header["dicts"]:
        arrs = {}
        for name in ("traces", "fields"):
            shape = tuple(rec[name]["shape"])
            off = base + rec[name]["offset"]
            count = int(np.prod(shape))
            arrs[name] = np.frombuffer(data, dtype="<f8", count=count,
                                       offset=off).reshape(shape).copy()
        d = Dictionary(patch=rec["patch"], traces=arrs["traces"], fields=arrs["fields"],
                       retries=rec["retries"])
        expect_p = problem.trace_len(d.patch)
        if d.traces.shape[1] != expect_p or d.fields.shape[1] != problem.field_dof(d.patch):
            raise DictionaryError(f"{path}: dictionary {rec['id']} shapes do not match "
                                  "the declared layout")
        dicts[rec["id"]] = d
    aliases = {int(p): q for p, q in header["aliases"].items()}
    return DictionarySet(header=header, layout=problem.layout, dicts=dicts, aliases=aliases)


def save_solution(problem, field_vec: np.ndarray, trace_vec: np.ndarray, path,
                  extra: dict | None = None, created_at: str | None = None) -> None:
    """Store one global field in the dictionary container.  ``problem`` must
    be a single-patch instance on the stored field's grid."""
    if problem.n_patches != 1:
        raise DictionaryError("solutions are stored against a single-patch layout")
    header = {
        "format_version": FORMAT_VERSION,
        "payload": "solution",
        "problem": problem_description(problem),
        "sampler": None,
        "extra": extra or {},
        "created_at": created_at if created_at is not None else _timestamp(),
    }
    d = Dictionary(patch=0, traces=trace_vec[None, :].copy(), fields=field_vec[None, :].copy())
    dset = DictionarySet(header=header, layout=problem.layout, dicts={0: d}, aliases={0: 0})
    save(dset, path)


def load_solution(path) -> tuple[dict, np.ndarray]:
    """Return (header, packed global field) from a solution file."""
    dset = load(path)
    if dset.header.get("payload") != "solution":
        raise DictionaryError(f"{path}: not a solution file")
    return dset.header, dset.dicts[0].fields[0]
