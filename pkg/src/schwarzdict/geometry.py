"""Overlapping patch decompositions on uniform grids.

Everything here is index arithmetic: patch edges, overlap bands and offline
buffer margins are forced to sit on grid lines, so passing boundary data
between neighboring patches is exact node selection with no interpolation.
The module builds

* the patch rectangles/intervals and their buffered enlargements,
* neighbor lists (north/south/east/west in 2D, left/right in 1D),
* per-patch perimeter node enumerations (counterclockwise, corners once),
* node-index maps from each patch boundary into every neighbor, and
* a piecewise-linear partition of unity used to blend local solutions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LayoutError",
    "Grid2D",
    "Grid1D",
    "Box2D",
    "Box1D",
    "PatchLayout",
    "PartitionOfUnity",
    "build_layout_2d",
    "build_layout_1d",
    "build_partition_of_unity",
    "restrict_trace",
    "perimeter_nodes",
]

_ALIGN_RTOL = 1e-9


class LayoutError(ValueError):
    """Raised for misaligned or degenerate decompositions."""


def _cells_from_width(width: float, h: float, what: str) -> int:
    """Convert a physical width to a cell count, rejecting off-grid values."""
    k = int(round(width / h))
    if k < 0 or abs(k * h - width) > _ALIGN_RTOL * max(h, abs(width)):
        raise LayoutError(f"{what} = {width!r} is not a nonnegative multiple of the mesh width {h!r}")
    return k


@dataclass(frozen=True)
class Grid2D:
    """Uniform node-centered grid on the square [0, L]^2 with n cells per side."""

    L: float
    n: int

    def __post_init__(self):
        if self.n < 4:
            raise LayoutError(f"need at least 4 cells per side, got n={self.n}")
        if not np.isfinite(self.L) or self.L <= 0:
            raise LayoutError(f"invalid domain size L={self.L!r}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @classmethod
    def from_h(cls, L: float, h: float) -> "Grid2D":
        return cls(L=L, n=_cells_from_width(L, h, "domain size L"))

    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.h


@dataclass(frozen=True)
class Grid1D:
    """Uniform node grid on the slab [0, L] plus a Gauss-Legendre velocity set.

    Velocity nodes are ascending on (-1, 1); the first nv/2 are negative and
    the last nv/2 positive, which is how incoming/outgoing splits are indexed
    throughout.
    """

    L: float
    nx: int
    nv: int
    v: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.nv % 2 != 0 or self.nv < 2:
            raise LayoutError(f"velocity node count must be even and >= 2, got {self.nv}")
        if abs(float(np.sum(self.w)) - 2.0) > 1e-12:
            raise LayoutError("Gauss-Legendre weights must sum to 2")
        if np.any(np.diff(self.v) <= 0):
            raise LayoutError("velocity nodes must be strictly ascending")
        half = self.nv // 2
        if not (np.all(self.v[:half] < 0) and np.all(self.v[half:] > 0)):
            raise LayoutError("velocity nodes must split into negative/positive halves")

    @property
    def dx(self) -> float:
        return self.L / self.nx

    @classmethod
    def create(cls, L: float, dx: float, nv: int) -> "Grid1D":
        v, w = np.polynomial.legendre.leggauss(nv)
        return cls(L=L, nx=_cells_from_width(L, dx, "slab length L"), nv=nv, v=v, w=w)

    def nodes(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.dx


@dataclass(frozen=True)
class Box2D:
    """Closed node-index rectangle [i0, i1] x [j0, j1] (inclusive bounds)."""

    i0: int
    i1: int
    j0: int
    j1: int

    @property
    def nx(self) -> int:
        return self.i1 - self.i0

    @property
    def ny(self) -> int:
        return self.j1 - self.j0

    def shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny + 1)

    def contains_node(self, i: int, j: int) -> bool:
        return self.i0 <= i <= self.i1 and self.j0 <= j <= self.j1

    def contains_node_strict(self, i: int, j: int) -> bool:
        return self.i0 < i < self.i1 and self.j0 < j < self.j1

    def rect(self, h: float) -> tuple[float, float, float, float]:
        return (self.i0 * h, self.i1 * h, self.j0 * h, self.j1 * h)


@dataclass(frozen=True)
class Box1D:
    """Closed node-index interval [a, b] (inclusive)."""

    a: int
    b: int

    @property
    def nx(self) -> int:
        return self.b - self.a

    def contains_node(self, i: int) -> bool:
        return self.a <= i <= self.b

    def contains_node_strict(self, i: int) -> bool:
        return self.a < i < self.b

    def interval(self, dx: float) -> tuple[float, float]:
        return (self.a * dx, self.b * dx)


def perimeter_nodes(box: Box2D) -> tuple[np.ndarray, np.ndarray]:
    """Global node indices along the box boundary, counterclockwise from the
    southwest corner, each corner listed once: south, east, north, west."""
    nx, ny = box.nx, box.ny
    ii = np.concatenate([
        np.arange(box.i0, box.i1),                # south j0, i0..i1-1
        np.full(ny, box.i1),                      # east  i1, j0..j1-1
        np.arange(box.i1, box.i0, -1),            # north j1, i1..i0+1
        np.full(ny, box.i0),                      # west  i0, j1..j0+1
    ])
    jj = np.concatenate([
        np.full(nx, box.j0),
        np.arange(box.j0, box.j1),
        np.full(nx, box.j1),
        np.arange(box.j1, box.j0, -1),
    ])
    return ii, jj


@dataclass
class TraceMap:
    """Positions of patch-m boundary nodes that fall inside (closed) patch l,
    paired with the node indices local to patch l's field array."""

    positions: np.ndarray
    li: np.ndarray
    lj: np.ndarray


@dataclass
class PatchLayout:
    """Overlapping decomposition with buffered patches and exact trace maps.

    ``dim`` is 2 (square, tensor patch grid) or 1 (slab).  Patches are stored
    row-major in (m1, m2) with m1 (the x index) varying fastest.  All index
    maps refer to node indices; physical coordinates are index * h.
    """

    dim: int
    grid: object
    shape: tuple[int, ...]
    overlap_cells: int
    buffer_cells: int
    boxes: list
    buffered: list
    neighbors: list[list[int]]
    # 2D only: per-patch perimeter enumeration and physical-boundary mask
    trace_ii: list[np.ndarray] = field(default_factory=list)
    trace_jj: list[np.ndarray] = field(default_factory=list)
    trace_phys: list[np.ndarray] = field(default_factory=list)
    # (m, l) -> nodes of the m-trace covered by closed patch l
    trace_maps: dict = field(default_factory=dict)
    # m -> list of (l, positions, li, lj): unique update source per trace node
    owners: dict = field(default_factory=dict)

    @property
    def n_patches(self) -> int:
        return len(self.boxes)

    def index_of(self, *m: int) -> int:
        """Linear patch id from 1-based per-axis indices (paper convention)."""
        if self.dim == 1:
            (m1,) = m
            if not 1 <= m1 <= self.shape[0]:
                raise LayoutError(f"patch index {m1} out of range")
            return m1 - 1
        m1, m2 = m
        M1, M2 = self.shape
        if not (1 <= m1 <= M1 and 1 <= m2 <= M2):
            raise LayoutError(f"patch index {(m1, m2)} out of range")
        return (m2 - 1) * M1 + (m1 - 1)

    def multi_index(self, p: int) -> tuple[int, ...]:
        if self.dim == 1:
            return (p + 1,)
        M1 = self.shape[0]
        return (p % M1 + 1, p // M1 + 1)

    def buffered_equal(self, p: int, q: int) -> bool:
        """True when patches p and q have identically shaped (translated)
        buffered and working boxes — the reuse condition for dictionaries of
        translation-invariant problems."""
        bp, bq = self.boxes[p], self.boxes[q]
        fp, fq = self.buffered[p], self.buffered[q]
        if self.dim == 1:
            return bp.nx == bq.nx and fp.nx == fq.nx and (bp.a - fp.a) == (bq.a - fq.a)
        raise LayoutError("buffered_equal is defined for 1D layouts")


PartitionOfUnity = list  # per-patch weight arrays, shaped like the patch node box


def build_layout_2d(grid: Grid2D, M1: int, M2: int, dxo: float, dxb: float) -> PatchLayout:
    """Decompose [0,L]^2 into M1 x M2 overlapping rectangles.

    Base cells are the equal non-overlapping squares; each is widened by
    ``dxo`` on every side not on the physical boundary, and the buffered
    copies are widened by a further ``dxb`` (clipped to the domain).
    """
    h = grid.h
    if M1 < 1 or M2 < 1:
        raise LayoutError("patch counts must be >= 1")
    if grid.n % M1 or grid.n % M2:
        raise LayoutError(f"grid with {grid.n} cells cannot be split into {M1}x{M2} aligned patches")
    ko = _cells_from_width(dxo, h, "overlap width")
    kb = _cells_from_width(dxb, h, "buffer width")
    c1, c2 = grid.n // M1, grid.n // M2
    if M1 > 1 and 2 * ko > c1 or M2 > 1 and 2 * ko > c2:
        raise LayoutError(f"overlap of {ko} cells swallows the {c1}x{c2}-cell base patches")
    if ko == 0 and (M1 > 1 or M2 > 1):
        warnings.warn("zero-overlap layout: Schwarz exchange degenerates to interface values",
                      stacklevel=2)

    def span(m, M, c):
        a = max((m - 1) * c - ko, 0)
        b = min(m * c + ko, grid.n)
        return a, b

    boxes, buffered = [], []
    for m2 in range(1, M2 + 1):
        for m1 in range(1, M1 + 1):
            i0, i1 = span(m1, M1, c1)
            j0, j1 = span(m2, M2, c2)
            if i1 <= i0 or j1 <= j0:
                raise LayoutError(f"patch {(m1, m2)} is empty")
            boxes.append(Box2D(i0, i1, j0, j1))
            # extend by the buffer only on sides strictly inside the domain
            bi0 = max(i0 - kb, 0) if i0 > 0 else 0
            bi1 = min(i1 + kb, grid.n) if i1 < grid.n else grid.n
            bj0 = max(j0 - kb, 0) if j0 > 0 else 0
            bj1 = min(j1 + kb, grid.n) if j1 < grid.n else grid.n
            buffered.append(Box2D(bi0, bi1, bj0, bj1))

    neighbors = []
    for p in range(M1 * M2):
        m1, m2 = p % M1 + 1, p // M1 + 1
        nb = []
        for d1, d2 in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            l1, l2 = m1 + d1, m2 + d2
            if 1 <= l1 <= M1 and 1 <= l2 <= M2:
                nb.append((l2 - 1) * M1 + (l1 - 1))
        neighbors.append(sorted(nb))

    layout = PatchLayout(dim=2, grid=grid, shape=(M1, M2), overlap_cells=ko,
                         buffer_cells=kb, boxes=boxes, buffered=buffered,
                         neighbors=neighbors)
    _build_trace_maps_2d(layout)
    return layout


def _build_trace_maps_2d(layout: PatchLayout):
    grid: Grid2D = layout.grid
    n = grid.n
    for p, box in enumerate(layout.boxes):
        ii, jj = perimeter_nodes(box)
        layout.trace_ii.append(ii)
        layout.trace_jj.append(jj)
        layout.trace_phys.append((ii == 0) | (ii == n) | (jj == 0) | (jj == n))

    for m in range(layout.n_patches):
        ii, jj = layout.trace_ii[m], layout.trace_jj[m]
        phys = layout.trace_phys[m]
        owner = np.full(ii.shape, -1, dtype=int)
        # closed-cover maps per neighbor, and the unique update source per node:
        # prefer a neighbor whose open interior contains the node (it solved the
        # PDE there); patch corners fall back to closed containment.
        for level in (1, 0):
            for l in layout.neighbors[m]:
                lbox = layout.boxes[l]
                if level == 1:
                    inside = (lbox.i0 < ii) & (ii < lbox.i1) & (lbox.j0 < jj) & (jj < lbox.j1)
                else:
                    inside = (lbox.i0 <= ii) & (ii <= lbox.i1) & (lbox.j0 <= jj) & (jj <= lbox.j1)
                take = inside & ~phys & (owner == -1)
                owner[take] = l
        groups = []
        for l in layout.neighbors[m]:
            lbox = layout.boxes[l]
            closed = (lbox.i0 <= ii) & (ii <= lbox.i1) & (lbox.j0 <= jj) & (jj <= lbox.j1)
            pos = np.nonzero(closed)[0]
            layout.trace_maps[(m, l)] = TraceMap(pos, ii[pos] - lbox.i0, jj[pos] - lbox.j0)
            pos_own = np.nonzero(owner == l)[0]
            if pos_own.size:
                groups.append((l, pos_own, ii[pos_own] - lbox.i0, jj[pos_own] - lbox.j0))
        layout.owners[m] = groups
        uncovered = (~phys) & (owner == -1)
        if np.any(uncovered):
            raise LayoutError(f"patch {m}: {int(uncovered.sum())} interface nodes not covered "
                              "by any neighbor (layout bug)")


def build_layout_1d(grid: Grid1D, M: int, dxo: float, dxb: float) -> PatchLayout:
    """Decompose the slab [0, L] into M overlapping intervals.

    The two end patches take half the interior patch width (L / (2(M-1)));
    interior widths are L / (M-1).  Every patch is then widened by ``dxo``
    on sides away from the physical ends, and buffered copies by ``dxb``.
    """
    dx = grid.dx
    if M < 1:
        raise LayoutError("patch count must be >= 1")
    ko = _cells_from_width(dxo, dx, "overlap width")
    kb = _cells_from_width(dxb, dx, "buffer width")

    if M == 1:
        edges = [0, grid.nx]
    else:
        if grid.nx % (2 * (M - 1)):
            raise LayoutError(f"grid with {grid.nx} cells cannot host {M} aligned half/full patches")
        half = grid.nx // (2 * (M - 1))
        if 2 * ko > half:
            raise LayoutError("overlap swallows the end patches")
        # non-overlapping breakpoints: 0, half, 3*half, ..., nx
        edges = [0] + [half * (2 * m - 1) for m in range(1, M)] + [grid.nx]
    if ko == 0 and M > 1:
        warnings.warn("zero-overlap layout: Schwarz exchange degenerates to interface values",
                      stacklevel=2)

    boxes, buffered = [], []
    for m in range(M):
        a = max(edges[m] - ko, 0) if m > 0 else 0
        b = min(edges[m + 1] + ko, grid.nx) if m < M - 1 else grid.nx
        if b <= a:
            raise LayoutError(f"patch {m + 1} is empty")
        boxes.append(Box1D(a, b))
        ba = max(a - kb, 0) if a > 0 else 0
        bb = min(b + kb, grid.nx) if b < grid.nx else grid.nx
        buffered.append(Box1D(ba, bb))

    neighbors = [sorted(q for q in (m - 1, m + 1) if 0 <= q < M) for m in range(M)]
    return PatchLayout(dim=1, grid=grid, shape=(M,), overlap_cells=ko, buffer_cells=kb,
                       boxes=boxes, buffered=buffered, neighbors=neighbors)


def _ramp_1d(a: int, b: int, band_lo: int, band_hi: int) -> np.ndarray:
    """Piecewise-linear axis ramp on nodes a..b: rises over ``band_lo`` cells,
    flat at 1, falls over ``band_hi`` cells; bands of 0 cells mean no ramp."""
    r = np.ones(b - a + 1)
    if band_lo > 0:
        r[: band_lo + 1] = np.arange(band_lo + 1) / band_lo
    if band_hi > 0:
        r[-(band_hi + 1):] = np.minimum(r[-(band_hi + 1):], np.arange(band_hi, -1, -1) / band_hi)
    return r


def _axis_bands(layout: PatchLayout, p: int, axis: int) -> tuple[int, int]:
    """Overlap band widths (cells) of patch p against its lower/upper neighbor
    along the given axis (0 = x / 1D, 1 = y)."""
    if layout.dim == 1:
        box = layout.boxes[p]
        lo = hi = 0
        for l in layout.neighbors[p]:
            nb = layout.boxes[l]
            if l < p:
                lo = max(lo, nb.b - box.a)
            else:
                hi = max(hi, box.b - nb.a)
        return lo, hi
    box = layout.boxes[p]
    lo = hi = 0
    for l in layout.neighbors[p]:
        nb = layout.boxes[l]
        pm, lm = layout.multi_index(p), layout.multi_index(l)
        if axis == 0 and lm[1] == pm[1]:
            if lm[0] < pm[0]:
                lo = max(lo, nb.i1 - box.i0)
            elif lm[0] > pm[0]:
                hi = max(hi, box.i1 - nb.i0)
        elif axis == 1 and lm[0] == pm[0]:
            if lm[1] < pm[1]:
                lo = max(lo, nb.j1 - box.j0)
            elif lm[1] > pm[1]:
                hi = max(hi, box.j1 - nb.j0)
    return lo, hi


def build_partition_of_unity(layout: PatchLayout) -> PartitionOfUnity:
    """Per-patch blending weights: products of 1D ramps over each overlap band,
    renormalized nodewise so the fields sum to one exactly.

    With zero overlap the ramps degenerate to indicators and shared interface
    nodes are split evenly by the renormalization.
    """
    fields = []
    if layout.dim == 1:
        total = np.zeros(layout.grid.nx + 1)
        for p, box in enumerate(layout.boxes):
            lo, hi = _axis_bands(layout, p, 0)
            r = _ramp_1d(box.a, box.b, lo, hi)
            fields.append(r)
            total[box.a:box.b + 1] += r
        for p, box in enumerate(layout.boxes):
            fields[p] = fields[p] / total[box.a:box.b + 1]
        return fields

    n = layout.grid.n
    total = np.zeros((n + 1, n + 1))
    for p, box in enumerate(layout.boxes):
        lox, hix = _axis_bands(layout, p, 0)
        loy, hiy = _axis_bands(layout, p, 1)
        rx = _ramp_1d(box.i0, box.i1, lox, hix)
        ry = _ramp_1d(box.j0, box.j1, loy, hiy)
        chi = np.outer(rx, ry)
        fields.append(chi)
        total[box.i0:box.i1 + 1, box.j0:box.j1 + 1] += chi
    for p, box in enumerate(layout.boxes):
        fields[p] = fields[p] / total[box.i0:box.i1 + 1, box.j0:box.j1 + 1]
    return fields


def restrict_trace(field, layout: PatchLayout, l: int, m: int):
    """Values of patch l's field on the nodes of patch m's boundary inside
    (closed) patch l — a pure index gather.

    2D: ``field`` is a node array on the working or buffered box of l; returns
    ``(positions, values)`` into m's perimeter enumeration.  1D (kinetic):
    ``field = (I, T)`` on patch l; returns, per covered end of patch m, the
    incoming-velocity intensity rows and the temperature at the interface node.
    """
    if m not in range(layout.n_patches) or l not in layout.neighbors[m]:
        raise LayoutError(f"patch {l} is not a neighbor of patch {m}")

    if layout.dim == 2:
        tmap = layout.trace_maps.get((m, l))
        if tmap is None:
            raise LayoutError(f"no trace map stored for ({m}, {l})")
        if field.shape == layout.boxes[l].shape():
            off_i = off_j = 0
        elif field.shape == layout.buffered[l].shape():
            off_i = layout.boxes[l].i0 - layout.buffered[l].i0
            off_j = layout.boxes[l].j0 - layout.buffered[l].j0
        else:
            raise LayoutError(f"field shape {field.shape} matches neither patch {l} "
                              f"nor its buffered box")
        return tmap.positions, field[tmap.li + off_i, tmap.lj + off_j]

    I, T = field
    box_m, box_l = layout.boxes[m], layout.boxes[l]
    if I.shape[0] == box_l.nx + 1:
        off = 0
    elif I.shape[0] == layout.buffered[l].nx + 1:
        off = box_l.a - layout.buffered[l].a
    else:
        raise LayoutError(f"field length {I.shape[0]} matches neither patch {l} "
                          f"nor its buffered box")
    half = layout.grid.nv // 2
    res = {}
    if l < m and box_l.contains_node(box_m.a):
        k = box_m.a - box_l.a + off
        res["left"] = (I[k, half:].copy(), float(T[k]))   # inflow v > 0 at the left end
    if l > m and box_l.contains_node(box_m.b):
        k = box_m.b - box_l.a + off
        res["right"] = (I[k, :half].copy(), float(T[k]))  # inflow v < 0 at the right end
    if not res:
        raise LayoutError(f"patch {l} does not cover an end of patch {m}")
    return res
