"""Grid classification, relative-coordinate tuples, and the symmetry-based
abstraction mapping every grid cell to a coarse symbol.

Relative sets are expressed in the frames of the cell's own states: each
obstacle becomes an outer convex cover of the union of its frame transforms,
the target becomes an inner polytope of their intersection. The obstruction
test against relative obstacles orders control exploration and feeds the
synthesis cache; game soundness rests on the absolute-coordinate transition
oracle, so conservatism here only perturbs the search order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import (
    TWO_PI,
    Box,
    GeometryError,
    Polytope,
    SpatialIndex,
    cos_range,
    swept_rect_range,
)
from .grid import GridSpec
from .reach import ReachDict

NORMAL, REACH, AVOID = 0, 1, 2

REACH_STATE = 0
AVOID_STATE = 1
FIRST_PAIR_STATE = 2


@dataclass(frozen=True, eq=False)
class Classification:
    """Per-cell kind relative to the reach and avoid sets."""

    grid: GridSpec
    kind: np.ndarray  # int8 over grid.counts

    @property
    def kind_flat(self) -> np.ndarray:
        return self.kind.reshape(-1)

    @property
    def reach_mask(self) -> np.ndarray:
        return self.kind == REACH

    @property
    def avoid_mask(self) -> np.ndarray:
        return self.kind == AVOID

    @property
    def normal_mask(self) -> np.ndarray:
        return self.kind == NORMAL

    @property
    def n_reach(self) -> int:
        return int(np.count_nonzero(self.kind == REACH))

    @property
    def n_avoid(self) -> int:
        return int(np.count_nonzero(self.kind == AVOID))

    @property
    def n_normal(self) -> int:
        return int(np.count_nonzero(self.kind == NORMAL))

    def cells_of(self, kind: int) -> np.ndarray:
        return np.flatnonzero(self.kind_flat == kind)


def _cell_edges(grid: GridSpec, d: int) -> tuple[np.ndarray, np.ndarray]:
    w = grid.cell_widths[d]
    lo = grid.bounds.lower[d] + w * np.arange(grid.counts[d])
    return lo, lo + w


def classify_cells(grid: GridSpec, reach_box: Box, avoid_boxes: list[Box]) -> Classification:
    """Reach iff the cell is a subset of the reach box; avoid iff the closed
    cell meets any avoid box; avoid wins when both hold."""
    if grid.dim != 3:
        raise GeometryError("classification expects a 3-D grid")
    in_reach = []
    for d in range(3):
        lo, hi = _cell_edges(grid, d)
        in_reach.append((lo >= reach_box.lower[d]) & (hi <= reach_box.upper[d]))
    reach = in_reach[0][:, None, None] & in_reach[1][None, :, None] & in_reach[2][None, None, :]

    avoid = np.zeros(grid.counts, dtype=bool)
    for ab in avoid_boxes:
        hit = []
        for d in range(3):
            lo, hi = _cell_edges(grid, d)
            hit.append((lo <= ab.upper[d]) & (hi >= ab.lower[d]))
        avoid |= hit[0][:, None, None] & hit[1][None, :, None] & hit[2][None, None, :]

    kind = np.zeros(grid.counts, dtype=np.int8)
    kind[reach] = REACH
    kind[avoid] = AVOID  # avoid takes precedence
    return Classification(grid, kind)


def classify_cell(grid: GridSpec, cell: int, reach_box: Box, avoid_boxes: list[Box]) -> int:
    """Kind of a single cell; see classify_cells."""
    box = grid.cell_box(cell)
    for ab in avoid_boxes:
        if np.all(box.lower <= ab.upper) and np.all(ab.lower <= box.upper):
            return AVOID
    if reach_box.contains_box(box):
        return REACH
    return NORMAL


@dataclass(frozen=True)
class CircularArc:
    """Heading extent of a relative set: the full circle, or an interval
    canonicalized so its midpoint lies in [-pi, pi)."""

    lo: float
    hi: float
    full: bool = False

    @classmethod
    def make(cls, lo: float, hi: float) -> "CircularArc":
        if hi - lo >= TWO_PI - 1e-12:
            return cls(-np.pi, np.pi, True)
        mid = 0.5 * (lo + hi)
        shift = TWO_PI * np.floor((mid + np.pi) / TWO_PI)
        return cls(lo - shift, hi - shift, False)

    def overlaps(self, lo, hi):
        """Overlap with heading interval(s) near zero (tube headings).

        Linear comparison after canonicalization; exact whenever both
        intervals fit one 2*pi window, which holds for tube headings.
        """
        if self.full:
            return np.ones(np.shape(lo), dtype=bool) if np.ndim(lo) else True
        return (lo <= self.hi) & (self.lo <= hi)


@dataclass(frozen=True, eq=False)
class RelAvoid:
    """Outer cover of one obstacle seen from every frame of a cell."""

    polytope: Polytope        # 3-D H-representation (theta rows when bounded)
    pos_normals: np.ndarray   # (8, 2) positional halfplane normals
    pos_offsets: np.ndarray   # (8,) exact swept supports
    pos_bbox_lo: np.ndarray   # (2,) exact positional bbox of the union
    pos_bbox_hi: np.ndarray
    arc: CircularArc


@dataclass(frozen=True, eq=False)
class RelState:
    """Per-cell relative geometry: the framed cell, outer obstacle covers,
    and the inner target polytope (None when the relative target is empty)."""

    cell: int
    rel_cell: Box
    rel_avoid: list[RelAvoid]
    rel_reach: Polytope | None
    reach_arc: CircularArc | None
    query_point: np.ndarray | None  # closest point of rel_reach to the origin


def _frame_normals(theta_lo: float, theta_hi: float) -> np.ndarray:
    """Positional halfplane normals of the endpoint-frame box transforms."""
    rows = []
    for th in (theta_lo, theta_hi):
        c, s = np.cos(th), np.sin(th)
        rot_inv = np.array([[c, s], [-s, c]])  # R(-theta)
        for e in ([1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]):
            rows.append(rot_inv @ np.asarray(e))
    return np.array(rows)


def _swept_box_supports(normals: np.ndarray, corners: np.ndarray,
                        theta_lo: float, theta_hi: float) -> np.ndarray:
    """Exact support of union_{t in [theta_lo, theta_hi]} R(-t) @ box.

    corners: (..., 4, 2) positional box corners. Returns (..., m) supports,
    one per normal: max_q r_q * max cos over the swept angle interval.
    """
    r = np.hypot(corners[..., 0], corners[..., 1])       # (..., 4)
    phi = np.arctan2(corners[..., 1], corners[..., 0])   # (..., 4)
    psi = np.arctan2(normals[:, 1], normals[:, 0])       # (m,)
    ang = phi[..., None, :] - psi[:, None]               # (..., m, 4)
    _, cmax = cos_range(ang - theta_hi, ang - theta_lo)
    return np.max(r[..., None, :] * cmax, axis=-1)


def _arc_of_relative(set_lo: float, set_hi: float, cell_lo: float, cell_hi: float,
                     outer: bool) -> CircularArc | None:
    """Heading extent of a set transformed by every frame of the cell."""
    if set_hi - set_lo >= TWO_PI - 1e-12:
        return CircularArc(-np.pi, np.pi, True)
    if outer:
        return CircularArc.make(set_lo - cell_hi, set_hi - cell_lo)
    lo, hi = set_lo - cell_lo, set_hi - cell_hi
    if hi < lo:
        return None
    return CircularArc.make(lo, hi)


def _embed_polytope(pos_normals: np.ndarray, pos_offsets: np.ndarray,
                    arc: CircularArc | None) -> Polytope:
    rows = np.hstack([pos_normals, np.zeros((pos_normals.shape[0], 1))])
    offs = pos_offsets
    if arc is not None and not arc.full:
        rows = np.vstack([rows, [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]])
        offs = np.concatenate([offs, [arc.hi, -arc.lo]])
    return Polytope(rows, offs)


def _box_corners_2d(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """(..., 4, 2) corners of positional boxes given (..., 2) bounds."""
    return np.stack([
        np.stack([lo[..., 0], lo[..., 1]], axis=-1),
        np.stack([lo[..., 0], hi[..., 1]], axis=-1),
        np.stack([hi[..., 0], lo[..., 1]], axis=-1),
        np.stack([hi[..., 0], hi[..., 1]], axis=-1),
    ], axis=-2)


def build_rel_states(grid: GridSpec, reach_box: Box, avoid_boxes: list[Box],
                     classification: Classification | None = None,
                     cells=None) -> list[RelState]:
    """Relative-coordinate tuple per grid cell, indexed by flat cell id.

    Obstacle covers use endpoint-frame normals with exact swept supports,
    tight at degenerate cells (single frame: the exact transformed box). The
    target is eroded by the cell's positional extent and shrunk by the
    arc-sagitta margin so it under-approximates every in-cell frame's view.
    Query points are computed for Normal-classified cells only.

    `cells` restricts construction to a subset of flat ids (entries for the
    rest stay None); the default builds every cell.
    """
    if grid.dim != 3:
        raise GeometryError("relative states expect a 3-D grid")
    if classification is None:
        classification = classify_cells(grid, reach_box, avoid_boxes)
    kind_flat = classification.kind_flat
    widths = grid.cell_widths
    rel_cell = Box(np.zeros(3), np.zeros(3))  # singleton cross-section
    out: list[RelState | None] = [None] * grid.n_cells
    wanted = None
    if cells is not None:
        wanted = np.zeros(grid.n_cells, dtype=bool)
        wanted[np.asarray(list(cells), dtype=int)] = True

    n_i, n_j, n_t = grid.counts
    ij = np.stack(np.meshgrid(np.arange(n_i), np.arange(n_j), indexing="ij"),
                  axis=-1).reshape(-1, 2).astype(float)

    for t in range(n_t):
        th_lo = grid.bounds.lower[2] + t * widths[2]
        th_hi = th_lo + widths[2]
        delta = widths[2]
        normals = _frame_normals(th_lo, th_hi)

        c_lo = grid.bounds.lower[:2] + ij * widths[:2]   # (nIJ, 2)
        c_hi = c_lo + widths[:2]

        per_obstacle = []
        for ab in avoid_boxes:
            d_lo = ab.lower[:2] - c_hi                   # dilation: O (-) cell
            d_hi = ab.upper[:2] - c_lo
            corners = _box_corners_2d(d_lo, d_hi)        # (nIJ, 4, 2)
            offsets = _swept_box_supports(normals, corners, th_lo, th_hi)
            bx_lo, bx_hi, by_lo, by_hi = swept_rect_range(
                d_lo[:, 0], d_hi[:, 0], d_lo[:, 1], d_hi[:, 1], -th_hi, -th_lo)
            arc = _arc_of_relative(ab.lower[2], ab.upper[2], th_lo, th_hi, outer=True)
            per_obstacle.append((offsets, bx_lo, bx_hi, by_lo, by_hi, arc))

        # Inner target: eroded positional box, endpoint frames, sagitta margin.
        e_lo = reach_box.lower[:2] - c_lo                # (nIJ, 2) erosion
        e_hi = reach_box.upper[:2] - c_hi
        erosion_ok = np.all(e_hi >= e_lo, axis=1)
        corner_r = np.hypot(np.maximum(np.abs(e_lo[:, 0]), np.abs(e_hi[:, 0])),
                            np.maximum(np.abs(e_lo[:, 1]), np.abs(e_hi[:, 1])))
        margin = corner_r * (1.0 - np.cos(0.5 * delta))
        reach_arc = _arc_of_relative(reach_box.lower[2], reach_box.upper[2],
                                     th_lo, th_hi, outer=False)

        for p in range(ij.shape[0]):
            cell = grid.flat_index((int(ij[p, 0]), int(ij[p, 1]), t))
            if wanted is not None and not wanted[cell]:
                continue
            rel_avoid = [
                RelAvoid(
                    polytope=_embed_polytope(normals, offsets[p], arc),
                    pos_normals=normals,
                    pos_offsets=offsets[p],
                    pos_bbox_lo=np.array([bx_lo[p], by_lo[p]]),
                    pos_bbox_hi=np.array([bx_hi[p], by_hi[p]]),
                    arc=arc,
                )
                for offsets, bx_lo, bx_hi, by_lo, by_hi, arc in per_obstacle
            ]

            rel_reach = None
            q_point = None
            if erosion_ok[p] and reach_arc is not None:
                pos_offs = np.tile(np.concatenate([e_hi[p], -e_lo[p]]), 2) - margin[p]
                q_pos = _project_origin_to_polygon(normals, pos_offs)
                if q_pos is not None:
                    rel_reach = _embed_polytope(normals, pos_offs, reach_arc)
                    if kind_flat[cell] == NORMAL:
                        q_th = 0.0 if reach_arc.full else float(
                            np.clip(0.0, reach_arc.lo, reach_arc.hi))
                        q_point = np.array([q_pos[0], q_pos[1], q_th])
            out[cell] = RelState(cell, rel_cell, rel_avoid, rel_reach,
                                 reach_arc, q_point)
    return out


def _project_origin_to_polygon(normals: np.ndarray, offsets: np.ndarray,
                               span: float = 1e6) -> np.ndarray | None:
    """Closest point to the origin in the 2-D region {x : normals@x <= offsets}.

    Returns None when the halfplanes clip away to nothing.
    """
    if np.all(offsets >= 0.0):
        return np.zeros(2)
    poly = np.array([[-span, -span], [span, -span], [span, span], [-span, span]])
    for nrm, off in zip(normals, offsets):
        if len(poly) == 0:
            return None
        vals = poly @ nrm - off
        nxt = []
        m = len(poly)
        for i in range(m):
            a, b = poly[i], poly[(i + 1) % m]
            va, vb = vals[i], vals[(i + 1) % m]
            if va <= 1e-12:
                nxt.append(a)
            if (va < -1e-12 < vb) or (vb < -1e-12 < va):
                frac = va / (va - vb)
                nxt.append(a + frac * (b - a))
        poly = np.array(nxt) if nxt else np.empty((0, 2))
    if len(poly) == 0:
        return None
    best, best_d = None, np.inf
    m = len(poly)
    for i in range(m):
        a, b = poly[i], poly[(i + 1) % m]
        ab = b - a
        denom = float(ab @ ab)
        frac = 0.0 if denom == 0.0 else float(np.clip(-(a @ ab) / denom, 0.0, 1.0))
        pt = a + frac * ab
        d2 = float(pt @ pt)
        if d2 < best_d:
            best, best_d = pt, d2
    return best


def obstruction_mask(rel: RelState, rd: ReachDict, j: int = 0) -> np.ndarray:
    """Controls whose full relative tube meets any relative obstacle cover.

    Separating-axis test of every tube segment box against the obstacle's
    convex cover, vectorized over the control set. Conservative only through
    the cover itself; the test is exact for the cover.
    """
    boxes = rd.seg_bounds[j]            # (A, K+1, 2, 3)
    lo = boxes[:, :, 0, :]
    hi = boxes[:, :, 1, :]
    obstructed = np.zeros(boxes.shape[0], dtype=bool)
    for ra in rel.rel_avoid:
        th_ok = ra.arc.overlaps(lo[:, :, 2], hi[:, :, 2])
        ax_ok = (
            (lo[:, :, 0] <= ra.pos_bbox_hi[0]) & (ra.pos_bbox_lo[0] <= hi[:, :, 0])
            & (lo[:, :, 1] <= ra.pos_bbox_hi[1]) & (ra.pos_bbox_lo[1] <= hi[:, :, 1])
        )
        n_pos = np.maximum(ra.pos_normals, 0.0)
        n_neg = np.minimum(ra.pos_normals, 0.0)
        min_support = (
            np.einsum("md,akd->akm", n_pos, lo[:, :, :2])
            + np.einsum("md,akd->akm", n_neg, hi[:, :, :2])
        )
        normal_ok = np.all(min_support <= ra.pos_offsets, axis=2)
        obstructed |= np.any(th_ok & ax_ok & normal_ok, axis=1)
    return obstructed


def _obstruction_table_for_slice(rels: list[RelState], cells: np.ndarray,
                                 rd: ReachDict, j: int = 0) -> np.ndarray:
    """obstruction_mask stacked over cells of one heading slice.

    All cells of a slice share frame normals and obstacle arcs, so the tube
    supports along every normal are computed once and compared against the
    per-cell offsets in bulk. Result rows match obstruction_mask exactly.
    """
    boxes = rd.seg_bounds[j]
    lo = boxes[:, :, 0, :]
    hi = boxes[:, :, 1, :]
    n_cells = len(cells)
    out = np.zeros((n_cells, boxes.shape[0]), dtype=bool)
    first = rels[int(cells[0])]
    if not first.rel_avoid:
        return out
    normals = first.rel_avoid[0].pos_normals
    n_pos = np.maximum(normals, 0.0)
    n_neg = np.minimum(normals, 0.0)
    min_support = (
        np.einsum("md,akd->akm", n_pos, lo[:, :, :2])
        + np.einsum("md,akd->akm", n_neg, hi[:, :, :2])
    )                                                   # (A, K+1, 8)
    for o in range(len(first.rel_avoid)):
        arc = first.rel_avoid[o].arc
        th_ok = arc.overlaps(lo[:, :, 2], hi[:, :, 2])  # (A, K+1)
        offs = np.stack([rels[int(c)].rel_avoid[o].pos_offsets for c in cells])
        b_lo = np.stack([rels[int(c)].rel_avoid[o].pos_bbox_lo for c in cells])
        b_hi = np.stack([rels[int(c)].rel_avoid[o].pos_bbox_hi for c in cells])
        hit = np.broadcast_to(th_ok, (n_cells,) + th_ok.shape).copy()
        hit &= (lo[None, :, :, 0] <= b_hi[:, None, None, 0]) \
            & (b_lo[:, None, None, 0] <= hi[None, :, :, 0]) \
            & (lo[None, :, :, 1] <= b_hi[:, None, None, 1]) \
            & (b_lo[:, None, None, 1] <= hi[None, :, :, 1])
        for m in range(normals.shape[0]):
            hit &= min_support[None, :, :, m] <= offs[:, None, None, m]
        out |= hit.any(axis=2)
    return out


@dataclass(frozen=True, eq=False)
class SymAbstraction:
    """Map from grid cells to symmetry-abstract symbols.

    r_gs[cell] is REACH_STATE, AVOID_STATE, or FIRST_PAIR_STATE + p with
    pair_states[p] = (cross-section index, control symbol). cao_cells lists
    the Normal cells condemned by the obstruction threshold.
    """

    grid_fingerprint: str
    rd_fingerprint: str
    r_gs: np.ndarray                  # (n_cells,) int32
    pair_states: np.ndarray           # (n_pairs, 2) int32
    cao_cells: np.ndarray             # int64 cell ids
    query_points: np.ndarray          # (n_cells, 3), NaN where undefined
    ordering: str
    M: int
    budget: int

    @property
    def n_states(self) -> int:
        return FIRST_PAIR_STATE + len(self.pair_states)

    def state_of(self, cell: int) -> int:
        return int(self.r_gs[cell])

    def pair_of_state(self, state: int) -> tuple[int, int]:
        j, a = self.pair_states[state - FIRST_PAIR_STATE]
        return int(j), int(a)

    def preimage_counts(self) -> np.ndarray:
        return np.bincount(self.r_gs, minlength=self.n_states)


def build_sym_abstraction(rels: list[RelState], rd: ReachDict,
                          classification: Classification,
                          M: int | None = None,
                          ordering: str = "greedy",
                          budget: int | None = None) -> SymAbstraction:
    """Assign every cell an abstract symbol.

    Reach/avoid-classified cells map to the dedicated symbols (the relative
    tests reduce to exactly these classifications for the singleton
    cross-section). Every other cell walks the control set - nearest relative
    tube end to the cell's target point first under greedy ordering, index
    order otherwise - and adopts the first control whose full relative tube
    clears the relative obstacles. Accumulating M obstructed controls, or
    exhausting the exploration budget, condemns the cell to the avoid symbol.
    """
    if ordering not in ("greedy", "arbitrary"):
        raise ValueError(f"unknown ordering: {ordering}")
    grid = classification.grid
    n_controls = rd.n_controls
    m_eff = n_controls if M is None else min(int(M), n_controls)
    budget_eff = n_controls if budget is None else min(int(budget), n_controls)

    index = SpatialIndex(
        [(Box(b[0], b[1]), a) for a, b in enumerate(rd.last_boxes(0))]
    ) if ordering == "greedy" else None
    origin_order = index.ordered_keys(np.zeros(3)) if index is not None else None

    kind = classification.kind_flat
    n = grid.n_cells
    n_t = grid.counts[2]
    r_gs = np.empty(n, dtype=np.int32)
    r_gs[kind == REACH] = REACH_STATE
    r_gs[kind == AVOID] = AVOID_STATE
    query_points = np.full((n, 3), np.nan)
    pair_states: list[tuple[int, int]] = []
    pair_index: dict[tuple[int, int], int] = {}
    cao: list[int] = []

    normal_cells = np.flatnonzero(kind == NORMAL)
    obstruction: dict[int, np.ndarray] = {}
    for t in range(n_t):
        slice_cells = normal_cells[normal_cells % n_t == t]
        if slice_cells.size == 0:
            continue
        table = _obstruction_table_for_slice(rels, slice_cells, rd)
        for row, cell in enumerate(slice_cells):
            obstruction[int(cell)] = table[row]

    arange_order = np.arange(n_controls)
    for cell in normal_cells:
        cell = int(cell)
        rel = rels[cell]
        j = 0  # singleton cross-section
        if ordering == "greedy":
            if rel.query_point is not None:
                query_points[cell] = rel.query_point
                order = index.ordered_keys(rel.query_point)
            else:
                query_points[cell] = 0.0
                order = origin_order
        else:
            order = arange_order
        obstructed = obstruction[cell]

        assigned = False
        n_obstructed = 0
        for a in order[:budget_eff]:
            if obstructed[a]:
                n_obstructed += 1
                if n_obstructed >= m_eff:
                    break
                continue
            key = (j, int(a))
            if key not in pair_index:
                pair_index[key] = len(pair_states)
                pair_states.append(key)
            r_gs[cell] = FIRST_PAIR_STATE + pair_index[key]
            assigned = True
            break
        if not assigned:
            r_gs[cell] = AVOID_STATE
            cao.append(cell)

    return SymAbstraction(
        grid_fingerprint=grid.fingerprint(),
        rd_fingerprint=rd.fingerprint(),
        r_gs=r_gs,
        pair_states=np.array(pair_states, dtype=np.int32).reshape(-1, 2),
        cao_cells=np.array(cao, dtype=np.int64),
        query_points=query_points,
        ordering=ordering,
        M=m_eff,
        budget=budget_eff,
    )


def save_sym_abstraction(sym: SymAbstraction, path) -> None:
    meta = {
        "format_version": 1,
        "grid_fingerprint": sym.grid_fingerprint,
        "rd_fingerprint": sym.rd_fingerprint,
        "ordering": sym.ordering,
        "M": sym.M,
        "budget": sym.budget,
    }
    np.savez(
        path,
        meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        r_gs=sym.r_gs,
        pair_states=sym.pair_states,
        cao_cells=sym.cao_cells,
        query_points=sym.query_points,
    )


def load_sym_abstraction(path) -> SymAbstraction:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        return SymAbstraction(
            grid_fingerprint=meta["grid_fingerprint"],
            rd_fingerprint=meta["rd_fingerprint"],
            r_gs=data["r_gs"],
            pair_states=data["pair_states"],
            cao_cells=data["cao_cells"],
            query_points=data["query_points"],
            ordering=meta["ordering"],
            M=int(meta["M"]),
            budget=int(meta["budget"]),
        )
