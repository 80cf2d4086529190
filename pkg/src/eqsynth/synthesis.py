"""Fixed-point reach-avoid synthesis over the grid abstraction.

The baseline game extends the target cell set with every cell that admits a
control whose transformed tube ends inside the current set and never meets an
avoid cell or leaves the state box. The symmetry-guided variant plays the
same game but orders control exploration by a per-abstract-state score cache
and optionally prunes each pass to the travel neighborhood of newly won
cells; with an exhaustive budget it reaches the identical fixed point.

Transition geometry is translation-invariant within one heading slice of the
grid, so tubes are transformed once per (slice, control) and reused for every
cell of the slice through integer index offsets. Within one pass, transition
checks see the set R as it stood when the pass began, which makes the result
independent of the order cells are visited in.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .abstraction import (
    AVOID_STATE,
    FIRST_PAIR_STATE,
    NORMAL,
    REACH_STATE,
    Classification,
    SymAbstraction,
)
from .geometry import Box, GeometryError, SpatialIndex, swept_rect_range
from .grid import GridSpec
from .reach import ReachDict


@dataclass(frozen=True)
class StrategyConfig:
    """One row of the strategy matrix.

    ordering: "index" walks control symbols in index order, "random" samples
    a fresh uniform subset per state per pass, "greedy" walks tube ends
    nearest the relative target, "arbitrary" means cache first then index
    order. control_budget=None explores the whole control set.
    """

    id: str
    use_cache: bool
    control_budget: int | None
    neighborhood_pruning: bool
    ordering: str
    batch_start: int = 3
    batch_factor: int = 5
    random_tail: int = 75
    max_batches: int | None = None

    @property
    def abstraction_ordering(self) -> str:
        return "arbitrary" if self.ordering == "arbitrary" else "greedy"


_STRATEGY_TABLE = {
    "0": (False, None, False, "index"),
    "0.5": (False, 400, False, "random"),
    "1": (True, None, False, "greedy"),
    "2": (True, 400, False, "greedy"),
    "3": (True, None, False, "arbitrary"),
    "4": (True, None, True, "greedy"),
    "5": (True, 400, True, "greedy"),
    "6": (True, None, True, "arbitrary"),
}


def strategy_from_id(strategy_id) -> StrategyConfig:
    key = str(strategy_id)
    if key not in _STRATEGY_TABLE:
        raise ValueError(f"unknown strategy id {strategy_id!r}; valid: {sorted(_STRATEGY_TABLE)}")
    use_cache, budget, pruning, ordering = _STRATEGY_TABLE[key]
    return StrategyConfig(key, use_cache, budget, pruning, ordering)


class Cache:
    """Per-abstract-state lists of (score, control), sorted by descending
    score with ties broken by ascending control index."""

    def __init__(self, entries: dict[int, list[tuple[int, int]]]):
        self.entries = entries

    @classmethod
    def initialize(cls, sym: SymAbstraction) -> "Cache":
        entries: dict[int, list[tuple[int, int]]] = {
            REACH_STATE: [],
            AVOID_STATE: [],
        }
        for p, (_, a) in enumerate(sym.pair_states):
            entries[FIRST_PAIR_STATE + p] = [(0, int(a))]
        return cls(entries)

    def controls(self, state: int) -> list[int]:
        return [a for _, a in self.entries[state]]

    def update(self, state: int, control: int) -> None:
        entry = self.entries[state]
        for i, (score, a) in enumerate(entry):
            if a == control:
                entry[i] = (score + 1, a)
                break
        else:
            entry.append((1, control))
        entry.sort(key=lambda pair: (-pair[0], pair[1]))

    def pair_state_lengths(self) -> list[int]:
        return [len(v) for s, v in sorted(self.entries.items())
                if s >= FIRST_PAIR_STATE]

    def check_invariants(self, sym: SymAbstraction | None = None) -> None:
        counts = sym.preimage_counts() if sym is not None else None
        for state, entry in self.entries.items():
            scores = [s for s, _ in entry]
            controls = [a for _, a in entry]
            assert scores == sorted(scores, reverse=True), "scores not sorted"
            for (s1, a1), (s2, a2) in zip(entry, entry[1:]):
                assert (-s1, a1) <= (-s2, a2), "tie order violated"
            assert len(set(controls)) == len(controls), "duplicate control"
            if counts is not None and state < len(counts):
                assert sum(scores) <= counts[state], "score sum exceeds preimage"


def cache_update(cache: Cache, state: int, control: int) -> Cache:
    """Increment the control's score in the state's entry (insert at 1)."""
    if state not in cache.entries:
        raise KeyError(f"state {state} not in cache")
    cache.update(state, control)
    return cache


@dataclass(frozen=True, eq=False)
class Controller:
    """Map from grid cells to control symbols; -1 encodes bottom."""

    grid_fingerprint: str
    tau: float
    assignment: np.ndarray  # (n_cells,) int32

    def control_of(self, cell: int) -> int | None:
        a = int(self.assignment[cell])
        return None if a < 0 else a

    @property
    def assigned_cells(self) -> np.ndarray:
        return np.flatnonzero(self.assignment >= 0)

    @property
    def n_controlled(self) -> int:
        return int(np.count_nonzero(self.assignment >= 0))


def save_controller(controller: Controller, path) -> None:
    entries = [[int(c), int(controller.assignment[c])] for c in controller.assigned_cells]
    payload = {
        "version": 1,
        "grid_hash": controller.grid_fingerprint,
        "tau": controller.tau,
        "entries": entries,
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_controller(path, n_cells: int) -> Controller:
    with open(path) as f:
        payload = json.load(f)
    assignment = np.full(n_cells, -1, dtype=np.int32)
    for cell, a in payload["entries"]:
        assignment[cell] = a
    return Controller(payload["grid_hash"], float(payload["tau"]), assignment)


class _SliceData:
    """Transition geometry of one heading slice, shared by all its cells."""

    __slots__ = ("off", "rows", "in_x", "avoid_bad")

    def __init__(self, off, rows, in_x, avoid_bad):
        self.off = off                # (A, K+1, 2, 2) int index offsets [dim][lo/hi]
        self.rows = rows              # (A, K+1, 2) int (start_row, count)
        self.in_x = in_x              # (A, 2, 2) int allowed (i, j) index ranges
        self.avoid_bad = avoid_bad    # (A, nI, nJ) bool: some segment hits avoid


class TransitionOracle:
    """Evaluates grid transitions delta(cell, control) against R and the
    avoid cells, with geometry precomputed once per heading slice."""

    def __init__(self, grid: GridSpec, rd: ReachDict, avoid_mask: np.ndarray):
        if grid.dim != 3 or not grid.periodic[2] or grid.periodic[0] or grid.periodic[1]:
            raise GeometryError("oracle expects a 3-D grid, periodic heading only")
        self.grid = grid
        self.rd = rd
        n_i, n_j, n_t = grid.counts
        self.avoid_doubled = np.concatenate([avoid_mask, avoid_mask], axis=2)
        self._slices: dict[int, _SliceData] = {}
        r_pos, r_theta = rd.travel_bounds(0)
        self.max_travel = np.array([r_pos, r_pos, r_theta])

    def _build_slice(self, t: int) -> _SliceData:
        grid, rd = self.grid, self.rd
        n_i, n_j, n_t = grid.counts
        w = grid.cell_widths
        th_lo = grid.bounds.lower[2] + t * w[2]
        th_hi = th_lo + w[2]
        seg = rd.seg_bounds[0]                      # (A, K+1, 2, 3)
        x_lo, x_hi, y_lo, y_hi = swept_rect_range(
            seg[:, :, 0, 0], seg[:, :, 1, 0], seg[:, :, 0, 1], seg[:, :, 1, 1],
            th_lo, th_hi)
        # Anchor at cell (0, 0, t): Minkowski-add that cell's positional box.
        base = grid.bounds.lower
        bounds = np.empty(seg.shape[:2] + (2, 2))
        bounds[:, :, 0, 0] = x_lo + base[0]
        bounds[:, :, 1, 0] = x_hi + base[0] + w[0]
        bounds[:, :, 0, 1] = y_lo + base[1]
        bounds[:, :, 1, 1] = y_hi + base[1] + w[1]

        off = np.empty(seg.shape[:2] + (2, 2), dtype=np.int64)
        for d in range(2):
            off[:, :, d, 0] = np.floor((bounds[:, :, 0, d] - base[d]) / w[d])
            off[:, :, d, 1] = np.floor((bounds[:, :, 1, d] - base[d]) / w[d])

        th_abs_lo = seg[:, :, 0, 2] + th_lo
        th_abs_hi = seg[:, :, 1, 2] + th_hi
        raw_lo = np.floor((th_abs_lo - base[2]) / w[2]).astype(np.int64)
        raw_hi = np.floor((th_abs_hi - base[2]) / w[2]).astype(np.int64)
        count = np.minimum(raw_hi - raw_lo + 1, n_t)
        start = np.where(count >= n_t, 0, np.mod(raw_lo, n_t))
        rows = np.stack([start, count], axis=-1)

        # Allowed (i, j) index windows for the tube to stay inside X,
        # aggregated over all segments.
        in_x = np.empty((seg.shape[0], 2, 2), dtype=np.int64)
        for d in range(2):
            lo_req = np.ceil((grid.bounds.lower[d] - bounds[:, :, 0, d]) / w[d])
            hi_req = np.floor((grid.bounds.upper[d] - bounds[:, :, 1, d]) / w[d])
            in_x[:, d, 0] = lo_req.max(axis=1)
            in_x[:, d, 1] = hi_req.min(axis=1)

        # Per-control avoid conflicts over all cells of the slice, via
        # padded integral images of the row-collapsed avoid mask.
        pad = int(max(np.abs(off).max(), 1)) + 1
        integrals: dict[tuple[int, int], np.ndarray] = {}
        query_memo: dict[tuple[int, ...], np.ndarray] = {}
        avoid_bad = np.zeros((seg.shape[0], n_i, n_j), dtype=bool)
        for a in range(seg.shape[0]):
            for k in range(seg.shape[1]):
                key = (int(rows[a, k, 0]), int(rows[a, k, 1]),
                       int(off[a, k, 0, 0]), int(off[a, k, 0, 1]),
                       int(off[a, k, 1, 0]), int(off[a, k, 1, 1]))
                hit = query_memo.get(key)
                if hit is None:
                    s0, cnt = key[0], key[1]
                    integral = integrals.get((s0, cnt))
                    if integral is None:
                        collapsed = self.avoid_doubled[:, :, s0:s0 + cnt].any(axis=2)
                        padded = np.zeros((n_i + 2 * pad + 1, n_j + 2 * pad + 1),
                                          dtype=np.int64)
                        padded[pad + 1:pad + 1 + n_i, pad + 1:pad + 1 + n_j] = collapsed
                        integral = padded.cumsum(axis=0).cumsum(axis=1)
                        integrals[(s0, cnt)] = integral
                    di0, di1, dj0, dj1 = key[2], key[3], key[4], key[5]
                    a1 = pad + di1 + 1
                    a0 = pad + di0
                    b1 = pad + dj1 + 1
                    b0 = pad + dj0
                    counts = (
                        integral[a1:a1 + n_i, b1:b1 + n_j]
                        - integral[a0:a0 + n_i, b1:b1 + n_j]
                        - integral[a1:a1 + n_i, b0:b0 + n_j]
                        + integral[a0:a0 + n_i, b0:b0 + n_j]
                    )
                    hit = counts > 0
                    query_memo[key] = hit
                avoid_bad[a] |= hit
        return _SliceData(off, rows, in_x, avoid_bad)

    def slice_data(self, t: int) -> _SliceData:
        if t not in self._slices:
            self._slices[t] = self._build_slice(t)
        return self._slices[t]

    @staticmethod
    def r_integral(r_mask: np.ndarray) -> np.ndarray:
        """3-D integral image of R over a doubled heading axis."""
        doubled = np.concatenate([r_mask, r_mask], axis=2).astype(np.int64)
        n_i, n_j, n_t2 = doubled.shape
        out = np.zeros((n_i + 1, n_j + 1, n_t2 + 1), dtype=np.int64)
        out[1:, 1:, 1:] = doubled.cumsum(axis=0).cumsum(axis=1).cumsum(axis=2)
        return out

    def ok_chunk(self, cell_multi: tuple[int, int, int], controls: np.ndarray,
                 r_int: np.ndarray) -> np.ndarray:
        """Transition validity of each control from the given cell, against
        the R snapshot captured in r_int."""
        i, j, t = cell_multi
        sd = self.slice_data(t)
        n_i, n_j, n_t = self.grid.counts
        a = np.asarray(controls)

        ix = sd.in_x[a]
        in_x = (i >= ix[:, 0, 0]) & (i <= ix[:, 0, 1]) \
            & (j >= ix[:, 1, 0]) & (j <= ix[:, 1, 1])
        ok = in_x & ~sd.avoid_bad[a, i, j]
        if not ok.any():
            return ok

        # Every cell covered by the final box lies in R (snapshot).
        live = np.flatnonzero(ok)
        last_off = sd.off[a[live], -1]
        li0 = np.maximum(last_off[:, 0, 0] + i, 0)
        li1 = np.minimum(last_off[:, 0, 1] + i, n_i - 1)
        lj0 = np.maximum(last_off[:, 1, 0] + j, 0)
        lj1 = np.minimum(last_off[:, 1, 1] + j, n_j - 1)
        rows = sd.rows[a[live], -1]
        s0 = rows[:, 0]
        cnt = rows[:, 1]
        r_counts = _rect_count_3d(r_int, li0, li1, lj0, lj1, s0, s0 + cnt - 1)
        volume = (li1 - li0 + 1) * (lj1 - lj0 + 1) * cnt
        ok[live] = r_counts == volume
        return ok

    def covered_cells(self, cell: int, control: int) -> tuple[np.ndarray, np.ndarray]:
        """(cells covered by the full tube, cells covered by the final box).

        Reference path used by tests and the post-hoc soundness replay.
        """
        grid = self.grid
        i, j, t = np.unravel_index(cell, grid.counts)
        sd = self.slice_data(t)
        n_i, n_j, n_t = grid.counts
        full = []
        last = None
        n_seg = sd.off.shape[1]
        for k in range(n_seg):
            i0 = int(np.clip(sd.off[control, k, 0, 0] + i, 0, n_i - 1))
            i1 = int(np.clip(sd.off[control, k, 0, 1] + i, 0, n_i - 1))
            j0 = int(np.clip(sd.off[control, k, 1, 0] + j, 0, n_j - 1))
            j1 = int(np.clip(sd.off[control, k, 1, 1] + j, 0, n_j - 1))
            s0, cnt = int(sd.rows[control, k, 0]), int(sd.rows[control, k, 1])
            rows = (s0 + np.arange(cnt)) % n_t
            mesh = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), rows,
                               indexing="ij")
            ids = np.ravel_multi_index([m.ravel() for m in mesh], grid.counts)
            full.append(ids)
            if k == n_seg - 1:
                last = ids
        return np.unique(np.concatenate(full)), np.unique(last)


def _rect_count_3d(integral, i0, i1, j0, j1, s0, s1):
    """Inclusive box-sum queries on a 3-D integral image (doubled last axis)."""
    i1p, j1p, s1p = i1 + 1, j1 + 1, s1 + 1
    return (
        integral[i1p, j1p, s1p] - integral[i0, j1p, s1p]
        - integral[i1p, j0, s1p] - integral[i1p, j1p, s0]
        + integral[i0, j0, s1p] + integral[i0, j1p, s0] + integral[i1p, j0, s0]
        - integral[i0, j0, s0]
    )


def transition_ok(cell: int, control: int, r_cells, avoid_cells,
                  rd: ReachDict, grid: GridSpec) -> bool:
    """Spec-level transition test for a single (cell, control) pair.

    True iff every cell covered by the transformed final box is in r_cells,
    no cell covered by any segment is in avoid_cells, and the whole tube
    stays inside the state box.
    """
    avoid_mask = np.zeros(grid.counts, dtype=bool)
    avoid_mask.reshape(-1)[np.asarray(list(avoid_cells), dtype=int)] = True
    r_mask = np.zeros(grid.counts, dtype=bool)
    r_mask.reshape(-1)[np.asarray(list(r_cells), dtype=int)] = True
    oracle = TransitionOracle(grid, rd, avoid_mask)
    r_int = oracle.r_integral(r_mask)
    multi = tuple(int(v) for v in np.unravel_index(cell, grid.counts))
    return bool(oracle.ok_chunk(multi, np.array([control]), r_int)[0])


def neighborhood(new_cells, rd: ReachDict, grid: GridSpec) -> np.ndarray:
    """Cells whose center lies within one-step travel of a newly won cell.

    Per-dimension center distance <= maxTravel[d] + cellSize[d], where the
    positional travel bound is the largest planar corner radius over all
    tubes (rigid motions preserve it) and the heading bound is the largest
    heading extent.
    """
    new_cells = np.asarray(list(new_cells), dtype=int)
    if new_cells.size == 0:
        return np.empty(0, dtype=int)
    r_pos, r_theta = rd.travel_bounds(0)
    travel = np.array([r_pos, r_pos, r_theta])
    radii = np.floor(travel / grid.cell_widths + 1.0).astype(int)
    mask = np.zeros(grid.counts, dtype=bool)
    mask.reshape(-1)[new_cells] = True
    for d in range(3):
        mask = _dilate_axis(mask, d, int(radii[d]), grid.periodic[d])
    return np.flatnonzero(mask.reshape(-1))


def _dilate_axis(mask: np.ndarray, axis: int, radius: int, periodic: bool) -> np.ndarray:
    if radius <= 0:
        return mask
    out = mask.copy()
    for shift in range(1, radius + 1):
        if periodic:
            out |= np.roll(mask, shift, axis=axis)
            out |= np.roll(mask, -shift, axis=axis)
        else:
            out |= _shift_clip(mask, shift, axis)
            out |= _shift_clip(mask, -shift, axis)
    return out


def _shift_clip(mask: np.ndarray, shift: int, axis: int) -> np.ndarray:
    out = np.zeros_like(mask)
    src = [slice(None)] * mask.ndim
    dst = [slice(None)] * mask.ndim
    if shift > 0:
        src[axis] = slice(0, mask.shape[axis] - shift)
        dst[axis] = slice(shift, None)
    else:
        src[axis] = slice(-shift, None)
        dst[axis] = slice(0, mask.shape[axis] + shift)
    out[tuple(dst)] = mask[tuple(src)]
    return out


@dataclass
class SynthesisMetrics:
    strategy: str
    qx_counts: str
    n_grid_star: int
    n_sym: int
    n_cao: int
    n_ctr: int
    cache_min: float | None
    cache_avg: float | None
    cache_median: float | None
    cache_max: float | None
    explored_frac: float
    path_avg: float
    path_max: int
    abstraction_s: float
    synthesis_s: float
    total_s: float

    CSV_COLUMNS = (
        "strategy", "qx_counts", "n_grid_star", "n_sym", "n_cao", "n_ctr",
        "cache_min", "cache_avg", "cache_median", "cache_max", "explored_frac",
        "path_avg", "path_max", "abstraction_s", "synthesis_s", "total_s",
    )

    def csv_row(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return f"{v:.6g}"
            return str(v)
        return [fmt(getattr(self, c)) for c in self.CSV_COLUMNS]


@dataclass(eq=False)
class SynthesisResult:
    controller: Controller
    r_mask: np.ndarray            # final R including initial reach cells
    path_iteration: np.ndarray    # (n_cells,) pass index a cell entered R, 0 if never
    cache: Cache | None
    metrics: SynthesisMetrics
    seed: int
    assignment_log: list[tuple[int, int, int]]  # (cell, control, pass index)

    @property
    def controlled_cells(self) -> np.ndarray:
        return self.controller.assigned_cells


def _batch_plan(cfg: StrategyConfig, already: int, n_controls: int) -> list[tuple[str, int]]:
    """Sizes and kinds of the fresh exploration batches after the cache list.

    Greedy batches grow geometrically; a budget-limited strategy reserves the
    final batch for a uniform random sample. Index/arbitrary orderings use
    one batch covering the remainder.
    """
    budget = n_controls if cfg.control_budget is None else min(cfg.control_budget, n_controls)
    left = budget - already
    if left <= 0:
        return []
    if cfg.ordering in ("index", "arbitrary"):
        return [("index", left)]
    if cfg.ordering == "random":
        return [("random", left)]
    plan: list[tuple[str, int]] = []
    limited = cfg.control_budget is not None
    tail = min(cfg.random_tail, left) if limited else 0
    greedy_left = left - tail
    size = cfg.batch_start
    while greedy_left > 0:
        take = min(size, greedy_left)
        plan.append(("greedy", take))
        greedy_left -= take
        size *= cfg.batch_factor
    if tail > 0:
        plan.append(("random", tail))
    if cfg.max_batches is not None:
        plan = plan[:cfg.max_batches]
    return plan


class _OrderProvider:
    """Yields per-cell candidate chunks for one pass, in exploration order."""

    def __init__(self, cfg: StrategyConfig, n_controls: int, rng: np.random.Generator,
                 cache: Cache | None, sym: SymAbstraction | None,
                 knn_index: SpatialIndex | None):
        self.cfg = cfg
        self.n_controls = n_controls
        self.rng = rng
        self.cache = cache
        self.sym = sym
        self.knn_index = knn_index
        self._greedy_orders: dict[int, np.ndarray] = {}
        self._index_order = np.arange(n_controls)
        self._origin_order: np.ndarray | None = None

    def _greedy_order(self, cell: int) -> np.ndarray:
        order = self._greedy_orders.get(cell)
        if order is None:
            q = self.sym.query_points[cell]
            if np.any(np.isnan(q)):
                if self._origin_order is None:
                    self._origin_order = self.knn_index.ordered_keys(np.zeros(3))
                order = self._origin_order
            else:
                order = self.knn_index.ordered_keys(q)
            self._greedy_orders[cell] = order
        return order

    def chunks(self, cell: int):
        cfg = self.cfg
        if not cfg.use_cache and cfg.ordering == "index":
            # Static plan shared by every visit (strategy 0).
            if not hasattr(self, "_static_chunks"):
                budget = cfg.control_budget or self.n_controls
                pool = self._index_order[:budget]
                self._static_chunks = [pool[s:s + 64] for s in range(0, pool.size, 64)]
            yield from self._static_chunks
            return
        visited = np.zeros(self.n_controls, dtype=bool)
        n_seen = 0
        if cfg.use_cache:
            entry = np.array(self.cache.controls(self.sym.state_of(cell)), dtype=int)
            if entry.size:
                visited[entry] = True
                n_seen = entry.size
                yield entry
        for kind, size in _batch_plan(cfg, n_seen, self.n_controls):
            if kind == "index":
                pool = self._index_order[~visited[self._index_order]][:size]
            elif kind == "greedy":
                order = self._greedy_order(cell)
                pool = order[~visited[order]][:size]
            else:  # random
                candidates = np.flatnonzero(~visited)
                if candidates.size == 0:
                    return
                size = min(size, candidates.size)
                pool = self.rng.choice(candidates, size=size, replace=False)
            if pool.size == 0:
                return
            visited[pool] = True
            # Evaluate in sub-chunks to keep early exits cheap.
            for start in range(0, pool.size, 64):
                yield pool[start:start + 64]


def _run_game(grid: GridSpec, classification: Classification, rd: ReachDict,
              cfg: StrategyConfig, seed: int,
              cache: Cache | None = None, sym: SymAbstraction | None = None,
              abstraction_s: float = 0.0) -> SynthesisResult:
    t_start = time.perf_counter()
    rng = np.random.default_rng(seed)
    oracle = TransitionOracle(grid, rd, classification.avoid_mask)
    knn_index = None
    if cfg.use_cache and cfg.ordering == "greedy":
        knn_index = SpatialIndex(
            [(Box(b[0], b[1]), a) for a, b in enumerate(rd.last_boxes(0))])
    provider = _OrderProvider(cfg, rd.n_controls, rng, cache, sym, knn_index)

    n = grid.n_cells
    kind = classification.kind_flat
    normal_cells = np.flatnonzero(kind == NORMAL)
    n_star = normal_cells.size
    r_mask = classification.reach_mask.copy()
    assignment = np.full(n, -1, dtype=np.int32)
    path_iteration = np.zeros(n, dtype=np.int32)
    assignment_log: list[tuple[int, int, int]] = []
    explored_fracs: list[float] = []
    multis = {int(c): tuple(int(v) for v in np.unravel_index(int(c), grid.counts))
              for c in normal_cells}

    explore = normal_cells
    n_assigned = 0
    pass_idx = 0
    while explore.size:
        pass_idx += 1
        r_int = oracle.r_integral(r_mask)
        remaining = n_star - n_assigned
        explored_fracs.append(explore.size / remaining if remaining else 1.0)
        added: list[int] = []
        for cell in explore:
            cell = int(cell)
            for chunk in provider.chunks(cell):
                ok = oracle.ok_chunk(multis[cell], chunk, r_int)
                if ok.any():
                    a = int(chunk[int(np.argmax(ok))])
                    assignment[cell] = a
                    path_iteration[cell] = pass_idx
                    added.append(cell)
                    assignment_log.append((cell, a, pass_idx))
                    if cfg.use_cache:
                        cache.update(sym.state_of(cell), a)
                    break
        if not added:
            break
        added_arr = np.array(added, dtype=int)
        r_mask.reshape(-1)[added_arr] = True
        n_assigned += added_arr.size
        if cfg.neighborhood_pruning:
            near = neighborhood(added_arr, rd, grid)
            explore = near[(kind[near] == NORMAL) & (assignment[near] < 0)]
        else:
            explore = normal_cells[assignment[normal_cells] < 0]
        explore = np.sort(explore)

    synthesis_s = time.perf_counter() - t_start
    controller = Controller(grid.fingerprint(), rd.tau, assignment)
    paths = path_iteration[assignment >= 0]
    lengths = cache.pair_state_lengths() if cache is not None else []
    metrics = SynthesisMetrics(
        strategy=cfg.id,
        qx_counts="x".join(str(c) for c in grid.counts),
        n_grid_star=n_star,
        n_sym=sym.n_states if sym is not None else 0,
        n_cao=len(sym.cao_cells) if sym is not None else 0,
        n_ctr=int(np.count_nonzero(assignment >= 0)),
        cache_min=float(np.min(lengths)) if lengths else None,
        cache_avg=float(np.mean(lengths)) if lengths else None,
        cache_median=float(np.median(lengths)) if lengths else None,
        cache_max=float(np.max(lengths)) if lengths else None,
        explored_frac=float(np.mean(explored_fracs)) if explored_fracs else 0.0,
        path_avg=float(np.mean(paths)) if paths.size else 0.0,
        path_max=int(np.max(paths)) if paths.size else 0,
        abstraction_s=abstraction_s,
        synthesis_s=synthesis_s,
        total_s=abstraction_s + synthesis_s,
    )
    return SynthesisResult(controller, r_mask, path_iteration, cache, metrics,
                           seed, assignment_log)


def synth_baseline(grid: GridSpec, classification: Classification, rd: ReachDict,
                   cfg: StrategyConfig | None = None, seed: int = 0) -> SynthesisResult:
    """Fixed-point synthesis without the symmetry cache (strategies 0, 0.5)."""
    cfg = cfg or strategy_from_id(0)
    if cfg.use_cache:
        raise ValueError(f"strategy {cfg.id} requires synth_symmetry")
    return _run_game(grid, classification, rd, cfg, seed)


def synth_symmetry(grid: GridSpec, classification: Classification,
                   sym: SymAbstraction, rd: ReachDict,
                   cfg: StrategyConfig | None = None, seed: int = 0,
                   abstraction_s: float = 0.0) -> SynthesisResult:
    """Cache-guided synthesis over the symmetry abstraction (strategies 1-6)."""
    cfg = cfg or strategy_from_id(5)
    if not cfg.use_cache:
        raise ValueError(f"strategy {cfg.id} requires synth_baseline")
    if sym.grid_fingerprint != grid.fingerprint():
        raise ValueError("abstraction was built for a different grid")
    if sym.rd_fingerprint != rd.fingerprint():
        raise ValueError("abstraction was built for a different reach dict")
    cache = Cache.initialize(sym)
    return _run_game(grid, classification, rd, cfg, seed, cache=cache, sym=sym,
                     abstraction_s=abstraction_s)


def replay_soundness(result: SynthesisResult, grid: GridSpec,
                     classification: Classification, rd: ReachDict) -> bool:
    """Re-verify every assignment against the R snapshot it was made under."""
    oracle = TransitionOracle(grid, rd, classification.avoid_mask)
    r_mask = classification.reach_mask.copy()
    log = sorted(result.assignment_log, key=lambda rec: (rec[2], rec[0]))
    current_pass = None
    r_int = None
    pending: list[int] = []
    for cell, control, pass_idx in log:
        if pass_idx != current_pass:
            if pending:
                r_mask.reshape(-1)[pending] = True
                pending = []
            r_int = oracle.r_integral(r_mask)
            current_pass = pass_idx
        multi = tuple(int(v) for v in np.unravel_index(cell, grid.counts))
        if not oracle.ok_chunk(multi, np.array([control]), r_int)[0]:
            return False
        pending.append(cell)
    return True
