"""Uniform partition of a state box into integer-addressed cells.

Cells own their lower boundary (half-open covering), except that the last
cell of a non-periodic dimension also owns the upper boundary of the box.
Periodic dimensions (the heading) wrap: coordinates are folded into the box
before indexing and index ranges are taken modulo the cell count.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .geometry import Box, GeometryError

CellId = int


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Uniform grid over `bounds` with per-dimension cell counts."""

    bounds: Box
    counts: tuple[int, ...]
    periodic: tuple[bool, ...] = None

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != self.bounds.dim:
            raise GeometryError("counts must match the box dimension")
        if any(c < 1 for c in counts):
            raise GeometryError(f"cell counts must be positive: {counts}")
        periodic = self.periodic
        if periodic is None:
            periodic = (False,) * self.bounds.dim
        periodic = tuple(bool(p) for p in periodic)
        if len(periodic) != self.bounds.dim:
            raise GeometryError("periodic flags must match the box dimension")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "periodic", periodic)

    @property
    def dim(self) -> int:
        return self.bounds.dim

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_widths(self) -> np.ndarray:
        return self.bounds.widths / np.array(self.counts, dtype=float)

    def multi_index(self, cell: CellId) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(int(cell), self.counts))

    def flat_index(self, multi) -> CellId:
        return int(np.ravel_multi_index(tuple(int(i) for i in multi), self.counts))

    def cell_box(self, cell) -> Box:
        multi = np.asarray(self.multi_index(cell) if np.isscalar(cell) else cell, dtype=float)
        w = self.cell_widths
        lo = self.bounds.lower + multi * w
        return Box(lo, lo + w)

    def center_of(self, cell) -> np.ndarray:
        multi = np.asarray(self.multi_index(cell) if np.isscalar(cell) else cell, dtype=float)
        return self.bounds.lower + (multi + 0.5) * self.cell_widths

    def fold(self, x) -> np.ndarray:
        """Fold periodic coordinates of state(s) into the box."""
        x = np.array(x, dtype=float, copy=True)
        per = np.array(self.periodic)
        if per.any():
            lo = self.bounds.lower[per]
            width = self.bounds.widths[per]
            x[..., per] = np.mod(x[..., per] - lo, width) + lo
        return x

    def cell_of(self, x) -> CellId:
        """Owning cell of a state; raises if outside a non-periodic extent."""
        x = self.fold(x)
        idx = np.floor((x - self.bounds.lower) / self.cell_widths).astype(int)
        for d in range(self.dim):
            if idx[d] == self.counts[d] and not self.periodic[d] \
                    and x[d] <= self.bounds.upper[d]:
                idx[d] = self.counts[d] - 1  # upper boundary owned by last cell
            if self.periodic[d]:
                idx[d] %= self.counts[d]
            elif not 0 <= idx[d] < self.counts[d]:
                raise GeometryError(f"state {x} outside grid bounds in dim {d}")
        return self.flat_index(idx)

    def index_range(self, d: int, lo: float, hi: float):
        """Half-open covering index range [i_lo, i_hi] of [lo, hi] in dim d.

        For periodic dimensions the range is on the unfolded axis; callers
        take indices modulo counts[d]. Returns (i_lo, i_hi) with
        i_hi - i_lo + 1 cells covered, or None if disjoint from a
        non-periodic extent.
        """
        w = self.cell_widths[d]
        base = self.bounds.lower[d]
        i_lo = int(np.floor((lo - base) / w))
        i_hi = int(np.floor((hi - base) / w))
        if self.periodic[d]:
            if i_hi - i_lo + 1 >= self.counts[d]:
                return 0, self.counts[d] - 1
            return i_lo, i_hi
        if hi >= self.bounds.upper[d] and i_hi >= self.counts[d]:
            i_hi = self.counts[d] - 1
        i_lo = max(i_lo, 0)
        i_hi = min(i_hi, self.counts[d] - 1)
        if i_lo > i_hi:
            return None
        return i_lo, i_hi

    def cells_intersecting(self, box: Box) -> np.ndarray:
        """Flat ids of all cells whose half-open box meets `box`."""
        ranges = []
        for d in range(self.dim):
            r = self.index_range(d, box.lower[d], box.upper[d])
            if r is None:
                return np.empty(0, dtype=int)
            ranges.append(np.arange(r[0], r[1] + 1) % self.counts[d]
                          if self.periodic[d] else np.arange(r[0], r[1] + 1))
        mesh = np.meshgrid(*ranges, indexing="ij")
        flat = np.ravel_multi_index([m.ravel() for m in mesh], self.counts)
        return np.unique(flat)

    def to_dict(self) -> dict:
        return {
            "lower": self.bounds.lower.tolist(),
            "upper": self.bounds.upper.tolist(),
            "counts": list(self.counts),
            "periodic": list(self.periodic),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(Box(d["lower"], d["upper"]), tuple(d["counts"]),
                   tuple(d["periodic"]))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.bounds.lower.tobytes())
        h.update(self.bounds.upper.tobytes())
        h.update(json.dumps([list(self.counts), list(self.periodic)]).encode())
        return h.hexdigest()
