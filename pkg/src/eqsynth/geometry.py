"""Axis-aligned boxes, H-representation polytopes, swept planar rotations,
and a nearest-neighbor index over hyperrectangles.

All values are immutable after construction and safe to share across threads.
Angles are radians; the heading dimension of a 3-D state box is dimension 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

TWO_PI = 2.0 * np.pi


class GeometryError(ValueError):
    """Inconsistent geometric arguments (dimension mismatch, bad bounds)."""


class EmptyPolytopeError(GeometryError):
    """The H-representation itself is infeasible; callers must not treat
    this as an empty intersection."""


def wrap_angle(theta):
    """Wrap angle(s) to the half-open interval [-pi, pi)."""
    return np.mod(np.asarray(theta, dtype=float) + np.pi, TWO_PI) - np.pi


@dataclass(frozen=True, eq=False)
class Box:
    """Closed axis-aligned box {x : lower <= x <= upper}."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise GeometryError(f"bounds shape mismatch: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise GeometryError(f"lower > upper: {lo} vs {hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def corners(self) -> np.ndarray:
        """All 2^dim corner points, shape (2**dim, dim)."""
        d = self.dim
        bits = np.array(np.meshgrid(*[[0, 1]] * d, indexing="ij")).reshape(d, -1).T
        return np.where(bits == 0, self.lower, self.upper)

    def contains_point(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def contains_box(self, other: "Box", atol: float = 0.0) -> bool:
        return bool(
            np.all(other.lower >= self.lower - atol)
            and np.all(other.upper <= self.upper + atol)
        )

    def translate(self, v) -> "Box":
        v = np.asarray(v, dtype=float)
        return Box(self.lower + v, self.upper + v)

    def inflate(self, margin) -> "Box":
        margin = np.broadcast_to(np.asarray(margin, dtype=float), (self.dim,))
        return Box(self.lower - margin, self.upper + margin)

    def hull(self, other: "Box") -> "Box":
        return Box(np.minimum(self.lower, other.lower), np.maximum(self.upper, other.upper))

    def intersect(self, other: "Box") -> "Box | None":
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        if np.any(lo > hi):
            return None
        return Box(lo, hi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


@dataclass(frozen=True)
class AngleInterval:
    """Closed interval of headings on the real line, interpreted on the circle.

    The width must not exceed a full turn; wrap-around representations
    (e.g. [3, 4.5]) are permitted.
    """

    lo: float
    hi: float

    def __post_init__(self):
        if self.hi < self.lo:
            raise GeometryError(f"angle interval hi < lo: [{self.lo}, {self.hi}]")
        if self.hi - self.lo > TWO_PI + 1e-12:
            raise GeometryError(f"angle interval wider than 2*pi: [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains_angle(self, theta: float) -> bool:
        if self.width >= TWO_PI - 1e-15:
            return True
        return (float(theta) - self.lo) % TWO_PI <= self.width + 1e-15


def box_intersects(a: Box, b: Box) -> bool:
    """Closed-box intersection test; shared boundary points count."""
    if a.dim != b.dim:
        raise GeometryError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return bool(np.all(a.lower <= b.upper) and np.all(b.lower <= a.upper))


def _interval_contains_angle(lo, width, target):
    """Vectorized: does [lo, lo+width] contain target modulo 2*pi."""
    return np.mod(target - lo, TWO_PI) <= width


def cos_range(lo, hi):
    """Elementwise range of cos over the angle interval [lo, hi]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    width = hi - lo
    full = width >= TWO_PI
    cmax = np.maximum(np.cos(lo), np.cos(hi))
    cmin = np.minimum(np.cos(lo), np.cos(hi))
    cmax = np.where(full | _interval_contains_angle(lo, width, 0.0), 1.0, cmax)
    cmin = np.where(full | _interval_contains_angle(lo, width, np.pi), -1.0, cmin)
    return cmin, cmax


def sin_range(lo, hi):
    """Elementwise range of sin over the angle interval [lo, hi]."""
    return cos_range(np.asarray(lo) - np.pi / 2.0, np.asarray(hi) - np.pi / 2.0)


def swept_point_range(p_x, p_y, angle_lo, angle_hi):
    """Exact coordinate ranges of R(theta) @ (p_x, p_y) for theta in the interval.

    Uses R(theta) = [[cos, -sin], [sin, cos]]. Returns (x_lo, x_hi, y_lo, y_hi),
    broadcast over the inputs.
    """
    p_x = np.asarray(p_x, dtype=float)
    p_y = np.asarray(p_y, dtype=float)
    r = np.hypot(p_x, p_y)
    phi = np.arctan2(p_y, p_x)
    # x(theta) = r cos(theta + phi), y(theta) = r sin(theta + phi)
    cmin, cmax = cos_range(angle_lo + phi, angle_hi + phi)
    smin, smax = sin_range(angle_lo + phi, angle_hi + phi)
    return r * cmin, r * cmax, r * smin, r * smax


def swept_rect_range(x_lo, x_hi, y_lo, y_hi, angle_lo, angle_hi):
    """Exact bounding box of the union of rotations of a planar rectangle.

    All arguments broadcast; returns four arrays (x_lo, x_hi, y_lo, y_hi) of
    the tight axis-aligned bounds of union_{theta in [angle_lo, angle_hi]}
    R(theta) @ rect.
    """
    xs = np.stack([x_lo, x_lo, x_hi, x_hi], axis=-1)
    ys = np.stack([y_lo, y_hi, y_lo, y_hi], axis=-1)
    a_lo = np.asarray(angle_lo, dtype=float)[..., None]
    a_hi = np.asarray(angle_hi, dtype=float)[..., None]
    cx_lo, cx_hi, cy_lo, cy_hi = swept_point_range(xs, ys, a_lo, a_hi)
    return (
        cx_lo.min(axis=-1),
        cx_hi.max(axis=-1),
        cy_lo.min(axis=-1),
        cy_hi.max(axis=-1),
    )


def rotate_box_outer(b: Box, a: AngleInterval, shift_angle_dim: bool = True) -> Box:
    """Tight axis-aligned cover of a 3-D box swept under every rotation in `a`.

    The first two coordinates rotate about the origin; the third shifts
    additively by the rotation angle (set shift_angle_dim=False for vectors
    whose third component is rotation-invariant, e.g. disturbance bounds).
    The result contains R(theta) applied to b for every theta in the interval,
    and is the exact bounding box of that union.
    """
    if b.dim != 3:
        raise GeometryError(f"rotate_box_outer expects dim 3, got {b.dim}")
    x_lo, x_hi, y_lo, y_hi = swept_rect_range(
        b.lower[0], b.upper[0], b.lower[1], b.upper[1], a.lo, a.hi
    )
    lo = np.array([x_lo, y_lo, b.lower[2] + (a.lo if shift_angle_dim else 0.0)])
    hi = np.array([x_hi, y_hi, b.upper[2] + (a.hi if shift_angle_dim else 0.0)])
    return Box(lo, hi)


@dataclass(frozen=True, eq=False)
class Polytope:
    """H-representation {x : normals @ x <= offsets}."""

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.normals, dtype=float))
        c = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        if A.shape[0] != c.shape[0]:
            raise GeometryError(f"{A.shape[0]} normals but {c.shape[0]} offsets")
        A.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "normals", A)
        object.__setattr__(self, "offsets", c)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @classmethod
    def from_box(cls, b: Box) -> "Polytope":
        eye = np.eye(b.dim)
        return cls(np.vstack([eye, -eye]), np.concatenate([b.upper, -b.lower]))

    def contains(self, points, atol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all(pts @ self.normals.T <= self.offsets + atol, axis=1)

    def is_empty(self) -> bool:
        res = linprog(
            np.zeros(self.dim),
            A_ub=self.normals,
            b_ub=self.offsets,
            bounds=[(None, None)] * self.dim,
            method="highs",
        )
        return res.status == 2

    def bounding_box(self) -> Box:
        """Tight bounding box via 2*dim LPs; raises on an empty polytope."""
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for d in range(self.dim):
            for sign, out in ((1.0, lo), (-1.0, hi)):
                c = np.zeros(self.dim)
                c[d] = sign
                res = linprog(c, A_ub=self.normals, b_ub=self.offsets,
                              bounds=[(None, None)] * self.dim, method="highs")
                if res.status != 0:
                    raise EmptyPolytopeError("cannot bound an empty/unbounded polytope")
                out[d] = sign * res.fun
        return Box(lo, hi)


def transform_polytope(p: Polytope, angle: float, anchor) -> Polytope:
    """Exact image of a 3-D polytope under the frame map with a fixed angle.

    The map sends x to (R(angle)^T (x_pos - anchor_pos), x_theta - anchor_theta):
    normals rotate with the frame, offsets absorb the translation.
    """
    if p.dim != 3:
        raise GeometryError("transform_polytope expects a 3-D polytope")
    anchor = np.asarray(anchor, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    rot_t = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    # y = Q (x - anchor) with Q = blockdiag(R^T, 1); row a^T x <= b becomes
    # (Q a)^T y <= b - a^T anchor.
    normals = p.normals @ rot_t  # rows a^T Q^T = (Q a)^T
    offsets = p.offsets - p.normals @ anchor
    return Polytope(normals, offsets)


def polytope_intersects_box(p: Polytope, b: Box) -> bool:
    """Feasibility of {normals @ x <= offsets, lower <= x <= upper}.

    Raises EmptyPolytopeError when the polytope alone is infeasible, so a
    degenerate representation is never reported as an empty intersection.
    """
    if p.dim != b.dim:
        raise GeometryError(f"dimension mismatch: {p.dim} vs {b.dim}")
    # Cheap accept: any corner of the box already inside.
    if np.any(p.contains(b.corners(), atol=0.0)):
        return True
    res = linprog(
        np.zeros(p.dim),
        A_ub=p.normals,
        b_ub=p.offsets,
        bounds=list(zip(b.lower, b.upper)),
        method="highs",
    )
    if res.status == 0:
        return True
    if p.is_empty():
        raise EmptyPolytopeError("polytope H-representation is infeasible")
    return False


def point_box_distance(point, lowers, uppers) -> np.ndarray:
    """Euclidean distance from a point to each closed box (0 inside).

    lowers/uppers have shape (n, d); returns shape (n,).
    """
    point = np.asarray(point, dtype=float)
    gap = np.maximum(np.maximum(lowers - point, point - uppers), 0.0)
    return np.sqrt(np.sum(gap * gap, axis=1))


class SpatialIndex:
    """Build-once nearest-neighbor index over (Box, key) entries.

    Queries return exactly the brute-force answer: keys of the k entries with
    the smallest Euclidean point-to-box distance, ascending, ties broken by
    key order.
    """

    def __init__(self, entries: Iterable[tuple[Box, int]]):
        entries = list(entries)
        if not entries:
            raise GeometryError("SpatialIndex requires at least one entry")
        dims = {box.dim for box, _ in entries}
        if len(dims) != 1:
            raise GeometryError(f"mixed entry dimensions: {dims}")
        self._lowers = np.array([box.lower for box, _ in entries])
        self._uppers = np.array([box.upper for box, _ in entries])
        self._keys = np.array([key for _, key in entries])

    def __len__(self) -> int:
        return len(self._keys)

    @property
    def dim(self) -> int:
        return self._lowers.shape[1]

    def knn(self, point, k: int) -> np.ndarray:
        """Keys of the k nearest entries, closest first."""
        if not 1 <= k <= len(self):
            raise GeometryError(f"k={k} out of range for {len(self)} entries")
        return self.ordered_keys(point)[:k]

    def ordered_keys(self, point) -> np.ndarray:
        """All keys sorted by distance to `point`, ties by key."""
        dist = point_box_distance(point, self._lowers, self._uppers)
        order = np.lexsort((self._keys, dist))
        return self._keys[order]


def index_knn(ix: SpatialIndex, query, k: int) -> np.ndarray:
    """k-nearest keys of `ix` from `query` (see SpatialIndex.knn)."""
    return ix.knn(query, k)
