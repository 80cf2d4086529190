"""SE(2) transformation group, moving frame, and tube transforms.

The group acts on states eta = (N, E, theta) by phi(eta) = R^T (eta - anchor)
in the positional coordinates and theta - heading in the heading coordinate,
with R = R(heading) = [[cos, -sin], [sin, cos]] and theta = 0 pointing North.
Controls are body-frame and invariant; disturbances rotate with R^T.

The moving frame sends every state to the group element anchored at that
state, so the cross-section is the singleton origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import AngleInterval, Box, GeometryError, swept_rect_range, wrap_angle
from .reach import TimedTube, TubeSegment


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class GroupElement:
    """One SE(2) transformation, stored as (heading, anchor state)."""

    heading: float
    anchor: np.ndarray

    def __post_init__(self):
        anchor = np.asarray(self.anchor, dtype=float)
        if anchor.shape != (3,):
            raise GeometryError("anchor must be a 3-vector")
        anchor.flags.writeable = False
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "heading", float(self.heading))


IDENTITY = GroupElement(0.0, np.zeros(3))


def frame_of(x) -> GroupElement:
    """Moving frame: the element whose action sends x to the origin."""
    x = np.asarray(x, dtype=float)
    x = np.array([x[0], x[1], wrap_angle(x[2])])
    return GroupElement(x[2], x)


def apply_state(g: GroupElement, x) -> np.ndarray:
    """phi_g(x): rotate the anchored offset into the frame, wrap the heading."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rot_t = rotation_matrix(g.heading).T
    pos = (x[:, :2] - g.anchor[:2]) @ rot_t.T
    th = wrap_angle(x[:, 2] - g.anchor[2])
    out = np.column_stack([pos, th])
    return out[0] if out.shape[0] == 1 else out


def apply_inverse_state(g: GroupElement, y) -> np.ndarray:
    """phi_g^{-1}(y): rotate back and re-anchor; heading wrapped to [-pi, pi)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    rot = rotation_matrix(g.heading)
    pos = y[:, :2] @ rot.T + g.anchor[:2]
    th = wrap_angle(y[:, 2] + g.anchor[2])
    out = np.column_stack([pos, th])
    return out[0] if out.shape[0] == 1 else out


def apply_disturbance(g: GroupElement, w) -> np.ndarray:
    """psi_g(w) = R^T w on the planar part; the heading rate is invariant."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    rot_t = rotation_matrix(g.heading).T
    out = np.column_stack([w[:, :2] @ rot_t.T, w[:, 2]])
    return out[0] if out.shape[0] == 1 else out


def compose(outer: GroupElement, inner: GroupElement) -> GroupElement:
    """Element acting as `outer` after `inner` on states."""
    heading = outer.heading + inner.heading
    rot_inner = rotation_matrix(inner.heading)
    anchor_pos = inner.anchor[:2] + rot_inner @ outer.anchor[:2]
    return GroupElement(heading, np.array([anchor_pos[0], anchor_pos[1], heading]))


def transform_box_from_cell(box: Box, cell: Box) -> Box:
    """Exact bounding box of U_{x0 in cell} phi_{gamma(x0)}^{-1}(box).

    The inverse frames rotate the relative box by every heading in the cell
    and translate by every position in the cell; the positional part is the
    exact swept-rotation bound Minkowski-added to the cell's positional
    extent, and the heading adds intervals. The heading coordinate is left
    unwrapped so callers can intersect it with periodic grids.
    """
    x_lo, x_hi, y_lo, y_hi = swept_rect_range(
        box.lower[0], box.upper[0], box.lower[1], box.upper[1],
        cell.lower[2], cell.upper[2],
    )
    lo = np.array([x_lo + cell.lower[0], y_lo + cell.lower[1], box.lower[2] + cell.lower[2]])
    hi = np.array([x_hi + cell.upper[0], y_hi + cell.upper[1], box.upper[2] + cell.upper[2]])
    return Box(lo, hi)


def transform_tube_from_cell(tube: TimedTube, cell: Box) -> TimedTube:
    """Transform a relative-coordinate tube to cover departures from `cell`.

    Every segment box covers phi_{gamma(x0)}^{-1} of the relative segment for
    every state x0 in the cell, so the result over-approximates the reachable
    tube of the whole cell under the tube's control.
    """
    if cell.dim != 3:
        raise GeometryError("cell must be a 3-D state box")
    segments = tuple(
        TubeSegment(seg.t_start, seg.t_end, transform_box_from_cell(seg.box, cell))
        for seg in tube.segments
    )
    return TimedTube(segments)


def rotated_disturbance_union(w: Box) -> Box:
    """Outer box of U_alpha psi_alpha(w) over the whole group."""
    from .geometry import rotate_box_outer

    return rotate_box_outer(w, AngleInterval(-np.pi, np.pi), shift_angle_dim=False)
