"""Guaranteed over-approximating reachability for the ship kinematics.

The model is eta_dot = R(theta) nu + v_c with eta = (N, E, theta), constant
body-frame control nu, and disturbance v_c bounded by a box. The heading
equation is decoupled, so theta(t) is an exact interval; the positional rates
are bounded by the exact trig range of R(theta) nu over the heading window of
each integration step, which makes the interval Euler scheme sound without a
separate local-error inflation term.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, GeometryError, swept_point_range
from .grid import GridSpec

REACHDICT_FORMAT_VERSION = 1


class ReachabilityError(RuntimeError):
    """Integration produced non-finite bounds."""


@dataclass(frozen=True)
class ShipModel:
    """Ship kinematics under one constant control.

    control: body-frame (surge, sway, yaw-rate), model units per second.
    disturbance_box: bounds on the additive world-frame disturbance.
    tau: transition period in seconds; substeps: number of tube segments.
    euler_steps: internal interval-Euler steps per segment (>= 1).
    """

    control: np.ndarray
    disturbance_box: Box
    tau: float
    substeps: int = 4
    euler_steps: int = 64

    def __post_init__(self):
        c = np.asarray(self.control, dtype=float)
        if c.shape != (3,):
            raise GeometryError(f"control must be a 3-vector, got shape {c.shape}")
        if self.disturbance_box.dim != 3:
            raise GeometryError("disturbance box must be 3-D")
        if self.tau <= 0 or self.substeps < 1 or self.euler_steps < 1:
            raise GeometryError("tau, substeps, euler_steps must be positive")
        c.flags.writeable = False
        object.__setattr__(self, "control", c)


@dataclass(frozen=True)
class TubeSegment:
    t_start: float
    t_end: float
    box: Box


@dataclass(frozen=True)
class TimedTube:
    """Time-annotated boxes covering the reachable states over one period.

    The first `substeps` segments partition [0, tau] contiguously and cover
    every visited state; the final segment is instantaneous at tau and covers
    exactly the end-of-period states.
    """

    segments: tuple[TubeSegment, ...]

    def full(self) -> list[Box]:
        """Boxes covering every state visited during the period."""
        return [seg.box for seg in self.segments]

    def last(self) -> Box:
        """Box covering the states reachable at the end of the period."""
        return self.segments[-1].box

    @property
    def boxes_array(self) -> np.ndarray:
        """Stacked (n_segments, 2, 3) array of (lower, upper) rows."""
        return np.array([[seg.box.lower, seg.box.upper] for seg in self.segments])


def _segment_arrays_to_tube(t_bounds: np.ndarray, seg_bounds: np.ndarray) -> TimedTube:
    segments = tuple(
        TubeSegment(float(t_bounds[k, 0]), float(t_bounds[k, 1]),
                    Box(seg_bounds[k, 0], seg_bounds[k, 1]))
        for k in range(seg_bounds.shape[0])
    )
    return TimedTube(segments)


def _tube_time_bounds(tau: float, substeps: int) -> np.ndarray:
    """(substeps + 1, 2) window bounds plus the instantaneous tau segment."""
    edges = np.linspace(0.0, tau, substeps + 1)
    bounds = np.column_stack([edges[:-1], edges[1:]])
    return np.vstack([bounds, [tau, tau]])


def _integrate_tubes(controls: np.ndarray, x0: Box, dist: Box, tau: float,
                     substeps: int, euler_steps: int) -> np.ndarray:
    """Interval integration for a batch of constant controls.

    controls: (A, 3). Returns segment bounds of shape (A, substeps + 1, 2, 3)
    where the trailing entry is the instantaneous box at time tau.
    """
    A = controls.shape[0]
    nu_x = controls[:, 0]
    nu_y = controls[:, 1]
    nu_w = controls[:, 2]
    w_lo = dist.lower
    w_hi = dist.upper

    pos_lo = np.tile(x0.lower[:2], (A, 1))
    pos_hi = np.tile(x0.upper[:2], (A, 1))
    th_lo = np.full(A, x0.lower[2])
    th_hi = np.full(A, x0.upper[2])

    h = tau / (substeps * euler_steps)
    dth_lo = nu_w + w_lo[2]
    dth_hi = nu_w + w_hi[2]

    seg_bounds = np.empty((A, substeps + 1, 2, 3))
    for k in range(substeps):
        seg_lo = np.concatenate([pos_lo, th_lo[:, None]], axis=1)
        seg_hi = np.concatenate([pos_hi, th_hi[:, None]], axis=1)
        for _ in range(euler_steps):
            th_lo_next = th_lo + h * dth_lo
            th_hi_next = th_hi + h * dth_hi
            win_lo = np.minimum(th_lo, th_lo_next)
            win_hi = np.maximum(th_hi, th_hi_next)
            # Exact positional rate bounds over the step's heading window.
            vx_lo, vx_hi, vy_lo, vy_hi = swept_point_range(nu_x, nu_y, win_lo, win_hi)
            rate_lo = np.stack([vx_lo + w_lo[0], vy_lo + w_lo[1]], axis=1)
            rate_hi = np.stack([vx_hi + w_hi[0], vy_hi + w_hi[1]], axis=1)
            # States visited during the step stay within the rate cone.
            seg_lo[:, :2] = np.minimum(seg_lo[:, :2], pos_lo + np.minimum(0.0, h * rate_lo))
            seg_hi[:, :2] = np.maximum(seg_hi[:, :2], pos_hi + np.maximum(0.0, h * rate_hi))
            pos_lo = pos_lo + h * rate_lo
            pos_hi = pos_hi + h * rate_hi
            th_lo, th_hi = th_lo_next, th_hi_next
            seg_lo[:, 2] = np.minimum(seg_lo[:, 2], th_lo)
            seg_hi[:, 2] = np.maximum(seg_hi[:, 2], th_hi)
        seg_lo[:, :2] = np.minimum(seg_lo[:, :2], pos_lo)
        seg_hi[:, :2] = np.maximum(seg_hi[:, :2], pos_hi)
        seg_bounds[:, k, 0, :] = seg_lo
        seg_bounds[:, k, 1, :] = seg_hi
    # Instantaneous reachable box at t = tau.
    seg_bounds[:, substeps, 0, :] = np.concatenate([pos_lo, th_lo[:, None]], axis=1)
    seg_bounds[:, substeps, 1, :] = np.concatenate([pos_hi, th_hi[:, None]], axis=1)
    if not np.all(np.isfinite(seg_bounds)):
        raise ReachabilityError("interval integration diverged to non-finite bounds")
    return seg_bounds


def compute_tube(model: ShipModel, x0: Box) -> TimedTube:
    """Sound over-approximating tube of the model from the initial box x0."""
    if x0.dim != 3:
        raise GeometryError("initial set must be a 3-D box")
    seg = _integrate_tubes(model.control[None, :], x0, model.disturbance_box,
                           model.tau, model.substeps, model.euler_steps)[0]
    return _segment_arrays_to_tube(_tube_time_bounds(model.tau, model.substeps), seg)


@dataclass(frozen=True, eq=False)
class ReachDict:
    """Relative-coordinate tubes per (cross-section index, control symbol).

    For the ship the cross-section is the singleton origin, so there is one
    row of tubes indexed by the flat control-cell id of `control_grid`.
    """

    control_grid: GridSpec
    tau: float
    substeps: int
    euler_steps: int
    disturbance_box: Box
    seg_bounds: np.ndarray      # (n_sections, n_controls, substeps + 1, 2, 3)
    t_bounds: np.ndarray        # (substeps + 1, 2)
    n_sections: int = 1

    def tube(self, j: int, a: int) -> TimedTube:
        return _segment_arrays_to_tube(self.t_bounds, self.seg_bounds[j, a])

    @property
    def n_controls(self) -> int:
        return self.seg_bounds.shape[1]

    def control_value(self, a: int) -> np.ndarray:
        """beta(a): the center of control cell a."""
        return self.control_grid.center_of(a)

    def last_boxes(self, j: int = 0) -> np.ndarray:
        """(n_controls, 2, 3) bounds of the final segment of every tube."""
        return self.seg_bounds[j, :, -1]

    def travel_bounds(self, j: int = 0) -> tuple[float, float]:
        """(max planar corner radius, max |heading|) over all tube boxes.

        The planar radius bounds the travelled distance in each positional
        dimension under any rigid rotation of the tubes; the heading extent
        is rotation-invariant.
        """
        b = self.seg_bounds[j]  # (A, K, 2, 3)
        corner_r = np.hypot(
            np.maximum(np.abs(b[..., 0, 0]), np.abs(b[..., 1, 0])),
            np.maximum(np.abs(b[..., 0, 1]), np.abs(b[..., 1, 1])),
        )
        theta_ext = np.maximum(np.abs(b[..., 0, 2]), np.abs(b[..., 1, 2]))
        return float(corner_r.max()), float(theta_ext.max())

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.control_grid.fingerprint().encode())
        h.update(np.float64([self.tau]).tobytes())
        h.update(np.int64([self.substeps, self.euler_steps, self.n_sections]).tobytes())
        h.update(self.disturbance_box.lower.tobytes())
        h.update(self.disturbance_box.upper.tobytes())
        h.update(self.seg_bounds.tobytes())
        return h.hexdigest()


def build_reach_dict(control_grid: GridSpec, disturbance_box: Box, tau: float,
                     substeps: int = 4, euler_steps: int = 64) -> ReachDict:
    """Compute one tube per control cell from the cross-section origin.

    The initial set is the exact singleton origin (the moving frame maps every
    state there), and the disturbance box is the rotated disturbance union.
    """
    n = control_grid.n_cells
    controls = np.array([control_grid.center_of(a) for a in range(n)])
    origin = Box(np.zeros(3), np.zeros(3))
    try:
        seg = _integrate_tubes(controls, origin, disturbance_box, tau, substeps, euler_steps)
    except ReachabilityError as exc:
        raise ReachabilityError(f"tube integration failed over the control grid: {exc}") from exc
    return ReachDict(
        control_grid=control_grid,
        tau=tau,
        substeps=substeps,
        euler_steps=euler_steps,
        disturbance_box=disturbance_box,
        seg_bounds=seg[None, ...],
        t_bounds=_tube_time_bounds(tau, substeps),
    )


def save_reach_dict(rd: ReachDict, path) -> None:
    """Serialize to a versioned .npz; reloading is bit-identical."""
    meta = {
        "format_version": REACHDICT_FORMAT_VERSION,
        "tau": rd.tau,
        "substeps": rd.substeps,
        "euler_steps": rd.euler_steps,
        "n_sections": rd.n_sections,
        "control_grid": rd.control_grid.to_dict(),
        "fingerprint": rd.fingerprint(),
    }
    np.savez(
        path,
        meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        seg_bounds=rd.seg_bounds,
        t_bounds=rd.t_bounds,
        dist_lower=rd.disturbance_box.lower,
        dist_upper=rd.disturbance_box.upper,
    )


def load_reach_dict(path) -> ReachDict:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format_version") != REACHDICT_FORMAT_VERSION:
            raise ValueError(f"unsupported reach-dict format: {meta.get('format_version')}")
        rd = ReachDict(
            control_grid=GridSpec.from_dict(meta["control_grid"]),
            tau=float(meta["tau"]),
            substeps=int(meta["substeps"]),
            euler_steps=int(meta["euler_steps"]),
            disturbance_box=Box(data["dist_lower"], data["dist_upper"]),
            seg_bounds=data["seg_bounds"],
            t_bounds=data["t_bounds"],
            n_sections=int(meta["n_sections"]),
        )
    if rd.fingerprint() != meta["fingerprint"]:
        raise ValueError("reach-dict fingerprint mismatch; file corrupted or stale")
    return rd
