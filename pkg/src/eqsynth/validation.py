"""Closed-loop simulation of the concrete ship under a synthesized
zero-order-hold controller, and Monte-Carlo checks that trajectories stay
inside the transformed tubes.

Disturbances are piecewise-constant over integration sub-steps, which is a
dense-enough family to falsify unsound tubes at desk scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import Box
from .grid import GridSpec
from .reach import ReachDict
from .symmetry import transform_tube_from_cell
from .synthesis import Controller

REACHED = "Reached"
HIT_AVOID = "HitAvoid"
EXITED_X = "ExitedX"
TIMEOUT = "Timeout"


def ship_rhs(state: np.ndarray, control: np.ndarray, w: np.ndarray) -> np.ndarray:
    """eta_dot = R(theta) nu + v_c, vectorized over leading axes."""
    theta = state[..., 2]
    c, s = np.cos(theta), np.sin(theta)
    dn = c * control[..., 0] - s * control[..., 1] + w[..., 0]
    de = s * control[..., 0] + c * control[..., 1] + w[..., 1]
    dth = control[..., 2] + w[..., 2]
    return np.stack([dn, de, dth], axis=-1)


def rk4_step(state, control, w, h):
    k1 = ship_rhs(state, control, w)
    k2 = ship_rhs(state + 0.5 * h * k1, control, w)
    k3 = ship_rhs(state + 0.5 * h * k2, control, w)
    k4 = ship_rhs(state + h * k3, control, w)
    return state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_constant(x0, control, w, duration, steps):
    """High-accuracy RK4 under constant control and disturbance.

    Returns the state trajectory sampled at every step, shape (steps+1, 3)
    (batched over leading axes of x0). The heading is left unwrapped.
    """
    x0 = np.asarray(x0, dtype=float)
    control = np.asarray(control, dtype=float)
    w = np.asarray(w, dtype=float)
    h = duration / steps
    out = np.empty((steps + 1,) + x0.shape)
    out[0] = x0
    x = x0
    for k in range(steps):
        x = rk4_step(x, control, w, h)
        out[k + 1] = x
    return out


@dataclass(frozen=True, eq=False)
class Rollout:
    """One closed-loop run: states at every integration step, the control
    symbol applied in each period, the verdict, and the first reach time."""

    states: np.ndarray            # (n_steps + 1, 3)
    times: np.ndarray             # (n_steps + 1,)
    controls: list[int]           # per-period control symbols
    verdict: str
    reach_time: float | None
    seed: int


def export_rollout_csv(rollout: Rollout, path, steps_per_period: int) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "N", "E", "theta", "control_index"])
        for k, (t, x) in enumerate(zip(rollout.times, rollout.states)):
            period = min(k // steps_per_period, len(rollout.controls) - 1)
            ctrl = rollout.controls[period] if rollout.controls else -1
            writer.writerow([f"{t:.6f}", f"{x[0]:.9f}", f"{x[1]:.9f}",
                             f"{x[2]:.9f}", ctrl])


def _in_any_box(x, boxes: list[Box]) -> bool:
    return any(b.contains_point(x) for b in boxes)


def simulate(controller: Controller, grid: GridSpec, rd: ReachDict,
             reach_box: Box, avoid_boxes: list[Box], disturbance_box: Box,
             x0, seed: int = 0, max_periods: int | None = None,
             steps_per_period: int = 300) -> Rollout:
    """Closed-loop rollout from x0 under the zero-order-hold controller.

    The state is sampled every tau seconds to pick the next control symbol;
    integration is RK4 with piecewise-constant disturbance per sub-step,
    drawn uniformly from the disturbance box. The verdict is Reached at the
    first sub-step inside the reach box, HitAvoid at the first sub-step in
    an avoid box, ExitedX on leaving the state box, Timeout otherwise.
    """
    x0 = np.asarray(x0, dtype=float)
    rng = np.random.default_rng(seed)
    if max_periods is None:
        max_periods = 3 * sum(grid.counts)
    h = rd.tau / steps_per_period

    cell0 = grid.cell_of(x0)
    kind_ok = controller.assignment[cell0] >= 0 or reach_box.contains_point(grid.fold(x0))
    if not kind_ok:
        raise ValueError(f"start cell {cell0} has no assigned control")

    states = [x0]
    times = [0.0]
    controls: list[int] = []
    verdict = TIMEOUT
    reach_time = None
    x = x0.copy()
    t = 0.0

    def classify_point(p):
        folded = grid.fold(p)
        if reach_box.contains_point(folded):
            return REACHED
        if _in_any_box(folded, avoid_boxes):
            return HIT_AVOID
        if not (np.all(folded[:2] >= grid.bounds.lower[:2])
                and np.all(folded[:2] <= grid.bounds.upper[:2])):
            return EXITED_X
        return None

    status = classify_point(x)
    if status is not None:
        return Rollout(np.array(states), np.array(times), [], status,
                       0.0 if status == REACHED else None, seed)

    done = False
    for _ in range(max_periods):
        cell = grid.cell_of(x)
        a = controller.control_of(cell)
        if a is None:
            raise RuntimeError(
                f"rollout sampled unassigned cell {cell}; controller unsound")
        controls.append(a)
        nu = rd.control_value(a)
        for _ in range(steps_per_period):
            w = rng.uniform(disturbance_box.lower, disturbance_box.upper)
            x = rk4_step(x, nu, w, h)
            t += h
            states.append(x.copy())
            times.append(t)
            status = classify_point(x)
            if status is not None:
                verdict = status
                if status == REACHED:
                    reach_time = t
                done = True
                break
        if done:
            break
    return Rollout(np.array(states), np.array(times), controls, verdict,
                   reach_time, seed)


@dataclass(frozen=True)
class ContainmentReport:
    samples: int
    violations: int
    worst_excess: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def check_tube_containment(rd: ReachDict, grid: GridSpec, samples: int,
                           seed: int = 0, steps_per_period: int = 60,
                           bang_bang: bool = False,
                           atol: float = 1e-9) -> ContainmentReport:
    """Monte-Carlo check that trajectories stay in the transformed tubes.

    Draws random (cell, control, start state, disturbance signal) tuples,
    integrates with RK4, and asserts every sub-step state lies inside the
    time-window box of transform_tube_from_cell. With bang_bang=True the
    disturbance switches between box corners at every sub-step, the
    worst-case family for interval tubes.
    """
    rng = np.random.default_rng(seed)
    w_lo = rd.disturbance_box.lower
    w_hi = rd.disturbance_box.upper
    cells = rng.integers(0, grid.n_cells, size=samples)
    ctrls = rng.integers(0, rd.n_controls, size=samples)
    x = np.empty((samples, 3))
    for idx in range(samples):
        x[idx] = grid.cell_box(int(cells[idx])).sample(rng, 1)[0]
    nu = np.array([rd.control_value(int(a)) for a in ctrls])

    # Transformed segment bounds per sample: (samples, K+1, 2, 3).
    seg = np.empty((samples, rd.seg_bounds.shape[2], 2, 3))
    for idx in range(samples):
        tube = transform_tube_from_cell(rd.tube(0, int(ctrls[idx])),
                                        grid.cell_box(int(cells[idx])))
        seg[idx] = tube.boxes_array

    h = rd.tau / steps_per_period
    t_bounds = rd.t_bounds
    violations = 0
    worst = 0.0
    t = 0.0
    for step in range(steps_per_period + 1):
        if step > 0:
            if bang_bang:
                w = np.where(rng.integers(0, 2, size=(samples, 3)) == 1, w_hi, w_lo)
            else:
                w = rng.uniform(w_lo, w_hi, size=(samples, 3))
            x = rk4_step(x, nu, w, h)
            t += h
        # Windows whose time span covers t (the final degenerate one at tau).
        active = (t_bounds[:, 0] - 1e-12 <= t) & (t <= t_bounds[:, 1] + 1e-12)
        for k in np.flatnonzero(active):
            lo_excess = seg[:, k, 0, :] - x
            hi_excess = x - seg[:, k, 1, :]
            excess = np.maximum(lo_excess, hi_excess).max(axis=1)
            bad = excess > atol
            violations += int(np.count_nonzero(bad))
            if np.any(bad):
                worst = max(worst, float(excess[bad].max()))
    return ContainmentReport(samples, violations, worst)
