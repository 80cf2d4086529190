"""Scenario configuration: state/control/disturbance geometry, the
reach-avoid specification, grid resolutions, and strategy selection.

Configs are YAML with explicit keys; angle entries accept exact multiples of
pi written as "pi:<number>" or "pi:<a/b>" (e.g. "pi:1/3") to avoid decimal
drift in bounds that are pi-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .geometry import Box, GeometryError
from .grid import GridSpec
from .symmetry import rotated_disturbance_union
from .synthesis import StrategyConfig, strategy_from_id


class ScenarioError(ValueError):
    """Configuration rejected; the message names the offending field."""


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    state_box: Box
    input_box: Box
    disturbance_box: Box
    reach_box: Box
    avoid_boxes: list[Box]
    tau: float
    substeps: int
    grid_counts: tuple[int, int, int]
    control_counts: tuple[int, int, int]
    strategy: StrategyConfig
    M: int | None = None
    seed: int = 0
    euler_steps: int = 64
    rotated_disturbance_box: Box | None = None

    def state_grid(self) -> GridSpec:
        return GridSpec(self.state_box, self.grid_counts, (False, False, True))

    def control_grid(self) -> GridSpec:
        return GridSpec(self.input_box, self.control_counts)

    def wbar(self) -> Box:
        """Disturbance box used for the relative tubes: the configured
        rotated union, or its computed outer bound."""
        if self.rotated_disturbance_box is not None:
            return self.rotated_disturbance_box
        return rotated_disturbance_union(self.disturbance_box)

    def validate(self) -> None:
        if self.tau <= 0:
            raise ScenarioError(f"tau: must be positive, got {self.tau}")
        if self.substeps < 1:
            raise ScenarioError(f"substeps: must be >= 1, got {self.substeps}")
        for fname, counts in (("grid_counts", self.grid_counts),
                              ("control_counts", self.control_counts)):
            if len(counts) != 3 or any(int(c) < 1 for c in counts):
                raise ScenarioError(f"{fname}: need three positive integers, got {counts}")
        for fname, box in (("state_box", self.state_box),
                           ("input_box", self.input_box),
                           ("disturbance_box", self.disturbance_box),
                           ("reach_box", self.reach_box)):
            if box.dim != 3:
                raise ScenarioError(f"{fname}: must be 3-D")
        for k, ab in enumerate(self.avoid_boxes):
            if ab.dim != 3:
                raise ScenarioError(f"avoid_boxes[{k}]: must be 3-D")
        if self.M is not None and self.M < 1:
            raise ScenarioError(f"M: must be positive, got {self.M}")


def ship_scenario(resolution=(30, 30, 30), strategy="5", M=None, seed=0) -> Scenario:
    """The ship-docking scenario: expanded pier with boundary obstacles.

    The four boundary strips of the expanded state box are obstacles, so the
    abstraction keeps track of the environment limits; the two pier walls
    leave a slalom gap. The relative-tube disturbance box is the rotated
    union of the concrete one.
    """
    pi = math.pi
    w = 0.01 / math.sqrt(2.0)
    return Scenario(
        name="ship",
        state_box=Box([-3.0, -3.0, -pi], [13.0, 9.5, pi]),
        input_box=Box([-0.18, -0.05, -0.1], [0.18, 0.05, 0.1]),
        disturbance_box=Box([-w, -w, -w], [w, w, w]),
        rotated_disturbance_box=Box([-0.01] * 3, [0.01] * 3),
        reach_box=Box([7.0, 0.0, pi / 3.0], [10.0, 6.5, 2.0 * pi / 3.0]),
        avoid_boxes=[
            Box([2.0, -3.0, -pi], [2.5, 3.0, pi]),     # pier wall, gap above
            Box([5.0, 3.5, -pi], [5.5, 9.5, pi]),      # pier wall, gap below
            Box([-3.0, -3.0, -pi], [0.0, 9.5, pi]),    # south boundary strip
            Box([-3.0, -3.0, -pi], [13.0, 0.0, pi]),   # west boundary strip
            Box([-3.0, 6.5, -pi], [13.0, 9.5, pi]),    # east boundary strip
            Box([10.0, -3.0, -pi], [13.0, 9.5, pi]),   # north boundary strip
        ],
        tau=3.0,
        substeps=4,
        grid_counts=tuple(int(c) for c in resolution),
        control_counts=(9, 9, 9),
        strategy=strategy_from_id(strategy),
        M=M,
        seed=seed,
    )


def toy_scenario(strategy="0", seed=0) -> Scenario:
    """Small 5x5x4 scene with one obstacle wall and a gap.

    Heading slices are centered on the four compass directions so surge-only
    controls make guaranteed progress despite the coarse heading resolution;
    the target is a full-heading band at the top of the box.
    """
    pi = math.pi
    th_lo = -pi / 4.0
    th_hi = 2.0 * pi - pi / 4.0
    return Scenario(
        name="toy",
        state_box=Box([0.0, 0.0, th_lo], [5.0, 7.0, th_hi]),
        input_box=Box([-0.72, 0.0, 0.0], [0.72, 0.0, 0.0]),
        disturbance_box=Box([-0.002, -0.002, 0.0], [0.002, 0.002, 0.0]),
        reach_box=Box([3.0, 0.0, th_lo], [5.0, 7.0, th_hi]),
        avoid_boxes=[Box([0.5, 0.0, th_lo], [0.9, 2.0, th_hi])],
        tau=3.0,
        substeps=4,
        grid_counts=(5, 5, 4),
        control_counts=(3, 1, 1),
        strategy=strategy_from_id(strategy),
        seed=seed,
    )


def _parse_scalar(value, fieldname: str) -> float:
    if isinstance(value, str):
        text = value.strip()
        if text.startswith("pi:"):
            body = text[3:].strip()
            try:
                if "/" in body:
                    num, den = body.split("/", 1)
                    return math.pi * float(num) / float(den)
                return math.pi * float(body)
            except (ValueError, ZeroDivisionError) as exc:
                raise ScenarioError(f"{fieldname}: bad pi expression {value!r}") from exc
        try:
            return float(text)
        except ValueError as exc:
            raise ScenarioError(f"{fieldname}: not a number: {value!r}") from exc
    if isinstance(value, (int, float)):
        return float(value)
    raise ScenarioError(f"{fieldname}: not a number: {value!r}")


def _parse_vector(value, fieldname: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ScenarioError(f"{fieldname}: need a 3-vector, got {value!r}")
    return [_parse_scalar(v, f"{fieldname}[{k}]") for k, v in enumerate(value)]


def _parse_box(value, fieldname: str) -> Box:
    if not isinstance(value, dict) or set(value) != {"lower", "upper"}:
        raise ScenarioError(f"{fieldname}: expected {{lower: [...], upper: [...]}}")
    lo = _parse_vector(value["lower"], f"{fieldname}.lower")
    hi = _parse_vector(value["upper"], f"{fieldname}.upper")
    try:
        return Box(lo, hi)
    except GeometryError as exc:
        raise ScenarioError(f"{fieldname}: {exc}") from exc


def load_scenario(path) -> Scenario:
    with open(path) as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ScenarioError("config root must be a mapping")
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> Scenario:
    required = ["state_box", "input_box", "disturbance_box", "reach_box",
                "avoid_boxes", "tau", "grid_counts", "control_counts"]
    for key in required:
        if key not in raw:
            raise ScenarioError(f"{key}: missing required field")
    avoid_raw = raw["avoid_boxes"]
    if not isinstance(avoid_raw, list):
        raise ScenarioError("avoid_boxes: expected a list of boxes")
    try:
        strategy = strategy_from_id(raw.get("strategy", "0"))
    except ValueError as exc:
        raise ScenarioError(f"strategy: {exc}") from exc
    rotated = raw.get("rotated_disturbance_box")
    scenario = Scenario(
        name=str(raw.get("name", "scenario")),
        state_box=_parse_box(raw["state_box"], "state_box"),
        input_box=_parse_box(raw["input_box"], "input_box"),
        disturbance_box=_parse_box(raw["disturbance_box"], "disturbance_box"),
        reach_box=_parse_box(raw["reach_box"], "reach_box"),
        avoid_boxes=[_parse_box(v, f"avoid_boxes[{k}]")
                     for k, v in enumerate(avoid_raw)],
        tau=_parse_scalar(raw["tau"], "tau"),
        substeps=int(raw.get("substeps", 4)),
        grid_counts=tuple(int(c) for c in raw["grid_counts"]),
        control_counts=tuple(int(c) for c in raw["control_counts"]),
        strategy=strategy,
        M=None if raw.get("M") in (None, "null") else int(raw["M"]),
        seed=int(raw.get("seed", 0)),
        euler_steps=int(raw.get("euler_steps", 64)),
        rotated_disturbance_box=None if rotated is None
        else _parse_box(rotated, "rotated_disturbance_box"),
    )
    scenario.validate()
    return scenario


def scenario_overrides(scenario: Scenario, strategy=None, resolution=None,
                       seed=None) -> Scenario:
    """Apply CLI overrides, revalidating the result."""
    updates = {}
    if strategy is not None:
        updates["strategy"] = strategy_from_id(strategy)
    if resolution is not None:
        updates["grid_counts"] = tuple(int(c) for c in resolution)
    if seed is not None:
        updates["seed"] = int(seed)
    out = replace(scenario, **updates) if updates else scenario
    out.validate()
    return out
