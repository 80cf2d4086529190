"""Reach-avoid controller synthesis for SE(2)-equivariant systems with a
symmetry-based second abstraction layer that orders control exploration."""

from .geometry import (
    AngleInterval,
    Box,
    EmptyPolytopeError,
    GeometryError,
    Polytope,
    SpatialIndex,
    box_intersects,
    index_knn,
    polytope_intersects_box,
    rotate_box_outer,
    wrap_angle,
)
from .grid import CellId, GridSpec
from .reach import (
    ReachDict,
    ShipModel,
    TimedTube,
    TubeSegment,
    build_reach_dict,
    compute_tube,
    load_reach_dict,
    save_reach_dict,
)
from .symmetry import (
    GroupElement,
    apply_disturbance,
    apply_inverse_state,
    apply_state,
    compose,
    frame_of,
    rotated_disturbance_union,
    transform_tube_from_cell,
)
from .abstraction import (
    AVOID,
    NORMAL,
    REACH,
    Classification,
    RelState,
    SymAbstraction,
    build_rel_states,
    build_sym_abstraction,
    classify_cell,
    classify_cells,
    load_sym_abstraction,
    obstruction_mask,
    save_sym_abstraction,
)
from .synthesis import (
    Cache,
    Controller,
    StrategyConfig,
    SynthesisMetrics,
    SynthesisResult,
    TransitionOracle,
    cache_update,
    load_controller,
    neighborhood,
    replay_soundness,
    save_controller,
    strategy_from_id,
    synth_baseline,
    synth_symmetry,
    transition_ok,
)
from .validation import (
    ContainmentReport,
    Rollout,
    check_tube_containment,
    integrate_constant,
    simulate,
)
from .scenario import (
    Scenario,
    ScenarioError,
    load_scenario,
    scenario_from_dict,
    ship_scenario,
    toy_scenario,
)

__version__ = "0.1.0"
