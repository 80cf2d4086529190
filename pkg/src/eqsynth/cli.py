"""Command-line pipeline: reach-dict, abstraction, synthesis, validation,
metrics emission, and figure rendering.

    eqsynth run --scenario ship --resolution 30x30x30 --strategy 5 --out-dir out/
    eqsynth compare --scenario ship --strategies 0,5 --out-dir out/

`run` writes the reach-dict cache, abstraction and controller files, appends
one metrics row to metrics.csv, prints it, and renders the scene and
reachable-set figures. `compare` reuses one reach-dict across strategies,
checks the strategy-equivalence invariants, and reports speedups.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .abstraction import (
    NORMAL,
    Classification,
    SymAbstraction,
    build_rel_states,
    build_sym_abstraction,
    classify_cells,
    load_sym_abstraction,
    save_sym_abstraction,
)
from .reach import ReachDict, build_reach_dict, load_reach_dict, save_reach_dict
from .report import (
    append_metrics_row,
    format_metrics_table,
    render_reachdict_figure,
    render_scene_figure,
)
from .scenario import (
    Scenario,
    ScenarioError,
    load_scenario,
    scenario_overrides,
    ship_scenario,
    toy_scenario,
)
from .synthesis import (
    SynthesisResult,
    save_controller,
    strategy_from_id,
    synth_baseline,
    synth_symmetry,
)
from .validation import check_tube_containment, export_rollout_csv, simulate


@dataclass(eq=False)
class RunResult:
    scenario: Scenario
    reach_dict: ReachDict
    classification: Classification
    sym: SymAbstraction | None
    synthesis: SynthesisResult
    artifacts: dict[str, str]


def prepare_reach_dict(scenario: Scenario, reuse_path=None) -> ReachDict:
    if reuse_path is not None:
        return load_reach_dict(reuse_path)
    return build_reach_dict(scenario.control_grid(), scenario.wbar(),
                            scenario.tau, scenario.substeps, scenario.euler_steps)


def synthesize(scenario: Scenario, rd: ReachDict,
               classification: Classification | None = None,
               sym: SymAbstraction | None = None):
    """Run the strategy's synthesis leg; returns (result, sym or None)."""
    grid = scenario.state_grid()
    if classification is None:
        classification = classify_cells(grid, scenario.reach_box, scenario.avoid_boxes)
    cfg = scenario.strategy
    if not cfg.use_cache:
        return synth_baseline(grid, classification, rd, cfg, seed=scenario.seed), None
    abstraction_s = 0.0
    if sym is None:
        t0 = time.perf_counter()
        rels = build_rel_states(grid, scenario.reach_box, scenario.avoid_boxes,
                                classification, cells=classification.cells_of(NORMAL))
        sym = build_sym_abstraction(
            rels, rd, classification, M=scenario.M,
            ordering=cfg.abstraction_ordering, budget=cfg.control_budget)
        abstraction_s = time.perf_counter() - t0
    result = synth_symmetry(grid, classification, sym, rd, cfg,
                            seed=scenario.seed, abstraction_s=abstraction_s)
    return result, sym


def run_scenario(scenario: Scenario, out_dir, reuse_reachdict=None,
                 validate: bool = False, rollouts: int = 0,
                 figures: bool = True) -> RunResult:
    """Full pipeline for one strategy; writes all artifacts into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = scenario.state_grid()

    rd = prepare_reach_dict(scenario, reuse_reachdict)
    rd_path = out / "reachdict.npz"
    if reuse_reachdict is None or str(reuse_reachdict) != str(rd_path):
        save_reach_dict(rd, rd_path)

    classification = classify_cells(grid, scenario.reach_box, scenario.avoid_boxes)
    result, sym = synthesize(scenario, rd, classification)

    artifacts = {"reachdict": str(rd_path)}
    if sym is not None:
        sym_path = out / "abstraction.npz"
        save_sym_abstraction(sym, sym_path)
        artifacts["abstraction"] = str(sym_path)
    ctrl_path = out / "controller.json"
    save_controller(result.controller, ctrl_path)
    artifacts["controller"] = str(ctrl_path)

    metrics_path = out / "metrics.csv"
    append_metrics_row(metrics_path, result.metrics)
    artifacts["metrics"] = str(metrics_path)
    print(format_metrics_table([result.metrics]))

    manifest = {
        "scenario": scenario.name,
        "strategy": scenario.strategy.id,
        "seed": result.seed,
        "grid_counts": list(scenario.grid_counts),
        "grid_hash": grid.fingerprint(),
        "reachdict_hash": rd.fingerprint(),
        "n_controlled": result.controller.n_controlled,
    }
    with open(out / "run.json", "w") as f:
        json.dump(manifest, f, indent=2)

    rollout_records = []
    violations = 0
    if validate:
        report = check_tube_containment(rd, grid, samples=2000,
                                        seed=scenario.seed)
        print(f"tube containment: {report.samples} samples, "
              f"{report.violations} violations")
        violations += report.violations
    if rollouts > 0:
        rng = np.random.default_rng(scenario.seed)
        assigned = result.controller.assigned_cells
        if assigned.size == 0:
            print("no controlled cells; skipping rollouts")
        else:
            picks = rng.choice(assigned, size=min(rollouts, assigned.size),
                               replace=True)
            for k, cell in enumerate(picks):
                x0 = grid.cell_box(int(cell)).sample(rng, 1)[0]
                ro = simulate(result.controller, grid, rd, scenario.reach_box,
                              scenario.avoid_boxes, scenario.disturbance_box,
                              x0, seed=scenario.seed + 1000 + k)
                rollout_records.append(ro)
                export_rollout_csv(ro, out / f"rollout_{k:03d}.csv", 300)
            verdicts = [ro.verdict for ro in rollout_records]
            n_reached = sum(v == "Reached" for v in verdicts)
            print(f"rollouts: {n_reached}/{len(verdicts)} reached")
            violations += sum(v != "Reached" for v in verdicts)

    if figures:
        render_scene_figure(out / "scene.png", scenario, grid,
                            result.controller, rollout_records[:40])
        render_reachdict_figure(out / "reachdict.png", rd)

    if validate and violations:
        raise SystemExit(1)
    return RunResult(scenario, rd, classification, sym, result, artifacts)


def compare_strategies(scenario: Scenario, strategy_ids, out_dir,
                       reuse_reachdict=None) -> list[SynthesisResult]:
    """Run several strategies over one shared reach-dict.

    Asserts that exhaustive-budget strategies (0, 1, 3, 4, 6) agree on the
    final controlled set and that budget-limited ones (0.5, 2, 5) produce
    subsets; prints per-strategy metrics and total-time speedups.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not strategy_ids:
        print(format_metrics_table([]))
        return []
    rd = prepare_reach_dict(scenario, reuse_reachdict)
    save_reach_dict(rd, out / "reachdict.npz")
    grid = scenario.state_grid()
    classification = classify_cells(grid, scenario.reach_box, scenario.avoid_boxes)

    results: dict[str, SynthesisResult] = {}
    for sid in strategy_ids:
        sc = scenario_overrides(scenario, strategy=sid)
        result, _ = synthesize(sc, rd, classification)
        results[str(sid)] = result
        append_metrics_row(out / "metrics.csv", result.metrics)

    exhaustive = [s for s in map(str, strategy_ids) if s in ("0", "1", "3", "4", "6")]
    limited = [s for s in map(str, strategy_ids) if s in ("0.5", "2", "5")]
    if len(exhaustive) > 1:
        ref = results[exhaustive[0]].controller.assignment >= 0
        for s in exhaustive[1:]:
            got = results[s].controller.assignment >= 0
            if not np.array_equal(ref, got):
                raise AssertionError(
                    f"strategy {s} controlled set differs from {exhaustive[0]}")
    if exhaustive and limited:
        ref = results[exhaustive[0]].controller.assignment >= 0
        for s in limited:
            got = results[s].controller.assignment >= 0
            if not np.all(got <= ref):
                raise AssertionError(
                    f"budget strategy {s} is not a subset of {exhaustive[0]}")

    rows = [results[str(s)].metrics for s in strategy_ids]
    print(format_metrics_table(rows))
    base = results.get("0")
    if base is not None:
        for sid, res in results.items():
            if sid != "0" and base.metrics.total_s > 0:
                ratio = res.metrics.total_s / base.metrics.total_s
                print(f"strategy {sid}: total time {res.metrics.total_s:.1f}s, "
                      f"{1.0 / ratio if ratio > 0 else float('inf'):.2f}x vs strategy 0")
    return [results[str(s)] for s in strategy_ids]


def _load_cli_scenario(args) -> Scenario:
    if args.config:
        scenario = load_scenario(args.config)
    elif args.scenario == "toy":
        scenario = toy_scenario()
    else:
        scenario = ship_scenario()
    resolution = None
    if args.resolution:
        try:
            resolution = tuple(int(p) for p in args.resolution.lower().split("x"))
            if len(resolution) != 3:
                raise ValueError
        except ValueError:
            raise ScenarioError(
                f"resolution: expected NxNxN, got {args.resolution!r}") from None
    return scenario_overrides(scenario, strategy=args.strategy,
                              resolution=resolution, seed=args.seed)


def _add_common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario YAML file")
    p.add_argument("--scenario", choices=["ship", "toy"], default="ship",
                   help="built-in scenario when no --config is given")
    p.add_argument("--resolution", help="state grid counts, e.g. 30x30x30")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default="out", help="artifact directory")
    p.add_argument("--reuse-reachdict", metavar="PATH",
                   help="load a cached reach-dict instead of recomputing")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="eqsynth",
        description="Reach-avoid controller synthesis with symmetry-guided caching")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="synthesize one controller")
    _add_common_args(p_run)
    p_run.add_argument("--strategy", default=None,
                       help="strategy id: 0, 0.5, 1..6")
    p_run.add_argument("--validate", action="store_true",
                       help="run the tube-containment suite; exit 1 on violations")
    p_run.add_argument("--rollouts", type=int, default=0, metavar="N",
                       help="simulate N closed-loop rollouts and export CSVs")
    p_run.add_argument("--no-figures", action="store_true")

    p_cmp = sub.add_parser("compare", help="run several strategies on one reach-dict")
    _add_common_args(p_cmp)
    p_cmp.add_argument("--strategies", default="0,5",
                       help="comma-separated strategy ids")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            scenario = _load_cli_scenario(args)
            run_scenario(scenario, args.out_dir,
                         reuse_reachdict=args.reuse_reachdict,
                         validate=args.validate, rollouts=args.rollouts,
                         figures=not args.no_figures)
        else:
            args.strategy = None
            scenario = _load_cli_scenario(args)
            ids = [s.strip() for s in args.strategies.split(",") if s.strip()]
            compare_strategies(scenario, ids, args.out_dir,
                               reuse_reachdict=args.reuse_reachdict)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
