"""Command line front end.

Three subcommands share the scenario-file format: ``solve`` plans one
stage and can write the plan as JSON, ``ablate`` runs every stage and
tabulates how plans change, ``robustness`` sweeps a load parameter and
reports chain failure probabilities as CSV.

Exit codes: 0 on success, 1 for a bad scenario file or arguments,
2 when planning finds no plan (no plan file is written).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace

import numpy as np

from .domains import bottle, nut
from .planner import format_plan, plan_to_dict, solve
from .robustness import cost_from_probability, success_probability
from .scenario import ConfigError, load_scenario, resolve_stage

_DOMAINS = {"bottle-cap": bottle, "nut-fastening": nut}


def _build(resolved):
    module = _DOMAINS[resolved.domain]
    world = module.build_world(resolved.scene, resolved.operation)
    problem, names = module.build_problem(
        world, resolved.spec, seed=resolved.seed, disable=resolved.disable
    )
    return module, world, problem, names


def _solve_stage(resolved):
    module, world, problem, names = _build(resolved)
    start = time.perf_counter()
    result = solve(
        problem,
        seed=resolved.seed,
        max_levels=resolved.budget["max_levels"],
        max_expansions=resolved.budget["max_expansions"],
    )
    wall = time.perf_counter() - start
    return problem, result, module.plan_summary(result, names), wall


def _stage_index(scenario, stage_arg: str) -> int:
    names = [s.name for s in scenario.stages]
    if stage_arg in names:
        return names.index(stage_arg)
    try:
        index = int(stage_arg)
    except ValueError:
        raise ConfigError(f"no stage named '{stage_arg}' (stages: {names})")
    if not 0 <= index < len(names):
        raise ConfigError(f"stage index {index} out of range (stages: {names})")
    return index


def _resolved(args):
    scenario = load_scenario(args.scenario)
    index = _stage_index(scenario, getattr(args, "stage", "0"))
    resolved = resolve_stage(scenario, index)
    if args.seed is not None:
        resolved = replace(resolved, seed=args.seed)
    return scenario, resolved


def cmd_solve(args) -> int:
    _, resolved = _resolved(args)
    _, result, summary, wall = _solve_stage(resolved)
    if not result.solved:
        print(f"no plan for stage '{resolved.name}' ({wall:.1f}s)")
        if result.diagnostic:
            print(f"  {result.diagnostic}")
        return 2
    print(f"stage '{resolved.name}': {summary['steps']} steps, "
          f"strategy {summary['strategy'] or '-'}, route {summary['route'] or '-'}, "
          f"cost {result.cost:.6g} ({wall:.1f}s)")
    print(format_plan(result))
    if args.out:
        payload = {
            "domain": resolved.domain,
            "stage": resolved.name,
            "strategy": summary["strategy"],
            "route": summary["route"],
            "plan": plan_to_dict(result, seed=resolved.seed),
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"plan written to {args.out}")
    return 0


def cmd_ablate(args) -> int:
    scenario = load_scenario(args.scenario)
    rows = []
    all_solved = True
    for index, stage in enumerate(scenario.stages):
        resolved = resolve_stage(scenario, index)
        if args.seed is not None:
            resolved = replace(resolved, seed=args.seed)
        _, result, summary, wall = _solve_stage(resolved)
        all_solved &= result.solved
        rows.append(
            {
                "stage": stage.name,
                "solved": int(result.solved),
                "steps": summary["steps"],
                "strategy": summary["strategy"],
                "route": summary["route"],
                "cost": result.cost if result.solved else "",
                "wall_time_s": round(wall, 3),
            }
        )
        label = f"{summary['strategy']}/{summary['route']}" if result.solved else "-"
        print(f"{stage.name}: steps={summary['steps']} {label} ({wall:.1f}s)")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        print(f"table written to {args.out}")
    return 0 if all_solved else 2


def _parse_sweep(text: str) -> np.ndarray:
    try:
        lo, hi, count = text.split(":")
        grid = np.linspace(float(lo), float(hi), int(count))
    except ValueError:
        raise ConfigError(f"--sweep must look like 'lo:hi:count', got '{text}'")
    if len(grid) == 0:
        raise ConfigError("--sweep needs at least one point")
    return grid


def _bottle_rows(world, resolved, spec):
    cfg = world.cfg
    arm = cfg["arms"][0]
    q_hand = world.scene.reach(arm, world.twist_hand_target(world.bottle_pose))
    q_tool = (
        world.scene.reach(arm, world.tool_twist_target(world.bottle_pose))
        if cfg["tool"]
        else None
    )
    strategies = [
        s
        for s in bottle.STRATEGIES
        if s not in resolved.disable and (s != "twist-tool" or q_tool is not None)
    ]
    routes = [
        r
        for r in bottle.ROUTES
        if r not in resolved.disable and bottle._route_available(world, r)
    ]
    levels = resolved.operation["extra_force_levels"]
    rows = []
    for extra in levels:
        for strategy in strategies:
            q = q_tool if strategy == "twist-tool" else q_hand
            chain, w = world.twist_chain(strategy, float(extra), arm, q)
            p = success_probability(chain, w, spec, resolved.seed)
            rows.append((float(extra), strategy, 1.0 - p, cost_from_probability(p)))
        for route in routes:
            chain, w = world.fixture_chain(route, float(extra))
            p = success_probability(chain, w, spec, resolved.seed)
            rows.append((float(extra), route, 1.0 - p, cost_from_probability(p)))
    return rows


def _nut_rows(world, resolved, spec, grid):
    if grid is None:
        grid = np.linspace(0.25, 5.0, 20)
    spot = world.cfg["weight_spots"][0]
    arm = world.cfg["arms"][0]
    q_carry = world.scene.reach(arm, world.weight_place_target(spot))
    rows = []
    for mass in grid:
        chain, w = world.fixture_chain("weight-hold", (float(mass), spot))
        p = success_probability(chain, w, spec, resolved.seed)
        rows.append((float(mass), "weight-hold", 1.0 - p, cost_from_probability(p)))
        chain, w = world.carry_chain(float(mass), arm, q_carry)
        p = success_probability(chain, w, spec, resolved.seed)
        rows.append((float(mass), "weight-carry", 1.0 - p, cost_from_probability(p)))
    return rows


def cmd_robustness(args) -> int:
    _, resolved = _resolved(args)
    module, world, _, _ = _build(resolved)
    spec = replace(resolved.spec, samples=args.samples)
    grid = _parse_sweep(args.sweep) if args.sweep else None
    if module is bottle:
        if grid is not None:
            resolved = replace(
                resolved,
                operation={**resolved.operation, "extra_force_levels": list(grid)},
            )
        rows = _bottle_rows(world, resolved, spec)
        sweep_label = "extra press force sweep"
    else:
        rows = _nut_rows(world, resolved, spec, grid)
        sweep_label = "ballast mass sweep"
    methods = []
    for _, method, _, _ in rows:
        if method not in methods:
            methods.append(method)
    print(f"{sweep_label}, {spec.samples} samples per point")
    for method in methods:
        probs = [f"{fail:.3f}" for _, m, fail, _ in rows if m == method]
        print(f"  {method}: failure {' '.join(probs)}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sweep_value", "method", "failure_probability", "cost"])
            writer.writerows(rows)
        print(f"curves written to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="forceplan",
        description="Plan forceful manipulation with stability-priced actions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="plan one stage of a scenario")
    p_solve.add_argument("scenario", help="scenario JSON file")
    p_solve.add_argument("--stage", default="0", help="stage name or index (default first)")
    p_solve.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_solve.add_argument("--out", default=None, help="write the plan as JSON here")
    p_solve.set_defaults(func=cmd_solve)

    p_ablate = sub.add_parser("ablate", help="solve every stage and tabulate plans")
    p_ablate.add_argument("scenario")
    p_ablate.add_argument("--seed", type=int, default=None)
    p_ablate.add_argument("--out", default=None, help="write the stage table as CSV here")
    p_ablate.set_defaults(func=cmd_ablate)

    p_rob = sub.add_parser("robustness", help="sweep a load and report failure curves")
    p_rob.add_argument("scenario")
    p_rob.add_argument("--stage", default="0")
    p_rob.add_argument("--seed", type=int, default=None)
    p_rob.add_argument("--samples", type=int, default=1000)
    p_rob.add_argument("--sweep", default=None, help="grid as lo:hi:count")
    p_rob.add_argument("--out", default=None, help="write the curves as CSV here")
    p_rob.set_defaults(func=cmd_robustness)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
