"""Command-line entry point.

Subcommands cover the whole pipeline: scene generation, field construction,
planning, evaluation, the experiment harnesses and SVG rendering. Every run
echoes its configuration to ``config.json`` in the output directory, and all
randomness flows from the single ``--seed`` flag through fixed per-consumer
offsets, so identical invocations produce byte-identical artifacts.

Exit codes: 0 success, 2 usage or input error, 3 degraded planner result
(the fallback trajectory is still written).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fields, metrics, render, scenarios
from .fields import FieldVariant, find_frontiers, initial_orfield, make_field
from .geometry import Pose, Route
from .grid import OccupancyGrid, OrField, load_ofg, save_ofg
from .planners import (
    PlannerError,
    PlannerParams,
    Trajectory,
    field_bezier,
    field_rrt_star,
    point_rrt_star,
)

# Sub-seed offsets per consumer, so one --seed reproduces a whole run.
SEED_SCENE = 0
SEED_PLANNER = 1


class CliError(Exception):
    """Input or usage problem; maps to exit code 2."""


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _echo_config(args, out: Path) -> None:
    skip = {"func"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    _write(out / "config.json", json.dumps(cfg, indent=2, sort_keys=True, default=str))


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc


def _load_grid(path, expected_type, what):
    try:
        grid = load_ofg(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load {what} from {path}: {exc}") from exc
    if not isinstance(grid, expected_type):
        raise CliError(f"{path} does not hold a {expected_type.__name__}")
    return grid


def _parse_radii(text: str):
    try:
        radii = [float(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise CliError(f"bad radii list {text!r}") from exc
    if not radii:
        raise CliError("radii list is empty")
    return radii


def _load_params(args) -> PlannerParams:
    if getattr(args, "params", None):
        try:
            params = PlannerParams.from_json(_read_text(args.params))
        except (ValueError, TypeError) as exc:
            raise CliError(f"bad planner params: {exc}") from exc
    else:
        params = PlannerParams()
    if args.seed is not None:
        params = params.with_seed(args.seed + SEED_PLANNER)
    return params


def cmd_scene(args) -> int:
    out = _out_dir(args)
    try:
        spec = scenarios.SceneSpec.from_json(_read_text(args.spec))
    except (ValueError, TypeError, KeyError) as exc:
        raise CliError(f"bad scene spec: {exc}") from exc
    if args.seed is not None:
        spec = replace(spec, rng_seed=args.seed + SEED_SCENE)
    geometry = scenarios.default_geometry(args.resolution, spec.extent)
    try:
        scene = scenarios.build_scene(spec, geometry)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    save_ofg(out / "occupancy.ofg", scene.occupancy)
    _write(out / "route.json", scene.route.to_json())
    _write(out / "ground_truth.json", scene.ground_truth.to_json())
    _echo_config(args, out)
    return 0


def cmd_field(args) -> int:
    out = _out_dir(args)
    try:
        variant = FieldVariant(args.variant)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    occ = _load_grid(args.occupancy, OccupancyGrid, "occupancy")
    route = None
    if args.route:
        try:
            route = Route.from_json(_read_text(args.route))
        except (ValueError, KeyError) as exc:
            raise CliError(f"bad route file: {exc}") from exc
    target = None
    if variant not in fields.ROUTE_VARIANTS:
        frontiers = find_frontiers(occ, min_length=2)
        if not len(frontiers):
            raise CliError("no frontiers found in the occupancy grid")
        if args.target is None or not 0 <= args.target < len(frontiers):
            raise CliError(
                f"--target must select one of {len(frontiers)} frontiers"
            )
        target = frontiers[args.target].representative
    try:
        if variant is FieldVariant.INITIAL_ORFIELD:
            if route is None:
                raise ValueError("variant initial requires --route")
            field, distance = initial_orfield(route, occ.geometry)
            save_ofg(out / "distance.ofg", distance)
        else:
            field = make_field(variant, occ, route=route, target=target)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    save_ofg(out / "field.ofg", field)
    _echo_config(args, out)
    return 0


def cmd_plan(args) -> int:
    out = _out_dir(args)
    params = _load_params(args)
    field = _load_grid(args.field, OrField, "field")
    occ = None
    if args.occupancy:
        occ = _load_grid(args.occupancy, OccupancyGrid, "occupancy")
    start = Pose(np.array(args.start[:2]), args.start[2])
    try:
        if args.planner == "field-rrt-star":
            result = field_rrt_star(field, start, params, occ=occ)
        elif args.planner == "field-bezier":
            result = field_bezier(field, start, params)
        elif args.planner == "point-rrt-star":
            if occ is None or args.goal is None:
                raise CliError("point-rrt-star requires --occupancy and --goal")
            result = point_rrt_star(occ, start, np.array(args.goal), params)
        else:
            raise CliError(f"unknown planner {args.planner!r}")
        # argparse choices guard the planner name; ValueError covers inputs.
    except PlannerError as exc:
        raise CliError(f"planning failed: {exc}") from exc
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    _write(out / "trajectory.json", result.trajectory.to_json())
    report = {
        "planner": args.planner,
        "energy": result.energy,
        "degraded": result.degraded,
        "stats": result.stats,
    }
    _write(out / "report.json", json.dumps(report, indent=2, sort_keys=True))
    _echo_config(args, out)
    return 3 if result.degraded else 0


def cmd_eval(args) -> int:
    out = _out_dir(args)
    try:
        planned = Trajectory.from_json(_read_text(args.trajectory))
        truth = Trajectory.from_json(_read_text(args.ground_truth))
    except (ValueError, KeyError) as exc:
        raise CliError(f"bad trajectory file: {exc}") from exc
    radii = _parse_radii(args.radii)
    origin = (
        np.array(args.origin) if args.origin is not None else planned.positions[0]
    )
    try:
        pair = metrics.paired_circle_samples(truth, planned, origin, radii)
        frame = {
            "ade": metrics.ade(pair),
            "fde": metrics.fde(pair),
            "hit": metrics.hit_rate(pair, args.d),
            "coverage": metrics.coverage(pair, args.d),
            "matched_radii": int(len(pair.truth)),
        }
    except ValueError:
        # No sampling radius reached by both trajectories: explicit nulls.
        frame = {
            "ade": None,
            "fde": None,
            "hit": None,
            "coverage": None,
            "matched_radii": 0,
        }
    report = {"frames": [frame], "mean": {k: frame[k] for k in ("ade", "fde", "hit", "coverage")}}
    if args.format == "csv":
        keys = ["ade", "fde", "hit", "coverage", "matched_radii"]
        lines = [",".join(keys)]
        lines.append(",".join("" if frame[k] is None else repr(frame[k]) for k in keys))
        _write(out / "report.csv", "\n".join(lines) + "\n")
    else:
        _write(out / "report.json", json.dumps(report, indent=2, sort_keys=True))
    _echo_config(args, out)
    return 0


def _experiment_common(args):
    params = _load_params(args)
    specs = []
    for path in args.spec:
        try:
            spec = scenarios.SceneSpec.from_json(_read_text(path))
        except (ValueError, TypeError, KeyError) as exc:
            raise CliError(f"bad scene spec {path}: {exc}") from exc
        if args.seed is not None:
            spec = replace(spec, rng_seed=args.seed + SEED_SCENE)
        specs.append(spec)
    return params, specs


def _write_experiment(args, out: Path, result: scenarios.ExperimentResult) -> None:
    if args.format == "csv":
        _write(out / "result.csv", result.to_csv())
    else:
        _write(out / "result.json", result.to_json())
    _echo_config(args, out)


def cmd_experiment_rotation(args) -> int:
    out = _out_dir(args)
    params, specs = _experiment_common(args)
    if len(specs) != 1:
        raise CliError("rotation harness takes exactly one scene spec")
    try:
        result = scenarios.rotation_robustness(
            specs[0],
            args.planner,
            FieldVariant(args.variant),
            args.step,
            geometry=scenarios.default_geometry(args.resolution, specs[0].extent),
            params=params,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    _write_experiment(args, out, result)
    return 0


def cmd_experiment_ablation(args) -> int:
    out = _out_dir(args)
    params, specs = _experiment_common(args)
    try:
        result = scenarios.ablation_sweep(
            specs,
            [FieldVariant(v) for v in args.variants.split(",") if v],
            [p for p in args.planners.split(",") if p],
            _parse_radii(args.radii),
            args.d,
            params=params,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    _write_experiment(args, out, result)
    return 0


def cmd_render(args) -> int:
    occ = _load_grid(args.occupancy, OccupancyGrid, "occupancy") if args.occupancy else None
    field = _load_grid(args.field, OrField, "field") if args.field else None
    trajectories = []
    for path in args.trajectory or []:
        try:
            trajectories.append(Trajectory.from_json(_read_text(path)))
        except (ValueError, KeyError) as exc:
            raise CliError(f"bad trajectory file {path}: {exc}") from exc
    try:
        svg = render.render_svg(
            occupancy=occ,
            field=field,
            trajectories=trajectories,
            arrow_stride=args.arrow_stride,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    svg_path = Path(args.svg_out)
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    _write(svg_path, svg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orfield",
        description="Orientation-field construction and field-guided planning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("scene", help="generate a synthetic scene")
    common(p)
    p.add_argument("--spec", required=True, help="SceneSpec JSON file")
    p.add_argument("--resolution", type=float, default=0.2)
    p.set_defaults(func=cmd_scene)

    p = sub.add_parser("field", help="build an orientation field")
    common(p)
    p.add_argument(
        "--variant", required=True, choices=[v.value for v in FieldVariant]
    )
    p.add_argument("--occupancy", required=True, help="occupancy OFG1 file")
    p.add_argument("--route", default=None, help="route JSON file")
    p.add_argument("--target", type=int, default=None, help="target frontier index")
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("plan", help="plan a trajectory")
    common(p)
    p.add_argument(
        "--planner",
        required=True,
        choices=("field-rrt-star", "field-bezier", "point-rrt-star"),
    )
    p.add_argument("--field", required=True, help="orientation field OFG1 file")
    p.add_argument("--occupancy", default=None, help="occupancy OFG1 file")
    p.add_argument("--params", default=None, help="PlannerParams JSON file")
    p.add_argument(
        "--start", type=float, nargs=3, required=True, metavar=("X", "Y", "H")
    )
    p.add_argument("--goal", type=float, nargs=2, default=None, metavar=("X", "Y"))
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("eval", help="evaluate a trajectory against ground truth")
    common(p)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--radii", required=True, help="comma-separated meters")
    p.add_argument("--d", type=float, required=True, help="hit threshold, meters")
    p.add_argument("--origin", type=float, nargs=2, default=None, metavar=("X", "Y"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run an experiment harness")
    exp = p.add_subparsers(dest="harness", required=True)

    pr = exp.add_parser("rotation", help="route-rotation robustness")
    common(pr)
    pr.add_argument("--spec", nargs="+", required=True)
    pr.add_argument("--variant", required=True, choices=[v.value for v in FieldVariant])
    pr.add_argument(
        "--planner",
        default="field-rrt-star",
        choices=("field-rrt-star", "field-bezier", "point-rrt-star"),
    )
    pr.add_argument("--step", type=int, required=True, help="degrees per case")
    pr.add_argument("--params", default=None)
    pr.add_argument("--resolution", type=float, default=0.2)
    pr.set_defaults(func=cmd_experiment_rotation)

    pa = exp.add_parser("ablation", help="field-variant x planner sweep")
    common(pa)
    pa.add_argument("--spec", nargs="+", required=True)
    pa.add_argument("--variants", required=True, help="comma-separated variants")
    pa.add_argument("--planners", required=True, help="comma-separated planners")
    pa.add_argument("--radii", required=True)
    pa.add_argument("--d", type=float, required=True)
    pa.add_argument("--params", default=None)
    pa.set_defaults(func=cmd_experiment_ablation)

    p = sub.add_parser("render", help="render layers to SVG")
    common(p)
    p.add_argument("--occupancy", default=None)
    p.add_argument("--field", default=None)
    p.add_argument("--trajectory", action="append", default=None)
    p.add_argument("--arrow-stride", type=int, default=8)
    p.add_argument("--svg-out", required=True, help="output SVG path")
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
