"""Command-line entry point: generate scenes, train, simulate, and report.

Exit codes: 0 success, 1 usage error, 2 data/config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .fallback import FallbackConfig
from .kinematics import KinematicLimits
from .policy import (
    TrainingConfig,
    evaluate_ade,
    load_params,
    samples_from_scenes,
    save_params,
    train,
)
from .report import (
    load_report_dict,
    plot_event_rates,
    plot_loss_curve,
    plot_trigger_histogram,
    render_report_files,
    write_ade_csv,
    write_comparison_csv,
    write_loss_csv,
)
from .scenario import (
    ScenarioConfig,
    SceneFormatError,
    SceneVersionError,
    generate_suite,
    load_scene,
    save_scene,
)
from .simulator import IdmParams, SimConfig, run_suite

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dataclass_from_dict(cls, data: dict, context: str):
    field_names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - field_names
    if unknown:
        raise DataError(f"unknown key {sorted(unknown)[0]!r} in config section {context!r}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        val = data[f.name]
        if dataclasses.is_dataclass(f.type) if isinstance(f.type, type) else False:
            val = _dataclass_from_dict(f.type, val, f"{context}.{f.name}")
        kwargs[f.name] = val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid config section {context!r}: {exc}") from exc


_SECTION_TYPES = {
    "scenario": ScenarioConfig,
    "training": TrainingConfig,
    "fallback": FallbackConfig,
    "simulator": SimConfig,
}


def load_config(path: str | None) -> dict:
    """Merged run configuration; every field has a default, unknown keys
    are rejected."""
    raw = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise DataError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid config JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError("config file must contain a JSON object")
    unknown = set(raw) - set(_SECTION_TYPES)
    if unknown:
        raise DataError(f"unknown config section {sorted(unknown)[0]!r}")
    out = {}
    for name, cls in _SECTION_TYPES.items():
        section = raw.get(name, {})
        if not isinstance(section, dict):
            raise DataError(f"config section {name!r} must be an object")
        section = dict(section)
        if name == "fallback" and "limits" in section:
            section["limits"] = _dataclass_from_dict(
                KinematicLimits, section["limits"], "fallback.limits"
            )
        if name == "simulator" and "idm" in section:
            section["idm"] = _dataclass_from_dict(IdmParams, section["idm"], "simulator.idm")
        out[name] = _dataclass_from_dict(cls, section, name)
    return out


def _load_scenes(scene_dir: str):
    root = Path(scene_dir)
    if not root.is_dir():
        raise DataError(f"scene directory not found: {scene_dir}")
    paths = sorted(root.glob("*.json"))
    if not paths:
        raise DataError(f"no scene files in {scene_dir}")
    try:
        return [load_scene(p) for p in paths]
    except (SceneFormatError, SceneVersionError) as exc:
        raise DataError(str(exc)) from exc


def _cmd_gen(args) -> int:
    cfg = load_config(args.config)["scenario"]
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if not cfg.counts:
        cfg = dataclasses.replace(cfg, counts={"straight-follow": 4, "lead-vehicle-braking": 4})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenes = generate_suite(cfg)
    for scene in scenes:
        save_scene(scene, out / f"{scene.scene_id}.json")
    print(f"wrote {len(scenes)} scenes to {out}")
    return EXIT_OK


def _nested_fraction(samples, fraction: float, seed: int):
    if not (0.0 < fraction <= 1.0):
        raise DataError(f"data fraction must be in (0, 1], got {fraction}")
    order = np.random.default_rng(seed).permutation(len(samples))
    n = max(1, int(round(fraction * len(samples))))
    return [samples[i] for i in order[:n]]


def _cmd_train(args) -> int:
    sections = load_config(args.config)
    cfg = sections["training"]
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    limits = sections["fallback"].limits
    scenes = _load_scenes(args.scenes)
    samples = samples_from_scenes(scenes, cfg, per_scene=args.samples_per_scene)
    if not samples:
        raise DataError("no training samples could be sliced from the scenes")
    split = max(1, int(0.9 * len(samples)))
    train_set, eval_set = samples[:split], samples[split:]
    train_set = _nested_fraction(train_set, args.data_fraction, cfg.seed)
    params, losses = train(train_set, cfg, limits)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_params(params, out / "weights.bin")
    write_loss_csv(losses, out / "loss.csv")
    plot_loss_curve(losses, out / "loss.png")
    if eval_set:
        ade = evaluate_ade(params, eval_set, cfg=cfg, limits=limits)
        write_ade_csv(ade, out / "ade.csv")
    print(
        f"trained on {len(train_set)} samples "
        f"({args.data_fraction:.0%} of the training split); final loss {losses[-1]:.4f}"
    )
    return EXIT_OK


def _cmd_sim(args) -> int:
    sections = load_config(args.config)
    fallback_cfg = sections["fallback"]
    sim_cfg = sections["simulator"]
    if args.mode is not None:
        sim_cfg = dataclasses.replace(sim_cfg, prediction_mode=args.mode)
    scenes = _load_scenes(args.scenes)
    try:
        params = load_params(args.weights)
    except FileNotFoundError as exc:
        raise DataError(f"weights file not found: {args.weights}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    seed = args.seed if args.seed is not None else 0
    enabled = args.fallback == "on"
    report, results = run_suite(
        scenes,
        params,
        fallback_cfg,
        sim_cfg,
        seed=seed,
        fallback_enabled=enabled,
        workers=args.workers,
        keep_traces=args.traces,
    )
    render_report_files(report, results, args.out, traces=args.traces)
    rates = report.rates_per_1000_miles
    print(
        f"simulated {report.scene_count} scenes, {report.miles:.2f} miles; "
        f"collisions/1k mi {rates['collision']:.1f}, fallback usage {report.fallback_usage:.1%}"
    )
    return EXIT_OK


def _cmd_report(args) -> int:
    reports = {}
    for spec in args.reports:
        if "=" in spec:
            label, path = spec.split("=", 1)
        else:
            label, path = Path(spec).stem, spec
        try:
            reports[label] = load_report_dict(path)
        except FileNotFoundError as exc:
            raise DataError(f"report file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid report JSON in {path}: {exc}") from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_comparison_csv(reports, out / "comparison.csv")
    plot_event_rates(reports, out / "rates.png")
    plot_trigger_histogram(reports, out / "triggers.png")
    print(f"wrote comparison table and figures for {len(reports)} reports to {out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="safeplan", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen", help="generate a synthetic scene suite")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="imitation-train planner weights")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data-fraction", type=float, default=1.0, dest="data_fraction")
    p.add_argument("--samples-per-scene", type=int, default=10)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sim", help="closed-loop simulation over scene files")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scenes", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fallback", choices=("on", "off"), default="on")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument(
        "--mode", choices=("constant-velocity", "log-replay"), default=None
    )
    p.add_argument("--traces", action="store_true")
    p.set_defaults(func=_cmd_sim)

    p = sub.add_parser("report", help="merge sim reports into tables and figures")
    p.add_argument("reports", nargs="+", metavar="LABEL=PATH")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
