"""Command-line entry point: somqe synth|simulate|train|score|analyze|run-all.

Every subcommand accepts --config (JSON, see README for the schema), --seed,
--scale desk|full, and --out; flags override config file values. Exit code 0
on success; errors print one line to stderr prefixed with `somqe: error:`
and exit 2 for configuration or validation problems, 1 otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .pipeline import (
    ConditionSpec,
    PipelineConfig,
    default_config,
    default_ground_truth_spec,
    run_all,
    stage_analyze,
    stage_score,
    stage_simulate,
    stage_synth,
    stage_train,
)
from .raster import GrayLevel, ImageFormatError
from .simulate import GroundTruthSpec
from .som import ModelFormatError, SomConfig


def _ground_truth_from_dict(data: dict, scale: str) -> GroundTruthSpec:
    base = default_ground_truth_spec(scale)
    kwargs = dict(
        width=data.get("width", base.width),
        height=data.get("height", base.height),
        cx=data.get("cx", base.cx),
        cy=data.get("cy", base.cy),
        ring_radii=tuple(data.get("ring_radii", base.ring_radii)),
        background=GrayLevel.from_name(data["background"])
        if "background" in data
        else base.background,
        seed=data.get("seed", base.seed),
        ring_textures=tuple(data.get("ring_textures", base.ring_textures)),
        background_texture=data.get("background_texture", base.background_texture),
        speckle_density=data.get("speckle_density", base.speckle_density),
        speckle_level=GrayLevel.from_name(data["speckle_level"])
        if "speckle_level" in data
        else base.speckle_level,
    )
    if "ring_levels" in data:
        kwargs["ring_levels"] = tuple(GrayLevel.from_name(n) for n in data["ring_levels"])
    else:
        kwargs["ring_levels"] = base.ring_levels
    return GroundTruthSpec(**kwargs)


def _conditions_from_list(items: list[dict]) -> tuple[ConditionSpec, ...]:
    conditions = []
    for item in items:
        conditions.append(
            ConditionSpec(
                source=GrayLevel.from_name(item["source"]),
                target=GrayLevel.from_name(item["target"]),
                steps=int(item.get("steps", ConditionSpec.steps)),
                direction_tag=item.get("direction", "infection"),
            )
        )
    return tuple(conditions)


def load_config(path, scale_override=None, seed_override=None, out_override=None) -> PipelineConfig:
    """Build a PipelineConfig from defaults, an optional JSON file, and flags."""
    data = {}
    if path is not None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("config file must contain a JSON object")
    scale = scale_override or data.get("scale", "desk")
    cfg = default_config(scale=scale)
    seed = seed_override if seed_override is not None else data.get("seed", cfg.seed)
    out_dir = Path(out_override or data.get("out_dir", cfg.out_dir))
    ground_truth = _ground_truth_from_dict(data.get("ground_truth", {}), scale)
    som_kwargs = dict(data.get("som", {}))
    som = SomConfig(**{**SomConfig().__dict__, **som_kwargs})
    conditions = (
        _conditions_from_list(data["conditions"]) if "conditions" in data else cfg.conditions
    )
    cfg = PipelineConfig(
        seed=int(seed),
        scale=scale,
        out_dir=out_dir,
        ground_truth=ground_truth,
        som=som,
        conditions=conditions,
    )
    cfg.validate()
    return cfg


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON pipeline config file")
    parser.add_argument("--seed", type=int, help="global seed (overrides config)")
    parser.add_argument("--scale", choices=["desk", "full"], help="geometry preset")
    parser.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="somqe",
        description="Map-based quantization-error change detection pipeline for "
        "simulated cell-image series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("synth", "synthesize the ground-truth image"),
        ("simulate", "generate every condition's change series"),
        ("train", "train the map on the ground truth and save the model"),
        ("score", "score all images with the trained model"),
        ("analyze", "fit, test, and summarize the scored series"),
        ("run-all", "run every stage in order"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name in ("score", "run-all"):
            p.add_argument("--workers", type=int, default=1, help="parallel scoring workers")
        if name == "score":
            p.add_argument(
                "--qe-units",
                choices=["unit", "255"],
                default="unit",
                help="report QE in [0,1] channel units (default) or 8-bit units",
            )
        if name in ("analyze", "run-all"):
            p.add_argument("--svg", action="store_true", help="also write an SVG plot")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.scale, args.seed, args.out)
        if args.command == "synth":
            path = stage_synth(cfg)
            print(f"wrote {path}")
        elif args.command == "simulate":
            for path in stage_simulate(cfg):
                print(f"wrote {path}")
        elif args.command == "train":
            print(f"wrote {stage_train(cfg)}")
        elif args.command == "score":
            scale = 255.0 if args.qe_units == "255" else 1.0
            for path in stage_score(cfg, workers=args.workers, qe_scale=scale):
                print(f"wrote {path}")
        elif args.command == "analyze":
            print(f"wrote {stage_analyze(cfg, svg=args.svg)}")
            print((Path(cfg.out_dir) / "summary.txt").read_text(encoding="utf-8"))
        elif args.command == "run-all":
            run_all(cfg, workers=args.workers, svg=args.svg)
            print((Path(cfg.out_dir) / "summary.txt").read_text(encoding="utf-8"))
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"somqe: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, ImageFormatError, ModelFormatError) as exc:
        print(f"somqe: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
