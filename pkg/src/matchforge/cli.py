"""Command-line entry points.

Subcommands: label (run the self-labeling pipeline on a frame directory),
propagate (re-run propagation from cached base labels), augment (add
perspective warps to an emitted dataset), evaluate (score matchers on
datasets), rank (aggregate reports into a mean-rank table).

Exit codes: 0 success, 2 configuration error, 3 partial failure (some pairs
dropped), 4 fatal IO error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import benchmark, pipeline
from .correspondence import read_interchange
from .errors import ConfigError, MatchForgeError
from .estimation import RansacConfig
from .matchers import MatcherKind, MatcherSpec
from .pipeline import AugmentConfig, PipelineConfig, TrainingPair
from .seeding import derive_seed

log = logging.getLogger("matchforge")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3
EXIT_IO = 4


def _parse_method(text: str) -> MatcherSpec:
    """Method spec: JSON object, or shorthand kind[:name][:k=v,k=v...]."""
    if text.strip().startswith("{"):
        data = json.loads(text)
        return MatcherSpec(
            MatcherKind(data["kind"]), data.get("name", data["kind"]), data.get("params", {})
        )
    parts = text.split(":", 2)
    kind = MatcherKind(parts[0])
    name = parts[1] if len(parts) > 1 and parts[1] else parts[0]
    params: dict[str, object] = {}
    if len(parts) > 2 and parts[2]:
        for item in parts[2].split(","):
            key, _, value = item.partition("=")
            try:
                params[key] = json.loads(value)
            except json.JSONDecodeError:
                params[key] = value
    return MatcherSpec(kind, name, params)


def _load_pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        config = PipelineConfig.from_dict(data)
    else:
        config = PipelineConfig(
            matchers=(MatcherSpec(MatcherKind.BUILTIN, "builtin"),)
        )
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.parallelism is not None:
        config = replace(config, parallelism=args.parallelism)
    if args.min_corrs is not None:
        config = replace(config, min_correspondences=args.min_corrs)
    if getattr(args, "no_augment", False):
        config = replace(config, augmentation=replace(config.augmentation, enabled=False))
    return config


def _add_common_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON pipeline configuration")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallelism", type=int, default=None)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--min-corrs", type=int, default=None)


def cmd_label(args: argparse.Namespace) -> int:
    config = _load_pipeline_config(args)
    run = pipeline.run_label_pipeline(args.frames, config, output_dir=args.out)
    log.info(
        "emitted %d training pairs to %s", len(run.training_pairs), run.manifest_path
    )
    return EXIT_PARTIAL if run.partial else EXIT_OK


def cmd_propagate(args: argparse.Namespace) -> int:
    config = _load_pipeline_config(args)
    run = pipeline.rerun_propagation(args.base, config, args.out)
    log.info("emitted %d training pairs to %s", len(run.training_pairs), run.manifest_path)
    return EXIT_OK


def cmd_augment(args: argparse.Namespace) -> int:
    config = _load_pipeline_config(args)
    manifest = json.loads((Path(args.dataset) / pipeline.MANIFEST_NAME).read_text())
    if manifest.get("partial"):
        raise ConfigError("refusing to augment a partial dataset")
    frame_size = tuple(manifest["frame_size"])
    video = manifest["video"]
    pairs = []
    for entry in manifest["pairs"]:
        corrs = read_interchange(Path(args.dataset) / entry["file"])
        pairs.append(TrainingPair(corrs, entry["provenance"]["depth"]))
    augmented = pipeline.augment_pairs(
        pairs,
        replace(config, augmentation=replace(config.augmentation, enabled=True)),
        frame_size,
    )
    pipeline.emit_dataset(augmented, Path(args.out), config, video, frame_size)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    methods = [_parse_method(m) for m in args.method]
    if not methods:
        raise ConfigError("at least one --method is required")
    datasets = {}
    for d in args.dataset:
        name, pairs = benchmark.load_dataset(d)
        if args.per_bin:
            pairs = benchmark.sample_eval_pairs(
                pairs, per_bin=args.per_bin, seed=derive_seed(args.seed, name)
            )
        datasets[name] = pairs
    cfg = benchmark.BenchmarkConfig(
        ransac=RansacConfig(threshold=args.ransac_threshold),
        seed=args.seed,
        match_points=args.points,
    )
    table = benchmark.run_benchmark(datasets, methods, cfg)
    print(table.render_text())
    if args.report:
        Path(args.report).write_text(
            json.dumps(table.to_report_rows(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        log.info("wrote report to %s", args.report)
    return EXIT_OK


def cmd_rank(args: argparse.Namespace) -> int:
    rows = []
    for path in args.reports:
        rows.extend(json.loads(Path(path).read_text(encoding="utf-8")))
    if not rows:
        raise ConfigError("no report rows found")
    methods = sorted({r["method"] for r in rows})
    datasets = sorted({r["dataset"] for r in rows})
    grid = np.full((len(methods), len(datasets)), np.nan)
    cells = {}
    for r in rows:
        i, j = methods.index(r["method"]), datasets.index(r["dataset"])
        grid[i, j] = r["auc5"]
        cells[(i, j)] = r
    table = benchmark.ScoreTable(
        methods,
        datasets,
        auc5=grid,
        auc10=np.array(
            [[cells.get((i, j), {}).get("auc10", 0.0) for j in range(len(datasets))] for i in range(len(methods))]
        ),
        auc20=np.array(
            [[cells.get((i, j), {}).get("auc20", 0.0) for j in range(len(datasets))] for i in range(len(methods))]
        ),
        n_pairs=np.array(
            [[cells.get((i, j), {}).get("n_pairs", 0) for j in range(len(datasets))] for i in range(len(methods))]
        ),
        n_failures=np.array(
            [[cells.get((i, j), {}).get("n_failures", 0) for j in range(len(datasets))] for i in range(len(methods))]
        ),
    )
    print(table.render_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matchforge",
        description="Video correspondence self-labeling and matcher benchmarking",
    )
    parser.add_argument("--log-level", default="warning")
    sub = parser.add_subparsers(dest="command", required=True)

    p_label = sub.add_parser("label", help="run the labeling pipeline on a frame directory")
    p_label.add_argument("--frames", type=Path, required=True, help="directory of %%08d.pgm frames")
    _add_common_pipeline_flags(p_label)
    p_label.set_defaults(func=cmd_label)

    p_prop = sub.add_parser("propagate", help="re-run propagation from cached base labels")
    p_prop.add_argument("--base", type=Path, required=True, help="base-label cache directory")
    _add_common_pipeline_flags(p_prop)
    p_prop.set_defaults(func=cmd_propagate)

    p_aug = sub.add_parser("augment", help="add perspective warps to an emitted dataset")
    p_aug.add_argument("--dataset", type=Path, required=True, help="emitted dataset directory")
    _add_common_pipeline_flags(p_aug)
    p_aug.set_defaults(func=cmd_augment)

    p_eval = sub.add_parser("evaluate", help="score matchers on normalized datasets")
    p_eval.add_argument("--dataset", type=Path, action="append", required=True)
    p_eval.add_argument("--method", action="append", required=True)
    p_eval.add_argument("--ransac-threshold", type=float, default=2.0)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--per-bin", type=int, default=0, help="sample N pairs per overlap bin (0 = all)")
    p_eval.add_argument("--points", type=int, default=500, help="synthetic matches per pair")
    p_eval.add_argument("--report", type=Path, help="write a JSON report here")
    p_eval.set_defaults(func=cmd_evaluate)

    p_rank = sub.add_parser("rank", help="aggregate JSON reports into a mean-rank table")
    p_rank.add_argument("--reports", type=Path, nargs="+", required=True)
    p_rank.set_defaults(func=cmd_rank)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=args.log_level.upper())
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (ValueError, json.JSONDecodeError) as exc:
        log.error("bad input: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("io failure: %s", exc)
        return EXIT_IO
    except MatchForgeError as exc:
        log.error("run failed: %s", exc)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
