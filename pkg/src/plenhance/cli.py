"""Command-line interface: enhance, eval, synth, compare.

Exit codes: 0 success, 1 validation/data error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from . import __version__, io_formats, synth_gen
from .errors import PLEError
from .eval_metrics import (
    LabelStats,
    aggregate_stats,
    compute_increment,
    compute_stats,
    format_stats_table,
)
from .pipeline import enhance_scene
from .types import EnhancementConfig


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plenhance",
        description="Densify sparse 3D pseudo-labels from 2D segmentation masks.",
    )
    parser.add_argument("--version", action="version", version=f"plenhance {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="enhance one scene's labels")
    p.add_argument("--points", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--method", choices=["gapp", "dp"], default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("eval", help="score labels against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--before", default=None)
    p.add_argument("--json", action="store_true", dest="as_json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate synthetic scenes")
    p.add_argument("--spec", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-scenes", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("compare", help="run the DP / DP+MF / MF+GAPP ablations")
    p.add_argument("--scenes", required=True, help="scene manifest path")
    p.add_argument("--gt-available", action="store_true", required=True)
    p.add_argument("--json", action="store_true", dest="as_json")
    p.set_defaults(func=cmd_compare)

    return parser


def _scene_id_from(points_path: str) -> str:
    stem = Path(points_path).stem
    return stem[: -len("_points")] if stem.endswith("_points") else stem


def _pct2(x: float) -> float:
    return round(100.0 * x, 2)


def cmd_enhance(args: argparse.Namespace) -> int:
    config = io_formats.read_config(args.config) if args.config else EnhancementConfig()
    if args.method:
        config = config.with_method(args.method)
    cloud = io_formats.read_points(args.points)
    labels = io_formats.read_labels(args.labels)
    masks = io_formats.read_masks(args.masks)
    camera = io_formats.read_calibration(args.calib)
    enhanced, report = enhance_scene(cloud, labels, masks, camera, config)
    io_formats.write_labels(args.out, enhanced)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(
        f"scene={_scene_id_from(args.points)} "
        f"labels_before={report.labels_before} labels_after={report.labels_after} "
        f"masks_assigned={report.masks_assigned} masks_ignored={report.masks_ignored}"
    )
    return 0


def _eval_payload(stats: LabelStats, increment: Optional[float]) -> dict:
    payload = {
        "per_class_accuracy": {
            str(c): (None if a is None else _pct2(a))
            for c, a in stats.per_class_accuracy.items()
        },
        "avg_accuracy": _pct2(stats.avg_accuracy),
        "avg_accuracy_defined": stats.avg_accuracy_defined,
        "coverage": _pct2(stats.coverage),
        "total_correct": stats.total_correct,
        "total_predicted": stats.total_predicted,
    }
    if increment is not None:
        payload["total_increment"] = round(increment, 2)
    return payload


def cmd_eval(args: argparse.Namespace) -> int:
    pred = io_formats.read_labels(args.pred)
    gt = io_formats.read_labels(args.gt)
    stats = compute_stats(pred, gt)
    increment = None
    if args.before:
        before = compute_stats(io_formats.read_labels(args.before), gt)
        increment = compute_increment(before, stats)
    if args.as_json:
        print(json.dumps(_eval_payload(stats, increment), indent=2))
        return 0
    for c, acc in stats.per_class_accuracy.items():
        shown = "n/a" if acc is None else f"{_pct2(acc):.2f}"
        print(f"acc[{c}] = {shown}")
    print(f"Avg. Acc. = {_pct2(stats.avg_accuracy):.2f}")
    print(f"coverage = {_pct2(stats.coverage):.2f}")
    if increment is not None:
        print(f"Total Inc. = {increment:+.2f}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = synth_gen.read_scene_spec(args.spec) if args.spec else synth_gen.SceneSpec()
    if args.n_scenes < 0:
        print("error: --n-scenes must be >= 0", file=sys.stderr)
        return 2
    base_seed = args.seed if args.seed is not None else spec.rng_seed
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    from dataclasses import replace

    for k in range(args.n_scenes):
        seed = base_seed + k
        scene = synth_gen.generate_scene(replace(spec, rng_seed=seed))
        entries.append(synth_gen.write_scene(scene, out_dir, f"scene_{seed:06d}"))
    io_formats.write_manifest(out_dir / "manifest.json", entries)
    print(f"wrote {len(entries)} scenes to {out_dir}")
    return 0


_ABLATIONS = (
    ("dp_no_mf", "dp", False),
    ("dp_mf", "dp", True),
    ("mf_gapp", "gapp", True),
)


def cmd_compare(args: argparse.Namespace) -> int:
    manifest_path = Path(args.scenes)
    entries = io_formats.read_manifest(manifest_path)
    if not entries:
        print("no scenes")
        return 0
    missing = [e.scene_id for e in entries if e.gt_labels is None]
    if missing:
        print(f"error: {manifest_path}: scenes without ground truth: {missing}", file=sys.stderr)
        return 1
    entries = sorted(entries, key=lambda e: e.scene_id)

    base_dir = manifest_path.parent
    baseline_parts: list[LabelStats] = []
    ablation_parts: dict[str, list[LabelStats]] = {name: [] for name, _, _ in _ABLATIONS}
    for entry in entries:
        cloud, labels, masks, camera, gt = io_formats.load_scene(entry, base_dir)
        baseline_parts.append(compute_stats(labels, gt))
        for name, method, with_mf in _ABLATIONS:
            config = EnhancementConfig(method=method)
            enhanced, _ = enhance_scene(
                cloud, labels, masks, camera, config, apply_mask_filtering=with_mf
            )
            ablation_parts[name].append(compute_stats(enhanced, gt))

    baseline = aggregate_stats(baseline_parts)
    rows = [("baseline", baseline, None)]
    for name, _, _ in _ABLATIONS:
        stats = aggregate_stats(ablation_parts[name])
        rows.append((name, stats, compute_increment(baseline, stats)))

    if args.as_json:
        payload = {
            name: _eval_payload(stats, increment) for name, stats, increment in rows
        }
        print(json.dumps(payload, indent=2))
    else:
        print(format_stats_table(rows, num_classes=baseline.num_classes))
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (PLEError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
