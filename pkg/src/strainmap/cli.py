"""Command line front end.

    strainmap default-config                   print every config key with its default
    strainmap analyze FRAME... -c cfg.yaml     per-frame metrics (+ heatmaps)
    strainmap cohort manifest.csv -c cfg.yaml  batch analysis and group statistics
    strainmap suggest-frames FRAME... -c cfg   advisory max-compression picks
    strainmap phantom scene.yaml -o DIR        render a phantom with ground truth
    strainmap synth-cohort recipe.yaml -o DIR  render a labelled synthetic cohort

Exit codes: 0 clean, 2 some frames failed, 3 fatal.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import yaml

from .config import RunConfig
from .gradients import GradientParams
from .model import StrainmapError
from .phantom import CohortRecipe, PhantomScene, cohort_frame_specs, cohort_scene, render
from .pipeline import FrameError, analyze_frame, load_frame, save_frame, suggest_frames
from .report import (
    EXIT_CLEAN,
    EXIT_FATAL,
    EXIT_PARTIAL,
    FrameRecord,
    ManifestRow,
    plot_frame,
    record_from_result,
    run_cohort,
    write_frames_csv,
    write_manifest,
)

log = logging.getLogger("strainmap")


def _load_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "workers", None):
        config = config.with_overrides(workers=args.workers)
    if getattr(args, "heatmaps", False):
        config = config.with_overrides(heatmaps=True)
    return config


def _read_yaml(path) -> dict:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise StrainmapError(f"{path}: top level must be a mapping")
    return data


def cmd_default_config(args) -> int:
    sys.stdout.write(yaml.safe_dump(RunConfig().to_dict(), sort_keys=False))
    return EXIT_CLEAN


def cmd_analyze(args) -> int:
    config = _load_config(args)
    out = Path(args.output or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.dump(out / "config.yaml")
    bmodes = args.bmode or []
    if bmodes and len(bmodes) != len(args.frames):
        raise StrainmapError("--bmode must be given once per frame")
    records = []
    for i, path in enumerate(args.frames):
        try:
            frame = load_frame(path, bmodes[i] if bmodes else None)
            result = analyze_frame(frame, config, path=path)
        except FrameError as exc:
            log.error("%s", exc)
            records.append(FrameRecord(None, str(path), error=f"{exc.kind}: {exc}"))
            continue
        except StrainmapError as exc:
            log.error("%s: %s", path, exc)
            records.append(FrameRecord(None, str(path), error=f"{type(exc).__name__}: {exc}"))
            continue
        records.append(record_from_result(None, str(path), result))
        if config.heatmaps:
            plot_frame(result, out / Path(path).stem)
    write_frames_csv(records, out / "frames.csv")
    return EXIT_PARTIAL if any(not r.ok for r in records) else EXIT_CLEAN


def cmd_cohort(args) -> int:
    config = _load_config(args)
    report = run_cohort(args.manifest, config, args.output)
    for row in report.comparisons:
        mark = "*" if row.significant else " "
        print(f"{mark} {row.site.value:<14} {row.metric.value:<8} t={row.t:+.3f} "
              f"df={row.df:.1f} p={row.p_two_tailed:.4f} eta2={row.eta_squared:.3f}")
    return report.exit_code


def cmd_suggest(args) -> int:
    config = _load_config(args)
    frames = [load_frame(p) for p in args.frames]
    picks = suggest_frames(frames, args.k, config)
    for i in picks:
        print(f"{i}\t{args.frames[i]}")
    return EXIT_CLEAN


def cmd_phantom(args) -> int:
    scene = PhantomScene.from_dict(_read_yaml(args.scene))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    frame, truth = render(scene)
    save_frame(frame, out / "frame.png", out / "bmode.png")
    truth.save(out / "truth")
    RunConfig(colorbar=truth.colorbar_roi).dump(out / "config.yaml")
    print(out / "frame.png")
    return EXIT_CLEAN


def cmd_synth_cohort(args) -> int:
    recipe = CohortRecipe.from_dict(_read_yaml(args.recipe))
    out = Path(args.output)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    rows, roi = [], None
    with (out / "targets.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subject_id", "group", "site", "frame_index", "target_gx", "target_gy"])
        for spec in cohort_frame_specs(recipe):
            m = spec.meta
            frame, truth = render(cohort_scene(recipe, spec))
            roi = truth.colorbar_roi
            path = out / "frames" / f"{m.subject_id}_{m.site.value}_{m.frame_index}.png"
            save_frame(frame, path)
            rows.append(ManifestRow(m, path))
            writer.writerow([m.subject_id, m.group.value, m.site.value, m.frame_index,
                             f"{spec.target_gx:.10g}", f"{spec.target_gy:.10g}"])
    write_manifest(rows, out / "manifest.csv")
    RunConfig(
        colorbar=roi,
        gradients=GradientParams(spacing_x=recipe.spacing_x, spacing_y=recipe.spacing_y),
    ).dump(out / "config.yaml")
    print(out / "manifest.csv")
    return EXIT_CLEAN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strainmap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("default-config", help="print the default run config")
    p.set_defaults(func=cmd_default_config)

    p = sub.add_parser("analyze", help="analyse individual frames")
    p.add_argument("frames", nargs="+")
    p.add_argument("-c", "--config")
    p.add_argument("-o", "--output")
    p.add_argument("--bmode", action="append", help="B-mode still, once per frame, in order")
    p.add_argument("--heatmaps", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("cohort", help="analyse a cohort manifest and compare groups")
    p.add_argument("manifest")
    p.add_argument("-c", "--config")
    p.add_argument("-o", "--output")
    p.add_argument("-j", "--workers", type=int)
    p.add_argument("--heatmaps", action="store_true")
    p.set_defaults(func=cmd_cohort)

    p = sub.add_parser("suggest-frames", help="suggest maximally compressed frames")
    p.add_argument("frames", nargs="+")
    p.add_argument("-c", "--config")
    p.add_argument("-k", type=int, default=3)
    p.set_defaults(func=cmd_suggest)

    p = sub.add_parser("phantom", help="render a phantom scene with ground truth")
    p.add_argument("scene")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("synth-cohort", help="render a synthetic cohort and its manifest")
    p.add_argument("recipe")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth_cohort)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (StrainmapError, OSError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
