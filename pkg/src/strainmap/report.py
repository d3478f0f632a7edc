"""Cohort manifests, batch runs and every file the CLI writes.

Output layout of a cohort run::

    <out>/config.yaml          exact RunConfig used
    <out>/frames.csv           one row per manifest row (FRAME_COLUMNS)
    <out>/comparisons.csv      one row per site x metric (COMPARISON_COLUMNS)
    <out>/cohort.json          schema-versioned summary incl. comparisons
    <out>/plots/<metric>.png   group means with 95% CI bars, * = p < 0.05
    <out>/run.log              timestamps and warnings (not deterministic)
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig
from .model import (
    AllFramesFailed,
    EmptyManifest,
    FrameMeta,
    Group,
    GroupComparison,
    Metric,
    Site,
    StrainmapError,
)
from .pipeline import FrameError, FrameMetrics, FrameResult, analyze_frame, load_frame
from .stats import cohort_analysis

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXIT_CLEAN, EXIT_PARTIAL, EXIT_FATAL = 0, 2, 3

MANIFEST_COLUMNS = ("subject_id", "group", "site", "frame_path", "frame_index")
FRAME_COLUMNS = (
    "subject_id", "site", "group", "frame_index", "frame_path", "status", "error",
    "total_gx", "total_gy", "total_gr", "n_valid_pixels", "column_exclusion_count",
)
COMPARISON_COLUMNS = (
    "site", "metric", "group_a", "group_b", "n_a", "n_b", "mean_a", "mean_b",
    "ci95_a", "ci95_b", "t", "df", "p_two_tailed", "eta_squared", "welch",
    "degenerate", "significant", "error",
)


class ManifestError(StrainmapError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    meta: FrameMeta
    frame_path: Path
    bmode_path: Optional[Path] = None


def read_manifest(path) -> list[ManifestRow]:
    """Parse a comma- or tab-delimited manifest with a header row.

    Relative paths resolve against the manifest's directory. An optional
    ``bmode_path`` column pairs each frame with its B-mode still.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8-sig")
    if not text.strip():
        raise EmptyManifest(f"{path} is empty")
    try:
        dialect = csv.Sniffer().sniff(text.splitlines()[0], delimiters=",\t")
    except csv.Error:
        dialect = csv.excel
    reader = csv.DictReader(text.splitlines(), dialect=dialect)
    missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ManifestError(f"{path}: missing column(s) {', '.join(missing)}")

    rows, seen = [], set()
    for lineno, rec in enumerate(reader, start=2):
        try:
            meta = FrameMeta(
                subject_id=rec["subject_id"].strip(),
                site=Site(rec["site"].strip()),
                group=Group(rec["group"].strip()),
                frame_index=int(rec["frame_index"]),
            )
        except (ValueError, AttributeError) as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
        key = (meta.subject_id, meta.site, meta.frame_index)
        if key in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate subject/site/frame_index {key}")
        seen.add(key)
        bmode = (rec.get("bmode_path") or "").strip()
        rows.append(
            ManifestRow(
                meta=meta,
                frame_path=path.parent / rec["frame_path"].strip(),
                bmode_path=path.parent / bmode if bmode else None,
            )
        )
    if not rows:
        raise EmptyManifest(f"{path} has no frame rows")
    return rows


def write_manifest(rows: list[ManifestRow], path, relative_to=None) -> Path:
    path = Path(path)
    base = Path(relative_to) if relative_to else path.parent
    with_bmode = any(r.bmode_path for r in rows)
    columns = MANIFEST_COLUMNS + (("bmode_path",) if with_bmode else ())
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            rec = [r.meta.subject_id, r.meta.group.value, r.meta.site.value,
                   os.path.relpath(r.frame_path, base), r.meta.frame_index]
            if with_bmode:
                rec.append(os.path.relpath(r.bmode_path, base) if r.bmode_path else "")
            writer.writerow(rec)
    return path


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.10g}"
    return str(value)


@dataclass
class FrameRecord:
    meta: Optional[FrameMeta]
    frame_path: str
    metrics: Optional[FrameMetrics] = None
    n_valid_pixels: int = 0
    column_exclusion_count: int = 0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def csv_row(self) -> list[str]:
        m, meta = self.metrics, self.meta
        return [_fmt(v) for v in (
            meta.subject_id if meta else None,
            meta.site.value if meta else None,
            meta.group.value if meta else None,
            meta.frame_index if meta else None,
            self.frame_path, "ok" if self.ok else "failed",
            self.error,
            m.total_gx if m else None, m.total_gy if m else None, m.total_gr if m else None,
            self.n_valid_pixels if self.ok else None,
            self.column_exclusion_count if self.ok else None,
        )]


def record_from_result(meta: FrameMeta, path: str, result: FrameResult) -> FrameRecord:
    return FrameRecord(
        meta=meta, frame_path=path, metrics=result.metrics,
        n_valid_pixels=result.n_valid_pixels,
        column_exclusion_count=result.column_exclusion_count,
    )


def write_frames_csv(records: list[FrameRecord], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FRAME_COLUMNS)
        for rec in records:
            writer.writerow(rec.csv_row())
    return path


def write_comparisons_csv(rows: list[GroupComparison], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COMPARISON_COLUMNS)
        for row in rows:
            d = row.as_dict()
            writer.writerow([_fmt(d[c]) if not isinstance(d[c], str) else d[c] for c in COMPARISON_COLUMNS])
    return path


def write_cohort_json(
    rows: list[GroupComparison],
    records: list[FrameRecord],
    config: RunConfig,
    path,
    skipped_sites: list[str],
) -> Path:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "frames": {
            "total": len(records),
            "ok": sum(r.ok for r in records),
            "failed": sum(not r.ok for r in records),
        },
        "welch": config.stats.welch,
        "report_as_stiffness": config.stats.report_as_stiffness,
        "anterior_at": config.anterior_at.value,
        "skipped_sites": skipped_sites,
        "comparisons": [r.as_dict() for r in rows],
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


# --- plots -----------------------------------------------------------------

_METRIC_TITLES = {
    Metric.TotalGx: "Anterior-posterior gradient",
    Metric.TotalGy: "Superior-inferior gradient",
    Metric.TotalGr: "Oblique gradient",
}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_comparison_bars(rows: list[GroupComparison], metric: Metric, path) -> Path:
    """Grouped bars per site with 95% CI whiskers; significant sites get a star."""
    plt = _pyplot()
    sel = [r for r in rows if r.metric is metric and r.error is None]
    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(sel))
    w = 0.38
    if sel:
        ax.bar(x - w / 2, [r.mean_a for r in sel], w, yerr=[r.ci95_a for r in sel],
               capsize=4, label=sel[0].group_a.value, color="#4c72b0")
        ax.bar(x + w / 2, [r.mean_b for r in sel], w, yerr=[r.ci95_b for r in sel],
               capsize=4, label=sel[0].group_b.value, color="#dd8452")
        for xi, r in zip(x, sel):
            if r.significant:
                top = max(r.mean_a + r.ci95_a, r.mean_b + r.ci95_b)
                ax.annotate("*", (xi, top), ha="center", va="bottom", fontsize=16)
        ax.legend(frameon=False)
    ax.axhline(0, color="0.3", lw=0.8)
    ax.set_xticks(x, [r.site.value for r in sel])
    ax.set_title(_METRIC_TITLES[metric])
    ax.set_ylabel(metric.value)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_frame(result: FrameResult, prefix) -> list[Path]:
    """RS heatmap, oblique-gradient heatmap, and RS map framed by the gx row
    means (right) and gy column means (top)."""
    plt = _pyplot()
    prefix = Path(prefix)
    out = []
    rs = np.where(result.rs.valid, result.rs.values, np.nan)

    for name, data, cmap in (("rs", rs, "viridis"), ("gr", result.field.gr, "magma")):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        im = ax.imshow(data, cmap=cmap, interpolation="nearest")
        fig.colorbar(im, ax=ax, label=name.upper())
        ax.set_axis_off()
        path = prefix.with_name(f"{prefix.name}_{name}.png")
        fig.savefig(path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        out.append(path)

    fig = plt.figure(figsize=(7, 5.5))
    grid = fig.add_gridspec(2, 2, width_ratios=(5, 1), height_ratios=(1, 4), wspace=0.05, hspace=0.05)
    ax_main = fig.add_subplot(grid[1, 0])
    ax_top = fig.add_subplot(grid[0, 0], sharex=ax_main)
    ax_right = fig.add_subplot(grid[1, 1], sharey=ax_main)
    ax_main.imshow(rs, cmap="viridis", aspect="auto", interpolation="nearest")
    ax_top.plot(np.arange(rs.shape[1]), result.field.col_mean_gy, lw=0.8)
    ax_top.set_ylabel("mean Gy")
    ax_right.plot(result.field.row_mean_gx, np.arange(rs.shape[0]), lw=0.8)
    ax_right.set_xlabel("mean Gx")
    ax_top.tick_params(labelbottom=False)
    ax_right.tick_params(labelleft=False)
    path = prefix.with_name(f"{prefix.name}_strips.png")
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    out.append(path)
    return out


# --- batch run --------------------------------------------------------------


def _analyze_row(args) -> FrameRecord:
    row, config, plot_prefix = args
    try:
        frame = load_frame(row.frame_path, row.bmode_path, row.meta)
        result = analyze_frame(frame, config, path=row.frame_path)
    except FrameError as exc:
        return FrameRecord(row.meta, str(row.frame_path), error=f"{exc.kind}: {exc}")
    except StrainmapError as exc:
        return FrameRecord(row.meta, str(row.frame_path), error=f"{type(exc).__name__}: {exc}")
    if plot_prefix is not None:
        plot_frame(result, plot_prefix)
    return record_from_result(row.meta, str(row.frame_path), result)


@dataclass
class CohortReport:
    records: list[FrameRecord]
    comparisons: list[GroupComparison] = field(default_factory=list)
    skipped_sites: list[str] = field(default_factory=list)
    exit_code: int = EXIT_CLEAN
    output_dir: Optional[Path] = None

    @property
    def failed(self) -> list[FrameRecord]:
        return [r for r in self.records if not r.ok]


def _attach_run_log(out: Path) -> logging.Handler:
    handler = logging.FileHandler(out / "run.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logging.getLogger("strainmap").addHandler(handler)
    logging.getLogger("strainmap").setLevel(logging.INFO)
    return handler


def run_cohort(manifest, config: RunConfig, output_dir=None) -> CohortReport:
    """Analyse every manifest frame, then compare groups per site.

    Raises :class:`EmptyManifest` / :class:`AllFramesFailed` for fatal
    conditions; per-frame failures are recorded and reflected in
    ``exit_code`` (2).
    """
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    handler = _attach_run_log(out)
    try:
        config.dump(out / "config.yaml")
        rows = read_manifest(manifest)
        log.info("analysing %d frames from %s", len(rows), manifest)
        config.require_colorbar()

        plot_dir = out / "frames" if config.heatmaps else None
        if plot_dir is not None:
            plot_dir.mkdir(exist_ok=True)
        jobs = [
            (row, config, plot_dir / f"{row.meta.subject_id}_{row.meta.site.value}_{row.meta.frame_index}" if plot_dir else None)
            for row in rows
        ]
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                records = list(pool.map(_analyze_row, jobs, chunksize=4))
        else:
            records = [_analyze_row(job) for job in jobs]

        for rec in records:
            if not rec.ok:
                log.warning("frame failed: %s", rec.error)
        write_frames_csv(records, out / "frames.csv")
        report = CohortReport(records=records, output_dir=out)
        if not any(r.ok for r in records):
            raise AllFramesFailed(f"all {len(records)} frames failed")

        ok = [(r.meta, r.metrics) for r in records if r.ok]
        report.comparisons = cohort_analysis(ok, welch=config.stats.welch)
        compared = {r.site.value for r in report.comparisons}
        report.skipped_sites = sorted({m.site.value for m, _ in ok} - compared)
        if not report.comparisons:
            log.warning("no site has frames from both groups; statistics skipped")

        write_comparisons_csv(report.comparisons, out / "comparisons.csv")
        write_cohort_json(report.comparisons, records, config, out / "cohort.json", report.skipped_sites)
        if report.comparisons:
            (out / "plots").mkdir(exist_ok=True)
            for metric in Metric:
                plot_comparison_bars(report.comparisons, metric, out / "plots" / f"{metric.value}.png")
        report.exit_code = EXIT_PARTIAL if report.failed else EXIT_CLEAN
        log.info("done: %d ok, %d failed", len(ok), len(report.failed))
        return report
    finally:
        logging.getLogger("strainmap").removeHandler(handler)
        handler.close()
