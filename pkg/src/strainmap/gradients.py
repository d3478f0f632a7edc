"""Directional RS gradients and their row/column/total aggregates.

The differences are backward ones (each cell minus its left or upper
neighbour), which is what the defining formulas literally compute even though
they are usually described as right differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import EmptyField, GradientField, NoAggregableData, RSMap


@dataclass(frozen=True)
class GradientParams:
    spacing_x: float = 1.0
    spacing_y: float = 1.0
    agg_min_count: int = 5

    def __post_init__(self):
        if self.spacing_x <= 0 or self.spacing_y <= 0:
            raise ValueError("spacings must be positive")
        if self.agg_min_count < 1:
            raise ValueError("agg_min_count must be >= 1")


def gradient_field(rs: RSMap, spacing_x: float = 1.0, spacing_y: float = 1.0) -> GradientField:
    if not rs.valid.any():
        raise EmptyField("RS map has no valid pixels")
    v = np.where(rs.valid, rs.values, np.nan)
    # NaN propagation gives exactly the "both neighbours valid" rule
    gx = np.full(v.shape, np.nan)
    gy = np.full(v.shape, np.nan)
    gx[:, 1:] = (v[:, 1:] - v[:, :-1]) / spacing_x
    gy[1:, :] = (v[1:, :] - v[:-1, :]) / spacing_y
    gr = np.sqrt(gx ** 2 + gy ** 2)
    return GradientField(gx=gx, gy=gy, gr=gr, spacing_x=spacing_x, spacing_y=spacing_y)


def _masked_mean(values: np.ndarray, axis: int, min_count: int) -> np.ndarray:
    ok = ~np.isnan(values)
    counts = ok.sum(axis=axis)
    sums = np.where(ok, values, 0.0).sum(axis=axis)
    out = np.full(counts.shape, np.nan)
    enough = counts >= min_count
    out[enough] = sums[enough] / counts[enough]
    return out


def _mean_defined(values: np.ndarray) -> float:
    defined = values[~np.isnan(values)]
    return float(defined.mean()) if defined.size else math.nan


def aggregate(field: GradientField, agg_min_count: int = 5) -> GradientField:
    """Row means of gx, column means of gy, and the totals built from them.

    Rows/columns with fewer than ``agg_min_count`` valid cells are left NaN and
    skipped. The oblique total combines the two directional totals, it is not
    the mean of the per-pixel oblique field.
    """
    row_mean_gx = _masked_mean(field.gx, axis=1, min_count=agg_min_count)
    col_mean_gy = _masked_mean(field.gy, axis=0, min_count=agg_min_count)
    if np.isnan(row_mean_gx).all() and np.isnan(col_mean_gy).all():
        raise NoAggregableData(f"no row or column has {agg_min_count} valid gradient cells")
    total_gx = _mean_defined(row_mean_gx)
    total_gy = _mean_defined(col_mean_gy)
    total_gr = math.hypot(total_gx, total_gy) if not (math.isnan(total_gx) or math.isnan(total_gy)) else math.nan
    return replace(
        field,
        row_mean_gx=row_mean_gx,
        col_mean_gy=col_mean_gy,
        total_gx=total_gx,
        total_gy=total_gy,
        total_gr=total_gr,
    )


def brute_force_oracle(rs, spacing_x: float = 1.0, spacing_y: float = 1.0) -> dict:
    """Loop-nest recomputation of the aggregates for a small, fully valid matrix.

    Independent of :func:`gradient_field`/:func:`aggregate`; test use only.
    Undefined quantities come back as ``None``.
    """
    m = [[float(v) for v in row] for row in rs]
    nrows, ncols = len(m), len(m[0])
    if nrows > 32 or ncols > 32:
        raise ValueError("oracle is limited to 32x32 matrices")

    row_means = []
    for i in range(nrows):
        acc = 0.0
        n = 0
        for j in range(1, ncols):
            acc += (m[i][j] - m[i][j - 1]) / spacing_x
            n += 1
        row_means.append(acc / n if n else None)

    col_means = []
    for j in range(ncols):
        acc = 0.0
        n = 0
        for i in range(1, nrows):
            acc += (m[i][j] - m[i - 1][j]) / spacing_y
            n += 1
        col_means.append(acc / n if n else None)

    def mean(xs):
        xs = [x for x in xs if x is not None]
        return sum(xs) / len(xs) if xs else None

    tgx, tgy = mean(row_means), mean(col_means)
    tgr = (tgx * tgx + tgy * tgy) ** 0.5 if tgx is not None and tgy is not None else None
    return {
        "row_mean_gx": row_means,
        "col_mean_gy": col_means,
        "total_gx": tgx,
        "total_gy": tgy,
        "total_gr": tgr,
    }
