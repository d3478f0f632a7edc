"""Two-sample t tests, confidence intervals and per-site cohort comparison.

The t distribution tail is computed from the regularized incomplete beta
function (continued fraction, modified Lentz), so nothing here depends on
scipy.stats; the test suite uses scipy as an independent check.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from scipy.optimize import brentq

from .model import Group, GroupComparison, InsufficientData, Metric, Site, StrainmapError

log = logging.getLogger(__name__)

BETACF_TOL = 1e-10
BETACF_MAX_ITER = 10_000
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < BETACF_TOL:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must be in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_tailed_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0
    return min(1.0, betainc_reg(df / 2.0, 0.5, df / (df + t * t)))


def t_critical(df: float, alpha: float = 0.05) -> float:
    """Two-sided critical value: the t with ``t_two_tailed_p(t, df) == alpha``."""
    hi = 10.0
    while t_two_tailed_p(hi, df) > alpha:
        hi *= 10.0
    return brentq(lambda t: t_two_tailed_p(t, df) - alpha, 0.0, hi, xtol=1e-12, rtol=1e-14)


def _mean_var(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    mean = math.fsum(xs) / n
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, var


@dataclass(frozen=True)
class TTest:
    n_a: int
    n_b: int
    mean_a: float
    mean_b: float
    t: float
    df: float
    p_two_tailed: float
    eta_squared: float
    welch: bool = False
    degenerate: bool = False


def group_compare(a: Sequence[float], b: Sequence[float], welch: bool = False) -> TTest:
    """Two-sample t test of ``a`` against ``b`` (t > 0 when mean(a) > mean(b)).

    Pooled-variance Student test by default, Welch-Satterthwaite when
    ``welch``. Effect size is eta^2 = t^2 / (t^2 + df). Two constant groups are
    flagged ``degenerate``: equal constants give t = 0, p = 1; different ones
    give an infinite t with p = 0.
    """
    a = [float(x) for x in a]
    b = [float(x) for x in b]
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise InsufficientData(f"need at least 2 observations per group, got {na} and {nb}")
    ma, va = _mean_var(a)
    mb, vb = _mean_var(b)

    if welch:
        sa, sb = va / na, vb / nb
        se2 = sa + sb
        df = se2 ** 2 / (sa ** 2 / (na - 1) + sb ** 2 / (nb - 1)) if se2 > 0 else float(na + nb - 2)
    else:
        df = float(na + nb - 2)
        pooled = ((na - 1) * va + (nb - 1) * vb) / df
        se2 = pooled * (1.0 / na + 1.0 / nb)

    diff = ma - mb
    if se2 <= 0:
        if diff == 0:
            return TTest(na, nb, ma, mb, 0.0, df, 1.0, 0.0, welch, True)
        t = math.copysign(math.inf, diff)
        return TTest(na, nb, ma, mb, t, df, 0.0, 1.0, welch, True)

    t = diff / math.sqrt(se2)
    p = t_two_tailed_p(t, df)
    eta = t * t / (t * t + df)
    return TTest(na, nb, ma, mb, t, df, p, eta, welch, False)


def ci95(values: Sequence[float]) -> tuple[float, float]:
    """(mean, half width) of the 95% t confidence interval of the mean."""
    values = [float(x) for x in values]
    n = len(values)
    if n < 2:
        raise InsufficientData("a confidence interval needs at least 2 observations")
    mean, var = _mean_var(values)
    return mean, t_critical(n - 1) * math.sqrt(var / n)


_METRIC_ATTR = {
    Metric.TotalGx: "total_gx",
    Metric.TotalGy: "total_gy",
    Metric.TotalGr: "total_gr",
}


def _metric_values(records, site: Site, group: Group, metric: Metric) -> list[float]:
    out = []
    attr = _METRIC_ATTR[metric]
    for meta, result in records:
        if meta.site is site and meta.group is group:
            value = getattr(result, attr)
            if value is not None and math.isfinite(value):
                out.append(float(value))
    return out


def _failed_row(site, metric, a, b, welch, message) -> GroupComparison:
    nan = math.nan
    return GroupComparison(
        site=site, metric=metric, n_a=len(a), n_b=len(b),
        mean_a=nan, mean_b=nan, ci95_a=nan, ci95_b=nan,
        t=nan, df=nan, p_two_tailed=nan, eta_squared=nan,
        welch=welch, error=message,
    )


def cohort_analysis(
    records: Iterable[tuple],
    welch: bool = False,
    group_a: Group = Group.NonUlcerated,
    group_b: Group = Group.Ulcerated,
) -> list[GroupComparison]:
    """Per-site, per-metric comparison of ``group_a`` against ``group_b``.

    ``records`` pairs a :class:`FrameMeta` with anything exposing
    ``total_gx``/``total_gy``/``total_gr``. Every frame is an independent
    observation; non-finite metric values are dropped.
    """
    records = list(records)
    rows: list[GroupComparison] = []
    for site in Site:
        present = {meta.group for meta, _ in records if meta.site is site}
        if group_a not in present or group_b not in present:
            if present:
                log.warning("site %s has only %s frames; skipped", site.value,
                            "/".join(sorted(g.value for g in present)))
            continue
        for metric in Metric:
            a = _metric_values(records, site, group_a, metric)
            b = _metric_values(records, site, group_b, metric)
            try:
                test = group_compare(a, b, welch=welch)
                mean_a, half_a = ci95(a)
                mean_b, half_b = ci95(b)
            except StrainmapError as exc:
                rows.append(_failed_row(site, metric, a, b, welch, f"{type(exc).__name__}: {exc}"))
                continue
            rows.append(
                GroupComparison(
                    site=site, metric=metric, n_a=test.n_a, n_b=test.n_b,
                    mean_a=mean_a, mean_b=mean_b, ci95_a=half_a, ci95_b=half_b,
                    t=test.t, df=test.df, p_two_tailed=test.p_two_tailed,
                    eta_squared=test.eta_squared, welch=welch,
                    degenerate=test.degenerate, group_a=group_a, group_b=group_b,
                )
            )
    return rows
