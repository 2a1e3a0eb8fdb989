"""Sample statistics used to summarise collapse experiments.

Standard deviations are sample deviations (denominator n - 1). p-values come
from ``collapse.special`` and are floored at 1e-300 instead of underflowing.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from collapse import special
from collapse.exceptions import ArgumentError

BOOTSTRAP_RESAMPLES = 10000


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    std: Optional[float]
    cv: Optional[float]

    @property
    def cv_percent(self):
        return None if self.cv is None else 100.0 * self.cv


@dataclass(frozen=True)
class CiResult:
    lo: float
    hi: float
    level: float
    method: str

    def overlaps(self, other):
        return self.lo <= other.hi and other.lo <= self.hi

    def contains(self, value):
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class AnovaResult:
    f: float
    df_between: int
    df_within: int
    p: float
    eta_squared: float


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float


@dataclass(frozen=True)
class PearsonResult:
    r: float
    p: float
    n: int


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r2: float
    p_slope: float
    n: int


def _values(xs, minimum, what):
    values = np.asarray(list(xs), dtype=np.float64)
    if values.ndim != 1 or values.size < minimum:
        raise ArgumentError(f"{what} needs at least {minimum} values, got {values.size}")
    return values


def summarize(xs):
    values = _values(xs, 1, "summarize")
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size >= 2 else None
    cv = None
    if std is not None and mean != 0:
        cv = std / mean
    return SampleSummary(n=int(values.size), mean=mean, std=std, cv=cv)


def summary_ci_t(summary, level=0.95):
    if summary.n < 2 or summary.std is None:
        raise ArgumentError("a t interval needs at least 2 values")
    quantile = special.t_ppf((1.0 + level) / 2.0, summary.n - 1)
    half = quantile * summary.std / math.sqrt(summary.n)
    return CiResult(lo=summary.mean - half, hi=summary.mean + half, level=level, method="student_t")


def t_ci(xs, level=0.95):
    return summary_ci_t(summarize(_values(xs, 2, "t_ci")), level)


def bootstrap_ci(xs, rng, resamples=BOOTSTRAP_RESAMPLES, level=0.95):
    """Percentile interval of resampled means."""
    values = _values(xs, 2, "bootstrap_ci")
    index = rng.integers(0, values.size, size=(resamples, values.size))
    means = values[index].mean(axis=1)
    lo, hi = np.quantile(means, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    return CiResult(lo=float(lo), hi=float(hi), level=level, method="bootstrap_percentile")


def _anova(ns, means, ss_within):
    ns = np.asarray(ns, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    groups = ns.size
    total = ns.sum()
    if groups < 2:
        raise ArgumentError("ANOVA needs at least 2 groups")
    if total <= groups:
        raise ArgumentError("ANOVA needs more observations than groups")
    grand_mean = float((ns * means).sum() / total)
    ss_between = float((ns * (means - grand_mean) ** 2).sum())
    df_between = groups - 1
    df_within = int(total) - groups
    ss_total = ss_between + ss_within
    eta_squared = ss_between / ss_total if ss_total > 0 else 0.0

    if ss_within == 0:
        if ss_between == 0:
            return AnovaResult(0.0, df_between, df_within, 1.0, eta_squared)
        return AnovaResult(math.inf, df_between, df_within, special.P_FLOOR, eta_squared)
    f = (ss_between / df_between) / (ss_within / df_within)
    return AnovaResult(f, df_between, df_within, special.f_sf(f, df_between, df_within), eta_squared)


def anova_oneway(groups):
    groups = [_values(group, 1, "ANOVA group") for group in groups]
    ss_within = float(sum(((group - group.mean()) ** 2).sum() for group in groups))
    return _anova(
        [group.size for group in groups], [group.mean() for group in groups], ss_within
    )


def anova_from_summaries(summaries):
    """One-way ANOVA from per-group (n, mean, std) rows."""
    ss_within = 0.0
    for summary in summaries:
        if summary.n >= 2:
            ss_within += (summary.n - 1) * summary.std**2
    return _anova([s.n for s in summaries], [s.mean for s in summaries], ss_within)


def t_test_two_sample(a, b):
    """Welch's two-sample t test, two-sided."""
    a = _values(a, 2, "t test sample")
    b = _values(b, 2, "t test sample")
    var_a = a.var(ddof=1) / a.size
    var_b = b.var(ddof=1) / b.size
    diff = float(a.mean() - b.mean())
    se2 = var_a + var_b
    if se2 == 0:
        df = float(a.size + b.size - 2)
        if diff == 0:
            return TTestResult(t=0.0, df=df, p=1.0)
        return TTestResult(t=math.copysign(math.inf, diff), df=df, p=special.P_FLOOR)
    t = diff / math.sqrt(se2)
    df = se2**2 / (var_a**2 / (a.size - 1) + var_b**2 / (b.size - 1))
    return TTestResult(t=t, df=float(df), p=special.t_sf_two_sided(t, df))


def pearson(xs, ys):
    x = _values(xs, 3, "pearson")
    y = _values(ys, 3, "pearson")
    if x.size != y.size:
        raise ArgumentError(f"pearson needs paired samples, got {x.size} and {y.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ArgumentError("pearson is undefined for a zero-variance sample")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    n = int(x.size)
    if abs(r) == 1.0:
        return PearsonResult(r=r, p=special.P_FLOOR, n=n)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return PearsonResult(r=r, p=special.t_sf_two_sided(t, n - 2), n=n)


def linear_regress(xs, ys):
    x = _values(xs, 3, "regression")
    y = _values(ys, 3, "regression")
    if x.size != y.size:
        raise ArgumentError(f"regression needs paired samples, got {x.size} and {y.size}")
    n = int(x.size)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    if sxx == 0:
        raise ArgumentError("regression needs at least two distinct x values")
    slope = float(dx @ dy) / sxx
    intercept = float(y.mean() - slope * x.mean())
    residual = y - (intercept + slope * x)
    sse = float(residual @ residual)
    syy = float(dy @ dy)
    r2 = 1.0 - sse / syy if syy > 0 else 0.0
    r2 = min(max(r2, 0.0), 1.0)
    if sse == 0:
        p_slope = 1.0 if slope == 0 else special.P_FLOOR
    else:
        se = math.sqrt(sse / (n - 2) / sxx)
        p_slope = special.t_sf_two_sided(slope / se, n - 2)
    return RegressionResult(slope=slope, intercept=intercept, r2=r2, p_slope=p_slope, n=n)


def loglog_regress(widths, fns):
    """OLS of ln(fn) on ln(width); the slope is the power-law exponent."""
    widths = _values(widths, 3, "loglog_regress")
    fns = _values(fns, 3, "loglog_regress")
    if (widths <= 0).any() or (fns <= 0).any():
        raise ArgumentError("log-log regression needs strictly positive values")
    return linear_regress(np.log(widths), np.log(fns))


def robustness_ratio(fn_star_at_eps2, fn_star_at_eps1):
    if fn_star_at_eps1 <= 0 or fn_star_at_eps2 <= 0:
        raise ArgumentError("robustness ratio needs two positive fn* values")
    return fn_star_at_eps2 / fn_star_at_eps1


@dataclass(frozen=True)
class RobustnessSummary:
    ratios: dict
    mean: float
    std: Optional[float]


def robustness_summary(rows):
    """``rows`` maps a condition label to (fn* at eps1, fn* at eps2)."""
    ratios = {label: robustness_ratio(eps2, eps1) for label, (eps1, eps2) in rows.items()}
    summary = summarize(ratios.values())
    return RobustnessSummary(ratios=ratios, mean=summary.mean, std=summary.std)


@dataclass(frozen=True)
class ConditionalEffect:
    label: str
    baseline: float
    changed: float

    @property
    def delta(self):
        return self.changed - self.baseline

    @property
    def percent(self):
        return 100.0 * (self.changed / self.baseline - 1.0)


@dataclass(frozen=True)
class GridEffects:
    effects: list = field(default_factory=list)
    held_out: tuple = ()
    observed: float = 0.0
    predicted: float = 0.0

    @property
    def log_residual(self):
        return math.log(self.observed / self.predicted)

    @property
    def under_prediction_percent(self):
        """(observed - predicted) / predicted, in percent."""
        return 100.0 * (self.observed / self.predicted - 1.0)


def grid_effects(grid, architectures, datasets):
    """Conditional effects on a 2x2 (architecture x dataset) grid of fn* means.

    ``grid`` maps ``(architecture, dataset)`` to a positive value. The first
    architecture and dataset are the baselines. The held-out corner is
    (second architecture, first dataset), predicted from the other three
    cells by a log-additive (multiplicative) model.
    """
    if len(architectures) != 2 or len(datasets) != 2:
        raise ArgumentError("grid_effects needs exactly 2 architectures and 2 datasets")
    a0, a1 = architectures
    d0, d1 = datasets
    for key in ((a0, d0), (a0, d1), (a1, d0), (a1, d1)):
        if key not in grid or grid[key] <= 0:
            raise ArgumentError(f"grid cell {key} missing or not positive")

    effects = [
        ConditionalEffect(f"architecture effect on {d0} ({a0} -> {a1})", grid[a0, d0], grid[a1, d0]),
        ConditionalEffect(f"architecture effect on {d1} ({a0} -> {a1})", grid[a0, d1], grid[a1, d1]),
        ConditionalEffect(f"dataset effect for {a0} ({d0} -> {d1})", grid[a0, d0], grid[a0, d1]),
        ConditionalEffect(f"dataset effect for {a1} ({d0} -> {d1})", grid[a1, d0], grid[a1, d1]),
    ]
    predicted = grid[a0, d0] * grid[a1, d1] / grid[a0, d1]
    return GridEffects(
        effects=effects, held_out=(a1, d0), observed=grid[a1, d0], predicted=predicted
    )
