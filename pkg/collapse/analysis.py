"""Result tables for ``manage.py analyze``.

Inputs are either fixture CSVs, recognised by their header row, or run and
sweep directories. Lines starting with ``#`` in a fixture are provenance
comments and are skipped.
"""

import csv
import logging
import os
from dataclasses import dataclass, field

from django.template.loader import render_to_string

from collapse import dynamics, numcore, protocol, runlog, stats
from collapse.exceptions import DataFormatError, EmptySummaryError
from collapse.models import RunStatus

logger = logging.getLogger(__name__)

PER_SEED = "per_seed"
PAIR_SUMMARY = "pair_summary"
WIDTH = "width"
ROBUSTNESS = "robustness"
GRID = "grid"

FIXTURE_KINDS = {
    ("group", "value"): PER_SEED,
    ("group", "n", "mean", "std"): PAIR_SUMMARY,
    ("width", "t_nc_mean", "fn_mean"): WIDTH,
    ("condition", "fn_star_eps1", "fn_star_eps2"): ROBUSTNESS,
    ("architecture", "dataset", "fn_star"): GRID,
}

# Column parsers per fixture kind; text columns stay strings.
_COLUMN_TYPES = {
    PER_SEED: (str, float),
    PAIR_SUMMARY: (str, int, float, float),
    WIDTH: (int, float, float),
    ROBUSTNESS: (str, float, float),
    GRID: (str, str, float),
}

ROBUSTNESS_THRESHOLDS = (0.01, 0.02)


@dataclass
class Fixture:
    kind: str
    columns: tuple
    rows: list


def parse_fixture(lines, path=None):
    header = None
    kind = None
    rows = []
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        cells = [cell.strip() for cell in next(csv.reader([stripped]))]
        if header is None:
            header = tuple(cells)
            kind = FIXTURE_KINDS.get(header)
            if kind is None:
                raise DataFormatError(f"unrecognised fixture header {stripped!r}", path, number)
            continue
        if len(cells) != len(header):
            raise DataFormatError(
                f"expected {len(header)} fields, got {len(cells)}", path=path, line=number
            )
        row = {}
        for name, parse, cell in zip(header, _COLUMN_TYPES[kind], cells):
            try:
                row[name] = parse(cell)
            except ValueError:
                raise DataFormatError(f"bad {name} value {cell!r}", path, number) from None
        rows.append(row)
    if header is None:
        raise DataFormatError("fixture has no header row", path=path)
    if not rows:
        raise DataFormatError("fixture has no data rows", path=path)
    return Fixture(kind=kind, columns=header, rows=rows)


def read_fixture(path):
    try:
        with open(path, newline="") as f:
            return parse_fixture(f, path=path)
    except OSError as exc:
        raise DataFormatError(f"cannot read fixture: {exc}", path=path) from exc


@dataclass
class Table:
    title: str
    columns: list
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return runlog.format_float(value)
    return str(value)


def render_markdown(table):
    return render_to_string(
        "collapse/table.md",
        {
            "title": table.title,
            "header": " | ".join(table.columns),
            "rule": "|".join("---" for _ in table.columns),
            "rows": [" | ".join(_fmt(cell) for cell in row) for row in table.rows],
            "notes": table.notes,
        },
    )


def write_csv(table, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_csv_cell(cell) for cell in row])


def _anova_note(result):
    return (
        f"one-way ANOVA: F({result.df_between}, {result.df_within}) = {result.f:.4g}, "
        f"p = {result.p:.3g}, eta^2 = {result.eta_squared:.3f}"
    )


def _grouped(rows, key, value):
    groups = {}
    for row in rows:
        groups.setdefault(row[key], []).append(row[value])
    return groups


def per_seed_table(fixture, seed=0):
    groups = _grouped(fixture.rows, "group", "value")
    rng = numcore.run_rng(seed)
    table = Table(
        title="Per-seed values",
        columns=["group", "n", "mean", "std", "cv_pct", "t_ci_lo", "t_ci_hi", "boot_lo", "boot_hi"],
    )
    for group, values in groups.items():
        summary = stats.summarize(values)
        t_ci = boot = None
        if summary.n >= 2:
            t_ci = stats.summary_ci_t(summary)
            boot = stats.bootstrap_ci(values, rng)
        table.rows.append(
            [
                group,
                summary.n,
                summary.mean,
                summary.std,
                summary.cv_percent,
                t_ci.lo if t_ci else None,
                t_ci.hi if t_ci else None,
                boot.lo if boot else None,
                boot.hi if boot else None,
            ]
        )
    if len(groups) >= 2 and sum(map(len, groups.values())) > len(groups):
        table.notes.append(_anova_note(stats.anova_oneway(list(groups.values()))))
    table.notes.append("intervals are 95%; bootstrap uses 10000 resamples of the mean")
    return table


def pair_summary_table(fixture):
    summaries = {
        row["group"]: stats.SampleSummary(
            n=row["n"],
            mean=row["mean"],
            std=row["std"],
            cv=row["std"] / row["mean"] if row["mean"] else None,
        )
        for row in fixture.rows
    }
    table = Table(
        title="Group summaries", columns=["group", "n", "mean", "std", "cv_pct", "t_ci_lo", "t_ci_hi"]
    )
    for group, summary in summaries.items():
        ci = stats.summary_ci_t(summary) if summary.n >= 2 else None
        table.rows.append(
            [
                group,
                summary.n,
                summary.mean,
                summary.std,
                summary.cv_percent,
                ci.lo if ci else None,
                ci.hi if ci else None,
            ]
        )
    if len(summaries) >= 2:
        table.notes.append(_anova_note(stats.anova_from_summaries(list(summaries.values()))))
    return table


def width_table(fixture):
    widths = [row["width"] for row in fixture.rows]
    t_ncs = [row["t_nc_mean"] for row in fixture.rows]
    fns = [row["fn_mean"] for row in fixture.rows]
    table = Table(title="Width scaling", columns=["width", "t_nc_mean", "fn_mean"])
    table.rows = [[w, t, fn] for w, t, fn in zip(widths, t_ncs, fns)]
    if len(widths) >= 3:
        correlation = stats.pearson(widths, t_ncs)
        regression = stats.loglog_regress(widths, fns)
        table.notes.append(f"Pearson r(width, T_NC) = {correlation.r:.3f}, p = {correlation.p:.3g}")
        table.notes.append(
            f"log-log fit: fn ~ width^{regression.slope:.4f}, "
            f"R^2 = {regression.r2:.3f}, p = {regression.p_slope:.3g}"
        )
    return table


def robustness_table(fixture):
    rows = {
        row["condition"]: (row["fn_star_eps1"], row["fn_star_eps2"]) for row in fixture.rows
    }
    summary = stats.robustness_summary(rows)
    table = Table(
        title="Threshold robustness", columns=["condition", "fn_star_eps1", "fn_star_eps2", "ratio"]
    )
    for label, (eps1, eps2) in rows.items():
        table.rows.append([label, eps1, eps2, summary.ratios[label]])
    spread = "" if summary.std is None else f" +/- {summary.std:.2f}"
    table.notes.append(f"mean ratio {summary.mean:.2f}{spread}")
    return table


def grid_table(fixture):
    architectures = list(dict.fromkeys(row["architecture"] for row in fixture.rows))
    datasets = list(dict.fromkeys(row["dataset"] for row in fixture.rows))
    grid = {(row["architecture"], row["dataset"]): row["fn_star"] for row in fixture.rows}
    effects = stats.grid_effects(grid, architectures, datasets)
    table = Table(title="Conditional effects", columns=["effect", "baseline", "changed", "pct"])
    for effect in effects.effects:
        table.rows.append([effect.label, effect.baseline, effect.changed, effect.percent])
    architecture, dataset = effects.held_out
    table.notes.append(
        f"multiplicative model predicts {architecture}/{dataset} = {effects.predicted:.4g} "
        f"against {effects.observed:.4g} observed: under-predicts by "
        f"{effects.under_prediction_percent:.0f}% of the prediction, "
        f"log residual {effects.log_residual:.3f}"
    )
    return table


FIXTURE_TABLES = {
    PER_SEED: per_seed_table,
    PAIR_SUMMARY: pair_summary_table,
    WIDTH: width_table,
    ROBUSTNESS: robustness_table,
    GRID: grid_table,
}


def fixture_table(path):
    fixture = read_fixture(path)
    logger.info("Fixture %s recognised as %s", path, fixture.kind)
    return FIXTURE_TABLES[fixture.kind](fixture)


RUN_COLUMNS = [
    "run",
    "status",
    "t_nc",
    "fn_at_t_nc",
    "fn_star_0.01",
    "fn_star_0.02",
    "terminal_epoch",
    "fn_compression",
    "min_nc1",
    "final_nc1",
    "final_fn",
]


def run_row(record):
    return [
        record.label,
        str(record.status),
        record.t_nc,
        record.fn_at_t_nc,
        *(protocol.fn_at_threshold(record.snapshots, eps) for eps in ROBUSTNESS_THRESHOLDS),
        record.terminal_epoch,
        protocol.fn_compression(record),
        record.min_nc1,
        record.final_nc1,
        record.final_fn,
    ]


def find_runs(path):
    if runlog.is_run_dir(path):
        return [path]
    return sorted(
        os.path.join(path, name)
        for name in os.listdir(path)
        if runlog.is_run_dir(os.path.join(path, name))
    )


def condition_of(record):
    label = record.label
    return label.rsplit("-seed", 1)[0] if "-seed" in label else label


def runs_table(path, lead=dynamics.DEFAULT_LEAD):
    run_dirs = find_runs(path)
    if not run_dirs:
        raise DataFormatError("no run directories found", path=path)
    records = [runlog.load_run(run_dir)[1] for run_dir in run_dirs]
    table = Table(title=f"Runs under {path}", columns=list(RUN_COLUMNS))
    table.rows = [run_row(record) for record in records]

    collapsed = [record for record in records if record.status == RunStatus.COLLAPSED]
    table.notes.append(f"collapsed {len(collapsed)}/{len(records)}")
    if len(collapsed) >= 2:
        fn_stars = [record.fn_at_t_nc for record in collapsed]
        summary = stats.summarize(fn_stars)
        ci = stats.t_ci(fn_stars)
        table.notes.append(
            f"fn at T_NC: {summary.mean:.4g} +/- {summary.std:.2g} "
            f"(CV {summary.cv_percent:.1f}%), 95% t-CI [{ci.lo:.4g}, {ci.hi:.4g}]"
        )
        groups = {}
        for record in collapsed:
            groups.setdefault(condition_of(record), []).append(record.fn_at_t_nc)
        if len(groups) >= 2 and len(collapsed) > len(groups):
            table.notes.append(_anova_note(stats.anova_oneway(list(groups.values()))))
    try:
        predictor = dynamics.predictor_eval(records, lead)
    except EmptySummaryError:
        return table
    if predictor.mae is not None:
        table.notes.append(
            f"crossing rule (lead {lead}): T_cross < T_NC in "
            f"{predictor.n_confirmed_ordering}/{predictor.n_collapsed}, "
            f"mean gap {predictor.mean_gap:.1f}, MAE {predictor.mae:.1f} epochs"
        )
    return table


def analyze_path(path, lead=dynamics.DEFAULT_LEAD):
    if os.path.isdir(path):
        return runs_table(path, lead)
    return fixture_table(path)
