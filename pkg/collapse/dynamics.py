"""Feature-norm crossing predictor and the feature-rescaling intervention."""

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from collapse import ncmetrics, protocol, runlog, stats
from collapse.exceptions import ArgumentError, CheckpointError, EmptySummaryError
from collapse.models import LossKind

logger = logging.getLogger(__name__)

DEFAULT_LEAD = 62

CONDITION_NAMES = {1.0: "control"}


@dataclass(frozen=True)
class CrossingReport:
    fn_star_ref: Optional[float]
    lead: int = DEFAULT_LEAD
    t_cross: Optional[int] = None
    t_nc: Optional[int] = None
    label: str = ""

    @property
    def predicted_t_nc(self):
        if self.t_cross is None:
            return None
        return self.t_cross + self.lead

    @property
    def ordering_confirmed(self):
        """T_cross < T_NC; ``None`` unless both epochs are known."""
        if self.t_cross is None or self.t_nc is None:
            return None
        return self.t_cross < self.t_nc

    @property
    def gap(self):
        if self.t_cross is None or self.t_nc is None:
            return None
        return self.t_nc - self.t_cross

    @property
    def abs_error(self):
        if self.predicted_t_nc is None or self.t_nc is None:
            return None
        return abs(self.predicted_t_nc - self.t_nc)


def detect_crossing(record, fn_star_ref, lead=DEFAULT_LEAD):
    phase2 = record.phase2_snapshots
    if not phase2:
        raise ArgumentError("crossing detection needs Phase-2 snapshots")
    t_cross = None
    if fn_star_ref is not None:
        t_cross = next((s.epoch for s in phase2 if s.fn < fn_star_ref), None)
    return CrossingReport(
        fn_star_ref=fn_star_ref, lead=lead, t_cross=t_cross, t_nc=record.t_nc, label=record.label
    )


def group_key(record):
    config = record.config.to_dict()
    config.pop("seed")
    return json.dumps(config, sort_keys=True)


def group_references(records):
    """Mean fn at T_NC over the collapsed runs of each configuration group."""
    groups = {}
    for record in records:
        if record.collapsed:
            groups.setdefault(group_key(record), []).append(record.fn_at_t_nc)
    return {key: float(np.mean(values)) for key, values in groups.items()}


@dataclass(frozen=True)
class PredictorSummary:
    reports: list
    lead: int
    n_collapsed: int
    n_crossed: int
    n_confirmed_ordering: int
    mean_gap: Optional[float]
    std_gap: Optional[float]
    mae: Optional[float]


def predictor_eval(records, lead=DEFAULT_LEAD, fn_star_ref=None):
    """Retrospective check of the crossing rule over a cohort.

    Without ``fn_star_ref`` every run is measured against the mean fn at T_NC
    of its own configuration group.
    """
    collapsed = [record for record in records if record.collapsed]
    if not collapsed:
        raise EmptySummaryError("no collapsed runs to evaluate the predictor on")
    references = group_references(collapsed) if fn_star_ref is None else None

    reports = []
    for record in collapsed:
        reference = fn_star_ref if references is None else references[group_key(record)]
        reports.append(detect_crossing(record, reference, lead))

    crossed = [report for report in reports if report.gap is not None]
    gaps = [report.gap for report in crossed]
    errors = [report.abs_error for report in crossed]
    return PredictorSummary(
        reports=reports,
        lead=lead,
        n_collapsed=len(collapsed),
        n_crossed=len(crossed),
        n_confirmed_ordering=sum(1 for report in crossed if report.ordering_confirmed),
        mean_gap=float(np.mean(gaps)) if gaps else None,
        std_gap=float(np.std(gaps, ddof=1)) if len(gaps) > 1 else None,
        mae=float(np.mean(errors)) if errors else None,
    )


def predict_run(record, references, lead=DEFAULT_LEAD):
    """Prospective prediction for one run from earlier runs of the same setup."""
    if any(reference is record for reference in references):
        raise ArgumentError("a run cannot be its own fn* reference")
    if record.label and any(reference.label == record.label for reference in references):
        raise ArgumentError(f"run {record.label!r} is listed among its own references")
    values = [reference.fn_at_t_nc for reference in references if reference.collapsed]
    if not values:
        raise EmptySummaryError("no collapsed reference runs")
    return detect_crossing(record, float(np.mean(values)), lead)


def rescale_features(model, alpha):
    """Copy of ``model`` with the last hidden layer's weight and bias times ``alpha``.

    For ReLU this scales every penultimate feature by exactly ``alpha``.
    """
    if alpha <= 0:
        raise ArgumentError(f"alpha must be positive, got {alpha}")
    if not model.hidden_layers:
        raise ArgumentError("model has no hidden layer to rescale")
    scaled = model.copy()
    last = scaled.hidden_layers[-1]
    last.weight *= alpha
    last.bias *= alpha
    return scaled


@dataclass(frozen=True)
class Rebound:
    rebounded: bool
    peak_epoch: Optional[int] = None
    peak_fn: Optional[float] = None


def initial_rebound(record, fn_start):
    """Whether Phase-2 fn first rises above ``fn_start`` and later falls again."""
    series = [(s.epoch, s.fn) for s in record.phase2_snapshots]
    if not series or series[0][1] <= fn_start:
        return Rebound(rebounded=False)
    peak = 0
    while peak + 1 < len(series) and series[peak + 1][1] > series[peak][1]:
        peak += 1
    if peak + 1 >= len(series):
        return Rebound(rebounded=False)
    return Rebound(rebounded=True, peak_epoch=series[peak][0], peak_fn=series[peak][1])


@dataclass(frozen=True)
class InterventionSpec:
    alphas: tuple
    seeds: tuple
    phase2_epochs: Optional[int] = None

    def __post_init__(self):
        if not self.alphas or not self.seeds:
            raise ArgumentError("an intervention needs at least one alpha and one seed")
        for alpha in self.alphas:
            if alpha <= 0:
                raise ArgumentError(f"alpha must be positive, got {alpha}")
        if 1.0 not in self.alphas:
            object.__setattr__(self, "alphas", (1.0,) + tuple(self.alphas))


def condition_name(alpha):
    if alpha in CONDITION_NAMES:
        return CONDITION_NAMES[alpha]
    return "scale-down" if alpha < 1.0 else "scale-up"


@dataclass
class InterventionRow:
    condition: str
    alpha: float
    fn_before: float
    fn_after_rescale: float
    n: int
    n_collapsed: int
    t_nc: Optional[stats.SampleSummary] = None
    fn_star: Optional[stats.SampleSummary] = None
    p_t_nc_vs_control: Optional[float] = None
    p_fn_star_vs_control: Optional[float] = None
    ci_overlaps_control: Optional[bool] = None
    rebounds: int = 0


@dataclass
class InterventionResult:
    rows: list
    records: dict = field(default_factory=dict)
    # alpha -> sha256 of the rescaled starting parameters
    start_digests: dict = field(default_factory=dict)


def _summary_or_none(values):
    if not values:
        return None
    return stats.summarize(values)


def _ci_or_none(values):
    if len(values) < 2:
        return None
    return stats.t_ci(values)


def run_intervention(spec, config, data, checkpoint):
    """Resume Phase 2 from one Phase-1 checkpoint under each alpha and seed.

    Every condition starts from the same parameters and a fresh optimizer
    state. Phase-2 seeds only change the per-epoch shuffles, so the control
    condition under the checkpoint's own seed is the unintervened run.
    """
    if checkpoint.config != config.mlp_config(data):
        raise CheckpointError(
            f"checkpoint architecture {checkpoint.config} does not match {config.mlp_config(data)}"
        )
    if spec.phase2_epochs is not None:
        config = replace(config, phase2_epochs=spec.phase2_epochs)

    fn_before = ncmetrics.evaluate(checkpoint, data, LossKind.MSE_ONE_HOT, config.batch_size).fn
    records = {}
    start_digests = {}
    rows = []
    for alpha in spec.alphas:
        start = rescale_features(checkpoint, alpha)
        start_digests[alpha] = start.digest()
        fn_after = ncmetrics.evaluate(start, data, LossKind.MSE_ONE_HOT, config.batch_size).fn
        logger.info("alpha=%g: fn %.4f -> %.4f", alpha, fn_before, fn_after)
        condition = []
        for seed in spec.seeds:
            label = condition_dir_name(alpha, seed)
            record = protocol.run_phase2(config.with_seed(seed), data, start.copy(), label=label)
            records[alpha, seed] = record
            condition.append(record)

        collapsed = [record for record in condition if record.collapsed]
        rows.append(
            InterventionRow(
                condition=condition_name(alpha),
                alpha=alpha,
                fn_before=fn_before,
                fn_after_rescale=fn_after,
                n=len(condition),
                n_collapsed=len(collapsed),
                t_nc=_summary_or_none([record.t_nc for record in collapsed]),
                fn_star=_summary_or_none([record.fn_at_t_nc for record in collapsed]),
                rebounds=sum(initial_rebound(record, fn_after).rebounded for record in condition),
            )
        )

    _compare_to_control(rows, records, spec.seeds)
    return InterventionResult(rows=rows, records=records, start_digests=start_digests)


def condition_dir_name(alpha, seed):
    return f"alpha{alpha:g}-seed{seed}"


def condition_manifest(manifest, result, alpha, seed, source_digest):
    """The manifest of one (alpha, seed) condition.

    It keeps the source run's name, dataset and config (with the Phase-2 seed
    and length actually used), so two conditions differ only in
    ``intervention``.
    """
    record = result.records[alpha, seed]
    return replace(
        manifest,
        seeds=(seed,),
        config=record.config,
        intervention={
            "alpha": alpha,
            "checkpoint_sha256": result.start_digests[alpha],
            "source_checkpoint_sha256": source_digest,
        },
    )


def _collapsed_values(records, alpha, seeds, attribute):
    values = []
    for seed in seeds:
        record = records[alpha, seed]
        if record.collapsed:
            values.append(getattr(record, attribute))
    return values


def _welch_p(a, b):
    if len(a) < 2 or len(b) < 2:
        return None
    return stats.t_test_two_sample(a, b).p


def _compare_to_control(rows, records, seeds):
    control_t_nc = _collapsed_values(records, 1.0, seeds, "t_nc")
    control_fn = _collapsed_values(records, 1.0, seeds, "fn_at_t_nc")
    control_ci = _ci_or_none(control_fn)
    for row in rows:
        if row.alpha == 1.0:
            continue
        fn_stars = _collapsed_values(records, row.alpha, seeds, "fn_at_t_nc")
        t_ncs = _collapsed_values(records, row.alpha, seeds, "t_nc")
        row.p_t_nc_vs_control = _welch_p(t_ncs, control_t_nc)
        row.p_fn_star_vs_control = _welch_p(fn_stars, control_fn)
        ci = _ci_or_none(fn_stars)
        if ci is not None and control_ci is not None:
            row.ci_overlaps_control = ci.overlaps(control_ci)


CROSSING_COLUMNS = (
    "run",
    "fn_star_ref",
    "lead",
    "t_cross",
    "t_nc",
    "predicted_t_nc",
    "abs_error",
    "ordering_confirmed",
)

INTERVENTION_COLUMNS = (
    "condition",
    "alpha",
    "fn_before",
    "fn_after_rescale",
    "n",
    "collapsed",
    "t_nc_mean",
    "t_nc_std",
    "fn_star_mean",
    "fn_star_std",
    "p_t_nc_vs_control",
    "p_fn_star_vs_control",
    "ci_overlaps_control",
    "rebounds",
)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return runlog.format_float(value)
    return str(value)


def crossing_cells(report):
    return [
        _cell(value)
        for value in (
            report.label,
            report.fn_star_ref,
            report.lead,
            report.t_cross,
            report.t_nc,
            report.predicted_t_nc,
            report.abs_error,
            report.ordering_confirmed,
        )
    ]


def intervention_cells(row):
    def part(summary, name):
        return None if summary is None else getattr(summary, name)

    return [
        _cell(value)
        for value in (
            row.condition,
            row.alpha,
            row.fn_before,
            row.fn_after_rescale,
            row.n,
            f"{row.n_collapsed}/{row.n}",
            part(row.t_nc, "mean"),
            part(row.t_nc, "std"),
            part(row.fn_star, "mean"),
            part(row.fn_star, "std"),
            row.p_t_nc_vs_control,
            row.p_fn_star_vs_control,
            row.ci_overlaps_control,
            row.rebounds,
        )
    ]


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def write_crossings(path, reports):
    write_csv(path, CROSSING_COLUMNS, [crossing_cells(report) for report in reports])


def write_intervention_table(path, rows):
    write_csv(path, INTERVENTION_COLUMNS, [intervention_cells(row) for row in rows])
