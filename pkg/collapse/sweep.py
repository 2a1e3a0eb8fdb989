"""One-axis sweeps: a run per (value, seed), executed in a bounded pool."""

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

from collapse import runlog, runner, stats
from collapse.exceptions import ArgumentError, DataFormatError
from collapse.models import ActivationKind, RunStatus, SweepAxis

logger = logging.getLogger(__name__)

AGGREGATE_FILE = "aggregate.csv"
SWEEP_FILE = "sweep.json"

AGGREGATE_COLUMNS = (
    "condition",
    "n",
    "nc1_threshold",
    "collapsed",
    "t_nc_mean",
    "t_nc_std",
    "t_nc_min",
    "t_nc_max",
    "fn_at_t_nc_mean",
    "fn_at_t_nc_std",
    "status",
)


def _coerce(axis, value):
    try:
        if axis in (SweepAxis.DEPTH, SweepAxis.WIDTH):
            coerced = int(value)
            if coerced < 1 or str(coerced) != str(value).strip():
                raise ValueError
            return coerced
        if axis == SweepAxis.WEIGHT_DECAY:
            coerced = float(value)
            if coerced < 0:
                raise ValueError
            return coerced
    except ValueError:
        raise ArgumentError(f"invalid {axis} value {value!r}") from None
    if value not in ActivationKind.values:
        raise ArgumentError(f"invalid activation {value!r}")
    return ActivationKind(value)


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    base: runlog.ExperimentManifest

    def __post_init__(self):
        if self.axis not in SweepAxis.values:
            raise ArgumentError(f"unknown sweep axis {self.axis!r}")
        object.__setattr__(self, "axis", SweepAxis(self.axis))
        if not self.values:
            raise ArgumentError("a sweep needs at least one value")
        object.__setattr__(self, "values", tuple(_coerce(self.axis, v) for v in self.values))

    def condition(self, value):
        return f"{self.axis}={value}"

    def manifest_for(self, value, seed):
        config = self.base.config
        if self.axis == SweepAxis.WEIGHT_DECAY:
            config = replace(config, optimizer=replace(config.optimizer, weight_decay=value))
        else:
            config = replace(config, **{str(self.axis): value})
        name = f"{self.base.name}-{self.axis}-{value}"
        return replace(self.base, name=name, config=config).for_seed(seed)

    def run_dir_name(self, value, seed):
        return f"{value}-seed{seed}"

    def to_dict(self):
        return {
            "axis": str(self.axis),
            "values": [str(value) if self.axis == SweepAxis.ACTIVATION else value for value in self.values],
            "base": self.base.to_dict(),
        }


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    outcomes: dict

    @property
    def failed(self):
        return [outcome for outcome in self.outcomes.values() if outcome.failed]


def run_sweep(spec, out_dir, workers=1, force=False, data_dir=None):
    """Run every (value, seed) pair and write ``aggregate.csv`` once at the end.

    The log of each run depends only on its manifest, so results do not
    depend on ``workers``.
    """
    os.makedirs(out_dir, exist_ok=True)
    jobs = []
    keys = []
    for value in spec.values:
        for seed in spec.base.seeds:
            run_dir = os.path.join(out_dir, spec.run_dir_name(value, seed))
            jobs.append((spec.manifest_for(value, seed), run_dir, force, data_dir))
            keys.append((value, seed))
    logger.info("Sweep over %s: %d runs on %d worker(s)", spec.axis, len(jobs), workers)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            outcomes = list(executor.map(runner.run_job, jobs))
    else:
        outcomes = [runner.run_job(job) for job in jobs]

    result = SweepResult(spec=spec, outcomes=dict(zip(keys, outcomes)))
    write_aggregate(os.path.join(out_dir, AGGREGATE_FILE), aggregate_rows(result))
    with open(os.path.join(out_dir, SWEEP_FILE), "w") as f:
        json.dump(spec.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return result


@dataclass(frozen=True)
class AggregateRow:
    condition: str
    n: int
    nc1_threshold: float
    n_collapsed: int
    t_nc: Optional[stats.SampleSummary]
    t_nc_min: Optional[int]
    t_nc_max: Optional[int]
    fn_at_t_nc: Optional[stats.SampleSummary]
    status: dict

    @property
    def collapsed(self):
        return f"{self.n_collapsed}/{self.n}"

    @property
    def status_text(self):
        return " ".join(f"{key}:{count}" for key, count in sorted(self.status.items()) if count)


def aggregate_rows(result):
    spec = result.spec
    rows = []
    for value in spec.values:
        outcomes = [result.outcomes[value, seed] for seed in spec.base.seeds]
        collapsed = [o for o in outcomes if o.status == RunStatus.COLLAPSED]
        counts = {status: 0 for status in RunStatus.values}
        counts["failed"] = 0
        for outcome in outcomes:
            counts["failed" if outcome.failed else outcome.status] += 1
        t_ncs = [o.t_nc for o in collapsed]
        rows.append(
            AggregateRow(
                condition=spec.condition(value),
                n=len(outcomes),
                nc1_threshold=spec.manifest_for(value, spec.base.seeds[0]).config.threshold,
                n_collapsed=len(collapsed),
                t_nc=stats.summarize(t_ncs) if t_ncs else None,
                t_nc_min=min(t_ncs) if t_ncs else None,
                t_nc_max=max(t_ncs) if t_ncs else None,
                fn_at_t_nc=stats.summarize([o.fn_at_t_nc for o in collapsed]) if collapsed else None,
                status=counts,
            )
        )
    return rows


def grand_summary(result):
    """fn at T_NC over every collapsed run of the sweep, all conditions pooled."""
    values = [o.fn_at_t_nc for o in result.outcomes.values() if o.status == RunStatus.COLLAPSED]
    if not values:
        return None
    return stats.summarize(values)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return runlog.format_float(value)
    return str(value)


def aggregate_row_cells(row):
    return [
        row.condition,
        str(row.n),
        _cell(row.nc1_threshold),
        row.collapsed,
        _cell(row.t_nc.mean if row.t_nc else None),
        _cell(row.t_nc.std if row.t_nc else None),
        _cell(row.t_nc_min),
        _cell(row.t_nc_max),
        _cell(row.fn_at_t_nc.mean if row.fn_at_t_nc else None),
        _cell(row.fn_at_t_nc.std if row.fn_at_t_nc else None),
        row.status_text,
    ]


def write_aggregate(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        for row in rows:
            writer.writerow(aggregate_row_cells(row))


def read_aggregate(path):
    """Rows of ``aggregate.csv`` as dicts; blank cells come back as ``None``."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != AGGREGATE_COLUMNS:
            raise DataFormatError(f"unexpected columns {reader.fieldnames}", path=path, line=1)
        rows = []
        for row in reader:
            rows.append({key: (value if value != "" else None) for key, value in row.items()})
        return rows
