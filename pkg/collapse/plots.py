"""Static SVG charts of a run's trajectory and the Markdown report around them."""

import logging
import os

import matplotlib

matplotlib.use("Agg")

from django.template.loader import render_to_string  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from collapse import protocol, runlog  # noqa: E402

logger = logging.getLogger(__name__)

REPORT_FILE = "report.md"

CHARTS = (
    ("nc1", "NC1 vs epoch", "nc1.svg"),
    ("fn", "Mean feature norm vs epoch", "fn.svg"),
    ("train_acc", "Train accuracy vs epoch", "accuracy.svg"),
)


def _series(snapshots, metric):
    epochs = [s.epoch for s in snapshots]
    values = [getattr(s, metric) for s in snapshots]
    # Degenerate rows break the line instead of dropping to zero.
    return epochs, [float("nan") if v is None else v for v in values]


def plot_metric(record, metric, title, path, fn_star=None):
    figure = Figure(figsize=(6.4, 4.0))
    axes = figure.subplots()
    epochs, values = _series(record.snapshots, metric)
    axes.plot(epochs, values, color="tab:blue", linewidth=1.2)
    axes.axvline(record.phase1_epochs + 0.5, color="grey", linestyle=":", linewidth=1)

    if metric == "nc1":
        axes.set_yscale("log")
        axes.axhline(record.config.threshold, color="tab:red", linestyle="--", linewidth=1)
    elif metric == "fn" and fn_star is not None:
        axes.axhline(fn_star, color="tab:red", linestyle="--", linewidth=1, label="fn*")
        axes.legend(loc="upper right")
    if record.t_nc is not None:
        axes.axvline(record.t_nc, color="tab:green", linestyle="--", linewidth=1)

    axes.set_title(title)
    axes.set_xlabel("epoch")
    axes.set_ylabel(metric)
    axes.grid(True, alpha=0.3)
    figure.tight_layout()
    figure.savefig(path, format="svg", metadata={"Date": None})
    return path


def _fmt(value):
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def write_report(run_dir, out_dir=None, fn_star_ref=None):
    """Three SVG charts and ``report.md`` for one run; returns the written paths.

    The fn chart draws ``fn_star_ref`` when given, else the run's own fn at
    T_NC.
    """
    out_dir = out_dir or run_dir
    os.makedirs(out_dir, exist_ok=True)
    manifest, record = runlog.load_run(run_dir)
    fn_star = fn_star_ref if fn_star_ref is not None else record.fn_at_t_nc

    written = []
    charts = []
    for metric, title, name in CHARTS:
        path = plot_metric(record, metric, title, os.path.join(out_dir, name), fn_star)
        written.append(path)
        charts.append({"title": title, "file": name})

    facts = [
        ("T_NC", record.t_nc),
        ("fn at T_NC", record.fn_at_t_nc),
        ("terminal phase entered", record.terminal_epoch),
        ("Phase 1 reached target accuracy", record.phase1_reached_terminal),
        ("fn compression (epoch 10 / T_NC)", protocol.fn_compression(record)),
        ("min NC1", record.min_nc1),
        ("final NC1", record.final_nc1),
        ("final fn", record.final_fn),
    ]
    report = render_to_string(
        "collapse/report.md",
        {
            "name": manifest.name,
            "label": record.label,
            "status": record.status,
            "seed": record.config.seed,
            "threshold": record.config.threshold,
            "facts": [(key, _fmt(value)) for key, value in facts],
            "charts": charts,
        },
    )
    report_path = os.path.join(out_dir, REPORT_FILE)
    with open(report_path, "w") as f:
        f.write(report)
    written.append(report_path)
    logger.info("Report for %s written to %s", record.label, out_dir)
    return written
