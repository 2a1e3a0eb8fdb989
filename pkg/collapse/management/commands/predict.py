import os

from django.conf import settings

from collapse import analysis, dynamics, runlog
from collapse.exceptions import EmptySummaryError
from collapse.management.base import NclabCommand


class Command(NclabCommand):
    help = "Predict T_NC from the first Phase-2 epoch where fn drops below fn*"

    def add_arguments(self, parser):
        parser.add_argument("runs", nargs="+", help="Run or sweep directories to predict")
        parser.add_argument(
            "--reference",
            nargs="*",
            default=[],
            help="Earlier runs of the same setup; fn* is their mean fn at T_NC",
        )
        parser.add_argument("--fn-star", type=float, dest="fn_star", help="Explicit fn* reference")
        parser.add_argument("--lead", type=int, default=settings.NCLAB["DEFAULT_LEAD"])
        parser.add_argument("--out", help="CSV file for the crossing reports")

    def load(self, paths):
        records = []
        for path in paths:
            for run_dir in analysis.find_runs(path):
                records.append(runlog.load_run(run_dir)[1])
        return records

    def handle(self, *args, **options):
        records = self.load(options["runs"])
        references = self.load(options["reference"])
        lead = options["lead"]
        group_refs = dynamics.group_references(records)

        reports = []
        for record in records:
            if options["fn_star"] is not None:
                report = dynamics.detect_crossing(record, options["fn_star"], lead)
            elif references:
                try:
                    report = dynamics.predict_run(record, references, lead)
                except EmptySummaryError:
                    report = dynamics.detect_crossing(record, None, lead)
            else:
                reference = group_refs.get(dynamics.group_key(record))
                report = dynamics.detect_crossing(record, reference, lead)
            reports.append(report)
            self.stdout.write(
                f"{report.label}: T_cross={report.t_cross} predicted={report.predicted_t_nc} "
                f"T_NC={report.t_nc}"
            )

        out = options["out"] or os.path.join(os.path.normpath(options["runs"][0]), "crossings.csv")
        dynamics.write_crossings(out, reports)

        crossed = [report for report in reports if report.gap is not None]
        if crossed:
            confirmed = sum(1 for report in crossed if report.ordering_confirmed)
            mae = sum(report.abs_error for report in crossed) / len(crossed)
            mean_gap = sum(report.gap for report in crossed) / len(crossed)
            self.stdout.write(
                f"T_cross < T_NC in {confirmed}/{len(crossed)}; mean gap {mean_gap:.1f}, "
                f"MAE {mae:.1f} epochs"
            )
        self.stdout.write(self.style.SUCCESS(f"Crossing reports written to {out}"))
