from django.conf import settings

from collapse import sweep
from collapse.management.base import NclabCommand
from collapse.models import SweepAxis


class Command(NclabCommand):
    help = "Run a one-axis sweep (value x seed) and write aggregate.csv"

    def add_arguments(self, parser):
        parser.add_argument("--axis", required=True, choices=SweepAxis.values)
        parser.add_argument("--values", required=True, help="Comma-separated axis values")
        parser.add_argument(
            "--workers",
            type=int,
            default=settings.NCLAB["DEFAULT_WORKERS"],
            help="Parallel worker processes (env NCLAB_WORKERS)",
        )
        self.add_data_arguments(parser)
        self.add_protocol_arguments(parser)

    def handle(self, *args, **options):
        manifest = self.manifest_from_options(options)
        values = [value.strip() for value in options["values"].split(",") if value.strip()]
        spec = sweep.SweepSpec(axis=options["axis"], values=tuple(values), base=manifest)
        out = self.output_dir(options, f"{manifest.name}-{spec.axis}")

        result = sweep.run_sweep(
            spec,
            out,
            workers=max(1, options["workers"]),
            force=options["force"],
            data_dir=options["data_dir"],
        )
        for row in sweep.aggregate_rows(result):
            self.stdout.write(f"{row.condition}: {row.collapsed} collapsed ({row.status_text})")
        grand = sweep.grand_summary(result)
        if grand is not None and grand.std is not None:
            self.stdout.write(
                f"fn at T_NC over all collapsed runs: {grand.mean:.4f} +/- {grand.std:.4f} "
                f"(N={grand.n})"
            )
        for outcome in result.failed:
            self.stdout.write(self.style.ERROR(f"{outcome.run_dir}: {outcome.error}"))
        self.stdout.write(self.style.SUCCESS(f"Aggregate written to {out}"))
