from collapse import plots
from collapse.management.base import NclabCommand


class Command(NclabCommand):
    help = "Write NC1, fn and accuracy SVG charts plus a Markdown summary for a run"

    def add_arguments(self, parser):
        parser.add_argument("run", help="Run directory")
        parser.add_argument("--out", help="Output directory (default: the run directory)")
        parser.add_argument(
            "--fn-star", type=float, dest="fn_star", help="Reference fn* line on the fn chart"
        )

    def handle(self, *args, **options):
        written = plots.write_report(options["run"], options["out"], fn_star_ref=options["fn_star"])
        for path in written:
            self.stdout.write(path)
        self.stdout.write(self.style.SUCCESS(f"{len(written)} files written"))
