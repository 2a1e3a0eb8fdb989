import os

from django.conf import settings

from collapse import analysis
from collapse.management.base import NclabCommand


class Command(NclabCommand):
    help = "Summary, CI, ANOVA and regression tables from fixture CSVs or run directories"

    def add_arguments(self, parser):
        parser.add_argument("paths", nargs="+", help="Fixture CSVs, run or sweep directories")
        parser.add_argument("--lead", type=int, default=settings.NCLAB["DEFAULT_LEAD"])
        parser.add_argument("--out", help="Directory for <name>.csv and <name>.md tables")

    def handle(self, *args, **options):
        if options["out"]:
            os.makedirs(options["out"], exist_ok=True)
        for path in options["paths"]:
            table = analysis.analyze_path(path, lead=options["lead"])
            markdown = analysis.render_markdown(table)
            self.stdout.write(markdown)
            if options["out"]:
                stem = os.path.splitext(os.path.basename(os.path.normpath(path)))[0]
                analysis.write_csv(table, os.path.join(options["out"], f"{stem}.csv"))
                with open(os.path.join(options["out"], f"{stem}.md"), "w") as f:
                    f.write(markdown)
