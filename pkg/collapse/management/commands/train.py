import os

from django.core.management.base import CommandError

from collapse import runner
from collapse.management.base import EXIT_DIVERGED, NclabCommand
from collapse.models import RunStatus


class Command(NclabCommand):
    help = "Train one two-phase (or CE-only) run per seed and write its run directory"

    def add_arguments(self, parser):
        self.add_data_arguments(parser)
        self.add_protocol_arguments(parser)

    def handle(self, *args, **options):
        manifest = self.manifest_from_options(options)
        out = self.output_dir(options, manifest.name)
        data = runner.load_dataset(manifest, options["data_dir"])

        aborted = []
        for seed in manifest.seeds:
            run_dir = out
            if len(manifest.seeds) > 1:
                run_dir = os.path.join(out, f"{manifest.name}-seed{seed}")
            record = runner.execute_run(
                manifest.for_seed(seed), run_dir, force=options["force"], data=data
            )
            if record.status == RunStatus.COLLAPSED:
                self.stdout.write(
                    self.style.SUCCESS(
                        f"{run_dir}: collapsed at epoch {record.t_nc}, fn={record.fn_at_t_nc:.4f}"
                    )
                )
            else:
                self.stdout.write(self.style.WARNING(f"{run_dir}: {record.status}"))
            if record.aborted:
                aborted.append(run_dir)

        if aborted:
            raise CommandError(
                f"non-finite values stopped {len(aborted)} run(s): {', '.join(aborted)}",
                returncode=EXIT_DIVERGED,
            )
