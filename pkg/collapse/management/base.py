import argparse
import logging
import os
import sys
from dataclasses import replace

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from collapse import protocol, runlog
from collapse.exceptions import (
    ArgumentError,
    CheckpointError,
    DataFormatError,
    DivergenceError,
    EmptySummaryError,
    ManifestError,
    MetricError,
)
from collapse.models import ActivationKind, DecayKind, ScheduleKind

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

BLOBS_DESCRIPTOR = {
    "kind": "blobs",
    "seed": 0,
    "num_classes": 3,
    "per_class": 100,
    "dim": 10,
    "separation": 4.0,
    "noise_sigma": 0.5,
}


def int_list(text):
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def float_list(text):
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class NclabCommand(BaseCommand):
    """Maps lab errors onto exit codes: 1 usage, 2 data or IO, 3 divergence."""

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        # Parse errors raise CommandError, so they exit with EXIT_USAGE.
        parser.called_from_command_line = False
        return parser

    def run_from_argv(self, argv):
        try:
            super().run_from_argv(argv)
        except CommandError as exc:
            self.stderr.write(str(exc))
            sys.exit(exc.returncode)

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except ArgumentError as exc:
            raise CommandError(str(exc), returncode=EXIT_USAGE) from exc
        except DivergenceError as exc:
            raise CommandError(str(exc), returncode=EXIT_DIVERGED) from exc
        except (
            DataFormatError,
            ManifestError,
            CheckpointError,
            MetricError,
            EmptySummaryError,
            OSError,
        ) as exc:
            raise CommandError(str(exc), returncode=EXIT_DATA) from exc

    def add_data_arguments(self, parser):
        parser.add_argument(
            "--data-dir",
            default=settings.NCLAB["DATA_DIR"],
            help="Directory holding the MNIST IDX files (env NCLAB_DATA_DIR)",
        )
        parser.add_argument("--out", help="Output directory")
        parser.add_argument("--force", action="store_true", help="Overwrite existing output")

    def add_protocol_arguments(self, parser):
        parser.add_argument("--manifest", help="Experiment manifest (JSON)")
        parser.add_argument("--name", help="Experiment name")
        parser.add_argument("--dataset", choices=["mnist", "blobs"], help="Dataset kind")
        parser.add_argument("--limit", type=int, help="Use only the first N MNIST samples")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--seeds", type=int_list, help="Comma-separated seeds")
        parser.add_argument("--epochs-phase1", type=int, dest="epochs_phase1")
        parser.add_argument("--epochs-phase2", type=int, dest="epochs_phase2")
        parser.add_argument("--nc1-threshold", type=float, dest="nc1_threshold")
        parser.add_argument("--batch-size", type=int, dest="batch_size")
        parser.add_argument("--lr", type=float)
        parser.add_argument("--wd", type=float, help="Weight decay on layer weights")
        parser.add_argument("--decay", choices=DecayKind.values, help="How weight decay is applied")
        parser.add_argument("--schedule", choices=ScheduleKind.values, help="LR schedule kind")
        parser.add_argument(
            "--milestones",
            type=int_list,
            help="MultiStep decay epochs, counted from the start of each phase "
            "unless --global-schedule is given",
        )
        parser.add_argument(
            "--global-schedule",
            action="store_true",
            dest="global_schedule",
            help="One LR schedule over both phases instead of a restart at the boundary",
        )
        parser.add_argument("--depth", type=int)
        parser.add_argument("--width", type=int)
        parser.add_argument("--activation", choices=ActivationKind.values)
        parser.add_argument(
            "--ce-only", action="store_true", dest="ce_only", help="Cross-entropy control run"
        )

    def manifest_from_options(self, options):
        """A manifest file, or defaults, with every given flag applied on top."""
        if options.get("manifest"):
            manifest = runlog.load_manifest(options["manifest"])
        else:
            dataset = dict(BLOBS_DESCRIPTOR)
            if options.get("dataset", "mnist") != "blobs":
                dataset = {"kind": "mnist", "split": "train", "limit": None}
            config = protocol.ProtocolConfig(batch_size=settings.NCLAB["DEFAULT_BATCH_SIZE"])
            manifest = runlog.ExperimentManifest(
                name=dataset["kind"], config=config, dataset=dataset
            )

        if options.get("dataset") == "blobs" and manifest.dataset.get("kind") != "blobs":
            manifest = replace(manifest, dataset=dict(BLOBS_DESCRIPTOR), dataset_hash=None)
        if options.get("limit") and manifest.dataset.get("kind") == "mnist":
            dataset = {**manifest.dataset, "limit": options["limit"]}
            manifest = replace(manifest, dataset=dataset, dataset_hash=None)

        overrides = {
            "phase1_epochs": options.get("epochs_phase1"),
            "phase2_epochs": options.get("epochs_phase2"),
            "nc1_threshold": options.get("nc1_threshold"),
            "batch_size": options.get("batch_size"),
            "depth": options.get("depth"),
            "width": options.get("width"),
            "activation": options.get("activation"),
        }
        config = replace(
            manifest.config, **{key: value for key, value in overrides.items() if value is not None}
        )
        optimizer = {
            "lr": options.get("lr"),
            "weight_decay": options.get("wd"),
            "decay": options.get("decay"),
        }
        optimizer = {key: value for key, value in optimizer.items() if value is not None}
        if optimizer:
            config = replace(config, optimizer=replace(config.optimizer, **optimizer))
        schedule = {"kind": options.get("schedule"), "milestones": options.get("milestones")}
        schedule = {key: value for key, value in schedule.items() if value is not None}
        if options.get("global_schedule"):
            schedule["restart_each_phase"] = False
        if schedule:
            config = replace(config, schedule=replace(config.schedule, **schedule))

        seeds = manifest.seeds
        if options.get("seeds"):
            seeds = tuple(options["seeds"])
        elif options.get("seed") is not None:
            seeds = (options["seed"],)
        manifest = replace(manifest, config=config.with_seed(seeds[0]), seeds=seeds)
        if options.get("name"):
            manifest = replace(manifest, name=options["name"])
        if options.get("ce_only"):
            manifest = replace(manifest, mode=runlog.MODE_CE_ONLY)
        return manifest

    def output_dir(self, options, default_name):
        return options.get("out") or os.path.join(settings.NCLAB["OUTPUT_DIR"], default_name)
