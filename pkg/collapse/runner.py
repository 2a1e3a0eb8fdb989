"""Execute one manifest-described run into its own directory.

Nothing here reads Django settings, so the functions can run inside sweep
worker processes.
"""

import logging
import os
import shutil
from dataclasses import dataclass, replace
from typing import Optional

from collapse import protocol, runlog
from collapse.dataio import dataset_from_descriptor
from collapse.exceptions import ArgumentError, ManifestError, NclabError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunOutcome:
    run_dir: str
    seed: int
    status: Optional[str] = None
    t_nc: Optional[int] = None
    fn_at_t_nc: Optional[float] = None
    error: Optional[str] = None

    @property
    def failed(self):
        return self.error is not None


def prepare_run_dir(run_dir, force=False):
    if os.path.exists(run_dir) and os.listdir(run_dir):
        if not force:
            raise ArgumentError(f"{run_dir} already holds a run; pass --force to overwrite")
        shutil.rmtree(run_dir)
    os.makedirs(run_dir, exist_ok=True)


def load_dataset(manifest, data_dir=None):
    data = dataset_from_descriptor(manifest.dataset, data_dir)
    if manifest.dataset_hash and data.content_hash() != manifest.dataset_hash:
        raise ManifestError(
            f"dataset {data.name} does not match the manifest's content hash"
        )
    return data


def execute_run(manifest, run_dir, force=False, data_dir=None, data=None):
    """Train one seed and write manifest, log, checkpoint and summary.

    ``manifest`` must name exactly one seed. Returns the RunRecord.
    """
    if len(manifest.seeds) != 1:
        raise ManifestError(f"execute_run needs a single seed, got {list(manifest.seeds)}")
    seed = manifest.seeds[0]
    config = manifest.config.with_seed(seed)
    if data is None:
        data = load_dataset(manifest, data_dir)
    manifest = manifest.for_seed(seed)
    if not manifest.dataset_hash:
        manifest = replace(manifest, dataset_hash=data.content_hash())

    prepare_run_dir(run_dir, force)
    runlog.save_manifest(os.path.join(run_dir, runlog.MANIFEST_FILE), manifest.stamped())
    label = os.path.basename(os.path.normpath(run_dir))
    logger.info("Run %s: seed %d on %s", label, seed, data.name)

    if manifest.mode == runlog.MODE_CE_ONLY:
        record = protocol.run_ce_only(config, data, label=label)
    else:

        def write_checkpoint(model):
            runlog.save_checkpoint(
                os.path.join(run_dir, runlog.CHECKPOINT_FILE),
                model,
                seed=seed,
                epoch=config.phase1_epochs,
            )

        record = protocol.run_two_phase(config, data, on_phase_boundary=write_checkpoint, label=label)

    write_results(run_dir, record)
    return record


def write_results(run_dir, record):
    runlog.write_log(os.path.join(run_dir, runlog.LOG_FILE), record.snapshots)
    runlog.write_summary(os.path.join(run_dir, runlog.SUMMARY_FILE), record)


def save_finished_run(run_dir, manifest, record):
    """Write a run that was trained elsewhere (an intervention condition)."""
    os.makedirs(run_dir, exist_ok=True)
    runlog.save_manifest(os.path.join(run_dir, runlog.MANIFEST_FILE), manifest.stamped())
    write_results(run_dir, record)


def run_job(job):
    """Pool entry point: ``(manifest, run_dir, force, data_dir)`` to a RunOutcome.

    Lab errors are captured in the outcome instead of propagating, so one
    failing run never sinks a sweep.
    """
    manifest, run_dir, force, data_dir = job
    seed = manifest.seeds[0]
    try:
        record = execute_run(manifest, run_dir, force=force, data_dir=data_dir)
    except NclabError as exc:
        logger.error("Run %s failed: %s", run_dir, exc)
        return RunOutcome(run_dir=run_dir, seed=seed, error=str(exc))
    return RunOutcome(
        run_dir=run_dir,
        seed=seed,
        status=str(record.status),
        t_nc=record.t_nc,
        fn_at_t_nc=record.fn_at_t_nc,
    )
