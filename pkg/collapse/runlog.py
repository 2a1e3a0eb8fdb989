"""On-disk artifacts of a run: manifest, log, Phase-1 checkpoint and summary.

Run directory layout::

    <run>/manifest.json
    <run>/log.csv
    <run>/checkpoint_phase1.npz
    <run>/summary.json

Floats are written with ``repr`` so every file parses back to the same bits.
"""

import csv
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Optional

import numpy as np

import collapse
from collapse import mlp, protocol
from collapse.exceptions import CheckpointError, DataFormatError, ManifestError
from collapse.ncmetrics import NcSnapshot

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CHECKPOINT_FORMAT = "nclab-checkpoint"
CHECKPOINT_VERSION = 1

LOG_COLUMNS = ("epoch", "phase", "lr", "loss", "train_acc", "nc1", "nc2", "nc3", "fn")
DEGENERATE = "degenerate"

MANIFEST_FILE = "manifest.json"
LOG_FILE = "log.csv"
CHECKPOINT_FILE = "checkpoint_phase1.npz"
SUMMARY_FILE = "summary.json"

MODE_TWO_PHASE = "two_phase"
MODE_CE_ONLY = "ce_only"


def format_float(value):
    if value is None:
        return DEGENERATE
    return repr(float(value))


def parse_float(text, path=None, line=None, optional=False):
    if optional and text == DEGENERATE:
        return None
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(f"not a number: {text!r}", path=path, line=line) from None


def parse_int(text, path=None, line=None):
    try:
        return int(text)
    except ValueError:
        raise DataFormatError(f"not an integer: {text!r}", path=path, line=line) from None


def snapshot_row(snapshot):
    return [
        str(snapshot.epoch),
        str(snapshot.phase),
        format_float(snapshot.lr),
        format_float(snapshot.loss),
        format_float(snapshot.train_acc),
        format_float(snapshot.nc1),
        format_float(snapshot.nc2),
        format_float(snapshot.nc3),
        format_float(snapshot.fn),
    ]


def write_log(path, snapshots):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for snapshot in snapshots:
            writer.writerow(snapshot_row(snapshot))


def parse_log(lines, path=None):
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise DataFormatError("empty log", path=path, line=1)
    if tuple(header) != LOG_COLUMNS:
        unknown = sorted(set(header) - set(LOG_COLUMNS))
        detail = f"unknown columns {unknown}" if unknown else f"columns {header}"
        raise DataFormatError(
            f"{detail}; expected {','.join(LOG_COLUMNS)}", path=path, line=1
        )

    snapshots = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(LOG_COLUMNS):
            raise DataFormatError(
                f"expected {len(LOG_COLUMNS)} fields, got {len(row)}", path=path, line=line
            )
        epoch, phase, lr, loss, acc, nc1, nc2, nc3, fn = row
        snapshots.append(
            NcSnapshot(
                epoch=parse_int(epoch, path, line),
                phase=parse_int(phase, path, line),
                lr=parse_float(lr, path, line),
                loss=parse_float(loss, path, line),
                train_acc=parse_float(acc, path, line),
                nc1=parse_float(nc1, path, line, optional=True),
                nc2=parse_float(nc2, path, line, optional=True),
                nc3=parse_float(nc3, path, line, optional=True),
                fn=parse_float(fn, path, line),
            )
        )
    return snapshots


def read_log(path):
    try:
        with open(path, newline="") as f:
            return parse_log(f, path=path)
    except OSError as exc:
        raise DataFormatError(f"cannot read log: {exc}", path=path) from exc


@dataclass(frozen=True)
class ExperimentManifest:
    name: str
    config: protocol.ProtocolConfig
    dataset: dict
    seeds: tuple = (0,)
    dataset_hash: Optional[str] = None
    mode: str = MODE_TWO_PHASE
    intervention: dict = field(default_factory=dict)
    code_version: str = collapse.__version__
    created: str = ""
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not self.seeds:
            raise ManifestError("a manifest needs at least one seed")
        if self.mode not in (MODE_TWO_PHASE, MODE_CE_ONLY):
            raise ManifestError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "seeds", tuple(int(seed) for seed in self.seeds))

    def for_seed(self, seed):
        return replace(self, seeds=(seed,), config=self.config.with_seed(seed))

    def stamped(self):
        now = datetime.now(timezone.utc).replace(microsecond=0).isoformat()
        return replace(self, created=now)

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "mode": self.mode,
            "config": self.config.to_dict(),
            "dataset": dict(self.dataset),
            "dataset_hash": self.dataset_hash,
            "seeds": list(self.seeds),
            "intervention": dict(self.intervention),
            "code_version": self.code_version,
            "created": self.created,
        }

    @classmethod
    def from_dict(cls, data):
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ManifestError(f"unsupported manifest schema_version {version!r}")
        try:
            return cls(
                name=data["name"],
                mode=data.get("mode", MODE_TWO_PHASE),
                config=protocol.ProtocolConfig.from_dict(data["config"]),
                dataset=data["dataset"],
                dataset_hash=data.get("dataset_hash"),
                seeds=tuple(data.get("seeds", (0,))),
                intervention=data.get("intervention", {}),
                code_version=data.get("code_version", ""),
                created=data.get("created", ""),
            )
        except KeyError as exc:
            raise ManifestError(f"manifest is missing {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"invalid manifest: {exc}") from exc

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def content_hash(self):
        """sha256 of everything that determines the run (creation time excluded)."""
        data = self.to_dict()
        data.pop("created")
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


def save_manifest(path, manifest):
    with open(path, "w") as f:
        f.write(manifest.dumps())


def load_manifest(path):
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(exc.msg, path=path, line=exc.lineno) from exc
    return ExperimentManifest.from_dict(data)


def save_checkpoint(path, model, seed, epoch):
    arrays = {}
    for index, layer in enumerate(model.layers):
        arrays[f"layer{index}_weight"] = layer.weight
        arrays[f"layer{index}_bias"] = layer.bias
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "mlp": model.config.to_dict(),
        "seed": seed,
        "epoch": epoch,
        "sha256": model.digest(),
    }
    with open(path, "wb") as f:
        np.savez(f, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    logger.info("Wrote checkpoint %s (epoch %d)", path, epoch)
    return meta


def load_checkpoint(path):
    """Returns ``(model, meta)``; the parameter digest must match the stored one."""
    try:
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(str(archive["meta"]))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise CheckpointError(f"{path} is not a checkpoint")
            config = mlp.MlpConfig.from_dict(meta["mlp"])
            layers = []
            for index in range(config.depth + 1):
                layers.append(
                    mlp.Layer(
                        weight=archive[f"layer{index}_weight"].astype(np.float64),
                        bias=archive[f"layer{index}_bias"].astype(np.float64),
                    )
                )
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    model = mlp.MlpModel(config=config, layers=layers)
    if model.digest() != meta["sha256"]:
        raise CheckpointError(f"checkpoint {path} failed its digest check")
    return model, meta


def record_summary(record):
    return {
        "label": record.label,
        "seed": record.config.seed,
        "status": str(record.status),
        "nc1_threshold": record.config.threshold,
        "t_nc": record.t_nc,
        "fn_at_t_nc": record.fn_at_t_nc,
        "terminal_epoch": record.terminal_epoch,
        "phase1_reached_terminal": record.phase1_reached_terminal,
        "min_nc1": record.min_nc1,
        "final_nc1": record.final_nc1,
        "final_fn": record.final_fn,
        "aborted": record.aborted,
        "wall_time": record.wall_time,
    }


def write_summary(path, record):
    with open(path, "w") as f:
        json.dump(record_summary(record), f, indent=2, sort_keys=True)
        f.write("\n")


def read_summary(path):
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise DataFormatError(f"cannot read summary: {exc}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(exc.msg, path=path, line=exc.lineno) from exc


def is_run_dir(path):
    return os.path.isfile(os.path.join(path, MANIFEST_FILE)) and os.path.isfile(
        os.path.join(path, LOG_FILE)
    )


def load_run(run_dir):
    """Rebuild a RunRecord from a run directory's manifest and log."""
    manifest = load_manifest(os.path.join(run_dir, MANIFEST_FILE))
    snapshots = read_log(os.path.join(run_dir, LOG_FILE))
    summary_path = os.path.join(run_dir, SUMMARY_FILE)
    summary = read_summary(summary_path) if os.path.exists(summary_path) else {}
    record = protocol.finalize_record(
        manifest.config,
        snapshots,
        started=time.perf_counter(),
        phase1_epochs=manifest.config.phase1_epochs,
        aborted=summary.get("aborted", False),
        label=summary.get("label") or os.path.basename(os.path.normpath(run_dir)),
    )
    record.wall_time = summary.get("wall_time", 0.0)
    return manifest, record
