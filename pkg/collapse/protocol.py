"""Two-phase training protocol: cross-entropy, then MSE on one-hot targets.

Epochs are numbered globally from 1 across both phases. Phase 2 continues
from the Phase-1 parameters with a fresh optimizer state and, by default, a
restarted LR schedule. Metrics are measured on the full training set after
every ``eval_every`` epochs (and always after the last epoch of a phase).
"""

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from collapse import mlp, ncmetrics, numcore, optim
from collapse.dataio import BatchPlan, batches
from collapse.exceptions import ArgumentError, DivergenceError
from collapse.models import ActivationKind, LossKind, RunStatus
from collapse.ncmetrics import NcSnapshot
from collapse.optim import OptimizerConfig, ScheduleConfig

logger = logging.getLogger(__name__)


def default_nc1_threshold(activation, depth):
    """0.01 for ReLU nets deeper than 3 hidden layers, 0.05 otherwise.

    Non-ReLU and shallow nets plateau in the 0.03-0.08 range, so 0.05 is the
    lowest criterion that marks the same steep descent for them.
    """
    if activation == ActivationKind.RELU and depth > 3:
        return 0.01
    return 0.05


@dataclass(frozen=True)
class DivergenceRule:
    nc1_limit: float = 0.5
    after_epoch: int = 300


@dataclass(frozen=True)
class ProtocolConfig:
    depth: int = 5
    width: int = 512
    activation: str = ActivationKind.RELU
    phase1_epochs: int = 200
    phase2_epochs: int = 400
    nc1_threshold: Optional[float] = None
    batch_size: int = 128
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    seed: int = 0
    terminal_acc: float = 0.99
    divergence: DivergenceRule = field(default_factory=DivergenceRule)
    eval_every: int = 1

    def __post_init__(self):
        if self.activation not in ActivationKind.values:
            raise ArgumentError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "activation", ActivationKind(self.activation))
        if self.phase1_epochs < 1 or self.phase2_epochs < 1:
            raise ArgumentError("phase lengths must be >= 1")
        if self.nc1_threshold is not None and self.nc1_threshold <= 0:
            raise ArgumentError(f"nc1_threshold must be positive, got {self.nc1_threshold}")
        if self.batch_size < 1 or self.eval_every < 1:
            raise ArgumentError("batch_size and eval_every must be >= 1")
        if self.seed < 0:
            raise ArgumentError(f"seed must be non-negative, got {self.seed}")

    @property
    def threshold(self):
        if self.nc1_threshold is not None:
            return self.nc1_threshold
        return default_nc1_threshold(self.activation, self.depth)

    @property
    def total_epochs(self):
        return self.phase1_epochs + self.phase2_epochs

    def mlp_config(self, data):
        return mlp.MlpConfig(
            input_dim=data.dim,
            depth=self.depth,
            width=self.width,
            num_classes=data.num_classes,
            activation=self.activation,
        )

    def with_seed(self, seed):
        return replace(self, seed=seed)

    def to_dict(self):
        data = asdict(self)
        data["activation"] = str(self.activation)
        data["optimizer"] = self.optimizer.to_dict()
        data["schedule"] = self.schedule.to_dict()
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data["optimizer"] = OptimizerConfig.from_dict(data.get("optimizer", {}))
        data["schedule"] = ScheduleConfig.from_dict(data.get("schedule", {}))
        data["divergence"] = DivergenceRule(**data.get("divergence", {}))
        return cls(**data)


@dataclass
class RunRecord:
    config: ProtocolConfig
    snapshots: list
    status: str
    t_nc: Optional[int] = None
    fn_at_t_nc: Optional[float] = None
    wall_time: float = 0.0
    phase1_epochs: int = 0
    terminal_epoch: Optional[int] = None
    phase1_reached_terminal: bool = False
    aborted: bool = False
    label: str = ""

    @property
    def collapsed(self):
        return self.status == RunStatus.COLLAPSED

    @property
    def phase2_snapshots(self):
        return [s for s in self.snapshots if s.phase == 2]

    @property
    def min_nc1(self):
        values = [s.nc1 for s in self.snapshots if s.nc1 is not None]
        return min(values) if values else None

    @property
    def final_nc1(self):
        return self.snapshots[-1].nc1 if self.snapshots else None

    @property
    def final_fn(self):
        return self.snapshots[-1].fn if self.snapshots else None

    def snapshot_at(self, epoch):
        for snapshot in self.snapshots:
            if snapshot.epoch == epoch:
                return snapshot
        return None


def detect_t_nc(snapshots, eps):
    """First epoch with NC1 strictly below ``eps``; degenerate rows never count."""
    for snapshot in snapshots:
        if snapshot.nc1 is not None and snapshot.nc1 < eps:
            return snapshot.epoch
    return None


def classify_status(snapshots, eps, rule, aborted=False):
    t_nc = detect_t_nc(snapshots, eps)
    diverged_at = None
    for snapshot in snapshots:
        if (
            snapshot.epoch > rule.after_epoch
            and snapshot.nc1 is not None
            and snapshot.nc1 > rule.nc1_limit
        ):
            diverged_at = snapshot.epoch
            break
    if t_nc is not None and (diverged_at is None or t_nc < diverged_at):
        return RunStatus.COLLAPSED
    if diverged_at is not None or aborted:
        return RunStatus.DIVERGED
    return RunStatus.DNF


def terminal_phase_epoch(snapshots, target):
    for snapshot in snapshots:
        if snapshot.train_acc >= target:
            return snapshot.epoch
    return None


def fn_at_threshold(snapshots, eps):
    epoch = detect_t_nc(snapshots, eps)
    if epoch is None:
        return None
    return next(s.fn for s in snapshots if s.epoch == epoch)


def fn_compression(record, at_epoch=10):
    """fn at an early reference epoch divided by fn at T_NC."""
    if record.fn_at_t_nc is None:
        return None
    reference = record.snapshot_at(at_epoch)
    if reference is None:
        return None
    return reference.fn / record.fn_at_t_nc


def _schedule_for(config, phase_epochs, total_span):
    if config.schedule.restart_each_phase:
        return optim.make_schedule(config.schedule, phase_epochs)
    return optim.make_schedule(config.schedule, total_span)


def train_phase(
    model,
    data,
    config,
    phase,
    loss_kind,
    epochs,
    first_epoch,
    snapshots,
    schedule_offset=0,
    total_span=None,
):
    """Train ``epochs`` epochs, appending snapshots in place.

    ``first_epoch`` is the global 1-based number of the first epoch trained.
    Raises DivergenceError on a non-finite loss or gradient.
    """
    schedule = _schedule_for(config, epochs, total_span or epochs)
    state = optim.make_state(config.optimizer)
    plan = BatchPlan(batch_size=config.batch_size, seed=config.seed)
    logger.info(
        "Phase %d (%s): epochs %d-%d", phase, loss_kind, first_epoch, first_epoch + epochs - 1
    )

    for offset in range(epochs):
        epoch = first_epoch + offset
        schedule_epoch = offset if config.schedule.restart_each_phase else schedule_offset + offset
        lr = optim.lr_at(schedule, schedule_epoch, config.optimizer.lr)
        for x_batch, y_batch in batches(data, plan, epoch):
            trace = mlp.forward(model, x_batch)
            loss, grads = mlp.loss_and_grad(trace, y_batch, loss_kind, model)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            optim.step(model, grads, state, lr)

        if offset % config.eval_every == 0 or offset == epochs - 1:
            measured = ncmetrics.evaluate(model, data, loss_kind, config.batch_size)
            if not np.isfinite(measured.fn):
                raise DivergenceError(f"non-finite features at epoch {epoch}")
            snapshot = NcSnapshot(
                epoch=epoch,
                phase=phase,
                lr=lr,
                loss=measured.loss,
                train_acc=measured.train_acc,
                nc1=measured.nc1,
                nc2=measured.nc2,
                nc3=measured.nc3,
                fn=measured.fn,
            )
            snapshots.append(snapshot)
            logger.debug(
                "epoch=%d phase=%d lr=%.3g loss=%.4g acc=%.4f nc1=%s fn=%.4f",
                epoch, phase, lr, snapshot.loss, snapshot.train_acc, snapshot.nc1, snapshot.fn,
            )
    return model


def finalize_record(config, snapshots, started, phase1_epochs, aborted=False, label=""):
    eps = config.threshold
    status = classify_status(snapshots, eps, config.divergence, aborted=aborted)
    t_nc = detect_t_nc(snapshots, eps) if status == RunStatus.COLLAPSED else None
    fn_at_t_nc = None
    if t_nc is not None:
        fn_at_t_nc = next(s.fn for s in snapshots if s.epoch == t_nc)
        logger.info("Collapse at epoch %d (NC1 < %g), fn=%.4f", t_nc, eps, fn_at_t_nc)
    else:
        logger.info("No collapse (status %s)", status)

    phase1 = [s for s in snapshots if s.phase == 1]
    terminal_epoch = terminal_phase_epoch(snapshots, config.terminal_acc)
    reached = bool(phase1) and phase1[-1].train_acc >= config.terminal_acc
    return RunRecord(
        config=config,
        snapshots=snapshots,
        status=status,
        t_nc=t_nc,
        fn_at_t_nc=fn_at_t_nc,
        wall_time=time.perf_counter() - started,
        phase1_epochs=phase1_epochs,
        terminal_epoch=terminal_epoch,
        phase1_reached_terminal=reached,
        aborted=aborted,
        label=label,
    )


def run_phase2(config, data, model, snapshots=None, label=""):
    """Phase 2 only, starting from ``model`` after ``config.phase1_epochs`` epochs.

    Used to resume from a Phase-1 checkpoint. The model is trained in place.
    """
    started = time.perf_counter()
    snapshots = list(snapshots or [])
    aborted = False
    try:
        train_phase(
            model,
            data,
            config,
            phase=2,
            loss_kind=LossKind.MSE_ONE_HOT,
            epochs=config.phase2_epochs,
            first_epoch=config.phase1_epochs + 1,
            snapshots=snapshots,
            schedule_offset=config.phase1_epochs,
            total_span=config.total_epochs,
        )
    except DivergenceError as exc:
        logger.warning("Run diverged: %s", exc)
        aborted = True
    return finalize_record(config, snapshots, started, config.phase1_epochs, aborted, label)


def run_two_phase(config, data, on_phase_boundary=None, label=""):
    """Full protocol. ``on_phase_boundary(model)`` sees the Phase-1 parameters
    before the first MSE step (used to write the checkpoint)."""
    started = time.perf_counter()
    mlp_config = config.mlp_config(data)
    model = mlp.build(mlp_config, numcore.run_rng(config.seed))
    snapshots = []
    try:
        train_phase(
            model,
            data,
            config,
            phase=1,
            loss_kind=LossKind.CROSS_ENTROPY,
            epochs=config.phase1_epochs,
            first_epoch=1,
            snapshots=snapshots,
            total_span=config.total_epochs,
        )
    except DivergenceError as exc:
        logger.warning("Run diverged in phase 1: %s", exc)
        return finalize_record(config, snapshots, started, config.phase1_epochs, True, label)

    if snapshots and snapshots[-1].train_acc < config.terminal_acc:
        logger.warning(
            "Phase 1 ended at train accuracy %.4f, below the %.2f target",
            snapshots[-1].train_acc,
            config.terminal_acc,
        )
    if on_phase_boundary is not None:
        on_phase_boundary(model)

    record = run_phase2(config, data, model, snapshots, label)
    record.wall_time = time.perf_counter() - started
    return record


def run_ce_only(config, data, label=""):
    """Cross-entropy only for ``config.phase1_epochs`` epochs: the control run."""
    started = time.perf_counter()
    model = mlp.build(config.mlp_config(data), numcore.run_rng(config.seed))
    snapshots = []
    aborted = False
    try:
        train_phase(
            model,
            data,
            config,
            phase=1,
            loss_kind=LossKind.CROSS_ENTROPY,
            epochs=config.phase1_epochs,
            first_epoch=1,
            snapshots=snapshots,
        )
    except DivergenceError as exc:
        logger.warning("Control run diverged: %s", exc)
        aborted = True
    return finalize_record(config, snapshots, started, config.phase1_epochs, aborted, label)
