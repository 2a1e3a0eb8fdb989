import time

from collapse import numcore, protocol
from collapse.dataio import make_blobs
from collapse.ncmetrics import NcSnapshot


def snapshot(epoch, phase=2, nc1=0.5, fn=1.0, train_acc=1.0, lr=1e-3, loss=0.1, nc2=0.1, nc3=0.1):
    return NcSnapshot(
        epoch=epoch,
        phase=phase,
        lr=lr,
        loss=loss,
        train_acc=train_acc,
        nc1=nc1,
        nc2=nc2,
        nc3=nc3,
        fn=fn,
    )


def trajectory(phase1_epochs, nc1s, fns, phase1_fn=5.0):
    """Phase-1 rows at a flat NC1 of 0.9, then one Phase-2 row per (nc1, fn)."""
    rows = [snapshot(e, phase=1, nc1=0.9, fn=phase1_fn) for e in range(1, phase1_epochs + 1)]
    for offset, (nc1, fn) in enumerate(zip(nc1s, fns)):
        rows.append(snapshot(phase1_epochs + 1 + offset, phase=2, nc1=nc1, fn=fn))
    return rows


def record_from(config, snapshots, label="", aborted=False):
    return protocol.finalize_record(
        config,
        snapshots,
        started=time.perf_counter(),
        phase1_epochs=config.phase1_epochs,
        aborted=aborted,
        label=label,
    )


def tiny_blobs(seed=0, per_class=20, dim=6):
    return make_blobs(
        numcore.run_rng(seed),
        num_classes=3,
        per_class=per_class,
        dim=dim,
        separation=4.0,
        noise_sigma=0.5,
    )


def tiny_config(**overrides):
    values = {
        "depth": 2,
        "width": 8,
        "phase1_epochs": 3,
        "phase2_epochs": 4,
        "batch_size": 16,
        "nc1_threshold": 0.05,
    }
    values.update(overrides)
    return protocol.ProtocolConfig(**values)
