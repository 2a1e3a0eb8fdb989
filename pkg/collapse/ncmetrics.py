"""Neural collapse metrics over penultimate features.

Normalisations (fixed for the whole lab):

* ``tr_within``  = (1/N) * sum_i ||h_i - mu_c(i)||^2
* ``tr_between`` = (1/K) * sum_c ||mu_c - mu_G||^2
* ``mu_G`` is the sample-weighted global mean.

Degenerate metrics (vanishing denominators or zero-norm vectors) come back
as ``None``; logs spell them ``degenerate``.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from collapse import mlp, numcore
from collapse.dataio import ordered_batches
from collapse.exceptions import MetricError, ShapeError

logger = logging.getLogger(__name__)

DEGENERATE_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureStats:
    class_means: np.ndarray
    global_mean: np.ndarray
    counts: np.ndarray
    tr_within: float
    tr_between: float

    @property
    def num_classes(self):
        return self.class_means.shape[0]

    @property
    def centered_means(self):
        return self.class_means - self.global_mean


@dataclass(frozen=True)
class NcSnapshot:
    epoch: int
    phase: int
    lr: float
    loss: float
    train_acc: float
    nc1: Optional[float]
    nc2: Optional[float]
    nc3: Optional[float]
    fn: float

    @property
    def degenerate(self):
        return self.nc1 is None


class FeatureAccumulator:
    """One-pass class statistics, merged batch by batch.

    Per class it keeps the count, the running mean and the summed squared
    deviation from that mean (pairwise merge), so the full training set never
    has to be held in memory.
    """

    def __init__(self, num_classes, feature_dim):
        self.num_classes = num_classes
        self.feature_dim = feature_dim
        self.counts = np.zeros(num_classes, dtype=np.int64)
        self.means = np.zeros((num_classes, feature_dim))
        self.sq_dev = np.zeros(num_classes)
        self.norm_sum = 0.0

    def update(self, features, labels):
        features = numcore.as_matrix(features)
        labels = np.asarray(labels)
        if features.shape[1] != self.feature_dim:
            raise ShapeError(
                f"features have {features.shape[1]} columns, expected {self.feature_dim}"
            )
        self.norm_sum += float(np.linalg.norm(features, axis=1).sum())
        for c in range(self.num_classes):
            batch = features[labels == c]
            n_b = batch.shape[0]
            if n_b == 0:
                continue
            mean_b = batch.mean(axis=0)
            sq_dev_b = float(np.sum((batch - mean_b) ** 2))
            n_a = self.counts[c]
            n = n_a + n_b
            delta = mean_b - self.means[c]
            self.means[c] += delta * (n_b / n)
            self.sq_dev[c] += sq_dev_b + float(delta @ delta) * n_a * n_b / n
            self.counts[c] = n

    @property
    def total(self):
        return int(self.counts.sum())

    def mean_feature_norm(self):
        return self.norm_sum / self.total

    def finalize(self):
        empty = np.flatnonzero(self.counts == 0)
        if empty.size:
            raise MetricError(f"classes {empty.tolist()} have no samples")
        n = self.total
        global_mean = (self.counts[:, None] * self.means).sum(axis=0) / n
        centered = self.means - global_mean
        return FeatureStats(
            class_means=self.means.copy(),
            global_mean=global_mean,
            counts=self.counts.copy(),
            tr_within=float(self.sq_dev.sum() / n),
            tr_between=float(np.sum(centered**2) / self.num_classes),
        )


def feature_stats(features, labels, num_classes=None):
    features = numcore.as_matrix(features)
    labels = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    accumulator = FeatureAccumulator(num_classes, features.shape[1])
    accumulator.update(features, labels)
    return accumulator.finalize()


def nc1(stats):
    if stats.tr_between <= DEGENERATE_FLOOR:
        return None
    return stats.tr_within / stats.tr_between


def _unit_rows(matrix):
    norms = np.linalg.norm(matrix, axis=1)
    if (norms <= DEGENERATE_FLOOR).any():
        return None
    return matrix / norms[:, None]


def nc2(stats):
    unit = _unit_rows(stats.centered_means)
    if unit is None:
        return None
    k = stats.num_classes
    cosines = unit @ unit.T
    off_diagonal = ~np.eye(k, dtype=bool)
    deviation = np.abs(cosines[off_diagonal] + 1.0 / (k - 1))
    return float(deviation.sum() / (k * (k - 1)))


def nc3(stats, head_weight):
    head_weight = numcore.as_matrix(head_weight)
    if head_weight.shape != stats.class_means.shape:
        raise ShapeError(
            f"head is {head_weight.shape}, class means are {stats.class_means.shape}"
        )
    unit_w = _unit_rows(head_weight)
    unit_m = _unit_rows(stats.centered_means)
    if unit_w is None or unit_m is None:
        return None
    return float(1.0 - np.mean(np.sum(unit_w * unit_m, axis=1)))


def mean_feature_norm(features):
    features = numcore.as_matrix(features)
    return float(np.linalg.norm(features, axis=1).mean())


@dataclass(frozen=True)
class Measurement:
    stats: Optional[FeatureStats]
    fn: float
    train_acc: float
    loss: float
    nc1: Optional[float]
    nc2: Optional[float]
    nc3: Optional[float]


def evaluate(model, data, loss_kind, batch_size):
    """Full training-set pass in insertion order: metrics, accuracy and loss."""
    accumulator = FeatureAccumulator(data.num_classes, model.config.width)
    correct = 0
    loss_sum = 0.0
    for x_batch, y_batch in ordered_batches(data, batch_size):
        trace = mlp.forward(model, x_batch)
        accumulator.update(trace.features, y_batch)
        correct += int(np.sum(mlp.predictions(trace) == y_batch))
        batch_loss, _ = mlp.loss_value(trace.logits, y_batch, loss_kind)
        loss_sum += batch_loss * len(y_batch)

    try:
        stats = accumulator.finalize()
    except MetricError as exc:
        logger.warning("Metric pass invalid: %s", exc)
        stats = None

    values = (None, None, None)
    if stats is not None:
        values = (nc1(stats), nc2(stats), nc3(stats, model.head.weight))
        if values[0] is None:
            logger.warning("NC1 degenerate: between-class scatter vanished")
    return Measurement(
        stats=stats,
        fn=accumulator.mean_feature_norm(),
        train_acc=correct / len(data),
        loss=loss_sum / len(data),
        nc1=values[0],
        nc2=values[1],
        nc3=values[2],
    )
