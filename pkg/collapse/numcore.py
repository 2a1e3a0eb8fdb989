"""Dense linear algebra, seeded random streams and parameter initialisation.

A ``Matrix`` is a 2-D ``float64`` numpy array. Random streams are
``numpy.random.Generator`` instances over ``PCG64``; Gaussian draws use
numpy's ziggurat ``standard_normal``. Both are stable for a pinned numpy
version, which is what makes a seed reproduce a run bit for bit.

Consumption order for a run: ``run_rng(seed)`` initialises the layers in
order (first hidden layer to head). Per-epoch shuffles never touch that
stream; they come from ``epoch_rng(seed, epoch)``.
"""

import numpy as np

from collapse.exceptions import ArgumentError, ShapeError

Matrix = np.ndarray
RngState = np.random.Generator


def as_matrix(values):
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {matrix.shape}")
    return matrix


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def run_rng(seed):
    if seed < 0:
        raise ArgumentError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def epoch_rng(seed, epoch):
    # Spawn key keeps the shuffle stream independent of the init stream.
    sequence = np.random.SeedSequence(seed, spawn_key=(epoch,))
    return np.random.Generator(np.random.PCG64(sequence))


def gaussian(rng, n):
    if n < 0:
        raise ArgumentError(f"cannot draw {n} values")
    return rng.standard_normal(n)


def kaiming_normal(rng, fan_in, fan_out):
    """``fan_out x fan_in`` matrix with entries drawn from N(0, 2 / fan_in)."""
    if fan_in < 1 or fan_out < 1:
        raise ArgumentError(f"fan_in and fan_out must be >= 1, got {fan_in}, {fan_out}")
    std = np.sqrt(2.0 / fan_in)
    return gaussian(rng, fan_in * fan_out).reshape(fan_out, fan_in) * std


def all_finite(*arrays):
    return all(np.isfinite(array).all() for array in arrays)
