"""Dense float64 primitives: matrix product, activations and seeded masks.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. Random
draws come from ``numpy.random.Generator`` on the PCG64 bit generator, whose
output stream is fixed for a given seed on every platform numpy supports.
"""
from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError

SeededRng = np.random.Generator


def make_rng(seed: int) -> SeededRng:
    """PCG64 generator for ``seed``; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    m = np.asarray(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1) if rows is None else m.reshape(rows, cols)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    if rows is not None and m.shape != (rows, cols):
        raise ShapeError(f"expected shape {(rows, cols)}, got {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows and is cheaper than sign-split exp
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": np.tanh, "relu": relu}


def activate(kind: str, m: np.ndarray) -> np.ndarray:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ParameterError(f"unknown activation {kind!r}") from None
    return fn(np.asarray(m, dtype=np.float64))


def bernoulli_mask(rng: SeededRng, rows: int, cols: int, keep_prob: float) -> np.ndarray:
    """Inverted-dropout mask: entries are 0 or 1/keep_prob, mean 1."""
    if not 0.0 < keep_prob <= 1.0:
        raise ParameterError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if keep_prob == 1.0:
        return np.ones((rows, cols))
    keep = rng.random((rows, cols)) < keep_prob
    return keep / keep_prob
