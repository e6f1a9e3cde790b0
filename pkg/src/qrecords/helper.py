"""Helper functions for qrecords."""
from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from qrecords.const import NORM_DRIFT_LIMIT, UNITARY_TOL
from qrecords.types import NumericalViolationError

if TYPE_CHECKING:
    from collections.abc import Sequence

    from qrecords.qstate import StateVector

__all__ = [
    "ComplexPair",
    "to_complex",
    "to_pair",
    "pairs_to_vector",
    "vector_to_pairs",
    "pairs_to_matrix",
    "matrix_to_pairs",
    "is_unitary",
    "check_norm",
    "make_rng",
    "sample_counts",
]

ComplexPair = tuple[float, float]


def to_complex(pair: Sequence[float]) -> complex:
    """Return the complex number of an [re, im] pair."""
    return complex(pair[0], pair[1])


def to_pair(value: complex) -> ComplexPair:
    """Return the [re, im] pair of a complex number."""
    value = complex(value)
    return (float(value.real), float(value.imag))


def pairs_to_vector(pairs: Sequence[Sequence[float]]) -> np.ndarray:
    """Convert a list of [re, im] pairs to a complex vector."""
    return np.array([to_complex(p) for p in pairs], dtype=complex)


def vector_to_pairs(vector: Sequence[complex] | np.ndarray) -> tuple[ComplexPair, ...]:
    """Convert a complex vector to [re, im] pairs."""
    return tuple(to_pair(v) for v in np.asarray(vector, dtype=complex))


def pairs_to_matrix(rows: Sequence[Sequence[Sequence[float]]]) -> np.ndarray:
    """Convert rows of [re, im] pairs to a complex matrix."""
    return np.array([[to_complex(p) for p in row] for row in rows], dtype=complex)


def matrix_to_pairs(
    matrix: np.ndarray,
) -> tuple[tuple[ComplexPair, ...], ...]:
    """Convert a complex matrix to rows of [re, im] pairs."""
    return tuple(vector_to_pairs(row) for row in np.asarray(matrix, dtype=complex))


def is_unitary(matrix: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    """Return if a square matrix is unitary within tolerance."""
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    identity = np.eye(matrix.shape[0])
    return bool(np.max(np.abs(matrix.conj().T @ matrix - identity)) <= tol)


def check_norm(
    state: StateVector,
    context: str,
    limit: float = NORM_DRIFT_LIMIT,
) -> float:
    """Raise NumericalViolationError when a state drifted off unit norm."""
    norm = state.norm()
    if abs(norm - 1.0) > limit:
        msg = f"norm drift {abs(norm - 1.0):.3e} after {context}"
        raise NumericalViolationError(msg)
    return norm


def make_rng(seed: int) -> np.random.Generator:
    """Return the seeded generator every sampler uses."""
    return np.random.default_rng(seed)


def sample_counts(
    weights: Sequence[float],
    samples: int,
    seed: int,
) -> list[int]:
    """Draw seeded categorical samples and return the count per category."""
    if samples < 1:
        msg = "samples has to be an int >= 1"
        raise ValueError(msg)
    probabilities = np.clip(np.asarray(weights, dtype=float), 0.0, None)
    probabilities = probabilities / probabilities.sum()
    draws = make_rng(seed).choice(len(probabilities), size=samples, p=probabilities)
    return [int(c) for c in np.bincount(draws, minlength=len(probabilities))]
