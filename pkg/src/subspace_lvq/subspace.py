"""Document subspaces.

Reduces a word matrix to a fixed-size orthonormal basis (truncated SVD of
the embedding columns) and provides the mean-vector summary used by the
nearest-centroid baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import WordMatrix
from .errors import DataError, DimensionError
from .geometry import sign_normalize_columns

# Singular values below this fraction of the largest are rank noise.
RANK_RTOL = 1e-10


@dataclass
class Subspace:
    """Orthonormal D x k basis summarizing one document, k <= requested d."""

    doc_id: str
    basis: np.ndarray

    @property
    def effective_dim(self) -> int:
        return self.basis.shape[1]


@dataclass
class LabeledSubspace:
    subspace: Subspace
    label: str


def compute_subspace(matrix: WordMatrix, d: int) -> Subspace:
    """Top-``min(d, rank)`` left singular vectors of the word matrix.

    Columns are ordered by descending singular value and sign-normalized
    (largest-magnitude component positive) for backend-independent output.
    Rank-deficient documents keep k < d columns rather than receiving
    fabricated directions; the distance layer treats the missing ones as
    maximally misaligned.
    """
    cols = matrix.columns
    if cols.ndim != 2 or cols.shape[1] < 1:
        raise DataError(f"document {matrix.doc_id!r}: empty word matrix")
    dim = cols.shape[0]
    if d < 1:
        raise DimensionError(f"subspace dimension must be positive, got {d}")
    if d > dim:
        raise DimensionError(
            f"subspace dimension {d} exceeds embedding dimension {dim}"
        )
    left, sigma, _ = np.linalg.svd(cols, full_matrices=False)
    if sigma[0] <= 0.0:
        raise DataError(f"document {matrix.doc_id!r}: zero word matrix")
    rank = int(np.sum(sigma > RANK_RTOL * sigma[0]))
    k = min(d, rank)
    basis = sign_normalize_columns(left[:, :k])
    return Subspace(doc_id=matrix.doc_id, basis=basis)


def mean_vector(matrix: WordMatrix) -> np.ndarray:
    """Arithmetic mean of the word-vector columns."""
    cols = matrix.columns
    if cols.ndim != 2 or cols.shape[1] < 1:
        raise DataError(f"document {matrix.doc_id!r}: empty word matrix")
    return cols.mean(axis=1)
