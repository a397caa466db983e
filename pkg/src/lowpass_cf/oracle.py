"""Dense spectral reference for small graphs (test use only).

Graph filters here go through an explicit eigendecomposition,
H(L) x = U diag(h(lam)) U^T x, independently of the polynomial path.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError, ParameterError, ShapeError

ORACLE_CAP = 512


class SpectralDecomposition(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _values(G):
    return np.asarray(getattr(G, "values", G), dtype=np.float64)


def laplacian(G) -> np.ndarray:
    """I - P for a symmetric similarity matrix (or SimilarityGraph) P."""
    P = _values(G)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {P.shape}")
    if np.any(np.abs(P - P.T) > 1e-12 * np.maximum(1.0, np.abs(P))):
        raise DomainError("similarity matrix is not symmetric")
    return np.eye(P.shape[0]) - P


def combinatorial_laplacian(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    return np.diag(A.sum(axis=1)) - A


def eigendecompose(L, cap: int = ORACLE_CAP) -> SpectralDecomposition:
    L = np.asarray(L, dtype=np.float64)
    if L.shape[0] > cap:
        raise ParameterError(f"oracle refuses n={L.shape[0]} > cap {cap}; it is for test-scale graphs")
    lam, U = np.linalg.eigh(L)
    return SpectralDecomposition(lam, U)


def spectral_filter_apply(D: SpectralDecomposition, h: Callable[[np.ndarray], np.ndarray], x) -> np.ndarray:
    """U diag(h(lam)) U^T x; ``x`` may be a vector or a matrix of column signals."""
    lam, U = D
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != U.shape[0]:
        raise ShapeError(f"signal length {x.shape[0]} != graph size {U.shape[0]}")
    gains = np.broadcast_to(np.asarray(h(lam), dtype=np.float64), lam.shape)
    coeffs = U.T @ x
    coeffs = gains[:, None] * coeffs if coeffs.ndim == 2 else gains * coeffs
    return U @ coeffs


def spectral_filter_matrix(D: SpectralDecomposition, h) -> np.ndarray:
    lam, U = D
    return (U * np.asarray(h(lam), dtype=np.float64)) @ U.T


def smoothness(x, L) -> float:
    """Quadratic form x^T L x."""
    x = np.asarray(x, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    if L.shape != (x.size, x.size):
        raise ShapeError(f"signal length {x.size} does not match operator {L.shape}")
    return float(x @ L @ x)


def pairwise_smoothness(x, A) -> float:
    """sum_{i,j} A_ij (x_i - x_j)^2 / 2, which equals x^T (D - A) x for symmetric A.

    The unhalved sum over ordered pairs counts each edge twice.
    """
    x = np.asarray(x, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    return float(0.5 * np.sum(A * (x[:, None] - x[None, :]) ** 2))
