"""
Algèbre des matrices antisymétriques réelles : Pfaffien, déterminant, congruence
"""

import logging
from typing import Union

import numpy as np
from scipy.linalg import lu_factor

logger = logging.getLogger(__name__)

# ==================== CONFIGURATION ====================

ANTISYMMETRY_ATOL = 1e-12
PIVOT_THRESHOLD = 1e-300


class SkewMatrixError(ValueError):
    pass


# ==================== SKEW MATRIX ====================

class SkewMatrix:
    """
    Matrice réelle antisymétrique de dimension paire.

    L'antisymétrie est vérifiée à ANTISYMMETRY_ATOL près puis imposée
    exactement : A <- (A - A^T) / 2.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries, check: bool = True, atol: float = ANTISYMMETRY_ATOL):
        a = np.array(entries, dtype=float)
        if a.size == 0:
            a = np.zeros((0, 0))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise SkewMatrixError(f"matrice non carrée : forme {a.shape}")
        if a.shape[0] % 2 != 0:
            raise SkewMatrixError(f"dimension impaire : {a.shape[0]}")
        if not np.all(np.isfinite(a)):
            raise SkewMatrixError("coefficients non finis")
        if check and a.shape[0] > 0:
            defect = np.max(np.abs(a + a.T))
            if defect > atol:
                raise SkewMatrixError(f"matrice non antisymétrique (écart {defect:.3e} > {atol:.1e})")
        a = 0.5 * (a - a.T)
        a.setflags(write=False)
        self._entries = a

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    def to_array(self) -> np.ndarray:
        return self._entries.copy()

    def __repr__(self) -> str:
        return f"SkewMatrix(dim={self.dim})"


MatrixLike = Union[SkewMatrix, np.ndarray]


def _as_skew(a: MatrixLike) -> SkewMatrix:
    return a if isinstance(a, SkewMatrix) else SkewMatrix(a)


# ==================== PFAFFIAN ====================

def pfaffian(a: MatrixLike) -> float:
    """
    Pfaffien par tridiagonalisation antisymétrique de Parlett-Reid
    avec pivotage partiel ; chaque échange de lignes/colonnes change le signe.
    """
    a = _as_skew(a).to_array()
    n = a.shape[0]
    result = 1.0
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(a[k + 1:, k])))
        if kp != k + 1:
            a[[k + 1, kp], k:] = a[[kp, k + 1], k:]
            a[k:, [k + 1, kp]] = a[k:, [kp, k + 1]]
            result = -result
        pivot = a[k, k + 1]
        if abs(pivot) <= PIVOT_THRESHOLD:
            # configuration dégénérée : rang déficient
            return 0.0
        result *= pivot
        if k + 2 < n:
            tau = a[k, k + 2:] / pivot
            col = a[k + 2:, k + 1].copy()
            a[k + 2:, k + 2:] += np.outer(tau, col) - np.outer(col, tau)
    return float(result)


def determinant(a: MatrixLike) -> float:
    """Déterminant par factorisation LU pivotée (oracle pour Pf^2 = det)"""
    a = _as_skew(a).entries
    n = a.shape[0]
    if n == 0:
        return 1.0
    lu, piv = lu_factor(a, check_finite=False)
    swaps = int(np.count_nonzero(piv != np.arange(n)))
    sign = -1.0 if swaps % 2 else 1.0
    return float(sign * np.prod(np.diag(lu)))


def congruence(a: MatrixLike, e) -> SkewMatrix:
    """E A E^T, antisymétrisée exactement ; Pf(E A E^T) = det(E) Pf(A)"""
    a = _as_skew(a)
    e = np.asarray(e, dtype=float)
    if e.ndim != 2 or e.shape != (a.dim, a.dim):
        raise SkewMatrixError(f"dimensions incompatibles : A {a.dim}x{a.dim}, E {e.shape}")
    return SkewMatrix(e @ a.entries @ e.T, check=False)


def swap_pair(a: MatrixLike, i: int, j: int) -> SkewMatrix:
    """Échange simultané des lignes et colonnes i, j"""
    m = _as_skew(a).to_array()
    order = np.arange(m.shape[0])
    order[[i, j]] = order[[j, i]]
    return SkewMatrix(m[np.ix_(order, order)], check=False)
