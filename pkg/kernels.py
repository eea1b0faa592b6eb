"""
Noyaux : fonction d'erreur F, densités gaussiennes, noyau à temps fixe K_t,
noyau espace-temps étendu K et noyau mixte spin/intensité.

Formes closes de G_{t-s} K^{ij}_s (t > s), obtenues à partir de
K^{12}_s = g_{2s}, K^{11}_s = g'_{2s} et d/dz K^{22}_s = delta - g_{2s} :

    K^{11} = g'_{s+t}(z)
    K^{12} = g_{s+t}(z) - w g_{t-s}(z)
    K^{21} = -g_{s+t}(z)
    K^{22} = Phi_{t-s}(z) - Phi_{t+s}(z)

Le poids w du terme de transition dépend de la convention (voir Convention)
et toutes ces formes sont contrôlées par propagated_block_quadrature.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc, ndtr

from schemas import Convention, ModelKind, SpaceTimePoint

logger = logging.getLogger(__name__)

# ==================== CONFIGURATION ====================

SQRT_PI = math.sqrt(math.pi)
QUAD_ATOL = 1e-10
QUAD_WINDOW_SD = 12.0
FACE_LIMIT = 0.5  # F(0) : valeur limite de K^{22}_t(y_j - y_i) quand y_j descend vers y_i


class KernelDomainError(ValueError):
    pass


class BlockShape(str, Enum):
    B2X2 = "2x2"
    R1X2 = "1x2"
    C2X1 = "2x1"
    SCALAR = "1x1"


_SHAPES = {
    BlockShape.B2X2: (2, 2),
    BlockShape.R1X2: (1, 2),
    BlockShape.C2X1: (2, 1),
    BlockShape.SCALAR: (1, 1),
}


@dataclass(frozen=True)
class KernelBlock:
    shape: BlockShape
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(_SHAPES[self.shape])
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __getitem__(self, index):
        return float(self.values[index])

    @property
    def matrix(self) -> np.ndarray:
        return self.values


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def model_scale(model: ModelKind) -> float:
    return 2.0 if ModelKind(model) == ModelKind.CBM else 1.0


def transition_weight(model: ModelKind, convention: Convention = Convention.RESOLVED) -> float:
    """
    Poids du terme singulier g_{t-s} dans K^{12}.

    LITERAL : -2 g_{t-s}, doublé avec le reste du noyau pour CBM.
    RESOLVED : -g_{t-s} pour les deux modèles ; c'est la seule valeur qui donne
    la masse diagonale rho_s(x) g_{t-s}(y - x) d'une même particule suivie de s à t.
    """
    if Convention(convention) == Convention.LITERAL:
        return 2.0 * model_scale(model)
    return 1.0


# ==================== SPECIAL FUNCTIONS ====================

def erf_F(z):
    """
    F(z) = (1/(2 sqrt(pi))) int_z^inf exp(-x^2/4) dx et ses deux dérivées.

    Avec x = 2u : F(z) = (1/sqrt(pi)) int_{z/2}^inf exp(-u^2) du = erfc(z/2) / 2.
    """
    z = np.asarray(z, dtype=float)
    bump = np.exp(-0.25 * z * z)
    f = 0.5 * erfc(0.5 * z)
    f1 = -bump / (2.0 * SQRT_PI)
    f2 = z * bump / (4.0 * SQRT_PI)
    return _out(f), _out(f1), _out(f2)


def _check_variance(r: float) -> None:
    if not r > 0:
        raise KernelDomainError(f"variance non positive : r={r}")


def _g(r, z):
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z / r) / math.sqrt(2.0 * math.pi * r)


def gauss(r: float, z):
    """Densité gaussienne g_r(z) = (2 pi r)^{-1/2} exp(-z^2 / 2r)"""
    _check_variance(r)
    return _out(_g(r, z))


def gauss_prime(r: float, z):
    """Dérivée spatiale g'_r(z) = -(z/r) g_r(z)"""
    _check_variance(r)
    z = np.asarray(z, dtype=float)
    return _out(-(z / r) * _g(r, z))


def gauss_cdf(r: float, z):
    """Phi_r(z) = int_{-inf}^z g_r"""
    _check_variance(r)
    return _out(ndtr(np.asarray(z, dtype=float) / math.sqrt(r)))


# ==================== ENTRY ARRAYS ====================

def equal_time_entries(t: float, z, model: ModelKind = ModelKind.ABM) -> Tuple[np.ndarray, ...]:
    """(K^{11}, K^{12}, K^{21}, K^{22}) de K_t(z), vectorisé en z"""
    if not t > 0:
        raise KernelDomainError(f"temps non positif : t={t}")
    z = np.asarray(z, dtype=float)
    c = model_scale(model)
    rt = math.sqrt(t)
    u = z / rt
    _, f1, f2 = erf_F(u)
    f_abs, _, _ = erf_F(np.abs(u))
    k11 = -f2 / t
    k12 = -f1 / rt
    k22 = np.sign(z) * f_abs
    return c * k11, c * k12, -c * k12, c * k22


def propagated_entries(t: float, s: float, z, model: ModelKind = ModelKind.ABM,
                       convention: Convention = Convention.RESOLVED) -> Tuple[np.ndarray, ...]:
    """G_{t-s} K_s(z) moins le terme de transition, pour t > s > 0"""
    if not (t > s > 0):
        raise KernelDomainError(f"propagation définie pour t > s > 0 (t={t}, s={s})")
    z = np.asarray(z, dtype=float)
    c = model_scale(model)
    late = s + t
    g_late = _g(late, z)
    k11 = c * (-(z / late) * g_late)
    k12 = c * g_late - transition_weight(model, convention) * _g(t - s, z)
    k21 = -c * g_late
    k22 = c * (ndtr(z / math.sqrt(t - s)) - ndtr(z / math.sqrt(late)))
    return k11, k12, k21, k22


def extended_entries(tp: float, tq: float, z, model: ModelKind = ModelKind.ABM,
                     convention: Convention = Convention.RESOLVED) -> Tuple[np.ndarray, ...]:
    """Entrées de K(tp, x; tq, y) avec z = y - x, vectorisé en z"""
    if not (tp > 0 and tq > 0):
        raise KernelDomainError(f"temps non positifs : {tp}, {tq}")
    if tp == tq:
        return equal_time_entries(tp, z, model)
    if tp > tq:
        return propagated_entries(tp, tq, z, model, convention)
    # tp < tq : K(p;q) = -K(q;p)^T
    p11, p12, p21, p22 = propagated_entries(tq, tp, -np.asarray(z, dtype=float), model, convention)
    return -p11, -p21, -p12, -p22


def _block(entries) -> KernelBlock:
    k11, k12, k21, k22 = (float(e) for e in entries)
    return KernelBlock(BlockShape.B2X2, np.array([[k11, k12], [k21, k22]]))


# ==================== BLOCKS ====================

def equal_time_block(t: float, z: float, model: ModelKind = ModelKind.ABM) -> KernelBlock:
    return _block(equal_time_entries(t, z, model))


def propagated_block(t: float, s: float, z: float, model: ModelKind = ModelKind.ABM,
                     convention: Convention = Convention.RESOLVED) -> KernelBlock:
    return _block(propagated_entries(t, s, z, model, convention))


def propagated_block_quadrature(t: float, s: float, z: float, model: ModelKind = ModelKind.ABM,
                                convention: Convention = Convention.RESOLVED) -> KernelBlock:
    """
    Oracle : chaque entrée est int g_{t-s}(z - w) K^{ij}_s(w) dw par quadrature
    adaptative (QUADPACK) sur z +/- 12 sqrt(t) ; le terme de transition est ajouté
    analytiquement.
    """
    if not (t > s > 0):
        raise KernelDomainError(f"propagation définie pour t > s > 0 (t={t}, s={s})")
    r = t - s
    sd = math.sqrt(r)
    lo = z - QUAD_WINDOW_SD * math.sqrt(t)
    hi = z + QUAD_WINDOW_SD * math.sqrt(t)
    breaks = {z + k * sd for k in range(-4, 5)} | {0.0}
    breaks = sorted(b for b in breaks if lo < b < hi)

    def convolve(index: int) -> float:
        def integrand(w: float) -> float:
            return float(_g(r, z - w)) * float(equal_time_entries(s, w)[index])

        value, err = quad(integrand, lo, hi, points=breaks, epsabs=QUAD_ATOL, epsrel=QUAD_ATOL, limit=500)
        if err > 10 * QUAD_ATOL:
            logger.warning("quadrature K^%d : erreur estimée %.2e", index, err)
        return value

    c = model_scale(model)
    k11, k12, k21, k22 = (c * convolve(i) for i in range(4))
    k12 -= transition_weight(model, convention) * float(_g(r, z))
    return _block((k11, k12, k21, k22))


def extended_block(p: SpaceTimePoint, q: SpaceTimePoint, model: ModelKind = ModelKind.ABM,
                   convention: Convention = Convention.RESOLVED) -> KernelBlock:
    """K(p.t, p.z; q.t, q.z)"""
    return _block(extended_entries(p.t, q.t, q.z - p.z, model, convention))


# ==================== MIXED KERNEL ====================

class PointKind(str, Enum):
    SPIN = "spin"
    INTENSITY = "intensity"


@dataclass(frozen=True)
class AugmentedPoint:
    kind: PointKind
    t: float
    x: float
    index: int

    @classmethod
    def spin(cls, t: float, y: float, index: int) -> "AugmentedPoint":
        return cls(PointKind.SPIN, t, y, index)

    @classmethod
    def intensity(cls, point: SpaceTimePoint, index: int) -> "AugmentedPoint":
        return cls(PointKind.INTENSITY, point.t, point.z, index)

    @property
    def is_spin(self) -> bool:
        return self.kind == PointKind.SPIN

    def as_point(self) -> SpaceTimePoint:
        return SpaceTimePoint(t=self.t, z=self.x)


def _spin_row(t_spin: float, y: float, point: AugmentedPoint) -> np.ndarray:
    """(G K^{21}_{t_j}(z_j - y), G K^{22}_{t_j}(z_j - y)), sans propagation si t_j = t"""
    if point.t > t_spin:
        raise KernelDomainError(f"point d'intensité au temps {point.t} > temps des spins {t_spin}")
    z = point.x - y
    if point.t == t_spin:
        _, _, k21, k22 = equal_time_entries(t_spin, z)
    else:
        _, _, k21, k22 = propagated_entries(t_spin, point.t, z)
    return np.array([[float(k21), float(k22)]])


def _spin_pair(t_spin: float, d: float) -> float:
    if d == 0.0:
        return FACE_LIMIT
    return float(equal_time_entries(t_spin, d)[3])


def mixed_entry(a: AugmentedPoint, b: AugmentedPoint, t_spin: float,
                convention: Convention = Convention.RESOLVED) -> KernelBlock:
    """
    Entrée (a, b) du noyau mixte (ABM). Les spins occupent les premières lignes,
    dans l'ordre croissant des positions.
    """
    if a.is_spin and b.is_spin:
        if a.index == b.index:
            return KernelBlock(BlockShape.SCALAR, np.zeros((1, 1)))
        if a.index > b.index:
            return KernelBlock(BlockShape.SCALAR, -mixed_entry(b, a, t_spin, convention).values)
        d = b.x - a.x
        if d < 0:
            raise KernelDomainError(f"spins mal ordonnés : y_{a.index}={a.x} > y_{b.index}={b.x}")
        return KernelBlock(BlockShape.SCALAR, np.array([[_spin_pair(t_spin, d)]]))
    if a.is_spin:
        return KernelBlock(BlockShape.R1X2, _spin_row(t_spin, a.x, b))
    if b.is_spin:
        return KernelBlock(BlockShape.C2X1, -_spin_row(t_spin, b.x, a).T)
    if a.t > t_spin or b.t > t_spin:
        raise KernelDomainError(f"point d'intensité postérieur au temps des spins {t_spin}")
    return extended_block(a.as_point(), b.as_point(), ModelKind.ABM, convention)
