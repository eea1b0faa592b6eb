"""
Intensités multi-temps (Pfaffien du noyau étendu), corrélations mixtes
spin/intensité et contrôles numériques associés (équation de la chaleur,
réduction sur les faces, échelle en epsilon du terme de transition).
"""

import logging
import math
from itertools import product
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from kernels import (
    AugmentedPoint,
    equal_time_block,
    equal_time_entries,
    extended_block,
    extended_entries,
    mixed_entry,
)
from schemas import Configuration, Convention, IntensityValue, ModelKind, QuadratureValue, SpaceTimePoint
from skewalg import SkewMatrix, pfaffian

logger = logging.getLogger(__name__)

# ==================== CONFIGURATION ====================

CONSISTENCY_ATOL = 1e-10
NEGATIVITY_ATOL = 1e-10
DEFAULT_H = 1e-2
EPSILON_NODES_PER_PANEL = 8
EPSILON_REFINED_NODES = 12
EPSILON_MIN_PANELS = 8
EPSILON_RTOL = 1e-6
MOMENT_NODES = 12


class ConfigurationError(ValueError):
    pass


class QuadratureError(ValueError):
    pass


# ==================== ASSEMBLY ====================

def _spin_prefactor(m: int, convention: Convention) -> float:
    base = -2.0 if Convention(convention) == Convention.LITERAL else 2.0
    return base ** m


def _assemble(nodes: Sequence[AugmentedPoint], t_spin: float, convention: Convention,
              debug: bool) -> SkewMatrix:
    sizes = [1 if node.is_spin else 2 for node in nodes]
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(int)
    a = np.zeros((offsets[-1], offsets[-1]))
    for i, j in ((i, j) for i in range(len(nodes)) for j in range(i, len(nodes))):
        block = mixed_entry(nodes[i], nodes[j], t_spin, convention).matrix
        rows = slice(offsets[i], offsets[i + 1])
        cols = slice(offsets[j], offsets[j + 1])
        a[rows, cols] = block
        if i == j:
            continue
        a[cols, rows] = -block.T
        if debug:
            mirror = mixed_entry(nodes[j], nodes[i], t_spin, convention).matrix
            gap = float(np.max(np.abs(mirror + block.T)))
            if gap > CONSISTENCY_ATOL:
                raise ConfigurationError(f"entrées ({i},{j}) et ({j},{i}) incohérentes : écart {gap:.3e}")
    return SkewMatrix(a)


def _check_sign(value: float, label: str) -> None:
    if value < -NEGATIVITY_ATOL:
        logger.warning("%s négative : %.3e", label, value)


def multi_time_intensity(points: Sequence[SpaceTimePoint], model: ModelKind = ModelKind.ABM,
                         convention: Convention = Convention.RESOLVED,
                         debug: bool = False) -> IntensityValue:
    """
    rho_{t_1...t_n}(z_1, ..., z_n) = Pf[K(t_i, z_i; t_j, z_j)].

    Seuls les blocs i <= j sont évalués ; le mode debug évalue aussi les blocs
    i > j et vérifie l'antisymétrie à CONSISTENCY_ATOL près.
    """
    points = list(points)
    if not points:
        raise ConfigurationError("au moins un point d'intensité est requis")
    n = len(points)
    a = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for j in range(i, n):
            block = extended_block(points[i], points[j], model, convention).matrix
            a[2 * i:2 * i + 2, 2 * j:2 * j + 2] = block
            if j > i:
                a[2 * j:2 * j + 2, 2 * i:2 * i + 2] = -block.T
                if debug:
                    mirror = extended_block(points[j], points[i], model, convention).matrix
                    gap = float(np.max(np.abs(mirror + block.T)))
                    if gap > CONSISTENCY_ATOL:
                        raise ConfigurationError(f"blocs ({i},{j}) et ({j},{i}) incohérents : écart {gap:.3e}")
    value = pfaffian(SkewMatrix(a))
    _check_sign(value, "intensité")
    return IntensityValue(value=value, dimension=2 * n, convention=convention)


def single_time_intensity(t: float, zs: Sequence[float], model: ModelKind = ModelKind.ABM) -> IntensityValue:
    """rho_t(z_1, ..., z_n) = Pf[K_t(z_j - z_i)], assemblé uniquement à partir de K_t"""
    zs = [float(z) for z in zs]
    if not zs:
        raise ConfigurationError("au moins une position est requise")
    n = len(zs)
    a = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for j in range(n):
            a[2 * i:2 * i + 2, 2 * j:2 * j + 2] = equal_time_block(t, zs[j] - zs[i], model).matrix
    return IntensityValue(value=pfaffian(SkewMatrix(a)), dimension=2 * n)


def _phi(t_spin: float, ys: Sequence[float], points: Sequence[SpaceTimePoint],
         convention: Convention, debug: bool = False) -> Tuple[float, int]:
    nodes: List[AugmentedPoint] = [AugmentedPoint.spin(t_spin, y, k) for k, y in enumerate(ys)]
    nodes += [AugmentedPoint.intensity(p, len(ys) + k) for k, p in enumerate(points)]
    matrix = _assemble(nodes, t_spin, convention, debug)
    return _spin_prefactor(len(ys) // 2, convention) * pfaffian(matrix), matrix.dim


def mixed_spin_intensity(cfg: Configuration, convention: Convention = Convention.RESOLVED,
                         debug: bool = False) -> IntensityValue:
    """
    Phi = c_m Pf[K^(s_i, x_i; s_j, x_j)], lignes de spin en premier.

    c_m = 2^m (RESOLVED) ou (-2)^m (LITERAL). Pour m = 0 on retrouve
    exactement multi_time_intensity.
    """
    if cfg.m == 0 and cfg.n == 0:
        raise ConfigurationError("configuration vide : ni spins ni points d'intensité")
    if cfg.m > 0 and cfg.model != ModelKind.ABM:
        raise ConfigurationError("corrélations de spin non définies pour CBM")
    if cfg.spins is None:
        if cfg.model != ModelKind.ABM:
            return multi_time_intensity(cfg.points, cfg.model, convention, debug)
        t_spin, ys = math.inf, ()
    else:
        t_spin, ys = cfg.spins.t, cfg.spins.ys
    value, dim = _phi(t_spin, ys, cfg.points, convention, debug)
    return IntensityValue(value=value, dimension=dim, convention=convention)


# ==================== PDE / BOUNDARY CHECKS ====================

def heat_residual(cfg: Configuration, h: float = DEFAULT_H, h_t: Optional[float] = None,
                  convention: Convention = Convention.RESOLVED) -> float:
    """
    |d_t Phi - (1/2) Laplacien_y Phi| par différences centrées au point cfg.

    Pas temporel par défaut h/10 : les deux erreurs de troncature décroissent
    alors en h^2 ensemble.
    """
    if cfg.m == 0:
        return 0.0
    h_t = h / 10.0 if h_t is None else h_t
    t, ys = cfg.spins.t, list(cfg.spins.ys)
    t_last = max((p.t for p in cfg.points), default=0.0)
    if t - h_t <= t_last:
        raise ConfigurationError(f"pas temporel trop grand : t - h_t = {t - h_t} <= t_n = {t_last}")
    if any(b - a <= 2 * h for a, b in zip(ys, ys[1:])):
        raise ConfigurationError(f"spins trop proches du bord de la cellule pour le pas h={h}")

    def phi(time: float, positions: Sequence[float]) -> float:
        return _phi(time, positions, cfg.points, convention)[0]

    centre = phi(t, ys)
    d_t = (phi(t + h_t, ys) - phi(t - h_t, ys)) / (2 * h_t)
    laplacian = 0.0
    for k in range(len(ys)):
        up = list(ys)
        down = list(ys)
        up[k] += h
        down[k] -= h
        laplacian += (phi(t, up) - 2 * centre + phi(t, down)) / (h * h)
    return abs(d_t - 0.5 * laplacian)


def face_reduction_residual(cfg: Configuration, i: int, tol: float = 0.0,
                            convention: Convention = Convention.RESOLVED) -> float:
    """
    |Phi(t, y) - Phi(t, y sans y_i, y_{i+1})| sur la face y_i = y_{i+1}
    (indice i à partir de 1). tol > 0 accepte une face perturbée.
    """
    if cfg.spins is None:
        raise ConfigurationError("aucun spin : pas de face à réduire")
    ys = list(cfg.spins.ys)
    if not 1 <= i < len(ys):
        raise ConfigurationError(f"indice de face hors bornes : i={i} pour {len(ys)} spins")
    gap = ys[i] - ys[i - 1]
    if gap < 0 or gap > tol:
        raise ConfigurationError(f"pas de paire coïncidente en i={i} : y_i={ys[i - 1]}, y_(i+1)={ys[i]}")
    full, _ = _phi(cfg.spins.t, ys, cfg.points, convention)
    reduced, _ = _phi(cfg.spins.t, ys[:i - 1] + ys[i + 1:], cfg.points, convention)
    return abs(full - reduced)


# ==================== GRID QUADRATURE ====================

def pair_intensity_grid(tp: float, xs, tq: float, ys, model: ModelKind = ModelKind.ABM,
                        convention: Convention = Convention.RESOLVED) -> np.ndarray:
    """rho(tp, xs[i]; tq, ys[j]) sur la grille produit, par développement du Pfaffien 4x4"""
    xs = np.asarray(xs, dtype=float)[:, None]
    ys = np.asarray(ys, dtype=float)[None, :]
    a12 = float(equal_time_entries(tp, 0.0, model)[1])
    a34 = float(equal_time_entries(tq, 0.0, model)[1])
    a13, a14, a23, a24 = extended_entries(tp, tq, ys - xs, model, convention)
    return a12 * a34 - a13 * a24 + a14 * a23


def _panel_nodes(lo: float, hi: float, panels: int, per_panel: int) -> Tuple[np.ndarray, np.ndarray]:
    ref_x, ref_w = leggauss(per_panel)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    return (mid + half * ref_x).ravel(), (half * ref_w).ravel()


def two_time_epsilon_scaling(s: float, t: float, z: float, eps: float,
                             model: ModelKind = ModelKind.ABM,
                             convention: Convention = Convention.RESOLVED) -> QuadratureValue:
    """
    int int_{[z, z+eps]^2} rho_{st}(y, x) dx dy par Gauss-Legendre composite.

    Les panneaux sont plus étroits que sqrt(t - s) pour résoudre g_{t-s} ;
    l'erreur est estimée en relançant avec plus de noeuds par panneau.
    """
    if not (t > s > 0):
        raise ConfigurationError(f"il faut t > s > 0 (s={s}, t={t})")
    if not eps > 0:
        raise ConfigurationError(f"largeur non positive : eps={eps}")
    panels = max(EPSILON_MIN_PANELS, math.ceil(eps / math.sqrt(t - s)))

    def integrate(per_panel: int) -> Tuple[float, int]:
        nodes, weights = _panel_nodes(z, z + eps, panels, per_panel)
        grid = pair_intensity_grid(s, nodes, t, nodes, model, convention)
        return float(weights @ grid @ weights), nodes.size

    coarse, _ = integrate(EPSILON_NODES_PER_PANEL)
    fine, size = integrate(EPSILON_REFINED_NODES)
    if not math.isfinite(fine):
        raise QuadratureError(f"intégrale non finie pour eps={eps}")
    error = abs(fine - coarse)
    converged = error <= max(EPSILON_RTOL * abs(fine), 1e-14)
    if not converged:
        logger.warning("quadrature non convergée (eps=%g, t-s=%g) : écart %.2e", eps, t - s, error)
    return QuadratureValue(value=fine, error=error, nodes=size * size, converged=converged)


def factorial_moment(t: float, length: float, k: int, model: ModelKind = ModelKind.ABM,
                     nodes: int = MOMENT_NODES) -> float:
    """E[N(N-1)...(N-k+1)] pour N = N_t([0, length]), intégrale de rho_k sur [0, length]^k"""
    if k < 1:
        raise ConfigurationError(f"ordre de moment invalide : k={k}")
    if nodes < 2:
        raise QuadratureError(f"nombre de noeuds insuffisant : {nodes}")
    if k == 1:
        return float(equal_time_entries(t, 0.0, model)[1]) * length
    x, w = _panel_nodes(0.0, length, 1, nodes)
    if k == 2:
        return float(w @ pair_intensity_grid(t, x, t, x, model) @ w)
    total = 0.0
    for idx in product(range(nodes), repeat=k):
        zs = x[list(idx)]
        if len(set(idx)) < k:
            # points confondus : rho_k = 0
            continue
        total += float(np.prod(w[list(idx)])) * single_time_intensity(t, zs, model).value
    return total
