"""
Estimateurs Monte Carlo (intensités produit, produits de spins, intervalles
vides, moments factoriels) et comparaisons aux prédictions.

Chaque estimateur conserve les sommes brutes sum_x, sum_x2 de ses
échantillons : la fusion de deux ensembles disjoints reproduit exactement
l'estimation sur l'ensemble réuni.
"""

import logging
import math
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erfc, ndtri

from schemas import BinSpec, ComparisonReport, IntensityEstimate
from simulator import Ensemble, particle_counts, spin_products

logger = logging.getLogger(__name__)

# ==================== CONFIGURATION ====================

DEFAULT_THRESHOLD = 3.0
EXACT_ATOL = 1e-12


class EstimationError(ValueError):
    pass


# ==================== ESTIMATES ====================

def _summarize(sum_x: float, sum_x2: float, n: int, scale: float) -> Tuple[float, float]:
    mean = sum_x / n
    var = max((sum_x2 - n * mean * mean) / (n - 1), 0.0)
    return scale * mean, scale * math.sqrt(var / n)


def estimate_from_samples(samples, scale: float = 1.0, bins: Optional[BinSpec] = None) -> IntensityEstimate:
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise EstimationError(f"au moins deux répliques sont requises ({samples.size} fournie(s))")
    sum_x = float(samples.sum())
    sum_x2 = float(np.dot(samples, samples))
    value, stderr = _summarize(sum_x, sum_x2, samples.size, scale)
    return IntensityEstimate(value=value, stderr=stderr, replicas=samples.size, bins=bins,
                             scale=scale, sum_x=sum_x, sum_x2=sum_x2)


def merge_estimates(a: IntensityEstimate, b: IntensityEstimate) -> IntensityEstimate:
    if a.scale != b.scale or a.bins != b.bins:
        raise EstimationError("estimations incompatibles (fenêtres ou normalisation différentes)")
    n = a.replicas + b.replicas
    sum_x, sum_x2 = a.sum_x + b.sum_x, a.sum_x2 + b.sum_x2
    value, stderr = _summarize(sum_x, sum_x2, n, a.scale)
    return IntensityEstimate(value=value, stderr=stderr, replicas=n, bins=a.bins,
                             scale=a.scale, sum_x=sum_x, sum_x2=sum_x2)


def _snapshots(ensemble: Ensemble, t: float):
    try:
        return ensemble.at(t)
    except KeyError:
        raise EstimationError(f"instantané manquant au temps t={t} (disponibles : {ensemble.times})") from None


def _bin_product(ensemble: Ensemble, bins: Optional[BinSpec], shift: float) -> np.ndarray:
    product = np.ones(ensemble.replicas)
    if bins is None:
        return product
    half = 0.5 * bins.width
    for t, z in bins.centers:
        _snapshots(ensemble, t)
        product *= particle_counts(ensemble, t, z + shift - half, z + shift + half)
    return product


def _averaged(ensemble: Ensemble, shifts: Iterable[float], sample) -> np.ndarray:
    shifts = list(shifts)
    if not shifts:
        raise EstimationError("liste de translations vide")
    return sum(sample(shift) for shift in shifts) / len(shifts)


def estimate_product_intensity(ensemble: Ensemble, bins: BinSpec,
                               shifts: Sequence[float] = (0.0,)) -> IntensityEstimate:
    """
    eps^{-n} E[prod_i N_{t_i}([z_i - eps/2, z_i + eps/2])], avec les mêmes répliques
    à tous les temps. Les translations moyennent l'échantillon de chaque réplique
    sur des fenêtres décalées (loi invariante par translation).
    """
    samples = _averaged(ensemble, shifts, lambda shift: _bin_product(ensemble, bins, shift))
    return estimate_from_samples(samples, bins.width ** -len(bins.centers), bins)


def estimate_spin_product(ensemble: Ensemble, t: float, ys: Sequence[float],
                          bins: Optional[BinSpec] = None,
                          shifts: Sequence[float] = (0.0,)) -> IntensityEstimate:
    """E[prod_j S_t(y_j) prod_i N_{t_i}(bin_i)] eps^{-n}"""
    if len(ys) % 2:
        raise EstimationError(f"nombre de spins impair ({len(ys)})")
    _snapshots(ensemble, t)

    def sample(shift: float) -> np.ndarray:
        spins = spin_products(ensemble, t, [y + shift for y in ys])
        return spins * _bin_product(ensemble, bins, shift)

    scale = 1.0 if bins is None else bins.width ** -len(bins.centers)
    return estimate_from_samples(_averaged(ensemble, shifts, sample), scale, bins)


def estimate_empty_intervals(ensemble: Ensemble, t: float, intervals: Sequence[Tuple[float, float]],
                             shifts: Sequence[float] = (0.0,)) -> IntensityEstimate:
    """P(N_t([a_k, b_k]) = 0 pour tout k)"""
    _snapshots(ensemble, t)

    def sample(shift: float) -> np.ndarray:
        empty = np.ones(ensemble.replicas, dtype=bool)
        for a, b in intervals:
            empty &= particle_counts(ensemble, t, a + shift, b + shift) == 0
        return empty.astype(float)

    return estimate_from_samples(_averaged(ensemble, shifts, sample))


def estimate_factorial_moment(ensemble: Ensemble, t: float, a: float, b: float, k: int) -> IntensityEstimate:
    """E[N(N-1)...(N-k+1)], N = N_t([a, b])"""
    _snapshots(ensemble, t)
    n = particle_counts(ensemble, t, a, b)
    samples = np.ones_like(n)
    for j in range(k):
        samples *= n - j
    return estimate_from_samples(samples)


def log_log_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise EstimationError("pente log-log indéfinie pour des valeurs non positives")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


# ==================== COMPARISONS ====================

def bonferroni_threshold(comparisons: int, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Seuil |z| gardant le taux d'erreur global d'un seul test au seuil `threshold`"""
    if comparisons < 1:
        return threshold
    p = erfc(threshold / math.sqrt(2.0))
    return float(ndtri(1.0 - p / (2.0 * comparisons)))


def _report(name: str, predicted: float, value: float, stderr: float, threshold: float,
            estimate: Optional[IntensityEstimate] = None) -> ComparisonReport:
    diff = value - predicted
    if stderr > 0:
        z = diff / stderr
        passed = abs(z) <= threshold
    elif abs(diff) <= EXACT_ATOL:
        z, passed = 0.0, True
    else:
        logger.warning("%s : erreur standard nulle et écart %.3e", name or "comparaison", diff)
        z, passed = math.copysign(math.inf, diff), False
    return ComparisonReport(name=name, predicted=predicted, value=value, estimate=estimate,
                            z_score=z, threshold=threshold, passed=passed)


def compare(predicted: float, estimate: IntensityEstimate, threshold: float = DEFAULT_THRESHOLD,
            name: str = "") -> ComparisonReport:
    """z = (estimation - prédiction) / erreur standard ; succès si |z| <= seuil"""
    return _report(name, predicted, estimate.value, estimate.stderr, threshold, estimate)


def compare_estimates(a: IntensityEstimate, b: IntensityEstimate, threshold: float = DEFAULT_THRESHOLD,
                      name: str = "") -> ComparisonReport:
    """Comparaison de deux estimations indépendantes, erreur jointe sqrt(se_a^2 + se_b^2)"""
    joint = math.hypot(a.stderr, b.stderr)
    return _report(name, b.value, a.value, joint, threshold, a)


def check_tolerance(name: str, predicted: float, value: float, tolerance: float) -> ComparisonReport:
    """Contrôle déterministe : succès si |valeur - attendu| <= tolérance"""
    if not tolerance > 0:
        raise EstimationError(f"tolérance non positive : {tolerance}")
    diff = value - predicted
    return ComparisonReport(name=name, predicted=predicted, value=value, tolerance=tolerance,
                            z_score=diff / tolerance, threshold=1.0,
                            passed=bool(math.isfinite(diff) and abs(diff) <= tolerance))
