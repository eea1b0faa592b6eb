"""
Suites de validation : identités algébriques, formes closes, EDP et
comparaisons Monte Carlo. Chaque suite renvoie une liste de ComparisonReport.
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from intensities import (
    face_reduction_residual,
    factorial_moment,
    heat_residual,
    mixed_spin_intensity,
    multi_time_intensity,
    two_time_epsilon_scaling,
)
from kernels import erf_F, propagated_block, propagated_block_quadrature, propagated_entries
from schemas import (
    BinSpec,
    ComparisonReport,
    Configuration,
    ExperimentConfig,
    ModelKind,
    SimConfig,
    SpaceTimePoint,
    SpinSet,
    SuiteKind,
)
from simulator import Ensemble, make_rng, simulate_ensemble, thin_ensemble
from skewalg import SkewMatrix, congruence, determinant, pfaffian, swap_pair
from stats import (
    check_tolerance,
    compare,
    compare_estimates,
    estimate_empty_intervals,
    estimate_factorial_moment,
    estimate_product_intensity,
    estimate_spin_product,
    log_log_slope,
)

logger = logging.getLogger(__name__)

# ==================== CONFIGURATION ====================

PFAFFIAN_SAMPLES = 500
PFAFFIAN_RTOL = 1e-8
CONGRUENCE_ATOL = 1e-10
CONVOLUTION_ATOL = 1e-8
HEAT_TOL = 1e-3
RICHARDSON_RATIO = 4.0
RICHARDSON_SPREAD = 1.0
FACE_TOL = 1e-10
DERIVATIVE_STEP = 1e-3
DERIVATIVE_TOL = 1e-5
EPSILON_RATIO_SPREAD = 0.2
EPSILON_RTOL = 0.1
MOMENT_SLOPE_SLACK = 0.3
MIN_EXPECTED_EVENTS = 10.0
BIAS_THRESHOLD = 2.0
SHIFT_SPAN = 3.0
# pas irrationnel : aucune translation ne superpose deux fenêtres d'une même paire
SHIFT_STEP = 0.5 * (math.sqrt(5.0) - 1.0)
STREAM_STRIDE = 7919
THINNING_STREAM = 99

PAIR_DISTANCES = [0.25, 0.5, 1.0, 2.0]
TWO_TIME_POSITIONS = [(0.0, 0.0), (0.0, 1.0)]
SPIN_INTERVALS = [(0.0, 0.5), (0.0, 1.0), (-1.0, 1.0)]
MOMENT_LENGTHS = [0.5, 1.0, 2.0]
LAMBDA_SWEEP = [50.0, 100.0, 200.0]


# ==================== CONTEXT ====================

class SuiteContext:
    """Configuration d'expérience et cache des ensembles simulés"""

    def __init__(self, config: ExperimentConfig, ensembles: Optional[Dict[str, Ensemble]] = None):
        self.config = config
        # cache partageable entre contextes : la clé ne dépend que de SimConfig
        self.ensembles: Dict[str, Ensemble] = {} if ensembles is None else ensembles

    @property
    def sim(self) -> SimConfig:
        return self.config.simulation

    @property
    def t_late(self) -> float:
        return self.sim.snapshot_times[-1]

    @property
    def t_early(self) -> float:
        return self.sim.snapshot_times[0]

    @property
    def convention(self):
        return self.config.convention

    def ensemble(self, model: ModelKind, stream: int = 0, **overrides) -> Ensemble:
        """Ensemble simulé pour `model` ; chaque flux a sa propre graine (ensembles indépendants)"""
        seed = self.seed_for(model, stream)
        sim = SimConfig.model_validate({**self.sim.model_dump(), "model": model, "seed": seed, **overrides})
        key = sim.model_dump_json()
        if key not in self.ensembles:
            self.ensembles[key] = simulate_ensemble(sim, self.config.replicas, self.config.workers)
        return self.ensembles[key]

    def seed_for(self, model: ModelKind, stream: int = 0) -> int:
        return (self.sim.seed + STREAM_STRIDE * stream + (1 if model == ModelKind.CBM else 0)) % 2**64

    @property
    def thinning_seed(self) -> int:
        return self.seed_for(ModelKind.ABM, THINNING_STREAM)

    def shifts(self, reach: float = 0.0) -> List[float]:
        """Translations des fenêtres restant dans [-L, L] pour des centres à distance <= reach de 0"""
        span = min(SHIFT_SPAN, self.sim.half_width - reach - self.config.bin_width)
        if span < SHIFT_STEP:
            return [0.0]
        k = int(span // SHIFT_STEP)
        return [j * SHIFT_STEP for j in range(-k, k + 1)]


def _inequality(name: str, lhs: float, rhs: float) -> ComparisonReport:
    """Rapport pour la contrainte stricte lhs < rhs"""
    return ComparisonReport(name=name, predicted=rhs, value=lhs, z_score=(lhs - rhs) / abs(rhs or 1.0),
                            threshold=0.0, passed=lhs < rhs)


def richardson_report(name: str, coarse: float, fine: float) -> ComparisonReport:
    ratio = coarse / fine if fine > 0 else math.inf
    return check_tolerance(name, RICHARDSON_RATIO, ratio, RICHARDSON_SPREAD)


# ==================== DETERMINISTIC SUITES ====================

def _random_skew(rng: np.random.Generator, dim: int) -> SkewMatrix:
    a = np.triu(rng.uniform(-1.0, 1.0, size=(dim, dim)), 1)
    return SkewMatrix(a - a.T)


def run_pfaffian(ctx: SuiteContext) -> List[ComparisonReport]:
    rng = make_rng(ctx.sim.seed, 0)
    worst_det = worst_swap = worst_cong = 0.0
    for _ in range(PFAFFIAN_SAMPLES):
        dim = 2 * int(rng.integers(1, 16))
        a = _random_skew(rng, dim)
        pf = pfaffian(a)
        det = determinant(a)
        worst_det = max(worst_det, abs(pf * pf - det) / max(abs(det), 1e-300))
        i, j = rng.choice(dim, size=2, replace=False)
        worst_swap = max(worst_swap, abs(pfaffian(swap_pair(a, int(i), int(j))) + pf))
        if dim == 6:
            e = rng.uniform(-1.0, 1.0, size=(dim, dim))
            worst_cong = max(worst_cong, abs(pfaffian(congruence(a, e)) - np.linalg.det(e) * pf))
    return [
        check_tolerance("pf^2 = det (écart relatif max)", 0.0, worst_det, PFAFFIAN_RTOL),
        check_tolerance("transposition : Pf -> -Pf", 0.0, worst_swap, CONGRUENCE_ATOL),
        check_tolerance("Pf(E A E^T) = det(E) Pf(A)", 0.0, worst_cong, CONGRUENCE_ATOL),
    ]


def run_convolution(ctx: SuiteContext) -> List[ComparisonReport]:
    reports = []
    zs = np.arange(-5.0, 5.0 + 1e-9, 0.25)
    for t in (0.6, 1.0, 2.0):
        for s in (0.5, 0.9 * t):
            worst = 0.0
            for z in zs:
                closed = propagated_block(t, s, float(z), convention=ctx.convention).matrix
                oracle = propagated_block_quadrature(t, s, float(z), convention=ctx.convention).matrix
                worst = max(worst, float(np.max(np.abs(closed - oracle))))
            reports.append(check_tolerance(f"G K formes closes vs quadrature (t={t:g}, s={s:g})",
                                           0.0, worst, CONVOLUTION_ATOL))
    return reports


def _kernel_heat_residual(t: float, s: float, z: float, h: float, convention) -> float:
    h_t = h / 10.0

    def entries(tt: float, zz: float) -> np.ndarray:
        return np.array(propagated_entries(tt, s, zz, convention=convention), dtype=float)

    d_t = (entries(t + h_t, z) - entries(t - h_t, z)) / (2 * h_t)
    d_zz = (entries(t, z + h) - 2 * entries(t, z) + entries(t, z - h)) / (h * h)
    return float(np.sum(np.abs(d_t - 0.5 * d_zz)))


HEAT_CONFIGURATIONS = [
    Configuration(spins=SpinSet(t=1.0, ys=(-0.5, 0.5)), points=(SpaceTimePoint(t=0.5, z=0.2),)),
    Configuration(spins=SpinSet(t=1.0, ys=(-1.0, -0.3, 0.4, 1.2))),
    Configuration(spins=SpinSet(t=1.5, ys=(0.0, 0.8)),
                  points=(SpaceTimePoint(t=0.5, z=-0.4), SpaceTimePoint(t=1.0, z=0.6))),
]


def run_heat(ctx: SuiteContext) -> List[ComparisonReport]:
    h, h_t = ctx.config.heat.h, ctx.config.heat.h_t
    coarse = fine = 0.0
    for t in (1.5, 2.0):
        for z in (-1.0, 0.5, 2.0):
            coarse += _kernel_heat_residual(t, 1.0, z, h, ctx.convention)
            fine += _kernel_heat_residual(t, 1.0, z, h / 2, ctx.convention)
    reports = [richardson_report("noyau propagé : ordre de l'équation de la chaleur", coarse, fine)]
    coarse = fine = 0.0
    for k, cfg in enumerate(HEAT_CONFIGURATIONS):
        r1 = heat_residual(cfg, h, h_t, convention=ctx.convention)
        coarse += r1
        fine += heat_residual(cfg, h / 2, None if h_t is None else h_t / 2, convention=ctx.convention)
        reports.append(check_tolerance(f"résidu chaleur Phi, configuration {k + 1} (m={cfg.m}, n={cfg.n})",
                                       0.0, r1, HEAT_TOL))
    reports.append(richardson_report("Phi : ordre de l'équation de la chaleur", coarse, fine))
    return reports


FACE_CASES = [
    ((0.0, 1.0, 1.0, 2.5), 2),
    ((-1.0, 0.0, 0.5, 0.5, 1.5, 2.0), 3),
]
FACE_POINTS = [(), (SpaceTimePoint(t=0.5, z=0.3),)]


def run_face(ctx: SuiteContext) -> List[ComparisonReport]:
    reports = []
    for ys, i in FACE_CASES:
        for points in FACE_POINTS:
            cfg = Configuration(spins=SpinSet(t=1.0, ys=ys), points=points, allow_faces=True)
            residual = face_reduction_residual(cfg, i, convention=ctx.convention)
            reports.append(check_tolerance(f"réduction sur la face (m={cfg.m}, n={cfg.n}, i={i})",
                                           0.0, residual, FACE_TOL))
    return reports


def run_epsilon(ctx: SuiteContext) -> List[ComparisonReport]:
    spec = ctx.config.epsilon
    s, t = spec.s, spec.s + spec.gap
    rho_s = multi_time_intensity([SpaceTimePoint(t=s, z=spec.z)]).value
    values = [two_time_epsilon_scaling(s, t, spec.z, eps, convention=ctx.convention) for eps in spec.widths]
    reports = []
    for eps, v in zip(spec.widths, values):
        reports.append(check_tolerance(f"masse diagonale eps={eps:g} : eps*rho_s", eps * rho_s, v.value,
                                       EPSILON_RTOL * eps * rho_s))
        if not v.converged:
            logger.warning("quadrature non convergée pour eps=%g", eps)
    for (e1, v1), (e2, v2) in zip(zip(spec.widths, values), zip(spec.widths[1:], values[1:])):
        reports.append(check_tolerance(f"linéarité en eps ({e1:g}/{e2:g})", e1 / e2, v1.value / v2.value,
                                       EPSILON_RATIO_SPREAD * e1 / e2))
    # temps éloignés : pas de masse diagonale, décroissance en eps^2
    far = [two_time_epsilon_scaling(s, s + 1.0, spec.z, eps, convention=ctx.convention).value
           for eps in spec.widths[:2]]
    ratio = spec.widths[0] / spec.widths[1]
    reports.append(check_tolerance("t - s = 1 : ordre eps^2", ratio ** 2, far[0] / far[1], 0.1 * ratio ** 2))
    return reports


# ==================== MONTE CARLO SUITES ====================

def run_density(ctx: SuiteContext) -> List[ComparisonReport]:
    reports = []
    for model in (ModelKind.ABM, ModelKind.CBM):
        ens = ctx.ensemble(model)
        for t in ctx.sim.snapshot_times:
            bins = BinSpec(centers=((t, 0.0),), width=2 * ctx.sim.half_width)
            predicted = multi_time_intensity([SpaceTimePoint(t=t, z=0.0)], model).value
            reports.append(compare(predicted, estimate_product_intensity(ens, bins), ctx.config.threshold,
                                   f"densité {model.value} t={t:g}"))
        eps = ctx.config.bin_width
        shifts = ctx.shifts()
        wide = estimate_product_intensity(ens, BinSpec(centers=((ctx.t_late, 0.0),), width=eps), shifts)
        narrow = estimate_product_intensity(ens, BinSpec(centers=((ctx.t_late, 0.0),), width=eps / 2), shifts)
        reports.append(compare_estimates(wide, narrow, BIAS_THRESHOLD,
                                         f"biais de fenêtre {model.value} (eps={eps:g} vs {eps / 2:g})"))
    return reports


def run_pair(ctx: SuiteContext) -> List[ComparisonReport]:
    t = ctx.t_late
    ens = ctx.ensemble(ModelKind.ABM)
    rho1 = multi_time_intensity([SpaceTimePoint(t=t, z=0.0)]).value
    reports = []
    for r in PAIR_DISTANCES:
        points = [SpaceTimePoint(t=t, z=0.0), SpaceTimePoint(t=t, z=r)]
        predicted = multi_time_intensity(points, convention=ctx.convention).value
        bins = BinSpec(centers=((t, 0.0), (t, r)), width=ctx.config.bin_width)
        est = estimate_product_intensity(ens, bins, ctx.shifts(reach=r))
        reports.append(compare(predicted, est, ctx.config.threshold, f"rho_2(0, {r:g}) t={t:g}"))
        if r == PAIR_DISTANCES[0]:
            reports.append(_inequality(f"répulsion rho_2(0, {r:g}) < rho_1^2", predicted, rho1 * rho1))
    return reports


def run_two_time(ctx: SuiteContext) -> List[ComparisonReport]:
    s, t = ctx.t_early, ctx.t_late
    ens = ctx.ensemble(ModelKind.ABM)
    reports = []
    for x, y in TWO_TIME_POSITIONS:
        predicted = multi_time_intensity([SpaceTimePoint(t=s, z=x), SpaceTimePoint(t=t, z=y)],
                                         convention=ctx.convention).value
        bins = BinSpec(centers=((s, x), (t, y)), width=ctx.config.bin_width)
        est = estimate_product_intensity(ens, bins, ctx.shifts(reach=max(abs(x), abs(y))))
        reports.append(compare(predicted, est, ctx.config.threshold, f"rho_(s={s:g},t={t:g})({x:g}, {y:g})"))
    return reports


def _spin_configurations(ctx: SuiteContext) -> List[Configuration]:
    t = ctx.t_late
    return [
        Configuration(spins=SpinSet(t=t, ys=(0.0, 1.0))),
        Configuration(spins=SpinSet(t=t, ys=(-1.0, -0.25, 0.25, 1.0))),
        Configuration(spins=SpinSet(t=t, ys=(0.0, 1.0)), points=(SpaceTimePoint(t=ctx.t_early, z=0.5),)),
    ]


def _spin_derivative(cfg: Configuration, convention) -> Tuple[float, float]:
    """(-1/2 d/dy_2 Phi au bord y_2 = y_1, intensité attendue au point (t, y_1))"""
    t, y = cfg.spins.t, cfg.spins.ys[0]
    h = DERIVATIVE_STEP

    def phi(d: float) -> float:
        shifted = Configuration(spins=SpinSet(t=t, ys=(y, y + d)), points=cfg.points, allow_faces=True)
        return mixed_spin_intensity(shifted, convention).value

    slope = (-3 * phi(0.0) + 4 * phi(h) - phi(2 * h)) / (2 * h)
    expected = multi_time_intensity(list(cfg.points) + [SpaceTimePoint(t=t, z=y)], convention=convention).value
    return -0.5 * slope, expected


def run_spin(ctx: SuiteContext) -> List[ComparisonReport]:
    ens = ctx.ensemble(ModelKind.ABM)
    reports = []
    for cfg in _spin_configurations(ctx):
        predicted = mixed_spin_intensity(cfg, ctx.convention).value
        bins = None
        if cfg.points:
            bins = BinSpec(centers=tuple((p.t, p.z) for p in cfg.points), width=ctx.config.bin_width)
        est = estimate_spin_product(ens, cfg.spins.t, cfg.spins.ys, bins, ctx.shifts(reach=1.0))
        reports.append(compare(predicted, est, ctx.config.threshold,
                               f"Phi spins (m={cfg.m}, n={cfg.n}) ys={list(cfg.spins.ys)}"))
    for cfg in _spin_configurations(ctx)[::2]:
        derivative, expected = _spin_derivative(cfg, ctx.convention)
        reports.append(check_tolerance(f"-1/2 dPhi/dy au bord (m={cfg.m}, n={cfg.n})", expected, derivative,
                                       DERIVATIVE_TOL))
    return reports


def run_empty_interval(ctx: SuiteContext) -> List[ComparisonReport]:
    t = ctx.t_late
    abm = ctx.ensemble(ModelKind.ABM)
    cbm = ctx.ensemble(ModelKind.CBM)
    reports = []
    for y1, y2 in SPIN_INTERVALS:
        shifts = ctx.shifts(reach=max(abs(y1), abs(y2)))
        spins = estimate_spin_product(abm, t, (y1, y2), shifts=shifts)
        empty = estimate_empty_intervals(cbm, t, [(y1, y2)], shifts)
        reports.append(compare_estimates(spins, empty, ctx.config.threshold,
                                         f"ABM E[S(y1)S(y2)] vs CBM P(vide) [{y1:g}, {y2:g}]"))
        predicted = 2.0 * erf_F((y2 - y1) / math.sqrt(t))[0]
        reports.append(compare(predicted, empty, ctx.config.threshold, f"CBM P(vide) [{y1:g}, {y2:g}] vs 2F"))
    return reports


def run_thinning(ctx: SuiteContext) -> List[ComparisonReport]:
    t = ctx.t_late
    abm = ctx.ensemble(ModelKind.ABM)
    thinned = thin_ensemble(ctx.ensemble(ModelKind.CBM), 0.5, ctx.thinning_seed)
    eps = ctx.config.bin_width
    reports = []
    cases = [("un point", BinSpec(centers=((t, 0.0),), width=eps), 0.0)]
    cases += [(f"paire r={r:g}", BinSpec(centers=((t, 0.0), (t, r)), width=eps), r) for r in PAIR_DISTANCES[1:3]]
    for label, bins, reach in cases:
        shifts = ctx.shifts(reach=reach)
        reports.append(compare_estimates(estimate_product_intensity(thinned, bins, shifts),
                                         estimate_product_intensity(abm, bins, shifts),
                                         ctx.config.threshold, f"amincissement CBM(1/2) vs ABM, {label}"))
    return reports


def run_moments(ctx: SuiteContext) -> List[ComparisonReport]:
    t = ctx.t_late
    ens = ctx.ensemble(ModelKind.ABM)
    reports = []
    for k in (1, 2, 3):
        predicted = [factorial_moment(t, length, k) for length in MOMENT_LENGTHS]
        slope = log_log_slope(MOMENT_LENGTHS, predicted)
        reports.append(_inequality(f"pente log-log prédite k={k} >= {k - MOMENT_SLOPE_SLACK:g}",
                                   k - MOMENT_SLOPE_SLACK, slope))
        estimates = []
        for length, pred in zip(MOMENT_LENGTHS, predicted):
            est = estimate_factorial_moment(ens, t, 0.0, length, k)
            estimates.append(est.value)
            if pred * ens.replicas < MIN_EXPECTED_EVENTS:
                logger.info("moment k=%d, l=%g : trop peu d'événements attendus, comparaison omise", k, length)
                continue
            reports.append(compare(pred, est, ctx.config.threshold, f"moment factoriel k={k}, l={length:g}"))
        if all(v > 0 for v in estimates):
            reports.append(_inequality(f"pente log-log Monte Carlo k={k} >= {k - MOMENT_SLOPE_SLACK:g}",
                                       k - MOMENT_SLOPE_SLACK, log_log_slope(MOMENT_LENGTHS, estimates)))
    return reports


def run_robustness(ctx: SuiteContext) -> List[ComparisonReport]:
    t = ctx.t_late
    bins = BinSpec(centers=((t, 0.0),), width=2 * ctx.sim.half_width)
    base = estimate_product_intensity(ctx.ensemble(ModelKind.ABM), bins)
    variants = [(f"lambda={lam:g}", {"intensity": lam}) for lam in LAMBDA_SWEEP if lam != ctx.sim.intensity]
    variants.append((f"dt={ctx.sim.dt / 2:g}", {"dt": ctx.sim.dt / 2}))
    variants.append((f"M={2 * ctx.sim.effective_margin:g}", {"margin": 2 * ctx.sim.effective_margin}))
    reports = []
    for stream, (label, overrides) in enumerate(variants, start=1):
        est = estimate_product_intensity(ctx.ensemble(ModelKind.ABM, stream, **overrides), bins)
        reports.append(compare_estimates(est, base, ctx.config.threshold, f"robustesse ABM {label}"))
    return reports


# ==================== REGISTRY ====================

SUITES: Dict[SuiteKind, Callable[[SuiteContext], List[ComparisonReport]]] = {
    SuiteKind.PFAFFIAN: run_pfaffian,
    SuiteKind.CONVOLUTION: run_convolution,
    SuiteKind.DENSITY: run_density,
    SuiteKind.PAIR: run_pair,
    SuiteKind.TWO_TIME: run_two_time,
    SuiteKind.SPIN: run_spin,
    SuiteKind.EMPTY_INTERVAL: run_empty_interval,
    SuiteKind.THINNING: run_thinning,
    SuiteKind.HEAT: run_heat,
    SuiteKind.FACE: run_face,
    SuiteKind.EPSILON: run_epsilon,
    SuiteKind.MOMENTS: run_moments,
    SuiteKind.ROBUSTNESS: run_robustness,
}


def run_suites(ctx: SuiteContext, kinds: Optional[Sequence[SuiteKind]] = None) -> Dict[str, List[ComparisonReport]]:
    """Exécute les suites demandées (toutes par défaut), dans l'ordre du registre"""
    selected = list(SUITES) if not kinds else [k for k in SUITES if k in set(kinds)]
    results: Dict[str, List[ComparisonReport]] = {}
    for kind in selected:
        logger.info("suite %s", kind.value)
        reports = SUITES[kind](ctx)
        failed = sum(not r.passed for r in reports)
        logger.info("suite %s : %d contrôles, %d échec(s)", kind.value, len(reports), failed)
        results[kind.value] = reports
    return results
