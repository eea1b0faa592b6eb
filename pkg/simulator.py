"""
Simulation Monte Carlo de mouvements browniens annihilants (ABM) et
coalescents (CBM) issus d'une condition initiale de Poisson de forte intensité.

Pas de temps dt, croisements détectés par pont brownien : deux voisins
d'écarts d0 (avant) et d1 (après le pas) se sont croisés avec probabilité
exp(-d0 d1 / dt) si leur ordre est conservé, 1 sinon. Les répliques d'un même
lot avancent ensemble dans un seul tableau trié par (réplique, position).
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from schemas import ModelKind, SimConfig

logger = logging.getLogger(__name__)

# ==================== CONFIGURATION ====================

TIME_EPS = 1e-12


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Générateur Philox (à compteur) indépendant par flux (graine, indice)"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


# ==================== PARTICLE STATE ====================

@dataclass(frozen=True)
class ParticleState:
    time: float
    positions: np.ndarray
    model: ModelKind = ModelKind.ABM

    def __post_init__(self):
        positions = np.sort(np.asarray(self.positions, dtype=float))
        positions.setflags(write=False)
        object.__setattr__(self, "positions", positions)

    def __len__(self) -> int:
        return int(self.positions.size)


def count_in(state: ParticleState, a: float, b: float) -> int:
    """Nombre de particules dans [a, b]"""
    if b < a:
        raise ValueError(f"intervalle vide : [{a}, {b}]")
    x = state.positions
    return int(np.searchsorted(x, b, side="right") - np.searchsorted(x, a, side="left"))


def spin(state: ParticleState, y: float) -> int:
    """S(y) = (-1)^N(0:y), N(0:y) comptant les particules strictement entre 0 et y"""
    x = state.positions
    lo, hi = (0.0, y) if y >= 0 else (y, 0.0)
    n = int(np.searchsorted(x, hi, side="left") - np.searchsorted(x, lo, side="right"))
    return -1 if n % 2 else 1


def is_empty(state: ParticleState, a: float, b: float) -> bool:
    return count_in(state, a, b) == 0


def thin(state: ParticleState, p: float, rng: np.random.Generator) -> ParticleState:
    """Chaque particule est conservée indépendamment avec probabilité p"""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probabilité hors de [0, 1] : p={p}")
    keep = rng.random(len(state)) < p
    return ParticleState(state.time, state.positions[keep], state.model)


# ==================== DYNAMICS ====================

def _poisson_batch(cfg: SimConfig, count: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    w = cfg.window
    sizes = rng.poisson(cfg.intensity * 2.0 * w, size=count)
    owner = np.repeat(np.arange(count), sizes)
    pos = rng.uniform(-w, w, size=owner.size)
    order = np.lexsort((pos, owner))
    return pos[order], owner[order]


def _select_pairs(cross: np.ndarray) -> np.ndarray:
    """Balayage gauche-droite : dans une suite de paires voisines en collision, une sur deux"""
    idx = np.arange(cross.size)
    last_free = np.maximum.accumulate(np.where(cross, -1, idx))
    return cross & ((idx - last_free - 1) % 2 == 0)


def _step(pos: np.ndarray, owner: np.ndarray, h: float, model: ModelKind, window: float,
          rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    if pos.size == 0:
        return pos, owner
    new = pos + rng.normal(0.0, math.sqrt(h), size=pos.size)
    if pos.size > 1:
        d0 = pos[1:] - pos[:-1]
        d1 = new[1:] - new[:-1]
        with np.errstate(over="ignore"):
            p_cross = np.where(d1 <= 0, 1.0, np.exp(-d0 * np.maximum(d1, 0.0) / h))
        cross = (owner[1:] == owner[:-1]) & (rng.random(d0.size) < p_cross)
        pairs = np.flatnonzero(_select_pairs(cross))
        if pairs.size:
            dead = np.zeros(pos.size, dtype=bool)
            if model == ModelKind.ABM:
                dead[pairs] = True
                dead[pairs + 1] = True
            else:
                # survivant choisi uniformément dans la paire
                dead[pairs + (rng.random(pairs.size) < 0.5)] = True
            new, owner = new[~dead], owner[~dead]
    inside = np.abs(new) <= window
    new, owner = new[inside], owner[inside]
    order = np.lexsort((new, owner))
    return new[order], owner[order]


def _advance(pos: np.ndarray, owner: np.ndarray, t_from: float, t_to: float, cfg: SimConfig,
             rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    steps = max(0, math.ceil((t_to - t_from) / cfg.dt - TIME_EPS))
    now = t_from
    for k in range(1, steps + 1):
        nxt = min(t_from + k * cfg.dt, t_to)
        pos, owner = _step(pos, owner, nxt - now, cfg.model, cfg.window, rng)
        now = nxt
    return pos, owner


def sample_initial(cfg: SimConfig, rng: np.random.Generator) -> ParticleState:
    """Poisson(lambda) sur [-L-M, L+M] au temps 0"""
    pos, _ = _poisson_batch(cfg, 1, rng)
    return ParticleState(0.0, pos, cfg.model)


def evolve(state: ParticleState, t_target: float, cfg: SimConfig, rng: np.random.Generator) -> ParticleState:
    if t_target < state.time:
        raise ValueError(f"temps cible {t_target} antérieur à l'état ({state.time})")
    pos = np.array(state.positions)
    owner = np.zeros(pos.size, dtype=int)
    pos, _ = _advance(pos, owner, state.time, t_target, cfg, rng)
    return ParticleState(t_target, pos, state.model)


# ==================== ENSEMBLES ====================

@dataclass
class Ensemble:
    """Instantanés par réplique : snapshots[t][r] = positions triées de la réplique r au temps t"""
    model: ModelKind
    times: List[float]
    snapshots: Dict[float, List[np.ndarray]] = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return len(self.snapshots[self.times[0]]) if self.times else 0

    def at(self, t: float) -> List[np.ndarray]:
        for known in self.snapshots:
            if abs(known - t) <= TIME_EPS:
                return self.snapshots[known]
        raise KeyError(t)

    def merge(self, other: "Ensemble") -> "Ensemble":
        if other.times != self.times or other.model != self.model:
            raise ValueError("ensembles incompatibles (temps ou modèle différents)")
        return Ensemble(self.model, list(self.times),
                        {t: self.snapshots[t] + other.snapshots[t] for t in self.times})


def _split(pos: np.ndarray, owner: np.ndarray, count: int) -> List[np.ndarray]:
    bounds = np.searchsorted(owner, np.arange(count + 1))
    return [pos[bounds[r]:bounds[r + 1]].copy() for r in range(count)]


def _run_batch(args: Tuple[SimConfig, int, int]) -> Ensemble:
    cfg, batch, count = args
    rng = make_rng(cfg.seed, batch)
    pos, owner = _poisson_batch(cfg, count, rng)
    snapshots: Dict[float, List[np.ndarray]] = {}
    now = 0.0
    for t in cfg.snapshot_times:
        pos, owner = _advance(pos, owner, now, t, cfg, rng)
        now = t
        snapshots[t] = _split(pos, owner, count)
        logger.debug("lot %d : t=%g, %d particules", batch, t, pos.size)
    return Ensemble(cfg.model, list(cfg.snapshot_times), snapshots)


def simulate_ensemble(cfg: SimConfig, replicas: int, workers: int = 1) -> Ensemble:
    """
    Simule `replicas` répliques par lots de cfg.batch_size ; le lot b utilise le
    flux (cfg.seed, b). Le résultat ne dépend pas du nombre de processus.
    """
    if replicas < 1:
        raise ValueError(f"nombre de répliques invalide : {replicas}")
    full, rest = divmod(replicas, cfg.batch_size)
    sizes = [cfg.batch_size] * full + ([rest] if rest else [])
    jobs = [(cfg, b, n) for b, n in enumerate(sizes)]
    logger.info("%s : %d répliques en %d lots (%d processus)", cfg.model.value, replicas, len(jobs), workers)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_batch, jobs))
    else:
        parts = [_run_batch(job) for job in jobs]
    result = parts[0]
    for part in parts[1:]:
        result = result.merge(part)
    return result


def thin_ensemble(ensemble: Ensemble, p: float, seed: int) -> Ensemble:
    """Amincissement indépendant de chaque instantané (flux (seed, indice de réplique))"""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probabilité hors de [0, 1] : p={p}")
    snapshots: Dict[float, List[np.ndarray]] = {t: [] for t in ensemble.times}
    for r in range(ensemble.replicas):
        rng = make_rng(seed, r)
        for t in ensemble.times:
            x = ensemble.snapshots[t][r]
            snapshots[t].append(x[rng.random(x.size) < p])
    return Ensemble(ensemble.model, list(ensemble.times), snapshots)


def particle_counts(ensemble: Ensemble, t: float, a: float, b: float) -> np.ndarray:
    """N_t([a, b]) pour chaque réplique"""
    return np.array([
        np.searchsorted(x, b, side="right") - np.searchsorted(x, a, side="left") for x in ensemble.at(t)
    ], dtype=float)


def spin_products(ensemble: Ensemble, t: float, ys: Sequence[float]) -> np.ndarray:
    """prod_j S_t(y_j) pour chaque réplique, via les parités des intervalles (y_1, y_2), (y_3, y_4), ..."""
    if len(ys) % 2:
        raise ValueError(f"nombre de spins impair ({len(ys)})")
    parity = np.zeros(ensemble.replicas, dtype=int)
    for lo, hi in zip(ys[0::2], ys[1::2]):
        for r, x in enumerate(ensemble.at(t)):
            parity[r] += np.searchsorted(x, hi, side="left") - np.searchsorted(x, lo, side="right")
    return np.where(parity % 2 == 0, 1.0, -1.0)
