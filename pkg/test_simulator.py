"""
Tests du simulateur ABM/CBM : loi initiale, dynamique, observables, ensembles
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from schemas import ModelKind, SimConfig
from simulator import (
    Ensemble,
    ParticleState,
    _select_pairs,
    count_in,
    evolve,
    is_empty,
    make_rng,
    sample_initial,
    simulate_ensemble,
    spin,
    spin_products,
    thin,
    thin_ensemble,
)

RHO_ABM = 1.0 / math.sqrt(4.0 * math.pi)


def small_config(**overrides):
    base = dict(intensity=50.0, half_width=5.0, margin=4.0, dt=1e-3, snapshot_times=[0.25, 1.0],
                seed=1234, batch_size=64)
    base.update(overrides)
    return SimConfig(**base)


def test_config_rules():
    with pytest.raises(ValidationError):
        small_config(dt=-1e-3)
    with pytest.raises(ValidationError):
        small_config(snapshot_times=[1.0, 0.5])
    with pytest.raises(ValidationError):
        small_config(intensity=5.0)
    with pytest.raises(ValidationError):
        small_config(snapshot_times=[0.005])
    with pytest.raises(ValidationError):
        SimConfig(unknown=1)
    assert small_config(intensity=0.0).intensity == 0.0
    assert SimConfig(**{"lambda": 80.0}).intensity == 80.0
    assert SimConfig(snapshot_times=[0.25, 4.0]).effective_margin == pytest.approx(16.0)


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("PFAFFBM_SEED", "42")
    assert SimConfig().seed == 42


def test_initial_poisson_count():
    cfg = small_config(intensity=100.0, half_width=40.0, margin=10.0, snapshot_times=[1.0])
    state = sample_initial(cfg, make_rng(7))
    assert abs(len(state) - 10000) <= 500
    assert np.all(np.diff(state.positions) > 0)
    assert np.all(np.abs(state.positions) <= 50.0)
    assert state.time == 0.0


def test_initial_empty_and_deterministic():
    assert len(sample_initial(small_config(intensity=0.0), make_rng(1))) == 0
    a = sample_initial(small_config(), make_rng(99, 3))
    b = sample_initial(small_config(), make_rng(99, 3))
    np.testing.assert_array_equal(a.positions, b.positions)


def test_far_particles_survive_one_step():
    cfg = small_config(dt=1e-4)
    state = evolve(ParticleState(0.0, [-2.0, 2.0]), 1e-4, cfg, make_rng(5))
    assert len(state) == 2
    assert state.time == pytest.approx(1e-4)


def test_coincident_particles_collide():
    cfg = small_config(dt=1e-4)
    abm = evolve(ParticleState(0.0, [0.3, 0.3]), 1e-4, cfg, make_rng(5))
    assert len(abm) == 0
    cbm_cfg = small_config(dt=1e-4, model=ModelKind.CBM)
    cbm = evolve(ParticleState(0.0, [0.3, 0.3], ModelKind.CBM), 1e-4, cbm_cfg, make_rng(5))
    assert len(cbm) == 1


def test_evolution_keeps_order_and_parity():
    cfg = small_config(half_width=30.0)
    rng = make_rng(11)
    state = ParticleState(0.0, np.linspace(-1.0, 1.0, 10))
    counts = [len(state)]
    for target in (0.02, 0.05, 0.1):
        state = evolve(state, target, cfg, rng)
        counts.append(len(state))
        assert np.all(np.diff(state.positions) > 0)
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    assert all(c % 2 == 0 for c in counts)
    with pytest.raises(ValueError):
        evolve(state, 0.01, cfg, rng)


def test_pair_selection_sweeps_left_to_right():
    cross = np.array([True, True, True, False, True, True, False, True])
    np.testing.assert_array_equal(_select_pairs(cross),
                                  [True, False, True, False, True, False, False, True])


def test_observables():
    empty = ParticleState(1.0, [])
    assert spin(empty, 3.0) == 1 and spin(empty, -2.0) == 1
    one = ParticleState(1.0, [0.5])
    assert spin(one, 1.0) * spin(one, 0.2) == -1
    state = ParticleState(1.0, [-1.0, 0.2, 0.4, 2.0])
    assert count_in(state, 0.0, 1.0) == 2
    assert count_in(state, -1.0, -1.0) == 1
    assert is_empty(state, 0.5, 1.5)
    assert not is_empty(state, 0.0, 0.3)
    assert spin(state, 1.0) == 1 and spin(state, -2.0) == -1


def test_is_empty_matches_count():
    rng = make_rng(21)
    for _ in range(20):
        state = ParticleState(1.0, rng.uniform(-3, 3, size=rng.integers(0, 8)))
        a, b = sorted(rng.uniform(-3, 3, size=2))
        assert is_empty(state, a, b) == (count_in(state, a, b) == 0)


def test_thinning_extremes():
    state = ParticleState(1.0, [0.1, 0.5, 0.9])
    np.testing.assert_array_equal(thin(state, 1.0, make_rng(0)).positions, state.positions)
    assert len(thin(state, 0.0, make_rng(0))) == 0
    with pytest.raises(ValueError):
        thin(state, 1.5, make_rng(0))


def test_ensemble_is_reproducible_and_batched():
    cfg = small_config()
    a = simulate_ensemble(cfg, 100)
    b = simulate_ensemble(cfg, 100)
    assert a.replicas == 100
    assert a.times == [0.25, 1.0]
    for t in a.times:
        for x, y in zip(a.at(t), b.at(t)):
            np.testing.assert_array_equal(x, y)
            assert np.all(np.abs(x) <= cfg.window)


def test_ensemble_density_matches_entrance_law():
    cfg = small_config()
    ensemble = simulate_ensemble(cfg, 256)
    counts = np.array([np.count_nonzero(np.abs(x) <= cfg.half_width) for x in ensemble.at(1.0)], dtype=float)
    density = counts / (2 * cfg.half_width)
    stderr = density.std(ddof=1) / math.sqrt(density.size)
    assert abs(density.mean() - RHO_ABM) <= 5 * stderr + 0.03


def test_thin_ensemble_and_spin_products():
    ensemble = Ensemble(ModelKind.CBM, [1.0], {1.0: [np.array([0.5]), np.array([-0.5, 0.5]), np.array([])]})
    np.testing.assert_array_equal(spin_products(ensemble, 1.0, (0.0, 1.0)), [-1.0, -1.0, 1.0])
    np.testing.assert_array_equal(spin_products(ensemble, 1.0, (0.2, 0.2)), [1.0, 1.0, 1.0])
    kept = thin_ensemble(ensemble, 1.0, seed=3)
    assert [x.size for x in kept.at(1.0)] == [1, 2, 0]
    assert all(x.size == 0 for x in thin_ensemble(ensemble, 0.0, seed=3).at(1.0))
    with pytest.raises(KeyError):
        ensemble.at(0.5)
