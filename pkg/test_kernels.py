"""
Tests des noyaux : F, gaussiennes, blocs à temps fixe, propagés et mixtes
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from kernels import (
    AugmentedPoint,
    BlockShape,
    KernelDomainError,
    equal_time_block,
    equal_time_entries,
    erf_F,
    extended_block,
    gauss,
    gauss_cdf,
    gauss_prime,
    mixed_entry,
    propagated_block,
    propagated_block_quadrature,
    propagated_entries,
)
from schemas import Convention, ModelKind, SpaceTimePoint

RHO_ABM = 1.0 / math.sqrt(4.0 * math.pi)


def test_erf_F_values():
    f, f1, f2 = erf_F(0.0)
    assert f == pytest.approx(0.5)
    assert f1 == pytest.approx(-1.0 / (2.0 * math.sqrt(math.pi)))
    assert f2 == 0.0
    assert erf_F(-1.0)[0] == pytest.approx(1.0 - erf_F(1.0)[0])
    assert erf_F(2.0)[0] == pytest.approx(0.0786496, abs=1e-7)


def test_gaussians():
    assert gauss(1.0, 0.0) == pytest.approx(0.3989423, abs=1e-7)
    assert gauss(3.0, 1.0) == gauss(3.0, -1.0)
    assert gauss_prime(2.0, 1.0) == pytest.approx(-0.5 * gauss(2.0, 1.0))
    assert gauss_cdf(5.0, 0.0) == pytest.approx(0.5)
    with pytest.raises(KernelDomainError):
        gauss(0.0, 1.0)


@pytest.mark.parametrize("t", [0.3, 1.0, 2.5])
def test_gauss_is_F_prime(t):
    z = np.linspace(-4.0, 4.0, 33)
    _, f1, _ = erf_F(z / math.sqrt(t))
    assert_allclose(gauss(2.0 * t, z), -f1 / math.sqrt(t), rtol=1e-12, atol=1e-15)


def test_equal_time_block_at_origin():
    block = equal_time_block(1.0, 0.0)
    assert block.shape == BlockShape.B2X2
    assert block[0, 1] == pytest.approx(0.2820948, abs=1e-7)
    assert block[0, 0] == 0.0
    assert block[1, 1] == 0.0
    assert equal_time_block(1.0, 0.0, ModelKind.CBM)[0, 1] == pytest.approx(2 * RHO_ABM)


def test_equal_time_symmetries():
    z = np.linspace(-3.0, 3.0, 25)
    k11, k12, k21, k22 = equal_time_entries(0.7, z)
    m11, m12, _, m22 = equal_time_entries(0.7, -z)
    assert_allclose(k21, -k12)
    assert_allclose(k11, -m11)
    assert_allclose(k22, -m22)
    assert_allclose(k12, m12)
    with pytest.raises(KernelDomainError):
        equal_time_block(0.0, 1.0)


def test_propagated_closed_form_values():
    literal = propagated_block(2.0, 1.0, 1.0, convention=Convention.LITERAL)
    assert literal[0, 1] == pytest.approx(gauss(3.0, 1.0) - 2.0 * gauss(1.0, 1.0))
    assert literal[0, 1] == pytest.approx(-0.2890, abs=1e-4)
    resolved = propagated_block(2.0, 1.0, 1.0)
    assert resolved[0, 1] == pytest.approx(gauss(3.0, 1.0) - gauss(1.0, 1.0))
    assert propagated_block(1.7, 0.4, 0.0)[1, 1] == 0.0
    with pytest.raises(KernelDomainError):
        propagated_block(1.0, 1.0, 0.0)


@pytest.mark.parametrize("convention", list(Convention))
def test_closed_forms_match_quadrature(convention):
    for z in np.linspace(-5.0, 5.0, 11):
        closed = propagated_block(1.5, 1.0, float(z), convention=convention).matrix
        oracle = propagated_block_quadrature(1.5, 1.0, float(z), convention=convention).matrix
        assert_allclose(closed, oracle, atol=1e-8, rtol=0)


def test_quadrature_near_coincident_times():
    closed = propagated_block(1.01, 1.0, 2.0).matrix
    oracle = propagated_block_quadrature(1.01, 1.0, 2.0).matrix
    assert_allclose(closed, oracle, atol=1e-8, rtol=0)
    assert abs(propagated_block_quadrature(2.0, 1.0, 0.0)[1, 1]) < 1e-10


def test_extended_block_dispatch():
    p, q = SpaceTimePoint(t=1.0, z=0.0), SpaceTimePoint(t=2.0, z=1.0)
    assert_allclose(extended_block(p, SpaceTimePoint(t=1.0, z=0.4)).matrix, equal_time_block(1.0, 0.4).matrix)
    forward, backward = extended_block(p, q).matrix, extended_block(q, p).matrix
    assert forward[0, 0] == pytest.approx(-backward[0, 0])
    assert forward[1, 1] == pytest.approx(-backward[1, 1])
    assert forward[0, 1] == pytest.approx(-backward[1, 0])
    assert forward[1, 0] == pytest.approx(-backward[0, 1])


def test_cbm_is_twice_abm_under_literal_convention():
    for p, q in [((1.0, 0.0), (1.0, 0.3)), ((2.0, 0.0), (1.0, 0.5)), ((0.5, 1.0), (1.5, -0.2))]:
        p, q = SpaceTimePoint(t=p[0], z=p[1]), SpaceTimePoint(t=q[0], z=q[1])
        abm = extended_block(p, q, ModelKind.ABM, Convention.LITERAL).matrix
        cbm = extended_block(p, q, ModelKind.CBM, Convention.LITERAL).matrix
        assert_allclose(cbm, 2.0 * abm, rtol=1e-14)


def test_cbm_resolved_transition_term_not_doubled():
    abm = propagated_block(2.0, 1.0, 0.7).matrix
    cbm = propagated_block(2.0, 1.0, 0.7, ModelKind.CBM).matrix
    assert cbm[0, 1] - 2.0 * abm[0, 1] == pytest.approx(gauss(1.0, 0.7))
    assert_allclose([cbm[0, 0], cbm[1, 0], cbm[1, 1]], [2 * abm[0, 0], 2 * abm[1, 0], 2 * abm[1, 1]])


@pytest.mark.parametrize("t, s", [(0.5, 0.5), (2.0, 0.5), (0.5, 2.0), (1.0, 1.0)])
def test_decay(t, s):
    for z in (-40.0, 40.0):
        block = extended_block(SpaceTimePoint(t=t, z=0.0), SpaceTimePoint(t=s, z=z)).matrix
        assert np.all(np.abs(block) < 1e-12)


def test_propagated_entries_solve_heat_equation():
    def residual(h):
        total = 0.0
        for t in (1.5, 2.0):
            for z in (-1.0, 0.5, 2.0):
                e = lambda tt, zz: np.array(propagated_entries(tt, 1.0, zz))
                d_t = (e(t + h / 10, z) - e(t - h / 10, z)) / (h / 5)
                d_zz = (e(t, z + h) - 2 * e(t, z) + e(t, z - h)) / h ** 2
                total += float(np.sum(np.abs(d_t - 0.5 * d_zz)))
        return total

    coarse, fine = residual(1e-2), residual(5e-3)
    assert coarse < 1e-3
    assert 3.0 <= coarse / fine <= 5.0


def test_mixed_entries():
    a = AugmentedPoint.spin(1.0, 0.0, 0)
    b = AugmentedPoint.spin(1.0, 1.0, 1)
    assert mixed_entry(a, b, 1.0)[0, 0] == pytest.approx(0.2397500, abs=1e-7)
    assert mixed_entry(b, a, 1.0)[0, 0] == pytest.approx(-0.2397500, abs=1e-7)
    assert mixed_entry(a, a, 1.0)[0, 0] == 0.0
    face = AugmentedPoint.spin(1.0, 0.0, 1)
    assert mixed_entry(a, face, 1.0)[0, 0] == 0.5


def test_mixed_spin_intensity_entries():
    spin = AugmentedPoint.spin(1.0, 0.2, 0)
    same_time = AugmentedPoint.intensity(SpaceTimePoint(t=1.0, z=0.9), 1)
    row = mixed_entry(spin, same_time, 1.0)
    assert row.shape == BlockShape.R1X2
    k11, k12, k21, k22 = equal_time_entries(1.0, 0.7)
    assert_allclose(row.matrix, [[k21, k22]])
    column = mixed_entry(same_time, spin, 1.0)
    assert column.shape == BlockShape.C2X1
    assert_allclose(column.matrix, -row.matrix.T)

    earlier = AugmentedPoint.intensity(SpaceTimePoint(t=0.4, z=-0.3), 1)
    p11, p12, p21, p22 = propagated_entries(1.0, 0.4, -0.5)
    assert_allclose(mixed_entry(spin, earlier, 1.0).matrix, [[p21, p22]])

    later = AugmentedPoint.intensity(SpaceTimePoint(t=1.5, z=0.0), 1)
    with pytest.raises(KernelDomainError):
        mixed_entry(spin, later, 1.0)
