from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fermigas.errors import ConvergenceError, InvariantViolation
from fermigas.kernel import KernelFamily
from fermigas.lattice import _lens_from_points, build_fermi_ball, excitation_gap, outside_points
from fermigas.observables import (
    IntegralFamily,
    QuadratureConfig,
    continuum_probe_q,
    continuum_q_factor,
    default_inside_cutoff,
    loglog_slope,
    momentum_distribution,
    n_exchange,
    n_rpa_continuum,
    n_rpa_integral,
    n_rpa_matrix,
    n_rpa_series,
    particle_hole_sums,
    rpa_integrals,
    series_increments,
)
from fermigas.potential import coulomb, skewed_coulomb, yukawa_like

BALL1 = build_fermi_ball(1)
C1 = coulomb(1)
FAM1 = KernelFamily(BALL1, C1)


def test_frozen_rpa_values():
    assert n_rpa_matrix(BALL1, FAM1, (1, 1, 0)).n_rpa == pytest.approx(3.806413318565655e-05, rel=1e-12)
    assert n_rpa_matrix(BALL1, FAM1, (2, 0, 0)).n_rpa == pytest.approx(4.896205660655729e-06, rel=1e-12)
    fam = KernelFamily(BALL1, C1, shift_cutoff=16)
    assert n_rpa_matrix(BALL1, fam, (0, 0, 0)).n_rpa == pytest.approx(1.8406561263765857e-05, rel=1e-12)


def test_frozen_exchange_values():
    ex = n_exchange(BALL1, C1, (1, 1, 0), kernels=FAM1)
    assert ex.n_ex == pytest.approx(2.541346328525347e-05, rel=1e-12)
    assert ex.n_ex_m1 == pytest.approx(2.477172393550252e-05, rel=1e-12)
    assert ex.difference == pytest.approx(ex.n_ex - ex.n_ex_m1, rel=1e-15)


def test_matrix_breakdown_has_seven_shifts():
    res = n_rpa_matrix(BALL1, FAM1, (1, 1, 0))
    assert len(res.per_shift_breakdown) == 7
    assert res.n_rpa == pytest.approx(math.fsum(v for _, v in res.per_shift_breakdown), rel=1e-15)
    assert not res.inside_ball


def test_far_q_is_suppressed():
    far = n_rpa_matrix(BALL1, FAM1, (9, 9, 9)).n_rpa
    near = n_rpa_matrix(BALL1, FAM1, (1, 1, 0)).n_rpa
    assert float(excitation_gap(BALL1, (9, 9, 9))) == 241.5
    assert 0 < far <= 1e-2 * near


@pytest.mark.parametrize("q", [(1, 1, 0), (0, 0, 0), (2, 0, 0)])
def test_zero_potential(q):
    zero = coulomb(0)
    fam = KernelFamily(BALL1, zero, shift_cutoff=9)
    assert n_rpa_matrix(BALL1, fam, q).n_rpa == 0.0
    assert n_rpa_series(BALL1, fam, q, 6).n_rpa == 0.0
    assert n_rpa_integral(BALL1, zero, q, shift_cutoff=9).n_rpa == 0.0
    ex = n_exchange(BALL1, zero, q, kernels=fam)
    assert ex.n_ex == 0.0 and ex.n_ex_m1 == 0.0
    assert momentum_distribution(BALL1, fam, zero, q) == (1.0 if BALL1.contains(q) else 0.0)


@pytest.mark.parametrize("cap", [1, 2, 3])
def test_route_agreement_on_boundary(cap):
    ball = build_fermi_ball(cap)
    fam = KernelFamily(ball, C1)
    integ = IntegralFamily(ball, C1)
    qs = [q for q in outside_points(ball, ball.min_outside_norm2) if excitation_gap(ball, q) == 0.5]
    assert qs
    for q in qs:
        a = n_rpa_matrix(ball, fam, q).n_rpa
        b = n_rpa_integral(ball, C1, q, family=integ).n_rpa
        assert abs(a - b) <= 1e-8


def test_one_point_integral_closed_form():
    for g, lam in [(0.1, 0.5), (2.0, 1.5), (30.0, 3.5)]:
        val = rpa_integrals([(g, lam, np.array([lam]), np.array([1]))], QuadratureConfig())[0]
        x = 1 + 2 * g / lam
        assert val == pytest.approx(0.25 * (x**0.5 + x**-0.5 - 2), rel=1e-8)


def test_inside_route_agreement():
    fam = KernelFamily(BALL1, C1, shift_cutoff=9)
    for q in BALL1.momenta():
        a = n_rpa_matrix(BALL1, fam, q).n_rpa
        b = n_rpa_integral(BALL1, C1, q, shift_cutoff=9).n_rpa
        assert abs(a - b) <= max(1e-10, 1e-6 * a)


def test_series_terms():
    q = (1, 1, 0)
    two = n_rpa_series(BALL1, FAM1, q, 2)
    for ell, v in two.per_shift_breakdown:
        kd = FAM1.kernel(ell)
        i = kd.index(q)
        # ((2K)^2)_qq / 2! = 2 (K^2)_qq, times the overall 1/2
        assert v == pytest.approx(0.5 * 2 * (kd.K @ kd.K)[i, i], rel=1e-13)
    assert abs(n_rpa_series(BALL1, FAM1, q, 20).n_rpa - n_rpa_matrix(BALL1, FAM1, q).n_rpa) <= 1e-12
    with pytest.raises(ValueError):
        n_rpa_series(BALL1, FAM1, q, 3)
    inc = series_increments(BALL1, FAM1, q, 10)
    assert all(b < a for a, b in zip(inc, inc[1:]))


def test_exchange_scaling():
    scales = [1e-3, 3e-3, 1e-2, 3e-2]
    ex, diff = [], []
    for s in scales:
        spec = coulomb(s)
        r = n_exchange(BALL1, spec, (1, 1, 0), kernels=KernelFamily(BALL1, spec))
        ex.append(r.n_ex)
        diff.append(r.difference)
    assert loglog_slope(scales, ex) == pytest.approx(2.0, abs=0.05)
    assert loglog_slope(scales, diff) >= 2.8


def test_distribution_inside_formula():
    fam = KernelFamily(BALL1, C1, shift_cutoff=default_inside_cutoff(1))
    rpa = n_rpa_matrix(BALL1, fam, (0, 0, 0)).n_rpa
    ex = n_exchange(BALL1, C1, (0, 0, 0), shift_cutoff=fam.shift_cutoff).n_ex
    assert momentum_distribution(BALL1, fam, C1, (0, 0, 0)) == pytest.approx(1 - rpa - ex, abs=1e-15)
    assert momentum_distribution(BALL1, fam, C1, (0, 0, 0), exchange_sign=-1) == pytest.approx(1 - rpa + ex, abs=1e-15)
    with pytest.raises(ValueError):
        momentum_distribution(BALL1, fam, C1, (0, 0, 0), exchange_sign=0)


def test_distribution_bound_violation_raises():
    huge = coulomb(1e7)
    fam = KernelFamily(BALL1, huge, shift_cutoff=4)
    with pytest.raises(InvariantViolation):
        for q in outside_points(BALL1, 4):
            momentum_distribution(BALL1, fam, huge, q)


@pytest.mark.parametrize("spec", [C1, yukawa_like(1, 2)])
def test_sum_rule(spec):
    fam = KernelFamily(BALL1, spec, shift_cutoff=9)
    outside, inside = particle_hole_sums(BALL1, fam)
    assert abs(outside - inside) <= 1e-10
    assert outside > 0


@given(st.tuples(*[st.integers(-3, 3)] * 3))
def test_reflection(q):
    fam = KernelFamily(BALL1, C1, shift_cutoff=9)
    neg = tuple(-c for c in q)
    assert abs(n_rpa_matrix(BALL1, fam, q).n_rpa - n_rpa_matrix(BALL1, fam, neg).n_rpa) <= 1e-10


def test_skewed_breaks_reflection():
    spec = skewed_coulomb(1, 0.3)
    fam = KernelFamily(BALL1, spec)
    assert abs(n_rpa_matrix(BALL1, fam, (1, 1, 0)).n_rpa - n_rpa_matrix(BALL1, fam, (-1, -1, 0)).n_rpa) > 1e-10


def test_integral_nonconvergence_names_shift():
    cfg = QuadratureConfig(abs_tol=1e-18, rel_tol=1e-15)
    with pytest.raises(ConvergenceError) as info:
        n_rpa_integral(BALL1, C1, (1, 1, 0), cfg)
    assert info.value.shift is not None


def test_continuum_factor_limits():
    assert continuum_q_factor(1.0, 0.0) == pytest.approx(1 / (2 * math.pi) ** 2, rel=1e-15)
    assert continuum_q_factor(1.0, 1e6) < 1e-12
    assert n_rpa_continuum(coulomb(0), 2.0, (1, 0, 0), 3.0) == 0.0
    with pytest.raises(ValueError):
        n_rpa_continuum(C1, 2.0, (1, 0, 0), 1.5)


def test_continuum_value_and_direction_independence():
    a = n_rpa_continuum(C1, 1.0, (1, 0, 0), 2.0)
    b = n_rpa_continuum(C1, 1.0, (0, 0.6, 0.8), 2.0)
    assert a == pytest.approx(1.2200608927492851e-06, rel=1e-6)
    assert a == b


def test_probe_q_rule():
    ball = build_fermi_ball(16)
    q = continuum_probe_q(ball, (1, 0, 0))
    e = float(excitation_gap(ball, q))
    assert abs(e - ball.kf) <= 1.0
    assert q[0] == max(abs(c) for c in q)


def test_loglog_slope():
    xs = [1, 2, 4, 8]
    assert loglog_slope(xs, [3 * x**2 for x in xs]) == pytest.approx(2.0, abs=1e-12)
