from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.sparse.linalg import expm_multiply

from fermigas.errors import ResourceLimitError
from fermigas.fock import (
    _popcount,
    apply_exp_generator,
    bootstrap_sup,
    build_generator,
    build_mode_set,
    estimate_dimension,
    expv,
    number_moment,
    occupation_expectation,
    particle_hole_numbers,
    run_oracle,
    vacuum,
)
from fermigas.kernel import KernelFamily
from fermigas.lattice import build_fermi_ball
from fermigas.observables import loglog_slope
from fermigas.potential import coulomb

BALL1 = build_fermi_ball(1)
MODES = build_mode_set(BALL1, 1)


def generator(s, cap=6):
    return build_generator(MODES, KernelFamily(BALL1, coulomb(s), shift_cutoff=1), cap)


def test_mode_counts():
    assert len(MODES) == 24
    assert MODES.n_particle_modes == 18 and MODES.n_hole_modes == 6
    norms = sorted(sum(c * c for c in p) for p, h in zip(MODES.modes, MODES.is_hole) if not h)
    assert norms.count(2) == 12 and norms.count(4) == 6
    # the origin is never a hole partner of a unit shift
    assert (0, 0, 0) not in MODES.index_of
    b0 = build_mode_set(build_fermi_ball(0), 1)
    assert len(b0) == 7 and b0.n_hole_modes == 1
    with pytest.raises(ValueError):
        build_mode_set(BALL1, 0)
    with pytest.raises(ResourceLimitError):
        build_mode_set(build_fermi_ball(4), 1)


def test_generator_structure():
    gen = generator(1.0, cap=4)
    assert gen.antisymmetry_residual() == 0.0
    assert (gen.matrix + gen.matrix.T).count_nonzero() == 0
    om = vacuum(gen).amplitudes
    s_om = gen.matrix @ om
    assert om @ s_om == 0.0
    assert set(_popcount(gen.basis[s_om != 0]).tolist()) == {4}


def test_frozen_generator_size():
    gen = generator(1.0)
    assert (gen.dim, gen.nnz) == (64, 126)
    assert estimate_dimension(MODES, 6) >= gen.dim


def test_caps_and_limits():
    with pytest.raises(ValueError):
        generator(1.0, cap=5)
    with pytest.raises(ResourceLimitError):
        build_generator(MODES, KernelFamily(BALL1, coulomb(1), shift_cutoff=1), 8, max_dim=10)


def test_zero_potential():
    gen = generator(0.0)
    assert gen.matrix.nnz == 0
    st_ = apply_exp_generator(gen, 0.7)
    assert np.array_equal(st_.amplitudes, vacuum(gen).amplitudes)
    for q in MODES.modes:
        assert occupation_expectation(st_, q)[0] == (1.0 if BALL1.contains(q) else 0.0)
    assert all(number_moment(st_, m) == 1.0 for m in range(1, 6))
    assert bootstrap_sup([st_]) == 0.0


def test_lambda_zero_is_vacuum_and_norm():
    gen = generator(1.0)
    assert np.array_equal(apply_exp_generator(gen, 0.0).amplitudes, vacuum(gen).amplitudes)
    for lam in (0.3, 1.0):
        st_ = apply_exp_generator(gen, lam, tol=1e-13)
        assert abs(st_.norm - 1.0) <= 1e-12
        assert st_.odd_weight() == 0.0
        p, h = particle_hole_numbers(st_)
        assert p == pytest.approx(h, abs=1e-14)
    with pytest.raises(ValueError):
        apply_exp_generator(gen, 1.5)


def test_expv_matches_references():
    gen = generator(50.0)
    v = vacuum(gen).amplitudes
    w, rep = expv(gen.matrix, v, -1.0, tol=1e-13)
    assert np.max(np.abs(w - expm_multiply(-gen.matrix, v))) <= 1e-12
    assert np.max(np.abs(w - expm(-gen.matrix.toarray()) @ v)) <= 1e-12
    assert rep.error_estimate <= 1e-12


@given(st.integers(0, 2**31 - 1), st.floats(-3.0, 3.0))
def test_expv_random_antisymmetric(seed, t):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(40, 40))
    a = sp.csr_matrix(a - a.T)
    v = rng.normal(size=40)
    w, _ = expv(a, v, t, tol=1e-12)
    ref = expm(t * a.toarray()) @ v
    assert np.max(np.abs(w - ref)) <= 1e-9 * np.linalg.norm(v)
    assert np.linalg.norm(w) == pytest.approx(np.linalg.norm(v), rel=1e-10)


def test_occupation_outside_modes_flag():
    st_ = apply_exp_generator(generator(1.0), 1.0)
    assert occupation_expectation(st_, (5, 0, 0)) == (0.0, False)
    val, flag = occupation_expectation(st_, (1, 1, 0))
    assert flag and 0.0 <= val <= 1.0


def test_bootstrap_monotone_under_refinement():
    gen = generator(1.0)
    coarse = [apply_exp_generator(gen, x) for x in (0.0, 0.5, 1.0)]
    fine = coarse + [apply_exp_generator(gen, x) for x in (0.25, 0.75)]
    assert bootstrap_sup(fine) >= bootstrap_sup(coarse)
    with pytest.raises(ValueError):
        bootstrap_sup([])


def test_bootstrap_quadratic_in_coupling():
    scales = [1e-3, 3e-3, 1e-2, 3e-2]
    xi = [run_oracle(BALL1, coulomb(s), cap=6, qs=[]).xi for s in scales]
    assert loglog_slope(scales, xi) == pytest.approx(2.0, abs=0.1)


def test_frozen_oracle_report():
    rep = run_oracle(BALL1, coulomb(1e-2), cap=6, qs=[(1, 1, 0), (-1, 0, 0), (9, 0, 0)])
    assert (rep.modes, rep.dim, rep.nnz) == (24, 64, 126)
    row = rep.per_q[0]
    assert row["n_exact"] == pytest.approx(2.6400947788717843e-09, rel=1e-9)
    assert row["n_rpa_trunc"] == pytest.approx(3.452426204661278e-09, rel=1e-12)
    # the analytic pieces reproduce the exact value once exchange enters with a minus sign
    assert abs(row["residual_minus"]) < 1e-6 * abs(row["residual"])
    assert rep.per_q[1]["n_exact"] == pytest.approx(0.9999999942684719, abs=1e-15)
    assert rep.per_q[2]["in_modes"] is False
    assert rep.as_dict()["modes"] == 24


def test_zero_potential_oracle_residuals_vanish():
    rep = run_oracle(BALL1, coulomb(0), cap=4)
    assert all(r["residual"] == 0.0 and r["residual_minus"] == 0.0 for r in rep.per_q)


def test_cap_stability_of_moments():
    a = run_oracle(BALL1, coulomb(1), cap=4, qs=[])
    b = run_oracle(BALL1, coulomb(1), cap=6, qs=[])
    ma = max(m["moments"][1] for m in a.moments)
    mb = max(m["moments"][1] for m in b.moments)
    assert abs(ma - mb) <= 0.01 * mb
