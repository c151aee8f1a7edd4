import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sitstab.model import (
    TABLE1,
    ModelParams,
    NoPersistenceError,
    constant_release_threshold,
    eigen_data,
    jacobian_at_extinction,
    k_feedback_equilibrium,
    mating_fraction,
    offspring_number_R0,
    offspring_number_R1,
    offspring_number_R2,
    offspring_number_R_theta,
    persistence_equilibrium,
    sit_vector_field,
    wild_vector_field,
)

K = 22200.0
densities = st.floats(0, 1e6, allow_nan=False)


def test_params_validation_lists_every_problem():
    with pytest.raises(ValueError) as err:
        ModelParams.table1(beta_E=-1.0, nu=1.5, gamma_s=0.0)
    msg = str(err.value)
    assert "beta_E" in msg and "nu must" in msg and "gamma_s" in msg


def test_sterile_males_must_not_outlive_wild_ones():
    with pytest.raises(ValueError, match="delta_s"):
        ModelParams.table1(delta_s=0.05)
    ModelParams.table1(delta_s=0.05, strict=False)


def test_R0_table1():
    # 10 * 0.49 * 0.05 / (0.04 * 0.08)
    assert offspring_number_R0(TABLE1) == pytest.approx(76.5625, rel=1e-14)


def test_R0_is_linear_in_beta_E():
    assert offspring_number_R0(TABLE1.replace(beta_E=5.0)) == pytest.approx(38.28125, rel=1e-14)


def test_R0_equals_one_on_threshold():
    p = TABLE1.replace(beta_E=0.04 * 0.08 / (0.49 * 0.05))
    assert offspring_number_R0(p) == pytest.approx(1.0, rel=1e-14)


def test_offspring_numbers_reduce_to_R0_at_zero_gain():
    R0 = offspring_number_R0(TABLE1)
    assert offspring_number_R_theta(TABLE1, 0.0) == pytest.approx(R0)
    assert offspring_number_R1(TABLE1, 0.0) == pytest.approx(R0)
    assert offspring_number_R2(TABLE1, 0.0) == pytest.approx(R0)


def test_offspring_number_examples():
    assert offspring_number_R_theta(TABLE1, 220.0) == pytest.approx(76.5625 / 221, rel=1e-14)
    assert offspring_number_R_theta(TABLE1, 75.5625) == pytest.approx(1.0, rel=1e-14)
    # 0.12 * 76.5625 / 22.12
    assert offspring_number_R2(TABLE1, 22.0) == pytest.approx(0.4153481, rel=1e-6)
    assert offspring_number_R1(TABLE1, 0.119) < 1
    # the quoted bound 0.11843 is rounded; R1 is steep there (dR1/dk ~ -2e3)
    assert offspring_number_R1(TABLE1, 0.11843) == pytest.approx(1.0, abs=2e-3)
    assert offspring_number_R2(TABLE1, 9.0675) == pytest.approx(1.0, abs=1e-3)


def test_R1_rejects_gains_outside_range():
    with pytest.raises(ValueError):
        offspring_number_R1(TABLE1, 0.12)
    with pytest.raises(ValueError):
        offspring_number_R2(TABLE1, -1.0)


def test_persistence_equilibrium_table1():
    eq = persistence_equilibrium(TABLE1)
    E, M, F, Ms = eq.state
    assert (math.floor(E), math.floor(M), math.floor(F)) == (21910, 5587, 13419)
    assert Ms == 0.0
    assert eq.kind == "persistence"
    assert np.max(np.abs(sit_vector_field(TABLE1, eq.state))) < 1e-9 * K
    assert np.max(np.abs(wild_vector_field(TABLE1, persistence_equilibrium(TABLE1, "wild").state))) < 1e-9 * K


def test_persistence_equilibrium_scales_with_K():
    a = persistence_equilibrium(TABLE1).state
    b = persistence_equilibrium(TABLE1.replace(K=2 * K)).state
    np.testing.assert_allclose(b, 2 * a, rtol=1e-15)


def test_no_persistence_below_threshold():
    with pytest.raises(NoPersistenceError):
        persistence_equilibrium(TABLE1.replace(beta_E=0.1))


def test_vector_field_examples():
    np.testing.assert_array_equal(wild_vector_field(TABLE1, [0, 0, 0]), 0)
    np.testing.assert_array_equal(sit_vector_field(TABLE1, [0, 0, 0, 0]), 0)
    assert wild_vector_field(TABLE1, [K, 0, 0])[0] == pytest.approx(-0.08 * K)
    with pytest.raises(ValueError):
        wild_vector_field(TABLE1, [-1, 0, 0])
    with pytest.raises(ValueError):
        sit_vector_field(TABLE1, [1, 1, 1, 1], u=-1.0)


@given(densities, st.floats(1e-3, 1e6), densities)
def test_without_sterile_males_full_model_matches_wild_model(E, M, F):
    full = sit_vector_field(TABLE1, [E, M, F, 0.0])
    np.testing.assert_allclose(full[:3], wild_vector_field(TABLE1, [E, M, F]), rtol=1e-15, atol=0)
    assert full[3] == 0.0


def test_mating_fraction_is_zero_without_males():
    assert mating_fraction(TABLE1, 0.0, 0.0) == 0.0
    np.testing.assert_array_equal(mating_fraction(TABLE1, np.zeros(3), np.zeros(3)), 0.0)


def test_batched_parameters_broadcast():
    p = TABLE1.replace(beta_E=np.array([8.0, 10.0]))
    z = np.array([[100.0, 50.0, 30.0, 10.0], [100.0, 50.0, 30.0, 10.0]])
    f = sit_vector_field(p, z)
    np.testing.assert_allclose(f[1], sit_vector_field(TABLE1, z[1]))
    np.testing.assert_allclose(f[0], sit_vector_field(TABLE1.replace(beta_E=8.0), z[0]))


def test_k_feedback_equilibrium():
    assert k_feedback_equilibrium(TABLE1, 0.119) is None
    eq0 = k_feedback_equilibrium(TABLE1, 0.0)
    np.testing.assert_allclose(eq0.state, persistence_equilibrium(TABLE1).state)
    k = 0.05
    eq = k_feedback_equilibrium(TABLE1, k)
    assert np.all(eq.state > 0)
    u = k * (eq.state[1] + eq.state[3])
    assert np.max(np.abs(sit_vector_field(TABLE1, eq.state, u))) < 1e-9 * K


def test_jacobian_spectrum_matches_closed_form():
    J = jacobian_at_extinction(TABLE1)
    ed = eigen_data(TABLE1)
    np.testing.assert_allclose(sorted(np.linalg.eigvals(J).real), sorted([ed.lam_minus, ed.lam_plus, ed.minus_delta_M]),
                               rtol=1e-12)
    assert ed.lam_plus > 0 > ed.lam_minus
    for lam, v in ((ed.lam_minus, ed.v_minus), (ed.lam_plus, ed.v_plus)):
        np.testing.assert_allclose(J @ v, lam * v, rtol=1e-12, atol=1e-14)


def test_spectrum_at_threshold():
    p = TABLE1.replace(beta_E=0.04 * 0.08 / (0.49 * 0.05))
    ed = eigen_data(p)
    assert abs(ed.lam_plus) < 1e-15
    assert ed.lam_minus == pytest.approx(-(0.08 + 0.04), rel=1e-12)
    assert ed.minus_delta_M == -0.1


@given(st.floats(0.2, 50.0))
def test_lam_minus_negative_for_any_fecundity(beta_E):
    assert eigen_data(TABLE1.replace(beta_E=beta_E)).lam_minus < 0


def test_constant_release_threshold():
    # 76.5625 * 22200 * 0.51 * 0.05 * 0.12 / (4 * 0.1) * (75.5625 / 76.5625)^2
    expected = 76.5625 * K * 0.51 * 0.05 * 0.12 / 0.4 * (75.5625 / 76.5625) ** 2
    assert constant_release_threshold(TABLE1) == pytest.approx(expected, rel=1e-14)
    assert constant_release_threshold(TABLE1) == pytest.approx(1.2666e4, rel=1e-4)
    assert constant_release_threshold(TABLE1.replace(K=2 * K)) == pytest.approx(2 * expected, rel=1e-14)
    near = TABLE1.replace(beta_E=1.000001 * 0.04 * 0.08 / (0.49 * 0.05))
    assert constant_release_threshold(near) < 1e-6


@settings(max_examples=50)
@given(st.lists(densities, min_size=4, max_size=4))
def test_fields_finite_on_domain(z):
    assert np.all(np.isfinite(sit_vector_field(TABLE1, z)))
