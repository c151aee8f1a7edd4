import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sitstab.certificates import (
    BacksteppingLyapunov,
    CertifySpec,
    OffDomainError,
    TotalMalesLyapunov,
    boundary_functions,
    certify,
    choose_epsilon,
    decay_bound_epsilon,
    decay_rate_c0,
    empirical_decay_rate,
    flow_derivative_fd,
    in_invariant_set,
    invariance_suite,
    kappa_bar,
    kappa_interval,
    lyapunov,
    lyapunov_analytic_derivative,
    lyapunov_value,
    sample_invariant_set,
    sample_states,
    wild_males_as_total_males,
)
from sitstab.controllers import Backstepping, LinearWildMales
from sitstab.model import TABLE1, persistence_equilibrium, sit_vector_field

K = TABLE1.K
# beta_E chosen so that R0 = 0.5
HALF = TABLE1.replace(beta_E=0.5 * 0.04 * 0.08 / (0.49 * 0.05))
KINDS = [
    ("V_noMs", HALF, {}),
    ("V_tilde", HALF, {}),
    ("V_theta", TABLE1, {"theta": 220.0}),
    ("W_backstepping", TABLE1, {"theta": 220.0, "alpha": 13.0, "beta_s": 1.0}),
    ("U_epsilon", TABLE1, {"k": 0.119, "eps": 0.5}),
    ("Ubar", TABLE1, {"k": 0.119}),
]


def _rng(seed=0):
    return np.random.Generator(np.random.Philox(key=seed))


@pytest.mark.parametrize("kind, p, consts", KINDS)
def test_every_function_vanishes_at_origin(kind, p, consts):
    lyap = lyapunov(kind, p, **consts)
    dim = 3 if kind in ("V_tilde", "V_theta") else 4
    assert lyapunov_value(lyap, np.zeros(dim)) == 0
    assert lyapunov_analytic_derivative(lyap, np.zeros(dim)) == 0


def test_unknown_kind():
    with pytest.raises(ValueError):
        lyapunov("V_other", TABLE1)


def test_no_release_function_needs_subcritical_params():
    with pytest.raises(ValueError):
        lyapunov("V_noMs", TABLE1)


def test_total_males_example_value():
    assert lyapunov("U_epsilon", TABLE1, k=0.119, eps=1.0).value([1, 1, 1, 1]) == pytest.approx(22.04, rel=1e-14)


def test_W_reduces_to_proxy_on_target_ratio():
    W = lyapunov("W_backstepping", TABLE1, theta=220.0, alpha=13.0, beta_s=1.0)
    rng = _rng(1)
    x = sample_states(50, rng, K, dim=3)
    z = np.column_stack([x, 220.0 * x[:, 1]])
    np.testing.assert_allclose(W.value(z), W.proxy.value(x), rtol=1e-14)


def test_W_is_continuous_towards_the_male_free_face():
    W = lyapunov("W_backstepping", TABLE1, theta=220.0, alpha=13.0, beta_s=1.0)
    z = np.array([1000.0, 1e-3, 500.0, 200.0])
    vals = [W.value(z * [1, t, 1, t]) for t in 10.0 ** -np.arange(0, 10)]
    assert abs(vals[-1] - W.value([1000.0, 0, 500.0, 0])) < 1e-6 * abs(vals[-1])


def test_c0_example_and_limit():
    assert decay_rate_c0(HALF) == pytest.approx(0.01, rel=1e-12)
    near = TABLE1.replace(beta_E=0.999999 * 0.04 * 0.08 / (0.49 * 0.05))
    assert 0 < decay_rate_c0(near) < 1e-7
    with pytest.raises(ValueError):
        decay_rate_c0(TABLE1)


def test_no_release_decay_holds_on_random_states():
    V = lyapunov("V_noMs", HALF)
    z = sample_states(2000, _rng(2), 10 * K)
    z = z[z[:, 1] + z[:, 3] > 0]
    assert empirical_decay_rate(V, z) >= decay_rate_c0(HALF) * (1 - 1e-12)


def test_kappa_bar_example_and_limit():
    assert kappa_bar(TABLE1) == pytest.approx(0.0032 / 0.2418, rel=1e-12)
    assert kappa_bar(TABLE1.replace(beta_E=1e8)) < 1e-7
    with pytest.raises(ValueError):
        kappa_bar(HALF)
    lo, hi = kappa_interval(TABLE1, 0.119)
    assert lo == pytest.approx(0.001 / 0.119) and hi == kappa_bar(TABLE1)


def test_boundary_function_examples():
    assert in_invariant_set(TABLE1, kappa_bar(TABLE1), np.zeros(4))
    z_star = persistence_equilibrium(TABLE1).state
    _, h2, _ = boundary_functions(TABLE1, kappa_bar(TABLE1), z_star)
    assert h2 == pytest.approx(z_star[1]) and not in_invariant_set(TABLE1, kappa_bar(TABLE1), z_star)
    M = 0.51 * 0.05 / 0.1
    z = [1.0, M, 0.0, M / kappa_bar(TABLE1)]
    h1, h2, h3 = boundary_functions(TABLE1, kappa_bar(TABLE1), z)
    assert h1 < 0 and abs(h2) < 1e-15 and abs(h3) < 1e-15
    assert in_invariant_set(TABLE1, kappa_bar(TABLE1), z, tol=1e-12)


def test_invariant_sets_are_nested_in_kappa():
    lo, hi = kappa_interval(TABLE1, 0.119)
    z = sample_invariant_set(TABLE1, lo, 500, _rng(3))
    assert np.all(in_invariant_set(TABLE1, lo, z))
    assert np.all(in_invariant_set(TABLE1, hi, z))


@settings(max_examples=25)
@given(st.integers(0, 2**32))
def test_sampler_stays_in_set(seed):
    z = sample_invariant_set(TABLE1, kappa_bar(TABLE1), 100, _rng(seed))
    assert np.all(z >= 0) and np.all(in_invariant_set(TABLE1, kappa_bar(TABLE1), z))


def test_total_males_decay_on_invariant_set():
    k = 0.119
    kappa = sum(kappa_interval(TABLE1, k)) / 2
    eps, c = choose_epsilon(TABLE1, k, kappa)
    assert 0 < eps <= 1 and c > 0
    assert c == pytest.approx(decay_bound_epsilon(TABLE1, k, kappa, eps))
    U = TotalMalesLyapunov(TABLE1, k, eps, kappa)
    z = sample_invariant_set(TABLE1, kappa, 2000, _rng(4))
    assert empirical_decay_rate(U, z) >= c * (1 - 1e-9)


def test_total_males_refuses_states_off_domain():
    U = TotalMalesLyapunov(TABLE1, 0.119, 0.5, kappa_bar(TABLE1))
    with pytest.raises(OffDomainError):
        U.derivative(persistence_equilibrium(TABLE1).state)
    with pytest.raises(ValueError):
        TotalMalesLyapunov(TABLE1, 0.119, 1.5)


def test_backstepping_W_decreases_off_origin():
    c = Backstepping(220.0, 13.0, 1.0)
    W = BacksteppingLyapunov(TABLE1, c)
    z = sample_states(2000, _rng(5), 10 * K)
    z = z[(z[:, 1] + z[:, 3] > 0) & (W.value(z) > 0)]
    assert np.all(W.derivative(z) < 0)


@pytest.mark.parametrize("kind, p, consts", KINDS)
def test_analytic_derivative_matches_flow(kind, p, consts):
    lyap = lyapunov(kind, p, **consts)
    dim = 3 if kind in ("V_tilde", "V_theta") else 4
    z = sample_states(200, _rng(6), K, dim=dim, zero_fraction=0.0)
    if kind == "W_backstepping":
        z = z[lyap.smooth_at(z)]
    if kind in ("U_epsilon", "Ubar"):
        # off M(kappa) dU/dt may cancel to nearly zero, so relative error means little there
        z = sample_invariant_set(p, kappa_bar(p), 200, _rng(6))
        z = z[np.all(z > 0, axis=1)]
    exact = lyap.derivative(z)
    fd = flow_derivative_fd(lyap, z)
    scale = np.maximum(np.abs(exact), 1e-12 * lyap.value(z))
    assert np.max(np.abs(fd - exact) / scale) < 1e-6


def test_wild_male_loop_maps_onto_total_male_loop():
    p_mapped, ctrl = wild_males_as_total_males(TABLE1, 22.0)
    assert p_mapped.delta_s == pytest.approx(22.12) and ctrl.k == 22.0
    z = np.array([1000.0, 300.0, 400.0, 2000.0])
    lam_u = LinearWildMales(22.0).law(TABLE1)(*z)
    np.testing.assert_allclose(sit_vector_field(TABLE1, z, lam_u),
                               sit_vector_field(p_mapped, z, 22.0 * (z[1] + z[3])), rtol=1e-12, atol=1e-9)


def test_invariance_suite_small():
    checks = invariance_suite(TABLE1, 10, _rng(7), t_final=50.0, step=0.02)
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]


def test_certify_small_spec_passes():
    checks = certify(TABLE1, CertifySpec(n_states=200, n_trajectories=5, t_final=30.0, step=0.02))
    assert checks and all(c.passed for c in checks), [c for c in checks if not c.passed]
