"""Lyapunov functions, decay constants and the invariant set of the ``k`` loop.

Every Lyapunov object offers the same small interface:

``value(z)``
    the function itself;
``derivative(z)``
    its closed-form time derivative along ``vector_field``;
``vector_field(z)``
    the flow the derivative refers to, used for finite-difference checks.

States are arrays with the compartments on the last axis; ``(E, M, F)`` for
:class:`ThetaProxyLyapunov` and :class:`WildLyapunov`, ``(E, M, F, Ms)``
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .controllers import Backstepping, LinearTotalMales, LinearWildMales
from .model import (
    ModelParams,
    _ratio_or_zero,
    _sit_rhs,
    _stack,
    _wild_rhs,
    offspring_number_R0,
    offspring_number_R_theta,
)

__all__ = [
    "OffDomainError",
    "NoReleaseLyapunov",
    "WildLyapunov",
    "ThetaProxyLyapunov",
    "BacksteppingLyapunov",
    "TotalMalesLyapunov",
    "decay_rate_c0",
    "decay_bound_epsilon",
    "choose_epsilon",
    "kappa_bar",
    "kappa_interval",
    "boundary_functions",
    "in_invariant_set",
    "sample_invariant_set",
    "sample_states",
    "flow_derivative_fd",
    "empirical_decay_rate",
    "lyapunov",
    "lyapunov_value",
    "lyapunov_analytic_derivative",
    "wild_males_as_total_males",
    "CheckResult",
    "lyapunov_suite",
    "invariance_suite",
    "CertifySpec",
    "certify",
]


class OffDomainError(ValueError):
    """The decay statement of a Lyapunov function does not cover a state."""


def _split(z):
    z = np.asarray(z, dtype=float)
    return z, tuple(z[..., j] for j in range(z.shape[-1]))


def _require_subcritical(R, what):
    if np.any(np.asarray(R) >= 1):
        raise ValueError(f"{what} requires an offspring number below 1")


def _rk4(field, z, h):
    k1 = field(z)
    k2 = field(z + 0.5 * h * k1)
    k3 = field(z + 0.5 * h * k2)
    k4 = field(z + h * k3)
    return z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass(frozen=True)
class NoReleaseLyapunov:
    """Linear Lyapunov function of the full model without releases, ``R0 < 1``."""

    p: ModelParams

    def __post_init__(self):
        _require_subcritical(offspring_number_R0(self.p), "NoReleaseLyapunov")

    @property
    def weights(self):
        p, R0 = self.p, offspring_number_R0(self.p)
        return (1 + R0) / (1 - R0), 1.0, 2 * p.beta_E / (p.delta_F * (1 - R0)), 1.0

    def value(self, z):
        z, (E, M, F, Ms) = _split(z)
        wE, wM, wF, wS = self.weights
        return wE * E + wM * M + wF * F + wS * Ms

    def vector_field(self, z):
        z, (E, M, F, Ms) = _split(z)
        return _stack(*_sit_rhs(self.p, E, M, F, Ms, 0.0))

    def derivative(self, z):
        p, R0 = self.p, offspring_number_R0(self.p)
        z, (E, M, F, Ms) = _split(z)
        sterile_share = _ratio_or_zero(p.gamma_s * Ms, M + p.gamma_s * Ms)
        return (
            -(p.nu * p.nu_E + p.delta_E) * E
            - p.beta_E / p.K * (1 + R0) / (1 - R0) * F * E
            - p.delta_M * M
            - p.beta_E * F
            - p.delta_s * Ms
            - 2 * p.beta_E * p.nu * p.nu_E / (p.delta_F * (1 - R0)) * sterile_share * E
        )

    @property
    def decay_rate(self):
        return decay_rate_c0(self.p)


@dataclass(frozen=True)
class WildLyapunov:
    """Strict Lyapunov function of the wild ``(E, M, F)`` model when ``R0 < 1``."""

    p: ModelParams

    def __post_init__(self):
        _require_subcritical(offspring_number_R0(self.p), "WildLyapunov")

    def value(self, x):
        x, (E, M, F) = _split(x)
        wE, wM, wF, _ = NoReleaseLyapunov(self.p).weights
        return wE * E + wM * M + wF * F

    def vector_field(self, x):
        x, (E, M, F) = _split(x)
        return _stack(*_wild_rhs(self.p, E, M, F))

    def derivative(self, x):
        p, R0 = self.p, offspring_number_R0(self.p)
        x, (E, M, F) = _split(x)
        return (
            -(p.nu * p.nu_E + p.delta_E) * E
            - p.beta_E / p.K * (1 + R0) / (1 - R0) * F * E
            - p.delta_M * M
            - p.beta_E * F
        )


@dataclass(frozen=True)
class ThetaProxyLyapunov:
    """Lyapunov function of the wild model with sterile males pinned at ``theta M``."""

    p: ModelParams
    theta: float

    def __post_init__(self):
        _require_subcritical(offspring_number_R_theta(self.p, self.theta), "ThetaProxyLyapunov")

    @property
    def weights(self):
        p, R = self.p, offspring_number_R_theta(self.p, self.theta)
        return (1 + R) / (1 - R), 1.0, 2 * p.beta_E / (p.delta_F * (1 - R))

    def value(self, x):
        x, (E, M, F) = _split(x)
        wE, wM, wF = self.weights
        return wE * E + wM * M + wF * F

    def vector_field(self, x):
        p = self.p
        x, (E, M, F) = _split(x)
        dE, dM, _ = _wild_rhs(p, E, M, F)
        dF = p.nu * p.nu_E / (1 + p.gamma_s * self.theta) * E - p.delta_F * F
        return _stack(dE, dM, dF)

    def derivative(self, x):
        p, R = self.p, offspring_number_R_theta(self.p, self.theta)
        x, (E, M, F) = _split(x)
        return -p.beta_E * F - p.delta_M * M - (1 + R) / (1 - R) * p.beta_E / p.K * F * E - (p.nu * p.nu_E + p.delta_E) * E


@dataclass(frozen=True)
class BacksteppingLyapunov:
    """``W = V_theta(E, M, F) + alpha (theta M - Ms)^2 / (theta M + Ms)``.

    The quadratic term is taken as 0 on the face ``M + Ms = 0``. The derivative
    is along the loop closed by ``controller`` (designed with ``p``).
    """

    p: ModelParams
    controller: Backstepping

    @property
    def proxy(self):
        return ThetaProxyLyapunov(self.p, self.controller.theta)

    def value(self, z):
        z, (E, M, F, Ms) = _split(z)
        th, al = self.controller.theta, self.controller.alpha
        mismatch = al * _ratio_or_zero((th * M - Ms) ** 2, th * M + Ms)
        return self.proxy.value(z[..., :3]) + mismatch

    def vector_field(self, z):
        z, (E, M, F, Ms) = _split(z)
        u = self.controller.rate(self.p, z)
        return _stack(*_sit_rhs(self.p, E, M, F, Ms, u))

    def derivative(self, z):
        p, c = self.p, self.controller
        z, (E, M, F, Ms) = _split(z)
        th, al = c.theta, c.alpha
        u = c.rate(p, z)
        # females follow the true mating fraction, not the pinned 1 / (1 + gamma_s theta)
        _, _, wF = self.proxy.weights
        mating_gap = _ratio_or_zero(M, M + p.gamma_s * Ms) - 1 / (1 + p.gamma_s * th)
        female_term = wF * p.nu * p.nu_E * E * mating_gap
        lead = th * M + Ms
        cross = 3 * th * M + Ms
        bracket = (
            ((1 - p.nu) * p.nu_E * th * E - th * p.delta_M * M) * (th * M + 3 * Ms)
            - u * cross
            + p.delta_s * Ms * cross
        )
        mismatch_term = al * _ratio_or_zero(th * M - Ms, lead**2) * bracket
        return self.proxy.derivative(z[..., :3]) + female_term + mismatch_term

    def smooth_at(self, z, h: float = 1e-3):
        """True where ``G`` keeps its sign over one step ``h`` either way.

        The closed loop is only Lipschitz across ``G = 0``, so finite
        differences straddling it do not measure the derivative.
        """
        z = np.asarray(z, dtype=float)
        sign = np.sign(self.controller.unclipped(self.p, z))
        fwd = _rk4(self.vector_field, z, h)
        back = _rk4(self.vector_field, z, -h)
        return (np.sign(self.controller.unclipped(self.p, fwd)) == sign) & (
            np.sign(self.controller.unclipped(self.p, back)) == sign
        )


@dataclass(frozen=True)
class TotalMalesLyapunov:
    """``U = delta_F E + eps M + beta_E (1 + eps) F + eps^2 Ms`` for the loop ``u = k (M + Ms)``.

    ``eps = 0`` gives the weak function ``delta_F E + beta_E F``. When
    ``kappa`` is set, :meth:`derivative` refuses states outside the invariant
    set ``M(kappa)``, where no decay is claimed.
    """

    p: ModelParams
    k: float
    eps: float
    kappa: float | None = None

    def __post_init__(self):
        if not 0 <= self.eps <= 1:
            raise ValueError("eps must lie in [0, 1]")

    def value(self, z):
        p, e = self.p, self.eps
        z, (E, M, F, Ms) = _split(z)
        return p.delta_F * E + e * M + p.beta_E * (1 + e) * F + e * e * Ms

    def vector_field(self, z):
        z, (E, M, F, Ms) = _split(z)
        return _stack(*_sit_rhs(self.p, E, M, F, Ms, self.k * (M + Ms)))

    def derivative(self, z):
        p, e, k = self.p, self.eps, self.k
        z, (E, M, F, Ms) = _split(z)
        if self.kappa is not None and not np.all(in_invariant_set(p, self.kappa, z, tol=1e-7 * p.K)):
            raise OffDomainError("state outside M(kappa): no decay statement applies")
        frac = _ratio_or_zero(M, M + p.gamma_s * Ms)
        return (
            p.delta_F * (p.beta_E * F * (1 - E / p.K) - p.aquatic_exit * E)
            + e * ((1 - p.nu) * p.nu_E * E - p.delta_M * M)
            + p.beta_E * (1 + e) * (p.nu * p.nu_E * E * frac - p.delta_F * F)
            + e * e * (k * M - (p.delta_s - k) * Ms)
        )


def lyapunov(kind: str, p: ModelParams, **constants):
    """Build a Lyapunov function from its tag.

    ``V_noMs`` and ``V_tilde`` (its restriction to ``(E, M, F)``) need
    ``R0 < 1``; ``V_theta`` takes ``theta``; ``W_backstepping`` takes
    ``theta``, ``alpha`` and ``beta_s``; ``U_epsilon`` takes ``k``, ``eps`` and
    optionally ``kappa``; ``Ubar`` is ``U_epsilon`` with ``eps = 0``.
    """
    if kind == "V_noMs":
        return NoReleaseLyapunov(p)
    if kind == "V_tilde":
        return WildLyapunov(p)
    if kind == "V_theta":
        return ThetaProxyLyapunov(p, constants["theta"])
    if kind == "W_backstepping":
        return BacksteppingLyapunov(p, Backstepping(constants["theta"], constants["alpha"], constants["beta_s"]))
    if kind == "U_epsilon":
        return TotalMalesLyapunov(p, constants["k"], constants["eps"], constants.get("kappa"))
    if kind == "Ubar":
        return TotalMalesLyapunov(p, constants["k"], 0.0, constants.get("kappa"))
    raise ValueError(f"unknown Lyapunov kind {kind!r}")


def lyapunov_value(lyap, z):
    return lyap.value(z)


def lyapunov_analytic_derivative(lyap, z):
    return lyap.derivative(z)


def decay_rate_c0(p: ModelParams) -> float:
    """Exponential rate certified for the no-release function when ``R0 < 1``."""
    R0 = offspring_number_R0(p)
    _require_subcritical(R0, "decay_rate_c0")
    return min(
        (p.nu * p.nu_E + p.delta_E) * (1 - R0) / (1 + R0),
        p.delta_F * (1 - R0) / 2,
        p.delta_M,
        p.delta_s,
    )


def decay_bound_epsilon(p: ModelParams, k: float, kappa: float, eps: float) -> float:
    """Rate ``c`` with ``dU/dt <= -c U`` on ``M(kappa)``, from a termwise bound.

    Each compartment's coefficient in the derivative bound is divided by its
    weight in ``U``; the smallest ratio is the certified rate (it may be
    negative, meaning no certificate for this ``eps``).
    """
    share = kappa / (kappa + p.gamma_s)
    rates = [
        (p.delta_F * p.aquatic_exit - eps * (1 - p.nu) * p.nu_E - p.beta_E * (1 + eps) * p.nu * p.nu_E * share) / p.delta_F,
        p.delta_M - eps * k,
        eps * p.delta_F / (1 + eps),
        p.delta_s - k,
    ]
    return float(min(rates))


def choose_epsilon(p: ModelParams, k: float, kappa: float):
    """Weight ``eps`` in ``(0, 1]`` maximizing :func:`decay_bound_epsilon`; returns ``(eps, rate)``."""
    res = minimize_scalar(lambda e: -decay_bound_epsilon(p, k, kappa, e), bounds=(1e-12, 1.0), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x), -float(res.fun)


def kappa_bar(p: ModelParams):
    """Largest ``kappa`` for which ``M(kappa)`` is invariant; needs ``R0 > 1``."""
    excess = p.beta_E * p.nu * p.nu_E - p.delta_F * p.aquatic_exit
    if np.any(excess <= 0):
        raise ValueError("kappa_bar requires R0 > 1")
    return p.gamma_s * p.delta_F * p.aquatic_exit / excess


def kappa_interval(p: ModelParams, k: float):
    """``[(delta_s - k) / k, kappa_bar]``: the ``kappa`` for which ``M(kappa)`` is invariant."""
    return (p.delta_s - k) / k, kappa_bar(p)


def boundary_functions(p: ModelParams, kappa, z):
    """``(h1, h2, h3)``; ``z`` lies in ``M(kappa)`` iff all three are <= 0."""
    z, (E, M, F, Ms) = _split(z)
    h1 = p.beta_E * F * (1 - E / p.K) - p.aquatic_exit * E
    h2 = M - kappa * Ms
    h3 = (1 - p.nu) * p.nu_E * E - p.delta_M * M
    return h1, h2, h3


def in_invariant_set(p: ModelParams, kappa, z, tol: float = 0.0):
    h1, h2, h3 = boundary_functions(p, kappa, z)
    return (h1 <= tol) & (h2 <= tol) & (h3 <= tol)


def sample_invariant_set(p: ModelParams, kappa, n: int, rng: np.random.Generator, ms_max: float | None = None):
    """``n`` random points of ``M(kappa)`` with ``Ms`` up to ``ms_max`` (default ``10 K``).

    Drawn coordinate by coordinate, each uniformly within the bound the
    previous ones impose, so every draw is a member by construction.
    """
    ms_max = 10 * p.K if ms_max is None else ms_max
    Ms = ms_max * rng.random(n)
    M = kappa * Ms * rng.random(n)
    E = p.delta_M * M / ((1 - p.nu) * p.nu_E) * rng.random(n)
    room = 1 - E / p.K
    F_max = np.where(room > 0, p.aquatic_exit * E / (p.beta_E * np.where(room > 0, room, 1.0)), 10 * p.K)
    F = F_max * rng.random(n)
    return np.stack([E, M, F, Ms], axis=-1)


def sample_states(n: int, rng: np.random.Generator, scale: float, dim: int = 4, decades: float = 4.0,
                  zero_fraction: float = 0.1):
    """Random non-negative states spread log-uniformly over ``decades`` below ``scale``.

    A ``zero_fraction`` of the coordinates is set to exactly zero to exercise
    the faces of the orthant.
    """
    z = scale * 10.0 ** (-decades * rng.random((n, dim)))
    z[rng.random((n, dim)) < zero_fraction] = 0.0
    return z


def flow_derivative_fd(lyap, z, h: float = 1e-3):
    """Derivative of ``value`` along the flow by finite differences.

    Central differences over one RK4 step forward and back, Richardson
    extrapolated from steps ``h_loc`` and ``h_loc / 2``. ``h_loc`` is ``h``
    shrunk where some compartment would change by more than 1% of itself,
    so only interior states (all compartments positive) give meaningful
    results.
    """
    z = np.asarray(z, dtype=float)
    f = np.asarray(lyap.vector_field(z))
    with np.errstate(divide="ignore", invalid="ignore"):
        horizon = np.min(np.where(f != 0, 0.01 * z / np.abs(f), np.inf), axis=-1)
    h_loc = np.minimum(h, horizon)[..., None]

    def central(step):
        fwd = _rk4(lyap.vector_field, z, step)
        back = _rk4(lyap.vector_field, z, -step)
        return (lyap.value(fwd) - lyap.value(back)) / (2 * step[..., 0])

    return (4 * central(h_loc / 2) - central(h_loc)) / 3


def empirical_decay_rate(lyap, z):
    """Smallest observed ``-dV/dt / V`` over the states ``z`` (origin excluded)."""
    v = np.asarray(lyap.value(z))
    d = np.asarray(lyap.derivative(z))
    keep = v > 0
    return float(np.min(-d[keep] / v[keep]))


def wild_males_as_total_males(p: ModelParams, lam: float):
    """Map the loop ``u = lam M`` onto an equivalent ``u = k (M + Ms)`` loop.

    With ``k = lam`` and a sterile death rate raised by ``lam`` the two closed
    loops have identical vector fields. Returns ``(p_mapped, controller)``.
    """
    return p.replace(delta_s=p.delta_s + lam), LinearTotalMales(lam)


# --------------------------------------------------------------------------
# property suites


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _states_with_males(n, rng, scale, zero_fraction):
    z = sample_states(n, rng, scale, zero_fraction=zero_fraction)
    empty = z[:, 1] + z[:, 3] == 0
    z[empty, 1] = scale * rng.random(int(empty.sum()))
    return z


def _fd_check(name, lyap, z, rtol, mask=None):
    an = np.asarray(lyap.derivative(z))
    fd = np.asarray(flow_derivative_fd(lyap, z))
    keep = np.ones(len(z), dtype=bool) if mask is None else mask
    rel = np.abs(fd - an)[keep] / np.abs(an)[keep]
    worst = float(rel.max())
    return CheckResult(f"finite differences: {name}", worst <= rtol,
                       f"max relative error {worst:.2e} over {int(keep.sum())} interior states")


def lyapunov_suite(p: ModelParams, n: int, rng: np.random.Generator, theta=220.0, alpha=13.0, beta_s=1.0,
                   k=0.119, fd_rtol=1e-6) -> list[CheckResult]:
    """Sampled checks of every decay statement, plus analytic against numeric derivatives.

    ``p`` must have ``R0 > 1``; the no-release checks use a copy of ``p``
    with ``beta_E`` scaled so that ``R0 = 1/2``.
    """
    K = float(p.K)
    out = []
    sub = p.replace(beta_E=0.5 / float(offspring_number_R0(p)) * p.beta_E)
    z = _states_with_males(n, rng, K, 0.1)

    V = NoReleaseLyapunov(sub)
    c0 = decay_rate_c0(sub)
    v, dv = V.value(z), V.derivative(z)
    margin = float(np.max(dv + c0 * v * (1 - 1e-12)))
    out.append(CheckResult("no release, R0 < 1: dV/dt <= -c0 V", margin <= 0,
                           f"c0 = {c0:.6g}, empirical rate {empirical_decay_rate(V, z):.6g}"))

    P = ThetaProxyLyapunov(p, theta)
    x = z[:, :3]
    dv = P.derivative(x)
    ok = np.all(dv <= 0) and np.all(dv[np.any(x > 0, axis=1)] < 0)
    out.append(CheckResult("pinned ratio theta: dV/dt <= 0, < 0 off origin", bool(ok),
                           f"max dV/dt {float(dv.max()):.3e}"))

    c = Backstepping(theta, alpha, beta_s)
    W = BacksteppingLyapunov(p, c)
    zw = sample_states(n, rng, K, zero_fraction=0.1)
    zw = zw[np.any(zw > 0, axis=1)]
    dw = W.derivative(zw)
    out.append(CheckResult("backstepping: dW/dt < 0 off origin", bool(np.all(dw < 0)),
                           f"max dW/dt {float(dw.max()):.3e}, empirical rate {empirical_decay_rate(W, zw):.3e}"))

    lo, hi = kappa_interval(p, k)
    kappa = 0.5 * (lo + hi)
    eps, rate = choose_epsilon(p, k, kappa)
    U = TotalMalesLyapunov(p, k, eps, kappa)
    zu = sample_invariant_set(p, kappa, n, rng)
    du = U.derivative(zu)
    margin = float(np.max(du + rate * U.value(zu) * (1 - 1e-12)))
    out.append(CheckResult("total males on M(kappa): dU/dt <= -c(eps) U < 0", margin <= 0 and bool(np.all(du < 0)),
                           f"kappa = {kappa:.6g}, eps = {eps:.4g}, c(eps) = {rate:.3e}, "
                           f"empirical rate {empirical_decay_rate(U, zu):.3e}"))

    interior = _states_with_males(n, rng, K, 0.0)
    out.append(_fd_check("no release", V, interior, fd_rtol))
    out.append(_fd_check("wild model", WildLyapunov(sub), interior[:, :3], fd_rtol))
    out.append(_fd_check("pinned ratio theta", P, interior[:, :3], fd_rtol))
    out.append(_fd_check("backstepping", W, interior, fd_rtol, W.smooth_at(interior)))
    zu_in = zu[np.all(zu > 0, axis=1)]
    out.append(_fd_check("total males", TotalMalesLyapunov(p, k, eps), zu_in, fd_rtol))
    return out


def invariance_suite(p: ModelParams, n: int, rng: np.random.Generator, k=0.119, lam=22.0, t_final=300.0,
                     step=0.01) -> list[CheckResult]:
    """Trajectories from random points of ``M(kappa_bar)`` under both linear loops.

    Membership is tested against ``1e-7 K``; the report gives the largest
    positive value any boundary function reached.
    """
    from .integrate import IntegratorConfig, simulate

    kb = kappa_bar(p)
    tol = 1e-7 * float(p.K)
    z0 = sample_invariant_set(p, kb, n, rng)
    cfg = IntegratorConfig(t_final=t_final, step=step)
    p_mapped, mapped = wild_males_as_total_males(p, lam)
    out = []
    for name, params, controller in (
        (f"u = k (M + Ms), k = {k}", p, LinearTotalMales(k)),
        (f"u = lam M, lam = {lam}", p, LinearWildMales(lam)),
        (f"mapped total-male loop, k = {lam}", p_mapped, mapped),
    ):
        traj = simulate(params, controller, z0, cfg)
        h = np.stack(boundary_functions(p, kb, traj.states), axis=-1)
        worst = float(h.max())
        out.append(CheckResult(f"M(kappa_bar) invariant under {name}", worst <= tol,
                               f"max boundary excursion {max(worst, 0.0):.3e} (tolerance {tol:.3e})"))
    f_lam = _stack(*_sit_rhs(p, *(z0[:, j] for j in range(4)), lam * z0[:, 1]))
    f_map = _stack(*_sit_rhs(p_mapped, *(z0[:, j] for j in range(4)), lam * (z0[:, 1] + z0[:, 3])))
    # the mapped sterile equation cancels (delta_s + lam) Ms against lam Ms
    scale = np.abs(f_lam) + lam * (z0[:, 1] + z0[:, 3])[:, None] + 1.0
    gap = float(np.max(np.abs(f_lam - f_map) / scale))
    out.append(CheckResult("wild-male loop equals mapped total-male loop", gap <= 1e-12, f"max scaled gap {gap:.2e}"))
    return out


@dataclass(frozen=True)
class CertifySpec:
    """Sizes and gains for :func:`certify`."""

    n_states: int = 1000
    n_trajectories: int = 100
    theta: float = 220.0
    alpha: float = 13.0
    beta_s: float = 1.0
    k: float = 0.119
    lam: float = 22.0
    t_final: float = 300.0
    step: float = 0.01
    seed: int = 0


def certify(p: ModelParams, spec: CertifySpec = CertifySpec()) -> list[CheckResult]:
    """Both suites, on Philox streams keyed by ``seed`` and ``seed ^ 1``."""
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    checks = lyapunov_suite(p, spec.n_states, rng, spec.theta, spec.alpha, spec.beta_s, spec.k)
    rng = np.random.Generator(np.random.Philox(key=spec.seed ^ 1))
    return checks + invariance_suite(p, spec.n_trajectories, rng, spec.k, spec.lam, spec.t_final, spec.step)
