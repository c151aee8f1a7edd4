"""Sterile-male release policies.

Each policy is a small frozen dataclass exposing ``rate(p, z)``, the release
rate for states ``z`` (last axis ``(E, M, F, Ms)``). ``p`` is the parameter set
the law was *designed* with; in robustness studies it differs from the one the
population actually follows. ``law(p)`` binds the design parameters once and
returns a function of the separate components ``(E, M, F, Ms)``, which may be
floats or arrays; the integrator calls that directly.

The ``*_law`` factory functions check the gain against the stabilization
condition of the corresponding law. The dataclasses themselves only check
signs, so that deliberately inadmissible gains can be explored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, offspring_number_R0, offspring_number_R_theta

__all__ = [
    "Constant",
    "Backstepping",
    "LinearTotalMales",
    "LinearWildMales",
    "Controller",
    "evaluate",
    "backstepping_psi",
    "theta_min",
    "k_bounds",
    "lambda_min",
    "constant_law",
    "backstepping_law",
    "linear_total_males_law",
    "linear_wild_males_law",
    "InadmissibleGainError",
]


class InadmissibleGainError(ValueError):
    """A gain violates the stabilization condition of its feedback law."""


def _rate(c, p, z):
    z = np.asarray(z, dtype=float)
    u = c.law(p)(z[..., 0], z[..., 1], z[..., 2], z[..., 3])
    return np.asarray(np.broadcast_to(u, np.broadcast_shapes(np.shape(u), z.shape[:-1])), dtype=float).copy()


def _plain(x):
    """Python float for scalars (fast arithmetic in the integrator), array otherwise."""
    return float(x) if np.ndim(x) == 0 else np.asarray(x, dtype=float)


def _positive(name, value):
    if not np.all(np.asarray(value) > 0):
        raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class Constant:
    """Open-loop release at a fixed rate ``ubar``."""

    ubar: float

    def __post_init__(self):
        if not np.all(np.asarray(self.ubar) >= 0):
            raise ValueError("ubar must be >= 0")

    def law(self, p):
        ubar = _plain(self.ubar)

        def u(E, M, F, Ms):
            return ubar + 0.0 * E

        return u

    def rate(self, p, z):
        return _rate(self, p, z)


@dataclass(frozen=True)
class Backstepping:
    """Full-state backstepping law ``u = max(0, G(z))``.

    ``theta`` is the target ratio ``Ms / M``; ``alpha`` weights the mismatch
    term of the Lyapunov function and ``beta_s`` (1/day) is the rate at which
    that mismatch is driven down.
    """

    theta: float
    alpha: float
    beta_s: float

    def __post_init__(self):
        _positive("theta", self.theta)
        _positive("alpha", self.alpha)
        _positive("beta_s", self.beta_s)

    def psi(self, p):
        return backstepping_psi(p, self.theta)

    def law(self, p, clip=True):
        th = _plain(self.theta)
        gs = _plain(p.gamma_s)
        mismatch_gain = _plain(gs * self.psi(p) / self.alpha)
        emergence = _plain((1.0 - p.nu) * p.nu_E * th)
        male_loss = _plain(th * p.delta_M)
        ds = _plain(p.delta_s)
        relax = _plain(self.beta_s / self.alpha)

        def G_float(E, M, Ms):
            if not M + Ms > 0:
                return 0.0
            tM = th * M
            cross = 3.0 * tM + Ms
            # two bounded ratios rather than a square over a product, which underflows
            return (
                mismatch_gain * E * ((tM + Ms) / (M + gs * Ms)) * ((tM + Ms) / cross)
                + (emergence * E - male_loss * M) * (tM + 3.0 * Ms) / cross
                + ds * Ms
                + relax * (tM - Ms)
            )

        def u(E, M, F, Ms):
            if type(M) is float and type(th) is float:
                G = G_float(E, M, Ms)
                return (G if G > 0 else 0.0) if clip else G
            E, M, Ms = (np.asarray(v, dtype=float) for v in (E, M, Ms))
            active = M + Ms > 0
            tM = th * M
            cross = np.where(active, 3.0 * tM + Ms, 1.0)
            males = np.where(active, M + gs * Ms, 1.0)
            G = (
                mismatch_gain * E * ((tM + Ms) / males) * ((tM + Ms) / cross)
                + (emergence * E - male_loss * M) * (tM + 3.0 * Ms) / cross
                + ds * Ms
                + relax * (tM - Ms)
            )
            G = np.where(active, G, 0.0)
            return np.maximum(G, 0.0) if clip else G

        return u

    def unclipped(self, p, z):
        """``G(z)``; zero on the face ``M + Ms = 0``."""
        z = np.asarray(z, dtype=float)
        return np.asarray(self.law(p, clip=False)(z[..., 0], z[..., 1], z[..., 2], z[..., 3]))

    def rate(self, p, z):
        return _rate(self, p, z)


@dataclass(frozen=True)
class LinearTotalMales:
    """``u = k (M + Ms)``: needs only a count of all adult males."""

    k: float

    def __post_init__(self):
        if not np.all(np.asarray(self.k) >= 0):
            raise ValueError("k must be >= 0")

    def law(self, p):
        k = _plain(self.k)

        def u(E, M, F, Ms):
            return k * (M + Ms)

        return u

    def rate(self, p, z):
        return _rate(self, p, z)


@dataclass(frozen=True)
class LinearWildMales:
    """``u = lam M``: needs only a count of wild males."""

    lam: float

    def __post_init__(self):
        if not np.all(np.asarray(self.lam) >= 0):
            raise ValueError("lam must be >= 0")

    def law(self, p):
        lam = _plain(self.lam)

        def u(E, M, F, Ms):
            return lam * M

        return u

    def rate(self, p, z):
        return _rate(self, p, z)


Controller = Constant | Backstepping | LinearTotalMales | LinearWildMales


def evaluate(c: Controller, p: ModelParams, z) -> np.ndarray:
    """Release rate of policy ``c`` designed with ``p``, at state(s) ``z``."""
    return c.rate(p, z)


def backstepping_psi(p: ModelParams, theta):
    R = offspring_number_R_theta(p, theta)
    if np.any(R >= 1):
        raise InadmissibleGainError("psi requires R(theta) < 1")
    return 2.0 * p.beta_E * p.nu * p.nu_E / (p.delta_F * (1.0 - R) * (1.0 + p.gamma_s * np.asarray(theta)))


def theta_min(p: ModelParams):
    """Smallest ratio ``Ms / M`` with ``R(theta) <= 1``."""
    return (offspring_number_R0(p) - 1.0) / p.gamma_s


def k_bounds(p: ModelParams):
    """Open interval of gains ``k`` for which ``R1(k) < 1``."""
    gain = p.beta_E * p.nu * p.nu_E
    loss = p.aquatic_exit * p.delta_F
    lo = (gain - loss) * p.delta_s / (gain - (1.0 - p.gamma_s) * loss)
    return lo, p.delta_s


def lambda_min(p: ModelParams):
    """Smallest gain ``lam`` with ``R2(lam) <= 1``."""
    gain = p.beta_E * p.nu * p.nu_E
    loss = p.aquatic_exit * p.delta_F
    return (gain - loss) * p.delta_s / (p.gamma_s * loss)


def constant_law(ubar: float) -> Constant:
    return Constant(ubar)


def backstepping_law(p: ModelParams, theta, alpha, beta_s, strict: bool = True) -> Backstepping:
    if strict and np.any(offspring_number_R_theta(p, theta) >= 1):
        raise InadmissibleGainError(f"theta must exceed {float(theta_min(p)):.6g} so that R(theta) < 1")
    return Backstepping(theta, alpha, beta_s)


def linear_total_males_law(p: ModelParams, k, strict: bool = True) -> LinearTotalMales:
    if strict:
        lo, hi = k_bounds(p)
        if np.any((np.asarray(k) <= lo) | (np.asarray(k) >= hi)):
            raise InadmissibleGainError(f"k must lie in ({float(lo):.6g}, {float(hi):.6g})")
    return LinearTotalMales(k)


def linear_wild_males_law(p: ModelParams, lam, strict: bool = True) -> LinearWildMales:
    if strict and np.any(np.asarray(lam) <= lambda_min(p)):
        raise InadmissibleGainError(f"lam must exceed {float(lambda_min(p)):.6g}")
    return LinearWildMales(lam)
