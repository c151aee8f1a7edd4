"""Wild and sterile-male population dynamics.

State vectors are numpy arrays whose last axis holds the compartments in the
order ``(E, M, F, Ms)`` (or ``(E, M, F)`` for the wild model):

E
    aquatic phase density (eggs, larvae, pupae), per ha
M
    wild adult males, per ha
F
    fertilized adult females, per ha
Ms
    sterile adult males, per ha

Every function broadcasts over leading axes, and every field of
:class:`ModelParams` may itself be an array, which is how batches of runs with
different parameter draws are integrated in one pass.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "ModelParams",
    "TABLE1",
    "NoPersistenceError",
    "Equilibrium",
    "EigenData",
    "wild_vector_field",
    "sit_vector_field",
    "mating_fraction",
    "offspring_number_R0",
    "offspring_number_R_theta",
    "offspring_number_R1",
    "offspring_number_R2",
    "persistence_equilibrium",
    "k_feedback_equilibrium",
    "jacobian_at_extinction",
    "eigen_data",
    "constant_release_threshold",
    "equilibrium_tolerance",
]


@dataclass(frozen=True)
class ModelParams:
    """Biological constants of the release model.

    Rates are per day, ``K`` is a density per ha. Fields may be numpy arrays
    of a common shape to describe a batch of parameter sets.

    With ``strict=True`` (the default) the sterile males must not outlive the
    wild ones, i.e. ``delta_s >= delta_M``. Robustness sweeps draw both rates
    independently and pass ``strict=False``.
    """

    beta_E: float
    gamma_s: float
    nu_E: float
    delta_E: float
    delta_F: float
    delta_M: float
    delta_s: float
    nu: float
    K: float
    strict: bool = True

    def __post_init__(self):
        bad = []
        for name in ("beta_E", "nu_E", "delta_E", "delta_F", "delta_M", "delta_s", "K"):
            if not np.all(np.asarray(getattr(self, name)) > 0):
                bad.append(f"{name} must be > 0")
        if not np.all((np.asarray(self.nu) > 0) & (np.asarray(self.nu) < 1)):
            bad.append("nu must lie in (0, 1)")
        gs = np.asarray(self.gamma_s)
        if not np.all((gs > 0) & (gs <= 1)):
            bad.append("gamma_s must lie in (0, 1]")
        if self.strict and not np.all(np.asarray(self.delta_s) >= np.asarray(self.delta_M)):
            bad.append("delta_s must be >= delta_M (pass strict=False to override)")
        if bad:
            raise ValueError("invalid ModelParams: " + "; ".join(bad))

    @classmethod
    def table1(cls, K: float = 22200.0, **overrides) -> "ModelParams":
        """Published reference values, with ``K`` and any field overridable."""
        values = dict(
            beta_E=10.0,
            gamma_s=1.0,
            nu_E=0.05,
            delta_E=0.03,
            delta_F=0.04,
            delta_M=0.1,
            delta_s=0.12,
            nu=0.49,
            K=K,
        )
        values.update(overrides)
        return cls(**values)

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "strict"}

    @property
    def aquatic_exit(self):
        """Total rate of leaving the aquatic phase, ``nu_E + delta_E``."""
        return self.nu_E + self.delta_E

    @property
    def R0(self):
        return offspring_number_R0(self)


TABLE1 = ModelParams.table1()


class NoPersistenceError(ValueError):
    """Raised when a persistence equilibrium is requested but does not exist."""


class Equilibrium(NamedTuple):
    kind: str
    state: np.ndarray
    offspring_number: float


class EigenData(NamedTuple):
    """Spectrum of the linearization at extinction.

    ``v_minus`` and ``v_plus`` are eigenvectors of the 3x3 Jacobian in
    ``(E, M, F)`` order, normalized so that the ``E`` component is 1.
    """

    lam_minus: float
    lam_plus: float
    minus_delta_M: float
    v_minus: np.ndarray
    v_plus: np.ndarray
    discriminant: float


def _check_nonneg(name, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError(f"{name} must be componentwise non-negative")
    return x


def _ratio_or_zero(num, den):
    """``num / den`` where ``den > 0`` and 0 elsewhere; fast path for floats."""
    if type(den) is float:
        return num / den if den > 0 else 0.0
    den = np.asarray(den, dtype=float)
    return np.asarray(num, dtype=float) / np.where(den > 0, den, np.inf)


def mating_fraction(p: ModelParams, M, Ms):
    """Probability that a female mates with a wild male, ``M / (M + gamma_s Ms)``.

    Defined as 0 where no males at all are present.
    """
    return _ratio_or_zero(M, M + p.gamma_s * Ms)


def _wild_rhs(p, E, M, F):
    dE = p.beta_E * F * (1.0 - E / p.K) - p.aquatic_exit * E
    dM = (1.0 - p.nu) * p.nu_E * E - p.delta_M * M
    dF = p.nu * p.nu_E * E - p.delta_F * F
    return dE, dM, dF


def _sit_rhs(p, E, M, F, Ms, u):
    """Unchecked release dynamics on separate components.

    Components may be floats or arrays; used by the integrator at stage
    states, which can be marginally negative.
    """
    dE = p.beta_E * F * (1.0 - E / p.K) - p.aquatic_exit * E
    dM = (1.0 - p.nu) * p.nu_E * E - p.delta_M * M
    dF = p.nu * p.nu_E * E * mating_fraction(p, M, Ms) - p.delta_F * F
    dMs = u - p.delta_s * Ms
    return dE, dM, dF, dMs


def _stack(*parts):
    return np.stack(np.broadcast_arrays(*parts), axis=-1)


def wild_vector_field(p: ModelParams, x) -> np.ndarray:
    """Time derivative of ``(E, M, F)`` without sterile males."""
    x = _check_nonneg("x", x)
    return _stack(*_wild_rhs(p, x[..., 0], x[..., 1], x[..., 2]))


def sit_vector_field(p: ModelParams, z, u=0.0) -> np.ndarray:
    """Time derivative of ``(E, M, F, Ms)`` under release rate ``u``."""
    z = _check_nonneg("z", z)
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("release rate u must be non-negative")
    return _stack(*_sit_rhs(p, z[..., 0], z[..., 1], z[..., 2], z[..., 3], u))


def offspring_number_R0(p: ModelParams):
    return p.beta_E * p.nu * p.nu_E / (p.delta_F * p.aquatic_exit)


def offspring_number_R_theta(p: ModelParams, theta):
    """Offspring number when sterile males are held at ``theta`` times ``M``."""
    return offspring_number_R0(p) / (1.0 + p.gamma_s * np.asarray(theta, dtype=float))


def offspring_number_R1(p: ModelParams, k):
    """Offspring number of the closed loop ``u = k (M + Ms)``, for ``0 <= k < delta_s``."""
    k = np.asarray(k, dtype=float)
    if np.any((k < 0) | (k >= p.delta_s)):
        raise ValueError("k must lie in [0, delta_s)")
    return (p.delta_s - k) * offspring_number_R0(p) / (p.delta_s - (1.0 - p.gamma_s) * k)


def offspring_number_R2(p: ModelParams, lam):
    """Offspring number of the closed loop ``u = lam M``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("lam must be non-negative")
    return p.delta_s * offspring_number_R0(p) / (p.delta_s + p.gamma_s * lam)


def equilibrium_tolerance(p: ModelParams) -> float:
    return 1e-9 * max(1.0, float(np.max(p.K)))


def persistence_equilibrium(p: ModelParams, form: str = "sit") -> Equilibrium:
    """Positive steady state of the uncontrolled population.

    ``form="sit"`` returns ``(E*, M*, F*, 0)``; ``form="wild"`` drops ``Ms``.
    """
    R0 = float(offspring_number_R0(p))
    if R0 <= 1.0:
        raise NoPersistenceError(f"R0 = {R0:g} <= 1: extinction is the only equilibrium")
    E = p.K * (1.0 - 1.0 / R0)
    M = (1.0 - p.nu) * p.nu_E / p.delta_M * E
    F = p.nu * p.nu_E / p.delta_F * E
    if form == "wild":
        state = np.array([E, M, F], dtype=float)
    elif form == "sit":
        state = np.array([E, M, F, 0.0], dtype=float)
    else:
        raise ValueError(f"unknown form {form!r}")
    return Equilibrium("persistence", state, R0)


def k_feedback_equilibrium(p: ModelParams, k: float) -> Equilibrium | None:
    """Positive equilibrium of the loop ``u = k (M + Ms)``, or None when ``R1(k) <= 1``."""
    R1 = float(offspring_number_R1(p, k))
    if R1 <= 1.0:
        return None
    ds = p.delta_s
    E = p.K * (1.0 - 1.0 / R1)
    M = (1.0 - p.nu) * p.nu_E / p.delta_M * E
    F = (ds - k) * p.nu * p.nu_E / (p.delta_F * ((ds - k) + p.gamma_s * k)) * E
    Ms = (1.0 - p.nu) * p.nu_E * k / ((ds - k) * p.delta_M) * E
    return Equilibrium("persistence", np.array([E, M, F, Ms], dtype=float), R1)


def jacobian_at_extinction(p: ModelParams) -> np.ndarray:
    """Jacobian of the wild model at the origin, ``(E, M, F)`` ordering."""
    return np.array(
        [
            [-p.aquatic_exit, 0.0, p.beta_E],
            [(1.0 - p.nu) * p.nu_E, -p.delta_M, 0.0],
            [p.nu * p.nu_E, 0.0, -p.delta_F],
        ],
        dtype=float,
    )


def eigen_data(p: ModelParams) -> EigenData:
    """Closed-form eigenvalues and eigenvectors of :func:`jacobian_at_extinction`.

    The spectrum is ``-delta_M`` together with the two real roots of the
    ``(E, F)`` block. The quadratic roots are computed in a cancellation-free
    way so that ``lam_plus`` is accurate even when ``R0`` is close to 1.
    """
    a = p.aquatic_exit
    trace = a + p.delta_F
    gain = p.beta_E * p.nu * p.nu_E
    disc = (a - p.delta_F) ** 2 + 4.0 * gain
    root = np.sqrt(disc)
    lam_minus = -(trace + root) / 2.0
    # product of the roots is delta_F * a * (1 - R0)
    lam_plus = (p.delta_F * a - gain) / lam_minus

    def vec(lam):
        # E = 1; F from the first row, M from the second
        F = (lam + a) / p.beta_E
        M = (1.0 - p.nu) * p.nu_E / (lam + p.delta_M)
        return np.array([1.0, M, F])

    return EigenData(float(lam_minus), float(lam_plus), -float(p.delta_M), vec(lam_minus), vec(lam_plus), float(disc))


def constant_release_threshold(p: ModelParams):
    """Constant release rate above which the wild population is driven extinct."""
    R0 = offspring_number_R0(p)
    return R0 * p.K * (1.0 - p.nu) * p.nu_E * p.delta_s / (4.0 * p.gamma_s * p.delta_M) * (1.0 - 1.0 / R0) ** 2
