"""Fixed-step integration of the controlled population.

Classic RK4 with the feedback re-evaluated at every stage. Feedback laws such
as the backstepping one have a kink (``max(0, .)``) and a jump on the face
``M + Ms = 0``, so adaptive error control is of little use; a small fixed step
plus a convergence study is easier to trust.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .model import ModelParams, _sit_rhs

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "IntegrationError",
    "rk4_step",
    "closed_loop_field",
    "simulate",
    "detect_intervention_time",
    "control_cost",
]


class IntegrationError(ArithmeticError):
    """The state became non-finite. ``t`` and ``state`` hold the last finite values."""

    def __init__(self, message, t, state):
        super().__init__(message)
        self.t = t
        self.state = state


@dataclass(frozen=True)
class IntegratorConfig:
    t_final: float
    step: float = 0.01
    record_stride: int = 1
    positivity_clamp: bool = True

    def __post_init__(self):
        if not (0 < self.step <= 1.0):
            raise ValueError("step must lie in (0, 1] day")
        if not self.t_final >= 0:
            raise ValueError("t_final must be >= 0")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")


@dataclass
class Trajectory:
    """Recorded samples of one run, or of a batch of runs.

    ``states`` has shape ``(n, *batch, 4)`` and ``controls`` ``(n, *batch)``.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    events: list = field(default_factory=list)
    clamp_count: int = 0
    max_clamp: float = 0.0

    def __len__(self):
        return len(self.times)

    @property
    def final_state(self):
        return self.states[-1]

    def component(self, name: str) -> np.ndarray:
        return self.states[..., "E M F Ms".split().index(name)]


def closed_loop_field(p: ModelParams, controller, design: ModelParams | None = None):
    """Closed-loop right-hand side on separate components.

    Returns ``field(E, M, F, Ms) -> ((dE, dM, dF, dMs), u)`` with the law
    evaluated under ``design`` (default ``p``).
    """
    u_of = controller.law(p if design is None else design)

    def field(E, M, F, Ms):
        u = u_of(E, M, F, Ms)
        return _sit_rhs(p, E, M, F, Ms, u), u

    return field


def rk4_step(field, z, h):
    """One classic RK4 step on a component tuple ``z``."""
    k1, _ = field(*z)
    k2, _ = field(*[a + 0.5 * h * b for a, b in zip(z, k1)])
    k3, _ = field(*[a + 0.5 * h * b for a, b in zip(z, k2)])
    k4, _ = field(*[a + h * b for a, b in zip(z, k3)])
    h6 = h / 6.0
    return tuple(a + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(z, k1, k2, k3, k4))


def simulate(
    p: ModelParams,
    controller,
    z0,
    cfg: IntegratorConfig,
    design: ModelParams | None = None,
    events: Mapping[str, Callable] | None = None,
    stop: Callable | None = None,
) -> Trajectory:
    """Integrate the closed loop from ``z0`` over ``[0, cfg.t_final]``.

    Parameters
    ----------
    p
        Parameters of the population being simulated.
    controller
        Release policy; evaluated with ``design`` (defaults to ``p``).
    z0
        Initial state(s), shape ``(4,)`` or ``(*batch, 4)``.
    events
        Optional mapping ``name -> g(z)`` of scalar functions; every sign
        change of ``g`` along the run is logged as ``(name, t)`` with ``t``
        interpolated linearly. Only for unbatched runs.
    stop
        Optional predicate ``stop(z) -> bool array``; integration ends after
        the first step at which it holds for every batch member. The final
        state is always recorded.

    Raises
    ------
    IntegrationError
        If the state stops being finite.
    """
    z = np.array(z0, dtype=float)
    if z.shape[-1] != 4:
        raise ValueError("z0 must have last dimension 4")
    if np.any(z < 0) or not np.all(np.isfinite(z)):
        raise ValueError("z0 must be finite and componentwise non-negative")
    if events and z.ndim > 1:
        raise ValueError("events are only supported for unbatched runs")

    field = closed_loop_field(p, controller, design)
    h = cfg.step
    n_steps = max(0, math.ceil(cfg.t_final / h - 1e-9))
    stride = int(cfg.record_stride)
    capacity = n_steps // stride + 2
    batch = z.shape[:-1]

    times = np.empty(capacity)
    states = np.empty((capacity,) + z.shape)
    controls = np.empty((capacity,) + batch)

    # components: plain floats for a single run, arrays for a batch
    comps = tuple(float(v) for v in z) if not batch else tuple(z[..., j].copy() for j in range(4))
    _, u = field(*comps)
    times[0], states[0], controls[0] = 0.0, z, u
    n_rec = 1

    g_names = list(events or ())
    g_prev = [float(events[name](z)) for name in g_names]
    log = []
    clamp_count, max_clamp = 0, 0.0

    t = 0.0
    for i in range(1, n_steps + 1):
        t_next = min(i * h, cfg.t_final)
        dt = t_next - t
        new = rk4_step(field, comps, dt)
        if batch:
            if not all(np.isfinite(c).all() for c in new):
                raise IntegrationError(f"non-finite state after t = {t:.6g}; last finite state {_pack(comps)!r}", t, _pack(comps))
            if cfg.positivity_clamp:
                fixed = []
                for c in new:
                    neg = c < 0
                    if neg.any():
                        clamp_count += int(neg.sum())
                        max_clamp = max(max_clamp, float(-c[neg].min()))
                        c = np.where(neg, 0.0, c)
                    fixed.append(c)
                new = tuple(fixed)
        else:
            if not all(math.isfinite(c) for c in new):
                raise IntegrationError(f"non-finite state after t = {t:.6g}; last finite state {comps!r}", t, _pack(comps))
            if cfg.positivity_clamp and min(new) < 0:
                clamp_count += sum(c < 0 for c in new)
                max_clamp = max(max_clamp, -min(new))
                new = tuple(c if c > 0 else 0.0 for c in new)

        if g_names:
            z_new = _pack(new)
            for j, name in enumerate(g_names):
                g = float(events[name](z_new))
                if (g_prev[j] < 0) != (g < 0) and g != g_prev[j]:
                    log.append((name, t + dt * g_prev[j] / (g_prev[j] - g)))
                g_prev[j] = g

        comps, t = new, t_next
        done = stop is not None and bool(np.all(stop(_pack(comps))))
        if i % stride == 0 or i == n_steps or done:
            _, u = field(*comps)
            times[n_rec], states[n_rec], controls[n_rec] = t, _pack(comps), u
            n_rec += 1
        if done:
            break

    return Trajectory(times[:n_rec], states[:n_rec], controls[:n_rec], log, clamp_count, max_clamp)


def _pack(comps):
    return np.stack(np.broadcast_arrays(*comps), axis=-1)


def _first_crossing(times, values, level):
    below = values <= level
    if not below.any():
        return None
    i = int(np.argmax(below))
    if i == 0:
        return float(times[0])
    v0, v1 = values[i - 1], values[i]
    return float(times[i - 1] + (times[i] - times[i - 1]) * (v0 - level) / (v0 - v1))


def detect_intervention_time(traj: Trajectory, p: ModelParams, level: float | None = None):
    """First time the aquatic density falls to ``level`` (default ``K / 100``).

    Linear interpolation between samples. Returns None if never reached; for
    a batched trajectory returns an array with NaN for members that never
    reach it.
    """
    level = p.K / 100.0 if level is None else level
    E = traj.states[..., 0]
    if E.ndim == 1:
        return _first_crossing(traj.times, E, level)
    flat = E.reshape(len(traj.times), -1)
    levels = np.broadcast_to(np.asarray(level, dtype=float), E.shape[1:]).ravel()
    out = np.array(
        [
            np.nan if (tc := _first_crossing(traj.times, flat[:, j], levels[j])) is None else tc
            for j in range(flat.shape[1])
        ]
    )
    return out.reshape(E.shape[1:])


def control_cost(traj: Trajectory, t_end=None):
    """Total release ``int u dt`` by the trapezoidal rule, up to ``t_end``.

    ``t_end`` may be an array matching the batch shape; the last partial
    interval uses linearly interpolated control.
    """
    t = traj.times
    u = traj.controls
    if t_end is None:
        return np.trapezoid(u, t, axis=0) if len(t) > 1 else np.zeros(u.shape[1:])
    t_end = np.asarray(t_end, dtype=float)
    if u.ndim == 1:
        return _cost_until(t, u, float(t_end))
    flat = u.reshape(len(t), -1)
    ends = np.broadcast_to(t_end, u.shape[1:]).ravel()
    return np.array([_cost_until(t, flat[:, j], ends[j]) for j in range(flat.shape[1])]).reshape(u.shape[1:])


def _cost_until(t, u, t_end):
    if not np.isfinite(t_end):
        return np.nan
    t_end = min(t_end, t[-1])
    n = int(np.searchsorted(t, t_end, side="right"))
    total = float(np.trapezoid(u[:n], t[:n])) if n > 1 else 0.0
    if n < len(t) and t_end > t[n - 1]:
        frac = (t_end - t[n - 1]) / (t[n] - t[n - 1])
        u_end = u[n - 1] + frac * (u[n] - u[n - 1])
        total += 0.5 * (u[n - 1] + u_end) * (t_end - t[n - 1])
    return total
