"""Numerical studies: single scenarios, comparison tables, robustness and stability evidence.

Random draws come from numpy's counter-based Philox generator keyed by
``seed ^ run_index``, so each run's stream is fixed by the seed and its index
alone, whatever the batching or thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import certificates as cert
from .controllers import Backstepping, Constant, LinearTotalMales, LinearWildMales
from .integrate import (
    IntegrationError,
    IntegratorConfig,
    Trajectory,
    control_cost,
    detect_intervention_time,
    simulate,
)
from .model import TABLE1, ModelParams, persistence_equilibrium

__all__ = [
    "COMPARISON_PARAMS",
    "LAMBDA_GRID",
    "THETA_GRID",
    "PARAMETER_INTERVALS",
    "run_rng",
    "ScenarioConfig",
    "ScenarioReport",
    "run_scenario",
    "ComparisonSpec",
    "ComparisonRow",
    "comparison_table",
    "comparison_study",
    "RobustnessSpec",
    "RobustnessResult",
    "sample_truth",
    "robustness_study",
    "EvidenceSpec",
    "EvidenceResult",
    "global_stability_evidence",
    "PRESETS",
    "thread_count",
]

# The comparison tables use an oviposition rate of 8/day, the nominal set's
# earlier value (it is now 10/day); the pinned k-law perturbation is designed on it too.
COMPARISON_PARAMS = TABLE1.replace(beta_E=8.0)
LAMBDA_GRID = (9.06, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0, 16.0, 17.0, 18.0, 19.0, 20.0, 21.0, 22.0)
THETA_GRID = tuple(float(t) for t in range(100, 221, 10))

# uniform truth intervals for the robustness Monte Carlo
PARAMETER_INTERVALS = {
    "beta_E": (7.46, 14.85),
    "nu_E": (0.005, 0.25),
    "delta_E": (0.023, 0.046),
    "delta_F": (0.033, 0.046),
    "delta_M": (0.077, 0.139),
    "delta_s": (0.077, 0.139),
    "gamma_s": (0.5, 1.0),
}


def run_rng(seed: int, run_index: int = 0) -> np.random.Generator:
    """Philox stream for one run; ``.random()`` yields 53-bit uniforms in [0, 1)."""
    return np.random.Generator(np.random.Philox(key=int(seed) ^ int(run_index)))


def thread_count() -> int:
    """Worker cap from ``SITSTAB_THREADS`` (default: CPU count)."""
    raw = os.environ.get("SITSTAB_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    n = int(raw)
    if n < 1:
        raise ValueError("SITSTAB_THREADS must be a positive integer")
    return n


def _map_chunks(fn, chunks):
    workers = min(thread_count(), len(chunks))
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _resolve_z0(p: ModelParams, z0):
    if isinstance(z0, str):
        if z0 != "persistence":
            raise ValueError(f"unknown symbolic initial state {z0!r}")
        return persistence_equilibrium(p).state
    z = np.asarray(z0, dtype=float)
    if z.shape != (4,) or np.any(z < 0) or not np.all(np.isfinite(z)):
        raise ValueError("z0 must be four finite non-negative numbers or 'persistence'")
    return z


# --------------------------------------------------------------------------
# single scenarios


@dataclass(frozen=True)
class ScenarioConfig:
    """One closed-loop run.

    ``design`` is the parameter set the controller is built with; by default
    the simulated one.
    """

    params: ModelParams
    controller: Constant | Backstepping | LinearTotalMales | LinearWildMales
    z0: object = "persistence"
    integrator: IntegratorConfig = IntegratorConfig(t_final=400.0)
    seed: int = 0
    design: ModelParams | None = None

    def initial_state(self):
        return _resolve_z0(self.params, self.z0)


@dataclass
class ScenarioReport:
    intervention_time: float | None
    cost: float
    final_state: np.ndarray
    lyapunov_trace: np.ndarray | None = None
    invariant_flags: dict | None = None


def _lyapunov_for(p, controller):
    """Certificate matching the loop, or None where no decay statement applies."""
    try:
        if isinstance(controller, Backstepping):
            return cert.BacksteppingLyapunov(p, controller)
        if isinstance(controller, LinearTotalMales):
            lo, hi = cert.kappa_interval(p, controller.k)
            if not 0 < lo < hi:
                return None
            kappa = 0.5 * (lo + hi)
            eps, rate = cert.choose_epsilon(p, controller.k, kappa)
            return cert.TotalMalesLyapunov(p, controller.k, eps) if rate > 0 else None
    except ValueError:
        return None
    return None


def _invariance_summary(p, controller, states):
    if not isinstance(controller, (LinearTotalMales, LinearWildMales)):
        return None
    try:
        kappa = cert.kappa_bar(p)
    except ValueError:
        return None
    h = np.stack(cert.boundary_functions(p, kappa, states), axis=-1)
    excursion = float(max(0.0, h.max()))
    inside = np.all(h <= 1e-7 * p.K, axis=-1)
    return {"kappa": float(kappa), "fraction_inside": float(inside.mean()), "max_excursion": excursion,
            "starts_inside": bool(inside[0])}


def run_scenario(sc: ScenarioConfig) -> tuple[ScenarioReport, Trajectory]:
    """Simulate one scenario and summarize it.

    The cost integrates the release rate over the whole horizon. The
    Lyapunov trace is recorded for the backstepping and total-male loops
    when their certificate applies to the design parameters.
    """
    z0 = sc.initial_state()
    traj = simulate(sc.params, sc.controller, z0, sc.integrator, design=sc.design)
    p_cert = sc.params if sc.design is None else sc.design
    lyap = _lyapunov_for(p_cert, sc.controller) if sc.design is None else None
    report = ScenarioReport(
        intervention_time=detect_intervention_time(traj, sc.params),
        cost=float(control_cost(traj)),
        final_state=traj.final_state.copy(),
        lyapunov_trace=None if lyap is None else np.asarray(lyap.value(traj.states)),
        invariant_flags=_invariance_summary(sc.params, sc.controller, traj.states),
    )
    return report, traj


# --------------------------------------------------------------------------
# comparison tables


@dataclass(frozen=True)
class ComparisonSpec:
    """Intervention time and cost over a grid of gains of one feedback family.

    ``family`` is ``"lambda"`` (``u = lam M``) or ``"theta"`` (backstepping
    with fixed ``alpha`` and ``beta_s``). Runs start at the persistence
    equilibrium and stop once every member has reached ``E <= K / 100``.
    """

    family: str
    grid: tuple
    params: ModelParams = COMPARISON_PARAMS
    alpha: float = 80.0
    beta_s: float = 1.0
    step: float = 0.01
    t_max: float = 3000.0

    def __post_init__(self):
        if self.family not in ("lambda", "theta"):
            raise ValueError("family must be 'lambda' or 'theta'")
        if len(self.grid) == 0:
            raise ValueError("grid must not be empty")


@dataclass(frozen=True)
class ComparisonRow:
    gain: float
    T_days: float | None
    cost: float | None


def comparison_table(spec: ComparisonSpec) -> list[ComparisonRow]:
    """One table, sorted by gain. All gains are integrated as one batch."""
    p = spec.params
    gains = np.array(sorted(float(g) for g in spec.grid))
    if spec.family == "lambda":
        controller = LinearWildMales(gains)
    else:
        controller = Backstepping(gains, spec.alpha, spec.beta_s)
    z0 = np.broadcast_to(persistence_equilibrium(p).state, gains.shape + (4,))
    level = p.K / 100.0
    traj = simulate(p, controller, z0, IntegratorConfig(t_final=spec.t_max, step=spec.step),
                    stop=lambda z: z[..., 0] <= level)
    T = detect_intervention_time(traj, p, level)
    cost = control_cost(traj, T)
    return [
        ComparisonRow(float(g), None if math.isnan(t) else float(t), None if math.isnan(c) else float(c))
        for g, t, c in zip(gains, T, cost)
    ]


def comparison_study(p: ModelParams = COMPARISON_PARAMS, lambda_grid=LAMBDA_GRID, theta_grid=THETA_GRID,
                     alpha: float = 80.0, beta_s: float = 1.0, step: float = 0.01):
    """Both comparison tables; returns ``{"lambda": rows, "theta": rows}``."""
    return {
        "lambda": comparison_table(ComparisonSpec("lambda", tuple(lambda_grid), p, step=step)),
        "theta": comparison_table(ComparisonSpec("theta", tuple(theta_grid), p, alpha, beta_s, step=step)),
    }


# --------------------------------------------------------------------------
# robustness


@dataclass(frozen=True)
class RobustnessSpec:
    """Monte Carlo over true parameters drawn independently of the design ones.

    ``truth_intervals`` maps parameter names to ``(lo, hi)``; a degenerate
    interval pins a value. Parameters not listed keep their design values.
    With ``initial="random"`` initial states are uniform in
    ``[0, ic_box_upper * K]^4``; ``initial="persistence"`` starts every run
    at the persistence equilibrium of the design parameters.
    """

    design_params: ModelParams = TABLE1
    truth_intervals: dict = field(default_factory=lambda: dict(PARAMETER_INTERVALS))
    n_runs: int = 200
    ic_box_upper: float = 10.0
    t_final: float = 1500.0
    step: float = 0.02
    record_stride: int = 50
    seed: int = 0
    chunk_size: int = 50
    initial: str = "random"

    def __post_init__(self):
        if self.initial not in ("random", "persistence"):
            raise ValueError("initial must be 'random' or 'persistence'")
        known = set(ModelParams.__dataclass_fields__) - {"strict"}
        unknown = set(self.truth_intervals) - known
        if unknown:
            raise ValueError(f"unknown parameters in truth_intervals: {sorted(unknown)}")
        for name, (lo, hi) in self.truth_intervals.items():
            if not lo <= hi:
                raise ValueError(f"interval for {name} has lo > hi")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")


@dataclass
class RobustnessResult:
    """Per-run outcome; index ``i`` of every array is run ``i``.

    ``log_population`` holds ``log(E + M + F)`` at ``times`` (shape
    ``(n_samples, n_runs)``, ``-inf`` once extinct); rows of failed runs are NaN.
    """

    params: dict
    z0: np.ndarray
    times: np.ndarray
    log_population: np.ndarray
    final_state: np.ndarray
    converged: np.ndarray
    failed: np.ndarray
    messages: dict

    @property
    def converged_fraction(self) -> float:
        return float(self.converged.mean())


def sample_truth(spec: RobustnessSpec, run_index: int):
    """Parameter draw and initial state of one run, from its own Philox stream."""
    rng = run_rng(spec.seed, run_index)
    values = {}
    for name in sorted(spec.truth_intervals):
        lo, hi = spec.truth_intervals[name]
        values[name] = lo + (hi - lo) * rng.random()
    z0 = spec.ic_box_upper * spec.design_params.K * rng.random(4)
    if spec.initial == "persistence":
        z0 = persistence_equilibrium(spec.design_params).state
    return values, z0


def _batched_params(design: ModelParams, draws: list[dict]) -> ModelParams:
    fields = design.as_dict()
    for name in draws[0]:
        fields[name] = np.array([d[name] for d in draws])
    return ModelParams(**fields, strict=False)


def _converged(p, z):
    return z[..., 0] + z[..., 1] + z[..., 2] < 1e-3 * p.K


def robustness_study(spec: RobustnessSpec, controller) -> RobustnessResult:
    """Integrate every run with ``controller`` built on ``spec.design_params``.

    Runs are integrated in batches of ``chunk_size`` (batches go to up to
    ``SITSTAB_THREADS`` workers). A batch that fails numerically is redone
    run by run so that only the offending runs are marked as failed.
    """
    n = spec.n_runs
    draws, starts = zip(*(sample_truth(spec, i) for i in range(n)))
    cfg = IntegratorConfig(t_final=spec.t_final, step=spec.step, record_stride=spec.record_stride)
    design = spec.design_params
    chunks = [list(range(i, min(i + spec.chunk_size, n))) for i in range(0, n, spec.chunk_size)]

    def run_chunk(idx):
        p = _batched_params(design, [draws[i] for i in idx])
        try:
            traj = simulate(p, controller, np.array([starts[i] for i in idx]), cfg, design=design)
            return idx, traj.times, traj.states, {}
        except IntegrationError:
            pass
        times, states, messages = None, [], {}
        for j, i in enumerate(idx):
            p1 = _batched_params(design, [draws[i]])
            try:
                traj = simulate(p1, controller, starts[i][None, :], cfg, design=design)
                times = traj.times
                states.append(traj.states[:, 0])
            except IntegrationError as exc:
                messages[i] = str(exc)
                states.append(None)
        if times is None:
            times = np.linspace(0.0, spec.t_final, math.ceil(spec.t_final / spec.step / spec.record_stride) + 1)
        states = [np.full((len(times), 4), np.nan) if s is None else s for s in states]
        return idx, times, np.stack(states, axis=1), messages

    results = _map_chunks(run_chunk, chunks)
    times = results[0][1]
    states = np.concatenate([r[2] for r in results], axis=1)
    messages = {k: v for r in results for k, v in r[3].items()}
    failed = np.zeros(n, dtype=bool)
    failed[list(messages)] = True
    params = {name: np.array([d[name] for d in draws]) for name in sorted(spec.truth_intervals)}
    with np.errstate(divide="ignore"):
        log_pop = np.log(states[..., 0] + states[..., 1] + states[..., 2])
    final = states[-1]
    converged = np.where(failed, False, _converged(design, final))
    return RobustnessResult(params, np.array(starts), times, log_pop, final, converged, failed, messages)


# --------------------------------------------------------------------------
# global stability evidence


@dataclass(frozen=True)
class EvidenceSpec:
    params: ModelParams = TABLE1
    n_ics: int = 50
    ic_box_upper: float = 10.0
    t_final: float = 2000.0
    step: float = 0.02
    record_stride: int = 50
    seed: int = 0


@dataclass
class EvidenceResult:
    """Norm traces per sample (rows) and initial state (columns).

    ``wild_norms`` is ``E + M + F``, the quantity whose decay is judged;
    ``norms`` adds ``Ms``, which under ``u = k (M + Ms)`` only relaxes at the
    slow rate ``delta_s - k``.
    """

    z0: np.ndarray
    times: np.ndarray
    wild_norms: np.ndarray
    norms: np.ndarray
    converged: np.ndarray

    @property
    def counterexample_candidates(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(~self.converged)]


def global_stability_evidence(spec: EvidenceSpec, controller) -> EvidenceResult:
    """Runs from random initial states in ``[0, ic_box_upper * K]^4``.

    A run counts as converged when ``E + M + F`` ends below ``1e-3 K``. This
    is numerical evidence only; no stability claim outside the certified sets
    is drawn from it.
    """
    p = spec.params
    z0 = np.array([spec.ic_box_upper * p.K * run_rng(spec.seed, i).random(4) for i in range(spec.n_ics)])
    cfg = IntegratorConfig(t_final=spec.t_final, step=spec.step, record_stride=spec.record_stride)
    traj = simulate(p, controller, z0, cfg)
    wild = traj.states[..., :3].sum(axis=-1)
    return EvidenceResult(z0, traj.times, wild, traj.states.sum(axis=-1), wild[-1] < 1e-3 * p.K)


# --------------------------------------------------------------------------
# presets

PRESETS = {
    "backstepping-sec311": ScenarioConfig(TABLE1, Backstepping(220.0, 13.0, 1.0), integrator=IntegratorConfig(360.0)),
    "kfeedback-sec324": ScenarioConfig(TABLE1, LinearTotalMales(0.119), integrator=IntegratorConfig(700.0)),
    "lambda-sec331": ScenarioConfig(TABLE1, LinearWildMales(22.0), integrator=IntegratorConfig(400.0)),
    "table2": ComparisonSpec("lambda", LAMBDA_GRID),
    "table3": ComparisonSpec("theta", THETA_GRID),
    "robustness-backstepping": (RobustnessSpec(), Backstepping(220.0, 13.0, 1.0)),
    "robustness-lambda": (RobustnessSpec(), LinearWildMales(22.0)),
    "robustness-kfeedback-manual": (
        RobustnessSpec(
            design_params=COMPARISON_PARAMS,
            truth_intervals={
                "nu_E": (0.08, 0.08),
                "delta_E": (0.046, 0.046),
                "delta_F": (0.033, 0.033),
                "delta_M": (0.12, 0.12),
                "delta_s": (0.139, 0.139),
                "beta_E": (11.0, 11.0),
            },
            n_runs=1,
            initial="persistence",
        ),
        LinearTotalMales(0.119),
    ),
    "evidence-kfeedback": (EvidenceSpec(), LinearTotalMales(0.119)),
    "evidence-lambda": (EvidenceSpec(), LinearWildMales(22.0)),
}
