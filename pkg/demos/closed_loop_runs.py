"""The three feedback laws from the persistence equilibrium, with intervention time and cost."""
from sitstab.experiments import PRESETS, run_scenario
from sitstab.io import write_trajectory_csv

for name in ("backstepping-sec311", "kfeedback-sec324", "lambda-sec331"):
    sc = PRESETS[name]
    report, traj = run_scenario(sc)
    T = report.intervention_time
    print(f"{name}: {type(sc.controller).__name__}, horizon {sc.integrator.t_final:g} d")
    print(f"  E reaches K/100 at {'never' if T is None else f'{T:.1f} d'}")
    print(f"  total release {report.cost:.4g}, final state {report.final_state.round(3)}")
    if report.lyapunov_trace is not None:
        v = report.lyapunov_trace
        print(f"  Lyapunov value {v[0]:.4g} -> {v[-1]:.4g}")
    write_trajectory_csv(f"{name}.csv", traj)

## The k-law needs Ms to build up: Ms only relaxes at delta_s - k = 0.001 per day,
## so the total males keep falling long after the wild population is gone.
