"""Feedback designed on nominal parameters, applied to randomly perturbed populations.

Pass a run count as first argument (default 40; the full study uses 200).
"""
import sys
from dataclasses import replace

import numpy as np

from sitstab.experiments import PRESETS, robustness_study

n_runs = int(sys.argv[1]) if len(sys.argv) > 1 else 40

for name in ("robustness-backstepping", "robustness-lambda"):
    spec, controller = PRESETS[name]
    res = robustness_study(replace(spec, n_runs=n_runs), controller)
    print(f"{name}: converged {int(res.converged.sum())}/{n_runs}, integration failures {int(res.failed.sum())}")
    # which perturbations defeat the law
    for key in ("nu_E", "gamma_s", "beta_E"):
        v = np.asarray(res.params[key])
        if res.converged.any() and (~res.converged).any():
            print(f"  {key}: mean {v[res.converged].mean():.4f} converged, {v[~res.converged].mean():.4f} not")

## The pinned perturbation of the k-law
spec, controller = PRESETS["robustness-kfeedback-manual"]
res = robustness_study(spec, controller)
print("k = 0.119 under the pinned perturbation converges:", bool(res.converged[0]))
print("final state:", res.final_state[0].round(1))
