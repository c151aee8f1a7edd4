"""Sampled checks of the Lyapunov decay statements and of the invariant set."""

from sitstab.certificates import CertifySpec, certify, choose_epsilon, kappa_interval
from sitstab.model import TABLE1

## Decay rate certified for u = k (M + Ms) on M(kappa)
k = 0.119
lo, hi = kappa_interval(TABLE1, k)
kappa = 0.5 * (lo + hi)
eps, c = choose_epsilon(TABLE1, k, kappa)
print(f"kappa in [{lo:.5f}, {hi:.5f}], at {kappa:.5f}: eps = {eps:.4f}, rate c = {c:.3e} per day")

## Full suite (about ten seconds)
for check in certify(TABLE1, CertifySpec()):
    print("PASS" if check.passed else "FAIL", check.name, "|", check.detail)
