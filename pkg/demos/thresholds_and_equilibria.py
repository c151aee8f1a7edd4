"""Offspring numbers, gain thresholds and the equilibria of the uncontrolled population."""
import numpy as np

from sitstab.certificates import kappa_bar
from sitstab.controllers import k_bounds, lambda_min, theta_min
from sitstab.model import (
    TABLE1,
    constant_release_threshold,
    eigen_data,
    offspring_number_R0,
    offspring_number_R1,
    offspring_number_R2,
    offspring_number_R_theta,
    persistence_equilibrium,
)

p = TABLE1
print("R0 =", offspring_number_R0(p))

## Thresholds: each gain family needs its offspring number below one
lo, hi = k_bounds(p)
print(f"theta > {theta_min(p):.4f}, k in ({lo:.5f}, {hi}), lambda > {lambda_min(p):.4f}")
print(f"R(theta=220) = {offspring_number_R_theta(p, 220.0):.4f}")
print(f"R1(k=0.119)  = {offspring_number_R1(p, 0.119):.4f}")
print(f"R2(lam=22)   = {offspring_number_R2(p, 22.0):.4f}")

## Equilibria
eq = persistence_equilibrium(p)
print("persistence equilibrium (E, M, F, Ms):", np.round(eq.state, 3))
ed = eigen_data(p)
print(f"extinction is a saddle: eigenvalues {ed.lam_minus:.4f}, {ed.lam_plus:.4f}, {ed.minus_delta_M}")

## A constant release above U* drives the wild population out
print(f"U* = {constant_release_threshold(p):.2f} per ha per day")
print(f"kappa_bar = {kappa_bar(p):.6f}")
