"""Intervention time and release cost over the gain grids of the wild-male and backstepping laws."""
from sitstab.experiments import comparison_study

tables = comparison_study()
for family, rows in tables.items():
    print(f"{family:>6} | T (days) |   cost")
    for r in rows:
        T = "never" if r.T_days is None else f"{r.T_days:8.1f}"
        print(f"{r.gain:6g} | {T} | {r.cost:.3g}")
    print()

## Similar cost, different times: lambda = 10 against theta = 170
lam = {r.gain: r for r in tables["lambda"]}
th = {r.gain: r for r in tables["theta"]}
for a, b in ((10.0, 170.0), (13.0, 150.0), (17.0, 210.0)):
    print(f"lambda={a:g}: T={lam[a].T_days:.1f}, cost={lam[a].cost:.3g}   "
          f"theta={b:g}: T={th[b].T_days:.1f}, cost={th[b].cost:.3g}")
