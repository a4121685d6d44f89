"""
Speed functions and their inequality battery
============================================

Builds a few speed functions, prints their declared properties and runs
the randomized margin battery on each.  Quotient(2,1) fails the log-convexity
test on purpose; the battery marks that row as an expected violation.
"""
import numpy as np

from shrinklab import symfun as sf
from shrinklab.battery import battery_passed, run_battery

n = 3
for spec in ["ek_root:2", "quotient:2,1", "power_mean:-1", "power_mean:-2"]:
    f = sf.parse_spec(spec)
    rows = run_battery(f, n, samples=2000, seed=0)
    print(f"{spec:16s} flags={f.flags(n)}  battery={'ok' if battery_passed(rows) else 'FAILED'}")
    for r in rows:
        if r.status not in ("pass", "holds (undeclared)"):
            print(f"    {r.check:24s} {r.status:22s} margin={r.min_margin:.3e}")

# the explicit log-convexity witness for Quotient(2,1)
m = sf.check_condition2(sf.quotient(2, 1), np.array([1.0, 1.0, 4.0]), np.array([0.0, 0.0, 1.0]))
print("Quotient(2,1) witness margin:", m, "(= -5/648 =", -5 / 648, ")")
