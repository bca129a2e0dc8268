"""Operation counts: closed form, instrumented run and the published table.

Each counted demapper routes its arithmetic through a small shim that tallies
candidate points, real multiplications, sums, comparisons and inversions.
"""

from ssd_lab import TABLE_I, analytic_cost, reduction_report, sphere_cost
from ssd_lab.sim import measured_cost

for M in (16, 64, 256):
    print(f"M={M:3d}  sphere {analytic_cost(M, 'sphere').as_tuple()}  "
          f"measured {measured_cost(M, 'sphere').as_tuple()}  "
          f"max-log {analytic_cost(M, 'maxlog_full').as_tuple()}")

print("\n256-QAM table (cp, rm, rs, rc, ri):")
for name, row in TABLE_I.items():
    print(f"  {name:12s} {row.as_tuple()}")

print("\nsavings of the sphere demapper over full max-log:")
for field, r in reduction_report(TABLE_I["sphere"], TABLE_I["maxlog_full"]).items():
    print(f"  {field}: {r.percent:.2f}% (~{r.nearest}%)")

pd = reduction_report(TABLE_I["sphere"], TABLE_I["pd_dem"])
print(f"\nversus PD-DEM: CP {pd['cp'].percent:.1f}%, RM {pd['rm'].percent:.1f}%")

# A wider window costs more but approaches the full search.
for d in (4, 8, 32):
    print(f"64-QAM radius {d}: {sphere_cost(64, d).as_tuple()}")
