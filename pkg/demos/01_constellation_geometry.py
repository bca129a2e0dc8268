"""Why arctan(1/sqrt(M)) is a special rotation.

At this angle the projections of the rotated QAM points onto each axis land
on a uniform grid of M values, and the grid position of a point is just its
two level indices read as a two-digit base-sqrt(M) number.
"""

import math

import numpy as np

from ssd_lab import angle_for, build_spec, dvbt2_angle

M = 16
spec = build_spec(M, angle_for(M))
print(f"{M}-QAM rotated by {math.degrees(spec.theta):.3f} degrees (DVB-T2 uses {math.degrees(dvbt2_angle(M)):.1f})")

# Sorted I projections are equally spaced by 2 beta sin(theta).
proj = np.sort(spec.z.real)
print("I-axis spacing:", np.unique(np.round(np.diff(proj), 12)), "expected", round(spec.d_1d_min, 12))

# The grid index T_I is sqrt(M) p_I + (sqrt(M) - 1 - p_Q).
print("\n p_I p_Q  bits  T_I T_Q")
for k in range(M):
    bits = "".join(map(str, spec.bit_table[k]))
    print(f"  {spec.p_i[k]}   {spec.p_q[k]}   {bits}  {spec.t_i[k]:3d} {spec.t_q[k]:3d}")

# Any sqrt(M) consecutive T_I values cover every p_Q level once. This is
# what lets a short window always hold both values of every bit.
order = spec.p_q[np.argsort(spec.t_i)]
print("\np_Q along the T_I axis:", order.tolist())

# Off the special angle the projections no longer sit on a uniform grid.
other = build_spec(M, dvbt2_angle(M))
print("DVB-T2 angle is a lattice angle:", other.is_lattice)
