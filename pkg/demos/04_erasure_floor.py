"""Uncoded error floor when 15% of cells are erased.

Without rotation an erased cell wipes out both bits carried on that axis.
With rotation plus the Q delay, each component still carries the whole
symbol, so one erasure rarely causes an error.
"""

from ssd_lab.sim import make_config, run_ber

for angle, demapper in (("none", "maxlog"), ("dvbt2", "maxlog"), ("proposed", "sphere")):
    cfg = make_config(M=16, angle=angle, demapper=demapper, esn0="40", erasure=0.15,
                      frames=50, frame_symbols=1000, stop_at_errors=10**9)
    p = run_ber(cfg).points[0]
    print(f"{angle:9s} {demapper:7s} BER {p.ber:.5f}  95% CI [{p.ci[0]:.5f}, {p.ci[1]:.5f}]")
