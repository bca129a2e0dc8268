"""Coded comparison of the two rotation angles with the bundled LDPC code.

Both angles use the full max-log demapper and the same seeds, so every frame
sees the same bits and channel under both angles. Takes under a minute.
"""

import numpy as np

from ssd_lab.sim import make_config, paired_crossing_bootstrap, run_ber, snr_at_ber

reports = {}
for angle in ("proposed", "dvbt2"):
    cfg = make_config(M=16, angle=angle, demapper="maxlog", ldpc="default", erasure=0.15,
                      esn0="13:16:1", frames=2000, stop_at_errors=2000, batch_frames=500)
    reports[angle] = run_ber(cfg)
    print(angle)
    print(reports[angle].to_csv())

for angle, r in reports.items():
    print(f"{angle}: BER 1e-4 at {snr_at_ber(r.esn0, r.ber, 1e-4):.2f} dB")

delta, reps = paired_crossing_bootstrap(reports["proposed"], reports["dvbt2"], 1e-4, n_boot=500)
lo, hi = np.nanquantile(reps, [0.05, 0.95])
print(f"difference {delta:+.2f} dB, bootstrap 90% interval [{lo:+.2f}, {hi:+.2f}] dB")
