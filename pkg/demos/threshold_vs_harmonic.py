"""A small bench: harmonic detector against a swept power threshold.

Uses two profiles of the bundled corpus with fewer SNR points so it runs in
well under a minute. The full corpus is ``emanatrix bench`` (about 5 min).
"""

from dataclasses import replace

import numpy as np

from emanatrix.bench import best_threshold, load_scenarios, score, simulate, threshold_sweep

KEEP = ("zigbee", "background_zigbee", "psoc", "background_psoc")

if __name__ == "__main__":
    sc = [replace(s, snr_sweep_db=(4.0, 10.0, 16.0, 22.0), n_trials_per_point=3)
          for s in load_scenarios() if s.name in KEEP]
    records = simulate(sc)
    harmonic = score(records)
    thresholds = np.arange(-80.0, -30.0, 1.0)
    sweep = threshold_sweep(records, thresholds)
    best = best_threshold(records, thresholds)

    print("threshold sweep (dBm: accuracy FP FN)")
    for p in sweep.points[::5]:
        print(f"  {p.axis_value:6.1f}: {p.accuracy:.3f} {p.fp_rate:.2f} {p.fn_rate:.2f}")
    print("per SNR point (dB: harmonic, best threshold)")
    for h, b in zip(harmonic.points, best.points):
        print(f"  {h.axis_value:5.1f}: {h.accuracy:.3f} {b.accuracy:.3f}")
