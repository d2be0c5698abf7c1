"""Synthesize every builtin device, run the full chain, print the verdicts.

Each capture holds the device's harmonic comb (and IMP sidebands where the
pipeline can resolve them), an LTE-like block between the 2nd and 3rd
harmonics and a DC offset. Run with ``python demos/fingerprint_devices.py``.
"""

import numpy as np

from emanatrix import InterfererSpec, SynthParams, analyze, builtin_profiles, default_capture, synth_scene
from emanatrix.synth import default_lte_block, default_n_sidebands, pipeline_floor_dbm

NOISE_DBM = -20.0
SNR_DB = 20.0


def scene(prof, seed):
    rate, center = default_capture(prof)
    lo, hi = default_lte_block(prof)
    lte_dbm = NOISE_DBM + 10 * np.log10((hi - lo) / rate) + 20.0
    intf = [InterfererSpec("lte_block", lte_dbm, lo, hi),
            InterfererSpec("dc_offset", pipeline_floor_dbm(NOISE_DBM) + 25)]
    p = SynthParams(prof, n_sidebands=default_n_sidebands(prof, rate), peak_snr_db=SNR_DB, seed=seed)
    return synth_scene(p, intf, rate, center, seed=seed + 1)


if __name__ == "__main__":
    for i, prof in enumerate(builtin_profiles()):
        report, spec, peaks = analyze(scene(prof, 100 + i))
        steps = sorted({round(g.step_hz / 1e6, 4) for g in report.groups if g.kind == "harmonic"})
        print(f"{prof.name:8s} verdict={report.verdict:18s} peaks={len(peaks):3d} "
              f"harmonic steps (MHz)={steps} candidates={sorted(report.candidate_names())}")
