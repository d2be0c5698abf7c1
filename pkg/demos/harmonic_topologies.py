"""The harmonic detector on hand-made peak lists.

No spectra involved: frequencies go straight into the two detector modes,
covering missing harmonics, two combs sharing a line and IMP triplets whose
separation is (or is not) a multiple of their step.
"""

from emanatrix import DetectorConfig, detect

MHZ = 1e6

CASES = [
    ("regular comb", [16, 32, 48, 64, 80], 5),
    ("missing 4th harmonic", [16, 32, 48, 80, 96], 5),
    ("two combs sharing 20", [10, 20, 30, 40, 33, 46], 9),
    ("IMP triplets, gap 8d", [100.00, 100.07, 100.14, 100.70, 100.77, 100.84], None),
    ("IMP triplets, gap not nd", [100.00, 100.07, 100.14, 100.705, 100.775, 100.845], None),
    ("two lines only", [100, 107], 5),
]


def show(name, freqs_mhz, d_min_mhz):
    # d_min_mhz None selects the IMP mode with a 50 kHz minimum separation
    f = [x * MHZ for x in freqs_mhz]
    imp = d_min_mhz is None
    d_min = 0.05 * MHZ if imp else d_min_mhz * MHZ
    cfg = DetectorConfig(d_min, 100 * MHZ, flag_subband=imp, tol_abs_hz=100.0)
    _, groups = detect(sorted(f), cfg)
    print(name)
    if not groups:
        print("    no groups")
    for g in groups:
        members = ", ".join(f"{x / MHZ:g}" for x in g.member_freqs_hz)
        print(f"    {g.kind:8s} step {g.step_hz / MHZ:g} MHz: {members}")


if __name__ == "__main__":
    for case in CASES:
        show(*case)
