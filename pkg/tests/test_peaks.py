import numpy as np
import pytest

from emanatrix.core import PowerSpectrum
from emanatrix.peaks import PeakConfig, cwt_ricker, detect_peaks, ricker

N = 16384


def _spectrum(lines=(), seed=0, n=N, floor=-70.0):
    """Averaged-periodogram-like noise floor (72 averages) with Kaiser-shaped lines."""
    rng = np.random.default_rng(seed)
    lin = rng.gamma(72, 1 / 72, n) * 10 ** (floor / 10)
    k = np.arange(n)
    for b, snr in lines:
        # main lobe about three bins wide
        lin = lin + 10 ** ((floor + snr) / 10) * np.exp(-0.5 * ((k - b) / 0.8) ** 2)
    return PowerSpectrum(np.arange(n) * 100.0, 10 * np.log10(lin), 100.0)


def test_ricker_shape():
    w = ricker(101, 4.0)
    assert np.argmax(w) == 50
    np.testing.assert_allclose(w, w[::-1])
    assert abs(w.sum()) < 0.05 * w.max() * 101


def test_cwt_matches_direct_convolution():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(300)
    out = cwt_ricker(x, [1, 3, 7])
    for row, w in zip(out, [1, 3, 7]):
        ref = np.convolve(x, ricker(min(10 * w, 300), w), mode="same")
        np.testing.assert_allclose(row, ref, atol=1e-4)


def test_cwt_rejects_empty():
    with pytest.raises(ValueError):
        cwt_ricker([], [1])
    with pytest.raises(ValueError):
        cwt_ricker([1.0, 2.0], [])


@pytest.mark.parametrize("kw", [
    dict(widths_bins=range(0)), dict(widths_bins=range(0, 3)), dict(min_snr_db=-1.0),
    dict(noise_percentile=60.0), dict(max_peaks=0),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        PeakConfig(**kw)


def test_finds_lines_at_their_bins():
    lines = [(1000, 20.0), (5000, 12.0), (12000, 30.0)]
    peaks = detect_peaks(_spectrum(lines))
    assert [p.bin_index for p in peaks] == [1000, 5000, 12000]
    assert [p.freq_hz for p in peaks] == [1000 * 100.0, 5000 * 100.0, 12000 * 100.0]
    for p, (_, snr) in zip(peaks, lines):
        assert p.snr_db == pytest.approx(snr + 1.0, abs=1.5)


def test_noise_only_yields_nothing():
    clean = sum(len(detect_peaks(_spectrum(seed=s))) == 0 for s in range(40))
    assert clean >= 38


def test_dc_mask():
    s = _spectrum([(N // 2, 25.0), (3000, 25.0)])
    assert [p.bin_index for p in detect_peaks(s)] == [3000]
    assert [p.bin_index for p in detect_peaks(s, PeakConfig(mask_dc=False))] == [3000, N // 2]


def test_raising_min_snr_never_adds_peaks():
    s = _spectrum([(1000, 6.0), (4000, 10.0), (9000, 25.0)], seed=3)
    prev = None
    for thr in (0.0, 3.0, 8.0, 15.0, 40.0):
        cur = {p.bin_index for p in detect_peaks(s, PeakConfig(min_snr_db=thr))}
        if prev is not None:
            assert cur <= prev
        prev = cur
    assert prev == set()


def test_max_peaks_keeps_strongest():
    lines = [(1000 + 700 * i, 10.0 + 2 * i) for i in range(10)]
    peaks = detect_peaks(_spectrum(lines), PeakConfig(max_peaks=3))
    assert [p.bin_index for p in peaks] == [b for b, _ in lines[-3:]]


def test_tiny_spectrum():
    s = PowerSpectrum(np.array([0.0, 1.0]), np.array([-50.0, -40.0]), 1.0)
    assert detect_peaks(s) == []


def test_close_lines_are_resolved():
    peaks = detect_peaks(_spectrum([(6000, 20.0), (6008, 20.0)]))
    assert [p.bin_index for p in peaks] == [6000, 6008]
