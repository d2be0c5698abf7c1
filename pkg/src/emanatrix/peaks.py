"""
Wavelet peak detection on a power spectrum.

The dB spectrum is convolved with Ricker wavelets over a range of widths.
Local maxima are chained across scales into ridge lines (largest width
first); a ridge that is long enough and stands far enough above the noise
of its own scale marks a peak. Each peak is then moved onto the local
maximum of the power spectrum.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.ndimage import maximum_filter1d
from scipy.stats import norm

from .core import Peak, PowerSpectrum


@dataclass(frozen=True)
class PeakConfig:
    widths_bins: tuple = tuple(range(1, 31))
    min_snr_db: float = 3.0
    noise_percentile: float = 10.0
    max_peaks: int = 512
    # ridge strength: peak CWT value over the robust noise sigma of its scale, in dB
    min_ridge_snr_db: float = 15.0
    # fraction of the widths a ridge must span
    min_ridge_fraction: float = 0.1
    mask_dc: bool = True
    dc_mask_bins: int = 2

    def __post_init__(self):
        w = tuple(int(x) for x in self.widths_bins)
        if not w or min(w) < 1:
            raise ValueError("widths_bins must be a non-empty range of positive integers")
        object.__setattr__(self, "widths_bins", tuple(sorted(set(w))))
        if self.min_snr_db < 0:
            raise ValueError("min_snr_db must be >= 0")
        if not 0 < self.noise_percentile < 50:
            raise ValueError("noise_percentile must lie in (0, 50)")
        if self.max_peaks < 1:
            raise ValueError("max_peaks must be >= 1")

    def with_(self, **kw) -> "PeakConfig":
        return replace(self, **kw)


def ricker(points: int, a: float) -> np.ndarray:
    """Mexican-hat wavelet of width `a` sampled on `points` centred samples."""
    A = 2 / (math.sqrt(3 * a) * math.pi ** 0.25)
    x = np.arange(points) - (points - 1) / 2.0
    xsq = (x / a) ** 2
    return A * (1 - xsq) * np.exp(-xsq / 2)


def _kernel_len(w: int, n: int) -> int:
    return min(10 * w, n)


@lru_cache(maxsize=8)
def _kernel_bank(n: int, widths: tuple):
    """Spectra of the zero-padded Ricker kernels plus the 'same' offsets."""
    kmax = max(_kernel_len(w, n) for w in widths)
    nfft = sfft.next_fast_len(n + kmax - 1, real=True)
    kernels = np.zeros((len(widths), nfft))
    offsets = []
    for i, w in enumerate(widths):
        m = _kernel_len(w, n)
        kernels[i, :m] = ricker(m, w)
        offsets.append((m - 1) // 2)
    K = sfft.rfft(kernels, axis=1).astype(np.complex64)
    K.flags.writeable = False
    return nfft, K, tuple(offsets)


def cwt_ricker(signal: Sequence[float], widths: Sequence[int], dtype=np.float64) -> np.ndarray:
    """Rows of `signal` convolved ('same' length) with Ricker wavelets of each width.

    The convolution runs in single precision; `dtype` sets the output type.
    """
    x = np.asarray(signal, dtype=np.float64).ravel()
    widths = tuple(int(w) for w in widths)
    if x.size == 0:
        raise ValueError("signal must be non-empty")
    if not widths:
        raise ValueError("widths must be non-empty")
    n = x.size
    nfft, K, offsets = _kernel_bank(n, widths)
    full = sfft.irfft(K * sfft.rfft(x.astype(np.float32), nfft), nfft, axis=1)
    out = np.empty((len(widths), n), dtype=dtype)
    for i, off in enumerate(offsets):
        out[i] = full[i, off:off + n]
    return out


def _row_sigma(rows: np.ndarray, pct: float) -> np.ndarray:
    """Robust per-row noise sigma from the spread between the pct and 100-pct percentiles."""
    sub = rows[:, ::7] if rows.shape[1] > 7000 else rows
    lo, hi = np.percentile(sub, [pct, 100 - pct], axis=1)
    return np.maximum((hi - lo) / (2 * norm.ppf(1 - pct / 100.0)), 1e-12)


def _row_maxima(row: np.ndarray, thresh: float, keep: Optional[np.ndarray] = None) -> np.ndarray:
    c = row[1:-1]
    m = (c > row[:-2]) & (c >= row[2:]) & (c > thresh)
    if keep is not None:
        m &= keep[1:-1]
    return np.nonzero(m)[0] + 1


def _ridges(cwt: np.ndarray, widths: Sequence[int], sigma: np.ndarray, track_z: float,
            keep: Optional[np.ndarray] = None):
    """Chain per-row maxima from the largest width downwards.

    Returns a list of ridges, each a list of (row, column).
    """
    nrows = cwt.shape[0]
    active: list[dict] = []
    done: list[list] = []
    for r in range(nrows - 1, -1, -1):
        w = widths[r]
        maxd = max(1, int(math.ceil(w / 4)))
        gap_thresh = int(math.ceil(widths[0])) + 1
        cols = _row_maxima(cwt[r], track_z * sigma[r], keep)
        taken = np.zeros(cols.size, dtype=bool)
        still = []
        # longest ridges claim maxima first
        for rid in sorted(active, key=lambda d: -len(d["pts"])):
            last = rid["pts"][-1][1]
            if cols.size:
                j = int(np.searchsorted(cols, last))
                best = None
                for k in (j - 1, j):
                    if 0 <= k < cols.size and not taken[k] and abs(cols[k] - last) <= maxd:
                        if best is None or abs(cols[k] - last) < abs(cols[best] - last):
                            best = k
                if best is not None:
                    taken[best] = True
                    rid["pts"].append((r, int(cols[best])))
                    rid["gap"] = 0
                    still.append(rid)
                    continue
            rid["gap"] += 1
            if rid["gap"] > gap_thresh:
                done.append(rid["pts"])
            else:
                still.append(rid)
        for k in np.nonzero(~taken)[0]:
            still.append({"pts": [(r, int(cols[k]))], "gap": 0})
        active = still
    done.extend(d["pts"] for d in active)
    return done


def _climb(power: np.ndarray, i: int) -> int:
    n = power.size
    while True:
        best = i
        if i > 0 and power[i - 1] > power[best]:
            best = i - 1
        if i < n - 1 and power[i + 1] > power[best]:
            best = i + 1
        if best == i:
            return i
        i = best


def detect_peaks(spec: PowerSpectrum, cfg: PeakConfig = PeakConfig()) -> list[Peak]:
    """Energy peaks of `spec`, sorted by frequency."""
    power = np.asarray(spec.power_dbm, dtype=np.float64)
    n = power.size
    if n < 3:
        return []
    widths = [w for w in cfg.widths_bins]
    floor = float(np.percentile(power, cfg.noise_percentile))
    cwt = cwt_ricker(power - np.median(power), widths, dtype=np.float32)
    sigma = _row_sigma(cwt, cfg.noise_percentile).astype(np.float32)
    z = cwt / sigma[:, None]

    min_z = 10 ** (cfg.min_ridge_snr_db / 20.0)
    min_len = max(1, int(math.ceil(cfg.min_ridge_fraction * len(widths))))
    # weak maxima cannot belong to a ridge that reaches min_z; track a bit below it
    track_z = 0.5 * min_z

    # a ridge can only pass if it touches a column reaching min_z; it cannot
    # drift further from that column than the summed per-row tolerances
    strong = (z >= min_z).any(axis=0)
    if not strong.any():
        return []
    reach = sum(max(1, int(math.ceil(w / 4))) for w in widths)
    keep = maximum_filter1d(strong.astype(np.uint8), 2 * reach + 1) > 0

    center = n // 2
    found: dict[int, Peak] = {}
    for pts in _ridges(cwt, widths, sigma, track_z, keep):
        if len(pts) < min_len:
            continue
        if max(z[r, c] for r, c in pts) < min_z:
            continue
        r_end, c_end = pts[-1]
        b = _climb(power, c_end)
        if cfg.mask_dc and abs(b - center) <= cfg.dc_mask_bins:
            continue
        snr = power[b] - floor
        if snr < cfg.min_snr_db:
            continue
        if b not in found:
            found[b] = Peak(float(spec.freqs_hz[b]), float(power[b]), int(b), float(snr))
    peaks = list(found.values())
    if len(peaks) > cfg.max_peaks:
        peaks = sorted(peaks, key=lambda p: -p.power_dbm)[:cfg.max_peaks]
    return sorted(peaks, key=lambda p: p.freq_hz)
