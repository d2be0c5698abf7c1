"""
SNR-improvement pipeline: Kaiser windowing, Welch PSD and averaging of
overlapping sequences.

Power is reported with "spectrum" scaling on a 1 ohm load: a complex
exponential of amplitude ``A`` centred on a bin reads ``A**2`` W in that
bin, expressed in dBm plus ``calibration_offset_db``. Only relative levels
matter for detection.

The per-segment estimate is the windowed periodogram ``|FFT(w*x)|**2``.
By Wiener-Khinchin this equals the FFT of the (biased) autocorrelation of
the windowed segment, so no explicit autocorrelation is formed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.special import i0e

from .core import IQRecording, PowerSpectrum

_MIN_MW = 1e-30


def kaiser_window(n: int, beta: float) -> np.ndarray:
    """Symmetric Kaiser window of length `n`, peak value 1."""
    n = int(n)
    if n < 1:
        raise ValueError("window length must be >= 1")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    r = (2.0 * k - (n - 1)) / (n - 1)
    arg = beta * np.sqrt(np.clip(1.0 - r * r, 0.0, None))
    # exponentially scaled I0 keeps large beta finite
    return i0e(arg) / i0e(beta) * np.exp(arg - beta)


def window_spectrum_db(window: np.ndarray, oversample: int = 32) -> np.ndarray:
    """Magnitude response of `window` in dB relative to its peak (one-sided, DC first)."""
    window = np.asarray(window, dtype=float)
    nfft = 1 << int(np.ceil(np.log2(window.size * oversample)))
    mag = np.abs(np.fft.rfft(window, nfft))
    return 20 * np.log10(np.maximum(mag / mag.max(), 1e-300))


def relative_sidelobe_db(window: np.ndarray, oversample: int = 32) -> float:
    """Highest sidelobe relative to the main lobe peak, in dB (negative)."""
    resp = window_spectrum_db(window, oversample)
    # main lobe ends at the first local minimum
    d = np.diff(resp)
    rising = np.nonzero(d > 0)[0]
    if rising.size == 0:
        return -np.inf
    return float(resp[rising[0]:].max())


@dataclass(frozen=True)
class PipelineConfig:
    kaiser_beta: float = 5.66
    seq_len: int = 400_000
    n_segments: int = 8
    segment_overlap: float = 0.5
    n_sequences: int = 9
    sequence_overlap: float = 0.5
    fft_size: Optional[int] = None
    calibration_offset_db: float = 0.0

    def __post_init__(self):
        if not 0 <= self.segment_overlap < 1 or not 0 <= self.sequence_overlap < 1:
            raise ValueError("overlaps must lie in [0, 1)")
        if self.n_segments < 1 or self.n_sequences < 1:
            raise ValueError("n_segments and n_sequences must be >= 1")
        if self.seq_len < 1:
            raise ValueError("seq_len must be >= 1")
        if self.segment_length < 1:
            raise ValueError("seq_len too short for the requested segmentation")
        if self.fft_size is not None and self.fft_size < self.segment_length:
            raise ValueError(
                f"fft_size {self.fft_size} smaller than segment length {self.segment_length}")

    @property
    def segment_length(self) -> int:
        return int(self.seq_len / (1 + (self.n_segments - 1) * (1 - self.segment_overlap)))

    @property
    def segment_hop(self) -> int:
        return max(1, int(round(self.segment_length * (1 - self.segment_overlap))))

    @property
    def sequence_hop(self) -> int:
        return max(1, int(round(self.seq_len * (1 - self.sequence_overlap))))

    @property
    def nfft(self) -> int:
        if self.fft_size is not None:
            return int(self.fft_size)
        return 1 << int(np.ceil(np.log2(self.segment_length)))

    @property
    def required_samples(self) -> int:
        return self.seq_len + (self.n_sequences - 1) * self.sequence_hop

    def with_(self, **kw) -> "PipelineConfig":
        return replace(self, **kw)


_window_cache: dict = {}


def _cached_window(n: int, beta: float) -> np.ndarray:
    key = (n, float(beta))
    w = _window_cache.get(key)
    if w is None:
        if len(_window_cache) > 16:
            _window_cache.clear()
        w = kaiser_window(n, beta).astype(np.float32)
        _window_cache[key] = w
    return w


def _welch_linear(samples: np.ndarray, cfg: PipelineConfig,
                  buf: Optional[np.ndarray] = None) -> np.ndarray:
    """Averaged modified periodogram of one sequence, W per bin, FFT order.

    `buf` is optional (n_segments, nfft) complex64 scratch space; it is
    overwritten.
    """
    L, hop, nfft = cfg.segment_length, cfg.segment_hop, cfg.nfft
    w = _cached_window(L, cfg.kaiser_beta)
    if buf is None:
        buf = np.empty((cfg.n_segments, nfft), dtype=np.complex64)
    for k in range(cfg.n_segments):
        np.multiply(samples[k * hop:k * hop + L], w, out=buf[k, :L])
    buf[:, L:] = 0
    spec = sfft.fft(buf, axis=1, overwrite_x=True)
    # |X|^2 via abs is faster than real**2 + imag**2 here
    p = np.abs(spec)
    p *= p
    p = p.sum(axis=0).astype(np.float64) / cfg.n_segments
    return p / float(np.sum(w, dtype=np.float64)) ** 2


def _to_spectrum(p_lin: np.ndarray, rec: IQRecording, cal_db: float) -> PowerSpectrum:
    nfft = p_lin.size
    res = rec.sample_rate_hz / nfft
    freqs = rec.center_freq_hz + (np.arange(nfft) - nfft // 2) * res
    mw = np.maximum(np.fft.fftshift(p_lin) * 1e3, _MIN_MW)
    return PowerSpectrum(freqs, 10 * np.log10(mw) + cal_db, res)


def _check_length(rec: IQRecording, need: int):
    if len(rec) < need:
        raise ValueError(f"recording has {len(rec)} samples; at least {need} required")


def welch_psd(rec: IQRecording, cfg: PipelineConfig = PipelineConfig(), offset: int = 0) -> PowerSpectrum:
    """Welch estimate of the `seq_len` samples starting at `offset`."""
    _check_length(rec, offset + cfg.seq_len)
    p = _welch_linear(rec.samples[offset:offset + cfg.seq_len], cfg)
    return _to_spectrum(p, rec, cfg.calibration_offset_db)


def average_spectra(spectra: Sequence[PowerSpectrum]) -> PowerSpectrum:
    """Per-bin mean in linear power, re-expressed in dBm."""
    if not spectra:
        raise ValueError("need at least one spectrum")
    ref = spectra[0]
    for s in spectra[1:]:
        if len(s) != len(ref) or not np.array_equal(s.freqs_hz, ref.freqs_hz):
            raise ValueError("spectra have mismatched frequency axes")
    if len(spectra) == 1:
        return ref
    lin = np.mean([s.power_linear for s in spectra], axis=0)
    return PowerSpectrum(ref.freqs_hz, 10 * np.log10(np.maximum(lin, _MIN_MW)), ref.resolution_hz)


def process_pipeline(rec: IQRecording, cfg: PipelineConfig = PipelineConfig()) -> PowerSpectrum:
    """Welch PSD over `n_sequences` overlapping sequences, averaged in linear power."""
    need = cfg.required_samples
    if len(rec) < need:
        raise ValueError(
            f"recording has {len(rec)} samples; pipeline needs at least {need} "
            f"({cfg.n_sequences} sequences of {cfg.seq_len} with hop {cfg.sequence_hop})")
    acc = np.zeros(cfg.nfft)
    buf = np.empty((cfg.n_segments, cfg.nfft), dtype=np.complex64)
    for i in range(cfg.n_sequences):
        start = i * cfg.sequence_hop
        acc += _welch_linear(rec.samples[start:start + cfg.seq_len], cfg, buf)
    return _to_spectrum(acc / cfg.n_sequences, rec, cfg.calibration_offset_db)


def direct_fft_spectrum(rec: IQRecording, n_fft: int, offset: int = 0,
                        calibration_offset_db: float = 0.0) -> PowerSpectrum:
    """Single rectangular-window FFT of `n_fft` raw samples, same scaling as the pipeline."""
    _check_length(rec, offset + n_fft)
    x = rec.samples[offset:offset + n_fft]
    spec = sfft.fft(x)
    p = (spec.real.astype(np.float64) ** 2 + spec.imag.astype(np.float64) ** 2) / float(n_fft) ** 2
    return _to_spectrum(p, rec, calibration_offset_db)


def noise_floor_dbm(spec: PowerSpectrum, percentile: float = 10.0) -> float:
    return float(np.percentile(spec.power_dbm, percentile))
