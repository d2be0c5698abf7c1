"""
Synthetic emanation, interference and background recordings.

Everything is composed in the frequency domain and brought to the time
domain with a single inverse FFT, which keeps a 2e6-sample capture cheap
enough for large benchmark corpora:

* tones are placed on the synthesis grid point closest to a pipeline bin
  centre, so their pipeline power is known in advance;
* white noise is a complex Gaussian spectrum;
* an LTE-like block is extra Gaussian energy over its band;
* a DC offset is energy in bin zero.

Line amplitudes and noise level are calibrated against the pipeline's own
noise statistics so that the strongest emanation line shows the requested
peak SNR (peak bin minus the 10th-percentile floor) after
:func:`~emanatrix.dsp.process_pipeline`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .core import DeviceProfile, IQRecording, find_profile, load_profiles
from .dsp import PipelineConfig, process_pipeline

DEFAULT_NOISE_DBM = -20.0
LTE_BLOCK_HZ = (729e6, 746e6)

_CAL_SEED = 0x5EED


class SynthError(ValueError):
    """Invalid synthesis request (bad parameters or out-of-band content)."""


@dataclass(frozen=True)
class SynthParams:
    """Emanation model for one device.

    Line amplitudes: harmonic ``h`` has ``harmonic_decay**(h-1)``; the k-th
    sideband pair around it has ``sideband_level * harmonic_decay**(k-1)``
    times that. ``duration_s=None`` means exactly what the pipeline needs.
    """

    profile: DeviceProfile
    n_harmonics: int = 5
    n_sidebands: int = 3
    harmonic_decay: float = 0.7
    peak_snr_db: float = 10.0
    missing_harmonics: frozenset = frozenset()
    duration_s: Optional[float] = None
    seed: int = 0
    sideband_level: float = 0.5

    def __post_init__(self):
        if self.n_harmonics < 1:
            raise SynthError("n_harmonics must be >= 1")
        if self.n_sidebands < 0:
            raise SynthError("n_sidebands must be >= 0")
        if not 0 < self.harmonic_decay <= 1:
            raise SynthError("harmonic_decay must lie in (0, 1]")
        if not 0 < self.sideband_level <= 1:
            raise SynthError("sideband_level must lie in (0, 1]")
        if self.duration_s is not None and not self.duration_s > 0:
            raise SynthError("duration_s must be > 0")
        missing = frozenset(int(h) for h in self.missing_harmonics)
        object.__setattr__(self, "missing_harmonics", missing)
        if all(h in missing for h in range(1, self.n_harmonics + 1)):
            raise SynthError("every harmonic is marked missing")
        # no IMP step in the profile means no sidebands to draw
        if self.profile.imp_step_hz is None:
            object.__setattr__(self, "n_sidebands", 0)

    def with_(self, **kw) -> "SynthParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class InterfererSpec:
    """Non-emanation energy.

    ``power_dbm`` is total power: for ``tone`` and ``dc_offset`` it equals
    the pipeline peak reading, for ``lte_block`` it is spread over the band.
    """

    kind: str
    power_dbm: float
    start_hz: Optional[float] = None
    stop_hz: Optional[float] = None
    freq_hz: Optional[float] = None

    KINDS = ("lte_block", "dc_offset", "tone")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise SynthError(f"unknown interferer kind {self.kind!r}")
        if self.kind == "lte_block":
            if self.start_hz is None or self.stop_hz is None or not self.start_hz < self.stop_hz:
                raise SynthError("lte_block needs start_hz < stop_hz")
        if self.kind == "tone" and self.freq_hz is None:
            raise SynthError("tone interferer needs freq_hz")

    def with_power(self, power_dbm: float) -> "InterfererSpec":
        return replace(self, power_dbm=float(power_dbm))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "power_dbm": self.power_dbm}
        for k in ("start_hz", "stop_hz", "freq_hz"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InterfererSpec":
        try:
            return cls(str(d["kind"]), float(d["power_dbm"]),
                       _opt_float(d.get("start_hz")), _opt_float(d.get("stop_hz")),
                       _opt_float(d.get("freq_hz")))
        except KeyError as exc:
            raise SynthError(f"interferer missing field {exc}") from None


def _opt_float(v):
    return None if v is None else float(v)


def dbm_to_w(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def default_capture(profile: DeviceProfile, n_harmonics: int = 5) -> tuple:
    """(sample_rate_hz, center_freq_hz) that holds ``n_harmonics`` of `profile`.

    The band is 1.25 (n+1) f wide and its centre sits a quarter fundamental
    off the harmonic grid, so no harmonic lands on the DC bin.
    """
    f = profile.fundamental_hz
    rate = 1.25 * (n_harmonics + 1) * f
    center = ((n_harmonics + 1) / 2.0 + 0.25) * f
    return rate, center


def default_lte_block(profile: DeviceProfile) -> tuple:
    """An interference band placed between the 2nd and 3rd harmonics."""
    f = profile.fundamental_hz
    return 2.42 * f, 2.58 * f


def default_n_sidebands(profile: DeviceProfile, rate_hz: float,
                        cfg: PipelineConfig = PipelineConfig(), n: int = 3) -> int:
    """`n` when the IMP step spans at least four pipeline bins, else 0.

    Unresolvable sidebands fall into the carrier bin and beat with it.
    """
    if profile.imp_step_hz is None:
        return 0
    return n if profile.imp_step_hz >= 4 * rate_hz / cfg.nfft else 0


def n_samples(rate_hz: float, duration_s: Optional[float], cfg: PipelineConfig) -> int:
    if duration_s is None:
        return cfg.required_samples
    return max(1, int(round(duration_s * rate_hz)))


@lru_cache(maxsize=16)
def noise_statistics(cfg: PipelineConfig = PipelineConfig()) -> tuple:
    """(floor_db, mean_db) of the pipeline output for unit-power white noise.

    floor_db is the 10th percentile of the dB spectrum and mean_db the mean
    bin power, both relative to 0 dBW total noise power. Measured once per
    config on a fixed-seed realization.
    """
    rng = _rng(_CAL_SEED)
    n = cfg.required_samples
    x = rng.standard_normal(2 * n, dtype=np.float32).view(np.complex64) * np.float32(math.sqrt(0.5))
    spec = process_pipeline(IQRecording(x, 1.0), cfg.with_(calibration_offset_db=0.0))
    p = spec.power_dbm - 30.0
    floor = float(np.percentile(p, 10))
    mean = float(10 * np.log10(np.mean(10 ** (p / 10))))
    return floor, mean


def pipeline_floor_dbm(noise_dbm: float, cfg: PipelineConfig = PipelineConfig()) -> float:
    """Expected 10th-percentile pipeline floor for AWGN of total power `noise_dbm`."""
    return noise_dbm + noise_statistics(cfg)[0] + cfg.calibration_offset_db


def _rng(seed) -> np.random.Generator:
    # SFC64 draws normals noticeably faster than the default PCG64
    return np.random.Generator(np.random.SFC64(seed))


class _Composer:
    """Frequency-domain accumulator for one recording."""

    def __init__(self, n: int, rate_hz: float, center_hz: float, cfg: PipelineConfig):
        self.n = int(n)
        self.m = sfft.next_fast_len(self.n)
        self.rate = float(rate_hz)
        self.center = float(center_hz)
        self.cfg = cfg
        self.X = np.zeros(self.m, dtype=np.complex64)
        self._blank = True

    def bin_of(self, offset_hz: float) -> int:
        """Synthesis bin nearest the pipeline bin centre closest to `offset_hz`."""
        nfft = self.cfg.nfft
        kp = round(offset_hz / self.rate * nfft)
        return int(round(kp * self.m / nfft))

    def check_band(self, offset_hz: float, what: str):
        if not -self.rate / 2 <= offset_hz < self.rate / 2:
            raise SynthError(
                f"{what} at {offset_hz + self.center:.6g} Hz lies outside the captured band "
                f"[{self.center - self.rate / 2:.6g}, {self.center + self.rate / 2:.6g}) Hz")

    def add_tone(self, abs_hz: float, amp: float, phase: float, what="tone"):
        off = abs_hz - self.center
        self.check_band(off, what)
        k = self.bin_of(off) % self.m
        self.X[k] += np.complex64(self.m * amp * complex(math.cos(phase), math.sin(phase)))
        self._blank = False

    def add_noise(self, power_w: float, rng: np.random.Generator, lo: int = 0, hi: Optional[int] = None):
        """Complex Gaussian energy of total power `power_w` over bins [lo, hi)."""
        hi = self.m if hi is None else hi
        k = hi - lo
        if k <= 0 or power_w <= 0:
            return
        # per-bin variance so that the time series carries power_w
        scale = np.float32(math.sqrt(power_w * self.m * self.m / k / 2.0))
        if self._blank and k == self.m:
            # first full-band draw: fill the accumulator in place
            rng.standard_normal(dtype=np.float32, out=self.X.view(np.float32))
            self.X *= scale
        else:
            g = rng.standard_normal(2 * k, dtype=np.float32).view(np.complex64)
            g *= scale
            self.X[lo:hi] += g
        self._blank = False

    def add_band(self, start_abs: float, stop_abs: float, power_w: float, rng):
        a, b = start_abs - self.center, stop_abs - self.center
        self.check_band(a, "interferer band start")
        self.check_band(np.nextafter(b, -np.inf), "interferer band stop")
        lo = int(math.ceil(a / self.rate * self.m))
        hi = int(math.floor(b / self.rate * self.m)) + 1
        # negative frequencies live in the upper half of the FFT grid
        if lo < 0 <= hi - 1:
            self.add_noise(power_w * (-lo) / (hi - lo), rng, self.m + lo, self.m)
            self.add_noise(power_w * hi / (hi - lo), rng, 0, hi)
        elif hi <= 0:
            self.add_noise(power_w, rng, self.m + lo, self.m + hi)
        else:
            self.add_noise(power_w, rng, lo, hi)

    def render(self) -> np.ndarray:
        x = sfft.ifft(self.X, overwrite_x=True)
        return x[:self.n]


def emanation_lines(p: SynthParams) -> list:
    """(absolute_freq_hz, relative_amplitude, harmonic, sideband_k) for every line."""
    f = p.profile.fundamental_hz
    d = p.profile.imp_step_hz
    out = []
    for h in range(1, p.n_harmonics + 1):
        if h in p.missing_harmonics:
            continue
        a = p.harmonic_decay ** (h - 1)
        out.append((h * f, a, h, 0))
        for k in range(1, p.n_sidebands + 1):
            sa = a * p.sideband_level * p.harmonic_decay ** (k - 1)
            out.append((h * f - k * d, sa, h, -k))
            out.append((h * f + k * d, sa, h, k))
    return out


def strongest_line_power_w(peak_snr_db: float, noise_dbm: float,
                           cfg: PipelineConfig = PipelineConfig()) -> float:
    """Line power that makes (line + noise) read `peak_snr_db` above the floor."""
    floor_db, mean_db = noise_statistics(cfg)
    noise_w = dbm_to_w(noise_dbm)
    target = noise_w * 10 ** ((floor_db + peak_snr_db) / 10)
    line = target - noise_w * 10 ** (mean_db / 10)
    if line <= 0:
        raise SynthError(
            f"peak_snr_db={peak_snr_db} is below the mean noise level "
            f"({mean_db - floor_db:.2f} dB above the floor) and cannot be realized")
    return line


def _add_emanation(comp: _Composer, p: SynthParams, noise_dbm: float, rng, gain_db: float = 0.0):
    lines = emanation_lines(p)
    amax = max(a for _, a, _, _ in lines)
    a0 = math.sqrt(strongest_line_power_w(p.peak_snr_db, noise_dbm, comp.cfg)) * 10 ** (gain_db / 20)
    phases = rng.uniform(0, 2 * math.pi, len(lines))
    for (fr, a, h, k), ph in zip(lines, phases):
        what = f"harmonic {h}" if k == 0 else f"sideband {k:+d} of harmonic {h}"
        comp.add_tone(fr, a0 * a / amax, float(ph), what)


def _add_interferers(comp: _Composer, interferers: Sequence[InterfererSpec], rng):
    for spec in interferers:
        pw = dbm_to_w(spec.power_dbm)
        if spec.kind == "dc_offset":
            comp.add_tone(comp.center, math.sqrt(pw), float(rng.uniform(0, 2 * math.pi)), "dc offset")
        elif spec.kind == "tone":
            comp.add_tone(spec.freq_hz, math.sqrt(pw), float(rng.uniform(0, 2 * math.pi)), "tone interferer")
        else:
            comp.add_band(spec.start_hz, spec.stop_hz, pw, rng)


def synth_emanation(p: SynthParams, rate_hz: Optional[float] = None, center_hz: Optional[float] = None,
                    noise_dbm: float = DEFAULT_NOISE_DBM, cfg: PipelineConfig = PipelineConfig(),
                    label: Optional[str] = None) -> IQRecording:
    """Harmonic comb with IMP sidebands over AWGN.

    Parameters
    ----------
    p : SynthParams
    rate_hz, center_hz : float, optional
        Capture; defaults from :func:`default_capture`.
    noise_dbm : float
        Total AWGN power. Line amplitudes scale with it to hold the SNR.
    cfg : PipelineConfig
        Pipeline the SNR is calibrated against.
    """
    if rate_hz is None or center_hz is None:
        r, c = default_capture(p.profile, p.n_harmonics)
        rate_hz = r if rate_hz is None else rate_hz
        center_hz = c if center_hz is None else center_hz
    rng = _rng(p.seed)
    comp = _Composer(n_samples(rate_hz, p.duration_s, cfg), rate_hz, center_hz, cfg)
    comp.add_noise(dbm_to_w(noise_dbm), rng)
    _add_emanation(comp, p, noise_dbm, rng)
    return IQRecording(comp.render(), rate_hz, center_hz, label or p.profile.name.lower())


def synth_background(interferers: Sequence[InterfererSpec], noise_dbm: Optional[float], rate_hz: float,
                     center_hz: float, duration_s: Optional[float] = None, seed: int = 0,
                     cfg: PipelineConfig = PipelineConfig(), label: str = "background") -> IQRecording:
    """AWGN at `noise_dbm` (``None`` for none) plus the given interferers."""
    rng = _rng(seed)
    comp = _Composer(n_samples(rate_hz, duration_s, cfg), rate_hz, center_hz, cfg)
    if noise_dbm is not None:
        comp.add_noise(dbm_to_w(noise_dbm), rng)
    _add_interferers(comp, interferers, rng)
    return IQRecording(comp.render(), rate_hz, center_hz, label)


def synth_scene(p: Optional[SynthParams], interferers: Sequence[InterfererSpec], rate_hz: float,
                center_hz: float, noise_dbm: float = DEFAULT_NOISE_DBM, seed: int = 0,
                cfg: PipelineConfig = PipelineConfig(), gain_db: float = 0.0,
                label: Optional[str] = None) -> IQRecording:
    """Emanation (if any) plus interferers plus AWGN, rendered with one transform.

    Equivalent to mixing :func:`synth_emanation` and an interferer-only
    :func:`synth_background`, at half the cost. `gain_db` scales the
    emanation lines only.
    """
    rng = _rng(seed)
    duration = p.duration_s if p is not None else None
    comp = _Composer(n_samples(rate_hz, duration, cfg), rate_hz, center_hz, cfg)
    comp.add_noise(dbm_to_w(noise_dbm), rng)
    if p is not None:
        _add_emanation(comp, p, noise_dbm, rng, gain_db)
    _add_interferers(comp, interferers, rng)
    if label is None:
        label = p.profile.name.lower() if p is not None else "background"
    return IQRecording(comp.render(), rate_hz, center_hz, label)


def mix(recs: Sequence[IQRecording], gains_db: Sequence[float], label: Optional[str] = None) -> IQRecording:
    """Sample-wise sum of amplitude-scaled recordings (gain in dB, -inf mutes)."""
    recs = list(recs)
    gains_db = list(gains_db)
    if not recs:
        raise ValueError("nothing to mix")
    if len(recs) != len(gains_db):
        raise ValueError("need one gain per recording")
    ref = recs[0]
    for r in recs[1:]:
        if (r.sample_rate_hz != ref.sample_rate_hz or r.center_freq_hz != ref.center_freq_hz
                or len(r) != len(ref)):
            raise ValueError("recordings differ in sample rate, center frequency or length")
    if len(recs) == 1 and gains_db[0] == 0:
        return ref
    acc = np.zeros(len(ref), dtype=np.complex128)
    for r, g in zip(recs, gains_db):
        if g == -math.inf:
            continue
        acc += r.samples * (10 ** (g / 20))
    if label is None:
        label = "+".join(str(r.label) for r in recs)
    return IQRecording(acc, ref.sample_rate_hz, ref.center_freq_hz, label)


def free_space_gain_db(distance_m: float, ref_distance_m: float = 1.0) -> float:
    """Amplitude falls as 1/r: gain relative to `ref_distance_m`."""
    if distance_m <= 0 or ref_distance_m <= 0:
        raise ValueError("distances must be > 0")
    return -20 * math.log10(distance_m / ref_distance_m)


def snr_to_distance_m(snr_db: float, snr_at_ref_db: float, ref_distance_m: float = 1.0) -> float:
    """Nominal distance at which a source read `snr_at_ref_db` at the reference reads `snr_db`."""
    return ref_distance_m * 10 ** ((snr_at_ref_db - snr_db) / 20)


def params_from_scenario(d: dict, profiles=None) -> tuple:
    """Parse a scenario document.

    Returns ``(params or None, interferers, rate_hz, center_hz, noise_dbm)``.
    ``device`` may be a profile name, ``"background"``, or an inline
    profile object under ``profile``.
    """
    if not isinstance(d, dict):
        raise SynthError("scenario must be a JSON object")
    profiles = load_profiles() if profiles is None else profiles
    params = None
    if "profile" in d and isinstance(d["profile"], dict):
        prof = DeviceProfile.from_dict(d["profile"])
    else:
        name = d.get("device")
        if name is None:
            raise SynthError("scenario needs 'device' or an inline 'profile'")
        prof = None if str(name).lower() == "background" else find_profile(str(name), profiles)
    n_harm = int(d.get("n_harmonics", 5))
    rate, center = d.get("sample_rate_hz"), d.get("center_freq_hz")
    if rate is None or center is None:
        if prof is None:
            raise SynthError("background scenario needs sample_rate_hz and center_freq_hz")
        r, c = default_capture(prof, n_harm)
        rate = r if rate is None else rate
        center = c if center is None else center
    if prof is not None:
        n_sb = d.get("n_sidebands")
        params = SynthParams(
            prof,
            n_harmonics=n_harm,
            n_sidebands=default_n_sidebands(prof, float(rate)) if n_sb is None else int(n_sb),
            harmonic_decay=float(d.get("harmonic_decay", 0.7)),
            peak_snr_db=float(d.get("snr_db", d.get("peak_snr_db", 10.0))),
            missing_harmonics=frozenset(d.get("missing_harmonics", ())),
            duration_s=_opt_float(d.get("duration_s")),
            seed=int(d.get("seed", 0)),
        )
    interferers = [InterfererSpec.from_dict(x) for x in d.get("interferers", [])]
    noise = float(d.get("noise_dbm", DEFAULT_NOISE_DBM))
    return params, interferers, float(rate), float(center), noise
