"""
Domain types, IQ/spectrum file I/O and the builtin device fingerprint table.

IQ files are little-endian float32 interleaved I/Q with a JSON sidecar
holding ``sample_rate_hz``, ``center_freq_hz``, ``label`` and an optional
``timestamp``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

DEFAULT_SAMPLE_RATE_HZ = 4e6
PROFILES_ENV = "EMANATRIX_PROFILES"

_IQ_DTYPE = np.dtype("<f4")


class EmanatrixError(Exception):
    """Base class for errors raised by this package."""


class IQFormatError(EmanatrixError):
    """Raised for malformed IQ data files or metadata sidecars."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class IQRecording:
    """Complex baseband capture plus its metadata.

    Samples are held as ``complex64`` so that they round-trip through the
    float32 on-disk format bit-exactly.
    """

    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    center_freq_hz: float = 0.0
    label: Optional[str] = None
    timestamp: Optional[str] = None

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.complex64, copy=True).ravel()
        if s.size < 1:
            raise ValueError("recording must hold at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("recording samples must be finite")
        rate = float(self.sample_rate_hz)
        if not (rate > 0 and math.isfinite(rate)):
            raise ValueError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        center = float(self.center_freq_hz)
        if not (center >= 0 and math.isfinite(center)):
            raise ValueError(f"center_freq_hz must be >= 0, got {self.center_freq_hz}")
        object.__setattr__(self, "samples", _readonly(s))
        object.__setattr__(self, "sample_rate_hz", rate)
        object.__setattr__(self, "center_freq_hz", center)

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def metadata(self) -> dict:
        meta = {
            "sample_rate_hz": self.sample_rate_hz,
            "center_freq_hz": self.center_freq_hz,
            "label": self.label,
        }
        if self.timestamp is not None:
            meta["timestamp"] = self.timestamp
        return meta

    def same_as(self, other: "IQRecording") -> bool:
        """Bit-exact equality of samples and metadata."""
        return (
            self.metadata() == other.metadata()
            and self.samples.tobytes() == other.samples.tobytes()
        )


@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    """Uniformly spaced two-sided power spectrum in dBm."""

    freqs_hz: np.ndarray
    power_dbm: np.ndarray
    resolution_hz: float

    def __post_init__(self):
        f = np.array(self.freqs_hz, dtype=np.float64, copy=True).ravel()
        p = np.array(self.power_dbm, dtype=np.float64, copy=True).ravel()
        res = float(self.resolution_hz)
        if f.size != p.size or f.size == 0:
            raise ValueError("freqs_hz and power_dbm must be non-empty and equal length")
        if not res > 0:
            raise ValueError("resolution_hz must be > 0")
        if not np.all(np.isfinite(p)):
            raise ValueError("power values must be finite")
        if f.size > 1:
            steps = np.diff(f)
            if np.any(np.abs(steps - res) > 1e-9 * np.maximum(np.abs(f[1:]), res)):
                raise ValueError("freqs_hz must be uniformly spaced by resolution_hz")
        object.__setattr__(self, "freqs_hz", _readonly(f))
        object.__setattr__(self, "power_dbm", _readonly(p))
        object.__setattr__(self, "resolution_hz", res)

    def __len__(self):
        return self.freqs_hz.size

    @property
    def power_linear(self) -> np.ndarray:
        """Power in mW."""
        return 10.0 ** (self.power_dbm / 10.0)

    def bin_of(self, freq_hz: float) -> int:
        return int(round((freq_hz - self.freqs_hz[0]) / self.resolution_hz))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_hz", "power_dbm"])
            for f, p in zip(self.freqs_hz, self.power_dbm):
                w.writerow([repr(float(f)), repr(float(p))])


@dataclass(frozen=True)
class Peak:
    freq_hz: float
    power_dbm: float
    bin_index: int
    snr_db: float


def peaks_to_csv(peaks: Iterable[Peak], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz", "power_dbm", "snr_db"])
        for p in peaks:
            w.writerow([repr(p.freq_hz), repr(p.power_dbm), repr(p.snr_db)])


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    fundamental_hz: float
    imp_step_hz: Optional[float] = None

    def __post_init__(self):
        if not self.fundamental_hz > 0:
            raise ValueError(f"{self.name}: fundamental_hz must be > 0")
        if self.imp_step_hz is not None:
            if not 0 < self.imp_step_hz < self.fundamental_hz:
                raise ValueError(f"{self.name}: imp_step_hz must be in (0, fundamental_hz)")

    def to_dict(self) -> dict:
        return {"name": self.name, "fundamental_hz": self.fundamental_hz,
                "imp_step_hz": self.imp_step_hz}

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceProfile":
        try:
            imp = d.get("imp_step_hz")
            return cls(str(d["name"]), float(d["fundamental_hz"]),
                       None if imp is None else float(imp))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed device profile {d!r}") from exc


# (name, fundamental MHz, IMP step MHz or None for "many IMPs" / "-")
_PROFILE_TABLE = (
    ("HDMI", 148.5, 0.07),
    ("Arduino", 16.0, None),
    ("PSoC", 64.0, 1.6),
    ("ESP32", 6.0, 0.525),
    ("ZigBee", 24.0, 3.0),
    ("Desktop", 3.3, None),
    ("Monitor", 148.5, 0.07),
    ("USB", 480.0, 0.00025),
)


def builtin_profiles() -> list[DeviceProfile]:
    """The eight measured emanation fingerprints, in Hz."""
    return [
        DeviceProfile(name, round(f * 1e6, 6), None if d is None else round(d * 1e6, 6))
        for name, f, d in _PROFILE_TABLE
    ]


def load_profiles(path=None) -> list[DeviceProfile]:
    """Profiles from a JSON list, ``$EMANATRIX_PROFILES``, or the builtin table."""
    if path is None:
        path = os.environ.get(PROFILES_ENV)
    if not path:
        return builtin_profiles()
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("profiles", [])
    return [DeviceProfile.from_dict(d) for d in data]


def find_profile(name: str, profiles: Optional[Sequence[DeviceProfile]] = None) -> DeviceProfile:
    profiles = builtin_profiles() if profiles is None else profiles
    for p in profiles:
        if p.name.lower() == name.lower():
            return p
    raise KeyError(f"unknown profile {name!r}")


def default_meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_iq(rec: IQRecording, path, meta_path=None) -> None:
    if not isinstance(rec, IQRecording):
        raise TypeError("save_iq expects an IQRecording")
    meta_path = default_meta_path(path) if meta_path is None else Path(meta_path)
    inter = np.empty(2 * len(rec), dtype=_IQ_DTYPE)
    inter[0::2] = rec.samples.real
    inter[1::2] = rec.samples.imag
    with open(path, "wb") as fh:
        fh.write(inter.tobytes())
    with open(meta_path, "w") as fh:
        json.dump(rec.metadata(), fh, indent=2)


def load_iq(path, meta_path=None) -> IQRecording:
    meta_path = default_meta_path(path) if meta_path is None else Path(meta_path)
    raw = Path(path).read_bytes()
    if len(raw) % (2 * _IQ_DTYPE.itemsize):
        raise IQFormatError(
            f"{path}: {len(raw)} bytes is not a whole number of complex float32 records")
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise IQFormatError(f"{meta_path}: invalid JSON ({exc})") from exc
    if not isinstance(meta, dict):
        raise IQFormatError(f"{meta_path}: metadata must be a JSON object")
    for key in ("sample_rate_hz", "center_freq_hz"):
        if key not in meta:
            raise IQFormatError(f"{meta_path}: missing {key!r}")
    flat = np.frombuffer(raw, dtype=_IQ_DTYPE)
    samples = np.empty(flat.size // 2, dtype=np.complex64)
    samples.real = flat[0::2]
    samples.imag = flat[1::2]
    try:
        return IQRecording(samples, float(meta["sample_rate_hz"]), float(meta["center_freq_hz"]),
                           meta.get("label"), meta.get("timestamp"))
    except (TypeError, ValueError) as exc:
        raise IQFormatError(f"{meta_path}: {exc}") from exc


@dataclass
class DetectionReport:
    """Outcome of one analysis run.

    ``fingerprint_candidates`` holds ``(group_id, names, match_score)`` tuples.
    """

    verdict: str
    groups: list = field(default_factory=list)
    fingerprint_candidates: list = field(default_factory=list)
    pipeline_stats: dict = field(default_factory=dict)

    EMANATION = "emanation_detected"
    CLEAN = "clean"

    def __post_init__(self):
        expected = self.EMANATION if self.groups else self.CLEAN
        if self.verdict != expected:
            raise ValueError(f"verdict {self.verdict!r} inconsistent with {len(self.groups)} groups")

    @property
    def detected(self) -> bool:
        return self.verdict == self.EMANATION

    def candidate_names(self) -> set:
        out = set()
        for _, names, _ in self.fingerprint_candidates:
            out |= set(names)
        return out

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "groups": [g.to_dict() for g in self.groups],
            "fingerprint_candidates": [
                {"group_id": gid, "candidates": sorted(names), "match_score": score}
                for gid, names, score in self.fingerprint_candidates
            ],
            "pipeline_stats": {k: float(v) for k, v in self.pipeline_stats.items()},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)
