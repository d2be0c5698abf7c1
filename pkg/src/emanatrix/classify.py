"""
From detected groups to a verdict.

Harmonic groups are matched against the device fingerprint table; IMP
groups that share peaks with a harmonic group narrow the candidate set.
A plain power threshold detector is kept as the comparison baseline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DetectionReport, DeviceProfile, IQRecording, PowerSpectrum, load_profiles
from .dsp import PipelineConfig, noise_floor_dbm, process_pipeline
from .harmonics import HARMONIC, IMP, DetectorConfig, HarmonicGroup, detect_two_pass
from .peaks import PeakConfig, detect_peaks

DEFAULT_TOL_REL = 0.02


@dataclass(frozen=True)
class FingerprintMatch:
    group_id: int
    candidates: frozenset
    fundamental_error_rel: float
    imp_error_rel: Optional[float] = None
    match_score: float = 0.0

    @property
    def identified(self) -> bool:
        return bool(self.candidates)


def _rel_err(measured: float, ref: float) -> float:
    return abs(measured - ref) / ref


def _associated_imps(g: HarmonicGroup, groups: Sequence[HarmonicGroup]) -> list:
    members = set(g.member_indices)
    return [h for h in groups if h.kind == IMP and members.intersection(h.member_indices)]


def match_fingerprint(groups: Sequence[HarmonicGroup], profiles: Optional[Sequence[DeviceProfile]] = None,
                      tol_rel: float = DEFAULT_TOL_REL, slack_hz: float = 0.0) -> list[FingerprintMatch]:
    """Candidate devices for every harmonic group.

    A profile matches when its fundamental is within ``tol_rel`` (plus
    ``slack_hz``, typically the spectrum resolution) of the group step.
    When IMP groups share peaks with the harmonic group, profiles with an
    IMP step must also match one of them; profiles without one match on the
    fundamental alone. Unmatched groups yield an empty candidate set.
    """
    profiles = load_profiles() if profiles is None else list(profiles)
    out = []
    for gid, g in enumerate(groups):
        if g.kind != HARMONIC:
            continue
        cands = {}
        for p in profiles:
            err = _rel_err(g.step_hz, p.fundamental_hz)
            if abs(g.step_hz - p.fundamental_hz) <= tol_rel * p.fundamental_hz + slack_hz:
                cands[p.name] = (p, err)
        imps = _associated_imps(g, groups)
        imp_err = None
        if imps and cands:
            kept = {}
            for name, (p, err) in cands.items():
                if p.imp_step_hz is None:
                    kept[name] = (p, err)
                    continue
                errs = [_rel_err(h.step_hz, p.imp_step_hz) for h in imps
                        if abs(h.step_hz - p.imp_step_hz) <= tol_rel * p.imp_step_hz + slack_hz]
                if errs:
                    kept[name] = (p, err)
                    e = min(errs)
                    imp_err = e if imp_err is None else min(imp_err, e)
            cands = kept
        if cands:
            f_err = min(err for _, err in cands.values())
            errs = [f_err] + ([imp_err] if imp_err is not None else [])
            score = float(np.clip(1 - max(errs) / tol_rel, 0.0, 1.0))
        else:
            f_err = min((_rel_err(g.step_hz, p.fundamental_hz) for p in profiles), default=float("inf"))
            score = 0.0
        out.append(FingerprintMatch(gid, frozenset(cands), float(f_err), imp_err, score))
    return out


def spectrum_max_dbm(spec: PowerSpectrum, mask_dc: bool = False, dc_mask_bins: int = 2) -> float:
    p = spec.power_dbm
    if mask_dc:
        c = len(p) // 2
        p = np.concatenate([p[:max(0, c - dc_mask_bins)], p[c + dc_mask_bins + 1:]])
        if p.size == 0:
            return -np.inf
    return float(np.max(p))


def threshold_detect(spec: PowerSpectrum, threshold_dbm: float, mask_dc: bool = False,
                     dc_mask_bins: int = 2) -> bool:
    """True iff some bin exceeds `threshold_dbm` (DC left in by default)."""
    return spectrum_max_dbm(spec, mask_dc, dc_mask_bins) > threshold_dbm


def decide(groups: Sequence[HarmonicGroup], matches: Sequence[FingerprintMatch],
           stats: Optional[dict] = None) -> DetectionReport:
    """Emanation is declared when at least one group survives."""
    groups = list(groups)
    verdict = DetectionReport.EMANATION if groups else DetectionReport.CLEAN
    cands = [(m.group_id, set(m.candidates), m.match_score) for m in matches]
    return DetectionReport(verdict, groups, cands, dict(stats or {}))


def default_detector_configs(spec: PowerSpectrum, eps_freq: float = 0.005,
                             eps_mult: float = 0.01, coarse_d_min_hz: Optional[float] = None,
                             fine_d_min_hz: Optional[float] = None) -> tuple:
    """(coarse, fine) detector configs scaled to the spectrum's span.

    The coarse pass ignores separations below a tenth of the bandwidth, so
    that sideband clusters and beats between sources cannot pose as a
    fundamental. The fine pass starts at two bins.
    """
    res = spec.resolution_hz
    bw = res * len(spec)
    d_max = bw / 2
    c_min = max(2 * res, bw / 10) if coarse_d_min_hz is None else coarse_d_min_hz
    f_min = 2 * res if fine_d_min_hz is None else fine_d_min_hz
    coarse = DetectorConfig(c_min, d_max, eps_freq, eps_mult, False, tol_abs_hz=res / 2, dedupe_hz=res)
    fine = DetectorConfig(f_min, d_max, eps_freq, eps_mult, True, tol_abs_hz=res / 2, dedupe_hz=res)
    return coarse, fine


@dataclass(frozen=True)
class AnalysisConfig:
    pipeline: PipelineConfig = PipelineConfig()
    peaks: PeakConfig = PeakConfig()
    eps_freq: float = 0.005
    eps_mult: float = 0.01
    coarse_d_min_hz: Optional[float] = None
    fine_d_min_hz: Optional[float] = None
    tol_rel: float = DEFAULT_TOL_REL


def analyze_spectrum(spec: PowerSpectrum, cfg: AnalysisConfig = AnalysisConfig(),
                     profiles: Optional[Sequence[DeviceProfile]] = None, stats: Optional[dict] = None):
    """Peaks, groups and report for an already computed spectrum.

    Returns ``(report, peaks)``.
    """
    t0 = time.perf_counter()
    peaks = detect_peaks(spec, cfg.peaks)
    coarse, fine = default_detector_configs(spec, cfg.eps_freq, cfg.eps_mult,
                                            cfg.coarse_d_min_hz, cfg.fine_d_min_hz)
    groups = detect_two_pass(peaks, coarse, fine)
    matches = match_fingerprint(groups, profiles, cfg.tol_rel, slack_hz=spec.resolution_hz)
    st = dict(stats or {})
    st.update({
        "n_peaks": len(peaks),
        "noise_floor_dbm": noise_floor_dbm(spec, cfg.peaks.noise_percentile),
        "resolution_hz": spec.resolution_hz,
        "detect_runtime_s": time.perf_counter() - t0,
    })
    return decide(groups, matches, st), peaks


def analyze(rec: IQRecording, cfg: AnalysisConfig = AnalysisConfig(),
            profiles: Optional[Sequence[DeviceProfile]] = None):
    """Full chain on a recording. Returns ``(report, spectrum, peaks)``."""
    t0 = time.perf_counter()
    spec = process_pipeline(rec, cfg.pipeline)
    t1 = time.perf_counter()
    report, peaks = analyze_spectrum(spec, cfg, profiles, {"pipeline_runtime_s": t1 - t0})
    report.pipeline_stats["runtime_s"] = time.perf_counter() - t0
    return report, spec, peaks
