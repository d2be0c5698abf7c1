"""
Benchmark harness: synthetic corpora, detector scoring and comparison tables.

A corpus is a list of :class:`BenchScenario`. Each scenario point (one SNR
value) runs ``n_trials_per_point`` independent trials. Device scenarios
give positive trials, ``device="background"`` scenarios give negative
ones. Every trial is simulated once; the harmonic verdict and the
spectrum maximum are both recorded, so any number of threshold settings
can be scored on exactly the same spectra.

Per-point scores pair the positive and negative trials that share an SNR
value (background trials carry the sweep value only as a label).
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .classify import AnalysisConfig, analyze_spectrum, spectrum_max_dbm
from .core import DeviceProfile, find_profile, load_profiles
from .dsp import process_pipeline
from .synth import (DEFAULT_NOISE_DBM, InterfererSpec, SynthParams, default_capture,
                    default_lte_block, default_n_sidebands, pipeline_floor_dbm, snr_to_distance_m,
                    synth_scene)

BACKGROUND = "background"
HARMONIC_DETECTOR = "harmonic"


class BenchError(ValueError):
    """Invalid scenario, result set or comparison request."""


@dataclass(frozen=True)
class BenchScenario:
    name: str
    device: str
    snr_sweep_db: tuple
    n_trials_per_point: int
    interferers: tuple = ()
    seed_base: int = 0
    sample_rate_hz: Optional[float] = None
    center_freq_hz: Optional[float] = None
    n_harmonics: int = 5
    n_sidebands: Optional[int] = None
    harmonic_decay: float = 0.7
    noise_dbm: float = DEFAULT_NOISE_DBM
    # each interferer's power is drawn uniformly within +-jitter of its nominal value
    interferer_jitter_db: float = 0.0

    def __post_init__(self):
        if self.n_trials_per_point < 1:
            raise BenchError(f"{self.name}: n_trials_per_point must be >= 1")
        sweep = tuple(float(s) for s in self.snr_sweep_db)
        if not sweep:
            raise BenchError(f"{self.name}: empty snr_sweep_db")
        object.__setattr__(self, "snr_sweep_db", sweep)
        object.__setattr__(self, "interferers", tuple(
            i if isinstance(i, InterfererSpec) else InterfererSpec.from_dict(i) for i in self.interferers))
        if self.is_background and (self.sample_rate_hz is None or self.center_freq_hz is None):
            raise BenchError(f"{self.name}: background scenarios need sample_rate_hz and center_freq_hz")

    @property
    def is_background(self) -> bool:
        return self.device.lower() == BACKGROUND

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_sweep_db"] = list(self.snr_sweep_db)
        d["interferers"] = [i.to_dict() for i in self.interferers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchScenario":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise BenchError(f"unknown scenario fields {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise BenchError(f"malformed scenario: {exc}") from None


@dataclass
class TrialRecord:
    scenario: str
    device: str
    snr_db: float
    trial: int
    seed: int
    positive: bool
    harmonic_detected: bool
    candidates: list
    max_dbm: float
    runtime_s: float


@dataclass
class PointRecord:
    axis_value: float
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0
    mean_runtime_s: float = 0.0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        return 1.0 - (self.fp + self.fn) / self.total if self.total else float("nan")

    @property
    def fp_rate(self) -> float:
        neg = self.fp + self.tn
        return self.fp / neg if neg else 0.0

    @property
    def fn_rate(self) -> float:
        pos = self.tp + self.fn
        return self.fn / pos if pos else 0.0

    def to_dict(self) -> dict:
        return {"axis_value": self.axis_value, "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn,
                "accuracy": self.accuracy, "fp_rate": self.fp_rate, "fn_rate": self.fn_rate,
                "mean_runtime_s": self.mean_runtime_s}


@dataclass
class BenchResult:
    """Scores of one detector setting along one sweep axis."""

    detector: str
    axis: str
    points: list
    confusion: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        c = self.confusion
        total = sum(c.values())
        return 1.0 - (c["fp"] + c["fn"]) / total if total else float("nan")

    def point(self, value: float) -> PointRecord:
        for p in self.points:
            if p.axis_value == value:
                return p
        raise KeyError(value)

    def axis_values(self) -> list:
        return [p.axis_value for p in self.points]

    def to_dict(self) -> dict:
        return {"detector": self.detector, "axis": self.axis, "accuracy": self.accuracy,
                "confusion": dict(self.confusion), "points": [p.to_dict() for p in self.points]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.axis, "accuracy", "fp_rate", "fn_rate", "tp", "tn", "fp", "fn", "mean_runtime_s"])
        for p in self.points:
            w.writerow([p.axis_value, p.accuracy, p.fp_rate, p.fn_rate, p.tp, p.tn, p.fp, p.fn,
                        p.mean_runtime_s])
        return buf.getvalue()


def trial_seed(seed_base: int, point: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed_base, point, trial]).generate_state(1)[0])


def _capture(sc: BenchScenario, prof: Optional[DeviceProfile]) -> tuple:
    if sc.sample_rate_hz is not None and sc.center_freq_hz is not None:
        return sc.sample_rate_hz, sc.center_freq_hz
    rate, center = default_capture(prof, sc.n_harmonics)
    return (sc.sample_rate_hz or rate), (center if sc.center_freq_hz is None else sc.center_freq_hz)


def _jittered(interferers, jitter_db: float, rng: np.random.Generator) -> list:
    if jitter_db <= 0:
        return list(interferers)
    offs = rng.uniform(-jitter_db, jitter_db, len(interferers))
    return [i.with_power(i.power_dbm + o) for i, o in zip(interferers, offs)]


def simulate(scenarios: Sequence[BenchScenario], analysis: AnalysisConfig = AnalysisConfig(),
             profiles: Optional[Sequence[DeviceProfile]] = None, progress=None) -> list[TrialRecord]:
    """Run every trial of every scenario once, in scenario order."""
    profiles = load_profiles() if profiles is None else list(profiles)
    # resolve names up front so a bad corpus fails before any work
    resolved = []
    for sc in scenarios:
        resolved.append(None if sc.is_background else find_profile(sc.device, profiles))
    records = []
    for sc, prof in zip(scenarios, resolved):
        rate, center = _capture(sc, prof)
        n_sb = sc.n_sidebands
        if prof is not None and n_sb is None:
            n_sb = default_n_sidebands(prof, rate, analysis.pipeline)
        for ip, snr in enumerate(sc.snr_sweep_db):
            for t in range(sc.n_trials_per_point):
                seed = trial_seed(sc.seed_base, ip, t)
                rng = np.random.default_rng(seed)
                intf = _jittered(sc.interferers, sc.interferer_jitter_db, rng)
                params = None
                if prof is not None:
                    params = SynthParams(prof, sc.n_harmonics, n_sb, sc.harmonic_decay, snr, seed=seed)
                t0 = time.perf_counter()
                rec = synth_scene(params, intf, rate, center, sc.noise_dbm, seed=seed + 1,
                                  cfg=analysis.pipeline)
                spec = process_pipeline(rec, analysis.pipeline)
                report, _ = analyze_spectrum(spec, analysis, profiles)
                dt = time.perf_counter() - t0
                records.append(TrialRecord(
                    sc.name, sc.device, snr, t, seed, prof is not None, report.detected,
                    sorted(report.candidate_names()), spectrum_max_dbm(spec), dt))
                if progress is not None:
                    progress(records[-1])
    return records


def _verdicts(records: Sequence[TrialRecord], detector) -> list:
    if detector == HARMONIC_DETECTOR:
        return [r.harmonic_detected for r in records]
    thr = float(detector)
    return [r.max_dbm > thr for r in records]


def detector_name(detector) -> str:
    return HARMONIC_DETECTOR if detector == HARMONIC_DETECTOR else f"threshold({float(detector):g})"


def _score(records, verdicts, keys) -> tuple:
    points: dict = {}
    times: dict = {}
    conf = {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
    for r, v, k in zip(records, verdicts, keys):
        p = points.setdefault(k, PointRecord(k))
        times.setdefault(k, []).append(r.runtime_s)
        if r.positive:
            key = "tp" if v else "fn"
        else:
            key = "fp" if v else "tn"
        setattr(p, key, getattr(p, key) + 1)
        conf[key] += 1
    for k, p in points.items():
        p.mean_runtime_s = float(np.mean(times[k]))
    return [points[k] for k in sorted(points)], conf


def score(records: Sequence[TrialRecord], detector=HARMONIC_DETECTOR) -> BenchResult:
    """Per-SNR-point scores of `detector` ("harmonic" or a threshold in dBm)."""
    if not records:
        raise BenchError("no trials to score")
    pts, conf = _score(records, _verdicts(records, detector), [r.snr_db for r in records])
    return BenchResult(detector_name(detector), "snr_db", pts, conf)


def threshold_sweep(records: Sequence[TrialRecord], thresholds_dbm: Iterable[float],
                    snr_db: Optional[float] = None) -> BenchResult:
    """Accuracy versus threshold over the corpus (or one SNR point)."""
    recs = [r for r in records if snr_db is None or r.snr_db == snr_db]
    if not recs:
        raise BenchError("no trials to score")
    mx = np.array([r.max_dbm for r in recs])
    pos = np.array([r.positive for r in recs])
    points = []
    conf = {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
    for thr in sorted(float(t) for t in thresholds_dbm):
        hit = mx > thr
        p = PointRecord(thr, int(np.sum(hit & pos)), int(np.sum(~hit & ~pos)),
                        int(np.sum(hit & ~pos)), int(np.sum(~hit & pos)),
                        float(np.mean([r.runtime_s for r in recs])))
        points.append(p)
        for k in conf:
            conf[k] += getattr(p, k)
    name = "threshold_sweep" if snr_db is None else f"threshold_sweep@{snr_db:g}dB"
    return BenchResult(name, "threshold_dbm", points, conf)


def best_threshold(records: Sequence[TrialRecord], thresholds_dbm: Iterable[float]) -> BenchResult:
    """Per SNR point, the threshold detector at its best threshold for that point."""
    thresholds_dbm = list(thresholds_dbm)
    points, conf = [], {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
    for snr in sorted({r.snr_db for r in records}):
        sw = threshold_sweep(records, thresholds_dbm, snr)
        best = max(sw.points, key=lambda p: (p.accuracy, -p.axis_value))
        p = PointRecord(snr, best.tp, best.tn, best.fp, best.fn, best.mean_runtime_s)
        points.append(p)
        for k in conf:
            conf[k] += getattr(p, k)
    return BenchResult("threshold_best", "snr_db", points, conf)


def run_corpus(scenarios: Sequence[BenchScenario], detector: Union[str, float] = HARMONIC_DETECTOR,
               analysis: AnalysisConfig = AnalysisConfig(), profiles=None,
               records: Optional[Sequence[TrialRecord]] = None) -> BenchResult:
    """Simulate (unless `records` is given) and score one detector per SNR point."""
    if records is None:
        records = simulate(scenarios, analysis, profiles)
    return score(records, detector)


def compare_report(results: Sequence[BenchResult]) -> dict:
    """Side-by-side accuracy table.

    Returns ``{"csv": str, "json": dict}``; the CSV has one row per axis
    value and an accuracy/fp/fn column triple per detector.
    """
    results = list(results)
    if not results:
        raise BenchError("nothing to compare")
    ref = results[0]
    for r in results[1:]:
        if r.axis != ref.axis or r.axis_values() != ref.axis_values():
            raise BenchError(f"{r.detector}: sweep axis differs from {ref.detector}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = [ref.axis]
    for r in results:
        header += [f"{r.detector}_accuracy", f"{r.detector}_fp_rate", f"{r.detector}_fn_rate"]
    w.writerow(header)
    for i, v in enumerate(ref.axis_values()):
        row = [v]
        for r in results:
            p = r.points[i]
            row += [p.accuracy, p.fp_rate, p.fn_rate]
        w.writerow(row)
    return {"csv": buf.getvalue(), "json": {"axis": ref.axis, "results": [r.to_dict() for r in results]}}


def distance_table(result: BenchResult, snr_at_ref_db: float, ref_distance_m: float = 1.0) -> list:
    """Nominal free-space distances for the SNR points (illustration only)."""
    return [(p.axis_value, snr_to_distance_m(p.axis_value, snr_at_ref_db, ref_distance_m))
            for p in result.points]


def make_default_scenarios(snr_sweep_db=(1, 4, 7, 10, 13, 16, 19, 22, 25, 28), trials_per_point: int = 5,
                           profiles=None) -> list[BenchScenario]:
    """One device scenario and one matching background scenario per profile.

    Each capture carries an LTE-like block between the 2nd and 3rd
    harmonics (about 20 dB over the floor per bin) and a DC offset 25 dB
    over the floor, both jittered by +-10 dB per trial.
    """
    profiles = load_profiles() if profiles is None else profiles
    floor = pipeline_floor_dbm(DEFAULT_NOISE_DBM)
    out = []
    for i, prof in enumerate(profiles):
        rate, center = default_capture(prof)
        a, b = default_lte_block(prof)
        lte_dbm = DEFAULT_NOISE_DBM + 10 * math.log10((b - a) / rate) + 20.0
        intf = (InterfererSpec("lte_block", round(lte_dbm, 3), a, b),
                InterfererSpec("dc_offset", round(floor + 25.0, 3)))
        common = dict(snr_sweep_db=tuple(snr_sweep_db), n_trials_per_point=trials_per_point,
                      interferers=intf, sample_rate_hz=rate, center_freq_hz=center,
                      interferer_jitter_db=10.0)
        out.append(BenchScenario(prof.name.lower(), prof.name, seed_base=1000 + i, **common))
        out.append(BenchScenario(f"background_{prof.name.lower()}", BACKGROUND, seed_base=2000 + i, **common))
    return out


def load_scenarios(path=None) -> list[BenchScenario]:
    """Scenarios from a JSON file (a list, or an object with ``scenarios``).

    Without a path the bundled default corpus is loaded.
    """
    if path is None:
        text = resources.files("emanatrix").joinpath("data/default_scenarios.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BenchError(f"invalid scenario JSON: {exc}") from None
    if isinstance(data, dict):
        data = data.get("scenarios")
    if not isinstance(data, list):
        raise BenchError("scenario file must hold a list of scenarios")
    return [BenchScenario.from_dict(d) for d in data]


def save_scenarios(scenarios: Sequence[BenchScenario], path) -> None:
    with open(path, "w") as fh:
        json.dump({"scenarios": [s.to_dict() for s in scenarios]}, fh, indent=2)
        fh.write("\n")
