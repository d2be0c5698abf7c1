"""
Command line front end.

Subcommands: ``synth``, ``analyze``, ``bench`` and ``profiles``. Stage
settings use namespaced flags (``--pipeline.fft-size``,
``--detector.eps-freq``, ...) whose defaults are those of the config
classes. With ``--json`` the machine-readable result is the only thing
written to stdout; logs always go to stderr.

Exit codes
----------
0   success (``analyze``: clean)
10  ``analyze``: emanation detected
2   usage error
3   input file missing or unreadable
4   malformed IQ data, metadata or JSON
5   invalid configuration or scenario (including unknown profiles)
1   unexpected failure
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bench import (BenchError, best_threshold, compare_report, load_scenarios, score, simulate,
                    threshold_sweep)
from .classify import AnalysisConfig, analyze
from .core import IQFormatError, load_iq, load_profiles, peaks_to_csv, save_iq
from .dsp import PipelineConfig
from .peaks import PeakConfig
from .synth import (InterfererSpec, SynthError, emanation_lines, params_from_scenario, pipeline_floor_dbm,
                    synth_scene)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_CONFIG = 5
EXIT_DETECTED = 10

log = logging.getLogger("emanatrix")


class CliError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


_PIPELINE_FLAGS = [
    ("kaiser_beta", float), ("seq_len", int), ("n_segments", int), ("segment_overlap", float),
    ("n_sequences", int), ("sequence_overlap", float), ("fft_size", int), ("calibration_offset_db", float),
]
_PEAK_FLAGS = [
    ("min_snr_db", float), ("noise_percentile", float), ("max_peaks", int), ("min_ridge_snr_db", float),
    ("min_ridge_fraction", float), ("dc_mask_bins", int),
]


def _flag(prefix, name):
    return f"--{prefix}.{name.replace('_', '-')}"


def _add_stage_flags(p: argparse.ArgumentParser):
    pipe = PipelineConfig()
    g = p.add_argument_group("pipeline")
    for name, typ in _PIPELINE_FLAGS:
        g.add_argument(_flag("pipeline", name), dest=f"pipeline__{name}", type=typ,
                       default=getattr(pipe, name), help=f"(default: {getattr(pipe, name)})")
    pk = PeakConfig()
    g = p.add_argument_group("peaks")
    g.add_argument("--peaks.min-width", dest="peaks__min_width", type=int, default=min(pk.widths_bins),
                   help=f"smallest CWT width in bins (default: {min(pk.widths_bins)})")
    g.add_argument("--peaks.max-width", dest="peaks__max_width", type=int, default=max(pk.widths_bins),
                   help=f"largest CWT width in bins (default: {max(pk.widths_bins)})")
    for name, typ in _PEAK_FLAGS:
        g.add_argument(_flag("peaks", name), dest=f"peaks__{name}", type=typ,
                       default=getattr(pk, name), help=f"(default: {getattr(pk, name)})")
    g.add_argument("--peaks.no-dc-mask", dest="peaks__no_dc_mask", action="store_true",
                   help="keep peaks at the centre (DC) bins")
    an = AnalysisConfig()
    g = p.add_argument_group("detector")
    g.add_argument("--detector.eps-freq", dest="detector__eps_freq", type=float, default=an.eps_freq,
                   help=f"(default: {an.eps_freq})")
    g.add_argument("--detector.eps-mult", dest="detector__eps_mult", type=float, default=an.eps_mult,
                   help=f"(default: {an.eps_mult})")
    g.add_argument("--detector.coarse-d-min", dest="detector__coarse_d_min", type=float, default=None,
                   help="smallest harmonic step in Hz (default: max(2 bins, bandwidth/10))")
    g.add_argument("--detector.fine-d-min", dest="detector__fine_d_min", type=float, default=None,
                   help="smallest IMP step in Hz (default: 2 bins)")
    g.add_argument("--classify.tol-rel", dest="classify__tol_rel", type=float, default=an.tol_rel,
                   help=f"fingerprint tolerance (default: {an.tol_rel})")


def _analysis_config(a) -> AnalysisConfig:
    try:
        pipe = PipelineConfig(**{n: getattr(a, f"pipeline__{n}") for n, _ in _PIPELINE_FLAGS})
        pk = PeakConfig(widths_bins=tuple(range(a.peaks__min_width, a.peaks__max_width + 1)),
                        mask_dc=not a.peaks__no_dc_mask,
                        **{n: getattr(a, f"peaks__{n}") for n, _ in _PEAK_FLAGS})
        return AnalysisConfig(pipe, pk, a.detector__eps_freq, a.detector__eps_mult,
                              a.detector__coarse_d_min, a.detector__fine_d_min, a.classify__tol_rel)
    except ValueError as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_CONFIG) from None


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"{path}: no such file", EXIT_IO) from None
    except OSError as exc:
        raise CliError(f"{path}: {exc}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})", EXIT_FORMAT) from None


def _emit(a, payload: dict, text: str):
    if a.json:
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    else:
        sys.stdout.write(text.rstrip("\n") + "\n")


def cmd_synth(a) -> int:
    if a.scenario:
        doc = _read_json(a.scenario)
    elif a.device:
        doc = {"device": a.device}
    else:
        raise CliError("synth needs --device or --scenario", EXIT_USAGE)
    for key, val in (("snr_db", a.snr), ("seed", a.seed), ("n_harmonics", a.n_harmonics),
                     ("n_sidebands", a.n_sidebands), ("harmonic_decay", a.harmonic_decay),
                     ("sample_rate_hz", a.rate), ("center_freq_hz", a.center), ("noise_dbm", a.noise_dbm),
                     ("duration_s", a.duration)):
        if val is not None:
            doc[key] = val
    if a.missing:
        doc["missing_harmonics"] = a.missing
    try:
        params, intf, rate, center, noise = params_from_scenario(doc, load_profiles())
        if a.dc_offset is not None:
            intf.append(InterfererSpec("dc_offset", a.dc_offset))
        if a.lte:
            intf.append(InterfererSpec("lte_block", a.lte[2], a.lte[0], a.lte[1]))
        seed = int(doc.get("seed", 0))
        rec = synth_scene(params, intf, rate, center, noise, seed=seed + 1)
    except KeyError as exc:
        raise CliError(str(exc.args[0]), EXIT_CONFIG) from None
    except (SynthError, ValueError) as exc:
        raise CliError(f"invalid scenario: {exc}", EXIT_CONFIG) from None
    out = Path(a.out)
    try:
        save_iq(rec, out)
    except OSError as exc:
        raise CliError(f"{out}: {exc}", EXIT_IO) from None
    lines = emanation_lines(params) if params is not None else []
    payload = {
        "path": str(out), "meta_path": str(out) + ".json", "label": rec.label, "n_samples": len(rec),
        "sample_rate_hz": rate, "center_freq_hz": center, "noise_dbm": noise,
        "expected_floor_dbm": pipeline_floor_dbm(noise),
        "snr_db": params.peak_snr_db if params is not None else None,
        "tones_hz": [f for f, _, _, _ in lines],
        "interferers": [i.to_dict() for i in intf],
    }
    text = (f"wrote {out} ({len(rec)} samples, label {rec.label!r}, rate {rate:g} Hz, center {center:g} Hz)\n"
            f"{len(lines)} emanation tones placed"
            + (f", strongest at {params.peak_snr_db:g} dB over the floor" if params is not None else "")
            + f"; {len(intf)} interferers")
    _emit(a, payload, text)
    return EXIT_OK


def cmd_analyze(a) -> int:
    cfg = _analysis_config(a)
    try:
        rec = load_iq(a.input, a.meta)
    except FileNotFoundError as exc:
        raise CliError(f"{exc.filename}: no such file", EXIT_IO) from None
    except IQFormatError as exc:
        raise CliError(str(exc), EXIT_FORMAT) from None
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    try:
        report, spec, peaks = analyze(rec, cfg, load_profiles())
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    try:
        if a.emit_spectrum:
            spec.to_csv(a.emit_spectrum)
        if a.emit_peaks:
            peaks_to_csv(peaks, a.emit_peaks)
        if a.out:
            Path(a.out).write_text(report.to_json(indent=2) + "\n")
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    rows = [f"verdict: {report.verdict}"]
    for gid, g in enumerate(report.groups):
        rows.append(f"  group {gid}: {g.kind} step {g.step_hz:.6g} Hz, {len(g.member_indices)} members")
    for gid, names, s in report.fingerprint_candidates:
        rows.append(f"  group {gid} candidates: {', '.join(sorted(names)) or 'unidentified'} (score {s:.2f})")
    _emit(a, report.to_dict(), "\n".join(rows))
    return EXIT_DETECTED if report.detected else EXIT_OK


def cmd_bench(a) -> int:
    cfg = _analysis_config(a)
    if a.scenarios is not None and not os.path.exists(a.scenarios):
        raise CliError(f"{a.scenarios}: no such file", EXIT_IO)
    try:
        scenarios = load_scenarios(a.scenarios)
    except BenchError as exc:
        raise CliError(str(exc), EXIT_FORMAT) from None
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    try:
        records = simulate(scenarios, cfg, load_profiles(),
                           progress=(lambda r: log.debug("%s snr=%g trial=%d detected=%s", r.scenario,
                                                         r.snr_db, r.trial, r.harmonic_detected)))
    except KeyError as exc:
        raise CliError(str(exc.args[0]), EXIT_CONFIG) from None
    except ValueError as exc:
        raise CliError(f"invalid scenario: {exc}", EXIT_CONFIG) from None

    results = [score(records, "harmonic")]
    thresholds = a.threshold if a.threshold else list(np.arange(a.sweep[0], a.sweep[1] + 1e-9, a.sweep[2]))
    if a.detector == "threshold":
        results += [score(records, t) for t in (a.threshold or [])]
        results.append(best_threshold(records, thresholds))
    elif a.detector == "harmonic" and a.threshold:
        raise CliError("--threshold needs --detector threshold", EXIT_USAGE)
    cmp = compare_report(results)
    sweep = threshold_sweep(records, thresholds)

    out_dir = Path(a.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "bench_compare.csv").write_text(cmp["csv"])
        (out_dir / "threshold_sweep.csv").write_text(sweep.to_csv())
        payload = {"comparison": cmp["json"], "threshold_sweep": sweep.to_dict(),
                   "trials": [vars(r) for r in records]}
        (out_dir / "bench.json").write_text(json.dumps(payload, indent=2) + "\n")
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    text = [f"{len(records)} trials; results in {out_dir}"]
    text += [f"{r.detector}: accuracy {r.accuracy:.4f} {r.confusion}" for r in results]
    text.append(cmp["csv"])
    summary = {"n_trials": len(records), "out_dir": str(out_dir),
               "results": [r.to_dict() for r in results]}
    _emit(a, summary, "\n".join(text))
    return EXIT_OK


def cmd_profiles(a) -> int:
    try:
        profiles = load_profiles()
    except FileNotFoundError as exc:
        raise CliError(f"{exc.filename}: no such file", EXIT_IO) from None
    except (json.JSONDecodeError, ValueError) as exc:
        raise CliError(f"invalid profile file: {exc}", EXIT_FORMAT) from None
    rows = [f"{'name':10s} {'fundamental_hz':>16s} {'imp_step_hz':>14s}"]
    for p in profiles:
        imp = "-" if p.imp_step_hz is None else f"{p.imp_step_hz:.6g}"
        rows.append(f"{p.name:10s} {p.fundamental_hz:16.6g} {imp:>14s}")
    _emit(a, {"profiles": [p.to_dict() for p in profiles]}, "\n".join(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")

    p = argparse.ArgumentParser(prog="emanatrix", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic IQ recording")
    s.add_argument("--device", help="profile name, or 'background'")
    s.add_argument("--scenario", help="scenario JSON file")
    s.add_argument("--out", required=True, help="IQ output path (metadata goes to OUT.json)")
    s.add_argument("--snr", type=float, help="peak SNR of the strongest line in dB (default: 10)")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-harmonics", type=int)
    s.add_argument("--n-sidebands", type=int)
    s.add_argument("--harmonic-decay", type=float)
    s.add_argument("--missing", type=int, nargs="+", help="harmonic orders to leave out")
    s.add_argument("--rate", type=float, help="sample rate in Hz (default: fits the profile)")
    s.add_argument("--center", type=float, help="center frequency in Hz")
    s.add_argument("--noise-dbm", type=float)
    s.add_argument("--duration", type=float, help="seconds (default: what the pipeline needs)")
    s.add_argument("--dc-offset", type=float, metavar="DBM", help="add a DC offset of this power")
    s.add_argument("--lte", type=float, nargs=3, metavar=("START_HZ", "STOP_HZ", "DBM"),
                   help="add a band-limited interferer")
    s.set_defaults(func=cmd_synth)

    an = sub.add_parser("analyze", parents=[common], help="detect emanation in an IQ recording")
    an.add_argument("input", help="IQ file")
    an.add_argument("--meta", help="metadata JSON (default: INPUT.json)")
    an.add_argument("--out", help="also write the report JSON here")
    an.add_argument("--emit-spectrum", metavar="CSV")
    an.add_argument("--emit-peaks", metavar="CSV")
    _add_stage_flags(an)
    an.set_defaults(func=cmd_analyze)

    b = sub.add_parser("bench", parents=[common], help="run a benchmark corpus")
    b.add_argument("scenarios", nargs="?", help="scenario JSON (default: bundled corpus)")
    b.add_argument("--detector", choices=["harmonic", "threshold"], default="harmonic",
                   help="'threshold' adds threshold-detector rows next to the harmonic ones")
    b.add_argument("--threshold", type=float, action="append", metavar="DBM",
                   help="threshold setting to score (repeatable)")
    b.add_argument("--sweep", type=float, nargs=3, default=(-90.0, -20.0, 1.0),
                   metavar=("LO", "HI", "STEP"), help="threshold sweep range in dBm (default: -90 -20 1)")
    b.add_argument("--out-dir", default="bench_out")
    _add_stage_flags(b)
    b.set_defaults(func=cmd_bench)

    pr = sub.add_parser("profiles", parents=[common], help="list device fingerprints")
    pr.set_defaults(func=cmd_profiles)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(message)s",
                        level=logging.WARNING - 10 * min(a.verbose, 2))
    try:
        return a.func(a)
    except CliError as exc:
        print(f"emanatrix: error: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # noqa: BLE001
        log.debug("unexpected failure", exc_info=True)
        print(f"emanatrix: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
