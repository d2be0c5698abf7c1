import math

import numpy as np
import pytest

from emanatrix.core import DeviceProfile, find_profile
from emanatrix.dsp import PipelineConfig, noise_floor_dbm, process_pipeline
from emanatrix.peaks import detect_peaks
from emanatrix.synth import (InterfererSpec, SynthError, SynthParams, default_capture, default_lte_block,
                             default_n_sidebands, emanation_lines, free_space_gain_db, mix, noise_statistics,
                             params_from_scenario, pipeline_floor_dbm, snr_to_distance_m, synth_background,
                             synth_emanation, synth_scene)

ARDUINO = find_profile("Arduino")
ZIGBEE = find_profile("ZigBee")


def _line_db(spec, f):
    return spec.power_dbm[spec.bin_of(f)]


def test_params_validation():
    with pytest.raises(SynthError):
        SynthParams(ARDUINO, n_harmonics=0)
    with pytest.raises(SynthError):
        SynthParams(ARDUINO, harmonic_decay=0.0)
    with pytest.raises(SynthError):
        SynthParams(ARDUINO, n_harmonics=2, missing_harmonics={1, 2})
    with pytest.raises(SynthError):
        SynthParams(ARDUINO, duration_s=-1.0)
    # a profile without an IMP step draws no sidebands
    assert SynthParams(ARDUINO, n_sidebands=3).n_sidebands == 0
    assert SynthParams(ZIGBEE, n_sidebands=3).n_sidebands == 3


def test_emanation_lines_layout():
    p = SynthParams(ZIGBEE, n_harmonics=2, n_sidebands=1, harmonic_decay=0.5)
    lines = {(h, k): (f, a) for f, a, h, k in emanation_lines(p)}
    assert lines[(1, 0)] == (24e6, 1.0)
    assert lines[(2, 0)] == (48e6, 0.5)
    assert lines[(2, 1)] == (51e6, 0.25)
    assert lines[(2, -1)] == (45e6, 0.25)
    assert len(lines) == 6


def test_default_capture_keeps_harmonics_off_dc():
    rate, center = default_capture(ARDUINO, 5)
    for h in range(1, 6):
        off = h * 16e6 - center
        assert -rate / 2 < off < rate / 2
        assert abs(off) > 0.2 * 16e6


def test_default_n_sidebands():
    rate, _ = default_capture(find_profile("USB"))
    assert default_n_sidebands(find_profile("USB"), rate) == 0
    assert default_n_sidebands(ZIGBEE, default_capture(ZIGBEE)[0]) == 3
    assert default_n_sidebands(ARDUINO, 1e8) == 0


def test_noise_statistics_relation():
    floor, mean = noise_statistics()
    # the 10th percentile sits a little under the mean of a 72-average estimate
    assert -1.3 < floor - mean < -0.6
    assert pipeline_floor_dbm(-20.0) == pytest.approx(-20.0 + floor)


@pytest.mark.parametrize("snr", [3.0, 10.0, 25.0])
def test_calibrated_snr(snr):
    p = SynthParams(ARDUINO, peak_snr_db=snr, seed=4)
    rec = synth_emanation(p)
    spec = process_pipeline(rec)
    measured = _line_db(spec, 16e6) - noise_floor_dbm(spec)
    assert measured == pytest.approx(snr, abs=1.0)


def test_harmonics_at_expected_bins_and_missing_is_absent():
    p = SynthParams(ZIGBEE, peak_snr_db=25.0, missing_harmonics={4}, seed=2)
    spec = process_pipeline(synth_emanation(p))
    floor = noise_floor_dbm(spec)
    for h in (1, 2, 3, 5):
        assert _line_db(spec, h * 24e6) - floor > 10
    assert _line_db(spec, 4 * 24e6) - floor < 5
    # first IMP pair of the fundamental, half amplitude (-6 dB)
    for k in (-1, 1):
        assert _line_db(spec, 24e6 + k * 3e6) == pytest.approx(_line_db(spec, 24e6) - 6.0, abs=1.0)


def test_deterministic_under_seed():
    p = SynthParams(ARDUINO, seed=11)
    a, b = synth_emanation(p), synth_emanation(p)
    assert a.same_as(b)
    assert not synth_emanation(p.with_(seed=12)).same_as(a)


def test_length_and_duration():
    p = SynthParams(ARDUINO)
    assert len(synth_emanation(p)) == PipelineConfig().required_samples
    rate, _ = default_capture(ARDUINO)
    assert len(synth_emanation(p.with_(duration_s=0.001))) == round(0.001 * rate)


def test_out_of_band_and_unrealizable():
    with pytest.raises(SynthError, match="outside"):
        synth_emanation(SynthParams(ARDUINO, n_harmonics=5), rate_hz=40e6, center_hz=20e6)
    with pytest.raises(SynthError, match="below the mean noise"):
        synth_emanation(SynthParams(ARDUINO, peak_snr_db=0.5))
    with pytest.raises(SynthError):
        InterfererSpec("lte_block", -20.0, 2e6, 1e6)
    with pytest.raises(SynthError):
        InterfererSpec("jammer", -20.0)


@pytest.mark.slow
def test_noise_only_is_flat_and_peak_free():
    rate, center = default_capture(ARDUINO)
    clean = 0
    for seed in range(100):
        spec = process_pipeline(synth_background([], -20.0, rate, center, seed=seed))
        clean += not detect_peaks(spec)
    assert clean >= 95


def test_background_interferers():
    rate, center = default_capture(ARDUINO)
    lo, hi = default_lte_block(ARDUINO)
    floor = pipeline_floor_dbm(-20.0)
    intf = [InterfererSpec("lte_block", -10.0, lo, hi), InterfererSpec("dc_offset", floor + 25)]
    spec = process_pipeline(synth_background(intf, -20.0, rate, center, seed=1))
    mid = (lo + hi) / 2
    assert _line_db(spec, mid) - noise_floor_dbm(spec) > 10
    c = len(spec) // 2
    assert spec.power_dbm[c] - noise_floor_dbm(spec) == pytest.approx(25.0, abs=1.5)


def test_tone_interferer_power():
    rate, center = default_capture(ARDUINO)
    f = center + 1.234e6
    spec = process_pipeline(synth_background([InterfererSpec("tone", -30.0, freq_hz=f)], None, rate, center))
    assert spec.power_dbm.max() == pytest.approx(-30.0, abs=0.1)


def test_interferer_dict_roundtrip():
    s = InterfererSpec("lte_block", -12.5, 1e6, 2e6)
    assert InterfererSpec.from_dict(s.to_dict()) == s
    with pytest.raises(SynthError):
        InterfererSpec.from_dict({"kind": "tone"})


def test_scene_equals_mixed_parts():
    rate, center = 150e6, 70e6
    pa = SynthParams(ARDUINO, peak_snr_db=20, seed=1)
    a = synth_scene(pa, [], rate, center, seed=5)
    spec = process_pipeline(a)
    assert _line_db(spec, 16e6) - noise_floor_dbm(spec) == pytest.approx(20, abs=1.0)
    b = synth_emanation(SynthParams(ZIGBEE, peak_snr_db=20, seed=2), rate, center)
    m = mix([a, b], [0.0, -math.inf])
    assert np.array_equal(m.samples, a.samples)
    with pytest.raises(ValueError):
        mix([a, synth_emanation(pa)], [0.0, 0.0])
    with pytest.raises(ValueError):
        mix([], [])


def test_free_space_helpers():
    assert free_space_gain_db(2.0) == pytest.approx(-6.0206, abs=1e-4)
    assert snr_to_distance_m(10.0, 30.0) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        free_space_gain_db(0.0)


def test_params_from_scenario():
    params, intf, rate, center, noise = params_from_scenario(
        {"device": "zigbee", "snr_db": 12, "seed": 3,
         "interferers": [{"kind": "dc_offset", "power_dbm": -40}]})
    assert params.profile.name == "ZigBee" and params.peak_snr_db == 12 and params.seed == 3
    assert (rate, center) == default_capture(ZIGBEE)
    assert intf[0].kind == "dc_offset"
    assert noise == -20.0
    p2, _, _, _, _ = params_from_scenario({"profile": {"name": "Toy", "fundamental_hz": 5e6}})
    assert p2.profile == DeviceProfile("Toy", 5e6)
    bg = params_from_scenario({"device": "background", "sample_rate_hz": 1e6, "center_freq_hz": 0})
    assert bg[0] is None
    with pytest.raises(SynthError):
        params_from_scenario({"device": "background"})
    with pytest.raises(KeyError):
        params_from_scenario({"device": "nosuch"})
