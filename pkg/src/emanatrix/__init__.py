"""Detection of unintended electromagnetic emanation from harmonic patterns in RF spectra."""

from .core import (DEFAULT_SAMPLE_RATE_HZ, DetectionReport, DeviceProfile, EmanatrixError, IQFormatError,
                   IQRecording, Peak, PowerSpectrum, builtin_profiles, find_profile, load_iq, load_profiles,
                   peaks_to_csv, save_iq)
from .dsp import (PipelineConfig, average_spectra, direct_fft_spectrum, kaiser_window, noise_floor_dbm,
                  process_pipeline, relative_sidelobe_db, welch_psd)
from .peaks import PeakConfig, cwt_ricker, detect_peaks
from .harmonics import (DetectorConfig, DifferenceMatrix, HarmonicGroup, build_difference_matrix,
                        custom_quicksort, detect, detect_two_pass, find_harmonics, fix_freq_var, is_multiple)
from .synth import (InterfererSpec, SynthError, SynthParams, default_capture, mix, synth_background,
                    synth_emanation, synth_scene)
from .classify import (AnalysisConfig, FingerprintMatch, analyze, analyze_spectrum, decide,
                       match_fingerprint, threshold_detect)
from .bench import BenchResult, BenchScenario, compare_report, run_corpus

__version__ = "0.1.0"
