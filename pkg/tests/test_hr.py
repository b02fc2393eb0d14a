import numpy as np
import pytest

from qcs import hr, signals
from qcs.errors import DataError, InvalidParameterError

FS = 31.25


def _sine(hz, seconds=60, fs=FS):
    t = np.arange(int(seconds * fs)) / fs
    return np.sin(2 * np.pi * hz * t)


def test_pure_sine():
    track = hr.estimate_bpm(_sine(2.0), FS)
    np.testing.assert_allclose(track.estimates, 120.0, atol=1.0)
    np.testing.assert_allclose(np.diff(track.window_start_s), 2.0)
    assert np.all((track.estimates >= 40) & (track.estimates <= 240))


def test_constant_rate_ppg():
    ds = signals.synth_ppg(120, FS, 150.0, 0.0, seed=2)
    rep = hr.hr_report(hr.estimate_bpm(ds.channels["ppg"], FS), *ds.bpm_true)
    assert rep.error1 < 2.0


def test_uncompressed_track_round_trips():
    ds = signals.synth_ppg(120, FS, signals.bpm_profile("ramp:90:130"), 0.0, seed=3)
    rep = hr.hr_report(hr.estimate_bpm(ds.channels["ppg"], FS), *ds.bpm_true)
    assert rep.error1 < 1.0 and rep.pearson > 0.99


def test_silent_window_is_nan():
    x = _sine(2.0, 40)
    x[: int(12 * FS)] = 0.0
    track = hr.estimate_bpm(x, FS)
    assert np.isnan(track.estimates[0])
    assert np.isfinite(track.estimates[-1])


def test_scale_invariant():
    x = _sine(1.7) + 0.3 * _sine(3.1)
    np.testing.assert_array_equal(hr.estimate_bpm(x, FS).estimates,
                                  hr.estimate_bpm(7.5 * x, FS).estimates)


def test_shift_invariant():
    fs = 32.0
    x = signals.synth_ppg(80, fs, signals.bpm_profile("ramp:70:140"), 0.2, seed=4).channels["ppg"]
    hop = int(2 * fs)
    a = hr.estimate_bpm(x, fs).estimates
    b = hr.estimate_bpm(x[3 * hop:], fs).estimates
    np.testing.assert_array_equal(a[3:3 + len(b)], b)


def test_errors():
    with pytest.raises(DataError):
        hr.estimate_bpm(np.ones(10), FS)
    with pytest.raises(InvalidParameterError):
        hr.estimate_bpm(np.ones(1000), 20.0)


def test_track_csv(tmp_path):
    track = hr.estimate_bpm(_sine(2.0, 20), FS)
    track.to_csv(tmp_path / "t.csv")
    times, bpm = signals.load_bpm_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(bpm, track.estimates)
    np.testing.assert_array_equal(times, track.window_start_s)
