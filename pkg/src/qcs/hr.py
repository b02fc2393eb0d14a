"""Sliding-window spectral heart-rate estimator.

A deliberately small stand-in for a full motion-robust tracker: each
window is mean-removed, zero-padded, and the largest spectral peak inside
the physiological band is reported.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidParameterError
from .metrics import HrReport
from .signals import save_bpm_csv

BPM_MIN = 40.0
BPM_MAX = 240.0
MIN_FFT = 4096


@dataclass
class HrTrack:
    estimates: np.ndarray
    window_start_s: np.ndarray
    window_s: float
    step_s: float

    def __len__(self):
        return len(self.estimates)

    @property
    def window_center_s(self):
        return self.window_start_s + 0.5 * self.window_s

    def to_csv(self, path):
        save_bpm_csv(self.window_start_s, self.estimates, Path(path))


def estimate_bpm(ppg, fs, window_s=8.0, step_s=2.0):
    """Per-window BPM; silent windows give NaN."""
    if fs < 25:
        raise InvalidParameterError(f"sample rate must be at least 25 Hz, got {fs}")
    x = np.asarray(ppg, dtype=np.float64).ravel()
    width = int(round(window_s * fs))
    hop = step_s * fs
    if x.size < width:
        raise DataError(f"signal has {x.size} samples, one window needs {width}")
    count = int((x.size - width) // hop) + 1
    nfft = max(MIN_FFT, 1 << (width - 1).bit_length())
    freqs = np.fft.rfftfreq(nfft, 1.0 / fs)
    band = np.flatnonzero((freqs >= BPM_MIN / 60) & (freqs <= BPM_MAX / 60))

    est = np.full(count, np.nan)
    starts = np.arange(count) * step_s
    prev = np.nan
    for i in range(count):
        lo = int(round(i * hop))
        seg = x[lo: lo + width]
        seg = seg - seg.mean()
        if not np.any(np.abs(seg) > 1e-12 * max(1.0, np.abs(x).max())):
            continue
        mag = np.abs(np.fft.rfft(seg, nfft))[band]
        peaks = np.flatnonzero(mag >= mag.max() * (1 - 1e-12))
        if peaks.size > 1 and np.isfinite(prev):
            pick = peaks[np.argmin(np.abs(freqs[band[peaks]] * 60 - prev))]
        else:
            pick = peaks[0]
        est[i] = prev = freqs[band[pick]] * 60.0
    return HrTrack(est, starts, window_s, step_s)


def reference_bpm(times, bpm, track):
    """Ground-truth BPM averaged over each window of ``track``."""
    times = np.asarray(times, dtype=np.float64)
    bpm = np.asarray(bpm, dtype=np.float64)
    out = np.empty(len(track))
    for i, start in enumerate(track.window_start_s):
        grid = np.linspace(start, start + track.window_s, 33)
        out[i] = np.interp(grid, times, bpm).mean()
    return out


def hr_report(track, times, bpm):
    return HrReport.from_estimates(track.estimates, reference_bpm(times, bpm, track))
