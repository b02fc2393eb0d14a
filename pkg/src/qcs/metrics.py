"""Recovery and heart-rate metrics."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import UndefinedMetricError

SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(x, x_hat):
    x = np.asarray(x, dtype=np.float64).ravel()
    x_hat = np.asarray(x_hat, dtype=np.float64).ravel()
    if x.shape != x_hat.shape:
        raise UndefinedMetricError(f"length mismatch: {x.size} vs {x_hat.size}")
    return x, x_hat


def _snr_ratio(x, x_hat):
    x, x_hat = _pair(x, x_hat)
    sig = float(x @ x)
    if sig == 0:
        raise UndefinedMetricError("reference signal has zero energy")
    err = float((x_hat - x) @ (x_hat - x))
    return math.inf if err == 0 else sig / err


def rsnr(x, x_hat):
    """Reconstruction SNR in dB; ``inf`` when the reconstruction is exact."""
    ratio = _snr_ratio(x, x_hat)
    return math.inf if math.isinf(ratio) else 10.0 * math.log10(ratio)


def arsnr(pairs):
    """10*log10 of the mean linear SNR over ``(x, x_hat)`` pairs."""
    ratios = [_snr_ratio(x, xh) for x, xh in pairs]
    if not ratios:
        raise UndefinedMetricError("need at least one segment")
    if any(math.isinf(r) for r in ratios):
        warnings.warn("exact reconstruction in at least one segment; ARSNR is infinite",
                      RuntimeWarning, stacklevel=2)
        return math.inf
    return 10.0 * math.log10(float(np.mean(ratios)))


def ssim_1d(x, x_hat, window=SSIM_WINDOW):
    """Mean SSIM over length-``window`` rectangular windows with stride 1.

    The dynamic range is taken over both signals so the index is symmetric.
    Local statistics use the population (1/window) normalization.
    """
    x, x_hat = _pair(x, x_hat)
    if x.size < window:
        raise UndefinedMetricError(f"signals shorter than the window ({x.size} < {window})")
    if np.ptp(x) == 0 or np.ptp(x_hat) == 0:
        raise UndefinedMetricError("constant signal has no dynamic range")
    dyn = max(x.max(), x_hat.max()) - min(x.min(), x_hat.min())
    c1 = (SSIM_K1 * dyn) ** 2
    c2 = (SSIM_K2 * dyn) ** 2
    wx = sliding_window_view(x, window)
    wy = sliding_window_view(x_hat, window)
    mx, my = wx.mean(axis=1), wy.mean(axis=1)
    vx = ((wx - mx[:, None]) ** 2).mean(axis=1)
    vy = ((wy - my[:, None]) ** 2).mean(axis=1)
    cxy = ((wx - mx[:, None]) * (wy - my[:, None])).mean(axis=1)
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx ** 2 + my ** 2 + c1) * (vx + vy + c2)
    # den == 0 only for two all-zero windows (constants underflowed), which match
    with np.errstate(invalid="ignore", divide="ignore"):
        local = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0)
    return float(local.mean())


def _bpm_pair(est, true):
    est = np.asarray(est, dtype=np.float64).ravel()
    true = np.asarray(true, dtype=np.float64).ravel()
    if est.shape != true.shape:
        raise UndefinedMetricError(f"length mismatch: {est.size} vs {true.size}")
    keep = np.isfinite(est) & np.isfinite(true)
    if not keep.any():
        raise UndefinedMetricError("no valid heart-rate estimates")
    return est[keep], true[keep]


def error1(bpm_est, bpm_true):
    """Mean absolute heart-rate error; undefined (NaN) estimates are skipped."""
    est, true = _bpm_pair(bpm_est, bpm_true)
    return float(np.mean(np.abs(est - true)))


def sd_bpm(bpm_est, bpm_true):
    """Root-mean-square heart-rate error; undefined (NaN) estimates are skipped."""
    est, true = _bpm_pair(bpm_est, bpm_true)
    return float(np.sqrt(np.mean((est - true) ** 2)))


def _check_regression(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size < 2:
        raise UndefinedMetricError("need two equal-length inputs with at least 2 points")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise UndefinedMetricError("constant input")
    return a, b


def pearson(a, b):
    a, b = _check_regression(a, b)
    da, db = a - a.mean(), b - b.mean()
    r = float(da @ db / math.sqrt((da @ da) * (db @ db)))
    return max(-1.0, min(1.0, r))


def linear_fit(a, b):
    """Least-squares ``b ~ slope*a + intercept``; returns ``(slope, intercept, r2)``."""
    a, b = _check_regression(a, b)
    da = a - a.mean()
    slope = float(da @ (b - b.mean()) / (da @ da))
    intercept = float(b.mean() - slope * a.mean())
    return slope, intercept, pearson(a, b) ** 2


@dataclass
class RecoveryReport:
    rsnr: list = field(default_factory=list)
    ssim: list = field(default_factory=list)
    arsnr: float = float("nan")

    @property
    def segments(self):
        return len(self.rsnr)

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        return cls(rsnr=[rsnr(x, xh) for x, xh in pairs],
                   ssim=[ssim_1d(x, xh) for x, xh in pairs],
                   arsnr=arsnr(pairs))

    def to_record(self):
        return {"segments": self.segments, "arsnr": self.arsnr,
                "ssim": float(np.mean(self.ssim)) if self.ssim else float("nan")}


@dataclass
class HrReport:
    error1: float
    sd_bpm: float
    pearson: float
    slope: float
    intercept: float
    r2: float
    windows: int

    @classmethod
    def from_estimates(cls, bpm_est, bpm_true):
        """Correlation and fit fields are NaN when either track is constant."""
        est, true = _bpm_pair(bpm_est, bpm_true)
        try:
            slope, intercept, r2 = linear_fit(true, est)
            r = pearson(true, est)
        except UndefinedMetricError:
            slope = intercept = r2 = r = float("nan")
        return cls(error1(est, true), sd_bpm(est, true), r, slope, intercept, r2, int(est.size))

    def to_record(self):
        return {"error1": self.error1, "sd_bpm": self.sd_bpm, "pearson": self.pearson,
                "slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "windows": self.windows}
