"""Synthetic datasets, segmentation and CSV I/O."""
from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidParameterError

log = logging.getLogger(__name__)

HARMONICS = (1.0, 0.4, 0.15)
ARTIFACT_BAND = (0.1, 3.0)
NOISE_SNR_DB = 30.0


@dataclass
class Dataset:
    """Equal-length named channels sampled at ``sample_rate`` Hz.

    ``bpm_true`` is an optional ``(time_s, bpm)`` pair of arrays.
    """

    channels: dict
    sample_rate: float
    input_bit_depth: int = 12
    bpm_true: tuple | None = None

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        self.channels = {k: np.asarray(v, dtype=np.float64) for k, v in self.channels.items()}
        lengths = {v.shape[0] for v in self.channels.values()}
        if len(lengths) > 1:
            raise DataError(f"channels have different lengths: {sorted(lengths)}")

    def __len__(self):
        return next(iter(self.channels.values())).shape[0] if self.channels else 0

    @property
    def names(self):
        return list(self.channels)


@dataclass
class SegmentStream:
    """Non-overlapping unit-norm segments of one channel.

    Dead (all-zero) segments keep a zero row and a zero norm.
    """

    segments: np.ndarray
    norms: np.ndarray
    n: int
    channel: str = ""
    length: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.segments.shape[0]

    @property
    def alive(self):
        return self.norms > 0


def segment_and_normalize(channel, n, name=""):
    x = np.asarray(channel, dtype=np.float64).ravel()
    if n < 1 or x.size < n:
        raise DataError(f"channel of length {x.size} is shorter than one segment ({n})")
    count = x.size // n
    segs = x[: count * n].reshape(count, n).copy()
    norms = np.linalg.norm(segs, axis=1)
    dead = norms == 0
    if dead.any():
        log.warning("channel %r: %d zero-norm segment(s) skipped", name, int(dead.sum()))
    segs[~dead] /= norms[~dead, None]
    return SegmentStream(segs, norms, n, channel=name, length=x.size)


def denormalize(stream):
    return (stream.segments * stream.norms[:, None]).ravel()


def decimate(channel, factor):
    """Keep every ``factor``-th sample, without an anti-alias filter."""
    if int(factor) != factor or factor < 1:
        raise InvalidParameterError(f"decimation factor must be a positive integer, got {factor}")
    return np.asarray(channel)[:: int(factor)].copy()


def synth_ar1(r, n, count, seed=0):
    """``count`` independent stationary AR(1) paths of length ``n``, unit-normalized."""
    if not abs(r) < 1:
        raise InvalidParameterError(f"AR(1) coefficient must satisfy |r| < 1, got {r}")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((count, n))
    x = np.empty((count, n))
    x[:, 0] = w[:, 0]
    innov = np.sqrt(1.0 - r * r)
    for t in range(1, n):
        x[:, t] = r * x[:, t - 1] + innov * w[:, t]
    norms = np.linalg.norm(x, axis=1)
    return SegmentStream(x / norms[:, None], norms, n, channel="ar1", length=count * n)


def bpm_profile(spec):
    """Parse ``const:<bpm>`` or ``ramp:<start>:<end>`` into ``f(t, duration) -> bpm``."""
    parts = spec.split(":")
    try:
        if parts[0] == "const" and len(parts) == 2:
            value = float(parts[1])
            return lambda t, duration: np.full_like(np.asarray(t, dtype=float), value)
        if parts[0] == "ramp" and len(parts) == 3:
            start, end = float(parts[1]), float(parts[2])
            return lambda t, duration: start + (end - start) * np.asarray(t, dtype=float) / duration
    except ValueError:
        pass
    raise InvalidParameterError(f"bad BPM profile {spec!r}; use const:<bpm> or ramp:<a>:<b>")


def _band_noise(rng, size, fs, band):
    spec = np.fft.rfft(rng.standard_normal(size))
    freqs = np.fft.rfftfreq(size, 1.0 / fs)
    spec[(freqs < band[0]) | (freqs > band[1])] = 0
    out = np.fft.irfft(spec, size)
    return out / out.std()


def synth_ppg(duration_s, fs, bpm_track, artifact_level=0.0, seed=0, input_bit_depth=12,
              track_step_s=0.5):
    """Synthetic wrist PPG plus three accelerometer axes.

    ``bpm_track`` is a callable ``f(t, duration) -> bpm`` (see ``bpm_profile``)
    or a constant.  The pulse is a three-harmonic waveform whose phase
    integrates the instantaneous rate; motion is band-limited noise that
    leaks into the PPG at ``artifact_level`` times its RMS.
    """
    if fs < 25:
        raise InvalidParameterError(f"sample rate must be at least 25 Hz, got {fs}")
    if not callable(bpm_track):
        value = float(bpm_track)
        bpm_track = lambda t, duration: np.full_like(np.asarray(t, dtype=float), value)  # noqa: E731
    rng = np.random.default_rng(seed)
    size = int(round(duration_s * fs))
    t = np.arange(size) / fs
    bpm = bpm_track(t, duration_s)
    if np.any(bpm < 40) or np.any(bpm > 240):
        raise InvalidParameterError("BPM track must stay within [40, 240]")

    phase = 2 * np.pi * np.concatenate([[0.0], np.cumsum(0.5 * (bpm[1:] + bpm[:-1]) / 60.0) / fs])
    offsets = rng.uniform(0, 2 * np.pi, len(HARMONICS))
    clean = sum(a * np.sin(h * phase + p)
                for h, (a, p) in enumerate(zip(HARMONICS, offsets), start=1))

    motion = np.stack([_band_noise(rng, size, fs, ARTIFACT_BAND) for _ in range(3)])
    ppg = clean + artifact_level * clean.std() * motion[0]
    noise_std = ppg.std() * 10 ** (-NOISE_SNR_DB / 20)
    ppg = ppg + noise_std * rng.standard_normal(size)

    mix = np.array([[1.0, 0.0, 0.0], [0.6, 0.8, 0.0], [0.3, 0.0, 0.95]])
    acc = mix @ motion + 0.05 * rng.standard_normal((3, size))

    track_t = np.arange(0.0, duration_s + 1e-9, track_step_s)
    channels = {"ppg": ppg, "ax": acc[0], "ay": acc[1], "az": acc[2]}
    return Dataset(channels, fs, input_bit_depth, (track_t, bpm_track(track_t, duration_s)))


# ---------------------------------------------------------------------------
# CSV

_HEADER_RE = re.compile(r"^#\s*fs=(\S+)\s+bi=(\d+)\s*$")


def _fmt(v):
    return repr(float(v))


def bpm_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".bpm.csv")


def save_csv(dataset, path):
    """Write ``path`` and, if present, the BPM track next to it as ``<stem>.bpm.csv``."""
    path = Path(path)
    buf = io.StringIO()
    buf.write(f"# fs={_fmt(dataset.sample_rate)} bi={int(dataset.input_bit_depth)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(dataset.names)
    cols = [dataset.channels[k] for k in dataset.names]
    for row in zip(*cols):
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())
    if dataset.bpm_true is not None:
        save_bpm_csv(*dataset.bpm_true, bpm_path(path))


def save_bpm_csv(times, bpm, path, header=("time_s", "bpm")):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for t, b in zip(times, bpm):
        writer.writerow([_fmt(t), _fmt(b)])
    Path(path).write_text(buf.getvalue())


def load_bpm_csv(path):
    rows = _read_numeric(Path(path).read_text().splitlines()[1:], 2, path, first_line=2)
    return rows[:, 0].copy(), rows[:, 1].copy()


def _read_numeric(lines, width, path, first_line):
    out = []
    for lineno, line in enumerate(lines, start=first_line):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != width:
            raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(fields)}")
        try:
            out.append([float(f) for f in fields])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return np.array(out, dtype=np.float64).reshape(-1, width)


def load_csv(path):
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(lines) < 2:
        raise DataError(f"{path}: missing header lines")
    match = _HEADER_RE.match(lines[0])
    if not match:
        raise DataError(f"{path}:1: expected '# fs=<Hz> bi=<bits>'")
    names = [n.strip() for n in lines[1].split(",")]
    if not all(names):
        raise DataError(f"{path}:2: empty channel name")
    data = _read_numeric(lines[2:], len(names), path, first_line=3)
    bpm = None
    if bpm_path(path).exists():
        bpm = load_bpm_csv(bpm_path(path))
    return Dataset({n: data[:, i].copy() for i, n in enumerate(names)},
                   float(match.group(1)), int(match.group(2)), bpm)
