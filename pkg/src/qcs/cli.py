"""Command-line entry point: synth, compress, recover, metrics, sweep."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import bdq, hr, metrics, quantizer, sensing, signals
from .errors import (CorruptPayloadError, DataError, GenerationFailureError, InvalidConfigError,
                     InvalidParameterError, QcsError, UndefinedMetricError)

log = logging.getLogger("qcs")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2
ALGOS = ("bdq", "bdq-blind")
SIDECAR = "sidecar.json"
SIDE_SCALAR_BITS = 64


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 128
    m: tuple = (64,)
    b: tuple = (2,)
    bi: int = 12
    vref_frac: float = 0.70
    seed: int = 0
    algo: tuple = ("bdq",)
    lam: float = 1e-3
    max_iter: int = 128
    tol: float = 1e-8
    per_segment_matrix: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.n < 2:
            raise InvalidConfigError(f"n must be at least 2, got {self.n}")
        if not self.m or any(not 2 <= m < self.n for m in self.m):
            raise InvalidConfigError(f"every m must satisfy 2 <= m < n={self.n}, got {list(self.m)}")
        if not self.b or any(not quantizer.MIN_BITS <= b <= min(self.bi, quantizer.MAX_BITS)
                             for b in self.b):
            raise InvalidConfigError(
                f"every b must lie in [{quantizer.MIN_BITS}, min(bi, {quantizer.MAX_BITS})], "
                f"got {list(self.b)} with bi={self.bi}")
        if not 0 < self.vref_frac <= 1:
            raise InvalidConfigError(f"vref-frac must lie in (0, 1], got {self.vref_frac}")
        if any(a not in ALGOS for a in self.algo):
            raise InvalidConfigError(f"algo must be one of {ALGOS}, got {list(self.algo)}")
        if self.workers < 1:
            raise InvalidConfigError(f"workers must be at least 1, got {self.workers}")
        # validates lam/max_iter/tol
        self.bdq_options(1.0, None)

    def bdq_options(self, delta, v_ref):
        return bdq.BdqOptions(delta=delta, lam=self.lam, max_iter=self.max_iter, tol=self.tol,
                              v_ref=v_ref)


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class CompressedChannel:
    name: str
    payloads: list          # None for dead segments
    norms: np.ndarray
    v_refs: np.ndarray
    length: int


def matrix_seed(seed, index, per_segment):
    return sensing.segment_seed(seed, index) if per_segment else int(seed)


class MatrixCache:
    def __init__(self):
        self._cache = {}

    def get(self, m, n, seed):
        key = (m, n, seed)
        if key not in self._cache:
            self._cache[key] = sensing.generate_matrix(m, n, seed)
        return self._cache[key]


def compress_channel(x, name, n, m, bits, bi, vref_frac, seed, per_segment=False, cache=None):
    """Normalize, sense and quantize one channel, one payload per live segment."""
    cache = cache or MatrixCache()
    stream = signals.segment_and_normalize(x, n, name)
    payloads, v_refs = [], np.zeros(len(stream))
    for i, seg in enumerate(stream.segments):
        if stream.norms[i] == 0:
            payloads.append(None)
            continue
        mseed = matrix_seed(seed, i, per_segment)
        y = cache.get(m, n, mseed).matvec(seg)
        v_refs[i] = vref_frac * np.abs(y).max()
        cfg = quantizer.QuantizerConfig(float(v_refs[i]), bits)
        payloads.append(quantizer.quantize(y, cfg, n=n, input_bit_depth=bi, matrix_seed=mseed,
                                           segment_index=i))
    return CompressedChannel(name, payloads, stream.norms, v_refs, stream.length)


def recover_payload(payload, algo, lam=1e-3, max_iter=128, tol=1e-8, cache=None):
    """Recover one unit-norm segment using only the payload."""
    cache = cache or MatrixCache()
    phi = cache.get(payload.m, payload.n, payload.matrix_seed)
    cfg = payload.config
    opts = bdq.BdqOptions(delta=cfg.cell_width, lam=lam, max_iter=max_iter, tol=tol,
                          v_ref=cfg.v_ref)
    fn = bdq.recover if algo == "bdq" else bdq.recover_blind
    return fn(quantizer.dequantize(payload), phi, opts)


_WORKER_CACHE = MatrixCache()


def _recover_task(task):
    blob, algo, lam, max_iter, tol = task
    payload = quantizer.QuantizedPayload.from_bytes(blob)
    try:
        res = recover_payload(payload, algo, lam, max_iter, tol, _WORKER_CACHE)
    except QcsError as exc:
        return None, {"error": f"{type(exc).__name__}: {exc}"}
    return res.x_hat, res.diagnostics.to_dict()


def _pmap(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def recover_channel(channel, algo, lam=1e-3, max_iter=128, tol=1e-8, workers=1):
    """Returns ``(unit-norm segments, per-segment diagnostics)`` in segment order."""
    n = next((p.n for p in channel.payloads if p is not None), 0)
    tasks = [(p.to_bytes(), algo, lam, max_iter, tol) for p in channel.payloads if p is not None]
    results = iter(_pmap(_recover_task, tasks, workers))
    segs = np.zeros((len(channel.payloads), n))
    diags = []
    for i, p in enumerate(channel.payloads):
        if p is None:
            diags.append({"skipped": "zero-norm segment"})
            continue
        x_hat, diag = next(results)
        if x_hat is not None:
            segs[i] = x_hat
        diags.append(diag)
    return segs, diags


def channel_budget(m, n, bits, bi, segments):
    body = (m * bits + 7) // 8
    return {
        "cr": sensing.compression_ratio(m, n),
        "cr_b": sensing.bit_compression_ratio(m, n, bits, bi),
        "mb_bits": m * bits,
        "body_bytes": body,
        "payload_bytes": quantizer.HEADER_SIZE + body,
        "side_bits_per_segment": 2 * SIDE_SCALAR_BITS,
        "segments": segments,
    }


def recovery_report(x_segments, xhat_segments, norms):
    alive = norms > 0
    return metrics.RecoveryReport.from_pairs(
        zip(x_segments[alive], xhat_segments[alive]))


# ---------------------------------------------------------------------------
# I/O helpers


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _payload_name(index):
    return f"seg_{index:05d}.qcs"


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, cfg):
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == "ppg":
        track = signals.bpm_profile(args.bpm_profile)
        ds = signals.synth_ppg(args.duration, args.fs, track, args.artifact, seed=cfg.seed,
                               input_bit_depth=cfg.bi)
        if args.decimate > 1:
            ds = signals.Dataset({k: signals.decimate(v, args.decimate) for k, v in ds.channels.items()},
                                 ds.sample_rate / args.decimate, ds.input_bit_depth, ds.bpm_true)
    else:
        stream = signals.synth_ar1(args.r, cfg.n, args.segments, seed=cfg.seed)
        ds = signals.Dataset({"ar1": stream.segments.ravel()}, args.fs / args.decimate, cfg.bi)
    signals.save_csv(ds, out)
    log.info("wrote %s (%d samples, %d channel(s))", out, len(ds), len(ds.names))
    return EXIT_OK


def cmd_compress(args, cfg):
    ds = signals.load_csv(args.data)
    if len(cfg.m) != 1 or len(cfg.b) != 1:
        raise InvalidConfigError("compress takes a single --m and --b")
    m, bits = cfg.m[0], cfg.b[0]
    if bits > ds.input_bit_depth:
        raise InvalidConfigError(f"b={bits} exceeds the dataset input bit depth {ds.input_bit_depth}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = MatrixCache()
    side = {"n": cfg.n, "m": m, "b": bits, "bi": ds.input_bit_depth, "vref_frac": cfg.vref_frac,
            "seed": cfg.seed, "per_segment_matrix": cfg.per_segment_matrix,
            "sample_rate": ds.sample_rate, "channels": {}}
    for name in _channels(args, ds):
        ch = compress_channel(ds.channels[name], name, cfg.n, m, bits, ds.input_bit_depth,
                              cfg.vref_frac, cfg.seed, cfg.per_segment_matrix, cache)
        cdir = out / name
        cdir.mkdir(exist_ok=True)
        files = []
        for i, p in enumerate(ch.payloads):
            if p is None:
                files.append(None)
                continue
            (cdir / _payload_name(i)).write_bytes(p.to_bytes())
            files.append(f"{name}/{_payload_name(i)}")
        side["channels"][name] = {"norms": ch.norms.tolist(), "v_ref": ch.v_refs.tolist(),
                                  "length": ch.length, "files": files}
    side["budget"] = channel_budget(m, cfg.n, bits, ds.input_bit_depth,
                                    sum(len(c["files"]) for c in side["channels"].values()))
    _write_json(out / SIDECAR, side)
    b = side["budget"]
    print(f"CR={b['cr']:.6f} CR_b={b['cr_b']:.6f} MB={b['mb_bits']} bits "
          f"body={b['body_bytes']} bytes/segment")
    return EXIT_OK


def _load_compressed(root):
    root = Path(root)
    try:
        side = json.loads((root / SIDECAR).read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read sidecar in {root}: {exc}") from exc
    chans = []
    for name, entry in side["channels"].items():
        payloads = []
        for i, rel in enumerate(entry["files"]):
            if rel is None:
                payloads.append(None)
                continue
            try:
                p = quantizer.QuantizedPayload.from_bytes((root / rel).read_bytes())
            except OSError as exc:
                raise DataError(f"missing payload {rel}: {exc}") from exc
            if (p.n, p.m, p.config.bit_depth, p.segment_index) != (side["n"], side["m"], side["b"], i):
                raise CorruptPayloadError(f"{rel}: header does not match the sidecar")
            if p.config.v_ref != entry["v_ref"][i]:
                raise CorruptPayloadError(f"{rel}: V_ref differs from the sidecar")
            payloads.append(p)
        chans.append(_channel_from_sidecar(name, payloads, entry))
    return side, chans


def _channel_from_sidecar(name, payloads, entry):
    return CompressedChannel(name, payloads, np.asarray(entry["norms"], dtype=float),
                             np.asarray(entry["v_ref"], dtype=float), int(entry["length"]))


def cmd_recover(args, cfg):
    algo = _single_algo(cfg)
    side, chans = _load_compressed(args.payloads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rec, diags = {}, {}
    for ch in chans:
        segs, d = recover_channel(ch, algo, cfg.lam, cfg.max_iter, cfg.tol, cfg.workers)
        rec[ch.name] = segs * ch.norms[:, None]
        diags[ch.name] = d
    ds = signals.Dataset({k: v.ravel() for k, v in rec.items()}, side["sample_rate"], side["bi"])
    signals.save_csv(ds, out / "recovered.csv")
    _write_json(out / "diagnostics.json", {"algo": algo, "channels": diags})
    if args.reference:
        _write_reports(signals.load_csv(args.reference), ds, side["n"], out)
    return EXIT_OK


def _write_reports(ref, rec, n, out):
    rows, summary = [], {}
    for name in rec.names:
        if name not in ref.channels:
            raise DataError(f"reference has no channel {name!r}")
        xs = signals.segment_and_normalize(ref.channels[name], n, name)
        count = len(rec.channels[name]) // n
        xh = rec.channels[name][: count * n].reshape(count, n)
        alive = xs.norms[:count] > 0
        x_full = xs.segments[:count] * xs.norms[:count, None]
        report = metrics.RecoveryReport.from_pairs(zip(x_full[alive], xh[alive]))
        summary[name] = report.to_record()
        for i, (r, s) in zip(np.flatnonzero(alive), zip(report.rsnr, report.ssim)):
            rows.append((name, int(i), float(r), float(s)))
    if "ppg" in rec.channels and ref.bpm_true is not None:
        track = hr.estimate_bpm(rec.channels["ppg"], rec.sample_rate)
        summary["hr"] = hr.hr_report(track, *ref.bpm_true).to_record()
        track.to_csv(out / "hr.csv")
    (out / "report.csv").write_text(_csv_text(("channel", "segment", "rsnr_db", "ssim"), rows))
    _write_json(out / "report.json", summary)
    print(json.dumps(summary, sort_keys=True))


def cmd_metrics(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_reports(signals.load_csv(args.reference), signals.load_csv(args.recovered), cfg.n, out)
    return EXIT_OK


SWEEP_HEADER = ("algo", "M", "B", "MB", "CR", "CR_b", "ARSNR", "SSIM", "Error1", "SD_BPM",
                "pearson", "error")


def _sweep_cell(task):
    algo, m, bits, cfg, x, fs, bi, bpm = task
    nan = float("nan")
    row = [algo, m, bits, m * bits, sensing.compression_ratio(m, cfg.n),
           sensing.bit_compression_ratio(m, cfg.n, bits, bi), nan, nan, nan, nan, nan, ""]
    try:
        ch = compress_channel(x, "x", cfg.n, m, bits, bi, cfg.vref_frac, cfg.seed,
                              cfg.per_segment_matrix, _WORKER_CACHE)
        segs, diags = recover_channel(ch, algo, cfg.lam, cfg.max_iter, cfg.tol)
        errs = [d["error"] for d in diags if "error" in d]
        if errs:
            raise DataError(errs[0])
        stream = signals.segment_and_normalize(x, cfg.n)
        rep = recovery_report(stream.segments, segs, stream.norms)
        row[6], row[7] = rep.arsnr, float(np.mean(rep.ssim))
        if bpm is not None:
            track = hr.estimate_bpm((segs * ch.norms[:, None]).ravel(), fs)
            h = hr.hr_report(track, *bpm)
            row[8], row[9], row[10] = h.error1, h.sd_bpm, h.pearson
    except (QcsError, ArithmeticError) as exc:
        row[11] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_sweep(args, cfg):
    ds = signals.load_csv(args.data)
    name = _channels(args, ds)[0]
    bpm = ds.bpm_true if name == "ppg" else None
    x = ds.channels[name]
    tasks = [(a, m, b, cfg, x, ds.sample_rate, ds.input_bit_depth, bpm)
             for a in cfg.algo for m in cfg.m for b in cfg.b]
    rows = _pmap(_sweep_cell, tasks, cfg.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(_csv_text(SWEEP_HEADER, rows))
    failed = sum(1 for r in rows if r[-1])
    log.info("wrote %d rows to %s (%d failed)", len(rows), out, failed)
    return EXIT_OK


def _channels(args, ds):
    if getattr(args, "channel", None):
        names = [c.strip() for c in args.channel.split(",")]
        missing = [c for c in names if c not in ds.channels]
        if missing:
            raise DataError(f"dataset has no channel(s) {missing}; available: {ds.names}")
        return names
    return ds.names


def _single_algo(cfg):
    if len(cfg.algo) != 1:
        raise InvalidConfigError("recover takes a single --algo")
    return cfg.algo[0]


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


_CONFIG_KEYS = {
    "n": int, "m": _int_list, "b": _int_list, "bi": int, "vref_frac": float, "seed": int,
    "algo": _str_list, "lam": float, "max_iter": int, "tol": float, "workers": int,
    "per_segment_matrix": lambda v: str(v).lower() in ("1", "true", "yes", "on"),
}


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _CONFIG_KEYS:
            raise InvalidConfigError(f"{path}:{lineno}: unknown or malformed entry {raw!r}")
        try:
            out[key] = _CONFIG_KEYS[key](value.strip())
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise InvalidConfigError(f"{path}:{lineno}: {exc}") from None
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("experiment")
    g.add_argument("--config", help="flat key=value file; command-line flags override it")
    g.add_argument("--n", type=int, help="segment length N (default 128)")
    g.add_argument("--m", type=_int_list, help="measurements M, comma-separated for sweep")
    g.add_argument("--b", type=_int_list, help="bit depth B, comma-separated for sweep")
    g.add_argument("--bi", type=int, help="input bit depth B_i (default 12)")
    g.add_argument("--vref-frac", dest="vref_frac", type=float,
                   help="V_ref as a fraction of max|y| per segment (default 0.70)")
    g.add_argument("--seed", type=int, help="random seed for synthesis and the sensing matrix")
    g.add_argument("--algo", type=_str_list, help="bdq or bdq-blind (comma list for sweep)")
    g.add_argument("--lambda", dest="lam", type=float, help="noise variance (default 1e-3)")
    g.add_argument("--max-iter", dest="max_iter", type=int, help="EM iteration cap (default 128)")
    g.add_argument("--tol", type=float, help="relative change stopping tolerance (default 1e-8)")
    g.add_argument("--workers", type=int, help="process pool size (default 1)")
    g.add_argument("--per-segment-matrix", dest="per_segment_matrix", action="store_const",
                   const=True, help="draw an independent sensing matrix per segment")
    g.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="qcs", description="Quantized compressed sensing with Bayesian de-quantization")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    s.add_argument("--kind", choices=("ppg", "ar1"), default="ppg")
    s.add_argument("--duration", type=float, default=300.0, help="seconds (ppg)")
    s.add_argument("--bpm-profile", default="ramp:80:160", help="const:<bpm> or ramp:<a>:<b>")
    s.add_argument("--artifact", type=float, default=0.2, help="motion artifact level (ppg)")
    s.add_argument("--fs", type=float, default=125.0, help="synthesis rate in Hz")
    s.add_argument("--decimate", type=int, default=4, help="integer decimation factor")
    s.add_argument("--r", type=float, default=0.95, help="AR(1) coefficient")
    s.add_argument("--segments", type=int, default=74, help="AR(1) segment count")
    s.add_argument("--out", required=True, help="output CSV path")
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("compress", parents=[common], help="write wire-format payloads")
    c.add_argument("--data", required=True)
    c.add_argument("--channel", help="comma-separated channel subset")
    c.add_argument("--out", required=True, help="output directory")
    c.set_defaults(func=cmd_compress)

    r = sub.add_parser("recover", parents=[common], help="recover from payloads")
    r.add_argument("--payloads", required=True, help="directory written by compress")
    r.add_argument("--reference", help="original CSV, only read after recovery, for reports")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_recover)

    mt = sub.add_parser("metrics", parents=[common], help="score a recovered dataset")
    mt.add_argument("--reference", required=True)
    mt.add_argument("--recovered", required=True)
    mt.add_argument("--out", required=True)
    mt.set_defaults(func=cmd_metrics)

    sw = sub.add_parser("sweep", parents=[common], help="run the (M, B) grid")
    sw.add_argument("--data", required=True)
    sw.add_argument("--channel", help="channel to sweep (default: first)")
    sw.add_argument("--out", required=True, help="output CSV path")
    sw.set_defaults(func=cmd_sweep)
    return p


_SWEEP_DEFAULTS = {"b": (2, 3, 4, 6, 8), "algo": ALGOS}


def make_config(args):
    values = read_config(args.config) if args.config else {}
    for key in _CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    n = values.get("n", 128)
    if args.command == "sweep":
        for key, v in _SWEEP_DEFAULTS.items():
            values.setdefault(key, v)
        # M defaults to {N/4, N/2, 3N/4}
        values.setdefault("m", (n // 4, n // 2, 3 * n // 4))
    values.setdefault("m", (n // 2,))
    names = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in values.items() if k in names})


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:        # --help or a usage error
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        return args.func(args, cfg)
    except (InvalidConfigError, InvalidParameterError, GenerationFailureError) as exc:
        print(f"qcs: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CorruptPayloadError, UndefinedMetricError, OSError) as exc:
        print(f"qcs: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
