"""Command-line frontend.

Exit codes: 0 success, 1 domain error (JSON ``{"error", "detail"}`` on the
report channel), 2 usage error.  Reports go to ``--out`` when that flag names
the report, to ``--report`` when ``--out`` names a data file, and to stdout
otherwise.  Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audio import read_wav, write_wav
from .capacity import ToneSchedule, capacity_report, profile_band_snr, tone_sweep
from .channel import ChannelModel, combine_channels, combining_gain_experiment, default_probe, simulate_channel
from .hda import load_codec_map, plan_retask, render_plan
from .modem import (
    CrcMismatchError,
    ModemConfig,
    ModemError,
    ber_test,
    demodulate_frame,
    modulate,
    noise_floor_for_band_snr,
)
from .quality import aligned_pair, common_rate_pair, detect_voice_activity, quality_report, spectral_report


class DomainError(Exception):
    def __init__(self, error: str, detail: str = "", **extra):
        super().__init__(error)
        self.error, self.detail, self.extra = error, detail, extra


def _finite(obj):
    """JSON-safe copy: non-finite floats become null, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _dump(doc: dict) -> str:
    return json.dumps(_finite(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DomainError("invalid JSON", f"{path}: {exc}") from None


def _model(args) -> ChannelModel:
    model = ChannelModel.from_dict(_load_json(args.model)) if args.model else ChannelModel()
    if getattr(args, "seed", None) is not None:
        model = model.replace(noise_seed=args.seed)
    return model


def _config(args) -> ModemConfig:
    return ModemConfig.from_dict(_load_json(args.config)) if args.config else ModemConfig()


def _bands(text: str | None):
    if text is None:
        return None
    try:
        return tuple(int(b) for b in text.split(",") if b.strip())
    except ValueError:
        raise DomainError("invalid band list", f"expected comma-separated indices, got {text!r}") from None


# ------------------------------------------------------------------ commands


def cmd_quality(args):
    report = quality_report(read_wav(args.ref), read_wav(args.rec), filter_len=args.filter_len)
    return report.to_dict(), args.out


def cmd_spectral(args):
    ref, rec = common_rate_pair(read_wav(args.ref), read_wav(args.rec))
    ref_al, rec_al, lag = aligned_pair(ref, rec)
    mask = detect_voice_activity(ref_al)
    report = spectral_report(rec_al, mask, band_width=args.band_width)
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    files = report.write_csv(args.out_dir)
    return {
        "files": [str(f) for f in files],
        "n_active": report.n_active,
        "n_inactive": report.n_inactive,
        "n_bands": len(report.band_edges) - 1,
        "alignment_lag_samples": lag,
    }, args.report


def cmd_profile(args):
    schedule = ToneSchedule.from_dict(_load_json(args.schedule))
    profile = profile_band_snr(read_wav(args.rec).to_mono(), schedule, band_width=args.band_width,
                               max_freq=args.max_freq, min_freq=args.min_freq)
    cap = capacity_report(profile, hearing_cutoff=args.hearing_cutoff)
    if args.csv:
        Path(args.csv).write_text(cap.to_csv())
    return {"profile": profile.to_dict(), "capacity": cap.to_dict()}, args.out


def cmd_sweep(args):
    rate = args.sample_rate
    lo = int(math.floor(args.f_lo / args.band_width))
    hi = int(math.ceil(args.f_hi / args.band_width))
    audio, schedule = tone_sweep(range(lo, hi), sample_rate=rate, band_width=args.band_width,
                                 tone_s=args.tone_s, gap_s=args.gap_s, amplitude=args.amplitude)
    write_wav(audio, args.out)
    Path(args.schedule).write_text(schedule.to_json() + "\n")
    return {"wav": args.out, "schedule": args.schedule, "n_tones": len(schedule.segments),
            "duration_s": len(audio) / rate}, args.report


def cmd_simulate(args):
    model = _model(args)
    audio = read_wav(getattr(args, "in")).to_mono()
    out = simulate_channel(audio, model)
    write_wav(out, args.out, encoding=args.encoding)
    peak = float(np.max(np.abs(out.samples))) if len(out) else 0.0
    return {"model": model.to_dict(), "samples": len(out), "sample_rate": out.sample_rate,
            "peak": peak, "clipped": args.encoding == "pcm16" and peak > 1.0}, args.report


def cmd_combine(args):
    stereo = read_wav(getattr(args, "in"))
    mono = combine_channels(stereo)
    write_wav(mono, args.out, encoding=args.encoding)
    return {"samples": len(mono), "sample_rate": mono.sample_rate}, args.report


def cmd_combine_exp(args):
    model = _model(args)
    probe = read_wav(args.probe).to_mono() if args.probe else default_probe()
    result = combining_gain_experiment(model, args.rho, probe=probe, trials=args.trials)
    return result.to_dict(), args.out


def cmd_tx(args):
    config = _config(args)
    payload = Path(args.payload).read_bytes()
    audio = modulate(payload, config, _bands(args.bands))
    write_wav(audio, args.out, encoding=args.encoding)
    return {"payload_bytes": len(payload), "samples": len(audio), "duration_s": len(audio) / audio.sample_rate,
            "n_bands": len(_bands(args.bands) or config.all_bands())}, args.report


def cmd_rx(args):
    config = _config(args)
    audio = read_wav(getattr(args, "in"))
    try:
        result = demodulate_frame(audio, config, _bands(args.bands))
    except CrcMismatchError as exc:
        raise DomainError(str(exc), "frame checksum failed", payload_hex=exc.payload.hex()) from None
    except ModemError as exc:
        raise DomainError(str(exc), type(exc).__name__) from None
    Path(args.out).write_bytes(result.payload)
    return {"status": "ok", "payload_bytes": len(result.payload), "start_sample": result.start,
            "preamble_correlation": result.correlation}, args.report


def cmd_ber(args):
    config = _config(args)
    model = _model(args)
    if args.snr_db is not None:
        model = model.replace(noise_floor_dbfs=noise_floor_for_band_snr(config, args.snr_db, model.gain_db))
    report = ber_test(config, model, n_bits=args.bits, seed=args.seed, bands=_bands(args.bands))
    return report.to_dict(), args.out


def cmd_hda_plan(args):
    plan = plan_retask(load_codec_map(args.map), args.pin, args.role)
    return render_plan(plan, args.format), args.out


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covertaudio", description="Acoustic covert-channel analysis toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(func=func)
        return sp

    q = add("quality", cmd_quality, "objective quality metrics of a recording against its reference")
    q.add_argument("--ref", required=True)
    q.add_argument("--rec", required=True)
    q.add_argument("--filter-len", type=int, default=512, help="SAR distortion filter length (samples)")
    q.add_argument("--out", help="report JSON path (default stdout)")

    s = add("spectral", cmd_spectral, "per-band active/inactive energy, histograms and spectrogram CSVs")
    s.add_argument("--ref", required=True)
    s.add_argument("--rec", required=True)
    s.add_argument("--band-width", type=float, default=100.0)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--report", help="summary JSON path (default stdout)")

    pr = add("profile", cmd_profile, "per-band SNR and channel capacity from a tone-sweep recording")
    pr.add_argument("--rec", required=True)
    pr.add_argument("--schedule", required=True, help="tone schedule JSON")
    pr.add_argument("--band-width", type=float, default=None, help="default: the schedule's band width")
    pr.add_argument("--max-freq", type=float, default=22000.0)
    pr.add_argument("--min-freq", type=float, default=0.0)
    pr.add_argument("--hearing-cutoff", type=float, default=10000.0)
    pr.add_argument("--csv", help="also write the capacity table as CSV")
    pr.add_argument("--out", help="report JSON path (default stdout)")

    sw = add("sweep", cmd_sweep, "generate a band-centre tone sweep and its schedule")
    sw.add_argument("--f-lo", type=float, default=0.0)
    sw.add_argument("--f-hi", type=float, default=22000.0)
    sw.add_argument("--band-width", type=float, default=100.0)
    sw.add_argument("--sample-rate", type=int, default=44100)
    sw.add_argument("--tone-s", type=float, default=0.25)
    sw.add_argument("--gap-s", type=float, default=0.1)
    sw.add_argument("--amplitude", type=float, default=0.5)
    sw.add_argument("--out", required=True, help="sweep WAV path")
    sw.add_argument("--schedule", required=True, help="schedule JSON path")
    sw.add_argument("--report")

    sim = add("simulate", cmd_simulate, "pass a WAV through the channel model")
    sim.add_argument("--in", required=True)
    sim.add_argument("--model", help="channel model JSON (default: headphone model)")
    sim.add_argument("--seed", type=int, help="override the model's noise seed")
    sim.add_argument("--out", required=True)
    sim.add_argument("--encoding", choices=("pcm16", "float32"), default="float32")
    sim.add_argument("--report")

    cb = add("combine", cmd_combine, "align and average the two channels of a stereo WAV")
    cb.add_argument("--in", required=True)
    cb.add_argument("--out", required=True)
    cb.add_argument("--encoding", choices=("pcm16", "float32"), default="float32")
    cb.add_argument("--report")

    ce = add("combine-exp", cmd_combine_exp, "L/R combining-gain experiment")
    ce.add_argument("--model", help="channel model JSON (default: headphone model)")
    ce.add_argument("--rho", type=float, default=0.0, help="noise correlation between channels")
    ce.add_argument("--trials", type=int, default=100)
    ce.add_argument("--seed", type=int, help="base noise seed")
    ce.add_argument("--probe", help="probe WAV (default: 1 s broadband noise)")
    ce.add_argument("--out")

    tx = add("tx", cmd_tx, "modulate a payload file into a WAV")
    tx.add_argument("--payload", required=True)
    tx.add_argument("--config", help="modem config JSON")
    tx.add_argument("--bands", help="comma-separated band indices (default: all)")
    tx.add_argument("--out", required=True)
    tx.add_argument("--encoding", choices=("pcm16", "float32"), default="float32")
    tx.add_argument("--report")

    rx = add("rx", cmd_rx, "demodulate a WAV into a payload file")
    rx.add_argument("--in", required=True)
    rx.add_argument("--config", help="modem config JSON")
    rx.add_argument("--bands", help="comma-separated band indices (default: all)")
    rx.add_argument("--out", required=True)
    rx.add_argument("--report")

    b = add("ber", cmd_ber, "bit-error-rate test of the modem over the channel model")
    b.add_argument("--config", help="modem config JSON")
    b.add_argument("--model", help="channel model JSON (default: headphone model)")
    b.add_argument("--snr-db", type=float, help="set the noise floor for this per-band SNR")
    b.add_argument("--bits", type=int, default=100_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--bands", help="comma-separated band indices (default: all)")
    b.add_argument("--out")

    h = add("hda-plan", cmd_hda_plan, "jack retasking command plan")
    h.add_argument("--map", help="codec map JSON (default: bundled ALC892 map, NIDs unbound)")
    h.add_argument("--pin", required=True)
    h.add_argument("--role", required=True, choices=("in", "out"))
    h.add_argument("--format", choices=("tool-lines", "json"), default="tool-lines")
    h.add_argument("--out")
    return p


REPORT_IS_OUT = (cmd_quality, cmd_profile, cmd_combine_exp, cmd_ber, cmd_hda_plan)


def _report_channel(args) -> str | None:
    """Where the error document goes: the report path if any, else stdout."""
    if getattr(args, "report", None):
        return args.report
    if args.func in REPORT_IS_OUT:
        return args.out
    return None


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        doc, path = args.func(args)
    except DomainError as exc:
        _emit(_dump({"error": exc.error, "detail": exc.detail, **exc.extra}), _report_channel(args))
        return 1
    except (ValueError, OSError, KeyError) as exc:
        message = str(exc) if not isinstance(exc, KeyError) else f"missing field {exc}"
        _emit(_dump({"error": message, "detail": type(exc).__name__}), _report_channel(args))
        return 1
    if path is None and args.func not in REPORT_IS_OUT and getattr(args, "out", None):
        # --out holds the data product; without --report the status is not emitted.
        return 0
    _emit(doc if isinstance(doc, str) else _dump(doc), path)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
