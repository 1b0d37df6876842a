"""Per-band SNR profiling and Shannon-Hartley capacity estimation.

A recording of sequential pure tones (one per 100 Hz band, separated by
noise-only gaps) yields one SNR per band: tone-segment band power over the
band power averaged across every noise-only stretch.  Capacities follow from
``C = B log2(1 + S/N)`` and from the large-SNR shortcut ``C ~ 0.33 B SNR_dB``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioBuffer, band_mask, frame_array, next_pow2, one_sided_power

APPROX_FACTOR = 0.33
DEFAULT_BAND_WIDTH = 100.0
DEFAULT_MAX_FREQ = 22000.0
DEFAULT_HEARING_CUTOFF = 10000.0


class CapacityError(ValueError):
    pass


def shannon_capacity(bandwidth_hz: float, snr_linear: float) -> float:
    """``B * log2(1 + S/N)`` in bits/s."""
    if not bandwidth_hz > 0:
        raise CapacityError(f"bandwidth must be > 0, got {bandwidth_hz}")
    if snr_linear < 0:
        raise CapacityError(f"linear SNR must be >= 0, got {snr_linear}")
    return bandwidth_hz * math.log2(1.0 + snr_linear)


def capacity_approx(bandwidth_hz: float, snr_db: float) -> float:
    """Large-SNR approximation ``0.33 * B * SNR_dB``.

    Negative SNRs are outside the approximation's domain; they are clamped to
    0 dB and a ``RuntimeWarning`` is issued.
    """
    if snr_db < 0:
        warnings.warn(f"SNR {snr_db:.2f} dB below 0 clamped to 0 in capacity approximation",
                      RuntimeWarning, stacklevel=2)
        snr_db = 0.0
    return APPROX_FACTOR * bandwidth_hz * snr_db


def db_to_linear(snr_db):
    return 10.0 ** (np.asarray(snr_db, dtype=np.float64) / 10.0)


# ------------------------------------------------------------------ schedules


@dataclass(frozen=True)
class ToneSegment:
    band: int
    start_s: float
    duration_s: float

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass(frozen=True)
class ToneSchedule:
    segments: tuple[ToneSegment, ...]
    band_width: float = DEFAULT_BAND_WIDTH

    def to_dict(self) -> dict:
        return {
            "band_width_hz": self.band_width,
            "tones": [{"band": s.band, "start_s": s.start_s, "duration_s": s.duration_s} for s in self.segments],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> ToneSchedule:
        try:
            segs = tuple(ToneSegment(int(t["band"]), float(t["start_s"]), float(t["duration_s"]))
                         for t in doc["tones"])
        except (KeyError, TypeError) as exc:
            raise CapacityError(f"malformed tone schedule: {exc}") from exc
        return cls(segs, float(doc.get("band_width_hz", DEFAULT_BAND_WIDTH)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> ToneSchedule:
        return cls.from_dict(json.loads(text))


def tone_sweep(bands, sample_rate: int = 44100, band_width: float = DEFAULT_BAND_WIDTH,
               tone_s: float = 0.25, gap_s: float = 0.1, amplitude: float = 0.5,
               ) -> tuple[AudioBuffer, ToneSchedule]:
    """Sequential band-centre tones separated by silent gaps (leading and trailing gap too)."""
    n_tone = int(round(tone_s * sample_rate))
    n_gap = int(round(gap_s * sample_rate))
    t = np.arange(n_tone) / sample_rate
    pieces, segs = [np.zeros(n_gap)], []
    pos = n_gap
    for b in bands:
        f = (b + 0.5) * band_width
        if f >= sample_rate / 2:
            raise CapacityError(f"band {b} centre {f} Hz is above Nyquist")
        pieces += [amplitude * np.sin(2 * np.pi * f * t), np.zeros(n_gap)]
        segs.append(ToneSegment(int(b), pos / sample_rate, n_tone / sample_rate))
        pos += n_tone + n_gap
    return AudioBuffer(np.concatenate(pieces), sample_rate), ToneSchedule(tuple(segs), band_width)


# -------------------------------------------------------------------- profile


@dataclass(frozen=True)
class BandSnrProfile:
    f_lo: np.ndarray
    f_hi: np.ndarray
    snr_db: np.ndarray
    band_width: float = DEFAULT_BAND_WIDTH
    max_freq: float = DEFAULT_MAX_FREQ
    sample_rate: int = 44100

    def __post_init__(self):
        for name in ("f_lo", "f_hi", "snr_db"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (len(self.f_lo) == len(self.f_hi) == len(self.snr_db)) or len(self.f_lo) == 0:
            raise CapacityError("profile needs equally long, non-empty band arrays")
        if not np.allclose(self.f_hi - self.f_lo, self.band_width):
            raise CapacityError("every band must span band_width")
        if not np.allclose(self.f_lo[1:], self.f_hi[:-1]):
            raise CapacityError("bands must be contiguous and ordered")
        if self.max_freq > self.sample_rate / 2 + 1e-9:
            raise CapacityError(f"max_freq {self.max_freq} exceeds Nyquist {self.sample_rate / 2}")

    def __len__(self) -> int:
        return len(self.f_lo)

    @classmethod
    def flat(cls, snr_db: float, f_lo: float, f_hi: float, band_width: float = DEFAULT_BAND_WIDTH,
             sample_rate: int = 44100) -> BandSnrProfile:
        n = int(round((f_hi - f_lo) / band_width))
        lo = f_lo + band_width * np.arange(n)
        return cls(lo, lo + band_width, np.full(n, float(snr_db)), band_width, f_hi, sample_rate)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.f_lo + self.f_hi)

    def snr_at(self, f_lo: float) -> float:
        idx = np.flatnonzero(np.isclose(self.f_lo, f_lo))
        if len(idx) == 0:
            raise CapacityError(f"profile has no band starting at {f_lo} Hz")
        return float(self.snr_db[idx[0]])

    def to_dict(self) -> dict:
        return {
            "band_width_hz": self.band_width,
            "max_freq_hz": self.max_freq,
            "sample_rate": self.sample_rate,
            "bands": [{"f_lo_hz": float(a), "f_hi_hz": float(b), "snr_db": float(s)}
                      for a, b, s in zip(self.f_lo, self.f_hi, self.snr_db)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> BandSnrProfile:
        bands = doc["bands"]
        return cls([b["f_lo_hz"] for b in bands], [b["f_hi_hz"] for b in bands], [b["snr_db"] for b in bands],
                   float(doc.get("band_width_hz", DEFAULT_BAND_WIDTH)), float(doc.get("max_freq_hz", bands[-1]["f_hi_hz"])),
                   int(doc.get("sample_rate", 44100)))


BINS_PER_BAND = 4


def _analysis_frames(sample_rate: int, band_width: float) -> tuple[int, int]:
    """Frame length giving exactly four bins per band when the rate allows it,
    so every band sees the same noise bandwidth; otherwise a power of two."""
    exact = BINS_PER_BAND * sample_rate / band_width
    if abs(exact - round(exact)) < 1e-9:
        frame_len = int(round(exact))
    else:
        frame_len = next_pow2(int(math.ceil(exact)))
    return frame_len, max(1, frame_len // 4)


def profile_band_snr(recording: AudioBuffer, schedule: ToneSchedule, band_width: float | None = None,
                     max_freq: float = DEFAULT_MAX_FREQ, min_freq: float = 0.0) -> BandSnrProfile:
    """SNR per band in ``[min_freq, max_freq)`` from a scheduled tone recording.

    Each band's SNR is 10 log10 of its band power during its own tone segment(s)
    over its band power averaged across all noise-only frames (frames touching
    no tone segment).  Every band in range must appear in the schedule.
    """
    bw = float(band_width if band_width is not None else schedule.band_width)
    rate = recording.sample_rate
    if max_freq > rate / 2 + 1e-9:
        raise CapacityError(f"max_freq {max_freq} Hz is above Nyquist ({rate / 2} Hz)")
    x = recording.to_mono().mono
    duration = len(x) / rate
    for seg in schedule.segments:
        if seg.start_s < 0 or seg.end_s > duration + 1e-9:
            raise CapacityError(f"tone for band {seg.band} at {seg.start_s}-{seg.end_s} s extends past the recording ({duration:.3f} s)")
        if (seg.band + 1) * bw > rate / 2 + 1e-9:
            raise CapacityError(f"band {seg.band} lies above Nyquist")
    first = int(round(min_freq / bw))
    last = int(round(max_freq / bw))
    wanted = range(first, last)
    by_band: dict[int, list[ToneSegment]] = {}
    for seg in schedule.segments:
        by_band.setdefault(seg.band, []).append(seg)
    missing = [b for b in wanted if b not in by_band]
    if missing:
        raise CapacityError(f"{len(missing)} band(s) in range have no scheduled tone, e.g. band {missing[0]}")

    frame_len, hop = _analysis_frames(rate, bw)
    frames = frame_array(x, frame_len, hop)
    starts = np.arange(len(frames)) * hop
    ends = starts + frame_len
    tone_spans = [(int(round(s.start_s * rate)), int(round(s.end_s * rate))) for s in schedule.segments]
    noise_frames = np.ones(len(frames), dtype=bool)
    for a, b in tone_spans:
        noise_frames &= (ends <= a) | (starts >= b)
    if not noise_frames.any():
        raise CapacityError("recording has no noise-only frame to estimate the background from")

    fft_len = frame_len
    freqs = np.arange(fft_len // 2 + 1) * rate / fft_len
    masks = [band_mask(freqs, b * bw, (b + 1) * bw, rate / 2) for b in wanted]
    noise_psd = one_sided_power(frames[noise_frames], fft_len).mean(axis=0)
    bin_width = rate / fft_len
    snr = []
    for b, m in zip(wanted, masks):
        inside = np.zeros(len(frames), dtype=bool)
        for seg in by_band[b]:
            a, e = int(round(seg.start_s * rate)), int(round(seg.end_s * rate))
            inside |= (starts >= a) & (ends <= e)
        if not inside.any():
            raise CapacityError(f"tone segment for band {b} is shorter than one analysis frame ({frame_len / rate:.3f} s)")
        tone_p = one_sided_power(frames[inside], fft_len).mean(axis=0)[m].sum()
        # Background over the nominal band width, whatever the bin count.
        noise_p = noise_psd[m].sum() * bw / (m.sum() * bin_width)
        if noise_p <= 0:
            raise CapacityError(f"band {b} has zero background power")
        snr.append(10.0 * math.log10(max(tone_p, 1e-300) / noise_p))
    lo = np.array([b * bw for b in wanted], dtype=np.float64)
    return BandSnrProfile(lo, lo + bw, np.array(snr), bw, last * bw, rate)


# ---------------------------------------------------------------- capacity


@dataclass(frozen=True)
class CapacityReport:
    f_lo: np.ndarray
    f_hi: np.ndarray
    snr_db: np.ndarray
    capacity_exact_bps: np.ndarray
    capacity_approx_bps: np.ndarray
    approx_clamped: np.ndarray
    hearing_cutoff: float = DEFAULT_HEARING_CUTOFF
    extras: dict = field(default_factory=dict)

    def cumulative(self, f_lo: float = 0.0, f_hi: float = math.inf, approx: bool = False) -> float:
        """Sum over bands lying entirely inside ``[f_lo, f_hi)``, in band order."""
        values = self.capacity_approx_bps if approx else self.capacity_exact_bps
        total = 0.0
        for lo, hi, c in zip(self.f_lo, self.f_hi, values):
            if lo >= f_lo and hi <= f_hi:
                total += float(c)
        return total

    @property
    def total_exact_bps(self) -> float:
        return self.cumulative()

    @property
    def total_approx_bps(self) -> float:
        return self.cumulative(approx=True)

    @property
    def inaudible_exact_bps(self) -> float:
        return self.cumulative(self.hearing_cutoff)

    @property
    def inaudible_approx_bps(self) -> float:
        return self.cumulative(self.hearing_cutoff, approx=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["f_lo_hz", "f_hi_hz", "snr_db", "capacity_exact_bps", "capacity_approx_bps"])
        for row in zip(self.f_lo, self.f_hi, self.snr_db, self.capacity_exact_bps, self.capacity_approx_bps):
            w.writerow([f"{row[0]:g}", f"{row[1]:g}", f"{row[2]:.4f}", f"{row[3]:.4f}", f"{row[4]:.4f}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "hearing_cutoff_hz": self.hearing_cutoff,
            "total_exact_bps": self.total_exact_bps,
            "total_approx_bps": self.total_approx_bps,
            "inaudible_exact_bps": self.inaudible_exact_bps,
            "inaudible_approx_bps": self.inaudible_approx_bps,
            "bands": [
                {"f_lo_hz": float(a), "f_hi_hz": float(b), "snr_db": float(s),
                 "capacity_exact_bps": float(ce), "capacity_approx_bps": float(ca), "approx_clamped": bool(cl)}
                for a, b, s, ce, ca, cl in zip(self.f_lo, self.f_hi, self.snr_db, self.capacity_exact_bps,
                                               self.capacity_approx_bps, self.approx_clamped)
            ],
            **self.extras,
        }


def capacity_report(profile: BandSnrProfile, hearing_cutoff: float = DEFAULT_HEARING_CUTOFF) -> CapacityReport:
    widths = profile.f_hi - profile.f_lo
    exact = np.array([shannon_capacity(w, s) for w, s in zip(widths, db_to_linear(profile.snr_db))])
    clamped = profile.snr_db < 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        approx = np.array([capacity_approx(w, s) for w, s in zip(widths, profile.snr_db)])
    return CapacityReport(profile.f_lo, profile.f_hi, profile.snr_db, exact, approx, clamped, float(hearing_cutoff))


__all__ = [
    "shannon_capacity", "capacity_approx", "ToneSegment", "ToneSchedule", "tone_sweep",
    "BandSnrProfile", "profile_band_snr", "CapacityReport", "capacity_report", "CapacityError",
]
