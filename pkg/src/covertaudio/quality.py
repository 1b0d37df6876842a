"""Objective speech-quality measurement of a recording against its reference.

Pipeline: resample both signals to the lower rate, align them by
cross-correlation, derive a voice-activity mask from the reference only, then
score the recording with four measures (NIST-style STNR, WADA SNR, VAD
segmented SNR and the BSS-EVAL signal-to-artifacts ratio).
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import linalg, signal

from . import wada_table
from .audio import (AudioBuffer, AudioError, band_mask, frame_array, ms_to_samples,
                    next_pow2, periodogram_frames, resample)

VAD_FRAME_MS = 20.0
VAD_HOP_MS = 10.0
VAD_THRESHOLD_DB = 6.0
VAD_FLOOR_PERCENTILE = 10.0
VAD_HANGOVER = 2

WADA_FLOOR_DB = -20.0
WADA_CEIL_DB = 100.0
WADA_NOISE_Z = 3.0
SAR_CAP_DB = 100.0
SNR_VAD_CAP_DB = 100.0

_TINY_POWER = 1e-20


class QualityError(AudioError):
    pass


def _power_db(p):
    return 10.0 * np.log10(np.asarray(p) + _TINY_POWER)


def _frame_power(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    return np.mean(frame_array(x, frame_len, hop) ** 2, axis=1)


# ----------------------------------------------------------------------- VAD


@dataclass(frozen=True)
class VadMask:
    labels: np.ndarray  # bool per frame
    frame_len: int
    hop: int
    source_rate: int

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.labels))

    @property
    def n_inactive(self) -> int:
        return len(self.labels) - self.n_active


def detect_voice_activity(ref: AudioBuffer, frame_ms: float = VAD_FRAME_MS,
                          hop_ms: float = VAD_HOP_MS) -> VadMask:
    """Energy VAD: active iff frame power is 6 dB over the 10th-percentile floor.

    Each active run is extended by a two-frame hangover.
    """
    frame_len = ms_to_samples(frame_ms, ref.sample_rate)
    hop = ms_to_samples(hop_ms, ref.sample_rate)
    p_db = _power_db(_frame_power(ref.mono, frame_len, hop))
    floor = np.percentile(p_db, VAD_FLOOR_PERCENTILE)
    raw = p_db >= floor + VAD_THRESHOLD_DB
    labels = raw.copy()
    for k in range(1, VAD_HANGOVER + 1):
        labels[k:] |= raw[:-k]
    labels.flags.writeable = False
    return VadMask(labels, frame_len, hop, ref.sample_rate)


# ----------------------------------------------------------------- alignment


def align_by_cross_correlation(ref: AudioBuffer, rec: AudioBuffer, max_lag: int) -> int:
    """Lag (samples) maximizing the normalized cross-correlation.

    Positive lag means ``rec`` is delayed relative to ``ref``.  Exact ties go
    to the smallest ``|lag|``.
    """
    x, y = ref.mono, rec.mono
    if ref.sample_rate != rec.sample_rate:
        raise AudioError("alignment needs equal sample rates")
    if not 0 <= max_lag < min(len(x), len(y)):
        raise AudioError(f"max_lag must lie in [0, {min(len(x), len(y))}), got {max_lag}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise AudioError("cross-correlation is undefined for an all-zero signal")
    corr = signal.correlate(y, x, mode="full", method="fft") / (nx * ny)
    lags = signal.correlation_lags(len(y), len(x), mode="full")
    keep = np.abs(lags) <= max_lag
    corr, lags = corr[keep], lags[keep]
    best = corr.max()
    ties = lags[corr >= best - 1e-12 * abs(best)]
    return int(ties[np.lexsort((ties, np.abs(ties)))[0]])


# ------------------------------------------------------------------- SNR VAD


def snr_vad(rec: AudioBuffer, mask: VadMask) -> float:
    """Mean active-frame power over mean inactive-frame power, in dB."""
    power = _frame_power(rec.mono, mask.frame_len, mask.hop)
    if len(power) < len(mask):
        raise QualityError(f"mask has {len(mask)} frames but the recording only {len(power)}")
    power = power[: len(mask)]
    if mask.n_active == 0 or mask.n_inactive == 0:
        raise QualityError("VAD mask needs both active and inactive frames")
    active = power[mask.labels].mean()
    inactive = power[~mask.labels].mean()
    if inactive == 0.0:
        return SNR_VAD_CAP_DB
    if active == 0.0:
        return -SNR_VAD_CAP_DB
    return min(SNR_VAD_CAP_DB, 10.0 * math.log10(active / inactive))


# ------------------------------------------------------------------ NIST STNR


def _require_seconds(buffer: AudioBuffer, seconds: float, what: str):
    if len(buffer) < seconds * buffer.sample_rate:
        raise QualityError(f"{what} needs at least {seconds} s of audio, got {float(buffer.duration_seconds):.3f} s")


def nist_stnr(buffer: AudioBuffer) -> float:
    """Speech-to-noise ratio from the frame-power histogram (dB, in [0, 100]).

    Speech level is the 95th percentile of 20 ms frame powers; noise level is
    the mode of the 1 dB histogram restricted to the lower cluster (bins at or
    below the midpoint of the 5th and 95th percentiles).  Bins are anchored on
    the speech level so a gain change shifts the histogram rigidly.
    """
    _require_seconds(buffer, 1.0, "NIST STNR")
    x = buffer.mono
    p_db = _power_db(_frame_power(x, ms_to_samples(20.0, buffer.sample_rate), ms_to_samples(10.0, buffer.sample_rate)))
    speech = float(np.percentile(p_db, 95.0))
    low = float(np.percentile(p_db, 5.0))
    # Bin k is centred at speech - k dB.
    offsets = np.floor(speech - p_db + 0.5).astype(int)
    offsets = offsets[offsets >= 0]
    counts = np.bincount(offsets)
    split = int(math.floor(speech - (low + speech) / 2.0 + 0.5))
    lower = np.arange(len(counts)) >= min(split, len(counts) - 1)
    cand = np.where(lower, counts, -1)
    # Largest count; ties go to the quieter bin.
    k_mode = len(cand) - 1 - int(np.argmax(cand[::-1]))
    return float(np.clip(k_mode, 0.0, 100.0))


# ------------------------------------------------------------------- WADA SNR


def wada_snr(buffer: AudioBuffer) -> float:
    """Blind SNR from the waveform amplitude distribution, clamped to [-20, 100] dB.

    The amplitude statistic is inverted through ``wada_table.TABLE_G``.  When the
    statistic is within three standard errors of the table's -20 dB entry the
    signal is indistinguishable from noise alone and the floor is returned.
    """
    _require_seconds(buffer, 1.0, "WADA SNR")
    x = buffer.mono
    peak = np.max(np.abs(x))
    if peak == 0.0:
        raise QualityError("WADA SNR is undefined for an all-zero signal")
    a = np.maximum(np.abs(x) / peak, 1e-10)
    m1 = a.mean()
    log_a = np.log(a)
    g = math.log(m1) - log_a.mean()
    stderr = np.std(a / m1 - log_a) / math.sqrt(len(a))
    table = wada_table.TABLE_G
    if g <= table[0] + WADA_NOISE_Z * stderr:
        return WADA_FLOOR_DB
    if g >= table[-1]:
        return WADA_CEIL_DB
    return float(np.interp(g, table, wada_table.TABLE_SNR_DB))


# ------------------------------------------------------------------------ SAR


def sar(ref: AudioBuffer, rec: AudioBuffer, filter_len: int = 512) -> float:
    """Signal-to-artifacts ratio of ``rec`` w.r.t. delayed copies of ``ref``.

    ``rec`` is projected (least squares) onto the span of ``ref`` delayed by
    0..filter_len-1 samples; the projection is the target, the residual the
    artifact.  Capped at 100 dB.
    """
    s, y = ref.mono, rec.mono
    if len(s) != len(y):
        raise QualityError(f"reference and recording lengths differ ({len(s)} vs {len(y)})")
    if filter_len < 1:
        raise QualityError("filter_len must be >= 1")
    if not np.any(s):
        raise QualityError("SAR is undefined for an all-zero reference")
    n, L = len(s), min(filter_len, len(s))
    nfft = next_pow2(n + L)
    S = np.fft.rfft(s, nfft)
    auto = np.fft.irfft(np.abs(S) ** 2, nfft)[:L]
    cross = np.fft.irfft(np.conj(S) * np.fft.rfft(y, nfft), nfft)[:L]
    gram = linalg.toeplitz(auto)
    try:
        coef = linalg.solve(gram, cross, assume_a="pos")
    except (linalg.LinAlgError, ValueError):
        coef = linalg.lstsq(gram, cross)[0]
    target = signal.fftconvolve(s, coef)[: n + L - 1]
    resid = np.concatenate([y, np.zeros(L - 1)]) - target
    e_resid = float(np.sum(resid**2))
    e_total = float(np.sum(y**2))
    if e_resid < 1e-12 * e_total:
        return SAR_CAP_DB
    return min(SAR_CAP_DB, 10.0 * math.log10(np.sum(target**2) / e_resid))


# ------------------------------------------------------------------- reports


@dataclass(frozen=True)
class QualityReport:
    nist_stnr_db: float
    wada_snr_db: float
    snr_vad_db: float
    sar_db: float
    alignment_lag: int
    sample_rate: int
    pesq_mos: None = None  # PESQ is not computed

    def to_dict(self) -> dict:
        return {
            "nist_stnr_db": self.nist_stnr_db,
            "wada_snr_db": self.wada_snr_db,
            "snr_vad_db": self.snr_vad_db,
            "sar_db": self.sar_db,
            "alignment_lag_samples": self.alignment_lag,
            "pesq_mos": None,
        }


def common_rate_pair(ref: AudioBuffer, rec: AudioBuffer) -> tuple[AudioBuffer, AudioBuffer]:
    """Mono versions of both signals at the lower of the two sample rates."""
    rate = min(ref.sample_rate, rec.sample_rate)
    return resample(ref.to_mono(), rate), resample(rec.to_mono(), rate)


def aligned_pair(ref: AudioBuffer, rec: AudioBuffer, max_lag: int | None = None):
    """Align ``rec`` to ``ref`` and trim both to their overlap; returns (ref, rec, lag)."""
    n = min(len(ref), len(rec))
    if max_lag is None:
        max_lag = min(2 * ref.sample_rate, n // 2)
    lag = align_by_cross_correlation(ref, rec, max_lag)
    x, y = ref.mono, rec.mono
    if lag >= 0:
        y = y[lag:]
    else:
        x = x[-lag:]
    m = min(len(x), len(y))
    return AudioBuffer(x[:m], ref.sample_rate), AudioBuffer(y[:m], rec.sample_rate), lag


def quality_report(ref: AudioBuffer, rec: AudioBuffer, filter_len: int = 512,
                   max_lag: int | None = None) -> QualityReport:
    """Full measurement: common rate, alignment, reference VAD, four metrics."""
    ref, rec = common_rate_pair(ref, rec)
    ref_al, rec_al, lag = aligned_pair(ref, rec, max_lag)
    mask = detect_voice_activity(ref_al)
    return QualityReport(
        nist_stnr_db=nist_stnr(rec_al),
        wada_snr_db=wada_snr(rec_al),
        snr_vad_db=snr_vad(rec_al, mask),
        sar_db=sar(ref_al, rec_al, filter_len),
        alignment_lag=lag,
        sample_rate=ref.sample_rate,
    )


@dataclass(frozen=True)
class SpectralReport:
    band_edges: np.ndarray  # (n_bands + 1,)
    active_mean_db: np.ndarray | None  # (n_bands,), None without active frames
    inactive_mean_db: np.ndarray | None
    hist_edges_db: np.ndarray  # (n_hist + 1,)
    histograms: np.ndarray  # (n_hist, n_bands) frame counts
    spectrogram_db: np.ndarray  # (n_frames, n_bins)
    frame_times: np.ndarray
    bin_freqs: np.ndarray
    n_active: int
    n_inactive: int

    @property
    def band_centers(self) -> np.ndarray:
        return 0.5 * (self.band_edges[:-1] + self.band_edges[1:])

    @property
    def gap_db(self) -> np.ndarray:
        """Active-minus-inactive mean energy per band."""
        if self.active_mean_db is None or self.inactive_mean_db is None:
            raise QualityError("gap needs both active and inactive frames")
        return self.active_mean_db - self.inactive_mean_db

    def write_csv(self, out_dir) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        centers = [f"{c:g}" for c in self.band_centers]

        def fmt(row):
            if row is None:
                return [""] * len(centers)
            return [f"{v:.6f}" for v in row]

        paths = []
        p = os.path.join(out_dir, "band_means.csv")
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["statistic", *centers])
            w.writerow(["active_mean_db", *fmt(self.active_mean_db)])
            w.writerow(["inactive_mean_db", *fmt(self.inactive_mean_db)])
            w.writerow(["active_frames", self.n_active, *[""] * (len(centers) - 1)])
            w.writerow(["inactive_frames", self.n_inactive, *[""] * (len(centers) - 1)])
        paths.append(p)
        p = os.path.join(out_dir, "histograms.csv")
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["energy_db_lo", *centers])
            for lo, row in zip(self.hist_edges_db[:-1], self.histograms):
                w.writerow([f"{lo:g}", *(int(v) for v in row)])
        paths.append(p)
        p = os.path.join(out_dir, "spectrogram.csv")
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", *(f"{f:g}" for f in self.bin_freqs)])
            for t, row in zip(self.frame_times, self.spectrogram_db):
                w.writerow([f"{t:.6f}", *(f"{v:.3f}" for v in row)])
        paths.append(p)
        return paths


def spectral_report(rec: AudioBuffer, mask: VadMask, band_width: float = 100.0) -> SpectralReport:
    """Per-band active/inactive energy, 1 dB energy histograms and spectrogram.

    Band energy is normalized to the nominal band width so bands holding a
    different number of FFT bins stay comparable.
    """
    x = rec.mono
    frames = frame_array(x, mask.frame_len, mask.hop)
    if len(frames) < len(mask):
        raise QualityError(f"mask has {len(mask)} frames but the recording only {len(frames)}")
    frames = frames[: len(mask)]
    fft_len = next_pow2(mask.frame_len)
    power = periodogram_frames(frames, fft_len)
    bin_width = rec.sample_rate / fft_len
    freqs = np.arange(power.shape[1]) * bin_width
    nyq = rec.sample_rate / 2.0
    n_bands = int(math.floor(nyq / band_width + 1e-9))
    if n_bands < 1:
        raise QualityError(f"band width {band_width} Hz exceeds Nyquist")
    edges = np.arange(n_bands + 1) * float(band_width)
    band_e = np.empty((len(frames), n_bands))
    for b in range(n_bands):
        m = band_mask(freqs, edges[b], edges[b + 1], nyq)
        if not m.any():
            raise QualityError(f"band [{edges[b]}, {edges[b + 1]}) has no FFT bins; use a wider band")
        band_e[:, b] = power[:, m].sum(axis=1) * band_width / (m.sum() * bin_width)
    band_db = _power_db(band_e)
    labels = np.asarray(mask.labels, dtype=bool)
    active = band_db[labels].mean(axis=0) if labels.any() else None
    inactive = band_db[~labels].mean(axis=0) if (~labels).any() else None
    lo, hi = math.floor(band_db.min()), math.floor(band_db.max()) + 1
    hist_edges = np.arange(lo, hi + 1, dtype=np.float64)
    hists = np.stack([np.histogram(band_db[:, b], bins=hist_edges)[0] for b in range(n_bands)], axis=1)
    return SpectralReport(
        band_edges=edges,
        active_mean_db=active,
        inactive_mean_db=inactive,
        hist_edges_db=hist_edges,
        histograms=hists,
        spectrogram_db=_power_db(power),
        frame_times=np.arange(len(frames)) * mask.hop / rec.sample_rate,
        bin_freqs=freqs,
        n_active=int(labels.sum()),
        n_inactive=int((~labels).sum()),
    )


__all__ = [
    "VadMask", "QualityReport", "SpectralReport", "QualityError",
    "detect_voice_activity", "align_by_cross_correlation", "snr_vad", "nist_stnr",
    "wada_snr", "sar", "quality_report", "spectral_report", "common_rate_pair", "aligned_pair",
]
