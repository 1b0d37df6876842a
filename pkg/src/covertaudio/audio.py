"""Audio buffers, WAV I/O, framing and spectral primitives.

Every other module in the package passes signals around as :class:`AudioBuffer`
instances.  Samples are always held as float64 in the nominal range [-1, 1],
whatever the on-disk encoding was.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal
from scipy.io import wavfile


class AudioError(ValueError):
    """Raised for malformed audio input or invalid analysis parameters."""


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Sampled audio, shape ``(channels, n)``, with its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        data = np.array(self.samples, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2 or data.shape[0] not in (1, 2):
            raise AudioError(f"expected 1 or 2 channels, got array of shape {data.shape}")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise AudioError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if not np.all(np.isfinite(data)):
            raise AudioError("samples must be finite")
        data.flags.writeable = False
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_seconds(self) -> Fraction:
        return Fraction(len(self), self.sample_rate)

    @property
    def mono(self) -> np.ndarray:
        """The single channel of a mono buffer (read-only view)."""
        if self.channels != 1:
            raise AudioError("operation requires a mono buffer")
        return self.samples[0]

    def channel(self, index: int) -> np.ndarray:
        return self.samples[index]

    def to_mono(self) -> AudioBuffer:
        """Average the channels; mono buffers are returned unchanged."""
        if self.channels == 1:
            return self
        return AudioBuffer(self.samples.mean(axis=0), self.sample_rate)

    def __eq__(self, other):
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    __hash__ = None


@dataclass(frozen=True)
class FrameSequence:
    frames: np.ndarray  # (n_frames, frame_len)
    frame_len: int
    hop: int
    origin_rate: int

    def __len__(self) -> int:
        return self.frames.shape[0]

    def power(self) -> np.ndarray:
        """Mean-square power of each frame."""
        return np.mean(self.frames**2, axis=1)


@dataclass(frozen=True)
class SpectralFrame:
    power: np.ndarray
    bin_width: float
    window: str = "hann"

    @property
    def nyquist(self) -> float:
        return (len(self.power) - 1) * self.bin_width

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(len(self.power)) * self.bin_width

    def total_power(self) -> float:
        return float(np.sum(self.power))


# --------------------------------------------------------------------------- WAV

_PCM = 1
_IEEE_FLOAT = 3


def read_wav(path) -> AudioBuffer:
    """Read a PCM-16 or float32 WAV file into a normalized buffer.

    PCM-16 value ``v`` maps to ``v / 32768``.
    """
    try:
        rate, data = wavfile.read(os.fspath(path))
    except FileNotFoundError:
        raise
    except (ValueError, OSError, struct.error) as exc:
        raise AudioError(f"cannot read WAV file {path}: {exc}") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioError(f"unsupported WAV encoding {data.dtype} in {path}; need PCM-16 or float32")
    if samples.shape[0] == 0:
        raise AudioError(f"WAV file {path} has an empty data chunk")
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise AudioError(f"{samples.shape[1]}-channel audio is not supported")
        samples = samples.T
    return AudioBuffer(samples, rate)


def _wav_bytes(buffer: AudioBuffer, encoding: str) -> bytes:
    interleaved = buffer.samples.T
    if encoding == "pcm16":
        scaled = np.round(np.clip(interleaved, -1.0, 1.0) * 32768.0)
        payload = np.clip(scaled, -32768, 32767).astype("<i2").tobytes()
        fmt_tag, width = _PCM, 2
    elif encoding == "float32":
        payload = interleaved.astype("<f4").tobytes()
        fmt_tag, width = _IEEE_FLOAT, 4
    else:
        raise AudioError(f"unknown encoding {encoding!r}; use 'pcm16' or 'float32'")
    ch, rate = buffer.channels, buffer.sample_rate
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, fmt_tag, ch, rate, rate * ch * width, ch * width, 8 * width,
        b"data", len(payload),
    )
    return header + payload


def write_wav(buffer: AudioBuffer, path, encoding: str = "pcm16") -> None:
    """Write a canonical 44-byte-header RIFF/WAVE file.

    pcm16 clamps amplitudes to [-1, 1] before scaling, so +1.0 is stored as 32767.
    """
    if len(buffer) == 0:
        raise AudioError("refusing to write an empty buffer")
    blob = _wav_bytes(buffer, encoding)
    path = os.fspath(path)
    tmp = f"{path}.part"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


# ------------------------------------------------------------------- framing


def ms_to_samples(ms: float, sample_rate: int) -> int:
    return int(round(ms * sample_rate / 1000.0))


def frame_array(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Strided ``(n_frames, frame_len)`` view; trailing partial frame dropped."""
    if not frame_len >= hop >= 1:
        raise AudioError(f"need frame_len >= hop >= 1, got frame_len={frame_len}, hop={hop}")
    if len(x) < frame_len:
        raise AudioError(f"signal of {len(x)} samples is shorter than one frame ({frame_len})")
    return np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop]


def frame_signal(buffer: AudioBuffer, frame_ms: float, hop_ms: float) -> FrameSequence:
    if not frame_ms >= hop_ms > 0:
        raise AudioError(f"need frame_ms >= hop_ms > 0, got {frame_ms}, {hop_ms}")
    frame_len = ms_to_samples(frame_ms, buffer.sample_rate)
    hop = ms_to_samples(hop_ms, buffer.sample_rate)
    frames = frame_array(buffer.mono, frame_len, hop)
    return FrameSequence(frames, frame_len, hop, buffer.sample_rate)


# ------------------------------------------------------------------ spectra


def hann(n: int) -> np.ndarray:
    return signal.get_window("hann", n, fftbins=True)


def periodogram_frames(frames: np.ndarray, fft_len: int) -> np.ndarray:
    """One-sided Hann periodograms of each row of ``frames``.

    Scaled so that each row sums to the energy of the windowed frame.
    """
    frames = np.atleast_2d(frames)
    n = frames.shape[1]
    if fft_len < n or fft_len & (fft_len - 1):
        raise AudioError(f"fft_len must be a power of two >= frame length {n}, got {fft_len}")
    return one_sided_power(frames, fft_len)


def one_sided_power(frames: np.ndarray, fft_len: int) -> np.ndarray:
    """``periodogram_frames`` without the power-of-two restriction."""
    frames = np.atleast_2d(frames)
    n = frames.shape[1]
    spec = np.fft.rfft(frames * hann(n), n=fft_len, axis=1)
    power = np.abs(spec) ** 2 / fft_len
    # Interior bins stand in for their negative-frequency mirror.
    power[:, 1 : (fft_len + 1) // 2] *= 2.0
    return power


def power_spectrum(frame, fft_len: int, sample_rate: int) -> SpectralFrame:
    """Hann-tapered, zero-padded periodogram of one frame."""
    frame = np.asarray(frame, dtype=np.float64)
    power = periodogram_frames(frame[np.newaxis, :], fft_len)[0]
    return SpectralFrame(power, sample_rate / fft_len, "hann")


def band_mask(freqs: np.ndarray, f_lo: float, f_hi: float, nyquist: float) -> np.ndarray:
    """Bins with centre in ``[f_lo, f_hi)``; the Nyquist bin joins a band ending at Nyquist."""
    mask = (freqs >= f_lo) & (freqs < f_hi)
    if f_hi >= nyquist:
        mask |= freqs >= f_lo
    return mask


def band_power(spectrum: SpectralFrame, f_lo: float, f_hi: float) -> float:
    nyq = spectrum.nyquist
    if not 0 <= f_lo < f_hi <= nyq + 1e-9:
        raise AudioError(f"need 0 <= f_lo < f_hi <= {nyq}, got [{f_lo}, {f_hi})")
    mask = band_mask(spectrum.frequencies, f_lo, f_hi, nyq)
    if not mask.any():
        raise AudioError(f"band [{f_lo}, {f_hi}) Hz contains no spectral bins")
    return float(np.sum(spectrum.power[mask]))


def next_pow2(n: int) -> int:
    return 1 << max(0, math.ceil(math.log2(max(n, 1))))


# ---------------------------------------------------------------- resampling


def resample(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Polyphase resampling; output length is ``round(N * target / source)``."""
    if target_rate <= 0 or int(target_rate) != target_rate:
        raise AudioError(f"target_rate must be a positive integer, got {target_rate}")
    target_rate = int(target_rate)
    if target_rate == buffer.sample_rate:
        return buffer
    g = math.gcd(target_rate, buffer.sample_rate)
    up, down = target_rate // g, buffer.sample_rate // g
    out = signal.resample_poly(buffer.samples, up, down, axis=1)
    want = int(round(len(buffer) * target_rate / buffer.sample_rate))
    if out.shape[1] >= want:
        out = out[:, :want]
    else:
        out = np.pad(out, ((0, 0), (0, want - out.shape[1])))
    return AudioBuffer(out, target_rate)
