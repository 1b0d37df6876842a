"""Near-ultrasonic multi-band on-off-keying modem.

The band ``[f_lo, f_hi)`` is cut into ``band_width`` sub-bands.  Every symbol
interval carries one bit per selected sub-band (tone at the band centre for 1,
silence for 0).  A frame is a maximal-length preamble sent on all selected
bands at once, then a 16-bit length field, the payload and a CRC-32, with bits
dealt round-robin across the bands.
"""

from __future__ import annotations

import dataclasses
import json
import math
import zlib
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .audio import AudioBuffer
from .capacity import BandSnrProfile, shannon_capacity
from .channel import ChannelModel, channel_response_db, simulate_channel

MAX_PAYLOAD = 0xFFFF
LENGTH_BITS = 16
CRC_BITS = 32
HEADER_BITS = LENGTH_BITS + CRC_BITS
THRESHOLD_TRACKING = 0.05
PLATEAU_TOLERANCE = 0.01


class ModemError(Exception):
    """Base class for demodulation failures."""


class NoPreambleError(ModemError):
    def __init__(self, best_correlation: float):
        super().__init__("no preamble found")
        self.best_correlation = best_correlation


class TruncatedFrameError(ModemError):
    def __init__(self, length: int):
        super().__init__(f"length field ({length} bytes) exceeds remaining signal")
        self.length = length


class CrcMismatchError(ModemError):
    def __init__(self, payload: bytes):
        super().__init__("CRC mismatch")
        self.payload = payload


class BandAllocationError(ValueError):
    def __init__(self, best_snr_db: float, min_snr_db: float):
        super().__init__(f"no band reaches {min_snr_db:.1f} dB (best available {best_snr_db:.1f} dB)")
        self.best_snr_db = best_snr_db


@dataclass(frozen=True)
class ModemConfig:
    f_lo: float = 14000.0
    f_hi: float = 21000.0
    band_width: float = 100.0
    symbol_ms: float = 20.0
    sample_rate: int = 44100
    preamble_len: int = 63
    amplitude_per_band: float = 0.01
    ramp_ms: float = 2.0
    detect_threshold: float = 0.6

    def __post_init__(self):
        if self.f_hi > self.sample_rate / 2:
            raise ValueError(f"f_hi {self.f_hi} Hz exceeds Nyquist {self.sample_rate / 2} Hz")
        k = (self.f_hi - self.f_lo) / self.band_width
        if k < 1 or abs(k - round(k)) > 1e-9:
            raise ValueError("(f_hi - f_lo) / band_width must be a positive integer")
        order = math.log2(self.preamble_len + 1)
        if order != int(order) or order < 2:
            raise ValueError("preamble_len must be 2**m - 1 for a maximal-length sequence")
        if not 0 < 2 * self.ramp_ms <= self.symbol_ms:
            raise ValueError("ramps must fit inside a symbol")

    @property
    def n_bands(self) -> int:
        return int(round((self.f_hi - self.f_lo) / self.band_width))

    @property
    def band_centers(self) -> np.ndarray:
        return self.f_lo + self.band_width * (np.arange(self.n_bands) + 0.5)

    @property
    def symbol_len(self) -> int:
        return int(round(self.symbol_ms * self.sample_rate / 1000.0))

    @property
    def raw_bit_rate(self) -> float:
        return self.n_bands * 1000.0 / self.symbol_ms

    def all_bands(self) -> tuple[int, ...]:
        return tuple(range(self.n_bands))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> ModemConfig:
        unknown = set(doc) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown modem config fields: {sorted(unknown)}")
        return cls(**doc)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> ModemConfig:
        return cls.from_dict(json.loads(text))


def preamble_bits(length: int = 63) -> np.ndarray:
    order = int(round(math.log2(length + 1)))
    return signal.max_len_seq(order)[0].astype(np.uint8)


# --------------------------------------------------------------------- frames


def _bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def _bits_to_bytes(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


@dataclass(frozen=True)
class ModemFrame:
    payload: bytes
    preamble: np.ndarray = dataclasses.field(default_factory=lambda: preamble_bits(63))

    def __post_init__(self):
        if len(self.payload) > MAX_PAYLOAD:
            raise ValueError(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}")

    @property
    def header(self) -> bytes:
        return len(self.payload).to_bytes(2, "big")

    @property
    def checksum(self) -> int:
        return zlib.crc32(self.header + self.payload)

    def data_bits(self) -> np.ndarray:
        """Length field, payload and CRC, MSB first."""
        return _bytes_to_bits(self.header + self.payload + self.checksum.to_bytes(4, "big"))

    def bits(self) -> np.ndarray:
        return np.concatenate([self.preamble, self.data_bits()])


def parse_data_bits(bits: np.ndarray) -> bytes:
    """Inverse of ``ModemFrame.data_bits``; raises ``CrcMismatchError`` on corruption."""
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) < HEADER_BITS:
        raise TruncatedFrameError(0)
    length = int.from_bytes(_bits_to_bytes(bits[:LENGTH_BITS]), "big")
    need = HEADER_BITS + 8 * length
    if len(bits) < need:
        raise TruncatedFrameError(length)
    raw = _bits_to_bytes(bits[:need])
    header, payload, crc = raw[:2], raw[2:-4], int.from_bytes(raw[-4:], "big")
    if zlib.crc32(header + payload) != crc:
        raise CrcMismatchError(payload)
    return payload


# ----------------------------------------------------------------- modulation


def _resolve_bands(config: ModemConfig, bands) -> np.ndarray:
    idx = np.asarray(config.all_bands() if bands is None else tuple(bands), dtype=int)
    if len(idx) == 0:
        raise ValueError("at least one band is required")
    if idx.min() < 0 or idx.max() >= config.n_bands or len(set(idx.tolist())) != len(idx):
        raise ValueError(f"band indices must be distinct and within 0..{config.n_bands - 1}")
    return np.sort(idx)


def _ramp_len(config: ModemConfig) -> int:
    return int(round(config.ramp_ms * config.sample_rate / 1000.0))


def symbol_window(config: ModemConfig) -> np.ndarray:
    """Flat-top window with raised-cosine ramps at both ends."""
    n = config.symbol_len
    r = _ramp_len(config)
    w = np.ones(n)
    ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(r) + 0.5) / r)
    w[:r] = ramp
    w[n - r:] = ramp[::-1]
    return w


def _tone_bank(config: ModemConfig, bands: np.ndarray) -> np.ndarray:
    """(K, S) per-symbol tone segments; quadratic phases keep the crest factor low."""
    k = len(bands)
    m = np.arange(config.symbol_len)
    freqs = config.band_centers[bands]
    phases = np.pi * np.arange(k) ** 2 / k
    return np.cos(2 * np.pi * np.outer(freqs, m) / config.sample_rate + phases[:, None])


def symbol_matrix(payload: bytes, config: ModemConfig, bands=None) -> np.ndarray:
    """On/off matrix (n_symbols, K) for a frame: preamble rows then data rows."""
    bands = _resolve_bands(config, bands)
    k = len(bands)
    frame = ModemFrame(bytes(payload), preamble_bits(config.preamble_len))
    data = frame.data_bits()
    n_data = -(-len(data) // k)
    padded = np.zeros(n_data * k, dtype=np.uint8)
    padded[: len(data)] = data
    pre = np.repeat(frame.preamble[:, None], k, axis=1)
    return np.vstack([pre, padded.reshape(n_data, k)])


def modulate(payload: bytes, config: ModemConfig, bands=None) -> AudioBuffer:
    """Audio for one frame carrying ``payload`` on the selected bands."""
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    bands = _resolve_bands(config, bands)
    onoff = symbol_matrix(payload, config, bands).astype(np.float64)
    blocks = (onoff @ _tone_bank(config, bands)) * symbol_window(config)
    return AudioBuffer(config.amplitude_per_band * blocks.ravel(), config.sample_rate)


def out_of_band_ratio(buffer: AudioBuffer, config: ModemConfig, guard_hz: float = 500.0) -> float:
    """Power below ``f_lo - guard_hz`` plus above ``f_hi + guard_hz``, over power in ``[f_lo, f_hi]``."""
    p = np.abs(np.fft.rfft(buffer.mono)) ** 2
    f = np.fft.rfftfreq(len(buffer), 1.0 / buffer.sample_rate)
    inband = p[(f >= config.f_lo) & (f <= config.f_hi)].sum()
    outside = p[(f < config.f_lo - guard_hz) | (f > config.f_hi + guard_hz)].sum()
    return float(outside / inband) if inband > 0 else math.inf


def frame_duration_s(payload_len: int, config: ModemConfig, n_bands: int | None = None) -> float:
    k = n_bands or config.n_bands
    n_sym = config.preamble_len + -(-(HEADER_BITS + 8 * payload_len) // k)
    return n_sym * config.symbol_len / config.sample_rate


# --------------------------------------------------------------- demodulation


def _inband(x: np.ndarray, config: ModemConfig, bands: np.ndarray) -> np.ndarray:
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(len(x), 1.0 / config.sample_rate)
    keep = np.zeros(len(freqs), dtype=bool)
    for c in config.band_centers[bands]:
        keep |= np.abs(freqs - c) <= config.band_width / 2
    spec[~keep] = 0.0
    return np.fft.irfft(spec, len(x))


def preamble_correlation(x: np.ndarray, config: ModemConfig, bands=None) -> np.ndarray:
    """Pearson correlation between the in-band energy envelope, sampled once per
    symbol, and the preamble, for every candidate start sample."""
    bands = _resolve_bands(config, bands)
    s, p = config.symbol_len, config.preamble_len
    if len(x) < p * s:
        return np.zeros(0)
    y = _inband(np.asarray(x, dtype=np.float64), config, bands)
    c = np.concatenate([[0.0], np.cumsum(y * y)])
    env = c[s:] - c[:-s]
    n_off = len(env) - (p - 1) * s
    t = preamble_bits(p).astype(np.float64) - preamble_bits(p).mean()
    a = np.zeros(n_off)
    b = np.zeros(n_off)
    q = np.zeros(n_off)
    for i in range(p):
        e = env[i * s : i * s + n_off]
        a += t[i] * e
        b += e
        q += e * e
    var_e = q - b * b / p
    denom = np.sqrt(np.sum(t * t) * np.maximum(var_e, 0.0))
    scale = max(float(np.max(np.abs(var_e))), 1e-300)
    ok = var_e > 1e-12 * scale
    return np.where(ok, a / np.where(ok, denom, 1.0), 0.0)


def detect_preamble(x: np.ndarray, config: ModemConfig, bands=None) -> tuple[int, float]:
    """Start sample of the first preamble whose correlation crosses the threshold."""
    # Leading silence keeps the plateau whole when the frame starts at sample 0.
    pad = config.symbol_len
    r = preamble_correlation(np.concatenate([np.zeros(pad), np.asarray(x, dtype=np.float64)]), config, bands)
    if len(r) == 0:
        raise NoPreambleError(0.0)
    hits = np.flatnonzero(r >= config.detect_threshold)
    if len(hits) == 0:
        raise NoPreambleError(float(r.max()))
    first = hits[0]
    window = r[first : first + config.symbol_len]
    peak = int(np.argmax(window))
    # Flat-top symbols give a plateau a few samples wide; take its centre.
    near = window >= window[peak] - PLATEAU_TOLERANCE
    lo = peak
    while lo > 0 and near[lo - 1]:
        lo -= 1
    hi = peak
    while hi + 1 < len(window) and near[hi + 1]:
        hi += 1
    centre = first + (lo + hi) // 2
    return max(0, int(centre) - pad), float(r[centre])


def symbol_energies(x: np.ndarray, start: int, n_symbols: int, config: ModemConfig, bands) -> np.ndarray:
    """(n_symbols, K) energy at each band centre over each symbol window."""
    s = config.symbol_len
    seg = np.asarray(x[start : start + n_symbols * s], dtype=np.float64)
    if len(seg) < n_symbols * s:
        raise TruncatedFrameError(-1)
    m = np.arange(s)
    probes = np.exp(-2j * np.pi * np.outer(m, config.band_centers[bands]) / config.sample_rate)
    return np.abs(seg.reshape(n_symbols, s) @ probes) ** 2


class _Slicer:
    """Per-band midpoint slicer; on/off levels start from the preamble and track decisions."""

    def __init__(self, pre_energy: np.ndarray, pre_bits: np.ndarray):
        on = pre_bits.astype(bool)
        self.on = pre_energy[on].mean(axis=0)
        self.off = pre_energy[~on].mean(axis=0)

    def decide(self, energy_rows: np.ndarray) -> np.ndarray:
        out = np.empty(energy_rows.shape, dtype=np.uint8)
        a = THRESHOLD_TRACKING
        for i, e in enumerate(energy_rows):
            bit = e >= 0.5 * (self.on + self.off)
            out[i] = bit
            self.on = np.where(bit, (1 - a) * self.on + a * e, self.on)
            self.off = np.where(bit, self.off, (1 - a) * self.off + a * e)
        return out


@dataclass(frozen=True)
class DemodResult:
    payload: bytes
    start: int
    correlation: float
    data_bits: np.ndarray


def decide_data_bits(x: np.ndarray, start: int, config: ModemConfig, bands, n_data_bits: int | None = None) -> np.ndarray:
    """Slice the data bits of a frame whose preamble begins at ``start``.

    With ``n_data_bits=None`` the count is read from the decoded length field.
    """
    bands = _resolve_bands(config, bands)
    k, s, p = len(bands), config.symbol_len, config.preamble_len
    # A timing error inside the trailing ramp only loses ramp energy.
    x = np.concatenate([np.asarray(x, dtype=np.float64), np.zeros(_ramp_len(config))])
    pre = symbol_energies(x, start, p, config, bands)
    slicer = _Slicer(pre, preamble_bits(p))
    data_start = start + p * s
    if n_data_bits is None:
        n_len_sym = -(-LENGTH_BITS // k)
        if data_start + n_len_sym * s > len(x):
            raise TruncatedFrameError(0)
        first = slicer.decide(symbol_energies(x, data_start, n_len_sym, config, bands)).ravel()
        length = int.from_bytes(_bits_to_bytes(first[:LENGTH_BITS]), "big")
        n_data_bits = HEADER_BITS + 8 * length
        n_sym = -(-n_data_bits // k)
        if data_start + n_sym * s > len(x):
            raise TruncatedFrameError(length)
        rest = slicer.decide(symbol_energies(x, data_start + n_len_sym * s, n_sym - n_len_sym, config, bands))
        bits = np.concatenate([first, rest.ravel()])
    else:
        n_sym = -(-n_data_bits // k)
        bits = slicer.decide(symbol_energies(x, data_start, n_sym, config, bands)).ravel()
    return bits[:n_data_bits]


def demodulate_frame(buffer: AudioBuffer, config: ModemConfig, bands=None) -> DemodResult:
    if buffer.sample_rate != config.sample_rate:
        raise ValueError(f"buffer rate {buffer.sample_rate} Hz differs from modem rate {config.sample_rate} Hz")
    bands = _resolve_bands(config, bands)
    x = buffer.to_mono().mono
    start, corr = detect_preamble(x, config, bands)
    bits = decide_data_bits(x, start, config, bands)
    return DemodResult(parse_data_bits(bits), start, corr, bits)


def demodulate(buffer: AudioBuffer, config: ModemConfig, bands=None) -> bytes:
    """Recover the payload of the first frame in ``buffer``.

    Raises ``NoPreambleError``, ``TruncatedFrameError`` or ``CrcMismatchError``
    (the latter carries the best-effort payload).
    """
    return demodulate_frame(buffer, config, bands).payload


# ------------------------------------------------------------ band allocation


def allocate_bands(profile: BandSnrProfile, config: ModemConfig, min_snr_db: float) -> tuple[int, ...]:
    """Indices (into the config's band grid) of sub-bands profiled at >= ``min_snr_db``."""
    snrs = []
    for lo in config.f_lo + config.band_width * np.arange(config.n_bands):
        if not np.any(np.isclose(profile.f_lo, lo)) or not np.any(np.isclose(profile.f_hi, lo + config.band_width)):
            raise ValueError(f"profile does not cover modem band starting at {lo:g} Hz")
        snrs.append(profile.snr_at(lo))
    snrs = np.array(snrs)
    chosen = tuple(int(i) for i in np.flatnonzero(snrs >= min_snr_db))
    if not chosen:
        raise BandAllocationError(float(snrs.max()), min_snr_db)
    return chosen


# ------------------------------------------------------------------ BER test


@dataclass(frozen=True)
class BerReport:
    bits_sent: int
    bit_errors: int
    frames_sent: int
    frames_recovered: int
    audio_seconds: float
    effective_throughput: float
    payload_rate: float
    capacity_bound: float
    n_bands: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_sent if self.bits_sent else 0.0

    @property
    def within_capacity(self) -> bool:
        return self.effective_throughput <= self.capacity_bound

    def to_dict(self) -> dict:
        return {
            "bits_sent": self.bits_sent,
            "bit_errors": self.bit_errors,
            "ber": self.ber,
            "frames_sent": self.frames_sent,
            "frames_recovered": self.frames_recovered,
            "audio_seconds": self.audio_seconds,
            "effective_throughput_bps": self.effective_throughput,
            "payload_rate_bps": self.payload_rate,
            "capacity_bound_bps": self.capacity_bound,
            "within_capacity": self.within_capacity,
            "n_bands": self.n_bands,
        }


def band_noise_power(model: ChannelModel, config: ModemConfig) -> float:
    """White-noise power falling in one sub-band."""
    return model.noise_rms**2 * config.band_width / (config.sample_rate / 2.0)


def predicted_band_snr_db(config: ModemConfig, model: ChannelModel, bands=None) -> np.ndarray:
    """Tone-over-band-noise SNR of each selected band after the channel."""
    bands = _resolve_bands(config, bands)
    gain_db = channel_response_db(model, config.band_centers[bands], config.sample_rate)
    tone_power = 0.5 * config.amplitude_per_band**2 * 10.0 ** (gain_db / 10.0)
    noise = band_noise_power(model, config)
    if noise == 0.0:
        return np.full(len(bands), np.inf)
    return 10.0 * np.log10(tone_power / noise)


def noise_floor_for_band_snr(config: ModemConfig, snr_db: float, gain_db: float = 0.0) -> float:
    """Noise level (dBFS) that puts each unfiltered tone ``snr_db`` over its band noise."""
    tone_power = 0.5 * config.amplitude_per_band**2 * 10.0 ** (gain_db / 10.0)
    sigma2 = tone_power / 10.0 ** (snr_db / 10.0) * (config.sample_rate / 2.0) / config.band_width
    return 10.0 * math.log10(sigma2)


def ber_test(config: ModemConfig, model: ChannelModel, n_bits: int = 100_000, seed: int = 0,
             bands=None, payload_bytes: int = 1024, guard_s: float = 0.05) -> BerReport:
    """Send random frames through ``simulate_channel`` and count bit errors.

    Bit errors are counted on payload bits sliced at the known frame position
    (the sender's bits serve as oracle).  A frame counts as recovered when the
    blind receiver (preamble search + CRC) returns its payload.  Effective
    throughput is recovered payload bits over total audio time, guard silence
    included.
    """
    if n_bits < 1000:
        raise ValueError("n_bits must be >= 1000")
    bands = _resolve_bands(config, bands)
    rng = np.random.default_rng(seed)
    guard = np.zeros(int(round(guard_s * config.sample_rate)))
    n_frames = -(-n_bits // (8 * payload_bytes))
    bits_sent = errors = recovered = 0
    seconds = 0.0
    for f in range(n_frames):
        payload = rng.bytes(payload_bytes)
        tx = modulate(payload, config, bands)
        audio = AudioBuffer(np.concatenate([guard, tx.mono, guard]), config.sample_rate)
        noise_seed = int(np.random.SeedSequence([seed, f]).generate_state(1)[0])
        rx = simulate_channel(audio, model.replace(noise_seed=noise_seed)).mono
        seconds += len(rx) / config.sample_rate
        sent = ModemFrame(payload).data_bits()
        got = decide_data_bits(rx, len(guard), config, bands, len(sent))
        body = slice(LENGTH_BITS, LENGTH_BITS + 8 * payload_bytes)
        bits_sent += 8 * payload_bytes
        errors += int(np.count_nonzero(got[body] != sent[body]))
        try:
            if demodulate(AudioBuffer(rx, config.sample_rate), config, bands) == payload:
                recovered += 1
        except ModemError:
            pass
    snr = predicted_band_snr_db(config, model, bands)
    bound = sum(shannon_capacity(config.band_width, 10.0 ** (s / 10.0)) for s in snr) if np.all(np.isfinite(snr)) else math.inf
    return BerReport(
        bits_sent=bits_sent,
        bit_errors=errors,
        frames_sent=n_frames,
        frames_recovered=recovered,
        audio_seconds=seconds,
        effective_throughput=recovered * 8 * payload_bytes / seconds,
        payload_rate=bits_sent / seconds,
        capacity_bound=bound,
        n_bands=len(bands),
    )
