"""Parametric headphone-as-microphone channel and the L/R combining experiment.

The channel is distance gain (inverse-distance spreading), a low-pass built
from real first-order sections, and additive white Gaussian noise.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, signal

from .audio import AudioBuffer, AudioError
from .quality import align_by_cross_correlation

OCTAVE_DB = 20.0 * math.log10(2.0)  # one first-order section, dB/octave asymptote


@dataclass(frozen=True)
class ChannelModel:
    """Channel parameters.  ``corner_hz=inf`` or ``rolloff_db_per_octave=0``
    disables the low-pass; ``noise_floor_dbfs=-inf`` disables the noise."""

    distance_m: float = 1.0
    reference_gain_db: float = -10.0
    corner_hz: float = 1500.0
    rolloff_db_per_octave: float = 12.0
    noise_floor_dbfs: float = -60.0
    noise_seed: int = 0
    spreading: bool = True

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ValueError(f"distance_m must be > 0, got {self.distance_m}")
        if not self.corner_hz > 0:
            raise ValueError(f"corner_hz must be > 0, got {self.corner_hz}")
        if not self.rolloff_db_per_octave >= 0:
            raise ValueError(f"rolloff must be >= 0, got {self.rolloff_db_per_octave}")

    @classmethod
    def identity(cls) -> ChannelModel:
        return cls(reference_gain_db=0.0, corner_hz=math.inf, rolloff_db_per_octave=0.0,
                   noise_floor_dbfs=-math.inf, spreading=False)

    @classmethod
    def microphone(cls, **overrides) -> ChannelModel:
        """A wide-band reference capture: same chain with the corner at 8 kHz."""
        return cls(**{"corner_hz": 8000.0, **overrides})

    def replace(self, **changes) -> ChannelModel:
        return dataclasses.replace(self, **changes)

    @property
    def gain_db(self) -> float:
        spread = 20.0 * math.log10(self.distance_m) if self.spreading else 0.0
        return self.reference_gain_db - spread

    @property
    def has_filter(self) -> bool:
        return math.isfinite(self.corner_hz) and self.rolloff_db_per_octave > 0

    @property
    def has_noise(self) -> bool:
        return math.isfinite(self.noise_floor_dbfs)

    @property
    def noise_rms(self) -> float:
        return 10.0 ** (self.noise_floor_dbfs / 20.0) if self.has_noise else 0.0

    def ideal_response_db(self, freq_hz) -> np.ndarray:
        """Analog prototype magnitude (dB) of gain plus low-pass at ``freq_hz``."""
        f = np.asarray(freq_hz, dtype=np.float64)
        lp = 0.0
        if self.has_filter:
            order = self.rolloff_db_per_octave / OCTAVE_DB
            lp = -10.0 * order * np.log10(1.0 + (f / self.corner_hz) ** 2)
        return self.gain_db + lp

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("corner_hz", "noise_floor_dbfs"):
            if not math.isfinite(out[key]):
                out[key] = None
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> ChannelModel:
        doc = dict(doc)
        unknown = set(doc) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown channel model fields: {sorted(unknown)}")
        if "corner_hz" in doc and doc["corner_hz"] is None:
            doc["corner_hz"] = math.inf
        if "noise_floor_dbfs" in doc and doc["noise_floor_dbfs"] is None:
            doc["noise_floor_dbfs"] = -math.inf
        return cls(**doc)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> ChannelModel:
        return cls.from_dict(json.loads(text))


# ------------------------------------------------------------- low-pass design


@lru_cache(maxsize=64)
def lowpass_sections(corner_hz: float, rolloff_db_per_octave: float, sample_rate: int) -> np.ndarray:
    """Second-order-section array of real first-order low-pass sections.

    Poles and zeros are fitted jointly so the cascade tracks the analog response
    ``(1 + (f/fc)^2) ** (-order/2)``, ``order = rolloff / 6.02``, up to Nyquist
    (bilinear or impulse-invariant sections drift by several dB near Nyquist at
    low sample rates).  Unity gain at DC.
    """
    order = rolloff_db_per_octave / OCTAVE_DB
    n = max(1, math.ceil(order - 1e-6))
    nyq = sample_rate / 2.0
    f = np.geomspace(min(corner_hz / 8.0, sample_rate / 16.0), nyq, 300)
    c = np.cos(2.0 * np.pi * f / sample_rate)
    target = -10.0 * order * np.log10(1.0 + (f / corner_hz) ** 2)

    def response_db(x):
        poles, zeros = np.tanh(x[:n]), np.tanh(x[n:])
        total = np.zeros_like(f)
        for p, z in zip(poles, zeros):
            num = (1.0 + z * z - 2.0 * z * c) / (1.0 - z) ** 2
            den = (1.0 + p * p - 2.0 * p * c) / (1.0 - p) ** 2
            total += 10.0 * np.log10(num / den)
        return total

    p0 = math.exp(-2.0 * math.pi * min(corner_hz, nyq) / sample_rate)
    x0 = np.concatenate([
        np.arctanh(np.clip(p0 + 0.02 * (np.arange(n) - (n - 1) / 2), -0.99, 0.99)),
        np.arctanh(-0.2 - 0.05 * np.arange(n)),
    ])
    fit = optimize.least_squares(lambda x: response_db(x) - target, x0)
    # Push from least squares towards minimax with an L8 refinement.
    fit = optimize.minimize(
        lambda x: np.sum((response_db(x) - target) ** 8) ** 0.125, fit.x,
        method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 8000},
    )
    sos = []
    for p, z in zip(np.tanh(fit.x[:n]), np.tanh(fit.x[n:])):
        g = (1.0 - p) / (1.0 - z)
        sos.append([g, -g * z, 0.0, 1.0, -p, 0.0])
    return np.array(sos)


def channel_response_db(model: ChannelModel, freq_hz, sample_rate: int) -> np.ndarray:
    """Magnitude response (dB) of the realized digital channel, noise excluded."""
    f = np.atleast_1d(np.asarray(freq_hz, dtype=np.float64))
    mag = np.full(f.shape, model.gain_db)
    if model.has_filter:
        _, h = signal.sosfreqz(lowpass_sections(model.corner_hz, model.rolloff_db_per_octave, sample_rate),
                               worN=f, fs=sample_rate)
        mag = mag + 20.0 * np.log10(np.maximum(np.abs(h), 1e-300))
    return mag


# ----------------------------------------------------------------- simulation


def _signal_path(x: np.ndarray, model: ChannelModel, sample_rate: int) -> np.ndarray:
    y = x
    if model.gain_db != 0.0:
        y = y * 10.0 ** (model.gain_db / 20.0)
    if model.has_filter:
        y = signal.sosfilt(lowpass_sections(model.corner_hz, model.rolloff_db_per_octave, sample_rate), y)
    return y


def simulate_channel(buffer: AudioBuffer, model: ChannelModel) -> AudioBuffer:
    """Pass a mono buffer through the channel; output has the input's length."""
    y = _signal_path(buffer.mono, model, buffer.sample_rate)
    if model.has_noise:
        rng = np.random.default_rng(model.noise_seed)
        y = y + model.noise_rms * rng.standard_normal(len(y))
    return AudioBuffer(y, buffer.sample_rate)


def correlated_noise(n: int, rho: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit-variance pair with correlation ``rho``: ``g`` and ``rho*g + sqrt(1-rho^2)*h``."""
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"noise correlation must lie in [-1, 1], got {rho}")
    seeds = np.random.SeedSequence(seed).spawn(2)
    g = np.random.default_rng(seeds[0]).standard_normal(n)
    h = np.random.default_rng(seeds[1]).standard_normal(n)
    return g, rho * g + math.sqrt(1.0 - rho * rho) * h


def stereo_capture(buffer: AudioBuffer, model: ChannelModel, noise_correlation: float) -> AudioBuffer:
    """Two capture channels sharing one signal path, with correlated noise."""
    y = _signal_path(buffer.mono, model, buffer.sample_rate)
    n1, n2 = correlated_noise(len(y), noise_correlation, model.noise_seed)
    sigma = model.noise_rms
    return AudioBuffer(np.vstack([y + sigma * n1, y + sigma * n2]), buffer.sample_rate)


def _combine(left: np.ndarray, right: np.ndarray, sample_rate: int) -> tuple[np.ndarray, int]:
    max_lag = min(int(round(0.010 * sample_rate)), len(left) - 1)
    lag = align_by_cross_correlation(AudioBuffer(left, sample_rate), AudioBuffer(right, sample_rate), max_lag)
    if lag >= 0:
        l, r = left[: len(left) - lag], right[lag:]
    else:
        l, r = left[-lag:], right[: len(right) + lag]
    if len(l) == 0:
        raise AudioError("channels have no overlap after alignment")
    return 0.5 * (l + r), lag


def combine_channels(stereo: AudioBuffer) -> AudioBuffer:
    """Align the right channel to the left (|lag| <= 10 ms) and average the overlap."""
    if stereo.channels != 2:
        raise AudioError("combine_channels needs a 2-channel buffer")
    avg, _ = _combine(stereo.channel(0), stereo.channel(1), stereo.sample_rate)
    return AudioBuffer(avg, stereo.sample_rate)


@dataclass(frozen=True)
class CombiningResult:
    snr_left_db: float
    snr_right_db: float
    snr_combined_db: float
    gain_db: float
    noise_correlation: float
    trials: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _snr_db(clean: np.ndarray, observed: np.ndarray) -> float:
    noise = np.sum((observed - clean) ** 2)
    if noise == 0.0:
        return math.inf
    return 10.0 * math.log10(np.sum(clean**2) / noise)


def expected_combining_gain_db(noise_correlation: float) -> float:
    """Averaging gain for equal-power noise with the given correlation."""
    return 10.0 * math.log10(2.0 / (1.0 + noise_correlation))


def default_probe(sample_rate: int = 44100, seconds: float = 1.0, seed: int = 1234) -> AudioBuffer:
    """Broadband noise probe; wide-band so the L/R alignment peak is unique."""
    rng = np.random.default_rng(seed)
    return AudioBuffer(0.3 * rng.standard_normal(int(round(seconds * sample_rate))), sample_rate)


def combining_gain_experiment(model: ChannelModel, noise_correlation: float,
                              probe: AudioBuffer | None = None, trials: int = 100) -> CombiningResult:
    """Measure the SNR gain of L/R averaging against the known clean channel output.

    Trial ``t`` uses noise seed ``model.noise_seed + t``.  The reported SNRs are
    trial means and ``gain_db`` is derived from them.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not model.has_noise:
        raise ValueError("combining experiment needs a channel with noise")
    probe = probe if probe is not None else default_probe()
    clean = _signal_path(probe.mono, model, probe.sample_rate)
    left_snr, right_snr, comb_snr = [], [], []
    for t in range(trials):
        stereo = stereo_capture(probe, model.replace(noise_seed=model.noise_seed + t), noise_correlation)
        left, right = stereo.channel(0), stereo.channel(1)
        avg, lag = _combine(left, right, probe.sample_rate)
        ref = clean[: len(clean) - lag] if lag >= 0 else clean[-lag:]
        left_snr.append(_snr_db(clean, left))
        right_snr.append(_snr_db(clean, right))
        comb_snr.append(_snr_db(ref, avg))
    sl, sr, sc = (float(np.mean(v)) for v in (left_snr, right_snr, comb_snr))
    return CombiningResult(sl, sr, sc, sc - (sl + sr) / 2.0, float(noise_correlation), trials)
