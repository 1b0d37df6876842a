import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covertaudio.audio import (
    AudioBuffer,
    AudioError,
    band_power,
    frame_signal,
    power_spectrum,
    read_wav,
    resample,
    write_wav,
)


def riff_pcm16(samples, rate=8000, channels=1):
    payload = struct.pack(f"<{len(samples)}h", *samples)
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, channels, rate, rate * channels * 2, channels * 2, 16,
        b"data", len(payload),
    )
    return header + payload


class TestWav:
    def test_silence_file(self, tmp_path):
        path = tmp_path / "silence.wav"
        path.write_bytes(riff_pcm16([0] * 8000))
        buf = read_wav(path)
        assert buf.sample_rate == 8000
        assert len(buf) == 8000
        assert not np.any(buf.mono)

    def test_full_scale_positive_bytes(self, tmp_path):
        path = tmp_path / "max.wav"
        path.write_bytes(riff_pcm16([32767] * 100))
        assert np.all(read_wav(path).mono == 32767 / 32768)

    def test_written_header_is_canonical(self, tmp_path):
        path = tmp_path / "x.wav"
        write_wav(AudioBuffer(np.zeros(10), 8000), path)
        raw = path.read_bytes()
        assert len(raw) == 44 + 20
        assert raw[:4] == b"RIFF" and raw[8:16] == b"WAVEfmt "
        assert raw[36:40] == b"data"

    def test_pcm16_round_trip_within_one_lsb(self, tmp_path):
        rng = np.random.default_rng(3)
        buf = AudioBuffer(rng.uniform(-1, 1, (2, 4000)), 44100)
        write_wav(buf, tmp_path / "a.wav")
        back = read_wav(tmp_path / "a.wav")
        assert back.channels == 2
        assert np.max(np.abs(back.samples - buf.samples)) <= 1 / 32768

    def test_float32_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(4)
        path = tmp_path / "f.wav"
        for _ in range(1000):
            x = rng.standard_normal(int(rng.integers(1, 64))).astype(np.float32)
            write_wav(AudioBuffer(x, 16000), path, encoding="float32")
            assert np.array_equal(read_wav(path).mono, x.astype(np.float64))

    def test_clamp_on_pcm16(self, tmp_path):
        write_wav(AudioBuffer(np.array([2.0, -3.0, 1.0]), 8000), tmp_path / "c.wav")
        raw = (tmp_path / "c.wav").read_bytes()[44:]
        assert struct.unpack("<3h", raw) == (32767, -32768, 32767)

    def test_missing_directory_leaves_nothing(self, tmp_path):
        target = tmp_path / "nope" / "x.wav"
        with pytest.raises(OSError):
            write_wav(AudioBuffer(np.zeros(8), 8000), target)
        assert not (tmp_path / "nope").exists()

    def test_empty_data_chunk_rejected(self, tmp_path):
        path = tmp_path / "empty.wav"
        path.write_bytes(riff_pcm16([]))
        with pytest.raises(AudioError):
            read_wav(path)

    def test_unsupported_encoding_rejected(self, tmp_path):
        path = tmp_path / "u8.wav"
        payload = bytes([128] * 16)
        header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + 16, b"WAVE", b"fmt ", 16, 1, 1, 8000,
                             8000, 1, 8, b"data", 16)
        path.write_bytes(header + payload)
        with pytest.raises(AudioError, match="unsupported"):
            read_wav(path)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "junk.wav"
        path.write_bytes(b"not a wave file at all")
        with pytest.raises(AudioError):
            read_wav(path)


class TestBuffer:
    def test_exact_duration(self):
        assert AudioBuffer(np.zeros(8001), 8000).duration_seconds * 8000 == 8001

    def test_rejects_three_channels(self):
        with pytest.raises(AudioError):
            AudioBuffer(np.zeros((3, 10)), 8000)

    def test_rejects_bad_rate(self):
        with pytest.raises(AudioError):
            AudioBuffer(np.zeros(10), 0)

    def test_rejects_non_finite(self):
        with pytest.raises(AudioError):
            AudioBuffer(np.array([0.0, np.nan]), 8000)

    def test_immutable(self):
        buf = AudioBuffer(np.zeros(4), 8000)
        with pytest.raises(ValueError):
            buf.samples[0, 0] = 1.0


class TestFraming:
    @pytest.mark.parametrize("n, rate, frame_ms, hop_ms, expected", [
        (8000, 8000, 20, 10, 99),
        (16000, 16000, 25, 10, 98),  # floor(15600 / 160) + 1
    ])
    def test_frame_counts(self, n, rate, frame_ms, hop_ms, expected):
        assert len(frame_signal(AudioBuffer(np.zeros(n), rate), frame_ms, hop_ms)) == expected

    def test_tiling_when_hop_equals_frame(self):
        x = np.arange(800.0)
        fs = frame_signal(AudioBuffer(x, 8000), 10, 10)
        assert np.array_equal(fs.frames.ravel(), x)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(200, 3000), st.integers(1, 40), st.integers(1, 40))
    def test_frames_are_slices_at_hop_offsets(self, n, frame_ms, hop_ms):
        frame_ms = max(frame_ms, hop_ms)
        x = np.arange(float(n))
        buf = AudioBuffer(x, 1000)
        if n < frame_ms:
            with pytest.raises(AudioError):
                frame_signal(buf, frame_ms, hop_ms)
            return
        fs = frame_signal(buf, frame_ms, hop_ms)
        assert len(fs) == (n - fs.frame_len) // fs.hop + 1
        for i in (0, len(fs) - 1):
            assert np.array_equal(fs.frames[i], x[i * fs.hop : i * fs.hop + fs.frame_len])

    def test_too_short(self):
        with pytest.raises(AudioError):
            frame_signal(AudioBuffer(np.zeros(100), 8000), 20, 10)


class TestSpectrum:
    def test_zero_frame(self):
        assert not np.any(power_spectrum(np.zeros(256), 512, 8000).power)

    @pytest.mark.parametrize("seed", range(5))
    def test_parseval_on_white_noise(self, seed):
        x = np.random.default_rng(seed).standard_normal(400)
        spec = power_spectrum(x, 512, 8000)
        w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(400) / 400)
        windowed = np.sum((x * w) ** 2)
        assert abs(windowed - spec.total_power()) / spec.total_power() < 1e-6

    def test_bin_width(self):
        assert power_spectrum(np.ones(100), 1024, 44100).bin_width == 44100 / 1024

    def test_exact_bin_sine_leakage(self):
        n, k = 512, 37
        x = np.sin(2 * np.pi * k * np.arange(n) / n)
        p = power_spectrum(x, n, 8000).power
        assert p[k - 1 : k + 2].sum() >= 0.99 * p.sum()

    def test_sine_band_power(self):
        rate, n = 8000, 1024
        x = np.sin(2 * np.pi * 1000 * np.arange(n) / rate)
        spec = power_spectrum(x, 4096, rate)
        assert band_power(spec, 950, 1050) >= 0.99 * spec.total_power()

    def test_full_band_and_partition(self):
        spec = power_spectrum(np.random.default_rng(1).standard_normal(256), 256, 8000)
        assert band_power(spec, 0, 4000) == pytest.approx(spec.total_power(), rel=1e-12)
        edges = np.linspace(0, 4000, 11)
        parts = sum(band_power(spec, a, b) for a, b in zip(edges[:-1], edges[1:]))
        assert parts == pytest.approx(spec.total_power(), rel=1e-12)

    def test_empty_band_rejected(self):
        spec = power_spectrum(np.ones(64), 64, 8000)
        with pytest.raises(AudioError):
            band_power(spec, 10, 20)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(AudioError):
            power_spectrum(np.ones(100), 300, 8000)


class TestResample:
    def test_identity(self):
        buf = AudioBuffer(np.random.default_rng(0).standard_normal(1000), 8000)
        assert resample(buf, 8000) == buf

    def test_length_rule(self):
        out = resample(AudioBuffer(np.zeros(44101), 44100), 8000)
        assert len(out) == round(44101 * 8000 / 44100)

    def test_tone_peak_survives(self):
        rate = 44100
        x = np.sin(2 * np.pi * 440 * np.arange(rate) / rate)
        y = resample(AudioBuffer(x, rate), 8000).mono
        f = np.fft.rfftfreq(len(y), 1 / 8000)
        assert abs(f[np.argmax(np.abs(np.fft.rfft(y)))] - 440) <= 2

    def test_bandlimited_round_trip(self):
        from scipy import signal

        rng = np.random.default_rng(5)
        sos = signal.butter(10, 3000, fs=44100, output="sos")
        x = signal.sosfiltfilt(sos, rng.standard_normal(44100))
        down = resample(AudioBuffer(x, 44100), 8000)
        back = resample(down, 44100).mono
        core = slice(2000, -2000)
        assert np.corrcoef(x[core], back[core])[0, 1] >= 0.99
