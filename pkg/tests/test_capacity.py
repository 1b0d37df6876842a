import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covertaudio.audio import AudioBuffer
from covertaudio.capacity import (
    BandSnrProfile,
    CapacityError,
    ToneSchedule,
    capacity_approx,
    capacity_report,
    profile_band_snr,
    shannon_capacity,
    tone_sweep,
)
from covertaudio.channel import ChannelModel, simulate_channel

RATE = 44100


def noisy_sweep(bands, snr_db, seed=0, amplitude=0.5, silent=(), tone_s=0.25, gap_s=0.1):
    """Tone sweep plus white noise putting each tone ``snr_db`` over its 100 Hz band."""
    audio, schedule = tone_sweep(bands, sample_rate=RATE, amplitude=amplitude, tone_s=tone_s, gap_s=gap_s)
    x = audio.mono.copy()
    for seg in schedule.segments:
        if seg.band in silent:
            a = int(round(seg.start_s * RATE))
            x[a : a + int(round(seg.duration_s * RATE))] = 0.0
    sigma2 = 0.5 * amplitude**2 * 10 ** (-snr_db / 10) * (RATE / 2) / 100
    x = x + math.sqrt(sigma2) * np.random.default_rng(seed).standard_normal(len(x))
    return AudioBuffer(x, RATE), schedule


class TestShannon:
    @pytest.mark.parametrize("snr, expected", [(0, 0.0), (3, 200.0), (1000, 100 * math.log2(1001))])
    def test_values(self, snr, expected):
        assert shannon_capacity(100, snr) == pytest.approx(expected, abs=1e-9)

    def test_errors(self):
        with pytest.raises(CapacityError):
            shannon_capacity(100, -0.1)
        with pytest.raises(CapacityError):
            shannon_capacity(0, 1)

    @settings(max_examples=100)
    @given(st.floats(1, 1e4), st.floats(0, 1e6), st.floats(1.001, 2))
    def test_strictly_increasing(self, b, snr, factor):
        assert shannon_capacity(b * factor, snr + 1) > shannon_capacity(b, snr + 1)
        assert shannon_capacity(b, snr * factor + 1e-3) > shannon_capacity(b, snr)


class TestApprox:
    def test_30_db(self):
        assert capacity_approx(100, 30) == pytest.approx(990)
        exact = shannon_capacity(100, 1000)
        assert exact == pytest.approx(996.72, abs=0.01)
        assert (exact - 990) / exact == pytest.approx(0.0067, abs=5e-4)

    def test_zero(self):
        assert capacity_approx(100, 0) == 0

    def test_negative_clamped_with_warning(self):
        with pytest.warns(RuntimeWarning):
            assert capacity_approx(100, -3) == 0

    @pytest.mark.parametrize("snr_db", [10, 20, 30, 40, 50, 60])
    def test_within_five_percent(self, snr_db):
        exact = shannon_capacity(100, 10 ** (snr_db / 10))
        assert abs(capacity_approx(100, snr_db) - exact) / exact <= 0.05

    @settings(max_examples=200)
    @given(st.floats(10, 60))
    def test_bound_sweep(self, snr_db):
        exact = shannon_capacity(100, 10 ** (snr_db / 10))
        assert abs(capacity_approx(100, snr_db) - exact) / exact <= 0.05


class TestReport:
    def test_zero_db_everywhere(self):
        rep = capacity_report(BandSnrProfile.flat(0.0, 0, 22000))
        assert rep.total_approx_bps == 0
        assert rep.total_exact_bps == pytest.approx(220 * 100)

    def test_seventy_bands_at_30_db(self):
        rep = capacity_report(BandSnrProfile.flat(30.0, 15000, 22000))
        assert len(rep.f_lo) == 70
        assert rep.total_approx_bps == pytest.approx(69_300)

    def test_cumulative_is_sum_of_members(self):
        rng = np.random.default_rng(0)
        lo = np.arange(0, 22000, 100.0)
        rep = capacity_report(BandSnrProfile(lo, lo + 100, rng.uniform(-5, 50, len(lo))))
        assert rep.cumulative(5000, 12000) == sum(
            float(c) for a, b, c in zip(rep.f_lo, rep.f_hi, rep.capacity_exact_bps) if a >= 5000 and b <= 12000)
        assert rep.cumulative(0, 10000) + rep.inaudible_exact_bps == pytest.approx(rep.total_exact_bps, rel=1e-12)

    def test_negative_snr_flags_clamp(self):
        rep = capacity_report(BandSnrProfile([0.0, 100.0], [100.0, 200.0], [-3.0, 10.0]))
        assert list(rep.approx_clamped) == [True, False]
        assert rep.capacity_approx_bps[0] == 0
        assert np.all(rep.capacity_exact_bps >= 0)

    def test_csv_columns(self):
        text = capacity_report(BandSnrProfile.flat(20.0, 10000, 10300)).to_csv()
        lines = text.strip().splitlines()
        assert lines[0] == "f_lo_hz,f_hi_hz,snr_db,capacity_exact_bps,capacity_approx_bps"
        assert len(lines) == 4
        assert lines[1].startswith("10000,10100,20.0000,")

    def test_inaudible_subtotal_at_25_db(self):
        rep = capacity_report(BandSnrProfile.flat(25.0, 10000, 22000))
        assert rep.inaudible_exact_bps >= 10_000

    def test_profile_invariants(self):
        with pytest.raises(CapacityError):
            BandSnrProfile([0.0, 150.0], [100.0, 250.0], [1.0, 1.0])
        with pytest.raises(CapacityError):
            BandSnrProfile([0.0], [200.0], [1.0])
        with pytest.raises(CapacityError):
            BandSnrProfile([0.0], [100.0], [1.0], max_freq=30000, sample_rate=44100)

    def test_profile_json_round_trip(self):
        prof = BandSnrProfile.flat(12.5, 1000, 1500)
        back = BandSnrProfile.from_dict(prof.to_dict())
        assert np.array_equal(back.snr_db, prof.snr_db) and np.array_equal(back.f_lo, prof.f_lo)


class TestProfile:
    def test_flat_40_db(self):
        rec, schedule = noisy_sweep(range(0, 220), 40.0)
        prof = profile_band_snr(rec, schedule, max_freq=22000)
        assert len(prof) == 220
        assert np.all(np.abs(prof.snr_db - 40) <= 1)

    # A noise-over-noise ratio has a chi-square spread of about 0.9 dB with the
    # default slots; 2 s tones and 0.5 s gaps bring it near 0.25 dB.
    @pytest.mark.parametrize("seed", range(3))
    def test_silent_tone_slot_reads_zero(self, seed):
        rec, schedule = noisy_sweep(range(100, 110), 30.0, seed=seed, silent={103, 107}, tone_s=2.0, gap_s=0.5)
        prof = profile_band_snr(rec, schedule, min_freq=10000, max_freq=11000)
        assert prof.snr_at(10300) == pytest.approx(0, abs=1)
        assert prof.snr_at(10700) == pytest.approx(0, abs=1)
        assert prof.snr_at(10500) == pytest.approx(30, abs=1)

    def test_headphone_rolloff_is_monotone(self):
        audio, schedule = tone_sweep(range(0, 220), sample_rate=RATE)
        rec = simulate_channel(audio, ChannelModel(distance_m=1, noise_seed=3))
        prof = profile_band_snr(rec, schedule)
        above = prof.snr_db[prof.f_lo >= 1500]
        running_min = np.minimum.accumulate(above)
        assert np.all(above <= running_min + 2)
        assert above[0] - above[-1] > 30

    def test_deterministic(self):
        rec, schedule = noisy_sweep(range(50, 60), 20.0)
        a = profile_band_snr(rec, schedule, min_freq=5000, max_freq=6000)
        b = profile_band_snr(rec, schedule, min_freq=5000, max_freq=6000)
        assert np.array_equal(a.snr_db, b.snr_db)

    def test_schedule_past_end(self):
        rec, schedule = noisy_sweep(range(10, 12), 20.0)
        short = AudioBuffer(rec.mono[: len(rec) // 2], RATE)
        with pytest.raises(CapacityError, match="past the recording"):
            profile_band_snr(short, schedule, min_freq=1000, max_freq=1200)

    def test_max_freq_above_nyquist(self):
        rec, schedule = noisy_sweep(range(10, 12), 20.0)
        with pytest.raises(CapacityError, match="Nyquist"):
            profile_band_snr(rec, schedule, max_freq=30000)

    def test_band_above_nyquist_in_schedule(self):
        rec, _ = noisy_sweep(range(10, 12), 20.0)
        bad = ToneSchedule.from_dict({"band_width_hz": 100, "tones": [{"band": 300, "start_s": 0.1, "duration_s": 0.2}]})
        with pytest.raises(CapacityError, match="Nyquist"):
            profile_band_snr(rec, bad, max_freq=1000)

    def test_unscheduled_band_rejected(self):
        rec, schedule = noisy_sweep(range(10, 12), 20.0)
        with pytest.raises(CapacityError, match="no scheduled tone"):
            profile_band_snr(rec, schedule, min_freq=1000, max_freq=1300)

    def test_schedule_json_round_trip(self):
        _, schedule = tone_sweep(range(3), sample_rate=8000)
        assert ToneSchedule.from_json(schedule.to_json()) == schedule

    def test_malformed_schedule(self):
        with pytest.raises(CapacityError):
            ToneSchedule.from_dict({"tones": [{"band": 1}]})


def test_approx_clamp_does_not_leak_warnings_from_report():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        capacity_report(BandSnrProfile([0.0], [100.0], [-10.0]))
