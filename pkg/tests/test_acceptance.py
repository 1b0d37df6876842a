"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``criterion N PASS|FAIL`` line (also collected into the
pytest terminal summary) before asserting.
"""

import math
import time

import numpy as np
import pytest

from covertaudio import wada_table
from covertaudio.audio import AudioBuffer
from covertaudio.capacity import capacity_approx, capacity_report, profile_band_snr, shannon_capacity, tone_sweep
from covertaudio.channel import ChannelModel, combining_gain_experiment, simulate_channel
from covertaudio.hda import (
    LONG_FORM_VERBS,
    SET_AMP_GAIN_MUTE,
    SET_PIN_WIDGET_CONTROL,
    CodecMap,
    decode_verb,
    encode_verb,
    load_codec_map,
    plan_retask,
)
from covertaudio.modem import (
    CrcMismatchError,
    ModemConfig,
    ModemFrame,
    ber_test,
    demodulate,
    modulate,
    noise_floor_for_band_snr,
    out_of_band_ratio,
    parse_data_bits,
)
from covertaudio.quality import align_by_cross_correlation, detect_voice_activity, quality_report, sar, snr_vad, wada_snr
from synth import exact_power_noise, speech_like, two_level


def test_criterion_1_shannon_approximation(verdict):
    t0 = time.perf_counter()
    gaps = {}
    for snr_db in (10, 20, 30, 40, 50, 60):
        exact = shannon_capacity(100, 10 ** (snr_db / 10))
        gaps[snr_db] = abs(capacity_approx(100, snr_db) - exact) / exact
    elapsed = time.perf_counter() - t0
    worst = max(gaps.values())
    ok = worst <= 0.05 and elapsed < 1
    verdict(1, "Shannon approximation within 5%", ok, f"worst gap {worst:.2%} at {max(gaps, key=gaps.get)} dB")
    assert ok


def test_criterion_2_combining_gain(verdict):
    t0 = time.perf_counter()
    model = ChannelModel()
    g0 = combining_gain_experiment(model, 0.0, trials=100).gain_db
    g1 = combining_gain_experiment(model, 1.0, trials=100).gain_db
    g97 = combining_gain_experiment(model, 0.97, trials=100).gain_db
    elapsed = time.perf_counter() - t0
    ok = 2.5 <= g0 <= 3.5 and g1 == 0.0 and g97 <= 0.3 and elapsed < 30
    verdict(2, "L/R combining gain", ok, f"rho=0 {g0:.2f} dB, rho=1 {g1:.2f} dB, rho=0.97 {g97:.2f} dB")
    assert ok


def test_criterion_3_capacity_claim(verdict):
    t0 = time.perf_counter()
    # Flat 25 dB profile built from a simulated sweep over 10-22 kHz.
    amplitude = 0.5
    sigma2 = 0.5 * amplitude**2 * 10 ** (-25 / 10) * (44100 / 2) / 100
    sweep_model = ChannelModel.identity().replace(noise_floor_dbfs=10 * math.log10(sigma2), noise_seed=25)
    audio, schedule = tone_sweep(range(100, 220), amplitude=amplitude)
    profile = profile_band_snr(simulate_channel(audio, sweep_model), schedule, min_freq=10000, max_freq=22000)
    bound = capacity_report(profile).inaudible_exact_bps

    config = ModemConfig()
    modem_model = ChannelModel.identity().replace(noise_floor_dbfs=noise_floor_for_band_snr(config, 25.0))
    report = ber_test(config, modem_model, n_bits=100_000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = (bound >= 10_000 and report.bits_sent >= 100_000 and report.effective_throughput >= 1000
          and report.ber < 1e-3 and elapsed < 120)
    verdict(3, "inaudible capacity and modem throughput at 25 dB", ok,
            f"bound {bound:.0f} bps, throughput {report.effective_throughput:.0f} bps, "
            f"BER {report.ber:.2e} over {report.bits_sent} bits")
    assert ok


def test_criterion_4_quality_oracles(verdict):
    t0 = time.perf_counter()
    failures = []
    for ratio in (0, 10, 20, 30):
        ref, rec = two_level(ratio, seed=ratio)
        got = snr_vad(rec, detect_voice_activity(ref))
        if abs(got - ratio) > 0.5:
            failures.append(f"snr_vad {ratio} dB -> {got:.2f}")
    for seed in range(3):
        x = wada_table.mix_at_snr(10.0, 80000, np.random.default_rng(seed))
        got = wada_snr(AudioBuffer(x, 16000))
        if abs(got - 10) > 2:
            failures.append(f"wada 10 dB -> {got:.2f}")
    floor = wada_snr(AudioBuffer(np.random.default_rng(99).standard_normal(16000), 16000))
    if floor != -20.0:
        failures.append(f"wada noise floor {floor}")
    rng = np.random.default_rng(4)
    s = rng.standard_normal(40000)
    h = rng.standard_normal(64) * np.exp(-np.arange(64) / 10)
    target = np.convolve(s, h)[: len(s)]
    for want in (0.0, 10.0, 20.0):
        noise = exact_power_noise(len(s), np.mean(target**2) * 10 ** (-want / 10), rng)
        got = sar(AudioBuffer(s, 8000), AudioBuffer(target + noise, 8000))
        if abs(got - want) > 0.5:
            failures.append(f"sar {want} dB -> {got:.2f}")
    ident = sar(AudioBuffer(s, 8000), AudioBuffer(s, 8000))
    if ident != 100.0:
        failures.append(f"sar identical -> {ident}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 30
    verdict(4, "quality metric oracles", ok, "; ".join(failures) or f"{elapsed:.1f} s")
    assert ok


def test_criterion_5_distance_ordering(verdict):
    t0 = time.perf_counter()
    failures = []
    for seed in range(3):
        ref = speech_like(rate=8000, seconds=6.0, seed=seed)
        rows = {}
        for name, base in (("headphone", ChannelModel()), ("microphone", ChannelModel.microphone())):
            rows[name] = [quality_report(ref, simulate_channel(ref, base.replace(distance_m=d, noise_seed=seed * 10 + d)))
                          for d in (1, 3, 5, 9)]
        hp = rows["headphone"]
        for key in ("sar_db", "snr_vad_db"):
            vals = [getattr(r, key) for r in hp]
            if any(b > a + 0.5 for a, b in zip(vals, vals[1:])):
                failures.append(f"seed {seed} {key} not nonincreasing: {np.round(vals, 2).tolist()}")
        for d, h, m in zip((1, 3, 5, 9), hp, rows["microphone"]):
            if not m.sar_db > h.sar_db:
                failures.append(f"seed {seed} at {d} m microphone sar {m.sar_db:.2f} <= headphone {h.sar_db:.2f}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60
    verdict(5, "distance ordering and microphone dominance", ok, "; ".join(failures) or f"{elapsed:.1f} s")
    assert ok


def test_criterion_6_hda_bijection(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    n = 1_000_000
    cad = rng.integers(0, 16, n).tolist()
    nid = rng.integers(0, 256, n).tolist()
    long_ids = np.array(sorted(LONG_FORM_VERBS))
    is_long = rng.random(n) < 0.25
    verb = np.where(is_long, long_ids[rng.integers(0, len(long_ids), n)], rng.integers(0, 0x1000, n))
    # 12-bit ids whose top nibble is a long-form id are not encodable; remap them.
    clash = ~is_long & np.isin(verb >> 8, long_ids)
    verb[clash] &= 0x0FF
    payload = np.where(is_long, rng.integers(0, 0x10000, n), rng.integers(0, 0x100, n))
    bad = 0
    for c, d, v, p in zip(cad, nid, verb.tolist(), payload.tolist()):
        cmd = decode_verb(encode_verb(c, d, v, p))
        if (cmd.codec_address, cmd.nid, cmd.verb_id, cmd.payload) != (c, d, v, p):
            bad += 1
    worked = (decode_verb(0x01970720), decode_verb(0x018F0700))
    worked_ok = [(w.codec_address, w.nid, w.verb_id, w.payload) for w in worked] == [(0, 0x19, 0x707, 0x20),
                                                                                      (0, 0x18, 0xF07, 0x00)]
    doc = load_codec_map().to_dict()
    for i, pin in enumerate(doc["pins"]):
        pin["nid"] = 0x14 + i // 2
    cmap = CodecMap.from_dict(doc)
    ordered = True
    for pin in cmap.pins:
        if pin.current_role == "out" and pin.retaskable:
            verbs = [c.verb_id for c in plan_retask(cmap, pin.label, "in").commands]
            ordered &= verbs.index(SET_AMP_GAIN_MUTE) < verbs.index(SET_PIN_WIDGET_CONTROL)
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and worked_ok and ordered and elapsed < 10
    verdict(6, "HDA verb bijection and plan ordering", ok,
            f"{bad} mismatches in {n} commands, worked words {'ok' if worked_ok else 'wrong'}, {elapsed:.1f} s")
    assert ok


@pytest.mark.slow
def test_criterion_7_modem_round_trip(verdict):
    t0 = time.perf_counter()
    config = ModemConfig()
    rng = np.random.default_rng(7)
    mismatches = crc_misses = 0
    worst_oob = 0.0
    max_bits = 16 + 8 * 0xFFFF + 32
    for _ in range(1000):
        payload = rng.bytes(int(rng.integers(0, 1025)))
        audio = modulate(payload, config)
        worst_oob = max(worst_oob, out_of_band_ratio(audio, config))
        if demodulate(audio, config) != payload:
            mismatches += 1
        bits = ModemFrame(payload).data_bits()
        bits[rng.integers(0, len(bits))] ^= 1
        # Trailing filler lets a corrupted length field still reach the checksum.
        padded = np.concatenate([bits, rng.integers(0, 2, max_bits - len(bits), dtype=np.uint8)])
        try:
            parse_data_bits(padded)
            crc_misses += 1
        except CrcMismatchError:
            pass
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and crc_misses == 0 and worst_oob <= 0.01 and elapsed < 120
    verdict(7, "modem round-trip, CRC and spectral containment", ok,
            f"{mismatches} round-trip failures, {crc_misses} undetected flips, worst OOB {worst_oob:.1e}, "
            f"{elapsed:.0f} s")
    assert ok


def test_criterion_8_alignment(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    wrong = 0
    for _ in range(500):
        n = int(rng.integers(1000, 8001))
        limit = n // 4
        lag = int(rng.integers(-limit, limit + 1))
        x = rng.standard_normal(n)
        y = np.zeros(n)
        if lag >= 0:
            y[lag:] = x[: n - lag]
        else:
            y[:lag] = x[-lag:]
        y = y + exact_power_noise(n, np.mean(y**2) / 100, rng)
        if align_by_cross_correlation(AudioBuffer(x, 8000), AudioBuffer(y, 8000), limit) != lag:
            wrong += 1
    elapsed = time.perf_counter() - t0
    ok = wrong == 0 and elapsed < 30
    verdict(8, "alignment lag recovery at 20 dB", ok, f"{wrong}/500 wrong, {elapsed:.1f} s")
    assert ok
