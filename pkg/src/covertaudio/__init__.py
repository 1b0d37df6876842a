"""Covert acoustic channel analysis: quality metrics, capacity profiling,
channel simulation, a near-ultrasonic modem and HD Audio retask planning."""

__version__ = "0.1.0"

from .audio import AudioBuffer, AudioError, read_wav, write_wav
from .capacity import BandSnrProfile, CapacityReport, capacity_report, profile_band_snr, shannon_capacity
from .channel import ChannelModel, combining_gain_experiment, simulate_channel
from .hda import HdaCommand, decode_verb, encode_verb, plan_retask, render_plan
from .modem import ModemConfig, ber_test, demodulate, modulate
from .quality import QualityReport, quality_report, sar, snr_vad, wada_snr, nist_stnr

__all__ = [
    "AudioBuffer", "AudioError", "read_wav", "write_wav",
    "BandSnrProfile", "CapacityReport", "capacity_report", "profile_band_snr", "shannon_capacity",
    "ChannelModel", "combining_gain_experiment", "simulate_channel",
    "HdaCommand", "decode_verb", "encode_verb", "plan_retask", "render_plan",
    "ModemConfig", "ber_test", "demodulate", "modulate",
    "QualityReport", "quality_report", "sar", "snr_vad", "wada_snr", "nist_stnr",
]
