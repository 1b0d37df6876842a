"""JSON Schemas (draft 2020-12) for every report the CLI emits."""

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
_INT = {"type": "integer"}
_COUNT = {"type": "integer", "minimum": 0}


def _obj(props: dict, required=None, extra: bool = False) -> dict:
    return {
        "type": "object",
        "properties": props,
        "required": list(props) if required is None else required,
        "additionalProperties": extra,
    }


ERROR = _obj({"error": {"type": "string"}, "detail": {"type": "string"}},
             required=["error", "detail"], extra=True)

QUALITY = _obj({
    "nist_stnr_db": _NUM,
    "wada_snr_db": {"type": "number", "minimum": -20, "maximum": 100},
    "snr_vad_db": _NUM,
    "sar_db": {"type": "number", "maximum": 100},
    "alignment_lag_samples": _INT,
    "pesq_mos": {"type": "null"},
})

SPECTRAL = _obj({
    "files": {"type": "array", "items": {"type": "string"}},
    "n_active": _COUNT,
    "n_inactive": _COUNT,
    "n_bands": _COUNT,
    "alignment_lag_samples": _INT,
})

_BAND = _obj({"f_lo_hz": _NUM, "f_hi_hz": _NUM, "snr_db": _NUM})

BAND_SNR_PROFILE = _obj({
    "band_width_hz": _NUM,
    "max_freq_hz": _NUM,
    "sample_rate": _INT,
    "bands": {"type": "array", "items": _BAND},
})

CAPACITY_REPORT = _obj({
    "hearing_cutoff_hz": _NUM,
    "total_exact_bps": {"type": "number", "minimum": 0},
    "total_approx_bps": {"type": "number", "minimum": 0},
    "inaudible_exact_bps": {"type": "number", "minimum": 0},
    "inaudible_approx_bps": {"type": "number", "minimum": 0},
    "bands": {"type": "array", "items": _obj({
        "f_lo_hz": _NUM,
        "f_hi_hz": _NUM,
        "snr_db": _NUM,
        "capacity_exact_bps": {"type": "number", "minimum": 0},
        "capacity_approx_bps": {"type": "number", "minimum": 0},
        "approx_clamped": {"type": "boolean"},
    })},
}, required=["hearing_cutoff_hz", "total_exact_bps", "total_approx_bps",
             "inaudible_exact_bps", "inaudible_approx_bps", "bands"], extra=True)

PROFILE = _obj({"profile": BAND_SNR_PROFILE, "capacity": CAPACITY_REPORT})

SWEEP = _obj({"wav": {"type": "string"}, "schedule": {"type": "string"},
              "n_tones": _COUNT, "duration_s": _NUM})

TONE_SCHEDULE = _obj({
    "band_width_hz": _NUM,
    "tones": {"type": "array", "items": _obj({"band": _COUNT, "start_s": _NUM, "duration_s": _NUM})},
})

CHANNEL_MODEL = _obj({
    "distance_m": {"type": "number", "exclusiveMinimum": 0},
    "reference_gain_db": _NUM,
    "corner_hz": _NUM_OR_NULL,
    "rolloff_db_per_octave": {"type": "number", "minimum": 0},
    "noise_floor_dbfs": _NUM_OR_NULL,
    "noise_seed": _INT,
    "spreading": {"type": "boolean"},
}, required=[])

SIMULATE = _obj({"model": CHANNEL_MODEL, "samples": _COUNT, "sample_rate": _INT,
                 "peak": _NUM, "clipped": {"type": "boolean"}})

COMBINE = _obj({"samples": _COUNT, "sample_rate": _INT})

COMBINING_RESULT = _obj({
    "snr_left_db": _NUM_OR_NULL,
    "snr_right_db": _NUM_OR_NULL,
    "snr_combined_db": _NUM_OR_NULL,
    "gain_db": _NUM_OR_NULL,
    "noise_correlation": {"type": "number", "minimum": -1, "maximum": 1},
    "trials": {"type": "integer", "minimum": 1},
})

MODEM_CONFIG = _obj({
    "f_lo": _NUM, "f_hi": _NUM, "band_width": _NUM, "symbol_ms": _NUM, "sample_rate": _INT,
    "preamble_len": _INT, "amplitude_per_band": _NUM, "ramp_ms": _NUM, "detect_threshold": _NUM,
}, required=[])

TX = _obj({"payload_bytes": _COUNT, "samples": _COUNT, "duration_s": _NUM, "n_bands": _COUNT})

RX = _obj({"status": {"const": "ok"}, "payload_bytes": _COUNT, "start_sample": _COUNT,
           "preamble_correlation": _NUM})

BER = _obj({
    "bits_sent": _COUNT,
    "bit_errors": _COUNT,
    "ber": {"type": "number", "minimum": 0, "maximum": 1},
    "frames_sent": _COUNT,
    "frames_recovered": _COUNT,
    "audio_seconds": _NUM,
    "effective_throughput_bps": {"type": "number", "minimum": 0},
    "payload_rate_bps": {"type": "number", "minimum": 0},
    "capacity_bound_bps": _NUM_OR_NULL,
    "within_capacity": {"type": "boolean"},
    "n_bands": _COUNT,
})

HDA_PLAN = _obj({
    "target": {"type": "string"},
    "role": {"enum": ["in", "out"]},
    "nid": {"type": ["integer", "null"]},
    "note": {"type": "string"},
    "steps": {"type": "array", "items": _obj({
        "word": {"type": "string", "pattern": "^0x[0-9a-f]{8}$"},
        "codec_address": {"type": "integer", "minimum": 0, "maximum": 15},
        "nid": {"type": "integer", "minimum": 0, "maximum": 255},
        "verb_id": {"type": "integer", "minimum": 0, "maximum": 4095},
        "payload": {"type": "integer", "minimum": 0, "maximum": 65535},
        "long_form": {"type": "boolean"},
        "narration": {"type": "string"},
    })},
})

CODEC_MAP = _obj({
    "codec": {"type": "string"},
    "codec_address": {"type": "integer", "minimum": 0, "maximum": 15},
    "pins": {"type": "array", "items": _obj({
        "label": {"type": "string"},
        "chip_pins": {"type": "array", "items": _INT},
        "nid": {"type": ["integer", "null"], "minimum": 0, "maximum": 255},
        "role": {"enum": ["in", "out"]},
        "retaskable": {"type": "boolean"},
        "location": {"type": "string"},
        "color": {"type": "string"},
    }, required=["label", "nid", "role", "retaskable"])},
}, required=["pins"])

# Report schema per CLI subcommand.
COMMAND_SCHEMAS = {
    "quality": QUALITY,
    "spectral": SPECTRAL,
    "profile": PROFILE,
    "sweep": SWEEP,
    "simulate": SIMULATE,
    "combine": COMBINE,
    "combine-exp": COMBINING_RESULT,
    "tx": TX,
    "rx": RX,
    "ber": BER,
    "hda-plan": HDA_PLAN,
}
