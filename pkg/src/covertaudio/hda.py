"""Intel HD Audio verb encoding and jack-retasking plans.

Nothing here touches hardware.  Plans are rendered for external host tools
such as ``hda-verb``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

# 4-bit verbs that carry a 16-bit payload.
LONG_FORM_VERBS = {
    0x2: "SET_CONVERTER_FORMAT",
    0x3: "SET_AMP_GAIN_MUTE",
    0x4: "SET_PROC_COEF",
    0x5: "SET_COEF_INDEX",
    0xA: "GET_CONVERTER_FORMAT",
    0xB: "GET_AMP_GAIN_MUTE",
    0xC: "GET_PROC_COEF",
    0xD: "GET_COEF_INDEX",
}

SHORT_FORM_VERBS = {
    0xF00: "GET_PARAMETER",
    0xF01: "GET_CONNECT_SEL",
    0x701: "SET_CONNECT_SEL",
    0xF02: "GET_CONNECT_LIST",
    0xF03: "GET_PROC_STATE",
    0x703: "SET_PROC_STATE",
    0xF04: "GET_SDI_SELECT",
    0x704: "SET_SDI_SELECT",
    0xF05: "GET_POWER_STATE",
    0x705: "SET_POWER_STATE",
    0xF06: "GET_CONV",
    0x706: "SET_CHANNEL_STREAMID",
    0xF07: "GET_PIN_WIDGET_CONTROL",
    0x707: "SET_PIN_WIDGET_CONTROL",
    0xF08: "GET_UNSOLICITED_RESPONSE",
    0x708: "SET_UNSOLICITED_ENABLE",
    0xF09: "GET_PIN_SENSE",
    0x709: "EXEC_PIN_SENSE",
    0xF0C: "GET_EAPD_BTLENABLE",
    0x70C: "SET_EAPD_BTLENABLE",
    0xF15: "GET_GPIO_DATA",
    0x715: "SET_GPIO_DATA",
    0xF16: "GET_GPIO_MASK",
    0x716: "SET_GPIO_MASK",
    0xF17: "GET_GPIO_DIRECTION",
    0x717: "SET_GPIO_DIRECTION",
    0xF1C: "GET_CONFIG_DEFAULT",
    0x71C: "SET_CONFIG_DEFAULT_BYTES_0",
    0x71D: "SET_CONFIG_DEFAULT_BYTES_1",
    0x71E: "SET_CONFIG_DEFAULT_BYTES_2",
    0x71F: "SET_CONFIG_DEFAULT_BYTES_3",
    0xF20: "GET_SUBSYSTEM_ID",
    0x7FF: "FUNCTION_RESET",
}

SET_AMP_GAIN_MUTE = 0x3
SET_PIN_WIDGET_CONTROL = 0x707
GET_PIN_WIDGET_CONTROL = 0xF07

PIN_IN_ENABLE = 0x20
PIN_OUT_ENABLE = 0x40
PIN_HP_ENABLE = 0x80

# Amp gain/mute payload bits.
AMP_OUTPUT = 0x8000
AMP_INPUT = 0x4000
AMP_LEFT = 0x2000
AMP_RIGHT = 0x1000
AMP_MUTE = 0x0080
MUTE_OUTPUT_AMP = AMP_OUTPUT | AMP_LEFT | AMP_RIGHT | AMP_MUTE  # 0xB080
MUTE_INPUT_AMP = AMP_INPUT | AMP_LEFT | AMP_RIGHT | AMP_MUTE  # 0x7080

ROLES = ("in", "out")


class HdaError(ValueError):
    pass


def is_long_form(verb_id: int) -> bool:
    return verb_id in LONG_FORM_VERBS


@dataclass(frozen=True)
class HdaCommand:
    """One codec command.  ``long_form`` defaults to what the verb id implies;
    pass ``False`` for a 12-bit verb whose value happens to equal a 4-bit id."""

    codec_address: int
    nid: int
    verb_id: int
    payload: int
    long_form: bool | None = None

    def __post_init__(self):
        _check_range("codec_address", self.codec_address, 0xF)
        _check_range("nid", self.nid, 0xFF)
        if self.long_form is None:
            object.__setattr__(self, "long_form", is_long_form(self.verb_id))
        if self.long_form:
            if not is_long_form(self.verb_id):
                raise HdaError(f"0x{self.verb_id:x} is not a long-form verb id")
            _check_range("payload", self.payload, 0xFFFF)
        else:
            _check_range("verb_id", self.verb_id, 0xFFF)
            if (self.verb_id >> 8) in LONG_FORM_VERBS:
                raise HdaError(
                    f"12-bit verb 0x{self.verb_id:03x} collides with long-form verb "
                    f"0x{self.verb_id >> 8:x}; use the 4-bit id with a 16-bit payload"
                )
            _check_range("payload", self.payload, 0xFF)

    @property
    def known(self) -> bool:
        return self.long_form or self.verb_id in SHORT_FORM_VERBS

    @property
    def verb_name(self) -> str | None:
        return (LONG_FORM_VERBS if self.long_form else SHORT_FORM_VERBS).get(self.verb_id)

    @property
    def word(self) -> int:
        head = (self.codec_address << 28) | (self.nid << 20)
        if self.long_form:
            return head | (self.verb_id << 16) | self.payload
        return head | (self.verb_id << 8) | self.payload

    def tool_verb(self) -> int:
        """Verb as host tools spell it: long-form ids shifted into 12 bits."""
        return self.verb_id << 8 if self.long_form else self.verb_id


def _check_range(name: str, value: int, top: int) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= top:
        raise HdaError(f"{name} must be an integer in 0..0x{top:x}, got {value!r}")


def encode_verb(cad: int, nid: int, verb_id: int, payload: int) -> int:
    """Pack a codec command into its 32-bit word.

    ``verb_id`` values in ``LONG_FORM_VERBS`` use the 4-bit/16-bit layout,
    everything else the 12-bit/8-bit layout.
    """
    return HdaCommand(cad, nid, verb_id, payload).word


def decode_verb(word: int) -> HdaCommand:
    """Split a 32-bit word into fields.  Unknown verbs decode fine; check ``.known``."""
    _check_range("word", word, 0xFFFFFFFF)
    cad, nid = word >> 28, (word >> 20) & 0xFF
    nibble = (word >> 16) & 0xF
    if nibble in LONG_FORM_VERBS:
        return HdaCommand(cad, nid, nibble, word & 0xFFFF)
    return HdaCommand(cad, nid, (word >> 8) & 0xFFF, word & 0xFF, long_form=False)


# ------------------------------------------------------------------ codec map


@dataclass(frozen=True)
class PinDescriptor:
    label: str
    chip_pins: tuple[int, ...]
    nid: int | None
    current_role: str
    retaskable: bool
    location: str = "other"
    color: str = ""

    def __post_init__(self):
        if self.current_role not in ROLES:
            raise HdaError(f"pin {self.label}: role must be 'in' or 'out', got {self.current_role!r}")
        if self.nid is not None:
            _check_range(f"pin {self.label} nid", self.nid, 0xFF)

    @property
    def capabilities(self) -> tuple[str, ...]:
        return ROLES if self.retaskable else (self.current_role,)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "chip_pins": list(self.chip_pins),
            "nid": self.nid,
            "role": self.current_role,
            "retaskable": self.retaskable,
            "location": self.location,
            "color": self.color,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> PinDescriptor:
        try:
            return cls(
                label=doc["label"],
                chip_pins=tuple(doc.get("chip_pins", ())),
                nid=doc["nid"],
                current_role=doc["role"],
                retaskable=bool(doc["retaskable"]),
                location=doc.get("location", "other"),
                color=doc.get("color", ""),
            )
        except KeyError as exc:
            raise HdaError(f"codec map entry missing field {exc}") from None


@dataclass(frozen=True)
class CodecMap:
    codec: str
    codec_address: int
    pins: tuple[PinDescriptor, ...]

    def __post_init__(self):
        _check_range("codec_address", self.codec_address, 0xF)
        labels = [p.label for p in self.pins]
        if len(set(labels)) != len(labels):
            raise HdaError("duplicate pin labels in codec map")

    def pin(self, label: str) -> PinDescriptor:
        for p in self.pins:
            if p.label == label:
                return p
        raise HdaError(f"unknown pin label {label!r}; known: {', '.join(p.label for p in self.pins)}")

    @classmethod
    def from_dict(cls, doc: dict) -> CodecMap:
        return cls(
            codec=doc.get("codec", ""),
            codec_address=doc.get("codec_address", 0),
            pins=tuple(PinDescriptor.from_dict(p) for p in doc["pins"]),
        )

    def to_dict(self) -> dict:
        return {"codec": self.codec, "codec_address": self.codec_address,
                "pins": [p.to_dict() for p in self.pins]}


def load_codec_map(path: str | Path | None = None) -> CodecMap:
    """Read a codec map JSON file; ``None`` loads the bundled ALC892 map (NIDs unbound)."""
    if path is None:
        text = resources.files("covertaudio").joinpath("data/alc892.json").read_text()
    else:
        text = Path(path).read_text()
    return CodecMap.from_dict(json.loads(text))


# ------------------------------------------------------------------- planning


@dataclass(frozen=True)
class PlanStep:
    command: HdaCommand
    narration: str


@dataclass(frozen=True)
class RetaskPlan:
    target: str
    role: str
    nid: int | None
    steps: tuple[PlanStep, ...]
    note: str = ""

    @property
    def commands(self) -> tuple[HdaCommand, ...]:
        return tuple(s.command for s in self.steps)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "role": self.role,
            "nid": self.nid,
            "note": self.note,
            "steps": [
                {
                    "word": f"0x{s.command.word:08x}",
                    "codec_address": s.command.codec_address,
                    "nid": s.command.nid,
                    "verb_id": s.command.verb_id,
                    "payload": s.command.payload,
                    "long_form": s.command.long_form,
                    "narration": s.narration,
                }
                for s in self.steps
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> RetaskPlan:
        steps = tuple(
            PlanStep(HdaCommand(s["codec_address"], s["nid"], s["verb_id"], s["payload"], s.get("long_form")),
                     s["narration"])
            for s in doc["steps"]
        )
        for s, raw in zip(steps, doc["steps"]):
            if "word" in raw and int(raw["word"], 16) != s.command.word:
                raise HdaError(f"step word {raw['word']} disagrees with its fields")
        return cls(doc["target"], doc["role"], doc["nid"], steps, doc.get("note", ""))


def plan_retask(pins: CodecMap, target: str, role: str) -> RetaskPlan:
    """Command sequence that switches ``target`` to ``role``.

    Switching to input mutes the pin's output amplifier, writes the pin widget
    control with only the input buffer enabled, then reads the control back.
    Switching to output mirrors this with the input amplifier and output enable.
    """
    if role not in ROLES:
        raise HdaError(f"role must be 'in' or 'out', got {role!r}")
    pin = pins.pin(target)
    if role == pin.current_role:
        return RetaskPlan(target, role, pin.nid, (), f"{target} already configured as {role}")
    if not pin.retaskable:
        raise HdaError(f"pin {target} is not retaskable")
    if pin.nid is None:
        raise HdaError(f"pin {target} has no NID binding in the codec map")
    cad, nid = pins.codec_address, pin.nid
    if role == "in":
        steps = (
            PlanStep(HdaCommand(cad, nid, SET_AMP_GAIN_MUTE, MUTE_OUTPUT_AMP),
                     f"mute output amplifier of {target} (both channels)"),
            PlanStep(HdaCommand(cad, nid, SET_PIN_WIDGET_CONTROL, PIN_IN_ENABLE),
                     f"enable input buffer on {target}; output and headphone drive off"),
        )
    else:
        steps = (
            PlanStep(HdaCommand(cad, nid, SET_AMP_GAIN_MUTE, MUTE_INPUT_AMP),
                     f"mute input amplifier of {target} (both channels)"),
            PlanStep(HdaCommand(cad, nid, SET_PIN_WIDGET_CONTROL, PIN_OUT_ENABLE),
                     f"enable output buffer on {target}; input buffer off"),
        )
    steps += (PlanStep(HdaCommand(cad, nid, GET_PIN_WIDGET_CONTROL, 0),
                       f"read back pin widget control of {target}"),)
    return RetaskPlan(target, role, nid, steps, f"retask {target} from {pin.current_role} to {role}")


def render_plan(plan: RetaskPlan, fmt: str = "tool-lines") -> str:
    """``tool-lines``: one ``0x<nid> 0x<verb> 0x<payload>`` line per command.
    ``json``: the structured plan."""
    if fmt == "tool-lines":
        return "".join(f"0x{c.nid:x} 0x{c.tool_verb():x} 0x{c.payload:x}\n" for c in plan.commands)
    if fmt == "json":
        return json.dumps(plan.to_dict(), indent=2) + "\n"
    raise HdaError(f"unknown plan format {fmt!r}")


def parse_plan(text: str) -> RetaskPlan:
    return RetaskPlan.from_dict(json.loads(text))
