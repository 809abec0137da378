"""Design-deck files.

A deck is line oriented::

    global.cc = 0.75 pF
    M1.gm     = 4.22 mS

A ``[M1 M2]`` header opens a block whose bare ``key = value unit`` lines
apply to every listed device. Units carry SI prefixes and are checked
against the key.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .amplifier import DEVICE_ROLES, AmpDesign
from .devices import NMOS, PMOS, MosSmallSignal, PelgromParams


class DeckError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


_PREFIX = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6, "m": 1e-3,
           "": 1.0, "k": 1e3, "meg": 1e6, "M": 1e6, "G": 1e9}

# key -> (base unit, scale from SI to stored unit)
_DEVICE_KEYS = {
    "gm": ("S", 1.0), "gmb": ("S", 1.0), "ro": ("ohm", 1.0),
    "w": ("m", 1e6), "l": ("m", 1e6),
    "cgs": ("F", 1.0), "cgd": ("F", 1.0), "cdb": ("F", 1.0),
    "id": ("A", 1.0), "vov": ("V", 1.0),
}
_GLOBAL_KEYS = {"cc": ("F", 1.0), "cl": ("F", 1.0), "supply": ("V", 1.0),
                "c1": ("F", 1.0), "c2": ("F", 1.0)}
_PELGROM_KEYS = {"avt_nmos": ("V*m", 1e9), "avt_pmos": ("V*m", 1e9),
                 "abeta_nmos": ("%*m", 1e6), "abeta_pmos": ("%*m", 1e6)}

_ROLE = {r.lower(): r for r in DEVICE_ROLES}


def _unit_factor(unit: str, base: str) -> float:
    """SI multiplier of ``unit`` given its expected ``base`` (e.g. kohm -> 1e3)."""
    if "*" in base:
        parts, bases = unit.split("*"), base.split("*")
        if len(parts) != len(bases):
            raise ValueError(f"expected unit like {base}, got {unit!r}")
        f = 1.0
        for p, b in zip(parts, bases):
            f *= _unit_factor(p.strip(), b)
        return f
    if base == "%":
        if unit != "%":
            raise ValueError(f"expected %, got {unit!r}")
        return 1.0
    ul, bl = unit.lower(), base.lower()
    if base in ("ohm",):
        unit = unit.replace("Ω", "ohm")
        ul = unit.lower()
    if not ul.endswith(bl) or (base != "ohm" and not unit.endswith(base)):
        raise ValueError(f"expected unit in {base}, got {unit!r}")
    prefix = unit[: len(unit) - len(base)]
    if prefix.lower() == "meg":
        prefix = "meg"
    if prefix not in _PREFIX:
        raise ValueError(f"unknown prefix {prefix!r} in {unit!r}")
    return _PREFIX[prefix]


def _quantity(text: str, base: str, line: int) -> float:
    parts = text.split(None, 1)
    try:
        number = float(parts[0])
    except (ValueError, IndexError):
        raise DeckError(f"bad number in {text!r}", line) from None
    if len(parts) < 2:
        raise DeckError(f"missing unit (expected {base})", line)
    try:
        return number * _unit_factor(parts[1].replace(" ", ""), base)
    except ValueError as exc:
        raise DeckError(str(exc), line) from None


@dataclass
class DesignDeck:
    devices: dict = field(default_factory=dict)
    globals: dict = field(default_factory=dict)
    pelgrom: dict = field(default_factory=dict)

    def design(self) -> AmpDesign:
        devs = {}
        for role in DEVICE_ROLES:
            p = self.devices.get(role)
            if p is None:
                raise DeckError(f"device {role} missing from deck")
            for k in ("polarity", "gm", "ro", "w", "l"):
                if k not in p:
                    raise DeckError(f"device {role}: missing {k}")
            try:
                devs[role] = MosSmallSignal(
                    role, p["polarity"], p["gm"], p.get("gmb", 0.0), p["ro"], p["w"], p["l"],
                    p.get("cgs", 0.0), p.get("cgd", 0.0), p.get("cdb", 0.0),
                    p.get("id", 0.0), p.get("vov"))
            except ValueError as exc:
                raise DeckError(str(exc)) from None
        for k in ("cc", "cl"):
            if k not in self.globals:
                raise DeckError(f"global.{k} missing from deck")
        try:
            return AmpDesign(devs, self.globals["cc"], self.globals["cl"],
                             self.globals.get("supply", 1.8),
                             self.globals.get("c1"), self.globals.get("c2"))
        except ValueError as exc:
            raise DeckError(str(exc)) from None

    def pelgrom_params(self) -> PelgromParams:
        return PelgromParams(**{**PelgromParams().__dict__, **self.pelgrom})


def parse_deck(text: str) -> DesignDeck:
    deck = DesignDeck()
    block: list[str] | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise DeckError("unterminated block header", lineno)
            names = line[1:-1].split()
            if not names:
                raise DeckError("empty block header", lineno)
            block = []
            for n in names:
                if n.lower() not in _ROLE:
                    raise DeckError(f"unknown device {n!r}", lineno)
                block.append(_ROLE[n.lower()])
            continue
        if "=" not in line:
            raise DeckError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.rpartition(".")
        name = name.lower()
        if not section:
            if block is None:
                raise DeckError(f"key {key!r} outside a device block needs a section", lineno)
            targets = block
        elif section.lower() in ("global", "pelgrom"):
            table = _GLOBAL_KEYS if section.lower() == "global" else _PELGROM_KEYS
            if name not in table:
                raise DeckError(f"unknown key {key!r}", lineno)
            base, scale = table[name]
            dest = deck.globals if section.lower() == "global" else deck.pelgrom
            dest[name] = _quantity(value, base, lineno) * scale
            continue
        elif section.lower() in _ROLE:
            targets = [_ROLE[section.lower()]]
        else:
            raise DeckError(f"unknown section {section!r}", lineno)
        for role in targets:
            params = deck.devices.setdefault(role, {})
            if name == "polarity":
                v = value.lower()
                if v not in (NMOS, PMOS):
                    raise DeckError(f"polarity must be nmos or pmos, got {value!r}", lineno)
                params[name] = v
            elif name in _DEVICE_KEYS:
                base, scale = _DEVICE_KEYS[name]
                params[name] = _quantity(value, base, lineno) * scale
            else:
                raise DeckError(f"unknown device key {name!r}", lineno)
    return deck


def load_deck(path: str | Path | None = None) -> DesignDeck:
    """Read a deck file; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("pcfamp").joinpath("data/default.deck").read_text()
    else:
        text = Path(path).read_text()
    return parse_deck(text)


def default_design() -> AmpDesign:
    return load_deck().design()
