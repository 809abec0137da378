"""SPICE-subset netlist parser.

Grammar (one card per line, whitespace separated, leaders case-insensitive)::

    R<id> n1 n2 value
    C<id> n1 n2 value
    G<id> n+ n- nc+ nc- gm
    I<id> n+ n- AC mag
    V<id> n+ n- AC mag
    .AC DEC <ppd> <fstart> <fstop>
    .PZ <in-src> <nodep> <noden>
    .END

The first line is the title. ``*`` starts a comment line. Node ``0`` is
ground. Values take the suffixes f p n u m k meg g (``m`` is milli).
"""
from __future__ import annotations

import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal

from .mna import GROUND, Circuit, CircuitError, Element, Probe


class NetlistError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0, token: str = ""):
        where = f"{line}:{column}: " if line else ""
        super().__init__(f"{where}{message}" + (f" (at {token!r})" if token else ""))
        self.line = line
        self.column = column
        self.token = token


@dataclass(frozen=True)
class Span:
    line: int
    column: int


@dataclass(frozen=True)
class ElementCard:
    kind: str
    name: str
    nodes: tuple[str, ...]
    value: float
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class AcCard:
    ppd: int
    fstart: float
    fstop: float
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class PzCard:
    source: str
    node_p: str
    node_n: str
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class EndCard:
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class NetlistAst:
    title: str
    cards: tuple

    @property
    def elements(self) -> list[ElementCard]:
        return [c for c in self.cards if isinstance(c, ElementCard)]

    def directive(self, kind):
        for c in self.cards:
            if isinstance(c, kind):
                return c
        return None


SUFFIXES = {"f": -15, "p": -12, "n": -9, "u": -6, "m": -3, "k": 3, "meg": 6, "g": 9}
_NUMBER = re.compile(r"([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(meg|[fpnumkg])?([a-z]*)$",
                     re.IGNORECASE)


def parse_value(token: str) -> float:
    """SPICE number with optional scale suffix; trailing unit letters are ignored."""
    m = _NUMBER.match(token)
    if not m:
        raise ValueError(f"bad value {token!r}")
    mantissa, suffix, _ = m.groups()
    try:
        d = Decimal(mantissa)
        if suffix:
            d = d.scaleb(SUFFIXES[suffix.lower()])
        v = float(d)
    except ArithmeticError:
        raise ValueError(f"bad value {token!r}") from None
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError(f"value out of range {token!r}")
    return v


_FORMAT_SUFFIX = [(9, "g"), (6, "meg"), (3, "k"), (0, ""), (-3, "m"), (-6, "u"),
                  (-9, "n"), (-12, "p"), (-15, "f")]


def format_value(x: float) -> str:
    """Shortest exact engineering form of ``x`` (``parse_value`` inverts it)."""
    x = float(x)
    if x == 0:
        return "0"
    d = Decimal(repr(x))
    exp = d.adjusted()
    for e, suf in _FORMAT_SUFFIX:
        if exp >= e:
            break
    else:
        e, suf = -15, "f"
    m = d.scaleb(-e).normalize()
    text = format(m, "f") if abs(m.adjusted()) < 20 else format(m, "E")
    return text + suf


_LEADERS = {"R": 4, "C": 4, "G": 6, "I": 5, "V": 5}


def _tokens(line: str):
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]


def parse_netlist(text) -> NetlistAst:
    """Parse netlist text (or bytes) into a :class:`NetlistAst`.

    Every failure raises :class:`NetlistError` with a line:column location.
    """
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    lines = text.splitlines()
    if not lines:
        raise NetlistError("empty input: expected a title line")
    title = lines[0].strip()
    cards: list = []
    names: set[str] = set()
    ended = False
    for lineno, raw in enumerate(lines[1:], start=2):
        toks = _tokens(raw)
        if not toks or toks[0][0].startswith("*"):
            continue
        head, col = toks[0]
        span = Span(lineno, col)
        if ended:
            raise NetlistError("card after .END", lineno, col, head)
        lead = head[0].upper()
        if head.startswith("."):
            directive = head.upper()
            if directive == ".END":
                if len(toks) > 1:
                    raise NetlistError("unexpected tokens after .END", lineno, toks[1][1], toks[1][0])
                cards.append(EndCard(span))
                ended = True
            elif directive == ".AC":
                cards.append(_parse_ac(toks, span))
            elif directive == ".PZ":
                if len(toks) != 4:
                    raise NetlistError(".PZ expects <src> <nodep> <noden>", lineno, col, head)
                cards.append(PzCard(toks[1][0], toks[2][0], toks[3][0], span))
            else:
                raise NetlistError("unknown directive", lineno, col, head)
            continue
        if lead not in _LEADERS:
            raise NetlistError("unknown card leader", lineno, col, head)
        if len(head) < 2:
            raise NetlistError("element name needs an id after the leader", lineno, col, head)
        want = _LEADERS[lead]
        if len(toks) != want:
            raise NetlistError(f"{lead} card expects {want} fields, got {len(toks)}", lineno, col, head)
        key = head.lower()
        if key in names:
            raise NetlistError("duplicate element name", lineno, col, head)
        names.add(key)
        n_nodes = 4 if lead == "G" else 2
        nodes = tuple(t for t, _ in toks[1:1 + n_nodes])
        if lead in "IV":
            kw, kcol = toks[3]
            if kw.upper() != "AC":
                raise NetlistError("expected AC", lineno, kcol, kw)
        vtok, vcol = toks[-1]
        try:
            value = parse_value(vtok)
        except ValueError:
            raise NetlistError("bad numeric value", lineno, vcol, vtok) from None
        if lead in "RC" and not value > 0:
            raise NetlistError("value must be positive", lineno, vcol, vtok)
        cards.append(ElementCard(lead, head, nodes, value, span))
    if not ended:
        raise NetlistError("missing .END", len(lines), 1)
    return NetlistAst(title, tuple(cards))


def _parse_ac(toks, span):
    head, col = toks[0]
    if len(toks) != 5:
        raise NetlistError(".AC expects DEC <ppd> <fstart> <fstop>", span.line, col, head)
    if toks[1][0].upper() != "DEC":
        raise NetlistError("only DEC sweeps are supported", span.line, toks[1][1], toks[1][0])
    vals = []
    for tok, c in toks[2:]:
        try:
            vals.append(parse_value(tok))
        except ValueError:
            raise NetlistError("bad numeric value", span.line, c, tok) from None
    ppd, fstart, fstop = vals
    if ppd < 1 or ppd != int(ppd):
        raise NetlistError("points per decade must be a positive integer", span.line, toks[2][1], toks[2][0])
    if not 0 < fstart < fstop:
        raise NetlistError("need 0 < fstart < fstop", span.line, toks[3][1], toks[3][0])
    return AcCard(int(ppd), fstart, fstop, span)


def format_netlist(ast: NetlistAst) -> str:
    out = [ast.title]
    for c in ast.cards:
        if isinstance(c, ElementCard):
            mid = " AC" if c.kind in "IV" else ""
            out.append(f"{c.name} {' '.join(c.nodes)}{mid} {format_value(c.value)}")
        elif isinstance(c, AcCard):
            out.append(f".AC DEC {c.ppd} {format_value(c.fstart)} {format_value(c.fstop)}")
        elif isinstance(c, PzCard):
            out.append(f".PZ {c.source} {c.node_p} {c.node_n}")
        elif isinstance(c, EndCard):
            out.append(".END")
    return "\n".join(out) + "\n"


class NetlistWarning(UserWarning):
    pass


def elaborate(ast: NetlistAst) -> Circuit:
    """Build a :class:`Circuit`; node numbering follows first appearance."""
    elements = ast.elements
    if not elements:
        raise NetlistError("netlist has no elements (empty circuit)")
    probe = None
    pz = ast.directive(PzCard)
    if pz is not None:
        probe = Probe(pz.source, pz.node_p, pz.node_n)
    ckt = Circuit(ast.title, probe)
    touches = Counter()
    for c in elements:
        try:
            ckt.add(Element(c.kind, c.name, c.nodes, c.value))
        except CircuitError as exc:
            line, col = (c.span.line, c.span.column) if c.span else (0, 0)
            raise NetlistError(str(exc), line, col, c.name) from None
        for n in c.nodes:
            touches[n] += 1
    if not any(GROUND in c.nodes for c in elements):
        raise NetlistError("no ground reference (node 0)")
    for n in ckt.nodes:
        if touches[n] < 2:
            warnings.warn(f"node {n!r} has a single connection", NetlistWarning, stacklevel=2)
    if pz is not None:
        try:
            ckt.element(pz.source)
            for n in (pz.node_p, pz.node_n):
                ckt.node_index(n)
        except CircuitError as exc:
            raise NetlistError(str(exc), pz.span.line if pz.span else 0,
                               pz.span.column if pz.span else 0) from None
    return ckt


def read_netlist(path) -> tuple[NetlistAst, Circuit]:
    with open(path, "rb") as fh:
        ast = parse_netlist(fh.read())
    return ast, elaborate(ast)
