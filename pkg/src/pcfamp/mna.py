"""Small-signal modified nodal analysis.

A :class:`Circuit` is a list of linear elements between named nodes. It is
stamped into ``(G + sC) x = b`` where ``x`` holds the non-ground node voltages
followed by one branch current per voltage source. Dense LU is used for AC
solves and generalized eigenvalues of the stamped pencil give poles and zeros.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

GROUND = "0"
#: generalized eigenvalues above this magnitude are treated as infinite
INFINITE_EIGENVALUE = 1e15

KINDS = ("R", "C", "G", "I", "V")


class CircuitError(ValueError):
    """Malformed circuit: unknown node, bad element value, duplicate name."""


class SingularCircuitError(ArithmeticError):
    """The MNA matrix is singular at the requested frequency."""

    def __init__(self, message, row=None, unknown=None, floating=(), omega=None):
        super().__init__(message)
        self.row = row
        self.unknown = unknown
        self.floating = tuple(floating)
        self.omega = omega


class EigenvalueError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Element:
    """One linear element.

    ``nodes`` is ``(n+, n-)`` for two-terminal kinds and ``(n+, n-, nc+, nc-)``
    for a VCCS. A VCCS drives ``value * V(nc+, nc-)`` out of ``n+`` through the
    element into ``n-``. For sources ``value`` is the AC magnitude.
    """

    kind: str
    name: str
    nodes: tuple[str, ...]
    value: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CircuitError(f"unknown element kind {self.kind!r}")
        want = 4 if self.kind == "G" else 2
        if len(self.nodes) != want:
            raise CircuitError(f"{self.name}: expected {want} nodes, got {len(self.nodes)}")
        if not np.isfinite(self.value):
            raise CircuitError(f"{self.name}: value must be finite")
        if self.kind in ("R", "C") and not self.value > 0:
            raise CircuitError(f"{self.name}: value must be > 0, got {self.value!r}")


@dataclass(frozen=True)
class Probe:
    """Default transfer-function port: input source name and output node pair."""

    source: str
    out_p: str
    out_n: str = GROUND


class Circuit:
    """Node/element graph.

    Nodes are numbered densely in order of first appearance; ground (``"0"``)
    is always present and is not an unknown.
    """

    def __init__(self, title: str = "", probe: Probe | None = None):
        self.title = title
        self.probe = probe
        self._nodes: dict[str, int] = {}
        self._elements: list[Element] = []
        self._names: set[str] = set()

    # -- construction --------------------------------------------------
    def add_node(self, name: str) -> int:
        name = str(name)
        if name == GROUND:
            return -1
        if name not in self._nodes:
            self._nodes[name] = len(self._nodes)
        return self._nodes[name]

    def add(self, element: Element) -> Element:
        key = element.name.lower()
        if key in self._names:
            raise CircuitError(f"duplicate element name {element.name!r}")
        for n in element.nodes:
            self.add_node(n)
        self._names.add(key)
        self._elements.append(element)
        return element

    def resistor(self, name, n1, n2, ohms):
        return self.add(Element("R", name, (str(n1), str(n2)), float(ohms)))

    def capacitor(self, name, n1, n2, farads):
        return self.add(Element("C", name, (str(n1), str(n2)), float(farads)))

    def vccs(self, name, n_p, n_n, nc_p, nc_n, gm):
        nodes = (str(n_p), str(n_n), str(nc_p), str(nc_n))
        return self.add(Element("G", name, nodes, float(gm)))

    def current_source(self, name, n_p, n_n, ac=1.0):
        return self.add(Element("I", name, (str(n_p), str(n_n)), float(ac)))

    def voltage_source(self, name, n_p, n_n, ac=1.0):
        return self.add(Element("V", name, (str(n_p), str(n_n)), float(ac)))

    def mosfet(self, name, d, g, s, b, gm, gmb=0.0, ro=None):
        """Small-signal MOS: gm and gmb VCCS plus ``ro`` from drain to source."""
        self.vccs(f"G{name}", d, s, g, s, gm)
        if gmb:
            self.vccs(f"GB{name}", d, s, b, s, gmb)
        if ro is not None and np.isfinite(ro):
            self.resistor(f"RO{name}", d, s, ro)

    # -- queries -------------------------------------------------------
    @property
    def nodes(self) -> list[str]:
        return list(self._nodes)

    @property
    def node_count(self) -> int:
        return len(self._nodes)

    @property
    def elements(self) -> tuple[Element, ...]:
        return tuple(self._elements)

    def node_index(self, name: str) -> int:
        name = str(name)
        if name == GROUND:
            return -1
        try:
            return self._nodes[name]
        except KeyError:
            raise CircuitError(f"unknown node {name!r}") from None

    def element(self, name: str) -> Element:
        for e in self._elements:
            if e.name.lower() == name.lower():
                return e
        raise CircuitError(f"unknown element {name!r}")

    def __repr__(self):
        return f"Circuit({self.title!r}, nodes={self.node_count}, elements={len(self._elements)})"


@dataclass(frozen=True)
class MnaSystem:
    """Stamped matrices. ``unknowns`` names each row of ``x``."""

    G: np.ndarray
    C: np.ndarray
    b: np.ndarray
    unknowns: tuple[str, ...]
    node_count: int
    sources: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.unknowns)


@dataclass(frozen=True)
class AcSolution:
    omega: float
    x: np.ndarray
    unknowns: tuple[str, ...]
    residual: float

    def voltage(self, node: str) -> complex:
        if str(node) == GROUND:
            return 0j
        return complex(self.x[self.unknowns.index(str(node))])

    @property
    def node_voltages(self) -> np.ndarray:
        return self.x[[i for i, u in enumerate(self.unknowns) if not u.startswith("I(")]]


def _source_vector(system: MnaSystem, only: str | None = None) -> np.ndarray:
    if only is None:
        return system.b
    rows = system.sources
    key = only.lower()
    if key not in rows:
        raise CircuitError(f"unknown source {only!r}")
    b = np.zeros_like(system.b)
    row, sign, _ = rows[key]
    for r, sgn in zip(row, sign):
        b[r] = sgn * 1.0
    return b


def stamp(circuit: Circuit) -> MnaSystem:
    """Stamp ``circuit`` into ``(G, C, b)``.

    Voltage sources add one branch-current unknown each. ``b`` carries the AC
    magnitude of every independent source.
    """
    n = circuit.node_count
    vsrc = [e for e in circuit.elements if e.kind == "V"]
    size = n + len(vsrc)
    G = np.zeros((size, size))
    C = np.zeros((size, size))
    b = np.zeros(size)
    sources = {}

    def idx(node):
        return circuit.node_index(node)

    def add(M, i, j, v):
        if i >= 0 and j >= 0:
            M[i, j] += v

    branch = n
    for e in circuit.elements:
        if e.kind in ("R", "C"):
            p, m = idx(e.nodes[0]), idx(e.nodes[1])
            M, y = (G, 1.0 / e.value) if e.kind == "R" else (C, e.value)
            add(M, p, p, y)
            add(M, m, m, y)
            add(M, p, m, -y)
            add(M, m, p, -y)
        elif e.kind == "G":
            p, m, cp, cm = (idx(x) for x in e.nodes)
            add(G, p, cp, e.value)
            add(G, p, cm, -e.value)
            add(G, m, cp, -e.value)
            add(G, m, cm, e.value)
        elif e.kind == "I":
            # current flows from n+ through the source to n-
            p, m = idx(e.nodes[0]), idx(e.nodes[1])
            rows, signs = [], []
            if p >= 0:
                b[p] -= e.value
                rows.append(p)
                signs.append(-1.0)
            if m >= 0:
                b[m] += e.value
                rows.append(m)
                signs.append(1.0)
            sources[e.name.lower()] = (rows, signs, e.value)
        elif e.kind == "V":
            p, m = idx(e.nodes[0]), idx(e.nodes[1])
            k = branch
            branch += 1
            add(G, p, k, 1.0)
            add(G, k, p, 1.0)
            add(G, m, k, -1.0)
            add(G, k, m, -1.0)
            b[k] = e.value
            sources[e.name.lower()] = ([k], [1.0], e.value)
    unknowns = tuple(circuit.nodes) + tuple(f"I({e.name})" for e in vsrc)
    return MnaSystem(G, C, b, unknowns, n, sources)


def floating_nodes(circuit: Circuit, omega: float = 0.0) -> list[str]:
    """Nodes with no conductive path to ground at ``omega``.

    Resistors and voltage sources always connect; capacitors only for
    ``omega > 0``. VCCS outputs do not count as a path.
    """
    parent = {n: n for n in [GROUND] + circuit.nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in circuit.elements:
        if e.kind in ("R", "V") or (e.kind == "C" and omega > 0):
            ra, rb = find(e.nodes[0]), find(e.nodes[1])
            if ra != rb:
                parent[ra] = rb
    root = find(GROUND)
    return [n for n in circuit.nodes if find(n) != root]


def _lu_solve(A, b, unknowns, circuit, omega):
    with warnings.catch_warnings():
        # singular pivots are detected and reported below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    diag = np.abs(np.diag(lu))
    scale = max(np.abs(A).max(), 1e-300)
    bad = np.flatnonzero(diag <= 1e-13 * scale)
    if bad.size:
        row = int(bad[0])
        floating = floating_nodes(circuit, omega)
        raise SingularCircuitError(
            f"singular MNA matrix at omega={omega:g} rad/s: near-zero pivot in row {row} "
            f"({unknowns[row]}); nodes without a path to ground: {floating or 'none'}",
            row=row, unknown=unknowns[row], floating=floating, omega=omega,
        )
    return scipy.linalg.lu_solve((lu, piv), b)


def solve_ac(circuit: Circuit, omega: float, system: MnaSystem | None = None,
             b: np.ndarray | None = None) -> AcSolution:
    """Solve the circuit at angular frequency ``omega`` (rad/s)."""
    if system is None:
        system = stamp(circuit)
    if b is None:
        b = system.b
    A = system.G + 1j * omega * system.C
    x = _lu_solve(A, b.astype(complex), system.unknowns, circuit, omega)
    nb = np.linalg.norm(b)
    residual = float(np.linalg.norm(A @ x - b) / nb) if nb else float(np.linalg.norm(A @ x - b))
    return AcSolution(float(omega), x, system.unknowns, residual)


def _output_row(system: MnaSystem, circuit: Circuit, out_p: str, out_n: str) -> np.ndarray:
    L = np.zeros(system.size)
    p, m = circuit.node_index(out_p), circuit.node_index(out_n)
    if p >= 0:
        L[p] += 1.0
    if m >= 0:
        L[m] -= 1.0
    return L


def _port(circuit, source, output):
    if source is None or output is None:
        if circuit.probe is None:
            raise CircuitError("no input/output given and the circuit has no probe")
        source = source or circuit.probe.source
        output = output or (circuit.probe.out_p, circuit.probe.out_n)
    if isinstance(output, str):
        output = (output, GROUND)
    return source, tuple(output)


def transfer(circuit: Circuit, source: str | None = None,
             output: Sequence[str] | str | None = None,
             omegas: Iterable[float] = (0.0,)) -> np.ndarray:
    """H(jw) = (V(out+) - V(out-)) / source value, driven by ``source`` alone."""
    source, (out_p, out_n) = _port(circuit, source, output)
    system = stamp(circuit)
    b = _source_vector(system, source)
    L = _output_row(system, circuit, out_p, out_n)
    out = []
    for w in np.atleast_1d(np.asarray(omegas, dtype=float)):
        try:
            sol = solve_ac(circuit, w, system, b)
        except SingularCircuitError as exc:
            raise SingularCircuitError(f"at omega={w:g}: {exc}", exc.row, exc.unknown,
                                       exc.floating, w) from exc
        out.append(L @ sol.x)
    return np.asarray(out, dtype=complex)


def _finite_eigenvalues(A, B, what):
    try:
        alpha, beta = scipy.linalg.eig(A, B, right=False, homogeneous_eigvals=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenvalueError(f"{what}: QZ iteration failed ({exc})") from exc
    keep = np.abs(beta) > np.abs(alpha) / INFINITE_EIGENVALUE
    vals = alpha[keep] / beta[keep]
    vals = vals[np.isfinite(vals) & (np.abs(vals) < INFINITE_EIGENVALUE)]
    return _clean(vals)


def _clean(vals):
    vals = np.asarray(vals, dtype=complex)
    # real poles come out of QZ with ~1e-9 imaginary dust
    tiny = np.abs(vals.imag) <= 1e-9 * np.maximum(np.abs(vals), 1e-300)
    vals = np.where(tiny, vals.real + 0j, vals)
    order = np.lexsort((vals.imag, vals.real, np.round(np.abs(vals), 12)))
    return vals[order]


def poles_numeric(circuit: Circuit) -> np.ndarray:
    """Finite natural frequencies: s with det(G + sC) = 0, by ascending |s|."""
    system = stamp(circuit)
    if not np.any(system.C):
        raise CircuitError("circuit has no capacitors; there are no finite poles")
    return _finite_eigenvalues(-system.G, system.C, "poles")


@dataclass(frozen=True)
class PoleZero:
    poles: np.ndarray
    zeros: np.ndarray
    gain: complex
    coincident: tuple = ()

    def evaluate(self, s):
        s = np.asarray(s, dtype=complex)
        num = np.prod([s - z for z in self.zeros], axis=0) if len(self.zeros) else 1.0
        den = np.prod([s - p for p in self.poles], axis=0) if len(self.poles) else 1.0
        return self.gain * num / den


def zeros_numeric(circuit: Circuit, source: str | None = None,
                  output: Sequence[str] | str | None = None) -> np.ndarray:
    """Transmission zeros from ``source`` to ``output``.

    Uses the bordered pencil ``[[G + sC, -b], [L, 0]]`` whose finite
    generalized eigenvalues are the s where the output vanishes.
    """
    source, (out_p, out_n) = _port(circuit, source, output)
    system = stamp(circuit)
    b = _source_vector(system, source)
    L = _output_row(system, circuit, out_p, out_n)
    if not L.any():
        raise CircuitError("output node pair is shorted to itself")
    n = system.size
    A = np.zeros((n + 1, n + 1))
    B = np.zeros((n + 1, n + 1))
    A[:n, :n] = system.G
    A[:n, n] = -b
    A[n, :n] = L
    B[:n, :n] = system.C
    return _finite_eigenvalues(-A, B, "zeros")


def pole_zero(circuit: Circuit, source: str | None = None,
              output: Sequence[str] | str | None = None, rtol: float = 1e-9) -> PoleZero:
    """Poles, zeros and the gain constant matching H at one test frequency.

    Pole/zero pairs closer than ``rtol`` are reported in ``coincident`` and
    kept in both lists.
    """
    source, output = _port(circuit, source, output)
    poles = poles_numeric(circuit)
    zeros = zeros_numeric(circuit, source, output)
    coincident = []
    for z in zeros:
        for p in poles:
            if abs(z - p) <= rtol * max(abs(p), abs(z), 1e-30):
                coincident.append((complex(z), complex(p)))
                logger.warning("pole %s and zero %s coincide; not cancelled", p, z)
    scale = max([abs(v) for v in (*poles, *zeros) if v != 0] or [1.0])
    # a test point away from every root
    s0 = 1j * scale * 0.7071
    h0 = transfer(circuit, source, output, [s0.imag])[0]
    num = np.prod([s0 - z for z in zeros]) if len(zeros) else 1.0
    den = np.prod([s0 - p for p in poles]) if len(poles) else 1.0
    if num == 0:
        raise ArithmeticError("test frequency hit a zero")
    gain = h0 * den / num
    return PoleZero(poles, zeros, complex(gain), tuple(coincident))
