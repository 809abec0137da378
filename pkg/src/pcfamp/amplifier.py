"""Closed-form small-signal model of the two-stage amplifier with positive
capacitive feedback, plus builders for its equivalent half circuits.

Device roles:

* ``M1/M2``   input pair (PMOS), ``Mt1`` first-stage tail
* ``M3a/M4a`` diode loads, ``M3b/M4b`` cross-coupled loads of the first stage
* ``M5/M6``   second-stage inputs, ``M7/M8`` cascodes, ``Mt2`` second-stage tail
* ``M9a/M10a`` diode loads, ``M9b/M10b`` cross-coupled loads of the second stage

The compensation capacitor connects each first-stage output to the second-stage
output of the same polarity, which puts a left-half-plane zero at ``gm5/Cc``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .devices import MosSmallSignal
from .mna import Circuit, Probe

DEVICE_ROLES = ("M1", "M2", "M3a", "M4a", "M3b", "M4b", "M5", "M6", "M7", "M8",
                "M9a", "M10a", "M9b", "M10b", "Mt1", "Mt2")
MATCHED_PAIRS = (("M1", "M2"), ("M3a", "M4a"), ("M3b", "M4b"), ("M5", "M6"),
                 ("M7", "M8"), ("M9a", "M10a"), ("M9b", "M10b"))


class LatchUpError(ArithmeticError):
    """A stage output resistance is negative: the active load latches."""


def parallel(*rs: float) -> float:
    g = 0.0
    for r in sorted(rs, reverse=True):
        g = g + (0.0 if math.isinf(r) else 1.0 / r)
    return math.inf if g == 0 else 1.0 / g


@dataclass(frozen=True)
class AmpDesign:
    devices: Mapping[str, MosSmallSignal]
    cc: float
    cl: float
    supply: float = 1.8
    c1_override: float | None = None
    c2_override: float | None = None

    def __post_init__(self):
        missing = [r for r in DEVICE_ROLES if r not in self.devices]
        if missing:
            raise ValueError(f"design is missing devices: {', '.join(missing)}")
        if self.cc < 0 or self.cl < 0:
            raise ValueError("Cc and CL must be >= 0")

    def __getitem__(self, role: str) -> MosSmallSignal:
        return self.devices[role]

    def with_devices(self, **updates: MosSmallSignal) -> "AmpDesign":
        devs = dict(self.devices)
        devs.update(updates)
        return replace(self, devices=devs)

    def with_(self, **kw) -> "AmpDesign":
        return replace(self, **kw)

    def mismatched_pairs(self) -> list[tuple[str, str]]:
        """Matched pairs whose nominal parameters differ."""
        bad = []
        for a, b in MATCHED_PAIRS:
            da, db = self.devices[a], self.devices[b]
            if (da.gm, da.gmb, da.ro, da.W, da.L) != (db.gm, db.gmb, db.ro, db.W, db.L):
                bad.append((a, b))
        return bad


@dataclass(frozen=True)
class NodeCaps:
    c1: float
    c2: float
    overridden: bool = False


@dataclass(frozen=True)
class ClosedFormTf:
    """``a0 (1 + s/z) / (1 + alpha s + beta s^2)``.

    ``alpha_out`` is the output-node part of ``alpha``,
    ``R2 [C2 + CL + Cc (1 - gm5 R1)]``; it drives the simplified pole formulas.
    """

    a0: float
    z: float
    alpha: float
    beta: float
    alpha_out: float

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        num = 1.0 + (s / self.z if math.isfinite(self.z) else 0.0)
        return self.a0 * num / (1.0 + self.alpha * s + self.beta * s * s)

    def at_omega(self, omega):
        return self(1j * np.asarray(omega, dtype=float))


@dataclass(frozen=True)
class ClosedFormPoles:
    p1_approx: float
    p1_simplified: float
    p2_approx: float
    p2_simplified: float
    exact_pair: tuple[complex, complex]


@dataclass(frozen=True)
class StabilityCheck:
    lhs: float
    rhs: float
    margin: float
    stable: bool
    marginal: bool


@dataclass(frozen=True)
class PsrrResult:
    psrr_db: float
    cm_path: float
    divider: float
    vout_over_vdd: float
    psrr_full_db: float


# -- output resistances --------------------------------------------------

def r1_nominal(design: AmpDesign) -> float:
    """First-stage output resistance with a matched load, ``ro1 || ro3a/2``."""
    return parallel(design["M1"].ro, design["M3a"].ro / 2.0)


# the transconductance difference is summed first so a matched load cancels
# exactly and the result equals the parallel-resistance form bit for bit
def r1_denominator(gds1, gds3a, gds3b, gm3a, gm3b) -> float:
    return (gm3a - gm3b) + (gds1 + (gds3a + gds3b))


def r1_mismatch(gds1, gds3a, gds3b, gm3a, gm3b) -> float:
    """Signed first-stage output resistance with unequal load transconductances.

    Negative means the cross-coupled load wins and the stage latches. An
    exactly zero denominator returns ``inf`` (marginal).
    """
    den = r1_denominator(gds1, gds3a, gds3b, gm3a, gm3b)
    return math.inf if den == 0 else 1.0 / den


def cascode_resistance(design: AmpDesign) -> float:
    """Resistance looking into the drain of the M7 cascode."""
    m5, m7 = design["M5"], design["M7"]
    return m7.ro + m5.ro * (1.0 + (m7.gm + m7.gmb) * m7.ro)


def r2_nominal(design: AmpDesign) -> float:
    return parallel(design["M9a"].ro / 2.0, cascode_resistance(design))


def r2_denominator(gds5, gm7, gmb7, gds7, gds9a, gds9b, gm9a, gm9b) -> float:
    r_casc = 1.0 / gds5 * (1.0 + (gm7 + gmb7) / gds7) + 1.0 / gds7
    return (gm9a - gm9b) + ((gds9a + gds9b) + 1.0 / r_casc)


def r2_mismatch(gds5, gm7, gmb7, gds7, gds9a, gds9b, gm9a, gm9b) -> float:
    den = r2_denominator(gds5, gm7, gmb7, gds7, gds9a, gds9b, gm9a, gm9b)
    return math.inf if den == 0 else 1.0 / den


def design_r1(design: AmpDesign) -> float:
    """R1 evaluated on the design's own (possibly unequal) devices."""
    d = design
    return r1_mismatch(d["M1"].gds, d["M3a"].gds, d["M3b"].gds, d["M3a"].gm, d["M3b"].gm)


def design_r2(design: AmpDesign) -> float:
    d = design
    return r2_mismatch(d["M5"].gds, d["M7"].gm, d["M7"].gmb, d["M7"].gds,
                       d["M9a"].gds, d["M9b"].gds, d["M9a"].gm, d["M9b"].gm)


# -- capacitances and gains ----------------------------------------------

def node_caps(design: AmpDesign) -> NodeCaps:
    d = design
    m3a, m3b, m5, m1 = d["M3a"], d["M3b"], d["M5"], d["M1"]
    m9a, m9b, m7 = d["M9a"], d["M9b"], d["M7"]
    c1 = 2 * m3a.Cgs + 2 * m3a.Cdb + 4 * m3b.Cgd + m5.Cgs + 2 * m5.Cgd + m1.Cdb + m1.Cgd
    c2 = 2 * m9a.Cgs + 2 * m9a.Cdb + 4 * m9b.Cgd + m7.Cdb + m7.Cgd
    overridden = design.c1_override is not None or design.c2_override is not None
    if design.c1_override is not None:
        c1 = design.c1_override
    if design.c2_override is not None:
        c2 = design.c2_override
    return NodeCaps(c1, c2, overridden)


def db(x: float) -> float:
    return 20.0 * math.log10(abs(x)) if x else -math.inf


def stage_gains(design: AmpDesign, r1: float | None = None, r2: float | None = None):
    r1 = design_r1(design) if r1 is None else r1
    r2 = design_r2(design) if r2 is None else r2
    return design["M1"].gm * r1, design["M5"].gm * r2


def dc_gain_dm(design: AmpDesign, r1: float | None = None, r2: float | None = None) -> float:
    """Differential DC gain magnitude ``gm1 R1 gm5 R2``.

    The two inverting stages cancel in sign, so the value is positive.
    """
    r1 = design_r1(design) if r1 is None else r1
    r2 = design_r2(design) if r2 is None else r2
    if r1 <= 0 or r2 <= 0:
        raise LatchUpError(f"negative output resistance (R1={r1:.4g}, R2={r2:.4g}): "
                           "the positive-feedback load dominates and the output latches")
    a1, a2 = stage_gains(design, r1, r2)
    return a1 * a2


def degenerated_gm(gm: float, gmb: float, ro: float, rs: float) -> float:
    """Transconductance of a source-degenerated common-source device."""
    if math.isinf(rs):
        return 0.0
    return gm / (1.0 + rs / ro + rs * (gm + gmb))


def cm_gain(design: AmpDesign) -> float:
    d = design
    m1, m3a, m5, m9a = d["M1"], d["M3a"], d["M5"], d["M9a"]
    first = degenerated_gm(m1.gm, m1.gmb, m1.ro, 2 * d["Mt1"].ro) / (2 * m3a.gm)
    second = degenerated_gm(m5.gm, m5.gmb, m5.ro, 2 * d["Mt2"].ro) / (2 * m9a.gm)
    return first * second


def cmrr(design: AmpDesign) -> float:
    """DC CMRR in dB; ``inf`` when the common-mode gain vanishes."""
    acm = cm_gain(design)
    if acm == 0:
        return math.inf
    return db(dc_gain_dm(design) / acm)


def psrr_plus(design: AmpDesign) -> PsrrResult:
    """Positive-supply rejection.

    ``psrr_db`` uses ``Vout/Vdd ~ 1`` so it equals the DM gain; the two terms
    of ``Vout/Vdd`` are returned as well, with ``psrr_full_db`` the ratio
    using their sum.
    """
    ad = dc_gain_dm(design)
    acm = cm_gain(design)
    r_o7 = cascode_resistance(design)
    divider = r_o7 / (r_o7 + 1.0 / (2 * design["M9a"].gm))
    vout = -acm + divider
    return PsrrResult(db(ad), -acm, divider, vout, db(ad / vout))


# -- frequency response --------------------------------------------------

def closed_form_tf(design: AmpDesign, r1: float | None = None,
                   r2: float | None = None) -> ClosedFormTf:
    r1 = design_r1(design) if r1 is None else r1
    r2 = design_r2(design) if r2 is None else r2
    caps = node_caps(design)
    gm1, gm5 = design["M1"].gm, design["M5"].gm
    cc, cl, c1, c2 = design.cc, design.cl, caps.c1, caps.c2
    alpha_out = r2 * (c2 + cl + cc * (1.0 - gm5 * r1))
    alpha = alpha_out + (cc + c1) * r1
    beta = r1 * r2 * ((c2 + cl) * (c1 + cc) + c1 * cc)
    z = gm5 / cc if cc > 0 else math.inf
    return ClosedFormTf(gm1 * r1 * gm5 * r2, z, alpha, beta, alpha_out)


def quadratic_roots(alpha: float, beta: float) -> tuple[complex, complex]:
    """Roots of ``1 + alpha s + beta s^2``, smaller magnitude first."""
    if beta == 0:
        return (complex(-1.0 / alpha), complex(-math.inf))
    disc = complex(alpha * alpha - 4.0 * beta) ** 0.5
    # cancellation-free form
    q = -0.5 * (alpha + (disc if alpha >= 0 else -disc))
    r_big = q / beta
    r_small = 1.0 / q
    return (complex(r_small), complex(r_big))


def poles_closed_form(tf: ClosedFormTf) -> ClosedFormPoles:
    return ClosedFormPoles(
        p1_approx=-1.0 / tf.alpha,
        p1_simplified=-1.0 / tf.alpha_out,
        p2_approx=-tf.alpha / tf.beta,
        p2_simplified=-tf.alpha_out / tf.beta,
        exact_pair=quadratic_roots(tf.alpha, tf.beta),
    )


def stability_check(design: AmpDesign, r1: float | None = None, rtol: float = 1e-12) -> StabilityCheck:
    """Compare ``(C2 + CL)/Cc`` against ``gm5 R1 - 1``."""
    r1 = design_r1(design) if r1 is None else r1
    c2 = node_caps(design).c2
    lhs = (c2 + design.cl) / design.cc if design.cc > 0 else math.inf
    rhs = design["M5"].gm * r1 - 1.0
    margin = lhs - rhs
    marginal = math.isfinite(margin) and abs(margin) <= rtol * max(abs(lhs), abs(rhs), 1.0)
    return StabilityCheck(lhs, rhs, margin, margin > 0 and not marginal, marginal)


# -- equivalent half circuits --------------------------------------------

DM, CM, PSRR = "dm", "cm", "psrr"


def build_half_circuit(design: AmpDesign, mode: str = DM, r1: float | None = None,
                       r2: float | None = None) -> Circuit:
    """Equivalent half circuit for MNA.

    ``dm``: two-node model driven by ``vin``. Node ``outm`` carries the
    inverted output, so the output pair ``("0", "outm")`` reads the DM output
    and ``Cc`` appears as an ordinary capacitor from ``n1`` to ``outm`` while
    the second-stage VCCS takes ``-gm5``.

    ``cm``: transistor-level half circuit driven by a common-mode source
    ``vcm``, tails degenerated by ``2 rOt``.

    ``psrr``: the same network with inputs grounded and a supply source
    ``vdd`` feeding the first-stage tail and the second-stage loads.
    """
    mode = mode.lower()
    caps = node_caps(design)
    d = design
    c2l = caps.c2 + d.cl
    if mode == DM:
        r1 = design_r1(design) if r1 is None else r1
        r2 = design_r2(design) if r2 is None else r2
        ckt = Circuit("DM half circuit", Probe("vin", "0", "outm"))
        ckt.voltage_source("vin", "in", "0", 1.0)
        ckt.vccs("gm1", "n1", "0", "in", "0", d["M1"].gm)
        ckt.resistor("r1", "n1", "0", r1)
        ckt.capacitor("c1", "n1", "0", caps.c1)
        ckt.vccs("gm5", "outm", "0", "n1", "0", -d["M5"].gm)
        ckt.resistor("r2", "outm", "0", r2)
        ckt.capacitor("c2", "outm", "0", c2l)
        if d.cc > 0:
            ckt.capacitor("cc", "n1", "outm", d.cc)
        return ckt
    if mode not in (CM, PSRR):
        raise ValueError(f"unknown mode {mode!r}")

    rail = "vdd" if mode == PSRR else "0"
    gate = "in" if mode == CM else "0"
    ckt = Circuit(f"{mode.upper()} half circuit", Probe("vcm" if mode == CM else "vdd", "out"))
    if mode == CM:
        ckt.voltage_source("vcm", "in", "0", 1.0)
    else:
        ckt.voltage_source("vdd", "vdd", "0", 1.0)
    m1, m3a, m3b, m5, m7, m9a, m9b = (d[k] for k in ("M1", "M3a", "M3b", "M5", "M7", "M9a", "M9b"))
    # first stage: PMOS input with bulk on the supply, tail 2*rOt1 to the supply
    ckt.resistor("rt1", "s1", rail, 2 * d["Mt1"].ro)
    ckt.mosfet("1", "n1", gate, "s1", rail, m1.gm, m1.gmb, m1.ro)
    # CM: the cross-coupled gate sees the other output, which equals n1
    ckt.mosfet("3a", "n1", "n1", "0", "0", m3a.gm, 0.0, m3a.ro)
    ckt.mosfet("3b", "n1", "n1", "0", "0", m3b.gm, 0.0, m3b.ro)
    ckt.capacitor("c1", "n1", "0", caps.c1)
    # second stage: NMOS input and cascode, PMOS loads on the supply
    ckt.resistor("rt2", "s2", "0", 2 * d["Mt2"].ro)
    ckt.mosfet("5", "x", "n1", "s2", "0", m5.gm, m5.gmb, m5.ro)
    ckt.mosfet("7", "out", "0", "x", "0", m7.gm, m7.gmb, m7.ro)
    ckt.mosfet("9a", "out", "out", rail, rail, m9a.gm, 0.0, m9a.ro)
    ckt.mosfet("9b", "out", "out", rail, rail, m9b.gm, 0.0, m9b.ro)
    ckt.capacitor("c2", "out", "0", c2l)
    if d.cc > 0:
        ckt.capacitor("cc", "n1", "out", d.cc)
    return ckt
