"""Bode data, unity-gain crossing, phase margin, C_L sweeps and
rejection-ratio curves."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import amplifier as amp
from .mna import Circuit, transfer


class NoCrossingError(ValueError):
    pass


@dataclass(frozen=True)
class FrequencyResponse:
    freq: np.ndarray
    mag_db: np.ndarray
    phase_deg: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.freq) <= 0):
            raise ValueError("frequencies must be strictly increasing")

    @classmethod
    def from_complex(cls, freq, h) -> "FrequencyResponse":
        h = np.asarray(h, dtype=complex)
        with np.errstate(divide="ignore"):
            mag = 20.0 * np.log10(np.abs(h))
        phase = np.unwrap(np.degrees(np.angle(h)), period=360.0)
        return cls(np.asarray(freq, dtype=float), mag, phase)

    def __len__(self):
        return len(self.freq)

    def at(self, f: float) -> tuple[float, float]:
        """Magnitude and phase interpolated in log frequency."""
        lf = np.log10(self.freq)
        x = math.log10(f)
        return float(np.interp(x, lf, self.mag_db)), float(np.interp(x, lf, self.phase_deg))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("freq_hz,mag_db,phase_deg\n")
        for row in zip(self.freq, self.mag_db, self.phase_deg):
            buf.write(",".join(fmt(v) for v in row) + "\n")
        return buf.getvalue()


@dataclass(frozen=True)
class StabilityReport:
    gbw: float
    pm: float
    dc_gain: float
    f_3db: float
    stable: bool
    non_monotone: bool = False


def fmt(x: float, digits: int = 12) -> str:
    """Positional decimal with ``digits`` significant digits."""
    x = float(x)
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return np.format_float_positional(x, precision=digits, unique=False,
                                      fractional=False, trim="-")


def log_grid(f_start: float, f_stop: float, points_per_decade: int) -> np.ndarray:
    if not (0 < f_start < f_stop):
        raise ValueError("need 0 < f_start < f_stop")
    if points_per_decade < 1:
        raise ValueError("points_per_decade must be >= 1")
    decades = math.log10(f_stop / f_start)
    n = max(int(math.ceil(decades * points_per_decade - 1e-9)), 1) + 1
    return np.logspace(math.log10(f_start), math.log10(f_stop), n)


def evaluate(system, freq: np.ndarray) -> np.ndarray:
    """H(j 2 pi f) for a closed form, a probed Circuit, or a callable of s."""
    omega = 2.0 * np.pi * np.asarray(freq, dtype=float)
    if isinstance(system, Circuit):
        return transfer(system, omegas=omega)
    return np.asarray(system(1j * omega), dtype=complex)


def bode(system, f_start: float, f_stop: float, points_per_decade: int = 100) -> FrequencyResponse:
    freq = log_grid(f_start, f_stop, points_per_decade)
    return FrequencyResponse.from_complex(freq, evaluate(system, freq))


def _downward_crossings(resp: FrequencyResponse) -> list[int]:
    m = resp.mag_db
    return [i for i in range(len(m) - 1) if m[i] >= 0.0 > m[i + 1]]


def _interp_crossing(resp: FrequencyResponse, i: int) -> tuple[float, float]:
    m0, m1 = resp.mag_db[i], resp.mag_db[i + 1]
    t = m0 / (m0 - m1)
    lf0, lf1 = math.log10(resp.freq[i]), math.log10(resp.freq[i + 1])
    f = 10 ** (lf0 + t * (lf1 - lf0))
    ph = resp.phase_deg[i] + t * (resp.phase_deg[i + 1] - resp.phase_deg[i])
    return f, ph


def gbw(resp: FrequencyResponse) -> float:
    """Unity-gain frequency: the lowest downward 0 dB crossing."""
    crossings = _downward_crossings(resp)
    if not crossings:
        raise NoCrossingError(f"no 0 dB crossing between {resp.freq[0]:g} Hz and {resp.freq[-1]:g} Hz")
    return _interp_crossing(resp, crossings[0])[0]


def phase_margin(resp: FrequencyResponse) -> float:
    crossings = _downward_crossings(resp)
    if not crossings:
        raise NoCrossingError(f"no 0 dB crossing between {resp.freq[0]:g} Hz and {resp.freq[-1]:g} Hz")
    return 180.0 + _interp_crossing(resp, crossings[0])[1]


def f_3db(resp: FrequencyResponse) -> float:
    target = resp.mag_db[0] - 10 * math.log10(2.0)
    below = np.flatnonzero(resp.mag_db < target)
    if below.size == 0:
        return math.nan
    i = int(below[0])
    if i == 0:
        return float(resp.freq[0])
    m0, m1 = resp.mag_db[i - 1], resp.mag_db[i]
    t = (m0 - target) / (m0 - m1)
    lf0, lf1 = math.log10(resp.freq[i - 1]), math.log10(resp.freq[i])
    return 10 ** (lf0 + t * (lf1 - lf0))


def stability_report(resp: FrequencyResponse) -> StabilityReport:
    n_cross = len(_downward_crossings(resp))
    g = gbw(resp)
    pm = phase_margin(resp)
    return StabilityReport(g, pm, float(resp.mag_db[0]), f_3db(resp), pm > 0,
                           non_monotone=n_cross > 1 or bool(np.any(np.diff(resp.mag_db) > 1e-9)))


# -- design-level analyses ------------------------------------------------

DEFAULT_RANGE = (1.0, 1e11)


@dataclass(frozen=True)
class ClSweepRow:
    cl: float
    report: StabilityReport
    margin: float
    poles_lhp: bool

    def csv_row(self) -> str:
        r = self.report
        return ",".join([fmt(self.cl), fmt(r.gbw), fmt(r.pm), fmt(r.dc_gain),
                         "1" if r.stable else "0"])


def design_report(design: amp.AmpDesign, points_per_decade: int = 100,
                  f_range: tuple[float, float] = DEFAULT_RANGE) -> StabilityReport:
    return stability_report(bode(amp.closed_form_tf(design), *f_range, points_per_decade))


def cl_sweep(design: amp.AmpDesign, cl_values: Sequence[float],
             points_per_decade: int = 100) -> list[ClSweepRow]:
    rows = []
    for cl in cl_values:
        if not cl > 0:
            raise ValueError(f"C_L must be positive, got {cl!r}")
        d = design.with_(cl=float(cl))
        tf = amp.closed_form_tf(d)
        report = stability_report(bode(tf, *DEFAULT_RANGE, points_per_decade))
        check = amp.stability_check(d)
        lhp = all(p.real < 0 for p in amp.poles_closed_form(tf).exact_pair)
        rows.append(ClSweepRow(float(cl), report, check.margin, lhp))
    return rows


def sweep_csv(rows: Sequence[ClSweepRow]) -> str:
    return "cl_farad,gbw_hz,pm_deg,dc_gain_db,stable\n" + "".join(r.csv_row() + "\n" for r in rows)


def ratio_response(num, den, freq) -> FrequencyResponse:
    """|num / den| in dB (and its phase) over ``freq``."""
    freq = np.asarray(freq, dtype=float)
    return FrequencyResponse.from_complex(freq, evaluate(num, freq) / evaluate(den, freq))


def cmrr_psrr_vs_freq(design: amp.AmpDesign, freq) -> tuple[FrequencyResponse, FrequencyResponse]:
    """CMRR(f) and PSRR+(f) from MNA solves of the DM, CM and supply half circuits."""
    dm = amp.build_half_circuit(design, amp.DM)
    cm = amp.build_half_circuit(design, amp.CM)
    ps = amp.build_half_circuit(design, amp.PSRR)
    return ratio_response(dm, cm, freq), ratio_response(dm, ps, freq)
