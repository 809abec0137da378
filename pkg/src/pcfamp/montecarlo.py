"""Mismatch Monte Carlo over the matched devices of the amplifier."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import amplifier as amp
from . import response as rsp
from .devices import (CutoffError, MismatchDelta, PelgromParams, apply_mismatch,
                      draw_delta)

#: devices that get a mismatch sample (tail sources are single devices)
MATCHED_DEVICES = tuple(d for pair in amp.MATCHED_PAIRS for d in pair)
#: each device gets sigma/sqrt(2) so that any matched pair differs by A/sqrt(WL)
PAIR_SCALE = 1.0 / math.sqrt(2.0)
MAX_REDRAWS = 1000

METRICS = ("r1", "r2", "av_db", "gbw_hz", "pm_deg", "offset_v")


@dataclass(frozen=True)
class McConfig:
    runs: int
    seed: int
    pelgrom: PelgromParams
    design: amp.AmpDesign
    points_per_decade: int = 100

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")


@dataclass(frozen=True)
class McRun:
    index: int
    deltas: tuple[MismatchDelta, ...]
    r1: float
    r2: float
    av_db: float
    gbw_hz: float
    pm_deg: float
    offset_v: float
    latched: bool
    rejected: int = 0

    def csv_row(self) -> str:
        vals = [self.r1, self.r2, self.av_db, self.gbw_hz, self.pm_deg, self.offset_v]
        return ",".join([str(self.index)] + [rsp.fmt(v) for v in vals]
                        + ["1" if self.latched else "0"])


@dataclass(frozen=True)
class Stat:
    min: float
    max: float
    mean: float
    std: float


@dataclass(frozen=True)
class McSummary:
    stats: dict
    runs: int
    latch_count: int
    rejected: int
    r1r2_max_ratio_to_nominal: float

    def to_text(self) -> str:
        lines = [f"runs={self.runs}", f"latch_count={self.latch_count}",
                 f"rejected_samples={self.rejected}",
                 f"r1r2_max_ratio_to_nominal={rsp.fmt(self.r1r2_max_ratio_to_nominal)}"]
        for name in METRICS:
            s = self.stats.get(name)
            if s is None:
                continue
            for k in ("min", "max", "mean", "std"):
                lines.append(f"{name}.{k}={rsp.fmt(getattr(s, k))}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class McResult:
    runs: list
    summary: McSummary
    nominal: McRun

    def to_csv(self) -> str:
        return runs_csv(self.runs)


def runs_csv(runs: Sequence[McRun]) -> str:
    buf = io.StringIO()
    buf.write("run,r1_ohm,r2_ohm,av_db,gbw_hz,pm_deg,offset_v,latched\n")
    for r in runs:
        buf.write(r.csv_row() + "\n")
    return buf.getvalue()


def input_referred_offset(deltas, design: amp.AmpDesign) -> float:
    """Input-referred offset voltage from per-device mismatch.

    Threshold and current-factor errors of the first-stage devices are
    converted to a current error at the first-stage outputs and divided by
    gm1; second-stage errors are referred the same way to the second-stage
    input and then divided by the first-stage gain ``gm1 R1``.
    """
    by = {d.device: d for d in deltas}

    def dvt(name):
        return by[name].dVt if name in by else 0.0

    def dbeta(name):
        return by[name].dBetaRel if name in by else 0.0

    def stage(inp, loads, gm_in, i_in):
        a, b = inp
        v = dvt(a) - dvt(b) + i_in / gm_in * (dbeta(a) - dbeta(b))
        for x, y in loads:
            dx = design[x]
            v += dx.gm / gm_in * (dvt(x) - dvt(y))
            v += dx.Id / gm_in * (dbeta(x) - dbeta(y))
        return v

    m1, m5 = design["M1"], design["M5"]
    first = stage(("M1", "M2"), (("M3a", "M4a"), ("M3b", "M4b")), m1.gm, m1.Id)
    second = stage(("M5", "M6"), (("M9a", "M10a"), ("M9b", "M10b")), m5.gm, m5.Id)
    return first + second / (m1.gm * amp.r1_nominal(design))


def evaluate_sample(index, design, deltas, rejected=0, ppd=100, nominal_design=None):
    """Metrics for one perturbed ``design``; latched when either stage
    resistance denominator is <= 0."""
    nominal_design = design if nominal_design is None else nominal_design
    d = design
    den1 = amp.r1_denominator(d["M1"].gds, d["M3a"].gds, d["M3b"].gds, d["M3a"].gm, d["M3b"].gm)
    den2 = amp.r2_denominator(d["M5"].gds, d["M7"].gm, d["M7"].gmb, d["M7"].gds,
                              d["M9a"].gds, d["M9b"].gds, d["M9a"].gm, d["M9b"].gm)
    r1, r2 = amp.design_r1(d), amp.design_r2(d)
    offset = input_referred_offset(deltas, nominal_design)
    if den1 <= 0 or den2 <= 0:
        return McRun(index, tuple(deltas), r1, r2, math.nan, math.nan, math.nan,
                     offset, True, rejected)
    av = amp.dc_gain_dm(d, r1, r2)
    tf = amp.closed_form_tf(d, r1, r2)
    try:
        report = rsp.stability_report(rsp.bode(tf, *rsp.DEFAULT_RANGE, ppd))
        g, pm = report.gbw, report.pm
    except rsp.NoCrossingError:
        g = pm = math.nan
    return McRun(index, tuple(deltas), r1, r2, amp.db(av), g, pm, offset, False, rejected)


def simulate_run(index: int, rng: np.random.Generator, config: McConfig) -> McRun:
    design = config.design
    updates, deltas, rejected = {}, [], 0
    for name in MATCHED_DEVICES:
        dev = design[name]
        for _ in range(MAX_REDRAWS):
            delta = draw_delta(rng, dev, config.pelgrom, PAIR_SCALE)
            try:
                updates[name] = apply_mismatch(dev, delta)
                break
            except CutoffError:
                rejected += 1
        else:
            raise RuntimeError(f"{name}: no in-saturation sample after {MAX_REDRAWS} draws")
        deltas.append(delta)
    return evaluate_sample(index, design.with_devices(**updates), deltas, rejected,
                     config.points_per_decade, design)


def run_campaign(config: McConfig) -> McResult:
    """Run ``config.runs`` independent mismatch samples.

    Run ``i`` draws from substream ``i`` of ``SeedSequence(seed)``, so results
    do not depend on evaluation order.
    """
    streams = np.random.SeedSequence(config.seed).spawn(config.runs)
    runs = [simulate_run(i, np.random.default_rng(s), config) for i, s in enumerate(streams)]
    zero = [MismatchDelta(n, 0.0, 0.0) for n in MATCHED_DEVICES]
    nominal = evaluate_sample(-1, config.design, zero, 0, config.points_per_decade, config.design)
    return McResult(runs, summarize(runs, nominal), nominal)


def _stat(values) -> Stat | None:
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    if v.size == 0:
        return None
    return Stat(float(v.min()), float(v.max()), float(v.mean()), float(v.std()))


def summarize(runs: Sequence[McRun], nominal: McRun | None = None) -> McSummary:
    """Population statistics; latched runs are counted but excluded."""
    if not runs:
        raise ValueError("need at least one run")
    runs = sorted(runs, key=lambda r: r.index)
    ok = [r for r in runs if not r.latched]
    stats = {}
    for name in METRICS:
        src = runs if name in ("r1", "r2", "offset_v") else ok
        s = _stat(getattr(r, name) for r in src)
        if s is not None:
            stats[name] = s
    ratio = math.nan
    if nominal is not None and ok:
        base = nominal.r1 * nominal.r2
        ratios = [r.r1 * r.r2 / base for r in ok]
        ratio = max(max(x, 1.0 / x) for x in ratios)
    return McSummary(stats, len(runs), sum(r.latched for r in runs),
                     sum(r.rejected for r in runs), ratio)
