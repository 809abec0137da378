"""Command-line driver: ``pcfamp {report,bode,pz,sweep-cl,mc,ac}``.

Exit codes: 0 success, 1 usage error, 2 input error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import amplifier as amp
from . import mna
from . import montecarlo as mc
from . import response as rsp
from .deck import DeckError, load_deck
from .netlist import NetlistError, parse_value, read_netlist

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("pcfamp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _g(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    return f"{x:.6g}"


def report_lines(design: amp.AmpDesign) -> list[tuple[str, str]]:
    """Closed-form figures of merit as ordered ``(key, value)`` pairs."""
    r1, r2 = amp.design_r1(design), amp.design_r2(design)
    caps = amp.node_caps(design)
    a1, a2 = amp.stage_gains(design, r1, r2)
    ad = amp.dc_gain_dm(design, r1, r2)
    acm = amp.cm_gain(design)
    ps = amp.psrr_plus(design)
    tf = amp.closed_form_tf(design, r1, r2)
    poles = amp.poles_closed_form(tf)
    chk = amp.stability_check(design, r1)
    mrad = 1e-6
    return [
        ("R1_ohm", _g(r1)),
        ("R2_ohm", _g(r2)),
        ("C1_F", _g(caps.c1)),
        ("C2_F", _g(caps.c2)),
        ("C_overridden", _g(caps.overridden)),
        ("Av", _g(ad)),
        ("Av_dB", _g(amp.db(ad))),
        ("Av1_dB", _g(amp.db(a1))),
        ("Av2_dB", _g(amp.db(a2))),
        ("Acm", _g(acm)),
        ("Acm_dB", _g(amp.db(acm))),
        ("CMRR_dB", _g(amp.cmrr(design))),
        ("PSRR_dB", _g(ps.psrr_db)),
        ("Vout_per_Vdd", _g(ps.vout_over_vdd)),
        ("Vdd_divider", _g(ps.divider)),
        ("PSRR_full_dB", _g(ps.psrr_full_db)),
        ("alpha_s", _g(tf.alpha)),
        ("beta_s2", _g(tf.beta)),
        ("z_Mrad_s", _g(tf.z * mrad)),
        ("p1_Mrad_s", _g(-poles.p1_approx * mrad)),
        ("p1_simplified_Mrad_s", _g(-poles.p1_simplified * mrad)),
        ("p1_exact_Mrad_s", _g(abs(poles.exact_pair[0]) * mrad)),
        ("p2_Mrad_s", _g(-poles.p2_approx * mrad)),
        ("p2_simplified_Mrad_s", _g(-poles.p2_simplified * mrad)),
        ("p2_exact_Mrad_s", _g(abs(poles.exact_pair[1]) * mrad)),
        ("stab_lhs", _g(chk.lhs)),
        ("stab_rhs", _g(chk.rhs)),
        ("stab_margin", _g(chk.margin)),
        ("stable", _g(chk.stable)),
    ]


def format_report(design: amp.AmpDesign) -> str:
    return "".join(f"{k}={v}\n" for k, v in report_lines(design))


def _cl_list(text: str) -> list[float]:
    try:
        vals = [parse_value(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"--cl: {exc}") from None
    if not vals:
        raise UsageError("--cl: empty list")
    return vals


def _spice_number(text: str) -> float:
    try:
        return parse_value(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def cmd_report(args) -> int:
    _emit(format_report(load_deck(args.deck).design()), args.out)
    return EXIT_OK


def cmd_bode(args) -> int:
    design = load_deck(args.deck).design()
    if not 0 < args.fstart < args.fstop or args.ppd < 1:
        raise UsageError("need 0 < --fstart < --fstop and --ppd >= 1")
    system = amp.build_half_circuit(design) if args.mna else amp.closed_form_tf(design)
    resp = rsp.bode(system, args.fstart, args.fstop, args.ppd)
    _emit(resp.to_csv(), args.out)
    try:
        rep = rsp.stability_report(resp)
        print(f"gbw_hz={rsp.fmt(rep.gbw)} pm_deg={rsp.fmt(rep.pm)}", file=sys.stderr)
    except rsp.NoCrossingError as exc:
        print(f"note: {exc}", file=sys.stderr)
    return EXIT_OK


def _complex(z: complex) -> str:
    return f"{rsp.fmt(z.real)}{'+' if z.imag >= 0 else '-'}{rsp.fmt(abs(z.imag))}j"


def cmd_pz(args) -> int:
    ast, ckt = read_netlist(args.netlist)
    output = None
    if args.out_nodes:
        parts = [p.strip() for p in args.out_nodes.split(",")]
        if len(parts) not in (1, 2) or not all(parts):
            raise UsageError("--out-nodes expects n+[,n-]")
        output = tuple(parts) if len(parts) == 2 else (parts[0], mna.GROUND)
    pz = mna.pole_zero(ckt, args.source, output)
    lines = [f"pole{i}={_complex(p)}" for i, p in enumerate(pz.poles)]
    lines += [f"zero{i}={_complex(z)}" for i, z in enumerate(pz.zeros)]
    lines.append(f"gain={_complex(pz.gain)}")
    for z, p in pz.coincident:
        lines.append(f"coincident={_complex(z)},{_complex(p)}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_sweep_cl(args) -> int:
    design = load_deck(args.deck).design()
    rows = rsp.cl_sweep(design, _cl_list(args.cl), args.ppd)
    text = rsp.sweep_csv(rows)
    _emit(text, args.out)
    for r in rows:
        print(f"cl={r.cl:.4g} stab_margin={r.margin:.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_mc(args) -> int:
    deck = load_deck(args.deck)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    cfg = mc.McConfig(args.runs, args.seed, deck.pelgrom_params(), deck.design())
    result = mc.run_campaign(cfg)
    if args.out:
        write_atomic(args.out, result.to_csv())
    else:
        sys.stdout.write(result.to_csv())
    sys.stderr.write("# per-device sigma = A/sqrt(2WL): matched pairs differ by A/sqrt(WL)\n")
    sys.stderr.write(result.summary.to_text())
    return EXIT_OK


def cmd_ac(args) -> int:
    _, ckt = read_netlist(args.netlist)
    sol = mna.solve_ac(ckt, 2 * math.pi * args.freq)
    lines = [f"V({n})={_complex(sol.voltage(n))}" for n in ckt.nodes]
    if ckt.probe is not None:
        h = mna.transfer(ckt, omegas=[sol.omega])[0]
        lines.append(f"H={_complex(h)}")
        lines.append(f"H_dB={rsp.fmt(20 * np.log10(abs(h)))}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pcfamp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("report", help="closed-form design report")
    s.add_argument("--deck")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("bode", help="open-loop frequency response as CSV")
    s.add_argument("--deck")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--mna", action="store_true", help="solve the half circuit numerically")
    g.add_argument("--closed", action="store_true", help="closed-form transfer function (default)")
    s.add_argument("--fstart", type=_spice_number, default=1e3)
    s.add_argument("--fstop", type=_spice_number, default=1e9)
    s.add_argument("--ppd", type=int, default=20)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bode)

    s = sub.add_parser("pz", help="numeric poles and zeros of a netlist")
    s.add_argument("--netlist", required=True)
    s.add_argument("--in", dest="source")
    s.add_argument("--out-nodes")
    s.add_argument("--out")
    s.set_defaults(func=cmd_pz)

    s = sub.add_parser("sweep-cl", help="metrics versus load capacitance")
    s.add_argument("--deck")
    s.add_argument("--cl", required=True, help="comma list, e.g. 5p,10p,20p")
    s.add_argument("--ppd", type=int, default=100)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep_cl)

    s = sub.add_parser("mc", help="mismatch Monte Carlo")
    s.add_argument("--deck")
    s.add_argument("--runs", type=int, default=30)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_mc)

    s = sub.add_parser("ac", help="single-frequency solve of a netlist")
    s.add_argument("--netlist", required=True)
    s.add_argument("--freq", type=_spice_number, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_ac)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("missing subcommand")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DeckError, NetlistError, mna.CircuitError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, rsp.NoCrossingError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
