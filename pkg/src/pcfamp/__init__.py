"""Small-signal workbench for a two-stage amplifier with positive capacitive
feedback compensation: closed-form design equations, an MNA oracle,
frequency-response metrics and mismatch Monte Carlo."""
from .amplifier import (AmpDesign, ClosedFormTf, LatchUpError, build_half_circuit,
                        closed_form_tf, cm_gain, cmrr, dc_gain_dm, poles_closed_form,
                        psrr_plus, stability_check)
from .deck import default_design, load_deck
from .devices import MismatchDelta, MosSmallSignal, PelgromParams
from .mna import Circuit, poles_numeric, solve_ac, transfer, zeros_numeric
from .response import bode, cl_sweep, gbw, phase_margin

__version__ = "0.1.0"
