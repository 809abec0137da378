import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcfamp import amplifier as amp
from pcfamp import response as rsp

CL_VALUES = [5e-12, 10e-12, 20e-12, 30e-12, 40e-12, 50e-12]


def single_pole(a0, fp):
    return lambda s: a0 / (1 + s / (2 * math.pi * fp))


def test_single_pole_corner():
    resp = rsp.bode(single_pole(1.0, 1e3), 1e2, 1e4, 10)
    mag, ph = resp.at(1e3)
    assert mag == pytest.approx(-10 * math.log10(2), abs=1e-9)
    assert ph == pytest.approx(-45.0, abs=1e-9)


def test_closed_form_below_corner(design):
    tf = amp.closed_form_tf(design)
    w = 2 * math.pi * 5e3
    expected = 20 * math.log10(tf.a0 * abs(1 + 1j * w / tf.z)
                               / abs(1 + 1j * w * tf.alpha - tf.beta * w * w))
    mag, _ = rsp.bode(tf, 1e3, 1e4, 50).at(5e3)
    assert mag == pytest.approx(expected, abs=0.01)
    assert mag == pytest.approx(82.98, abs=0.3)


def test_integrator_phase():
    resp = rsp.bode(lambda s: 1 / s, 1, 1e6, 20)
    np.testing.assert_allclose(resp.phase_deg, -90.0, atol=1e-9)


def test_gbw_single_pole():
    resp = rsp.bode(single_pole(1000.0, 1e3), 1, 1e9, 100)
    assert rsp.gbw(resp) == pytest.approx(1e6, rel=1e-3)
    assert rsp.phase_margin(resp) == pytest.approx(90.0, abs=0.1)


def test_no_crossing():
    resp = rsp.bode(lambda s: np.full_like(s, 10 ** 0.5), 1, 1e6, 10)
    with pytest.raises(rsp.NoCrossingError):
        rsp.gbw(resp)
    with pytest.raises(rsp.NoCrossingError):
        rsp.phase_margin(resp)


@pytest.mark.parametrize("k", [2.0, 10.0, 100.0])
def test_double_pole_margin(k):
    fp = 1e4
    resp = rsp.bode(lambda s: k / (1 + s / (2 * math.pi * fp)) ** 2, 1, 1e9, 400)
    fc = fp * math.sqrt(math.sqrt(k * k) - 1)
    assert rsp.gbw(resp) == pytest.approx(fc, rel=1e-4)
    assert rsp.phase_margin(resp) == pytest.approx(180 - 2 * math.degrees(math.atan(fc / fp)),
                                                   abs=0.01)


def test_default_deck_metrics(design):
    rep = rsp.design_report(design)
    assert rep.gbw == pytest.approx(88.9e6, rel=0.10)
    assert rep.pm == pytest.approx(68.7, abs=8)
    assert rep.dc_gain == pytest.approx(82.98, abs=0.01)
    assert rep.f_3db == pytest.approx(1 / (2 * math.pi * amp.closed_form_tf(design).alpha),
                                      rel=0.01)
    assert rep.stable


def test_closed_form_and_mna_metrics_agree(design):
    a = rsp.stability_report(rsp.bode(amp.closed_form_tf(design), *rsp.DEFAULT_RANGE, 100))
    b = rsp.stability_report(rsp.bode(amp.build_half_circuit(design), *rsp.DEFAULT_RANGE, 100))
    assert a.gbw == pytest.approx(b.gbw, rel=1e-3)
    assert a.pm == pytest.approx(b.pm, rel=1e-3)


def test_grid_refinement_converged(design):
    a = rsp.design_report(design, 100)
    b = rsp.design_report(design, 200)
    assert abs(a.gbw - b.gbw) / b.gbw < 1e-4
    assert abs(a.pm - b.pm) / b.pm < 1e-4


def test_phase_is_unwrapped():
    resp = rsp.bode(lambda s: 1 / (1 + s / 1e3) ** 4, 1, 1e8, 20)
    assert np.all(np.abs(np.diff(resp.phase_deg)) < 180)
    assert resp.phase_deg[-1] == pytest.approx(-360, abs=1)


def test_log_grid_endpoints():
    f = rsp.log_grid(1e3, 1e9, 20)
    assert f[0] == pytest.approx(1e3) and f[-1] == pytest.approx(1e9)
    assert len(f) == 121
    with pytest.raises(ValueError):
        rsp.log_grid(1e3, 1e2, 10)


def test_csv_header_and_rows():
    text = rsp.bode(single_pole(10.0, 1e3), 1, 1e6, 1).to_csv()
    lines = text.splitlines()
    assert lines[0] == "freq_hz,mag_db,phase_deg"
    assert len(lines) == 8
    assert lines[1].startswith("1,19.99999")


def test_cl_sweep(design):
    rows = rsp.cl_sweep(design, CL_VALUES)
    gbws = [r.report.gbw for r in rows]
    assert all(a > b for a, b in zip(gbws, gbws[1:]))
    assert rows[1].report.gbw == pytest.approx(53.8e6, rel=0.20)
    margins = [r.margin for r in rows]
    assert all(a < b for a, b in zip(margins, margins[1:]))
    for r in rows:
        assert r.report.stable and r.poles_lhp
        assert (r.margin > 0) <= r.poles_lhp


def test_cl_sweep_rejects_nonpositive(design):
    with pytest.raises(ValueError):
        rsp.cl_sweep(design, [0.0])


def test_sweep_csv(design):
    text = rsp.sweep_csv(rsp.cl_sweep(design, [5e-12]))
    header, row = text.splitlines()
    assert header == "cl_farad,gbw_hz,pm_deg,dc_gain_db,stable"
    assert row.startswith("0.000000000005,") and row.endswith(",1")


def test_ratio_of_identical_paths_is_flat():
    f = np.logspace(0, 8, 30)
    h = single_pole(3.0, 1e4)
    resp = rsp.ratio_response(h, h, f)
    np.testing.assert_allclose(resp.mag_db, 0.0, atol=1e-12)


def test_rejection_ratios(design):
    gbw = rsp.design_report(design).gbw
    f = np.array([5e3, gbw])
    cm, ps = rsp.cmrr_psrr_vs_freq(design, f)
    assert cm.mag_db[0] == pytest.approx(127, abs=3)
    assert ps.mag_db[0] == pytest.approx(83.2, abs=1)
    assert ps.mag_db[1] > 20


@settings(max_examples=50, deadline=None)
@given(a0=st.floats(10, 1e5), fp=st.floats(1, 1e6))
def test_single_pole_gbw_property(a0, fp):
    resp = rsp.bode(single_pole(a0, fp), fp / 100, fp * a0 * 100, 200)
    assert rsp.gbw(resp) == pytest.approx(fp * math.sqrt(a0 * a0 - 1), rel=1e-3)
