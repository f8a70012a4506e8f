import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from memarith.blocks import (BlockResult, Mode, OpampModel, ReadPulse, adder_read, branch_currents,
                             default_pulse, divider_read, frozen_read, multiplier_read, nic_impedance,
                             physical_read, read, subtractor_read)
from memarith.device import DeviceParams, DeviceState, charge_oracle, memristance, state_for

P = DeviceParams()
GRID = np.linspace(200.0, 15000.0, 10)
ohms = st.floats(P.r_on, P.r_off)
I1 = ReadPulse(1e-3)
V1 = ReadPulse(-1.0)


def test_pulse_validation():
    with pytest.raises(ValueError):
        ReadPulse(0.0)
    with pytest.raises(ValueError):
        ReadPulse(1.0, width=0.0)
    assert ReadPulse(1.0, mode="physical").mode is Mode.PHYSICAL


def test_adder_examples():
    assert adder_read(520, 416, I1).numeric_value == 936
    assert adder_read(100, 100, I1).numeric_value == 200
    assert adder_read(8050, 8050, ReadPulse(10e-6)).v_out == pytest.approx(0.161, rel=1e-12)


def test_nic_examples():
    assert nic_impedance(1e3, 1e3, 416) == -416
    assert nic_impedance(1e3, 1e3, 0.0) == 0.0
    assert nic_impedance(2e3, 1e3, 500) == -1000
    with pytest.raises(ValueError):
        nic_impedance(0.0, 1e3, 10)


def test_subtractor_examples():
    assert subtractor_read(520, 416, I1).numeric_value == 104
    assert subtractor_read(416, 416, I1).numeric_value == 0
    assert subtractor_read(416, 520, I1).numeric_value == -104
    # unequal NIC resistors scale the subtrahend
    assert subtractor_read(1000, 250, I1, r1=2e3, r2=1e3).numeric_value == 500


def test_divider_examples():
    # 520 / 416: dividend on the feedback element
    assert divider_read(416, 520, V1).numeric_value == 1.25
    assert divider_read(416, 520, V1).v_out == 1.25
    assert divider_read(777, 777, V1).numeric_value == 1.0
    assert divider_read(520, 416, V1).numeric_value == pytest.approx(0.8, rel=1e-15)


def test_multiplier_examples():
    r = multiplier_read(520, 416, ReadPulse(1.0))
    assert r.v_out == pytest.approx(0.21632, rel=1e-12)
    assert r.numeric_value == 216320
    m2 = 3000.0
    unity = multiplier_read(P.r_on, m2, ReadPulse(1.0), ra=P.r_on, rb=m2)
    assert unity.v_out == pytest.approx(1.0, rel=1e-15)


def test_frozen_reads_reject_physical_pulse():
    with pytest.raises(ValueError):
        adder_read(100, 100, ReadPulse(1e-3, mode=Mode.PHYSICAL))


@given(m1=ohms, m2=ohms)
def test_frozen_transfer_functions_exact(m1, m2):
    assert adder_read(m1, m2, I1).numeric_value == m1 + m2
    assert subtractor_read(m1, m2, I1).numeric_value == m1 - m2
    assert divider_read(m1, m2, V1).numeric_value == m2 / m1
    assert multiplier_read(m1, m2, ReadPulse(1.0)).numeric_value == m1 * m2
    assert frozen_read("sub", m1, m2).numeric_value == m1 - m2


@given(a=ohms, b=ohms)
def test_subtractor_antisymmetry(a, b):
    assert subtractor_read(a, b, I1).numeric_value == -subtractor_read(b, a, I1).numeric_value


@given(m1=ohms, m2=ohms, i=st.floats(1e-6, 1e-2))
def test_read_current_invariance(m1, m2, i):
    p = ReadPulse(i)
    assert adder_read(m1, m2, p).numeric_value == adder_read(m1, m2, I1).numeric_value
    assert subtractor_read(m1, m2, p).numeric_value == subtractor_read(m1, m2, I1).numeric_value


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_divider_scale_invariance(c):
    for m1, m2 in itertools.product(GRID / 2 if c == 2 else GRID, repeat=2):
        assert divider_read(c * m1, c * m2, V1).v_out == divider_read(m1, m2, V1).v_out


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_multiplier_bilinear(c):
    for m1, m2 in itertools.product(GRID / 2 if c == 2 else GRID, repeat=2):
        base = multiplier_read(m1, m2, ReadPulse(1.0)).numeric_value
        assert multiplier_read(c * m1, m2, ReadPulse(1.0)).numeric_value == c * base


def test_multiplier_linear_in_input_voltage():
    assert multiplier_read(520, 416, ReadPulse(1.0)).v_out * 2 == multiplier_read(520, 416, ReadPulse(2.0)).v_out


def test_finite_gain_opamp():
    # closed-loop gain G/(1 + (1+G)/A) for an inverting stage with |G| = 1.25
    r = divider_read(416, 520, V1, opamp=OpampModel(gain=1e5))
    assert r.v_out == pytest.approx(1.25 / (1 + 2.25 / 1e5), rel=1e-12)
    assert r.numeric_value < 1.25
    assert divider_read(416, 520, V1, opamp=OpampModel(gain=1e12)).numeric_value == pytest.approx(1.25, rel=1e-10)


def test_opamp_rails_saturate():
    rails = OpampModel(rails=(-5.0, 5.0))
    assert divider_read(100, 15000, V1, opamp=rails).v_out == 5.0
    # first stage alone saturates: 15000/1000 * 1 V > 5 V
    assert multiplier_read(15000, 1000, ReadPulse(1.0), opamp=rails).v_out == 5.0
    # scaling the input down keeps it linear
    assert multiplier_read(15000, 1000, ReadPulse(0.1), opamp=rails).numeric_value == pytest.approx(15e6)


def test_branch_currents():
    assert branch_currents("div", 416, 520, -1.0) == (-1.0 / 416, -1.0 / 416)
    assert branch_currents("add", 1, 2, 1e-3) == (1e-3, 1e-3)
    assert branch_currents("sub", 1, 2, 1e-3) == (1e-3, -1e-3)
    i1, i2 = branch_currents("mul", 2000, 500, 1.0)
    assert (i1, i2) == (pytest.approx(1e-3), pytest.approx(-2e-3))


def _phys(block, m1, m2, pulse, **kw):
    return physical_read(block, (state_for(P, m1), state_for(P, m2)), P, pulse, **kw)


def test_physical_divider_disturb_matches_charge_oracle():
    for width, expected in [(1e-6, 0.38), (10e-6, 3.8)]:
        res = _phys("div", 416, 520, ReadPulse(-1.0, width, Mode.PHYSICAL))
        analytic = P.span * P.k_mob * (1.0 / 416) * width
        x0 = state_for(P, 416).x
        oracle = memristance(P, DeviceState(charge_oracle(P, x0, width / 416))) - 416
        assert abs(res.disturb[0]) == pytest.approx(expected, rel=0.02)  # rounded figures
        assert abs(res.disturb[0]) == pytest.approx(analytic, rel=0.05)
        # the current grows slightly as m1 drops during the pulse
        assert abs(res.disturb[0]) >= abs(oracle) * (1 - 1e-12)
        assert abs(res.disturb[0]) == pytest.approx(abs(oracle), rel=0.02)


def test_physical_disturb_shrinks_linearly_with_width():
    widths = [1e-9, 1e-8, 1e-7, 1e-6]
    d = [abs(_phys("div", 416, 520, ReadPulse(-1.0, w, Mode.PHYSICAL)).disturb[0]) for w in widths]
    ratios = np.array(d) / np.array(widths)
    assert np.allclose(ratios, ratios[0], rtol=1e-3)
    assert d[0] < 1e-3


def test_physical_orientation_default_raises_x():
    res = _phys("div", 416, 520, ReadPulse(-1.0, mode=Mode.PHYSICAL))
    assert res.disturb[0] < 0 and res.disturb[1] < 0
    rev = _phys("div", 416, 520, ReadPulse(-1.0, mode=Mode.PHYSICAL), orientation=(-1, 1))
    assert rev.disturb[0] > 0
    # opposite read polarity reverses the disturb
    pos = _phys("div", 416, 520, ReadPulse(1.0, mode=Mode.PHYSICAL))
    assert pos.disturb[0] > 0
    for block in ("add", "sub", "mul"):
        r = _phys(block, 2000, 3000, default_pulse(block, Mode.PHYSICAL))
        assert r.disturb[0] < 0 and r.disturb[1] < 0


def test_frozen_mode_has_zero_disturb():
    for block in ("add", "sub", "div", "mul"):
        assert frozen_read(block, 1000, 2000).disturb == (0.0, 0.0)


def test_physical_vs_frozen_bound_on_grid():
    pulse = ReadPulse(-1.0, 1e-6, Mode.PHYSICAL)
    for m1, m2 in itertools.product(GRID, repeat=2):
        phys = _phys("div", m1, m2, pulse)
        frozen = divider_read(m1, m2, V1).numeric_value
        bound = max(map(abs, phys.disturb)) / min(m1, m2)
        assert abs(phys.numeric_value - frozen) / abs(frozen) <= bound


def test_read_dispatch_and_csv():
    r = read("div", 416, 520, ReadPulse(-1.0, mode="physical"), P)
    assert r.block == "div" and r.states is not None
    row = frozen_read("div", 416.0, 520.0).csv_row()
    assert row == "div,416.0,520.0,-1.0,1.25,1.25,0.0,0.0"
    assert BlockResult.CSV_HEADER.split(",") == ["block", "m1", "m2", "excitation", "v_out", "numeric",
                                                 "dM1", "dM2"]
    with pytest.raises(ValueError):
        frozen_read("pow", 1, 2)
