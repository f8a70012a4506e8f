"""
Read-out circuits that compute on memristances.

    add  - two memristors in series, driven by a read current
    sub  - m1 in series with a negative impedance converter loaded by m2
    div  - inverting amplifier, m1 input element, m2 feedback element
    mul  - two cascaded inverting stages with m1, m2 in the feedback paths

In frozen mode the memristors are plain resistors.  :func:`physical_read`
integrates each device over the pulse to account for read disturb.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .device import DeviceParams, DeviceState, memristance, state_for, step

BLOCKS = ("add", "sub", "div", "mul")
CURRENT_BLOCKS = ("add", "sub")

DEFAULT_READ_CURRENT = 1e-3
DEFAULT_READ_VOLTAGE = {"div": -1.0, "mul": 1.0}
DEFAULT_WIDTH = 1e-6
DEFAULT_R = 1e3


class Mode(str, Enum):
    FROZEN = "frozen"
    PHYSICAL = "physical"


@dataclass(frozen=True)
class ReadPulse:
    """Square read excitation: volts for div/mul, amperes for add/sub."""

    amplitude: float
    width: float = DEFAULT_WIDTH
    mode: Mode = Mode.FROZEN

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"pulse width must be positive, got {self.width}")
        if self.amplitude == 0 or not math.isfinite(self.amplitude):
            raise ValueError(f"pulse amplitude must be finite and nonzero, got {self.amplitude}")
        object.__setattr__(self, "mode", Mode(self.mode))


def default_pulse(block: str, mode: Mode = Mode.FROZEN) -> ReadPulse:
    amp = DEFAULT_READ_CURRENT if block in CURRENT_BLOCKS else DEFAULT_READ_VOLTAGE[block]
    return ReadPulse(amp, DEFAULT_WIDTH, mode)


@dataclass(frozen=True)
class OpampModel:
    """Open-loop gain (``math.inf`` for ideal) and output rails (None = unbounded)."""

    gain: float = math.inf
    rails: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError("opamp gain must be positive")
        if self.rails is not None and not self.rails[0] < self.rails[1]:
            raise ValueError("opamp rails must satisfy v_low < v_high")

    @property
    def ideal(self) -> bool:
        return math.isinf(self.gain) and self.rails is None

    def inverting(self, r_in: float, r_f: float, v_in: float) -> float:
        """Output of an inverting stage with input element r_in and feedback r_f."""
        v = -(r_f / r_in) * v_in
        if not math.isinf(self.gain):
            v /= 1.0 + (1.0 + r_f / r_in) / self.gain
        if self.rails is not None:
            v = min(max(v, self.rails[0]), self.rails[1])
        return v


IDEAL = OpampModel()


@dataclass(frozen=True)
class BlockResult:
    block: str
    m1: float
    m2: float
    excitation: float
    v_out: float
    numeric_value: float
    disturb: tuple[float, float] = (0.0, 0.0)
    states: tuple[DeviceState, DeviceState] | None = field(default=None, compare=False)

    CSV_HEADER = "block,m1,m2,excitation,v_out,numeric,dM1,dM2"

    def csv_row(self) -> str:
        vals = (self.m1, self.m2, self.excitation, self.v_out, self.numeric_value, *self.disturb)
        return ",".join([self.block, *(repr(float(v)) for v in vals)])


def _check_pulse(pulse: ReadPulse, block: str):
    if pulse.mode is not Mode.FROZEN:
        raise ValueError(f"{block}_read evaluates frozen memristances; use physical_read")


def adder_read(m1: float, m2: float, pulse: ReadPulse) -> BlockResult:
    _check_pulse(pulse, "adder")
    total = m1 + m2
    return BlockResult("add", m1, m2, pulse.amplitude, pulse.amplitude * total, total)


def nic_impedance(r1: float, r2: float, m: float) -> float:
    """Input impedance of a negative impedance converter loaded by ``m``."""
    if not (r1 > 0 and r2 > 0):
        raise ValueError("NIC resistors must be positive")
    if r1 == r2:
        return -m
    return -(r1 / r2) * m


def subtractor_read(m1: float, m2: float, pulse: ReadPulse, r1: float = DEFAULT_R,
                    r2: float = DEFAULT_R) -> BlockResult:
    _check_pulse(pulse, "subtractor")
    total = m1 + nic_impedance(r1, r2, m2)
    return BlockResult("sub", m1, m2, pulse.amplitude, pulse.amplitude * total, total)


def divider_read(m1: float, m2: float, pulse: ReadPulse, opamp: OpampModel = IDEAL) -> BlockResult:
    """v_out = -(m2/m1) V_i; the ratio m2/m1 is reported as the numeric value."""
    _check_pulse(pulse, "divider")
    if not m1 > 0:
        raise ValueError("divider input memristance must be positive")
    v_i = pulse.amplitude
    if opamp.ideal:
        ratio = m2 / m1
        return BlockResult("div", m1, m2, v_i, -ratio * v_i, ratio)
    v_out = opamp.inverting(m1, m2, v_i)
    return BlockResult("div", m1, m2, v_i, v_out, -v_out / v_i)


def multiplier_read(m1: float, m2: float, pulse: ReadPulse, ra: float = DEFAULT_R,
                    rb: float = DEFAULT_R, opamp: OpampModel = IDEAL) -> BlockResult:
    """Cascade v1 = -(m1/ra) V_i, v_out = -(m2/rb) v1 = m1 m2 V_i / (ra rb).

    The numeric value is the product m1*m2 in Ohm^2.
    """
    _check_pulse(pulse, "multiplier")
    if not (ra > 0 and rb > 0):
        raise ValueError("multiplier input resistors must be positive")
    v_i = pulse.amplitude
    if opamp.ideal:
        prod = m1 * m2
        return BlockResult("mul", m1, m2, v_i, prod / (ra * rb) * v_i, prod)
    v1 = opamp.inverting(ra, m1, v_i)
    v_out = opamp.inverting(rb, m2, v1)
    return BlockResult("mul", m1, m2, v_i, v_out, v_out * (ra * rb) / v_i)


_BLOCK_KWARGS = {"add": (), "sub": ("r1", "r2"), "div": ("opamp",), "mul": ("ra", "rb", "opamp")}


def _kwargs_for(block: str, config: dict) -> dict:
    if block not in _BLOCK_KWARGS:
        raise ValueError(f"unknown block {block!r}; expected one of {BLOCKS}")
    return {k: v for k, v in config.items() if k in _BLOCK_KWARGS[block]}


def frozen_read(block: str, m1: float, m2: float, pulse: ReadPulse | None = None, **config) -> BlockResult:
    """Dispatch to the named block; configuration keys other blocks use are ignored."""
    config = _kwargs_for(block, config)
    pulse = pulse or default_pulse(block)
    if block == "add":
        return adder_read(m1, m2, pulse)
    if block == "sub":
        return subtractor_read(m1, m2, pulse, **config)
    if block == "div":
        return divider_read(m1, m2, pulse, **config)
    if block == "mul":
        return multiplier_read(m1, m2, pulse, **config)
    raise ValueError(f"unknown block {block!r}; expected one of {BLOCKS}")


def branch_currents(block: str, m1: float, m2: float, amplitude: float, r1: float = DEFAULT_R,
                    r2: float = DEFAULT_R, ra: float = DEFAULT_R, rb: float = DEFAULT_R) -> tuple[float, float]:
    """Currents through (m1, m2) under the ideal-opamp solution, in each block's
    reference direction (input side to output side)."""
    if block == "add":
        return amplitude, amplitude
    if block == "sub":
        # The NIC holds its load at the input node voltage, so the load current
        # is -(r1/r2) times the input current.
        return amplitude, -(r1 / r2) * amplitude
    if block == "div":
        i = amplitude / m1
        return i, i
    if block == "mul":
        v1 = -(m1 / ra) * amplitude
        return amplitude / ra, v1 / rb
    raise ValueError(f"unknown block {block!r}; expected one of {BLOCKS}")


def _reference_signs(block: str) -> tuple[int, int]:
    """Sign of each branch current under the block's default read polarity."""
    i1, i2 = branch_currents(block, 1.0, 1.0, default_pulse(block).amplitude)
    return (1 if i1 > 0 else -1), (1 if i2 > 0 else -1)


def physical_read(block: str, states: tuple[DeviceState, DeviceState],
                  params: tuple[DeviceParams, DeviceParams] | DeviceParams, pulse: ReadPulse,
                  orientation: tuple[int, int] = (1, 1), n_sub: int = 100,
                  **config) -> BlockResult:
    """Read-out with the memristors evolving during the pulse.

    Orientation +1 means the device is connected so that the default read
    polarity of the block raises its doped fraction.  Branch currents are
    recomputed from the present memristances at each of ``n_sub`` sub-steps.
    The reported output is sampled at the trailing edge of the pulse.
    """
    if isinstance(params, DeviceParams):
        params = (params, params)
    for o in orientation:
        if o not in (1, -1):
            raise ValueError("orientation entries must be +1 or -1")
    circuit = {k: v for k, v in config.items() if k in ("r1", "r2", "ra", "rb")}
    ref = _reference_signs(block)
    dt = pulse.width / n_sub
    s1, s2 = states
    before = (memristance(params[0], s1), memristance(params[1], s2))
    for _ in range(n_sub):
        m1, m2 = memristance(params[0], s1), memristance(params[1], s2)
        i1, i2 = branch_currents(block, m1, m2, pulse.amplitude, **circuit)
        s1 = step(params[0], s1, orientation[0] * ref[0] * i1, dt)
        s2 = step(params[1], s2, orientation[1] * ref[1] * i2, dt)
    after = (memristance(params[0], s1), memristance(params[1], s2))
    frozen_pulse = ReadPulse(pulse.amplitude, pulse.width, Mode.FROZEN)
    out = frozen_read(block, after[0], after[1], frozen_pulse, **config)
    return BlockResult(block, before[0], before[1], pulse.amplitude, out.v_out, out.numeric_value,
                       (after[0] - before[0], after[1] - before[1]), (s1, s2))


def read(block: str, m1: float, m2: float, pulse: ReadPulse, params: DeviceParams | None = None,
         **config) -> BlockResult:
    """Evaluate ``block`` on two memristances in the pulse's mode.

    Physical mode needs ``params`` to rebuild the device states.
    """
    if pulse.mode is Mode.FROZEN:
        return frozen_read(block, m1, m2, pulse, **config)
    if params is None:
        params = DeviceParams()
    states = (state_for(params, m1), state_for(params, m2))
    return physical_read(block, states, params, pulse, **config)
