"""
Closed-loop programming of a memristor to an analog target.

A current of magnitude ``a`` amperes is forced through the device, so the
voltage across it is a*M.  A comparator holds this drop against a*V_in:

* a*M < a*V_in  -> comparator at the low rail (0 V)  -> source that raises M
* a*M >= a*V_in -> comparator at the high rail (5 V) -> source that lowers M

The same current both senses and programs.  The loop stops (drive
disconnected) once |M - target| <= tol.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .device import HARD, DeviceParams, DeviceState, memristance, step


class ProgrammingError(Exception):
    pass


class TargetOutOfRange(ProgrammingError):
    pass


class ProgrammingTimeout(ProgrammingError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class ProgrammerConfig:
    """Settings of the feedback loop.

    ``dt`` and ``max_time`` left as None are filled in by :meth:`resolved`:
    dt from :func:`choose_dt`, max_time as twice the full-swing slew time.
    """

    a: float = 0.01
    rails: tuple[float, float] = (0.0, 5.0)
    tol: float = 0.1
    dt: float | None = None
    max_time: float | None = None

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.max_time is not None and not self.max_time > 0:
            raise ValueError(f"max_time must be positive, got {self.max_time}")
        if not self.rails[0] < self.rails[1]:
            raise ValueError(f"rails must be (low, high) with low < high, got {self.rails}")

    def resolved(self, params: DeviceParams) -> "ProgrammerConfig":
        dt = self.dt if self.dt is not None else choose_dt(self.a, params, self.tol)
        max_time = self.max_time if self.max_time is not None else 2.0 / (params.k_mob * self.a)
        cfg = replace(self, dt=dt, max_time=max_time)
        per_step = step_change(cfg.a, params, dt)
        if per_step > cfg.tol:
            raise ValueError(
                f"per-step memristance change {per_step:.4g} Ohm exceeds tol={cfg.tol} Ohm; "
                "the loop would limit-cycle (reduce dt or a)"
            )
        return cfg


def slew_rate(a: float, params: DeviceParams) -> float:
    """|dM/dt| in Ohm/s under drive current a (hard window)."""
    return params.span * params.k_mob * a


def step_change(a: float, params: DeviceParams, dt: float) -> float:
    return params.span * params.k_mob * a * dt


def choose_dt(a: float, params: DeviceParams, tol: float) -> float:
    """Largest dt whose per-step memristance change is at most tol/2."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    dt = (tol / 2) / slew_rate(a, params)
    while step_change(a, params, dt) > tol / 2:
        dt = math.nextafter(dt, 0.0)
    return dt


def comparator(sense: float, reference: float, rails=(0.0, 5.0)) -> float:
    return rails[0] if sense < reference else rails[1]


@dataclass(frozen=True)
class TraceSample:
    t: float
    m: float
    v_drop: float
    comparator: float
    drive_sign: int


@dataclass
class ProgramTrace:
    """Samples of one programming run, stored column-wise.

    Sample k is the device before the k-th control step; the last sample is
    the one where the loop stopped.
    """

    t: np.ndarray
    m: np.ndarray
    v_drop: np.ndarray
    comparator: np.ndarray
    drive_sign: np.ndarray
    converged: bool
    final_m: float
    final_state: DeviceState
    target: float

    def __len__(self):
        return len(self.t)

    def sample(self, k: int) -> TraceSample:
        return TraceSample(float(self.t[k]), float(self.m[k]), float(self.v_drop[k]),
                           float(self.comparator[k]), int(self.drive_sign[k]))

    @property
    def convergence_time(self) -> float:
        return float(self.t[-1]) if self.converged else math.inf


def _drive(cfg: ProgrammerConfig, params: DeviceParams, m: float, target: float):
    """Comparator output, M-direction (+1 raises M) and device current."""
    rail = comparator(cfg.a * m, cfg.a * target, cfg.rails)
    drive_sign = 1 if rail == cfg.rails[0] else -1
    # Positive current raises x and lowers M (times the device polarity).
    return rail, drive_sign, -drive_sign * params.polarity * cfg.a


def programmer_step(cfg: ProgrammerConfig, params: DeviceParams, state: DeviceState,
                    target: float, t: float = 0.0) -> tuple[DeviceState, TraceSample]:
    """One control period: sample, compare, drive for dt.  Returns the new state and
    the sample taken before driving."""
    if cfg.dt is None:
        cfg = cfg.resolved(params)
    m = memristance(params, state)
    rail, drive_sign, current = _drive(cfg, params, m, target)
    new_state = step(params, state, current, cfg.dt)
    return new_state, TraceSample(t, m, cfg.a * m, rail, drive_sign)


@njit(cache=True)
def _program_kernel(x0, target, r_on, r_off, k_mob, polarity, joglekar_p, a, lo, hi, tol, dt, n_max,
                    t_out, m_out, v_out, c_out, s_out):
    # Mirrors device.step / programmer_step operation by operation so results
    # are bit-identical to the reference loop for the hard window.
    x = x0
    span = r_off - r_on
    for k in range(n_max):
        m = r_off - x * span
        rail = lo if a * m < a * target else hi
        sign = 1 if rail == lo else -1
        t_out[k] = k * dt
        m_out[k] = m
        v_out[k] = a * m
        c_out[k] = rail
        s_out[k] = sign
        if abs(m - target) <= tol:
            return k + 1, x, True
        i = -sign * polarity * a
        if joglekar_p > 0:
            w = 1.0 - (2.0 * x - 1.0) ** (2 * joglekar_p)
        else:
            w = 1.0
        rate = polarity * k_mob * i * w
        if rate != 0.0:
            x = x + rate * dt
            if x < 0.0:
                x = 0.0
            elif x > 1.0:
                x = 1.0
    return n_max, x, False


def program(cfg: ProgrammerConfig, params: DeviceParams, initial: DeviceState, target: float,
            raise_on_timeout: bool = True) -> ProgramTrace:
    """Drive ``initial`` until its memristance is within cfg.tol of ``target`` (Ohm)."""
    cfg = cfg.resolved(params)
    lo_ok, hi_ok = params.r_on + cfg.tol, params.r_off - cfg.tol
    if not lo_ok <= target <= hi_ok:
        raise TargetOutOfRange(
            f"target {target} Ohm is not representable; need [{lo_ok}, {hi_ok}] Ohm")
    n_max = int(math.floor(cfg.max_time / cfg.dt)) + 2
    t = np.empty(n_max)
    m = np.empty(n_max)
    v = np.empty(n_max)
    c = np.empty(n_max)
    s = np.empty(n_max, dtype=np.int8)
    jp = params.window.p if params.window.kind != HARD else 0
    n, x, converged = _program_kernel(
        float(initial.x), float(target), params.r_on, params.r_off, params.k_mob, params.polarity,
        jp, cfg.a, float(cfg.rails[0]), float(cfg.rails[1]), cfg.tol, cfg.dt, n_max, t, m, v, c, s)
    trace = ProgramTrace(t[:n].copy(), m[:n].copy(), v[:n].copy(), c[:n].copy(), s[:n].copy(),
                         bool(converged), memristance(params, DeviceState(float(x))),
                         DeviceState(float(x)), float(target))
    if not converged and raise_on_timeout:
        raise ProgrammingTimeout(
            f"no convergence to {target} Ohm within {cfg.max_time} s "
            f"(last M = {trace.final_m} Ohm)", trace)
    return trace


def program_reference(cfg: ProgrammerConfig, params: DeviceParams, initial: DeviceState,
                      target: float) -> ProgramTrace:
    """Pure-Python loop over :func:`programmer_step`; slow, kept as a cross-check."""
    cfg = cfg.resolved(params)
    n_max = int(math.floor(cfg.max_time / cfg.dt)) + 2
    samples = []
    state = initial
    converged = False
    for k in range(n_max):
        m = memristance(params, state)
        if abs(m - target) <= cfg.tol:
            rail, sign, _ = _drive(cfg, params, m, target)
            samples.append(TraceSample(k * cfg.dt, m, cfg.a * m, rail, sign))
            converged = True
            break
        state, sample = programmer_step(cfg, params, state, target, k * cfg.dt)
        samples.append(sample)
    cols = list(zip(*[(s.t, s.m, s.v_drop, s.comparator, s.drive_sign) for s in samples]))
    return ProgramTrace(np.array(cols[0]), np.array(cols[1]), np.array(cols[2]), np.array(cols[3]),
                        np.array(cols[4], dtype=np.int8), converged, memristance(params, state), state,
                        target)
