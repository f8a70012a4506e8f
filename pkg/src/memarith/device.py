"""
Behavioral linear-drift memristor.

The film of thickness D is split into a doped (low resistance) and an
undoped (high resistance) region.  The state is kept as the normalized
doped fraction x = w/D, and the memristance is the series combination

    M(x) = R_off - x * (R_off - R_on)

Under a terminal current i the boundary moves with

    dx/dt = polarity * k_mob * i * f(x),    k_mob = mu_v * R_on / D**2

Positive current increases x, hence decreases M.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HARD = "hard"
JOGLEKAR = "joglekar"


@dataclass(frozen=True)
class Window:
    """Drift window: ``hard`` (unit factor, clamped state) or ``joglekar`` with exponent p."""

    kind: str = HARD
    p: int = 1

    def __post_init__(self):
        if self.kind not in (HARD, JOGLEKAR):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.kind == JOGLEKAR and (int(self.p) != self.p or self.p < 1):
            raise ValueError(f"Joglekar exponent must be a positive integer, got {self.p!r}")

    @classmethod
    def joglekar(cls, p: int = 1) -> "Window":
        return cls(JOGLEKAR, p)


@dataclass(frozen=True)
class DeviceParams:
    """Physical constants of one memristor (SI units).

    Defaults are the HP TiO2 device values: 100 Ohm / 16 kOhm, 10 nm film,
    mu_v = 1e-14 m^2/(s V), which gives k_mob = 1e4 per coulomb.
    """

    r_on: float = 100.0
    r_off: float = 16e3
    d: float = 10e-9
    mu_v: float = 1e-14
    window: Window = field(default_factory=Window)
    polarity: int = 1

    def __post_init__(self):
        if not 0 < self.r_on < self.r_off:
            raise ValueError(f"need 0 < r_on < r_off, got r_on={self.r_on}, r_off={self.r_off}")
        if not (self.d > 0 and self.mu_v > 0):
            raise ValueError("d and mu_v must be positive")
        if self.polarity not in (1, -1):
            raise ValueError(f"polarity must be +1 or -1, got {self.polarity!r}")
        try:
            k = self.k_mob
        except (ZeroDivisionError, OverflowError):
            k = math.inf
        if not (math.isfinite(k) and k > 0):
            raise ValueError(f"rate constant k_mob={k} is not finite and positive")

    @property
    def k_mob(self) -> float:
        """Drift rate constant mu_v * R_on / D**2, in 1/(A s)."""
        return self.mu_v * self.r_on / self.d**2

    @property
    def span(self) -> float:
        return self.r_off - self.r_on


@dataclass(frozen=True)
class DeviceState:
    x: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.x <= 1.0:
            raise ValueError(f"doped fraction must lie in [0, 1], got {self.x!r}")


def memristance(params: DeviceParams, state: DeviceState) -> float:
    return params.r_off - state.x * (params.r_off - params.r_on)


def state_for(params: DeviceParams, m: float) -> DeviceState:
    """Inverse of :func:`memristance`; ``m`` must lie in [r_on, r_off]."""
    if not params.r_on <= m <= params.r_off:
        raise ValueError(f"memristance {m} outside [{params.r_on}, {params.r_off}]")
    return DeviceState(min(1.0, max(0.0, (params.r_off - m) / (params.r_off - params.r_on))))


def window_factor(kind: Window, x: float, drive_sign: int = 1) -> float:
    # drive_sign is accepted for windows that depend on the drive direction;
    # neither of the two implemented ones does.
    if kind.kind == HARD:
        return 1.0
    return 1.0 - (2.0 * x - 1.0) ** (2 * kind.p)


def drift_rate(params: DeviceParams, state: DeviceState, i: float) -> float:
    """dx/dt in 1/s for terminal current ``i`` (A)."""
    if i == 0.0:
        return 0.0
    w = window_factor(params.window, state.x, 1 if i > 0 else -1)
    return params.polarity * params.k_mob * i * w


def _clamp(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def step(params: DeviceParams, state: DeviceState, i: float, dt: float) -> DeviceState:
    """One forward-Euler update of the state, clamped to [0, 1]."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    rate = drift_rate(params, state, i)
    if rate == 0.0:
        return state
    return DeviceState(_clamp(state.x + rate * dt))


def charge_oracle(params: DeviceParams, x0: float, q: float) -> float:
    """Closed-form state after passing charge ``q`` (C), hard window only.

    The hard-window drift does not depend on x, so the state depends on the
    transferred charge alone (until a boundary is hit).
    """
    if params.window.kind != HARD:
        raise ValueError("charge_oracle has a closed form only for the hard window")
    return _clamp(x0 + params.polarity * params.k_mob * q)


@dataclass
class SweepTrace:
    t: np.ndarray
    x: np.ndarray
    m: np.ndarray
    i: np.ndarray

    def __len__(self):
        return len(self.t)


def sweep(params: DeviceParams, initial: DeviceState, current: float, dt: float, n_steps: int) -> SweepTrace:
    """Constant-current trajectory; row k is the state at t = k*dt (n_steps + 1 rows)."""
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    xs = np.empty(n_steps + 1)
    state = initial
    xs[0] = state.x
    for k in range(1, n_steps + 1):
        state = step(params, state, current, dt)
        xs[k] = state.x
    t = np.arange(n_steps + 1) * dt
    m = params.r_off - xs * (params.r_off - params.r_on)
    return SweepTrace(t, xs, m, np.full(n_steps + 1, float(current)))


# --- parameter files -------------------------------------------------------

DEVICE_KEYS = ("r_on", "r_off", "d", "mu_v", "window", "p", "polarity")


def read_kv_file(path) -> dict[str, str]:
    """Parse flat ``key = value`` text (``key: value`` and ``key value`` also accepted).

    Blank lines and ``#`` comments are skipped.
    """
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":", None):
            parts = line.split(sep, 1)
            if len(parts) == 2:
                break
        else:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = parts[0].strip().lower(), parts[1].strip()
        if not key or not value:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        out[key] = value
    return out


def params_from_mapping(values: dict) -> DeviceParams:
    kwargs = {}
    for key in ("r_on", "r_off", "d", "mu_v"):
        if key in values:
            kwargs[key] = float(values[key])
    if "polarity" in values:
        pol = float(values["polarity"])
        if pol not in (1.0, -1.0):
            raise ValueError(f"polarity must be +1 or -1, got {values['polarity']!r}")
        kwargs["polarity"] = int(pol)
    kind = str(values.get("window", HARD)).strip().lower()
    p = values.get("p", 1)
    p_float = float(p)
    if p_float != int(p_float):
        raise ValueError(f"window exponent p must be an integer, got {p!r}")
    kwargs["window"] = Window(kind, int(p_float))
    return DeviceParams(**kwargs)


def load_params(path) -> DeviceParams:
    values = read_kv_file(path)
    unknown = set(values) - set(DEVICE_KEYS)
    if unknown:
        raise ValueError(f"{path}: unknown device keys {sorted(unknown)}")
    return params_from_mapping(values)
