"""
Ground-truth pendulum plant, excitation signals and dataset recording.

The plant is the discretised pendulum

    x1+ = (1 - b Ts/J) x1 + (Ts/J) u - (M L g Ts / 2J) sin(x2) + d
    x2+ = Ts x1 + x2
    y   = x2

with x1 the angular velocity, x2 the angle and J = M L^2 / 3.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PendulumParams:
    """Physical constants of the pendulum.

    ``J`` is always derived from ``M`` and ``L``; passing it is not allowed.
    """

    M: float = 1.0
    L: float = 1.0
    b: float = 0.1
    g: float = 9.81
    Ts: float = 1.0 / 30.0
    J: float = field(init=False)

    def __post_init__(self):
        if self.M <= 0 or self.L <= 0:
            raise ValueError("M and L must be positive")
        if self.Ts <= 0:
            raise ValueError("Ts must be positive")
        if self.b < 0:
            raise ValueError("friction coefficient must be non-negative")
        object.__setattr__(self, "J", self.M * self.L**2 / 3.0)

    @property
    def gravity_gain(self) -> float:
        """Coefficient M L g Ts / (2 J) multiplying sin(x2)."""
        return self.M * self.L * self.g * self.Ts / (2.0 * self.J)

    @property
    def input_gain(self) -> float:
        return self.Ts / self.J

    def equilibrium(self, y_r: float) -> tuple[np.ndarray, float]:
        """Steady state ``x_r = (0, y_r)`` and holding torque ``u_r = (M g L / 2) sin(y_r)``."""
        x_r = np.array([0.0, y_r])
        u_r = 0.5 * self.M * self.g * self.L * np.sin(y_r)
        return x_r, float(u_r)


@dataclass(frozen=True)
class DisturbanceProfile:
    """Piecewise-constant additive disturbance, given as ``(start_step, value)`` segments."""

    segments: tuple[tuple[int, float], ...] = ((0, 0.0),)

    def __post_init__(self):
        segs = tuple((int(k), float(v)) for k, v in self.segments)
        if not segs or segs[0][0] != 0:
            raise ValueError("first disturbance segment must start at step 0")
        starts = [k for k, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("disturbance segment starts must be strictly increasing")
        object.__setattr__(self, "segments", segs)

    def value(self, k: int) -> float:
        val = self.segments[0][1]
        for start, v in self.segments:
            if k < start:
                break
            val = v
        return val

    def sample(self, length: int) -> np.ndarray:
        return np.array([self.value(k) for k in range(length)], dtype=float)


ZERO_DISTURBANCE = DisturbanceProfile()

# Default carrier: ten levels held 200 samples each. The hanging
# equilibrium of the discretised plant is weakly unstable (|eig| ~ 1.003), so
# small oscillations grow into a limit cycle; this level sequence keeps
# 2000-sample runs below |x2| ~ 2.1 for every dither seed tried.
DEFAULT_LEVELS = tuple(
    (200, v) for v in (-0.4, -1.0, 0.9, -0.4, 0.7, 0.8, 0.0, 0.5, -0.4, -0.2)
)


@dataclass(frozen=True)
class ExcitationConfig:
    """Piecewise-constant carrier plus multisine dither.

    Parameters
    ----------
    base_levels : sequence of (hold_steps, level)
        Carrier segments, cycled until the requested length is reached.
    amplitude : (lo, hi)
        Range that the dither is rescaled into.
    band : (f_lo, f_hi)
        Frequency band, normalised so that 1 is the Nyquist frequency.
    num_sines : int
        Number of sinusoids in the dither.
    seed : int
        Default seed for the random phases.
    """

    base_levels: tuple[tuple[int, float], ...] = DEFAULT_LEVELS
    amplitude: tuple[float, float] = (-0.2, 0.2)
    band: tuple[float, float] = (0.0, 1.0)
    num_sines: int = 25
    seed: int = 0

    def __post_init__(self):
        levels = tuple((int(h), float(v)) for h, v in self.base_levels)
        if not levels:
            raise ValueError("carrier needs at least one level")
        for hold, level in levels:
            if hold < 1:
                raise ValueError("hold_steps must be >= 1")
            if abs(level) > 1.0:
                raise ValueError(f"carrier level {level} outside [-1, 1]")
        object.__setattr__(self, "base_levels", levels)
        lo, hi = self.amplitude
        if lo > hi:
            raise ValueError("amplitude range must satisfy lo <= hi")
        f_lo, f_hi = self.band
        if not (0.0 <= f_lo < f_hi <= 1.0):
            raise ValueError(f"empty or invalid frequency band {self.band}")
        if self.num_sines < 1:
            raise ValueError("num_sines must be >= 1")


@dataclass(frozen=True)
class Dataset:
    """Recorded plant trajectory.

    ``x`` and ``y`` hold ``s + 1`` samples; ``u`` and ``d`` hold the ``s``
    inputs and disturbances that produced them, so that
    ``pendulum_step(x[k], u[k], d[k]) == (x[k+1], y[k])``.
    """

    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        x = x.reshape(len(x), -1)
        u = np.asarray(self.u, dtype=float)
        u = u.reshape(len(u), -1)
        y = np.asarray(self.y, dtype=float)
        y = y.reshape(len(y), -1)
        d = np.asarray(self.d, dtype=float).reshape(-1)
        s = len(u)
        if len(x) != s + 1 or len(y) != s + 1 or len(d) != s:
            raise ValueError(
                f"inconsistent lengths: x={len(x)}, y={len(y)}, u={len(u)}, d={len(d)}"
            )
        for name, arr in (("x", x), ("u", u), ("y", y), ("d", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def s(self) -> int:
        return len(self.u)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.x.shape[1], self.u.shape[1], self.y.shape[1]

    def to_csv(self, path) -> None:
        """Write ``k,x1,x2,u,y,d`` rows; the final row has empty ``u`` and ``d``."""
        n, m, p = self.dims
        if (n, m, p) != (2, 1, 1):
            raise ValueError("CSV layout is defined for the pendulum (n=2, m=1, p=1)")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "x1", "x2", "u", "y", "d"])
            for k in range(self.s + 1):
                last = k == self.s
                w.writerow([
                    k,
                    _fmt(self.x[k, 0]),
                    _fmt(self.x[k, 1]),
                    "" if last else _fmt(self.u[k, 0]),
                    _fmt(self.y[k, 0]),
                    "" if last else _fmt(self.d[k]),
                ])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no data rows")
        x = [[float(r["x1"]), float(r["x2"])] for r in rows]
        y = [float(r["y"]) for r in rows]
        u = [float(r["u"]) for r in rows[:-1]]
        d = [float(r["d"]) for r in rows[:-1]]
        return cls(x=np.array(x), u=np.array(u), y=np.array(y), d=np.array(d))


def _fmt(v: float) -> str:
    return repr(float(v))


def pendulum_step(params: PendulumParams, x, u, d=0.0):
    """Advance the plant by one sample.

    Returns
    -------
    x_next : ndarray, shape (2,)
    y : float
        Output of the *current* state, ``y = x[1]``.
    """
    x1, x2 = float(x[0]), float(x[1])
    u = float(np.asarray(u).reshape(-1)[0])
    x1_next = (
        (1.0 - params.b * params.Ts / params.J) * x1
        + params.input_gain * u
        - params.gravity_gain * np.sin(x2)
        + float(d)
    )
    x2_next = params.Ts * x1 + x2
    return np.array([x1_next, x2_next]), x2


def output(x) -> float:
    return float(x[1])


def multisine(config: ExcitationConfig, length: int, seed: int) -> np.ndarray:
    """Sum of ``num_sines`` equally spaced sinusoids with seeded random phases,
    rescaled so that its minimum and maximum hit ``config.amplitude``."""
    lo, hi = config.amplitude
    if lo == hi:
        return np.full(length, float(lo))
    f_lo, f_hi = config.band
    # cell midpoints of an even split of the band; DC and Nyquist carry no excitation
    freqs = f_lo + (f_hi - f_lo) * (np.arange(config.num_sines) + 0.5) / config.num_sines
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=config.num_sines)
    k = np.arange(length)[:, None]
    raw = np.sin(np.pi * freqs[None, :] * k + phases[None, :]).sum(axis=1)
    span = raw.max() - raw.min()
    if span == 0.0:
        return np.full(length, 0.5 * (lo + hi))
    return lo + (raw - raw.min()) * (hi - lo) / span


def carrier(config: ExcitationConfig, length: int) -> np.ndarray:
    out = np.empty(length)
    k = 0
    while k < length:
        for hold, level in config.base_levels:
            end = min(k + hold, length)
            out[k:end] = level
            k = end
            if k >= length:
                break
    return out


def generate_excitation(config: ExcitationConfig, length: int, seed: int | None = None) -> np.ndarray:
    """Identification input: carrier plus multisine dither, deterministic in ``seed``."""
    if length < 1:
        raise ValueError("length must be >= 1")
    seed = config.seed if seed is None else seed
    return carrier(config, length) + multisine(config, length, seed)


def collect_dataset(
    params: PendulumParams,
    inputs,
    x0=(0.0, 0.0),
    disturbance: DisturbanceProfile = ZERO_DISTURBANCE,
) -> Dataset:
    """Simulate the plant under ``inputs`` and record the trajectory."""
    u = np.asarray(inputs, dtype=float).reshape(-1)
    if u.size == 0:
        raise ValueError("inputs must be nonempty")
    s = len(u)
    d = disturbance.sample(s)
    x = np.empty((s + 1, 2))
    y = np.empty(s + 1)
    x[0] = x0
    for k in range(s):
        x[k + 1], y[k] = pendulum_step(params, x[k], u[k], d[k])
    y[s] = output(x[s])
    return Dataset(x=x, u=u, y=y, d=d)
