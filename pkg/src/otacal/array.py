"""Antennas, panels and scenes: the ground truth the simulator measures.

Hardware phase offsets follow the phasor convention: ``t`` is the value of an
antenna's transmit phasor and ``r`` the value of its receive phasor at the
instant the fictitious global phasor points to zero. Propagation delays are
kept unwrapped (real radians) so ambiguity-resolution tests can compare
against the exact delay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .phase import wrap_2pi

C_LIGHT = 299_792_458.0


class CalibrationState(str, Enum):
    UNCALIBRATED = "uncalibrated"
    R_CALIBRATED = "R-calibrated"
    F_CALIBRATED = "F-calibrated"


@dataclass(frozen=True)
class AntennaHardware:
    """Transmit/receive branch offsets of one antenna (or of a user)."""

    t: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "t", wrap_2pi(float(self.t)))
        object.__setattr__(self, "r", wrap_2pi(float(self.r)))

    @property
    def reciprocity(self) -> float:
        """``t + r`` wrapped; differences of this are what R-calibration knows."""
        return wrap_2pi(self.t + self.r)


def delay_radians(distance: float, frequency: float) -> float:
    """Unwrapped propagation phase lag over ``distance`` metres at ``frequency`` Hz."""
    if not distance >= 0:
        raise ValueError(f"distance must be non-negative, got {distance}")
    if not frequency > 0:
        raise ValueError(f"frequency must be positive, got {frequency}")
    return 2.0 * math.pi * frequency * distance / C_LIGHT


def scaled_delay(T: float, f: float, f_prime: float) -> float:
    """Delay at ``f_prime`` given the delay ``T`` at ``f``."""
    return (f_prime / f) * T


def wavelength(frequency: float) -> float:
    return C_LIGHT / frequency


def apply_oscillator_drift(antenna: AntennaHardware, phi: float) -> AntennaHardware:
    """An LO phase jump moves both branches the same way."""
    return AntennaHardware(t=antenna.t + phi, r=antenna.r + phi)


def apply_aging(delay: float, phi: float) -> float:
    """Lengthen (or shorten) an unwrapped delay by ``phi`` radians."""
    out = delay + phi
    if out < 0:
        raise ValueError(f"aging by {phi} makes delay {delay} negative")
    return out


@dataclass(frozen=True)
class Compensation:
    """Per-antenna phase corrections added to the hardware offsets.

    The effective offsets of antenna ``i`` become ``t_i + tx[i]`` and
    ``r_i + rx[i]``.
    """

    tx: tuple
    rx: tuple


@dataclass(frozen=True)
class Panel:
    antennas: tuple
    positions: np.ndarray
    calibration_state: CalibrationState = CalibrationState.UNCALIBRATED
    compensation: Compensation | None = None

    def __post_init__(self):
        object.__setattr__(self, "antennas", tuple(self.antennas))
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[-1] != 3:
            raise ValueError("positions must be 3-D coordinates")
        if len(self.antennas) < 1 or len(self.antennas) != len(pos):
            raise ValueError("a panel needs one position per antenna and at least one antenna")
        object.__setattr__(self, "positions", pos)
        if self.compensation is not None:
            if len(self.compensation.tx) != len(self) or len(self.compensation.rx) != len(self):
                raise ValueError("compensation size does not match panel")

    def __len__(self):
        return len(self.antennas)

    def effective_offsets(self) -> list[AntennaHardware]:
        if self.compensation is None:
            return list(self.antennas)
        return [
            AntennaHardware(t=a.t + dt, r=a.r + dr)
            for a, dt, dr in zip(self.antennas, self.compensation.tx, self.compensation.rx)
        ]


def apply_compensation(panel: Panel, calibration) -> Panel:
    """Compensate every chain of ``panel`` so that all effective ``t`` and ``r`` match.

    ``calibration`` is an :class:`otacal.calibrators.FCalibration` keyed by the
    antenna index within the panel. The resulting common constant equals the
    reference antenna's receive offset, which only the simulator knows.
    """
    n = len(panel)
    keys = set(calibration.r_diff)
    if keys != set(range(n)):
        raise ValueError(f"calibration covers {sorted(keys)}, panel has {n} antennas")
    # r_i -> r_i - (r_i - r_ref) = r_ref
    rx = tuple(wrap_2pi(-calibration.r_diff[i]) for i in range(n))
    # t_i -> t_i + (r_i - t_i) - (r_i - r_ref) = r_ref
    tx = tuple(wrap_2pi(calibration.rt_offset[i] - calibration.r_diff[i]) for i in range(n))
    return replace(
        panel,
        compensation=Compensation(tx=tx, rx=rx),
        calibration_state=CalibrationState.F_CALIBRATED,
    )


@dataclass(frozen=True)
class User:
    hardware: AntennaHardware
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))


@dataclass(frozen=True)
class Scene:
    """Panels plus an optional user, two probing frequencies and free-space geometry.

    Antennas are addressed by ``(panel_index, antenna_index)``; the user by
    the string ``"user"``. ``coupling`` overrides geometric delays for
    selected pairs (radians at ``f``), e.g. mutual coupling inside a
    co-located array.
    """

    panels: tuple
    f: float = 2e9
    f_prime: float = 2e9 - 50e6
    user: User | None = None
    coupling: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "panels", tuple(self.panels))
        if not 0 < self.f_prime < self.f:
            raise ValueError(f"need 0 < f' < f, got f={self.f}, f'={self.f_prime}")

    def antenna_ids(self) -> list:
        return [(p, i) for p, panel in enumerate(self.panels) for i in range(len(panel))]

    def hardware(self, aid) -> AntennaHardware:
        """Effective (post-compensation) offsets of an antenna or the user."""
        if aid == "user":
            if self.user is None:
                raise ValueError("scene has no user")
            return self.user.hardware
        p, i = aid
        return self.panels[p].effective_offsets()[i]

    def position(self, aid) -> np.ndarray:
        if aid == "user":
            if self.user is None:
                raise ValueError("scene has no user")
            return self.user.position
        p, i = aid
        return self.panels[p].positions[i]

    def delay(self, a, b, frequency: float | None = None) -> float:
        """Unwrapped delay between two elements at ``frequency`` (default ``f``)."""
        frequency = self.f if frequency is None else frequency
        key = _pair_key(a, b)
        if key in self.coupling:
            return self.coupling[key] * frequency / self.f
        dist = float(np.linalg.norm(self.position(a) - self.position(b)))
        return delay_radians(dist, frequency)

    def delay_table(self, ids=None) -> "DelayTable":
        ids = list(self.antenna_ids() if ids is None else ids)
        n = len(ids)
        T = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                T[i, j] = T[j, i] = self.delay(ids[i], ids[j])
        return DelayTable(ids=ids, T=T)

    def with_panel(self, index: int, panel: Panel) -> "Scene":
        panels = list(self.panels)
        panels[index] = panel
        return replace(self, panels=tuple(panels))


def _pair_key(a, b):
    return frozenset((a, b))


@dataclass(frozen=True)
class DelayTable:
    """Symmetric table of unwrapped delays (radians at ``f``) between listed antennas."""

    ids: list
    T: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        if T.shape != (len(self.ids), len(self.ids)):
            raise ValueError("delay table shape does not match ids")
        if not np.allclose(T, T.T, rtol=0, atol=1e-12):
            raise ValueError("delay table must be symmetric")
        object.__setattr__(self, "T", T)

    def __getitem__(self, pair):
        a, b = pair
        return float(self.T[self.ids.index(a), self.ids.index(b)])

    def aged(self, a, b, phi: float) -> "DelayTable":
        i, j = self.ids.index(a), self.ids.index(b)
        T = self.T.copy()
        T[i, j] = T[j, i] = apply_aging(T[i, j], phi)
        return DelayTable(ids=list(self.ids), T=T)


def random_panel(rng: np.random.Generator, n: int, origin=(0.0, 0.0, 0.0), spacing: float = 0.075) -> Panel:
    """Linear panel of ``n`` antennas with uniformly random hardware offsets."""
    origin = np.asarray(origin, dtype=float)
    positions = origin + np.outer(np.arange(n) * spacing, [1.0, 0.0, 0.0])
    antennas = [AntennaHardware(t=t, r=r) for t, r in rng.uniform(0, 2 * np.pi, size=(n, 2))]
    return Panel(antennas=antennas, positions=positions)


def random_scene(
    rng: np.random.Generator,
    panel_sizes=(4,),
    f: float = 2e9,
    f_prime: float = 2e9 - 50e6,
    with_user: bool = True,
    extent: float = 30.0,
) -> Scene:
    """Panels scattered in a cube of side ``extent`` metres, plus an optional user."""
    panels = [random_panel(rng, n, origin=rng.uniform(0, extent, size=3)) for n in panel_sizes]
    user = None
    if with_user:
        t, r = rng.uniform(0, 2 * np.pi, size=2)
        user = User(AntennaHardware(t=t, r=r), rng.uniform(0, extent, size=3))
    return Scene(panels=panels, f=f, f_prime=f_prime, user=user)
