"""Noisy over-the-air one-way phase observations.

A one-way measurement from ``tx`` to ``rx`` over delay ``T`` observes the
local receive phase ``r_rx - t_tx + T``. Noise is modelled on the carrier
samples: each of ``n_samples`` samples is ``exp(j*phase)`` plus circularly
symmetric complex Gaussian noise of variance ``10**(-snr_db/10)``, and the
samples are coherently averaged before the angle is taken.

Every measurement draws from its own random stream, keyed by
``(seed, tx, rx, frequency, trial)``, so results do not depend on the order
in which measurements or trials are generated.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .array import AntennaHardware, Scene
from .phase import coherent_average, wrap_2pi


@dataclass(frozen=True)
class MeasurementConfig:
    snr_db: float = math.inf
    n_samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ValueError(f"n_samples must be a positive integer, got {self.n_samples}")
        if math.isnan(self.snr_db):
            raise ValueError("snr_db is NaN")

    @property
    def noise_variance(self) -> float:
        return noise_variance(self.snr_db)

    def phase_std(self) -> float:
        """Small-noise standard deviation of the averaged phase, in radians."""
        return math.sqrt(self.noise_variance / (2 * self.n_samples))


@dataclass(frozen=True)
class MeasurementRecord:
    tx: object
    rx: object
    frequency: float | None
    d: float
    magnitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "d", wrap_2pi(float(self.d)))


def noise_variance(snr_db: float) -> float:
    if snr_db == math.inf:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


def _key(x) -> int:
    if isinstance(x, (int, np.integer)) and x >= 0:
        return int(x)
    return zlib.crc32(repr(x).encode())


def measurement_rng(seed: int, tx, rx, frequency, trial: int = 0) -> np.random.Generator:
    """Random stream dedicated to one directed measurement of one trial."""
    freq_key = 0 if frequency is None else int(round(frequency))
    ss = np.random.SeedSequence(int(seed), spawn_key=(_key(tx), _key(rx), freq_key, int(trial)))
    return np.random.Generator(np.random.PCG64(ss))


def unit_noise(rng: np.random.Generator, n_samples: int, size=()) -> np.ndarray:
    """Unit-variance circular complex Gaussian samples, shape ``size + (n_samples,)``."""
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    z = rng.standard_normal(shape + (n_samples, 2))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)


def noisy_phase(true_phase, snr_db: float, noise: np.ndarray):
    """Coherently averaged phase of carrier samples corrupted by scaled ``noise``.

    ``noise`` holds unit-variance samples along its last axis; it is scaled to
    the requested SNR here so the same draw can be reused across SNR points.
    """
    sigma = math.sqrt(noise_variance(snr_db))
    carrier = np.exp(1j * np.asarray(true_phase, dtype=float))[..., None]
    return coherent_average(carrier + sigma * noise)


def measure_one_way(
    tx: AntennaHardware,
    rx: AntennaHardware,
    T: float,
    cfg: MeasurementConfig,
    *,
    tx_id="tx",
    rx_id="rx",
    frequency: float | None = None,
    trial: int = 0,
    rng: np.random.Generator | None = None,
) -> MeasurementRecord:
    """Observe the phase at ``rx`` of a tone sent by ``tx`` at local phase zero.

    ``T`` is the unwrapped delay at the measurement frequency. Pass ``rng`` to
    draw noise from a caller-owned stream instead of the keyed one.
    """
    if T < 0:
        raise ValueError(f"delay must be non-negative, got {T}")
    true = rx.r - tx.t + T
    if cfg.snr_db == math.inf:
        return MeasurementRecord(tx_id, rx_id, frequency, true, 1.0)
    if rng is None:
        rng = measurement_rng(cfg.seed, tx_id, rx_id, frequency, trial)
    d, mag = noisy_phase(true, cfg.snr_db, unit_noise(rng, cfg.n_samples))
    return MeasurementRecord(tx_id, rx_id, frequency, d, mag)


def measure_bidirectional(
    a: AntennaHardware,
    b: AntennaHardware,
    T: float,
    cfg: MeasurementConfig,
    *,
    a_id="a",
    b_id="b",
    frequency: float | None = None,
    trial: int = 0,
    rng: np.random.Generator | None = None,
) -> tuple[MeasurementRecord, MeasurementRecord]:
    """Independent measurements ``a -> b`` and ``b -> a`` over the same delay."""
    kw = dict(frequency=frequency, trial=trial, rng=rng)
    d_ab = measure_one_way(a, b, T, cfg, tx_id=a_id, rx_id=b_id, **kw)
    d_ba = measure_one_way(b, a, T, cfg, tx_id=b_id, rx_id=a_id, **kw)
    return d_ab, d_ba


@dataclass(frozen=True)
class DualFrequencyObservation:
    """Phase observations between two compensated panels at ``f`` and ``f_prime``."""

    d_ab: MeasurementRecord
    d_ba: MeasurementRecord
    d_ba_prime: MeasurementRecord
    d_ab_prime: MeasurementRecord | None = None

    @property
    def f(self) -> float:
        return self.d_ab.frequency

    @property
    def f_prime(self) -> float:
        return self.d_ba_prime.frequency


def measure_dual_frequency(
    a: AntennaHardware,
    b: AntennaHardware,
    T_at_f: float,
    f: float,
    f_prime: float,
    cfg: MeasurementConfig,
    *,
    include_fourth: bool = False,
    a_id="A",
    b_id="B",
    trial: int = 0,
    rng: np.random.Generator | None = None,
) -> DualFrequencyObservation:
    """Bidirectional probe at ``f`` plus a ``B -> A`` probe at ``f_prime``.

    ``a`` and ``b`` are the effective offsets of one antenna on each of two
    F-calibrated panels, so ``t == r`` on each side; residual mismatch from
    an imperfect compensation simply shows up in the observations. With
    ``include_fourth`` the ``f_prime`` probe is made bidirectional too.
    """
    if not 0 < f_prime < f:
        raise ValueError(f"need 0 < f' < f, got f={f}, f'={f_prime}")
    T_prime = (f_prime / f) * T_at_f
    kw = dict(cfg=cfg, trial=trial, rng=rng)
    d_ab = measure_one_way(a, b, T_at_f, tx_id=a_id, rx_id=b_id, frequency=f, **kw)
    d_ba = measure_one_way(b, a, T_at_f, tx_id=b_id, rx_id=a_id, frequency=f, **kw)
    d_ba_p = measure_one_way(b, a, T_prime, tx_id=b_id, rx_id=a_id, frequency=f_prime, **kw)
    d_ab_p = None
    if include_fourth:
        d_ab_p = measure_one_way(a, b, T_prime, tx_id=a_id, rx_id=b_id, frequency=f_prime, **kw)
    return DualFrequencyObservation(d_ab, d_ba, d_ba_p, d_ab_p)


def measure_link(
    scene: Scene,
    tx_id,
    rx_id,
    cfg: MeasurementConfig,
    *,
    frequency: float | None = None,
    trial: int = 0,
    rng: np.random.Generator | None = None,
) -> MeasurementRecord:
    """One-way measurement between two elements of a scene, delay from its geometry."""
    frequency = scene.f if frequency is None else frequency
    return measure_one_way(
        scene.hardware(tx_id),
        scene.hardware(rx_id),
        scene.delay(tx_id, rx_id, frequency),
        cfg,
        tx_id=tx_id,
        rx_id=rx_id,
        frequency=frequency,
        trial=trial,
        rng=rng,
    )


def measure_pairs(scene: Scene, edges, cfg: MeasurementConfig, *, frequency: float | None = None, trial: int = 0):
    """Bidirectional measurements ``(d_ij, d_ji)`` for every ``(i, j)`` in ``edges``."""
    return [
        (
            measure_link(scene, i, j, cfg, frequency=frequency, trial=trial),
            measure_link(scene, j, i, cfg, frequency=frequency, trial=trial),
        )
        for i, j in edges
    ]


def star_edges(ids, hub=None):
    ids = list(ids)
    hub = ids[0] if hub is None else hub
    return [(hub, k) for k in ids if k != hub]


def chain_edges(ids):
    ids = list(ids)
    return list(zip(ids[:-1], ids[1:]))
