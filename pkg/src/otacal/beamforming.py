"""Reciprocity-based downlink beamforming and checks of common calibration myths.

The uplink pilot is sent by the user at local phase zero. Antenna ``i``
answers at local phase ``-observed[i] + precomp[i]``; following the signal
through ``t_i``, the delay ``T_i`` and the user's ``r_u`` gives the phase at
which each antenna's contribution reaches the user.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .array import Scene, apply_oscillator_drift
from .calibrators import RCalibration, align_r_r, r_calibrate_pairwise
from .measurement import MeasurementConfig, measure_link, measure_pairs, star_edges
from .phase import wrap_2pi, wrap_signed

NOISELESS = MeasurementConfig()


@dataclass(frozen=True)
class BeamformingOutcome:
    per_antenna_user_phase: tuple
    coherent_gain: float
    residual_rotation: float

    @classmethod
    def from_phases(cls, phases) -> "BeamformingOutcome":
        phases = tuple(wrap_2pi(float(p)) for p in phases)
        z = np.exp(1j * np.asarray(phases)).mean()
        return cls(phases, float(abs(z)), wrap_2pi(float(np.angle(z))))


def uplink_pilot(scene: Scene, cfg: MeasurementConfig = NOISELESS, trial: int = 0) -> list:
    """Local phase at which each array antenna observes the user's pilot."""
    if scene.user is None:
        raise ValueError("uplink pilot needs a user in the scene")
    return [measure_link(scene, "user", aid, cfg, trial=trial).d for aid in scene.antenna_ids()]


def conjugate_downlink(observed, precomp, scene: Scene) -> BeamformingOutcome:
    """Transmit the negated pilot phase plus ``precomp`` from every antenna."""
    ids = scene.antenna_ids()
    if not len(observed) == len(precomp) == len(ids):
        raise ValueError(f"got {len(observed)} observations, {len(precomp)} precompensations for {len(ids)} antennas")
    if scene.user is None:
        raise ValueError("downlink needs a user in the scene")
    user = scene.user.hardware
    phases = []
    for aid, obs, pc in zip(ids, observed, precomp):
        hw = scene.hardware(aid)
        local_tx = -obs + pc
        phases.append(local_tx - hw.t + scene.delay(aid, "user") + user.r)
    return BeamformingOutcome.from_phases(phases)


def ideal_precompensation(scene: Scene, c: float = 0.0) -> list:
    """``t_i + r_i + c`` from hardware truth."""
    return [wrap_2pi(scene.hardware(a).t + scene.hardware(a).r + c) for a in scene.antenna_ids()]


def myth3_precompensation(scene: Scene) -> list:
    """The mistaken ``t_i - r_i`` precompensation."""
    return [wrap_2pi(scene.hardware(a).t - scene.hardware(a).r) for a in scene.antenna_ids()]


def calibrate_array(scene: Scene, cfg: MeasurementConfig = NOISELESS, trial: int = 0) -> RCalibration:
    """Over-the-air R-calibration of all scene antennas via a star from the first one."""
    ids = scene.antenna_ids()
    if len(ids) == 1:
        return RCalibration(reference=ids[0], rho={ids[0]: 0.0})
    pairs = measure_pairs(scene, star_edges(ids), cfg, trial=trial)
    return r_calibrate_pairwise(pairs, reference=ids[0], antennas=ids)


def beamform_with(scene: Scene, cal: RCalibration, cfg: MeasurementConfig = NOISELESS, trial: int = 0):
    observed = uplink_pilot(scene, cfg, trial)
    precomp = [cal.rho[a] for a in scene.antenna_ids()]
    return conjugate_downlink(observed, precomp, scene)


def _drift_antenna(scene: Scene, aid, phi: float) -> Scene:
    p, i = aid
    panel = scene.panels[p]
    antennas = list(panel.antennas)
    antennas[i] = apply_oscillator_drift(antennas[i], phi)
    return scene.with_panel(p, replace(panel, antennas=tuple(antennas)))


def myth4_drift_experiment(scene: Scene, phi: float, antenna=None) -> float:
    """Misalignment of a drifted antenna when beamforming with a stale calibration.

    Returns how far the drifted antenna's contribution lags the others at the
    user, wrapped into [0, 2*pi); equals ``2*phi`` in the noiseless case.
    """
    ids = scene.antenna_ids()
    if len(ids) < 2:
        raise ValueError("need at least two antennas")
    antenna = ids[-1] if antenna is None else antenna
    stale = calibrate_array(scene)
    drifted = _drift_antenna(scene, antenna, phi)
    outcome = beamform_with(drifted, stale)
    k = ids.index(antenna)
    others = [p for j, p in enumerate(outcome.per_antenna_user_phase) if j != k]
    ref = float(np.angle(np.exp(1j * np.asarray(others)).mean()))
    return wrap_2pi(ref - outcome.per_antenna_user_phase[k])


class LinkEvent(str, Enum):
    AGING = "aging"
    DRIFT = "drift"
    NEITHER = "neither"


def myth5_discriminator(before, after, tol: float) -> LinkEvent:
    """Tell a moved antenna from an oscillator jump using one link measured twice.

    Moving an antenna changes the delay, so both directions shift the same
    way; an oscillator jump at either end shifts them in opposite directions.
    ``before`` and ``after`` are ``(d_ab, d_ba)`` record pairs.
    """
    delta_ab = wrap_signed(after[0].d - before[0].d)
    delta_ba = wrap_signed(after[1].d - before[1].d)
    common = (delta_ab + delta_ba) / 2.0
    opposed = (delta_ba - delta_ab) / 2.0
    if abs(common) <= tol and abs(opposed) <= tol:
        return LinkEvent.NEITHER
    if abs(opposed) <= tol:
        return LinkEvent.AGING
    if abs(common) <= tol:
        return LinkEvent.DRIFT
    return LinkEvent.NEITHER


def default_discriminator_tol(cfg: MeasurementConfig) -> float:
    """Four predicted phase standard deviations, with a floor for the noiseless case.

    The common and opposed shifts each have the single-measurement standard
    deviation, so a quiet link is misread about 1.3e-4 of the time.
    """
    return max(4.0 * cfg.phase_std(), 1e-9)


def joint_user_calibration(scene: Scene, cfg: MeasurementConfig = NOISELESS, trial: int = 0) -> RCalibration:
    """R-calibrate the user together with the array (array as A, user as B)."""
    cal_a = calibrate_array(scene, cfg, trial)
    cal_b = RCalibration(reference="user", rho={"user": 0.0})
    ref = cal_a.reference
    pair = (
        measure_link(scene, ref, "user", cfg, trial=trial),
        measure_link(scene, "user", ref, cfg, trial=trial),
    )
    return align_r_r(cal_a, cal_b, pair)


def myth6_joint_beamforming(scene: Scene, cfg: MeasurementConfig = NOISELESS, trial: int = 0):
    """Beamform with and without the user folded into the calibration.

    Returns ``(array_only, joint)`` outcomes. With the joint calibration each
    antenna precompensates relative to the user's own ``t_u + r_u``, so the
    residual rotation at the user is zero and needs no demodulation pilot.
    """
    array_only = beamform_with(scene, calibrate_array(scene, cfg, trial), cfg, trial)
    joint = joint_user_calibration(scene, cfg, trial)
    observed = uplink_pilot(scene, cfg, trial)
    precomp = [wrap_2pi(joint.rho[a] - joint.rho["user"]) for a in scene.antenna_ids()]
    return array_only, conjugate_downlink(observed, precomp, scene)

