"""Scripted end-to-end demonstrations with pass/fail checks.

Every scenario builds a random scene from a seed, runs the over-the-air
procedure with simulated measurements, and compares what was estimated
against the hardware truth that only the simulator knows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import beamforming as bf
from .array import (
    AntennaHardware,
    DelayTable,
    Panel,
    Scene,
    User,
    apply_aging,
    apply_compensation,
    apply_oscillator_drift,
    wavelength,
)
from .calibrators import (
    align_f_f_dual_freq,
    align_f_f_to_r,
    align_r_r,
    build_bounds,
    f_calibrate_known_coupling,
    r_calibrate_pairwise,
)
from .measurement import (
    MeasurementConfig,
    measure_bidirectional,
    measure_dual_frequency,
    measure_link,
    measure_pairs,
    star_edges,
)
from .phase import TWO_PI, circ_distance, wrap_2pi, wrap_signed


@dataclass
class ScenarioReport:
    name: str
    checks: list = field(default_factory=list)  # (label, passed, detail)
    data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def check(self, label: str, ok: bool, detail: str = "") -> None:
        self.checks.append((label, bool(ok), detail))

    def lines(self) -> list[str]:
        out = [f"scenario {self.name}"]
        out += [f"  [{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else "") for label, ok, detail in self.checks]
        out.append(f"{'PASS' if self.passed else 'FAIL'} {self.name}")
        return out

    def to_dict(self) -> dict:
        return {
            "scenario": self.name,
            "passed": self.passed,
            "checks": [{"label": lab, "passed": ok, "detail": det} for lab, ok, det in self.checks],
            "data": self.data,
        }


MAX_TOLERANCE = 0.2  # rad


@dataclass(frozen=True)
class ScenarioSettings:
    snr_db: float = math.inf
    n_samples: int = 100
    seed: int = 0
    phi: float = 0.5
    antennas: int = 4
    distance_wavelengths: float = 50.0
    f: float = 2e9
    f_prime: float = 2e9 - 50e6

    @property
    def meas(self) -> MeasurementConfig:
        return MeasurementConfig(snr_db=self.snr_db, n_samples=self.n_samples, seed=self.seed)

    def tolerance(self, scale: float = 1.0) -> float:
        """Pass threshold for an estimate built from a few measurements.

        Capped so that a check still means something when the noise is huge.
        """
        if self.snr_db == math.inf:
            return 1e-9
        return min(6.0 * scale * self.meas.phase_std(), MAX_TOLERANCE)


def _rng(s: ScenarioSettings) -> np.random.Generator:
    return np.random.default_rng(s.seed)


def _random_hw(rng) -> AntennaHardware:
    t, r = rng.uniform(0, TWO_PI, size=2)
    return AntennaHardware(t=t, r=r)


def _panel(rng, n: int, origin, lam: float) -> Panel:
    positions = np.asarray(origin, dtype=float) + np.outer(np.arange(n) * lam / 2, [0.0, 1.0, 0.0])
    return Panel(antennas=[_random_hw(rng) for _ in range(n)], positions=positions)


def _two_panel_scene(s: ScenarioSettings, rng, n: int) -> Scene:
    lam = wavelength(s.f)
    a = _panel(rng, n, (0.0, 0.0, 0.0), lam)
    b = _panel(rng, n, (s.distance_wavelengths * lam, 0.0, 0.0), lam)
    user = User(_random_hw(rng), (0.3 * s.distance_wavelengths * lam, 7.0 * lam, 1.5))
    return Scene(panels=[a, b], f=s.f, f_prime=s.f_prime, user=user)


def _err(est, truth) -> float:
    return circ_distance(wrap_2pi(est), wrap_2pi(truth))


def _local(panel_index: int, records):
    """Re-key scene-wide ids ``(p, i)`` to panel-local ``i``."""
    return [replace(r, tx=r.tx[1], rx=r.rx[1]) for r in records if r.tx[0] == r.rx[0] == panel_index]


def _f_calibrate_panel(scene: Scene, p: int, s: ScenarioSettings, trial: int = 0):
    """Measure all directed pairs inside panel ``p`` and F-calibrate it with known coupling."""
    ids = [(p, i) for i in range(len(scene.panels[p]))]
    records = [measure_link(scene, i, j, s.meas, trial=trial) for i in ids for j in ids if i != j]
    table = scene.delay_table(ids)
    local_table = DelayTable(ids=[i for _, i in ids], T=table.T)
    return f_calibrate_known_coupling(_local(p, records), local_table)


def _compensated(scene: Scene, s: ScenarioSettings) -> Scene:
    for p in range(len(scene.panels)):
        cal = _f_calibrate_panel(scene, p, s)
        scene = scene.with_panel(p, apply_compensation(scene.panels[p], cal))
    return scene


def _half_sum(hw: AntennaHardware) -> float:
    # (t + r)/2 of a compensated antenna, exact when t == r
    return hw.r + wrap_signed(hw.t - hw.r) / 2.0


def scenario_f_cal_3ant(s: ScenarioSettings) -> ScenarioReport:
    rep = ScenarioReport("f-cal-3ant")
    rng = _rng(s)
    lam = wavelength(s.f)
    scene = Scene(panels=[_panel(rng, 3, (0, 0, 0), lam)], f=s.f, f_prime=s.f_prime)
    cal = _f_calibrate_panel(scene, 0, s)
    hw = scene.panels[0].antennas
    tol = s.tolerance(2.0)
    worst = 0.0
    for i in range(3):
        worst = max(
            worst,
            _err(cal.r_diff[i], hw[i].r - hw[0].r),
            _err(cal.t_diff[i], hw[i].t - hw[0].t),
            _err(cal.rt_offset[i], hw[i].r - hw[i].t),
        )
    rep.check("r_i - r_1, t_i - t_1, r_i - t_i recovered", worst <= tol, f"max error {worst:.3g} rad (tol {tol:.3g})")
    comp = apply_compensation(scene.panels[0], cal).effective_offsets()
    spread = max(_err(x, hw[0].r) for a in comp for x in (a.t, a.r))
    rep.check("compensated panel has t_i = r_i = r_1", spread <= tol, f"max deviation {spread:.3g} rad")
    rep.data.update(max_error=worst, compensation_spread=spread)
    return rep


def scenario_r_cal_pair(s: ScenarioSettings) -> ScenarioReport:
    rep = ScenarioReport("r-cal-pair")
    rng = _rng(s)
    a, b = _random_hw(rng), _random_hw(rng)
    T = rng.uniform(0, 200.0)
    pair = measure_bidirectional(a, b, T, s.meas, a_id=1, b_id=2, frequency=s.f)
    cal = r_calibrate_pairwise([pair])
    truth = b.t + b.r - a.t - a.r
    err = _err(cal.rho[2], truth)
    tol = s.tolerance(2.0)
    rep.check("t_2 + r_2 - t_1 - r_1 recovered without knowing T", err <= tol, f"error {err:.3g} rad")
    rep.data.update(rho=cal.rho[2], truth=wrap_2pi(truth), error=err)
    return rep


def scenario_align_rr(s: ScenarioSettings) -> ScenarioReport:
    rep = ScenarioReport("align-rr")
    rng = _rng(s)
    scene = _two_panel_scene(s, rng, s.antennas)
    ids_a = [(0, i) for i in range(s.antennas)]
    ids_b = [(1, i) for i in range(s.antennas)]
    cal_a = r_calibrate_pairwise(measure_pairs(scene, star_edges(ids_a), s.meas), reference=ids_a[0])
    cal_b = r_calibrate_pairwise(measure_pairs(scene, star_edges(ids_b), s.meas), reference=ids_b[0])
    cross = measure_pairs(scene, [(ids_a[0], ids_b[0])], s.meas, trial=1)[0]
    joint = align_r_r(cal_a, cal_b, cross)
    worst = 0.0
    for i in ids_a:
        for j in ids_b:
            hi, hj = scene.hardware(i), scene.hardware(j)
            worst = max(worst, _err(joint.between(i, j), hj.t + hj.r - hi.t - hi.r))
    tol = s.tolerance(4.0)
    rep.check("joint reciprocity table over A and B", worst <= tol, f"max error {worst:.3g} rad")
    ai, bj = ids_a[-1], ids_b[-1]
    d_ab, d_ba = measure_pairs(scene, [(ai, bj)], s.meas, trial=2)[0]
    mismatch = _err(d_ba.d + joint.between(ai, bj), d_ab.d)
    rep.check("A->B and B->A channels agree after compensation", mismatch <= tol, f"mismatch {mismatch:.3g} rad")
    rep.data.update(max_error=worst, channel_mismatch=mismatch)
    return rep


def scenario_align_ff_r(s: ScenarioSettings) -> ScenarioReport:
    rep = ScenarioReport("align-ff-r")
    rng = _rng(s)
    scene = _compensated(_two_panel_scene(s, rng, max(3, s.antennas)), s)
    a, b = scene.hardware((0, 0)), scene.hardware((1, 0))
    pair = measure_pairs(scene, [((0, 0), (1, 0))], s.meas, trial=1)[0]
    est = align_f_f_to_r(pair)
    truth = 2 * (_half_sum(a) - _half_sum(b))
    err = _err(est, truth)
    tol = s.tolerance(8.0)
    rep.check("2(c_A - c_B) recovered from one bidirectional measurement", err <= tol, f"error {err:.3g} rad")
    halves = [wrap_2pi(est / 2), wrap_2pi(est / 2 + math.pi)]
    c_true = _half_sum(a) - _half_sum(b)
    rep.check("halving leaves c_A - c_B only up to pi", min(_err(h, c_true) for h in halves) <= tol)
    rep.data.update(two_c_diff=est, truth=wrap_2pi(truth), error=err)
    return rep


def scenario_align_ff_f(s: ScenarioSettings) -> ScenarioReport:
    rep = ScenarioReport("align-ff-f")
    rng = _rng(s)
    scene = _compensated(_two_panel_scene(s, rng, max(3, s.antennas)), s)
    a, b = scene.hardware((0, 0)), scene.hardware((1, 0))
    T = scene.delay((0, 0), (1, 0))
    obs = measure_dual_frequency(a, b, T, s.f, s.f_prime, s.meas, trial=1)
    bounds = build_bounds(1.2 * s.distance_wavelengths * wavelength(s.f), s.f, s.f_prime)
    res = align_f_f_dual_freq(obs, s.f, s.f_prime, bounds)
    c_true = _half_sum(a) - _half_sum(b)
    err = _err(res.c_diff, c_true)
    tol = s.tolerance(8.0)
    rep.check("c_A - c_B recovered (pi ambiguity resolved)", err <= tol, f"error {err:.3g} rad, branch {res.branch.value}")
    period = TWO_PI / (1 - s.f_prime / s.f)
    T_err = abs(wrap_signed((res.T_est - T) * TWO_PI / period)) * period / TWO_PI
    # a wrong branch moves the delay by pi, so the tolerance stays well below that
    T_tol = 1e-9 if s.snr_db == math.inf else min(40 * s.meas.phase_std() * period / TWO_PI, math.pi / 4)
    rep.check("delay recovered modulo the unambiguous range", T_err <= T_tol, f"T_est {res.T_est:.6g}, T {T:.6g} rad")
    rep.data.update(c_diff=res.c_diff, truth=wrap_2pi(c_true), error=err, branch=res.branch.value,
                    T_est=res.T_est, T_true=T, residual=res.residual)
    return rep


def scenario_myth3(s: ScenarioSettings) -> ScenarioReport:
    rep = ScenarioReport("myth3")
    rng = _rng(s)
    scene = _two_panel_scene(s, rng, s.antennas)
    observed = bf.uplink_pilot(scene, s.meas)
    right = bf.conjugate_downlink(observed, bf.ideal_precompensation(scene), scene)
    wrong = bf.conjugate_downlink(observed, bf.myth3_precompensation(scene), scene)
    tol = 1e-9 if s.snr_db == math.inf else 1e-3
    rep.check("t_i + r_i + c precompensation is coherent", right.coherent_gain >= 1 - tol, f"gain {right.coherent_gain:.6f}")
    rep.check("t_i - r_i precompensation is not", wrong.coherent_gain < 0.999, f"gain {wrong.coherent_gain:.6f}")
    rep.data.update(gain_t_plus_r=right.coherent_gain, gain_t_minus_r=wrong.coherent_gain)
    return rep


def scenario_myth4(s: ScenarioSettings) -> ScenarioReport:
    rep = ScenarioReport("myth4")
    rng = _rng(s)
    scene = _two_panel_scene(s, rng, s.antennas)
    residual = bf.myth4_drift_experiment(scene, s.phi)
    expected = wrap_2pi(2 * s.phi)
    err = _err(residual, expected)
    rep.check("stale calibration misaligns the drifted antenna by 2*phi", err <= 1e-9,
              f"residual {residual:.6f} rad, 2*phi = {expected:.6f} rad")
    drifted = bf._drift_antenna(scene, scene.antenna_ids()[-1], s.phi)
    fresh = bf.beamform_with(drifted, bf.calibrate_array(drifted))
    rep.check("re-calibration restores coherence", fresh.coherent_gain >= 1 - 1e-9, f"gain {fresh.coherent_gain:.6f}")
    rep.data.update(residual=residual, expected=expected)
    return rep


def scenario_myth5(s: ScenarioSettings) -> ScenarioReport:
    rep = ScenarioReport("myth5")
    rng = _rng(s)
    a, b = _random_hw(rng), _random_hw(rng)
    T = rng.uniform(10.0, 200.0)
    tol = bf.default_discriminator_tol(s.meas)

    def link(x, y, delay, trial):
        return measure_bidirectional(x, y, delay, s.meas, a_id="a", b_id="b", frequency=s.f, trial=trial)

    before = link(a, b, T, 0)
    outcomes = {
        "aging": bf.myth5_discriminator(before, link(a, b, apply_aging(T, s.phi), 1), tol),
        "drift": bf.myth5_discriminator(before, link(apply_oscillator_drift(a, s.phi), b, T, 2), tol),
        "neither": bf.myth5_discriminator(before, link(a, b, T, 3), tol),
    }
    for expected, got in outcomes.items():
        rep.check(f"{expected} event classified", got.value == expected, f"got {got.value}")
    rep.data.update({k: v.value for k, v in outcomes.items()})
    return rep


def scenario_myth6(s: ScenarioSettings) -> ScenarioReport:
    rep = ScenarioReport("myth6")
    rng = _rng(s)
    scene = _two_panel_scene(s, rng, s.antennas)
    array_only, joint = bf.myth6_joint_beamforming(scene, s.meas)
    ref = scene.hardware(scene.antenna_ids()[0])
    user = scene.user.hardware
    predicted = wrap_2pi(user.t + user.r - ref.t - ref.r)
    tol = s.tolerance(4.0)
    err_pred = _err(array_only.residual_rotation, predicted)
    rep.check("array-only calibration leaves a common rotation t_u + r_u + c", err_pred <= tol,
              f"rotation {array_only.residual_rotation:.6f}, predicted {predicted:.6f}")
    rot = _err(joint.residual_rotation, 0.0)
    rep.check("joint user-array calibration removes the rotation", rot <= tol, f"rotation {joint.residual_rotation:.3g}")
    rep.data.update(array_only_rotation=array_only.residual_rotation, joint_rotation=joint.residual_rotation)
    return rep


SCENARIOS = {
    "f-cal-3ant": scenario_f_cal_3ant,
    "r-cal-pair": scenario_r_cal_pair,
    "align-rr": scenario_align_rr,
    "align-ff-r": scenario_align_ff_r,
    "align-ff-f": scenario_align_ff_f,
    "myth3": scenario_myth3,
    "myth4": scenario_myth4,
    "myth5": scenario_myth5,
    "myth6": scenario_myth6,
}


def run_scenario(name: str, settings: ScenarioSettings | None = None) -> ScenarioReport:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(SCENARIOS)}")
    return SCENARIOS[name](settings or ScenarioSettings())
