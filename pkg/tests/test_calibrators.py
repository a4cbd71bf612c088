import math
from itertools import product

import numpy as np
import pytest

from otacal.array import AntennaHardware, DelayTable, wavelength
from otacal.calibrators import (
    AmbiguityError,
    Branch,
    DisconnectedGraphError,
    RCalibration,
    align_f_f_dual_freq,
    align_f_f_genie,
    align_f_f_to_r,
    align_r_r,
    build_bounds,
    f_calibrate_known_coupling,
    r_calibrate_pairwise,
    resolve_pi_ambiguity,
)
from otacal.measurement import (
    MeasurementConfig,
    MeasurementRecord,
    measure_bidirectional,
    measure_dual_frequency,
    measure_one_way,
)
from otacal.phase import circ_distance, wrap_2pi, wrap_signed

PI = math.pi
F, F_PRIME = 2e9, 2e9 - 50e6
LAM = wavelength(F)
NOISELESS = MeasurementConfig()


def close(a, b, tol=1e-9):
    return circ_distance(wrap_2pi(a), wrap_2pi(b)) < tol


def random_hw(rng, n):
    return [AntennaHardware(*rng.uniform(0, 2 * PI, 2)) for _ in range(n)]


def random_table(rng, ids):
    n = len(ids)
    T = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            T[i, j] = T[j, i] = rng.uniform(0, 30)
    return DelayTable(ids=list(ids), T=T)


def all_directed(hw, table, cfg=NOISELESS):
    ids = table.ids
    return [
        measure_one_way(hw[i], hw[j], table[ids[i], ids[j]], cfg, tx_id=ids[i], rx_id=ids[j])
        for i in range(len(ids))
        for j in range(len(ids))
        if i != j
    ]


# ------------------------------------------------------------------ F-calibration


def test_fcal_identical_hardware_gives_zeros():
    rng = np.random.default_rng(0)
    hw = [AntennaHardware(0, 0)] * 3
    table = random_table(rng, [0, 1, 2])
    cal = f_calibrate_known_coupling(all_directed(hw, table), table)
    for d in (cal.r_diff, cal.t_diff, cal.rt_offset):
        assert all(close(v, 0.0) for v in d.values())


@pytest.mark.parametrize("n", [3, 4, 7])
def test_fcal_recovers_truth(n):
    rng = np.random.default_rng(n)
    for _ in range(50):
        hw = random_hw(rng, n)
        table = random_table(rng, range(n))
        cal = f_calibrate_known_coupling(all_directed(hw, table), table)
        assert cal.reference == 0
        for i in range(n):
            assert close(cal.r_diff[i], hw[i].r - hw[0].r, 1e-12)
            assert close(cal.t_diff[i], hw[i].t - hw[0].t, 1e-12)
            assert close(cal.rt_offset[i], hw[i].r - hw[i].t, 1e-12)
            # internal consistency
            assert close(cal.rt_offset[i] - cal.rt_offset[0], cal.r_diff[i] - cal.t_diff[i])


def test_fcal_closed_form_for_three_antennas():
    # r_1 - t_1 = d_21 + d_13 - d_23 etc., with T already subtracted
    rng = np.random.default_rng(5)
    hw = random_hw(rng, 3)
    zero = DelayTable(ids=[1, 2, 3], T=np.zeros((3, 3)))
    recs = all_directed(hw, zero)
    d = {(r.tx, r.rx): r.d for r in recs}
    cal = f_calibrate_known_coupling(recs, zero)
    assert close(cal.rt_offset[1], d[2, 1] + d[1, 3] - d[2, 3])
    assert close(-cal.r_diff[2], d[3, 1] - d[3, 2])
    assert close(-cal.t_diff[2], d[2, 3] - d[1, 3])


def test_fcal_without_delay_subtraction_is_biased():
    # oracle: symbolic evaluation; ignoring T adds T_21 + T_13 - T_23 to r_1 - t_1
    rng = np.random.default_rng(6)
    hw = random_hw(rng, 3)
    table = random_table(rng, [1, 2, 3])
    zero = DelayTable(ids=[1, 2, 3], T=np.zeros((3, 3)))
    cal = f_calibrate_known_coupling(all_directed(hw, table), zero)
    bias = table[2, 1] + table[1, 3] - table[2, 3]
    assert close(cal.rt_offset[1], hw[0].r - hw[0].t + bias)
    assert not close(cal.rt_offset[1], hw[0].r - hw[0].t, 1e-3)


def test_fcal_missing_pair_or_delay():
    rng = np.random.default_rng(7)
    hw = random_hw(rng, 3)
    table = random_table(rng, [0, 1, 2])
    recs = all_directed(hw, table)
    with pytest.raises(ValueError, match="missing measurement"):
        f_calibrate_known_coupling(recs[1:], table)
    small = DelayTable(ids=[0, 1], T=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        f_calibrate_known_coupling(recs, small)


# ------------------------------------------------------------------ R-calibration


def pairs_for(hw, edges, rng, cfg=NOISELESS):
    return [measure_bidirectional(hw[i], hw[j], rng.uniform(0, 1000), cfg, a_id=i, b_id=j) for i, j in edges]


def test_rcal_two_antennas():
    rng = np.random.default_rng(8)
    hw = random_hw(rng, 2)
    (pair,) = pairs_for(hw, [(0, 1)], rng)
    cal = r_calibrate_pairwise([pair])
    d_01, d_10 = pair
    assert close(cal.rho[1], hw[1].t + hw[1].r - hw[0].t - hw[0].r)
    assert close(cal.rho[1], -(d_10.d - d_01.d))
    assert cal.rho[0] == 0.0


def test_rcal_identical_hardware():
    rng = np.random.default_rng(9)
    hw = [AntennaHardware(1.0, 2.0)] * 5
    cal = r_calibrate_pairwise(pairs_for(hw, [(0, k) for k in range(1, 5)], rng))
    assert all(close(v, 0.0) for v in cal.rho.values())


def test_rcal_star_and_chain_agree():
    rng = np.random.default_rng(10)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        hw = random_hw(rng, n)
        star = r_calibrate_pairwise(pairs_for(hw, [(0, k) for k in range(1, n)], rng), reference=0)
        chain = r_calibrate_pairwise(pairs_for(hw, [(k, k + 1) for k in range(n - 1)], rng), reference=0)
        for k in range(n):
            assert close(star.rho[k], chain.rho[k])
            assert close(star.rho[k], hw[k].t + hw[k].r - hw[0].t - hw[0].r)
        i, j = rng.integers(0, n, 2)
        assert close(star.between(i, j), hw[j].t - hw[i].t + hw[j].r - hw[i].r)


def test_rcal_disconnected_graph_names_unreached():
    rng = np.random.default_rng(11)
    hw = random_hw(rng, 4)
    with pytest.raises(DisconnectedGraphError, match="3"):
        r_calibrate_pairwise(pairs_for(hw, [(0, 1), (2, 3)], rng), reference=0)
    with pytest.raises(DisconnectedGraphError, match="'x'"):
        r_calibrate_pairwise(pairs_for(hw, [(0, 1)], rng), antennas=[0, 1, "x"])


def test_rcal_rejects_mismatched_pair():
    a = MeasurementRecord(0, 1, None, 0.1)
    with pytest.raises(ValueError):
        r_calibrate_pairwise([(a, a)])


# ------------------------------------------------------------------ R-R alignment


def two_arrays(rng, na, nb):
    hw = {("A", i): AntennaHardware(*rng.uniform(0, 2 * PI, 2)) for i in range(na)}
    hw.update({("B", i): AntennaHardware(*rng.uniform(0, 2 * PI, 2)) for i in range(nb)})
    return hw


def rcal_of(hw, ids, rng):
    pairs = [measure_bidirectional(hw[ids[0]], hw[k], rng.uniform(0, 100), NOISELESS, a_id=ids[0], b_id=k) for k in ids[1:]]
    return r_calibrate_pairwise(pairs, reference=ids[0], antennas=ids)


def test_align_rr_random_scene():
    rng = np.random.default_rng(12)
    for _ in range(20):
        hw = two_arrays(rng, 4, 3)
        ids_a = [k for k in hw if k[0] == "A"]
        ids_b = [k for k in hw if k[0] == "B"]
        cal_a, cal_b = rcal_of(hw, ids_a, rng), rcal_of(hw, ids_b, rng)
        pair = measure_bidirectional(hw[ids_a[0]], hw[ids_b[0]], rng.uniform(0, 1e4), NOISELESS, a_id=ids_a[0], b_id=ids_b[0])
        joint = align_r_r(cal_a, cal_b, pair)
        everyone = ids_a + ids_b
        for _ in range(20):
            i, j = (everyone[k] for k in rng.integers(0, len(everyone), 2))
            assert close(joint.between(i, j), hw[j].t - hw[i].t + hw[j].r - hw[i].r, 1e-10)


def test_align_rr_identical_arrays_cross_term_zero():
    hw = {("A", 0): AntennaHardware(0.5, 1.0), ("B", 0): AntennaHardware(0.5, 1.0)}
    cal_a = RCalibration(("A", 0), {("A", 0): 0.0})
    cal_b = RCalibration(("B", 0), {("B", 0): 0.0})
    pair = measure_bidirectional(hw["A", 0], hw["B", 0], 77.0, NOISELESS, a_id=("A", 0), b_id=("B", 0))
    joint = align_r_r(cal_a, cal_b, pair)
    assert close(joint.between(("A", 0), ("B", 0)), 0.0)


def test_align_rr_makes_channels_reciprocal():
    rng = np.random.default_rng(13)
    hw = two_arrays(rng, 3, 3)
    ids_a = [k for k in hw if k[0] == "A"]
    ids_b = [k for k in hw if k[0] == "B"]
    pair = measure_bidirectional(hw[ids_a[0]], hw[ids_b[0]], 55.0, NOISELESS, a_id=ids_a[0], b_id=ids_b[0])
    joint = align_r_r(rcal_of(hw, ids_a, rng), rcal_of(hw, ids_b, rng), pair)
    for i in ids_a:
        for j in ids_b:
            d_ij, d_ji = measure_bidirectional(hw[i], hw[j], rng.uniform(0, 1e3), NOISELESS, a_id=i, b_id=j)
            # compensating B->A by the known cross term gives the A->B channel
            assert close(d_ji.d + joint.between(i, j), d_ij.d, 1e-12)


def test_align_rr_validation():
    cal = RCalibration("a", {"a": 0.0})
    pair = (MeasurementRecord("a", "a", None, 0.0), MeasurementRecord("a", "a", None, 0.0))
    with pytest.raises(ValueError):
        align_r_r(cal, cal, pair)


# ------------------------------------------------------------------ F-F alignment


def dual(c_a, c_b, T, cfg=NOISELESS, fourth=False, trial=0):
    return measure_dual_frequency(
        AntennaHardware(c_a, c_a), AntennaHardware(c_b, c_b), T, F, F_PRIME, cfg, include_fourth=fourth, trial=trial
    )


def test_align_ff_to_r_examples():
    obs = dual(0.3, 0.3, 12.0)
    assert close(align_f_f_to_r((obs.d_ab, obs.d_ba)), 0.0)
    obs = dual(1.4, 1.0, 12.0)
    assert close(align_f_f_to_r((obs.d_ab, obs.d_ba)), 0.8)


def test_halving_has_pi_ambiguity():
    rng = np.random.default_rng(14)
    for _ in range(200):
        c_a, c_b, T = *rng.uniform(0, 2 * PI, 2), rng.uniform(0, 500)
        obs = dual(c_a, c_b, T)
        half = wrap_2pi(align_f_f_to_r((obs.d_ab, obs.d_ba)) / 2)
        assert close(half, c_a - c_b) or close(half, c_a - c_b + PI)


def test_genie_noiseless():
    obs = dual(2.0, 0.5, 321.0)
    assert close(align_f_f_genie(obs.d_ba, 321.0), 1.5, 1e-12)
    assert close(align_f_f_genie(obs.d_ba, 321.0, obs.d_ab), 1.5, 1e-12)


@pytest.mark.slow
def test_genie_rmse_scales_with_snr_and_two_measurements_halve_variance():
    # oracle: Monte Carlo of the genie over independent noisy measurements
    T = 100 * PI
    rng = np.random.default_rng(15)
    trials = 4000
    consts = rng.uniform(0, 2 * PI, size=(trials, 2))
    rmse_one, rmse_two = {}, {}
    for snr in (10.0, 20.0):
        cfg = MeasurementConfig(snr_db=snr, n_samples=100, seed=3)
        e1, e2 = [], []
        for k, (c_a, c_b) in enumerate(consts):
            obs = dual(c_a, c_b, T, cfg, trial=k)
            e1.append(wrap_signed(align_f_f_genie(obs.d_ba, T) - (c_a - c_b)))
            e2.append(wrap_signed(align_f_f_genie(obs.d_ba, T, obs.d_ab) - (c_a - c_b)))
        rmse_one[snr] = math.sqrt(np.mean(np.square(e1)))
        rmse_two[snr] = math.sqrt(np.mean(np.square(e2)))
    assert rmse_one[10.0] / rmse_one[20.0] == pytest.approx(math.sqrt(10), rel=0.05)
    assert (rmse_one[20.0] / rmse_two[20.0]) ** 2 == pytest.approx(2.0, rel=0.10)


@pytest.mark.parametrize(
    "d_max, m_max, n_max",
    [(50 * LAM, 51, 2), (0.5 * LAM, 2, 1)],
)
def test_build_bounds_examples(d_max, m_max, n_max):
    b = build_bounds(d_max, F, F_PRIME)
    assert (b.m_max, b.n_max) == (m_max, n_max)


def test_build_bounds_monotone_and_validated():
    prev = build_bounds(0.1, F, F_PRIME)
    for d in np.linspace(0.2, 200, 300):
        b = build_bounds(d, F, F_PRIME)
        assert b.m_max >= prev.m_max and b.n_max >= prev.n_max
        prev = b
    with pytest.raises(ValueError):
        build_bounds(0.0, F, F_PRIME)


def test_dual_freq_trivial_case():
    res = align_f_f_dual_freq(dual(0.9, 0.9, 20 * PI), F, F_PRIME, build_bounds(50 * LAM, F, F_PRIME))
    assert res.branch is Branch.CASE_I
    assert close(res.c_diff, 0.0)


def brute_force_matches(obs, bounds, tol=1e-7):
    """Independent oracle: enumerate both c candidates and every (m, n).

    For a candidate c, d_AB = -c + T gives T = d_AB + c (mod 2*pi).
    """
    ratio = F_PRIME / F
    period = 2 * PI / (1 - ratio)
    T_hat = ((obs.d_ba.d - obs.d_ba_prime.d) / (1 - ratio)) % period
    half = (obs.d_ba.d - obs.d_ab.d) / 2
    hits = []
    for branch, c in ((0, half), (1, half + PI)):
        T0 = (obs.d_ab.d + c) % (2 * PI)
        for m, n in product(range(bounds.m_max + 1), range(bounds.n_max + 1)):
            if abs(T0 + 2 * PI * m - (T_hat + n * period)) < tol:
                hits.append((branch, m, n, T0 + 2 * PI * m))
    return hits


def test_dual_freq_fig3_scene_exhaustive_oracle():
    rng = np.random.default_rng(16)
    T = 100 * PI
    bounds = build_bounds(50 * LAM, F, F_PRIME)
    period = 2 * PI / (1 - F_PRIME / F)
    assert period == pytest.approx(80 * PI)
    for _ in range(200):
        c_a, c_b = rng.uniform(0, 2 * PI, 2)
        obs = dual(c_a, c_b, T)
        hits = brute_force_matches(obs, bounds)
        # one branch only; within it the delay is known modulo the 80*pi unambiguous range
        assert len({h[0] for h in hits}) == 1
        assert any(abs(h[3] - T) < 1e-7 for h in hits)
        res = align_f_f_dual_freq(obs, F, F_PRIME, bounds)
        assert close(res.c_diff, c_a - c_b)
        assert res.branch.value == ("case_i", "case_ii")[hits[0][0]]
        assert any(abs(res.T_est - h[3]) < 1e-7 for h in hits)
        assert abs(wrap_signed((res.T_est - T) / period * 2 * PI)) < 1e-9
        assert res.residual < 1e-9 and res.diagnostics["other_residual"] > 1.0


def test_dual_freq_delay_is_exact_inside_unambiguous_range():
    rng = np.random.default_rng(17)
    bounds = build_bounds(35 * LAM, F, F_PRIME)  # 35 < 40 wavelengths of unambiguous range
    for _ in range(300):
        c_a, c_b = rng.uniform(0, 2 * PI, 2)
        T = rng.uniform(0, 70 * PI)
        res = align_f_f_dual_freq(dual(c_a, c_b, T), F, F_PRIME, bounds)
        assert res.T_est == pytest.approx(T, abs=1e-8)
        assert close(res.c_diff, c_a - c_b)


def test_dual_freq_invariants_on_random_scenes():
    rng = np.random.default_rng(18)
    bounds = build_bounds(60 * LAM, F, F_PRIME)
    for _ in range(500):
        c_a, c_b = rng.uniform(0, 2 * PI, 2)
        T = rng.uniform(0, 120 * PI)
        obs = dual(c_a, c_b, T)
        res = align_f_f_dual_freq(obs, F, F_PRIME, bounds)
        assert close(res.c_diff, c_a - c_b)
        assert close(2 * res.c_diff, obs.d_ba.d - obs.d_ab.d)
        half = (obs.d_ba.d - obs.d_ab.d) / 2
        c_i, c_ii = wrap_2pi(half), wrap_2pi(PI + half)
        assert abs(wrap_signed(c_i - c_ii)) == pytest.approx(PI)
        assert close(res.c_diff, c_i if res.branch is Branch.CASE_I else c_ii, 1e-12)
        assert close(res.T_est, T)
        # common offset on both panels leaves the estimate unchanged
        shift = rng.uniform(0, 2 * PI)
        res2 = align_f_f_dual_freq(dual(c_a + shift, c_b + shift, T), F, F_PRIME, bounds)
        assert close(res2.c_diff, res.c_diff)


@pytest.mark.parametrize("strategy", ["ba", "ab", "mean"])
def test_four_measurement_variant_noiseless(strategy):
    rng = np.random.default_rng(19)
    bounds = build_bounds(60 * LAM, F, F_PRIME)
    for _ in range(200):
        c_a, c_b = rng.uniform(0, 2 * PI, 2)
        T = rng.uniform(0, 120 * PI)
        res = align_f_f_dual_freq(dual(c_a, c_b, T, fourth=True), F, F_PRIME, bounds, delay_strategy=strategy)
        assert close(res.c_diff, c_a - c_b)
        assert res.diagnostics["delay_strategy"] == strategy


def test_three_measurements_reject_strategies_needing_fourth():
    with pytest.raises(ValueError):
        align_f_f_dual_freq(dual(0, 1, 10.0), F, F_PRIME, build_bounds(10, F, F_PRIME), delay_strategy="ab")


def test_bounds_too_small_raise_ambiguity_error():
    obs = dual(0.2, 1.1, 100 * PI)
    with pytest.raises(AmbiguityError):
        align_f_f_dual_freq(obs, F, F_PRIME, build_bounds(0.5 * LAM, F, F_PRIME))


def test_secondary_frequency_must_be_lower():
    obs = dual(0.2, 1.1, 10.0)
    with pytest.raises(ValueError):
        align_f_f_dual_freq(obs, F, F + 1e6, build_bounds(10, F, F_PRIME))


def test_tie_prefers_case_i():
    # T_hat exactly between the two branch lattices: pi/2 from each
    out = resolve_pi_ambiguity(0.0, 0.0, -PI / 2 * (1 - 0.975), 0.975, 3, 1)
    assert bool(out["tie"]) and int(out["branch"]) == 0


def test_vectorised_core_matches_scalar_api():
    rng = np.random.default_rng(20)
    bounds = build_bounds(60 * LAM, F, F_PRIME)
    cfg = MeasurementConfig(snr_db=15, n_samples=100, seed=4)
    obs = [dual(*rng.uniform(0, 2 * PI, 2), 100 * PI, cfg, trial=k) for k in range(50)]
    arr = resolve_pi_ambiguity(
        [o.d_ab.d for o in obs], [o.d_ba.d for o in obs], [o.d_ba_prime.d for o in obs],
        F_PRIME / F, bounds.m_max, bounds.n_max,
    )
    for k, o in enumerate(obs):
        res = align_f_f_dual_freq(o, F, F_PRIME, bounds)
        assert res.c_diff == arr["c_diff"][k]
        assert res.T_est == arr["T_est"][k]
