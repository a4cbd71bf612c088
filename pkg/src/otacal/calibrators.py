"""Estimators for intra-array calibration and cross-array phase alignment.

Every estimator consumes measurement records only; hardware truth never
enters here. Measurements are identified by the ``tx``/``rx`` ids they carry.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .array import DelayTable, delay_radians
from .measurement import DualFrequencyObservation, MeasurementRecord
from .phase import TWO_PI, circular_mean, wrap_2pi, wrap_period

log = logging.getLogger(__name__)


class DisconnectedGraphError(ValueError):
    """The measurement graph does not reach every antenna."""


class AmbiguityError(RuntimeError):
    """No candidate delay within the search bounds matches the coarse delay estimate."""


class Branch(str, Enum):
    CASE_I = "case_i"
    CASE_II = "case_ii"


@dataclass(frozen=True)
class FCalibration:
    """Full calibration: ``r_i - r_ref``, ``t_i - t_ref`` and ``r_i - t_i`` per antenna."""

    reference: object
    r_diff: dict
    t_diff: dict
    rt_offset: dict


@dataclass(frozen=True)
class RCalibration:
    """Reciprocity calibration: ``rho[i] = (t_i + r_i) - (t_ref + r_ref)``."""

    reference: object
    rho: dict

    def between(self, i, j) -> float:
        """``t_j - t_i + r_j - r_i`` for any two calibrated antennas."""
        return wrap_2pi(self.rho[j] - self.rho[i])

    def precompensation(self) -> dict:
        """Transmit precompensation ``t_i + r_i + c`` for the unknown common ``c``."""
        return dict(self.rho)


@dataclass(frozen=True)
class SearchBounds:
    d_max: float
    m_max: int
    n_max: int


@dataclass(frozen=True)
class AlignmentResult:
    c_diff: float
    T_est: float
    branch: Branch
    residual: float
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------- F-calibration


def _directed(records) -> dict:
    out = {}
    for rec in records:
        out[(rec.tx, rec.rx)] = rec.d
    return out


def f_calibrate_known_coupling(records, T_known: DelayTable) -> FCalibration:
    """F-calibrate an array whose coupling delays are known.

    Needs bidirectional measurements among the first three antennas of
    ``T_known.ids`` and, for every further antenna ``k``, between ``k`` and
    the first two. The first id is the reference.
    """
    ids = list(T_known.ids)
    if len(ids) < 3:
        raise ValueError("F-calibration with known coupling needs at least three antennas")
    raw = _directed(records)

    def d(i, j):
        if (i, j) not in raw:
            raise ValueError(f"missing measurement {i!r} -> {j!r}")
        try:
            T = T_known[i, j]
        except ValueError:
            raise ValueError(f"no known delay for pair ({i!r}, {j!r})") from None
        return raw[(i, j)] - T

    ref, second, third = ids[:3]
    rt_ref = wrap_2pi(d(second, ref) + d(ref, third) - d(second, third))
    r_diff, t_diff, rt_offset = {ref: 0.0}, {ref: 0.0}, {ref: rt_ref}
    for k in ids[1:]:
        helper = third if k == second else second
        r_k = wrap_2pi(d(helper, k) - d(helper, ref))
        t_k = wrap_2pi(d(ref, helper) - d(k, helper))
        r_diff[k] = r_k
        t_diff[k] = t_k
        rt_offset[k] = wrap_2pi(r_k + rt_ref - t_k)
    return FCalibration(reference=ref, r_diff=r_diff, t_diff=t_diff, rt_offset=rt_offset)


# ---------------------------------------------------------------- R-calibration


def r_calibrate_pairwise(pairs, reference=None, antennas=None) -> RCalibration:
    """R-calibrate from bidirectional pairs ``(d_ij, d_ji)`` forming a connected graph.

    Reciprocity differences are accumulated along a breadth-first spanning
    tree rooted at ``reference``. ``antennas`` lists every id that must be
    reached; by default all ids seen in ``pairs``.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one bidirectional measurement")
    edges: dict = {}
    for fwd, bwd in pairs:
        if (fwd.tx, fwd.rx) != (bwd.rx, bwd.tx):
            raise ValueError(f"records {fwd.tx}->{fwd.rx} and {bwd.tx}->{bwd.rx} are not a bidirectional pair")
        i, j = fwd.tx, fwd.rx
        # (t_j + r_j) - (t_i + r_i) = d_ij - d_ji
        step = fwd.d - bwd.d
        edges.setdefault(i, []).append((j, step))
        edges.setdefault(j, []).append((i, -step))
    if reference is None:
        reference = pairs[0][0].tx
    wanted = set(edges) if antennas is None else set(antennas)
    wanted.add(reference)

    rho = {reference: 0.0}
    queue = deque([reference])
    while queue:
        i = queue.popleft()
        for j, step in edges.get(i, ()):
            if j not in rho:
                rho[j] = wrap_2pi(rho[i] + step)
                queue.append(j)
    missing = wanted - set(rho)
    if missing:
        raise DisconnectedGraphError(f"measurement graph does not reach {sorted(map(repr, missing))}")
    return RCalibration(reference=reference, rho={k: rho[k] for k in rho if k in wanted})


def align_r_r(cal_a: RCalibration, cal_b: RCalibration, pair) -> RCalibration:
    """Join two R-calibrated arrays with one bidirectional measurement ``(d_ab, d_ba)``.

    ``d_ab`` must go from an antenna of A to an antenna of B. The joint
    calibration keeps A's reference.
    """
    d_ab, d_ba = pair
    a, b = d_ab.tx, d_ab.rx
    if (d_ba.tx, d_ba.rx) != (b, a):
        raise ValueError("pair must be (A_i -> B_j, B_j -> A_i)")
    if a not in cal_a.rho or b not in cal_b.rho:
        raise ValueError("pair must connect an antenna of A to an antenna of B")
    if set(cal_a.rho) & set(cal_b.rho):
        raise ValueError("arrays A and B share antenna ids")
    cross = d_ab.d - d_ba.d  # (t_b + r_b) - (t_a + r_a)
    offset = cal_a.rho[a] + cross - cal_b.rho[b]
    rho = dict(cal_a.rho)
    rho.update({k: wrap_2pi(v + offset) for k, v in cal_b.rho.items()})
    return RCalibration(reference=cal_a.reference, rho=rho)


# ---------------------------------------------------------------- F-F alignment


def align_f_f_to_r(pair) -> float:
    """Twice the inter-panel constant, ``2(c_A - c_B)``, from ``(d_AB, d_BA)``."""
    d_ab, d_ba = pair
    return wrap_2pi(d_ba.d - d_ab.d)


def genie_estimate(d_ba, T, d_ab=None):
    """``c_A - c_B`` given the true delay; vectorised over array inputs.

    With ``d_ab`` the two single-direction estimates are averaged on the circle.
    """
    from_ba = np.asarray(d_ba) - np.asarray(T)
    if d_ab is None:
        return wrap_2pi(from_ba)
    from_ab = np.asarray(T) - np.asarray(d_ab)
    z = np.exp(1j * from_ba) + np.exp(1j * from_ab)
    return wrap_2pi(np.angle(z))


def align_f_f_genie(d_ba: MeasurementRecord, T_true: float, d_ab: MeasurementRecord | None = None) -> float:
    """Baseline that is told the delay: one measurement suffices."""
    return genie_estimate(d_ba.d, T_true, None if d_ab is None else d_ab.d)


def build_bounds(d_max: float, f: float, f_prime: float) -> SearchBounds:
    """Integer search ranges covering every delay up to ``d_max`` metres."""
    if not d_max > 0:
        raise ValueError(f"d_max must be positive, got {d_max}")
    if not 0 < f_prime < f:
        raise ValueError(f"need 0 < f' < f, got f={f}, f'={f_prime}")
    cycles = delay_radians(d_max, f) / TWO_PI
    # absorb float noise from distances given in wavelengths
    m_max = math.ceil(cycles - 1e-9) + 1
    n_max = math.floor(cycles * (1.0 - f_prime / f) + 1e-9) + 1
    return SearchBounds(d_max=d_max, m_max=m_max, n_max=n_max)


def coarse_delay(d, d_prime, ratio):
    """Delay at ``f`` modulo ``2*pi/(1 - f'/f)`` from same-direction phases at ``f`` and ``f'``."""
    period = TWO_PI / (1.0 - ratio)
    return wrap_period((np.asarray(d) - np.asarray(d_prime)) / (1.0 - ratio), period)


def resolve_pi_ambiguity(
    d_ab,
    d_ba,
    d_ba_prime,
    ratio: float,
    m_max: int,
    n_max: int,
    d_ab_prime=None,
    delay_strategy: str = "ba",
    average_pairs: bool = False,
) -> dict:
    """Dual-frequency resolution of the mod-pi ambiguity in ``c_A - c_B``.

    Array-in, array-out over any leading shape. Returns a dict with keys
    ``c_diff``, ``T_est``, ``branch`` (0 for case i, 1 for case ii),
    ``residual``, ``other_residual``, ``tie``, ``m``, ``n``, ``T_hat``.

    The two delay candidates ``(d_ab + d_ba)/2`` and that plus pi are laid on
    a 2*pi lattice and matched against the coarse estimate ``T_hat`` laid on
    its own lattice of period ``2*pi/(1 - ratio)``; the nearest pair decides
    the branch. Halving the raw (unwrapped) sum and difference keeps each
    ``c`` candidate equal to its delay candidate minus ``d_ab``.
    """
    d_ab = np.asarray(d_ab, dtype=float)
    d_ba = np.asarray(d_ba, dtype=float)
    d_ba_prime = np.asarray(d_ba_prime, dtype=float)
    if not 0 < ratio < 1:
        raise ValueError(f"f'/f must lie in (0, 1), got {ratio}")
    if delay_strategy not in ("ba", "ab", "mean"):
        raise ValueError(f"unknown delay strategy {delay_strategy!r}")
    if (delay_strategy != "ba" or average_pairs) and d_ab_prime is None:
        raise ValueError("this variant needs the reverse measurement at f'")

    half = (d_ba - d_ab) / 2.0
    c_cand = np.stack([wrap_2pi(half), wrap_2pi(half + np.pi)], axis=-1)
    T_i = wrap_2pi((d_ab + d_ba) / 2.0)
    T_cand = np.stack([T_i, wrap_2pi(T_i + np.pi)], axis=-1)

    period = TWO_PI / (1.0 - ratio)
    if delay_strategy == "ba":
        T_hat = coarse_delay(d_ba, d_ba_prime, ratio)
    elif delay_strategy == "ab":
        T_hat = coarse_delay(d_ab, d_ab_prime, ratio)
    else:
        both = np.stack([coarse_delay(d_ba, d_ba_prime, ratio), coarse_delay(d_ab, d_ab_prime, ratio)], axis=-1)
        T_hat = circular_mean(both, axis=-1, period=period)
    T_hat = np.asarray(T_hat, dtype=float)

    m = np.arange(m_max + 1)
    n = np.arange(n_max + 1)
    lattice = T_cand[..., :, None] + TWO_PI * m  # (..., 2, M)
    target = T_hat[..., None] + period * n  # (..., N)
    res = np.abs(lattice[..., :, :, None] - target[..., None, None, :])  # (..., 2, M, N)
    flat = res.reshape(res.shape[:-3] + (2, -1))
    best_idx = flat.argmin(axis=-1)
    best = np.take_along_axis(flat, best_idx[..., None], axis=-1)[..., 0]  # (..., 2)
    branch = np.where(best[..., 1] < best[..., 0], 1, 0)
    tie = best[..., 0] == best[..., 1]
    win_idx = np.take_along_axis(best_idx, branch[..., None], axis=-1)[..., 0]
    m_win, n_win = np.divmod(win_idx, n_max + 1)

    T_win = np.take_along_axis(T_cand, branch[..., None], axis=-1)[..., 0]
    if average_pairs:
        # 2(c_A - c_B) is seen at both frequencies; average there, then halve
        d_ab_prime = np.asarray(d_ab_prime, dtype=float)
        doubled = np.stack([wrap_2pi(d_ba - d_ab), wrap_2pi(d_ba_prime - d_ab_prime)], axis=-1)
        avg_half = circular_mean(doubled, axis=-1) / 2.0
        alt = np.stack([wrap_2pi(avg_half), wrap_2pi(avg_half + np.pi)], axis=-1)
        # keep the labelling of the f-only candidates
        swap = np.abs(np.angle(np.exp(1j * (alt[..., 0] - c_cand[..., 0])))) > np.pi / 2
        c_cand = np.where(swap[..., None], alt[..., ::-1], alt)

    return {
        "c_diff": np.take_along_axis(c_cand, branch[..., None], axis=-1)[..., 0],
        "T_est": T_win + TWO_PI * m_win,
        "branch": branch,
        "residual": np.take_along_axis(best, branch[..., None], axis=-1)[..., 0],
        "other_residual": np.take_along_axis(best, 1 - branch[..., None], axis=-1)[..., 0],
        "tie": tie,
        "m": m_win,
        "n": n_win,
        "T_hat": T_hat,
    }


def align_f_f_dual_freq(
    obs: DualFrequencyObservation,
    f: float,
    f_prime: float,
    bounds: SearchBounds,
    *,
    delay_strategy: str | None = None,
    max_residual: float = math.pi / 2,
) -> AlignmentResult:
    """Estimate ``c_A - c_B`` between two F-calibrated panels without knowing the delay.

    With the reverse ``f'`` measurement present the ``c`` candidates are
    averaged over both frequencies and the coarse delay defaults to the
    mean of both directions; otherwise the ``B -> A`` pair is used.

    Raises
    ------
    AmbiguityError
        If the best lattice match is worse than ``max_residual``, meaning the
        bounds do not cover the actual delay.
    """
    if not 0 < f_prime < f:
        raise ValueError(f"need 0 < f' < f, got f={f}, f'={f_prime}")
    four = obs.d_ab_prime is not None
    if delay_strategy is None:
        delay_strategy = "mean" if four else "ba"
    out = resolve_pi_ambiguity(
        obs.d_ab.d,
        obs.d_ba.d,
        obs.d_ba_prime.d,
        f_prime / f,
        bounds.m_max,
        bounds.n_max,
        d_ab_prime=obs.d_ab_prime.d if four else None,
        delay_strategy=delay_strategy,
        average_pairs=four,
    )
    residual = float(out["residual"])
    if residual > max_residual:
        raise AmbiguityError(
            f"best lattice residual {residual:.3g} rad exceeds {max_residual:.3g}; "
            f"widen the search bounds (d_max={bounds.d_max} m)"
        )
    tie = bool(out["tie"])
    if tie:
        log.warning("both ambiguity branches fit equally well; choosing case i")
    branch = Branch.CASE_II if int(out["branch"]) else Branch.CASE_I
    return AlignmentResult(
        c_diff=float(out["c_diff"]),
        T_est=float(out["T_est"]),
        branch=branch,
        residual=residual,
        diagnostics={
            "T_hat": float(out["T_hat"]),
            "m": int(out["m"]),
            "n": int(out["n"]),
            "other_residual": float(out["other_residual"]),
            "tie": tie,
            "delay_strategy": delay_strategy,
            "unambiguous_delay_period": TWO_PI / (1.0 - f_prime / f),
        },
    )
