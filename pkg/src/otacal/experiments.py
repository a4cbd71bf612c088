"""Monte-Carlo RMSE-versus-SNR sweeps for aligning two F-calibrated panels.

Each trial draws random panel constants ``c_A`` and ``c_B``, measures the
link at ``f`` (both directions) and ``f'`` (one or both directions), and runs
the selected estimators. The unit-variance noise of a trial is drawn once
from the per-measurement streams and scaled to each SNR point, so every SNR
point sees the same scenes (common random numbers). Per-trial results are
reassembled in trial order before aggregation, which makes the output
independent of how trials are spread over worker processes.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .array import delay_radians, wavelength
from .calibrators import build_bounds, genie_estimate, resolve_pi_ambiguity
from .measurement import measurement_rng, noisy_phase, unit_noise
from .phase import wrap_signed

VARIANTS = ("three_meas", "four_meas", "genie", "genie_single")
CHUNK = 500
_SCENE_STREAM = 0x5CE4E


@dataclass(frozen=True)
class SweepConfig:
    snr_grid: tuple = tuple(range(16, 31, 2))
    trials: int = 10_000
    n_samples: int = 100
    f: float = 2e9
    f_prime: float = 2e9 - 50e6
    distance_wavelengths: float = 50.0
    dmax_wavelengths: float = 60.0
    seed: int = 1
    variants: tuple = ("three_meas", "four_meas", "genie")
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_grid", tuple(float(s) for s in self.snr_grid))
        object.__setattr__(self, "variants", tuple(self.variants))
        if not self.snr_grid:
            raise ValueError("snr_grid is empty")
        if any(b <= a for a, b in zip(self.snr_grid, self.snr_grid[1:])):
            raise ValueError("snr_grid must be strictly increasing")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if not 0 < self.f_prime < self.f:
            raise ValueError(f"need 0 < f' < f, got f={self.f}, f'={self.f_prime}")
        if self.distance_wavelengths < 0:
            raise ValueError("distance must be non-negative")
        if self.dmax_wavelengths < self.distance_wavelengths:
            raise ValueError("dmax must be at least the simulated distance")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown or not self.variants:
            raise ValueError(f"unknown or empty variants {sorted(unknown)}; choose from {VARIANTS}")

    @property
    def distance(self) -> float:
        return self.distance_wavelengths * wavelength(self.f)

    @property
    def d_max(self) -> float:
        return self.dmax_wavelengths * wavelength(self.f)

    @property
    def delay(self) -> float:
        return delay_radians(self.distance, self.f)


@dataclass
class SweepRow:
    snr_db: float
    rmse_deg: dict = field(default_factory=dict)
    branch_error_rate: float = 0.0


def _trial_scene(seed: int, trial: int) -> tuple[float, float]:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SCENE_STREAM, trial)))
    c_a, c_b = rng.uniform(0.0, 2 * np.pi, size=2)
    return c_a, c_b


def _trial_noise(cfg: SweepConfig, trial: int) -> np.ndarray:
    """Unit noise of the four link measurements, ordered AB@f, BA@f, BA@f', AB@f'."""
    keys = (("A", "B", cfg.f), ("B", "A", cfg.f), ("B", "A", cfg.f_prime), ("A", "B", cfg.f_prime))
    return np.stack([unit_noise(measurement_rng(cfg.seed, tx, rx, fr, trial), cfg.n_samples) for tx, rx, fr in keys])


def _simulate_chunk(cfg: SweepConfig, start: int, stop: int) -> dict:
    """Squared errors and branch flags for trials ``start..stop-1`` at every SNR."""
    trials = range(start, stop)
    consts = np.array([_trial_scene(cfg.seed, k) for k in trials])
    c_a, c_b = consts[:, 0], consts[:, 1]
    noise = np.stack([_trial_noise(cfg, k) for k in trials], axis=1)  # (4, trials, samples)
    T = cfg.delay
    ratio = cfg.f_prime / cfg.f
    T_p = ratio * T
    true = np.stack([c_b - c_a + T, c_a - c_b + T, c_a - c_b + T_p, c_b - c_a + T_p])
    truth = c_a - c_b
    bounds = build_bounds(cfg.d_max, cfg.f, cfg.f_prime)

    n_snr = len(cfg.snr_grid)
    sq = {v: np.empty((n_snr, len(trials))) for v in cfg.variants}
    wrong = np.zeros((n_snr, len(trials)), dtype=bool)
    branch_variant = next((v for v in ("three_meas", "four_meas") if v in cfg.variants), None)
    for s, snr in enumerate(cfg.snr_grid):
        d, _ = noisy_phase(true, snr, noise)
        d_ab, d_ba, d_ba_p, d_ab_p = d
        est = {}
        if "three_meas" in cfg.variants:
            est["three_meas"] = resolve_pi_ambiguity(d_ab, d_ba, d_ba_p, ratio, bounds.m_max, bounds.n_max)["c_diff"]
        if "four_meas" in cfg.variants:
            est["four_meas"] = resolve_pi_ambiguity(
                d_ab, d_ba, d_ba_p, ratio, bounds.m_max, bounds.n_max,
                d_ab_prime=d_ab_p, delay_strategy="mean", average_pairs=True,
            )["c_diff"]
        if "genie" in cfg.variants:
            est["genie"] = genie_estimate(d_ba, T, d_ab)
        if "genie_single" in cfg.variants:
            est["genie_single"] = genie_estimate(d_ba, T)
        for v, e in est.items():
            err = wrap_signed(e - truth)
            sq[v][s] = np.square(err)
            if v == branch_variant:
                # the two candidates are pi apart: the wrong one is > pi/2 off
                wrong[s] = np.abs(err) > np.pi / 2
    return {"sq": sq, "wrong": wrong}


def run_rmse_sweep(cfg: SweepConfig) -> list[SweepRow]:
    """RMSE of ``c_A - c_B`` per estimator and branch error rate at each SNR."""
    spans = [(a, min(a + CHUNK, cfg.trials)) for a in range(0, cfg.trials, CHUNK)]
    if cfg.workers > 1 and len(spans) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_simulate_chunk, [cfg] * len(spans), *zip(*spans)))
    else:
        parts = [_simulate_chunk(cfg, a, b) for a, b in spans]

    sq = {v: np.concatenate([p["sq"][v] for p in parts], axis=1) for v in cfg.variants}
    wrong = np.concatenate([p["wrong"] for p in parts], axis=1)
    rows = []
    for s, snr in enumerate(cfg.snr_grid):
        rmse = {v: float(np.degrees(math.sqrt(np.sum(sq[v][s]) / cfg.trials))) for v in cfg.variants}
        rows.append(SweepRow(snr_db=snr, rmse_deg=rmse, branch_error_rate=float(np.sum(wrong[s]) / cfg.trials)))
    return rows


def _fmt(x: float) -> str:
    return format(x, ".10g")


def csv_text(rows, variants) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["snr_db", *(f"rmse_{v}_deg" for v in variants), "branch_error_rate"])
    for row in rows:
        writer.writerow([_fmt(row.snr_db), *(_fmt(row.rmse_deg[v]) for v in variants), _fmt(row.branch_error_rate)])
    return buf.getvalue()


def emit_csv(rows, destination, variants=None) -> None:
    """Write sweep rows as CSV; ``destination`` is a path or a text stream."""
    rows = list(rows)
    if variants is None:
        variants = tuple(rows[0].rmse_deg) if rows else VARIANTS[:3]
    text = csv_text(rows, variants)
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text, encoding="utf-8")


def read_csv(source) -> list[SweepRow]:
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            rmse = {k[len("rmse_"):-len("_deg")]: float(v) for k, v in rec.items() if k.startswith("rmse_")}
            rows.append(SweepRow(float(rec["snr_db"]), rmse, float(rec["branch_error_rate"])))
        return rows


# ---------------------------------------------------------------- config files

_CONFIG_KEYS = {
    "snr_min": float,
    "snr_max": float,
    "snr_step": float,
    "snr_grid": str,
    "trials": int,
    "samples": int,
    "freq": float,
    "freq_offset": float,
    "distance_wavelengths": float,
    "dmax_wavelengths": float,
    "seed": int,
    "variants": str,
    "workers": int,
    "out": str,
}


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = _CONFIG_KEYS[key](value)
        except ValueError:
            raise ValueError(f"line {lineno}: bad value for {key}: {value!r}") from None
    return out


def snr_range(lo: float, hi: float, step: float) -> tuple:
    if step <= 0:
        raise ValueError("snr step must be positive")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    if n < 1:
        raise ValueError("empty SNR range")
    return tuple(round(lo + k * step, 10) for k in range(n))


def sweep_config_from(settings: dict, base: SweepConfig | None = None) -> SweepConfig:
    """Build a :class:`SweepConfig` from parsed config keys (CLI names)."""
    cfg = base or SweepConfig()
    kw = {}
    if "snr_grid" in settings:
        kw["snr_grid"] = tuple(float(s) for s in str(settings["snr_grid"]).split(","))
    elif {"snr_min", "snr_max", "snr_step"} & set(settings):
        lo = settings.get("snr_min", cfg.snr_grid[0])
        hi = settings.get("snr_max", cfg.snr_grid[-1])
        step = settings.get("snr_step", 2.0)
        kw["snr_grid"] = snr_range(lo, hi, step)
    simple = {"trials": "trials", "samples": "n_samples", "seed": "seed", "workers": "workers",
              "distance_wavelengths": "distance_wavelengths", "dmax_wavelengths": "dmax_wavelengths"}
    for key, name in simple.items():
        if key in settings:
            kw[name] = settings[key]
    f = settings.get("freq", cfg.f)
    if "freq" in settings or "freq_offset" in settings:
        offset = settings.get("freq_offset", cfg.f - cfg.f_prime)
        kw["f"] = f
        kw["f_prime"] = f - offset
    if "variants" in settings:
        kw["variants"] = tuple(v.strip() for v in str(settings["variants"]).split(",") if v.strip())
    if "distance_wavelengths" in kw and "dmax_wavelengths" not in kw:
        kw["dmax_wavelengths"] = max(cfg.dmax_wavelengths, kw["distance_wavelengths"])
    return replace(cfg, **kw)
