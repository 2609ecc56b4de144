#!/usr/bin/env python3
# 🌀 Eidosian Ensemble Forge
"""
Monte Carlo ensembles of killed unit diffusions.

Paths move by Euler-Maruyama steps X ← X + b̃(X)dt + √dt·Z. After each move
the boundary at 0 either reflects (p0 = 1, X ← |X|) or absorbs (p0 = 0, with
a Brownian-bridge correction for crossings between grid times), and the
killing clock fires with probability 1 − e^{−κ̃(X)dt}.

Every path owns counter-based Philox streams keyed by (master_seed, path
index), one substream each for the normals, the killing clock, the two
bridge tests, target hits and the starting point. Paths are grouped into
blocks only to vectorize the steps, so results are bit-identical for any
block size or number of worker threads, and a larger ensemble extends a
smaller one with the same seed.

Following Eidosian principles of:
- Recursive Refinement: Every estimate carries its own uncertainty
- Structure as Control: Reproducibility is a property of the layout, not of luck
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import SimulationError
from .global_info import setting
from .model import UnitDiffusionModel

logger = logging.getLogger("qsd_forge.mc")

ESCAPE_LEVEL = 1.0e150
BOOTSTRAP_TAG = 0xB007
Z_95 = 1.959963984540054


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 📦 Initial laws and configuration
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


@dataclass(frozen=True)
class PointMass:
    x: float

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return np.full(count, float(self.x))


@dataclass(frozen=True)
class CompactDensity:
    """
    A density with bounded support.

    ``kind="linear"``: ``density`` holds values at ``grid`` points, linear in
    between. ``kind="step"``: ``density[i]`` is constant on
    [grid[i], grid[i+1]).
    """

    grid: np.ndarray
    density: np.ndarray
    kind: str = "linear"

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        density = np.asarray(self.density, dtype=float)
        expected = grid.size if self.kind == "linear" else grid.size - 1
        if self.kind not in ("linear", "step") or density.size != expected or grid.size < 2:
            raise SimulationError(f"density table does not match its {grid.size}-point grid ({self.kind})")
        if not (np.all(np.isfinite(grid)) and np.all(np.diff(grid) > 0)):
            raise SimulationError("density grid must be finite and strictly increasing")
        if np.any(density < 0) or not np.all(np.isfinite(density)):
            raise SimulationError("density must be finite and nonnegative")
        total = float(self.cdf()[-1])
        if abs(total - 1.0) > 1e-9:
            raise SimulationError(f"density integrates to {total:.12g}, not 1")

    @classmethod
    def normalized(cls, grid: np.ndarray, values: np.ndarray, kind: str = "linear") -> "CompactDensity":
        grid = np.asarray(grid, dtype=float)
        values = np.clip(np.asarray(values, dtype=float), 0.0, None)
        cells = cls._cell_masses(grid, values, kind)
        return cls(grid, values / cells.sum(), kind)

    @staticmethod
    def _cell_masses(grid: np.ndarray, density: np.ndarray, kind: str) -> np.ndarray:
        widths = np.diff(grid)
        if kind == "step":
            return density * widths
        return 0.5 * (density[1:] + density[:-1]) * widths

    def cdf(self) -> np.ndarray:
        cells = self._cell_masses(np.asarray(self.grid, float), np.asarray(self.density, float), self.kind)
        return np.concatenate(([0.0], np.cumsum(cells)))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return np.interp(rng.random(count), self.cdf(), self.grid)


@dataclass(frozen=True)
class EmpiricalLaw:
    """Uniform resampling of recorded positions."""

    points: np.ndarray

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        points = np.asarray(self.points, dtype=float)
        if points.size == 0:
            raise SimulationError("cannot restart from an empty set of survivors")
        return points[rng.integers(0, points.size, count)]


InitialLaw = Union[PointMass, CompactDensity, EmpiricalLaw]


@dataclass(frozen=True)
class SimConfig:
    dt: float
    t_max: float
    n_paths: int
    master_seed: int
    initial: InitialLaw = field(default_factory=lambda: PointMass(1.0))
    record_interval: Optional[float] = None
    block_size: Optional[int] = None
    workers: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise SimulationError(f"dt must be positive, got {self.dt}")
        if not self.t_max >= self.dt:
            raise SimulationError(f"t_max={self.t_max} must be at least dt={self.dt}")
        if self.n_paths < 1:
            raise SimulationError(f"n_paths must be at least 1, got {self.n_paths}")
        if not 0 <= self.master_seed < 2**64:
            raise SimulationError("master_seed must fit in 64 unsigned bits")
        if isinstance(self.initial, PointMass) and not math.isfinite(self.initial.x):
            raise SimulationError("initial point must be finite")

    def resolved(self, config: Optional[Mapping[str, Any]] = None) -> "SimConfig":
        """Fill unset bookkeeping fields from the numerical settings."""
        return replace(
            self,
            record_interval=self.record_interval or float(setting(config, "record_interval")),
            block_size=self.block_size or int(setting(config, "block_size")),
            workers=self.workers or int(setting(config, "workers")),
        )

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def record_every(self) -> int:
        return max(1, int(round((self.record_interval or self.dt) / self.dt)))


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 📊 Results
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


@dataclass(frozen=True)
class SurvivalCurve:
    times: np.ndarray
    alive: np.ndarray
    n_paths: int
    death_times: Optional[np.ndarray] = field(default=None, repr=False)
    escaped: int = 0

    @property
    def fraction(self) -> np.ndarray:
        return self.alive / float(self.n_paths)

    @property
    def standard_error(self) -> np.ndarray:
        p = self.fraction
        return np.sqrt(p * (1.0 - p) / self.n_paths)

    def index_of(self, t: float) -> int:
        index = int(np.argmin(np.abs(self.times - t)))
        spacing = self.times[1] - self.times[0] if self.times.size > 1 else 1.0
        if abs(self.times[index] - t) > 1e-6 * spacing:
            raise SimulationError(f"t={t} is not on the record grid")
        return index


@dataclass(frozen=True)
class ConditionalHistogram:
    t: float
    bin_edges: np.ndarray
    probs: np.ndarray
    n_alive: int
    counts: np.ndarray
    overflow: float = 0.0  # conditional mass beyond the last edge

    @property
    def empty(self) -> bool:
        return self.n_alive == 0

    def mass_below(self, z: float) -> float:
        if self.empty:
            return math.nan
        edges = self.bin_edges
        full = edges[1:] <= z
        partial = (edges[:-1] < z) & ~full
        below = float(self.probs[full].sum())
        if partial.any():
            i = int(np.flatnonzero(partial)[0])
            below += float(self.probs[i]) * (z - edges[i]) / (edges[i + 1] - edges[i])
        return below


@dataclass(frozen=True)
class EnsembleResult:
    config: SimConfig
    curve: SurvivalCurve
    histograms: List[ConditionalHistogram]
    snapshots: Dict[float, np.ndarray] = field(repr=False)
    z_display: float = 1.0
    warnings: Tuple[str, ...] = ()

    def __iter__(self):
        return iter((self.curve, self.histograms))

    def survivors(self, t: float) -> EmpiricalLaw:
        return EmpiricalLaw(self.snapshots[t])


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class OmegaTable:
    xs: Tuple[float, ...]
    ts: Tuple[float, ...]
    omega: np.ndarray  # (len(xs), len(ts))
    se: np.ndarray
    reference: float = 1.0

    def rows(self) -> List[Tuple[float, float, float, float]]:
        return [
            (x, t, float(self.omega[i, j]), float(self.se[i, j]))
            for i, x in enumerate(self.xs)
            for j, t in enumerate(self.ts)
        ]


@dataclass(frozen=True)
class OmegaStar:
    x: float
    y: float
    hits: int
    n_paths: int
    hit_probability: float
    omega: float
    ci_low: float
    ci_high: float
    undecided: int = 0

    @property
    def infinite(self) -> bool:
        return math.isinf(self.omega)


@dataclass(frozen=True)
class OmegaBoundCheck:
    x: float
    t: float
    omega: float
    se: float
    lower: float  # ω_*(ref, x)^{-1}
    upper: float  # ω_*(x, ref)
    width: float
    status: str  # "pass", "flag" or "fail"


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 🎲 Path simulation
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


@dataclass
class _BlockOutcome:
    death_time: np.ndarray
    escaped: np.ndarray
    snapshots: List[np.ndarray]
    hit_time: Optional[np.ndarray] = None


# Substreams of a path's Philox key, separated through the top counter word.
STREAM_NORMAL, STREAM_KILL, STREAM_BRIDGE_LEFT, STREAM_BRIDGE_RIGHT, STREAM_HIT, STREAM_START = range(6)
DRAW_CHUNK = 512


def _path_rng(seed: int, path: int, stream: int) -> np.random.Generator:
    """Counter-based stream of one path: key (seed, path), counter offset by ``stream``."""
    key = np.array([seed, path], dtype=np.uint64)
    counter = np.array([0, 0, 0, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


class _PathDraws:
    """Per-path random streams of a block, drawn chunk by chunk for the live paths only."""

    def __init__(self, seed: int, start: int, count: int, streams: Sequence[int]):
        self.count = count
        self.rngs = {s: [_path_rng(seed, start + i, s) for i in range(count)] for s in streams}

    def chunk(self, stream: int, rows: np.ndarray, length: int) -> np.ndarray:
        out = np.empty((self.count, length))
        rngs = self.rngs[stream]
        for i in rows:
            out[i] = rngs[i].standard_normal(length) if stream == STREAM_NORMAL else rngs[i].random(length)
        return out


def _check_simulable(model: UnitDiffusionModel) -> None:
    if not model.left_finite:
        raise SimulationError("the left endpoint is at infinite scale distance; nothing to simulate against")
    if model.p0 not in (0.0, 1.0):
        raise SimulationError(f"only p0 in {{0, 1}} can be simulated, got p0={model.p0}")
    if math.isfinite(model.right) and model.pr not in (None, 0.0, 1.0):
        raise SimulationError(f"only pr in {{0, 1}} can be simulated, got pr={model.pr}")


def _run_block(
    model: UnitDiffusionModel,
    cfg: SimConfig,
    start: int,
    count: int,
    snapshot_steps: Sequence[int],
    target: Optional[float],
    epsilon: float,
) -> _BlockOutcome:
    absorbing = model.p0 == 0.0
    right = model.right
    right_rule = model.pr if math.isfinite(right) else None
    streams = [STREAM_NORMAL]
    if not model.kappa_is_zero:
        streams.append(STREAM_KILL)
    if absorbing:
        streams.append(STREAM_BRIDGE_LEFT)
    if right_rule == 0.0:
        streams.append(STREAM_BRIDGE_RIGHT)
    if target is not None:
        streams.append(STREAM_HIT)
    draws = _PathDraws(cfg.master_seed, start, count, streams)

    x = np.empty(count)
    for i in range(count):
        rng = _path_rng(cfg.master_seed, start + i, STREAM_START)
        x[i] = float(np.asarray(cfg.initial.sample(rng, 1), dtype=float)[0])
    dt = cfg.dt
    root_dt = math.sqrt(dt)

    active = np.ones(count, dtype=bool)
    alive = np.ones(count, dtype=bool)
    escaped = np.zeros(count, dtype=bool)
    death_time = np.full(count, np.inf)
    hit_time = np.full(count, np.inf) if target is not None else None
    wanted = set(snapshot_steps)
    recorded: Dict[int, np.ndarray] = {}
    if 0 in wanted:
        recorded[0] = x.copy()

    chunk_start = 1
    while chunk_start <= cfg.n_steps:
        length = min(DRAW_CHUNK, cfg.n_steps - chunk_start + 1)
        rows = np.flatnonzero(active)
        drawn = {s: draws.chunk(s, rows, length) for s in streams}
        for offset in range(length):
            step = chunk_start + offset
            if not active.any():
                if step in wanted:
                    recorded[step] = x[alive & ~escaped].copy()
                continue

            idx = np.flatnonzero(active)
            old = x[idx]
            with np.errstate(all="ignore"):
                new = old + model.drift(old) * dt + root_dt * drawn[STREAM_NORMAL][idx, offset]
            killed = np.zeros(idx.size, dtype=bool)
            when = np.full(idx.size, step * dt)

            if absorbing:
                crossed = new <= 0.0
                with np.errstate(divide="ignore", invalid="ignore"):
                    frac = np.where(crossed, old / (old - new), 1.0)
                when = np.where(crossed, (step - 1 + np.clip(frac, 0.0, 1.0)) * dt, when)
                bridge = np.exp(-2.0 * np.maximum(old, epsilon) * np.maximum(new, epsilon) / dt)
                killed |= crossed | (drawn[STREAM_BRIDGE_LEFT][idx, offset] < bridge)
            else:
                new = np.abs(new)

            if right_rule == 1.0:
                new = np.where(new > right, 2.0 * right - new, new)
            elif right_rule == 0.0:
                crossed_right = new >= right
                gap_old, gap_new = np.maximum(right - old, epsilon), np.maximum(right - new, epsilon)
                bridge_right = np.exp(-2.0 * gap_old * gap_new / dt)
                killed |= crossed_right | (drawn[STREAM_BRIDGE_RIGHT][idx, offset] < bridge_right)

            if target is not None and hit_time is not None:
                crossing = (old - target) * (new - target) <= 0.0
                near = np.exp(-2.0 * np.abs(old - target) * np.abs(new - target) / dt)
                hit = ~killed & (crossing | (drawn[STREAM_HIT][idx, offset] < near))
                hit_time[idx[hit]] = step * dt
                active[idx[hit]] = False

            if not model.kappa_is_zero:
                with np.errstate(all="ignore"):
                    rate = model.kappa(new)
                clock = -np.expm1(-np.where(np.isfinite(rate), rate, np.inf) * dt)
                killed |= drawn[STREAM_KILL][idx, offset] < clock
            if target is not None:
                killed &= active[idx]

            dead = idx[killed]
            death_time[dead] = when[killed]
            alive[dead] = False
            active[dead] = False

            moving = idx[~killed]
            x[moving] = new[~killed]
            overflow = moving[~(np.abs(x[moving]) < ESCAPE_LEVEL)]
            if overflow.size:
                escaped[overflow] = True
                active[overflow] = False

            if step in wanted:
                recorded[step] = x[alive & ~escaped].copy()
        chunk_start += length

    snapshots = [recorded.get(step, np.empty(0)) for step in snapshot_steps]
    return _BlockOutcome(death_time, escaped, snapshots, hit_time)


def _run(
    model: UnitDiffusionModel,
    cfg: SimConfig,
    snapshot_steps: Sequence[int],
    target: Optional[float],
    config: Optional[Mapping[str, Any]],
) -> List[_BlockOutcome]:
    _check_simulable(model)
    block_size = int(cfg.block_size or setting(config, "block_size"))
    epsilon = float(setting(config, "bridge_epsilon"))
    blocks = [(start, min(block_size, cfg.n_paths - start)) for start in range(0, cfg.n_paths, block_size)]

    def work(item: Tuple[int, int]) -> _BlockOutcome:
        return _run_block(model, cfg, item[0], item[1], snapshot_steps, target, epsilon)

    workers = int(cfg.workers or setting(config, "workers"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, blocks))
    return [work(item) for item in blocks]


def _histogram(t: float, positions: np.ndarray, edges: np.ndarray) -> ConditionalHistogram:
    n_alive = int(positions.size)
    counts = np.histogram(positions, bins=edges)[0]
    # np.histogram closes the last bin; points equal to the top edge stay inside
    overflow_count = int(np.count_nonzero(positions > edges[-1]))
    if n_alive == 0:
        return ConditionalHistogram(t, edges, np.zeros(edges.size - 1), 0, counts, 0.0)
    probs = counts / float(n_alive)
    return ConditionalHistogram(t, edges, probs, n_alive, counts, overflow_count / float(n_alive))


def conditional_histograms(
    snapshots: Mapping[float, np.ndarray],
    z_display: Optional[float] = None,
    bins: int = 128,
) -> Tuple[List[ConditionalHistogram], float]:
    """Histograms of survivor positions on common bins over [0, z_display]."""
    times = sorted(snapshots)
    if z_display is None:
        first = snapshots[times[0]] if times else np.empty(0)
        z_display = float(np.percentile(first, 99.9)) if first.size else 1.0
        z_display = z_display if z_display > 0 else 1.0
    edges = np.linspace(0.0, z_display, bins + 1)
    return [_histogram(t, snapshots[t], edges) for t in times], z_display


def simulate_ensemble(
    model: UnitDiffusionModel,
    cfg: SimConfig,
    snapshot_times: Sequence[float] = (),
    z_display: Optional[float] = None,
    config: Optional[Mapping[str, Any]] = None,
) -> EnsembleResult:
    """
    Simulate ``cfg.n_paths`` killed paths.

    Args:
        model: Unit-diffusion model with p0 ∈ {0, 1}
        cfg: Simulation configuration
        snapshot_times: Times at which survivor positions are histogrammed
        z_display: Upper edge of the histogram bins (default: the 99.9th
            percentile of survivors at the first snapshot)
        config: Numerical settings

    Returns:
        EnsembleResult with the survival curve and conditional histograms
    """
    cfg = cfg.resolved(config)
    steps = [int(round(t / cfg.dt)) for t in snapshot_times]
    if any(step < 0 or step > cfg.n_steps for step in steps):
        raise SimulationError(f"snapshot times must lie in [0, {cfg.t_max}]")
    logger.info(f"🎲 Simulating {cfg.n_paths} paths, dt={cfg.dt:g}, t_max={cfg.t_max:g}, seed={cfg.master_seed}")

    outcomes = _run(model, cfg, steps, None, config)
    death_time = np.concatenate([o.death_time for o in outcomes])
    escaped = np.concatenate([o.escaped for o in outcomes])
    times = np.arange(0, cfg.n_steps + 1, cfg.record_every) * cfg.dt
    ordered = np.sort(death_time)
    alive = cfg.n_paths - np.searchsorted(ordered, times, side="right")
    curve = SurvivalCurve(times, alive.astype(np.int64), cfg.n_paths, death_time, int(escaped.sum()))

    snapshots = {
        float(t): np.concatenate([o.snapshots[i] for o in outcomes]) for i, t in enumerate(snapshot_times)
    }
    histograms, z_display = conditional_histograms(snapshots, z_display, int(setting(config, "histogram_bins")))

    warnings: List[str] = []
    if curve.escaped:
        message = f"{curve.escaped} paths overflowed and are counted as alive but censored"
        logger.warning(f"⚠️ {message}")
        warnings.append(message)
    for histogram in histograms:
        if histogram.empty:
            message = f"no survivors at t={histogram.t:g}; histogram is empty"
            logger.warning(f"⚠️ {message}")
            warnings.append(message)
    logger.info(f"✅ Survival fraction at t={times[-1]:g}: {curve.fraction[-1]:.6f}")
    return EnsembleResult(cfg, curve, histograms, snapshots, z_display, tuple(warnings))


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# 📐 Estimators
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━


def wilson_interval(successes: int, n: int, z: float = Z_95) -> Tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denominator = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denominator
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denominator
    return max(0.0, centre - half), min(1.0, centre + half)


def _window_slope(times: np.ndarray, alive: np.ndarray, n: int) -> float:
    return float(np.polyfit(times, -np.log(alive / float(n)), 1)[0])


def estimate_akr(
    curve: SurvivalCurve,
    fit_window: Tuple[float, float],
    resamples: Optional[int] = None,
    seed: int = 0,
    config: Optional[Mapping[str, Any]] = None,
) -> Estimate:
    """
    Asymptotic killing rate η from the slope of −log P{τ_∂ > t}.

    The confidence interval resamples paths (never time points), with
    sub-seeds derived from ``seed``.

    Raises:
        SimulationError: Fewer than 10 record points in the window, or
            extinction inside it
    """
    t1, t2 = fit_window
    inside = (curve.times >= t1 - 1e-12) & (curve.times <= t2 + 1e-12)
    if inside.sum() < 10:
        raise SimulationError(f"fit window [{t1}, {t2}] holds fewer than 10 record points")
    times = curve.times[inside]
    alive = curve.alive[inside]
    if np.any(alive == 0):
        raise SimulationError(f"every path died inside the fit window [{t1}, {t2}]")
    eta = _window_slope(times, alive, curve.n_paths)

    resamples = int(resamples if resamples is not None else setting(config, "bootstrap_resamples"))
    if curve.death_times is None or resamples < 2:
        return Estimate(eta, math.nan, math.nan, math.nan)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, BOOTSTRAP_TAG])))
    deaths = curve.death_times
    n = deaths.size
    slopes: List[float] = []
    for _ in range(resamples):
        sample = np.sort(deaths[rng.integers(0, n, n)])
        counts = n - np.searchsorted(sample, times, side="right")
        if np.all(counts > 0):
            slopes.append(_window_slope(times, counts, n))
    if len(slopes) < 2:
        return Estimate(eta, math.nan, math.nan, math.nan)
    values = np.asarray(slopes)
    low, high = np.percentile(values, [2.5, 97.5])
    return Estimate(eta, float(values.std(ddof=1)), float(low), float(high))


def estimate_a(curve: SurvivalCurve, t: float, r: float) -> Estimate:
    """a_t(ν, r) = P{τ_∂ > t + r | τ_∂ > t} with a Wilson interval."""
    if r == 0:
        return Estimate(1.0, 0.0, 1.0, 1.0)
    start = int(curve.alive[curve.index_of(t)])
    if start == 0:
        raise SimulationError(f"no survivors at t={t}")
    later = int(curve.alive[curve.index_of(t + r)])
    value = later / start
    low, high = wilson_interval(later, start)
    return Estimate(value, math.sqrt(value * (1.0 - value) / start), low, high)


def estimate_omega(
    model: UnitDiffusionModel,
    cfg: SimConfig,
    x_list: Sequence[float],
    t_list: Sequence[float],
    reference: float = 1.0,
    config: Optional[Mapping[str, Any]] = None,
) -> OmegaTable:
    """
    ω_t(x) = P_x{τ_∂ > t}/P_ref{τ_∂ > t} with common random numbers.

    Every starting point is simulated with the same master seed, so path i
    of each run shares its noise; the delta-method variance uses the
    per-path joint survival indicators.
    """
    runs: Dict[float, np.ndarray] = {}
    for x in sorted(set([reference, *x_list])):
        result = simulate_ensemble(model, replace(cfg, initial=PointMass(x)), config=config)
        runs[x] = result.curve.death_times  # type: ignore[assignment]

    omega = np.full((len(x_list), len(t_list)), np.nan)
    se = np.full_like(omega, np.nan)
    base = runs[reference]
    n = float(cfg.n_paths)
    for j, t in enumerate(t_list):
        alive_ref = base > t
        p_ref = alive_ref.mean()
        if p_ref == 0:
            raise SimulationError(f"no reference paths survive to t={t}")
        for i, x in enumerate(x_list):
            alive_x = runs[x] > t
            p_x = alive_x.mean()
            ratio = p_x / p_ref
            covariance = (np.mean(alive_x & alive_ref) - p_x * p_ref) / n
            variance = (p_x * (1 - p_x) / n + ratio**2 * p_ref * (1 - p_ref) / n - 2 * ratio * covariance) / p_ref**2
            omega[i, j] = ratio
            se[i, j] = math.sqrt(max(variance, 0.0))
    return OmegaTable(tuple(x_list), tuple(t_list), omega, se, reference)


def estimate_omega_star(
    model: UnitDiffusionModel,
    cfg: SimConfig,
    x: float,
    y: float,
    config: Optional[Mapping[str, Any]] = None,
) -> OmegaStar:
    """
    ω_*(x, y) = 1/P_y{τ_x < τ_∂}.

    Paths start at y and run until they reach x, die, or hit ``cfg.t_max``;
    paths still undecided at the horizon count as misses. With no hits the
    estimate is +inf and the interval is one-sided.
    """
    if x == y:
        return OmegaStar(x, y, cfg.n_paths, cfg.n_paths, 1.0, 1.0, 1.0, 1.0)
    cfg = replace(cfg, initial=PointMass(y)).resolved(config)
    outcomes = _run(model, cfg, [], x, config)
    hit_time = np.concatenate([o.hit_time for o in outcomes if o.hit_time is not None])
    death_time = np.concatenate([o.death_time for o in outcomes])
    hits = int(np.count_nonzero(np.isfinite(hit_time)))
    undecided = int(np.count_nonzero(~np.isfinite(hit_time) & ~np.isfinite(death_time)))
    n = cfg.n_paths
    if undecided > 0.01 * n:
        logger.warning(f"⚠️ {undecided} of {n} paths neither hit {x:g} nor died by t={cfg.t_max:g}")

    p = hits / n
    if hits == 0:
        p_upper = 1.0 - 0.05 ** (1.0 / n)
        return OmegaStar(x, y, 0, n, 0.0, math.inf, 1.0 / p_upper, math.inf, undecided)
    low, high = wilson_interval(hits, n)
    return OmegaStar(x, y, hits, n, p, 1.0 / p, 1.0 / high, 1.0 / low if low > 0 else math.inf, undecided)


def omega_bounds(
    model: UnitDiffusionModel,
    cfg: SimConfig,
    x_list: Sequence[float],
    t_list: Sequence[float],
    reference: float = 1.0,
    config: Optional[Mapping[str, Any]] = None,
) -> List[OmegaBoundCheck]:
    """
    Check ω_*(ref, x)^{-1} ≤ ω_t(x) ≤ ω_*(x, ref) for every (x, t).

    A violation by more than ``omega_flag_se`` combined standard errors is
    flagged, by more than ``omega_fail_se`` it fails.
    """
    flag_level = float(setting(config, "omega_flag_se"))
    fail_level = float(setting(config, "omega_fail_se"))
    table = estimate_omega(model, cfg, x_list, t_list, reference, config)
    checks: List[OmegaBoundCheck] = []
    for i, x in enumerate(x_list):
        back = estimate_omega_star(model, cfg, reference, x, config)  # P_x{τ_ref < τ_∂}
        out = estimate_omega_star(model, cfg, x, reference, config)  # 1/P_ref{τ_x < τ_∂}
        n = float(cfg.n_paths)
        lower = back.hit_probability
        lower_se = math.sqrt(lower * (1 - lower) / n)
        upper = out.omega
        p_out = out.hit_probability
        upper_se = math.sqrt(p_out * (1 - p_out) / n) / p_out**2 if p_out > 0 else math.inf
        for j, t in enumerate(t_list):
            value, value_se = float(table.omega[i, j]), float(table.se[i, j])
            below = (lower - value) / math.hypot(value_se, lower_se) if lower > value else 0.0
            above = (value - upper) / math.hypot(value_se, upper_se) if value > upper else 0.0
            worst = max(below, above)
            status = "pass" if worst <= flag_level else ("flag" if worst <= fail_level else "fail")
            if status != "pass":
                logger.warning(f"⚠️ ω_{t:g}({x:g})={value:.4g} outside [{lower:.4g}, {upper:.4g}] by {worst:.2f} SE")
            checks.append(OmegaBoundCheck(x, t, value, value_se, lower, upper, upper - lower, status))
    return checks


def restart_law(histogram: ConditionalHistogram) -> CompactDensity:
    """The conditional law at a snapshot as a step density on [0, z_display]."""
    if histogram.empty:
        raise SimulationError(f"no survivors at t={histogram.t:g} to restart from")
    if histogram.overflow > 1e-3:
        logger.warning(f"⚠️ Dropping conditional mass {histogram.overflow:.3g} beyond the display window")
    widths = np.diff(histogram.bin_edges)
    return CompactDensity.normalized(histogram.bin_edges, histogram.probs / widths, kind="step")
