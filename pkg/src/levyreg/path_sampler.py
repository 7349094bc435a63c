"""Realized Levy paths: sampling, first-jump decomposition, resampling.

A LevyPath is the simulable truncation of a driving Levy process: a drift
rate plus a finite, time-sorted jump list, optionally with a piecewise-linear
Brownian skeleton. The sampled process IS this truncated object; statements
about infinite activity are studied along increasing truncation levels.

The decomposition/resampling pair implements the stratification device: fix
everything except the first jump time T landing in a marked size window;
conditionally, T is uniform on [0, T2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .levy_spec import DensityForm, LevyTriplet, _spec_atoms, total_rate
from .quadrature import shell_integral
from .rng import RngStream

#: Brownian skeleton resolution per unit time unless a scenario refines it.
DEFAULT_BROWNIAN_CELLS_PER_UNIT = 4096


class NotEnoughMarkedJumps(ValueError):
    """Raised when a path has fewer than two jumps in the marked window."""


@dataclass(frozen=True)
class BrownianSkeleton:
    """Piecewise-linear interpolation of a Brownian path on a uniform grid."""

    times: np.ndarray
    values: np.ndarray
    variance_rate: float

    def value(self, t) -> np.ndarray | float:
        return np.interp(t, self.times, self.values)

    @property
    def cells(self) -> int:
        return len(self.times) - 1


@dataclass(frozen=True)
class LevyPath:
    """Cadlag driver realization: drift line + jumps (+ Brownian skeleton)."""

    horizon: float
    drift_rate: float
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    brownian: BrownianSkeleton | None = None

    def __post_init__(self):
        t = np.asarray(self.jump_times, dtype=float)
        s = np.asarray(self.jump_sizes, dtype=float)
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "jump_sizes", s)
        if self.horizon <= 0.0:
            raise ValueError("horizon must be > 0")
        if t.shape != s.shape:
            raise ValueError("jump times and sizes must align")
        if t.size:
            if np.any(np.diff(t) <= 0.0):
                raise ValueError("jump times must be strictly increasing")
            if t[0] <= 0.0 or t[-1] > self.horizon:
                raise ValueError("jump times must lie in (0, horizon]")
            if np.any(s == 0.0):
                raise ValueError("jump sizes must be nonzero")

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    def value(self, t: float) -> float:
        """Z_t (cadlag: jumps at t are included)."""
        z = self.drift_rate * t
        k = np.searchsorted(self.jump_times, t, side="right")
        z += float(self.jump_sizes[:k].sum())
        if self.brownian is not None:
            z += float(self.brownian.value(t))
        return z

    def left_value(self, t: float) -> float:
        """Z_{t-} (jumps at t are excluded)."""
        z = self.drift_rate * t
        k = np.searchsorted(self.jump_times, t, side="left")
        z += float(self.jump_sizes[:k].sum())
        if self.brownian is not None:
            z += float(self.brownian.value(t))
        return z

    @property
    def terminal(self) -> float:
        return self.value(self.horizon)

    def with_jumps(self, times: np.ndarray, sizes: np.ndarray) -> "LevyPath":
        return LevyPath(self.horizon, self.drift_rate, times, sizes, self.brownian)

    def to_csv_rows(self):
        """Debug serialization: kind, time, value rows."""
        rows = [("drift", 0.0, self.drift_rate)]
        rows += [("jump", float(t), float(s))
                 for t, s in zip(self.jump_times, self.jump_sizes)]
        if self.brownian is not None:
            rows += [("brown", float(t), float(v))
                     for t, v in zip(self.brownian.times, self.brownian.values)]
        return rows


@dataclass(frozen=True)
class PathDecomposition:
    """Conditioning data: everything except the first marked jump time."""

    window: tuple[float, float]
    T: float
    T2: float
    marked_size: float
    residual: LevyPath

    def __post_init__(self):
        eta, upper = self.window
        if not (0.0 < self.T < self.T2 <= self.residual.horizon):
            raise ValueError("need 0 < T < T2 <= horizon")
        if not (eta <= self.marked_size <= upper):
            raise ValueError("marked size must lie in the window")


def _compensator(spec, trunc: float) -> float:
    """integral of z over {trunc < |z| <= 1}."""
    atoms = _spec_atoms(spec)
    if atoms is not None:
        return float(sum(s * r for s, r in atoms if trunc < abs(s) <= 1.0))
    lo = max(trunc, spec.abs_min)
    hi = min(1.0, spec.abs_max)
    if lo >= hi:
        return 0.0
    pos = shell_integral(lambda z: z * spec.intensity(z), lo, hi)
    if not spec.two_sided:
        return pos
    neg = shell_integral(lambda z: -z * spec.intensity(-z), lo, hi)
    return pos + neg


def _density_size_table(spec: DensityForm, trunc: float, nodes: int = 4096):
    """Inverse-CDF table for sizes drawn from spec restricted above trunc."""
    lo = max(trunc, spec.abs_min, 1e-300)
    hi = spec.abs_max
    if lo >= hi:
        raise ValueError("truncation level leaves no jump mass")
    grid = np.geomspace(lo, hi, nodes)

    def branch_cdf(xs):
        pdf = np.array([spec.intensity(z) for z in xs])
        return np.concatenate(
            [[0.0], np.cumsum(np.diff(xs) * 0.5 * (pdf[1:] + pdf[:-1]))])

    if not spec.two_sided:
        xs = grid
        cdf = branch_cdf(xs)
    else:
        neg_xs = -grid[::-1]
        neg_cdf = branch_cdf(neg_xs)
        pos_cdf = branch_cdf(grid)
        xs = np.concatenate([neg_xs, grid])
        # no mass on the excluded band (-lo, lo): the cdf is flat across it
        cdf = np.concatenate([neg_cdf, neg_cdf[-1] + pos_cdf])
    if cdf[-1] <= 0.0:
        raise ValueError("no jump mass above the truncation level")
    return xs, cdf


_SIZE_TABLE_CACHE: dict[tuple[DensityForm, float], tuple[np.ndarray, np.ndarray]] = {}


def _sample_sizes(spec, trunc: float, n: int, gen: np.random.Generator) -> np.ndarray:
    atoms = _spec_atoms(spec)
    if atoms is not None:
        kept = [(s, r) for s, r in atoms if abs(s) >= trunc and r > 0.0]
        sizes = np.array([s for s, _ in kept])
        rates = np.array([r for _, r in kept])
        cum = np.cumsum(rates)
        u = gen.uniform(0.0, cum[-1], size=n)
        return sizes[np.searchsorted(cum, u, side="right").clip(0, len(kept) - 1)]
    key = (spec, trunc)
    if key not in _SIZE_TABLE_CACHE:
        _SIZE_TABLE_CACHE[key] = _density_size_table(spec, trunc)
    xs, cdf = _SIZE_TABLE_CACHE[key]
    u = gen.uniform(0.0, cdf[-1], size=n)
    return np.interp(u, cdf, xs)


def _dedupe_times(times: np.ndarray) -> np.ndarray:
    """Nudge float-equal jump times apart by one ulp to keep strict order."""
    if times.size < 2 or np.all(np.diff(times) > 0.0):
        return times
    for i in range(1, len(times)):
        if times[i] <= times[i - 1]:
            times[i] = np.nextafter(times[i - 1], np.inf)
    return times


def sample_path(triplet: LevyTriplet, horizon: float, trunc: float,
                compensate: bool = False, rng: RngStream | None = None,
                brownian_cells: int | None = None,
                gen: np.random.Generator | None = None) -> LevyPath:
    """Draw one truncated-compound-Poisson realization of the driver.

    Jumps above `trunc` arrive at rate total_rate(spec, trunc); times are
    iid uniform on (0, horizon], sizes iid from the normalized restriction.
    With `compensate`, the drift absorbs minus the mean of jumps in
    (trunc, 1]. Draw order is fixed (count, times, sizes, Brownian cells) so
    a stream identity pins the path exactly.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be > 0")
    if trunc <= 0.0:
        raise ValueError("truncation level must be > 0")
    rate = total_rate(triplet.jumps, trunc)
    if not math.isfinite(rate):
        raise ValueError("jump rate above truncation is not finite")
    if gen is None:
        if rng is None:
            raise ValueError("need an RngStream or a Generator")
        gen = rng.generator()
    n = int(gen.poisson(rate * horizon)) if rate > 0.0 else 0
    if n > 0:
        times = np.sort(horizon - gen.uniform(0.0, horizon, size=n))
        times = _dedupe_times(times)
        sizes = _sample_sizes(triplet.jumps, trunc, n, gen)
    else:
        times = np.empty(0)
        sizes = np.empty(0)
    drift = triplet.drift - (_compensator(triplet.jumps, trunc) if compensate else 0.0)
    brownian = None
    if triplet.brownian_variance > 0.0:
        cells = brownian_cells if brownian_cells is not None else \
            max(1, round(DEFAULT_BROWNIAN_CELLS_PER_UNIT * horizon))
        dt = horizon / cells
        incr = gen.normal(0.0, math.sqrt(triplet.brownian_variance * dt), size=cells)
        values = np.concatenate([[0.0], np.cumsum(incr)])
        brownian = BrownianSkeleton(
            times=np.linspace(0.0, horizon, cells + 1),
            values=values,
            variance_rate=triplet.brownian_variance,
        )
    return LevyPath(horizon, drift, times, sizes, brownian)


def marked_jump_indices(path: LevyPath, eta: float, upper: float) -> np.ndarray:
    """Indices of jumps with size in the one-sided window [eta, upper]."""
    if not (0.0 < eta <= upper):
        raise ValueError("need 0 < eta <= upper")
    mask = (path.jump_sizes >= eta) & (path.jump_sizes <= upper)
    return np.flatnonzero(mask)


def decompose_first_jump(path: LevyPath, eta: float, upper: float) -> PathDecomposition:
    """Split off the first jump landing in the marked window [eta, upper]."""
    marked = marked_jump_indices(path, eta, upper)
    if marked.size < 2:
        raise NotEnoughMarkedJumps(
            f"found {marked.size} marked jump(s) in [{eta}, {upper}]; need >= 2")
    i1, i2 = int(marked[0]), int(marked[1])
    T = float(path.jump_times[i1])
    T2 = float(path.jump_times[i2])
    marked_size = float(path.jump_sizes[i1])
    residual = path.with_jumps(np.delete(path.jump_times, i1),
                               np.delete(path.jump_sizes, i1))
    return PathDecomposition(window=(eta, upper), T=T, T2=T2,
                             marked_size=marked_size, residual=residual)


def reinsert_marked_jump(decomp: PathDecomposition, new_time: float) -> LevyPath:
    """Path rebuilt with the marked jump placed at new_time in (0, T2)."""
    residual = decomp.residual
    t = float(new_time)
    if not (0.0 < t < decomp.T2):
        raise ValueError("new marked time must lie in (0, T2)")
    while np.any(residual.jump_times == t):
        t = np.nextafter(t, np.inf)
    k = int(np.searchsorted(residual.jump_times, t))
    times = np.insert(residual.jump_times, k, t)
    sizes = np.insert(residual.jump_sizes, k, decomp.marked_size)
    return residual.with_jumps(times, sizes)


def resample_first_jump_time(decomp: PathDecomposition,
                             rng: RngStream | None = None,
                             gen: np.random.Generator | None = None) -> LevyPath:
    """Redraw the marked jump time uniformly on (0, T2); all else unchanged."""
    if gen is None:
        if rng is None:
            raise ValueError("need an RngStream or a Generator")
        gen = rng.generator()
    t = float(gen.uniform(0.0, decomp.T2))
    while t <= 0.0:
        t = float(gen.uniform(0.0, decomp.T2))
    return reinsert_marked_jump(decomp, t)


def shift_jump_time(path: LevyPath, jump_index: int, h: float) -> LevyPath:
    """Move jump `jump_index` from t to t + h, preserving strict ordering."""
    n = path.n_jumps
    if not (0 <= jump_index < n):
        raise ValueError("jump index out of range")
    t_new = float(path.jump_times[jump_index]) + h
    lo = path.jump_times[jump_index - 1] if jump_index > 0 else 0.0
    hi = path.jump_times[jump_index + 1] if jump_index < n - 1 else np.inf
    if not (lo < t_new < hi) or not (0.0 < t_new <= path.horizon):
        raise ValueError("shifted time violates ordering or horizon bounds")
    times = path.jump_times.copy()
    times[jump_index] = t_new
    return path.with_jumps(times, path.jump_sizes.copy())
