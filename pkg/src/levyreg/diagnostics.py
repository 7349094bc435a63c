"""Statistical diagnostics on terminal-value Monte Carlo samples.

The point of the toolkit is distributional: does the terminal law carry
atoms, does it concentrate on a lattice, does a drift smear it out. The
tools here are deliberately elementary — sliding-window mass on the sorted
sample for atoms (no binning artifacts), offset-optimized lattice tube
counts, the asymptotic two-sample Kolmogorov-Smirnov test, and a Gaussian
kernel density estimate for the visual surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow_engine import ScalarField

#: Asymptotic two-sample KS coefficient at the 1% level.
KS_COEFF_1PCT = 1.628


@dataclass(frozen=True)
class SampleBatch:
    """Sorted terminal-value sample with scenario metadata."""

    values: np.ndarray
    label: str = ""
    seed: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("sample must be one-dimensional")
        if np.any(np.diff(v) < 0.0):
            v = np.sort(v)
        object.__setattr__(self, "values", v)

    @property
    def count(self) -> int:
        return int(self.values.size)

    @property
    def span(self) -> float:
        return float(self.values[-1] - self.values[0]) if self.count else 0.0


def default_window(batch: SampleBatch) -> float:
    """1e-6 of the sample range (floored away from zero)."""
    return max(1e-6 * batch.span, 1e-12)


def default_threshold(count: int) -> float:
    """3 sqrt(log n / n): far above any continuous law's window mass."""
    return 3.0 * math.sqrt(math.log(count) / count)


@dataclass(frozen=True)
class AtomReport:
    """Sliding-window atom candidates, heaviest first."""

    candidates: tuple[tuple[float, float, float], ...]  # (location, mass, width)
    atoms_present: bool
    window: float
    threshold: float

    def __post_init__(self):
        for _, mass, _ in self.candidates:
            if not (0.0 <= mass <= 1.0):
                raise ValueError("atom mass estimates must lie in [0, 1]")
        masses = [m for _, m, _ in self.candidates]
        if any(b > a for a, b in zip(masses, masses[1:])):
            raise ValueError("candidates must be sorted by mass descending")


def detect_atoms(batch: SampleBatch, window: float | None = None,
                 threshold: float | None = None) -> AtomReport:
    """Slide a width-`window` interval over the sorted sample; report every
    maximal interval carrying at least `threshold` of the total mass."""
    if batch.count < 1000:
        raise ValueError("atom detection needs at least 1e3 samples")
    if window is None:
        window = default_window(batch)
    if window <= 0.0:
        raise ValueError("window must be > 0")
    if threshold is None:
        threshold = default_threshold(batch.count)
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    v = batch.values
    n = batch.count
    right = np.searchsorted(v, v + window, side="right")
    mass = (right - np.arange(n)) / n
    heavy = np.flatnonzero(mass >= threshold)
    candidates = []
    k = 0
    while k < heavy.size:
        start = heavy[k]
        best = start
        cluster_end = v[start] + window
        k += 1
        while k < heavy.size and v[heavy[k]] <= cluster_end:
            if mass[heavy[k]] > mass[best]:
                best = heavy[k]
            cluster_end = max(cluster_end, v[heavy[k]] + window)
            k += 1
        covered_lo = v[best]
        covered_hi = v[right[best] - 1]
        candidates.append((float(0.5 * (covered_lo + covered_hi)),
                           float(mass[best]), float(window)))
    candidates.sort(key=lambda c: -c[1])
    return AtomReport(candidates=tuple(candidates),
                      atoms_present=bool(candidates),
                      window=float(window), threshold=float(threshold))


def lattice_concentration(batch: SampleBatch, spacing: float,
                          halfwidth: float, n_offsets: int = 1000) -> float:
    """Largest sample fraction within `halfwidth` of any offset lattice
    offset + spacing * Z, the offset scanned over one period."""
    if spacing <= 0.0 or halfwidth <= 0.0:
        raise ValueError("spacing and halfwidth must be > 0")
    if not halfwidth < spacing / 2.0:
        raise ValueError("halfwidth must be below spacing / 2")
    r = np.sort(np.mod(batch.values, spacing))
    offsets = np.arange(n_offsets) * (spacing / n_offsets)
    lo = offsets - halfwidth
    hi = offsets + halfwidth
    counts = (np.searchsorted(r, hi, side="right")
              - np.searchsorted(r, lo, side="left")).astype(float)
    wrap_lo = lo < 0.0
    counts[wrap_lo] += batch.count - np.searchsorted(r, lo[wrap_lo] + spacing,
                                                     side="left")
    wrap_hi = hi > spacing
    counts[wrap_hi] += np.searchsorted(r, hi[wrap_hi] - spacing, side="right")
    return float(counts.max() / batch.count)


def two_sample_ks(batch1: SampleBatch, batch2: SampleBatch
                  ) -> tuple[float, float]:
    """(KS statistic, asymptotic 1% critical value)."""
    if batch1.count < 1000 or batch2.count < 1000:
        raise ValueError("KS test needs at least 1e3 samples per batch")
    v1, v2 = batch1.values, batch2.values
    pooled = np.concatenate([v1, v2])
    cdf1 = np.searchsorted(v1, pooled, side="right") / batch1.count
    cdf2 = np.searchsorted(v2, pooled, side="right") / batch2.count
    stat = float(np.max(np.abs(cdf1 - cdf2)))
    n, m = batch1.count, batch2.count
    crit = KS_COEFF_1PCT * math.sqrt((n + m) / (n * m))
    return stat, crit


@dataclass(frozen=True)
class KdeCurve:
    """Gaussian-kernel density estimate on a uniform grid."""

    x: np.ndarray
    density: np.ndarray
    bandwidth: float
    degenerate: bool = False

    def to_csv_rows(self):
        return list(zip(self.x.tolist(), self.density.tolist()))


_DEGENERATE = KdeCurve(x=np.empty(0), density=np.empty(0),
                       bandwidth=0.0, degenerate=True)


def kde(batch: SampleBatch, bandwidth: float | None = None,
        grid_points: int = 512) -> KdeCurve:
    """Gaussian KDE; Silverman bandwidth 0.9 min(sd, IQR/1.34) n^-1/5."""
    if batch.count < 1000:
        raise ValueError("density estimation needs at least 1e3 samples")
    v = batch.values
    sd = float(v.std())
    if sd == 0.0:
        return _DEGENERATE
    if bandwidth is None:
        q75, q25 = np.quantile(v, [0.75, 0.25])
        iqr = float(q75 - q25)
        scale = min(sd, iqr / 1.34) if iqr > 0.0 else sd
        bandwidth = 0.9 * scale * batch.count ** (-0.2)
    if bandwidth <= 0.0:
        return _DEGENERATE
    grid = np.linspace(v[0] - 3.0 * bandwidth, v[-1] + 3.0 * bandwidth,
                       grid_points)
    density = np.empty(grid_points)
    norm = 1.0 / (batch.count * bandwidth * math.sqrt(2.0 * math.pi))
    chunk = max(1, 2 ** 22 // batch.count)
    for start in range(0, grid_points, chunk):
        g = grid[start:start + chunk, None]
        density[start:start + chunk] = norm * np.exp(
            -0.5 * ((g - v[None, :]) / bandwidth) ** 2).sum(axis=1)
    return KdeCurve(x=grid, density=density, bandwidth=float(bandwidth))


def deterministic_skeleton(a: ScalarField, d: float, x0: float, t: float,
                           n_steps: int = 4096) -> float:
    """RK4 solution of the no-jump dynamics x' = a(x) + d at time t."""
    if t <= 0.0:
        raise ValueError("t must be > 0")
    h = t / n_steps
    x = float(x0)
    a_val = a.value

    def f(u):
        return a_val(u) + d

    for _ in range(n_steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def drift_jump_events(a: ScalarField, traj, eta: float) -> list[float]:
    """Jump times where the drift coefficient itself jumps by at least eta.

    Works on anything exposing `jump_records` rows (time, x_left, x_right, size).
    """
    if eta <= 0.0:
        raise ValueError("eta must be > 0")
    return [float(t) for t, x_left, x_right, _ in traj.jump_records
            if abs(a.value(x_right) - a.value(x_left)) >= eta]
