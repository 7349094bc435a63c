"""Vectorized terminal-value engines for Monte Carlo scale.

The scalar solvers are the reference implementations; these engines run the
same algorithms elementwise across a whole batch of paths sharing one cell
grid, so scenario-scale replica counts stay affordable. Three rules keep the
results independent of how replicas are batched or chunked:

* all state updates are elementwise (no cross-path arithmetic);
* per-element substep counts depend only on that element's values;
* batch-wide reductions (loop bounds) never enter element arithmetic.

Jumps are handled by event-synchronized stepping: within each cell every path
advances to its own next jump time, applies it (exactly, via the jump flow for
the Marcus engine), and continues; paths without events cross the cell in one
step. Sub-cell work runs on the active subset only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow_engine import ScalarField
from .marcus import FLOW_SUBSTEP_SCALE, DiffusionField
from .path_sampler import LevyPath


@dataclass
class PackedPaths:
    """Batch of driver realizations on a shared cell grid."""

    horizon: float
    drift_rate: float
    n_cells: int
    edges: np.ndarray            # (C+1,) cell boundaries
    flat_times: np.ndarray       # all jump times, path-major, each path sorted
    flat_sizes: np.ndarray
    offsets: np.ndarray          # (P+1,) slice bounds into the flat arrays
    brown_edges: np.ndarray | None   # (P, C+1) Brownian values at cell edges
    z_terminal: np.ndarray       # (P,) exact Z_horizon per path

    @property
    def n_paths(self) -> int:
        return len(self.offsets) - 1

    def jump_counts(self) -> np.ndarray:
        return np.diff(self.offsets)


def pack_paths(paths: list[LevyPath], n_cells: int) -> PackedPaths:
    if not paths:
        raise ValueError("need at least one path")
    horizon = paths[0].horizon
    drift = paths[0].drift_rate
    for p in paths:
        if p.horizon != horizon or p.drift_rate != drift:
            raise ValueError("packed paths must share horizon and drift")
    edges = np.linspace(0.0, horizon, n_cells + 1)
    offsets = np.zeros(len(paths) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([p.n_jumps for p in paths])
    flat_times = np.concatenate([p.jump_times for p in paths]) \
        if offsets[-1] else np.empty(0)
    flat_sizes = np.concatenate([p.jump_sizes for p in paths]) \
        if offsets[-1] else np.empty(0)
    has_brown = paths[0].brownian is not None
    brown_edges = None
    if has_brown:
        brown_edges = np.stack([
            np.interp(edges, p.brownian.times, p.brownian.values) for p in paths])
    jump_sums = np.array([float(p.jump_sizes.sum()) for p in paths])
    z_term = drift * horizon + jump_sums
    if has_brown:
        z_term = z_term + brown_edges[:, -1]
    return PackedPaths(horizon=horizon, drift_rate=drift, n_cells=n_cells,
                       edges=edges, flat_times=flat_times, flat_sizes=flat_sizes,
                       offsets=offsets, brown_edges=brown_edges, z_terminal=z_term)


def _padded(arr: np.ndarray, pad: float) -> np.ndarray:
    return np.concatenate([arr, [pad]])


def flow_map_array(sigma: DiffusionField, y: np.ndarray, u: np.ndarray,
                   substep_scale: float = FLOW_SUBSTEP_SCALE) -> np.ndarray:
    """Vectorized time-u flow of sigma from y (fixed per-element substeps)."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    n = np.maximum(8, np.ceil(np.abs(u) / substep_scale)).astype(np.int64)
    ds = 1.0 / n
    phi = y.copy()
    sig = sigma.value
    for s in range(int(n.max())):
        active = s < n
        k1 = sig(phi) * u
        k2 = sig(phi + 0.5 * ds * k1) * u
        k3 = sig(phi + 0.5 * ds * k2) * u
        k4 = sig(phi + ds * k3) * u
        step = (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        phi = np.where(active, phi + step, phi)
    return phi


def flow_sensitivity_array(sigma: DiffusionField, y: np.ndarray, u: np.ndarray,
                           substep_scale: float = FLOW_SUBSTEP_SCALE
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (phi(y, u), log phi_x(y, u)) along the flow."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    n = np.maximum(8, np.ceil(np.abs(u) / substep_scale)).astype(np.int64)
    ds = 1.0 / n
    phi = y.copy()
    acc = np.zeros_like(phi)
    sig, sig_dot = sigma.value, sigma.derivative
    for s in range(int(n.max())):
        active = s < n
        k1p = sig(phi) * u
        k1a = sig_dot(phi) * u
        p2 = phi + 0.5 * ds * k1p
        k2p = sig(p2) * u
        k2a = sig_dot(p2) * u
        p3 = phi + 0.5 * ds * k2p
        k3p = sig(p3) * u
        k3a = sig_dot(p3) * u
        p4 = phi + ds * k3p
        k4p = sig(p4) * u
        k4a = sig_dot(p4) * u
        phi_new = phi + (ds / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        acc_new = acc + (ds / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        phi = np.where(active, phi_new, phi)
        acc = np.where(active, acc_new, acc)
    return phi, acc


class _CellWalker:
    """Shared event-synchronized sweep over the cell grid."""

    def __init__(self, packed: PackedPaths):
        self.packed = packed
        self.P = packed.n_paths
        self.times = _padded(packed.flat_times, np.inf)
        self.sizes = _padded(packed.flat_sizes, 0.0)
        self.jptr = packed.offsets[:-1].copy()
        self.jend = packed.offsets[1:]
        h = packed.horizon / packed.n_cells
        if packed.brown_edges is not None:
            self.slopes = np.diff(packed.brown_edges, axis=1) / h
            self.anchors = packed.brown_edges
        else:
            self.slopes = None
            self.anchors = None

    def brown_at(self, k: int, tau: np.ndarray, idx=None) -> np.ndarray:
        """Brownian value at per-path times tau inside cell k."""
        if self.anchors is None:
            return 0.0
        t0 = self.packed.edges[k]
        if idx is None:
            return self.anchors[:, k] + self.slopes[:, k] * (tau - t0)
        return self.anchors[idx, k] + self.slopes[idx, k] * (tau - t0)

    def sweep(self, advance, apply_jump):
        """Walk cells; advance(idx_or_None, k, tau, dt) moves state over
        [tau, tau+dt] inside cell k, apply_jump(idx, sizes) fires events."""
        packed = self.packed
        for k in range(packed.n_cells):
            t1 = packed.edges[k + 1]
            tau = np.full(self.P, packed.edges[k])
            while True:
                next_t = self.times[self.jptr]
                live = (self.jptr < self.jend) & (next_t <= t1)
                if not live.any():
                    break
                idx = np.flatnonzero(live)
                dt = next_t[idx] - tau[idx]
                advance(idx, k, tau[idx], dt)
                apply_jump(idx, self.sizes[self.jptr[idx]])
                tau[idx] = next_t[idx]
                self.jptr[idx] += 1
            dt = t1 - tau
            advance(None, k, tau, dt)


def ode_terminals(a: ScalarField, packed: PackedPaths, x0: float
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Terminal (X, Y) of the random ODE Y' = a(Y + Z_t) across the batch."""
    walker = _CellWalker(packed)
    y = np.full(packed.n_paths, float(x0))
    jrun = np.zeros(packed.n_paths)
    drift = packed.drift_rate
    a_val = a.value

    def advance(idx, k, tau, dt):
        nonlocal y
        if idx is None:
            yy, jr = y, jrun
        else:
            yy, jr = y[idx], jrun[idx]

        def f(t, u):
            return a_val(u + drift * t + jr + walker.brown_at(k, t, idx))

        k1 = f(tau, yy)
        k2 = f(tau + 0.5 * dt, yy + 0.5 * dt * k1)
        k3 = f(tau + 0.5 * dt, yy + 0.5 * dt * k2)
        k4 = f(tau + dt, yy + dt * k3)
        out = yy + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if idx is None:
            y = out
        else:
            y[idx] = out

    def apply_jump(idx, sizes):
        jrun[idx] += sizes

    with np.errstate(over="ignore", invalid="ignore"):
        walker.sweep(advance, apply_jump)
    x_term = y + packed.z_terminal
    return x_term, y


def marcus_terminals(a: ScalarField, sigma: DiffusionField,
                     packed: PackedPaths, x0: float) -> np.ndarray:
    """Marcus terminal values: Heun cells + exact jump flows, vectorized."""
    walker = _CellWalker(packed)
    x = np.full(packed.n_paths, float(x0))
    drift = packed.drift_rate
    a_val, sig = a.value, sigma.value
    h = packed.horizon / packed.n_cells

    def advance(idx, k, tau, dt):
        nonlocal x
        xx = x if idx is None else x[idx]
        if walker.slopes is None:
            db = 0.0
        else:
            sl = walker.slopes[:, k] if idx is None else walker.slopes[idx, k]
            db = sl * dt

        def F(u):
            return a_val(u) + drift * sig(u)

        fx = F(xx)
        sx = sig(xx)
        xp = xx + fx * dt + sx * db
        out = xx + 0.5 * dt * (fx + F(xp)) + 0.5 * db * (sx + sig(xp))
        if idx is None:
            x = out
        else:
            x[idx] = out

    def apply_jump(idx, sizes):
        x[idx] = flow_map_array(sigma, x[idx], sizes)

    with np.errstate(over="ignore", invalid="ignore"):
        walker.sweep(advance, apply_jump)
    return x


def doss_terminals(a: ScalarField, sigma: DiffusionField,
                   packed: PackedPaths, x0: float) -> np.ndarray:
    """Doss-Sussmann terminal values: vectorized random ODE then final flow."""
    walker = _CellWalker(packed)
    y = np.full(packed.n_paths, float(x0))
    jrun = np.zeros(packed.n_paths)
    drift = packed.drift_rate
    a_val = a.value

    def b(yy, zz):
        phi, acc = flow_sensitivity_array(sigma, yy, zz)
        return a_val(phi) * np.exp(-acc)

    def advance(idx, k, tau, dt):
        nonlocal y
        if idx is None:
            yy, jr = y, jrun
        else:
            yy, jr = y[idx], jrun[idx]

        def f(t, u):
            return b(u, drift * t + jr + walker.brown_at(k, t, idx))

        k1 = f(tau, yy)
        k2 = f(tau + 0.5 * dt, yy + 0.5 * dt * k1)
        k3 = f(tau + 0.5 * dt, yy + 0.5 * dt * k2)
        k4 = f(tau + dt, yy + dt * k3)
        out = yy + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if idx is None:
            y = out
        else:
            y[idx] = out

    def apply_jump(idx, sizes):
        jrun[idx] += sizes

    with np.errstate(over="ignore", invalid="ignore"):
        walker.sweep(advance, apply_jump)
    return flow_map_array(sigma, y, packed.z_terminal)
