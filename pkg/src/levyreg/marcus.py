"""Marcus-canonical integration of dX = a(X) dt + sigma(X) o dZ.

Between jumps the equation is an ODE in X (the Stratonovich continuous part
against a piecewise-linear Brownian skeleton reduces to an effective drift),
solved by RK4, or by Stratonovich-Heun predictor-corrector steps on cells
carrying a Brownian increment. Each jump of size u moves the state along the
unit-time flow of the field x -> sigma(x) * u, started from the left limit —
that jump rule is what buys the first-order chain rule checked by
`chain_rule_residual`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .flow_engine import ScalarField, segment_knots, substep_count
from .path_sampler import LevyPath

#: Substeps for the unit-time jump flow: max(8, ceil(|u| / 0.05)).
FLOW_SUBSTEP_SCALE = 0.05
_MAX_FLOW_DOUBLINGS = 12


class FlowDivergence(RuntimeError):
    """The jump flow (or trajectory) left the finite range."""


@dataclass(frozen=True)
class DiffusionField:
    """Nonvanishing C^1 diffusion coefficient with its derivative.

    `min_abs`, when set, witnesses |sigma| >= min_abs on the scenario's
    state range (the ellipticity assumption in dimension one).
    """

    value: Callable[[float], float]
    derivative: Callable[[float], float]
    min_abs: float | None = None

    def validate(self, lo: float, hi: float, n: int = 101) -> None:
        for x in np.linspace(lo, hi, n):
            h = 1e-5 * (1.0 + abs(x))
            fd = (self.value(x + h) - self.value(x - h)) / (2.0 * h)
            d = self.derivative(x)
            if abs(fd - d) > 1e-6 * (1.0 + abs(d)):
                raise ValueError(
                    f"derivative mismatch at x={x}: finite diff {fd}, stated {d}")
            if self.min_abs is not None and abs(self.value(x)) < self.min_abs:
                raise ValueError(f"|sigma({x})| falls below the declared min_abs")


def flow_substeps(u: float) -> int:
    return max(8, math.ceil(abs(u) / FLOW_SUBSTEP_SCALE))


def _flow_once(sigma_val, y: float, u: float, n: int) -> float:
    """n RK4 steps of dphi/ds = sigma(phi) * u over s in [0, 1]."""
    ds = 1.0 / n
    phi = y
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            k1 = sigma_val(phi) * u
            k2 = sigma_val(phi + 0.5 * ds * k1) * u
            k3 = sigma_val(phi + 0.5 * ds * k2) * u
            k4 = sigma_val(phi + ds * k3) * u
            phi = phi + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not math.isfinite(phi):
                raise FlowDivergence(
                    f"jump flow diverged: start {y}, size {u}")
    return phi


def jump_flow_phi(sigma: DiffusionField, y: float, u: float,
                  tol: float = 1e-10) -> float:
    """Time-u flow of sigma from y, i.e. the Marcus jump destination.

    RK4 with substeps scaled to |u|, then Richardson-refined until the
    step-halving estimate sits below tol.
    """
    if tol <= 0.0:
        raise ValueError("tol must be > 0")
    if u == 0.0:
        return float(y)
    n = flow_substeps(u)
    coarse = _flow_once(sigma.value, y, u, n)
    for _ in range(_MAX_FLOW_DOUBLINGS):
        fine = _flow_once(sigma.value, y, u, 2 * n)
        err = abs(fine - coarse) / 15.0
        if err <= tol * max(1.0, abs(fine)):
            return fine + (fine - coarse) / 15.0
        n *= 2
        coarse = fine
    raise FlowDivergence(
        f"jump flow failed to meet tol={tol}: start {y}, size {u}")


def flow_with_sensitivity(sigma: DiffusionField, y: float, u: float,
                          n: int | None = None) -> tuple[float, float]:
    """Return (phi(y, u), integral of sigma'(phi(y, s u)) u ds over [0, 1]).

    exp of the second component is the y-sensitivity of the flow.
    """
    if u == 0.0:
        return float(y), 0.0
    if n is None:
        n = flow_substeps(u)
    sig, sig_dot = sigma.value, sigma.derivative
    ds = 1.0 / n
    phi, acc = float(y), 0.0

    def f(state):
        p, _ = state
        return np.array([sig(p) * u, sig_dot(p) * u])

    state = np.array([phi, acc])
    for _ in range(n):
        k1 = f(state)
        k2 = f(state + 0.5 * ds * k1)
        k3 = f(state + 0.5 * ds * k2)
        k4 = f(state + ds * k3)
        state = state + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(state[0]):
            raise FlowDivergence(f"jump flow diverged: start {y}, size {u}")
    return float(state[0]), float(state[1])


def marcus_remainder_rho(sigma: DiffusionField, y: float, z: float,
                         tol: float = 1e-10) -> float:
    """Deviation of the jump flow from its first-order part:
    phi(y, z) - y - sigma(y) z. Bounded by a constant times z^2 on compacts."""
    return jump_flow_phi(sigma, y, z, tol) - y - sigma.value(y) * z


@dataclass(frozen=True)
class MarcusTrajectory:
    """Cadlag solution on the solver grid, jump times entered twice."""

    times: np.ndarray
    x_values: np.ndarray
    jump_log: tuple[tuple[float, float, float, float], ...]  # (t, pre, size, post)
    terminal: float
    horizon: float
    x0: float
    step: float

    @property
    def jump_records(self) -> tuple[tuple[float, float, float, float], ...]:
        """(time, x_left, x_right, size) rows, matching FlowSolution."""
        return tuple((t, pre, post, size) for t, pre, size, post in self.jump_log)

    def to_csv_rows(self):
        return [(float(t), float(pre), float(size), float(post))
                for t, pre, size, post in self.jump_log]


def marcus_solve(a: ScalarField, sigma: DiffusionField, path: LevyPath,
                 x0: float, step: float | None = None,
                 phi_tol: float = 1e-10) -> MarcusTrajectory:
    """Solve the Marcus equation along one driver realization."""
    if step is None:
        step = path.horizon / 4096.0
    if step <= 0.0:
        raise ValueError("step must be > 0")
    a_val, sig = a.value, sigma.value
    drift = path.drift_rate
    brown = path.brownian
    jump_at = {float(t): float(s)
               for t, s in zip(path.jump_times, path.jump_sizes)}
    knots = segment_knots(path)

    times = [0.0]
    xs = [float(x0)]
    log = []
    x = float(x0)
    for t0, t1 in zip(knots[:-1], knots[1:]):
        n = substep_count(t1 - t0, step)
        h = (t1 - t0) / n
        if brown is not None:
            slope = (float(brown.value(t1)) - float(brown.value(t0))) / (t1 - t0)
        else:
            slope = 0.0
        use_heun = brown is not None

        def F(u):
            return a_val(u) + drift * sig(u)

        t = t0
        for i in range(n):
            if use_heun:
                db = slope * h
                fx, sx = F(x), sig(x)
                xp = x + fx * h + sx * db
                x = x + 0.5 * h * (fx + F(xp)) + 0.5 * db * (sx + sig(xp))
            else:
                k1 = F(x)
                k2 = F(x + 0.5 * h * k1)
                k3 = F(x + 0.5 * h * k2)
                k4 = F(x + h * k3)
                x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not math.isfinite(x):
                raise FlowDivergence(f"trajectory diverged near t={t}")
            t = t1 if i == n - 1 else t0 + (i + 1) * h
            times.append(t)
            xs.append(x)
        if t1 in jump_at:
            size = jump_at[t1]
            try:
                post = jump_flow_phi(sigma, x, size, phi_tol)
            except FlowDivergence as exc:
                raise FlowDivergence(f"{exc} (jump at t={t1})") from exc
            log.append((t1, x, size, post))
            x = post
            times.append(t1)
            xs.append(x)

    return MarcusTrajectory(
        times=np.asarray(times), x_values=np.asarray(xs),
        jump_log=tuple(log), terminal=float(x),
        horizon=path.horizon, x0=float(x0), step=step)


def _segmented_running_integral(times: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Running integral of g over the solver grid, 4th-order inside segments.

    Within each segment (delimited by duplicated jump entries) the substep
    counts are even, so composite Simpson applies pairwise; the intermediate
    node of each pair gets the matching 3-point half rule.
    """
    m = len(times)
    out = np.zeros(m)
    i = 0
    while i < m - 1:
        j = i + 1
        while j < m and times[j] != times[j - 1]:
            j += 1
        seg_end = j - 1
        idx = i
        while idx + 2 <= seg_end:
            t0, t1, t2 = times[idx], times[idx + 1], times[idx + 2]
            h1 = t1 - t0
            out[idx + 1] = out[idx] + h1 * (5.0 * g[idx] + 8.0 * g[idx + 1]
                                            - g[idx + 2]) / 12.0
            out[idx + 2] = out[idx] + (t2 - t0) / 6.0 * (g[idx] + 4.0 * g[idx + 1]
                                                         + g[idx + 2])
            idx += 2
        if idx < seg_end:
            out[idx + 1] = out[idx] + 0.5 * (g[idx] + g[idx + 1]) \
                * (times[idx + 1] - times[idx])
            idx += 1
        if j < m:
            out[j] = out[seg_end]
            j += 1
        i = j - 1 if j - 1 > i else j
    return out


def chain_rule_residual(f: ScalarField, a: ScalarField, sigma: DiffusionField,
                        traj: MarcusTrajectory, k: float, path: LevyPath) -> float:
    """Sup-norm defect of f(X_t) = f(x0) + int f'(X) a(X) ds + k Z_t.

    Valid when f' sigma is the constant k; that identity is probed on the
    trajectory's state range before anything is integrated.
    """
    lo = float(np.min(traj.x_values))
    hi = float(np.max(traj.x_values))
    if hi <= lo:
        hi = lo + 1.0
    for x in np.linspace(lo, hi, 101):
        if abs(f.derivative(x) * sigma.value(x) - k) > 1e-8:
            raise ValueError("f' * sigma is not the constant k on the probe grid")
    times = traj.times
    g = np.asarray([f.derivative(x) * a.value(x) for x in traj.x_values])
    running = _segmented_running_integral(times, g)
    f0 = f.value(traj.x0)
    worst = 0.0
    for i, (t, x) in enumerate(zip(times, traj.x_values)):
        left_dup = i + 1 < len(times) and times[i + 1] == t
        z = path.left_value(float(t)) if left_dup else path.value(float(t))
        worst = max(worst, abs(f.value(x) - f0 - running[i] - k * z))
    return worst
