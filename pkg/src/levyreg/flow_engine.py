"""Pathwise solver for the random ODE behind the drifted jump SDE.

The SDE X_t = x0 + int a(X_s) ds + Z_t is solved pathwise: X = Y + Z where
Y_t = x0 + int a(Y_s + Z_s) ds is a classical ODE once the driver realization
Z is fixed. The solver is fixed-substep RK4 on a grid forcibly aligned to the
jump times (and Brownian knots) of Z, so Y is integrated across smooth
right-hand sides only and left limits of X at jump times are stored exactly.

The two derivative computations are:

* flow derivative d/dx0 of the terminal value — the exponential of the
  integral of a'(X_s) along the trajectory;
* jump-time derivative d/dT of the terminal Y when one marked jump time T
  moves — (a(X_{T-}) - a(X_T)) * exp(int_T^horizon a'(X_s) ds), vanishing
  once T passes the horizon and undefined exactly at it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .path_sampler import LevyPath, PathDecomposition


class NonDifferentiablePoint(ValueError):
    """The marked jump time sits exactly at the evaluation horizon."""


class SolverBlowUp(RuntimeError):
    """State became non-finite; carries the last good time."""

    def __init__(self, message: str, last_good_time: float):
        super().__init__(message)
        self.last_good_time = last_good_time


@dataclass(frozen=True)
class ScalarField:
    """C^1 coefficient: value and derivative, with optional bounds."""

    value: Callable[[float], float]
    derivative: Callable[[float], float]
    sup_bound: float | None = None
    lipschitz_bound: float | None = None

    def validate(self, lo: float, hi: float, n: int = 101) -> None:
        """Probe-grid check that `derivative` really differentiates `value`."""
        for x in np.linspace(lo, hi, n):
            h = 1e-5 * (1.0 + abs(x))
            fd = (self.value(x + h) - self.value(x - h)) / (2.0 * h)
            d = self.derivative(x)
            if abs(fd - d) > 1e-6 * (1.0 + abs(d)):
                raise ValueError(
                    f"derivative mismatch at x={x}: finite diff {fd}, stated {d}")


def default_step(horizon: float) -> float:
    """Fixed-substep default: horizon / 2^12."""
    return horizon / 4096.0


def segment_knots(path: LevyPath) -> np.ndarray:
    """Segment boundaries: 0, horizon, jump times, Brownian knots."""
    pts = [0.0, path.horizon]
    pts.extend(float(t) for t in path.jump_times)
    if path.brownian is not None:
        pts.extend(float(t) for t in path.brownian.times if 0.0 < t < path.horizon)
    return np.unique(np.asarray(pts))


def substep_count(length: float, step: float) -> int:
    """Even number of RK4 substeps covering `length` at granularity <= step."""
    return 2 * max(1, math.ceil(length / (2.0 * step)))


@dataclass(frozen=True)
class FlowSolution:
    """Dense trajectory on the solver grid, jump times entered twice.

    At a jump time the grid holds the left limit first and the post-jump
    value second; y is continuous so both entries agree in y.
    """

    times: np.ndarray
    y_values: np.ndarray
    x_values: np.ndarray
    jump_records: tuple[tuple[float, float, float, float], ...]  # (t, x_left, x_right, size)
    terminal_y: float
    terminal_x: float
    flow_derivative: float
    horizon: float
    x0: float
    step: float

    @property
    def terminal(self) -> float:
        return self.terminal_x

    def to_csv_rows(self):
        """(time, y, x, x_left) rows, jump-time pairs collapsed into one row."""
        rows = []
        i = 0
        t, y, x = self.times, self.y_values, self.x_values
        while i < len(t):
            if i + 1 < len(t) and t[i + 1] == t[i]:
                rows.append((float(t[i]), float(y[i + 1]), float(x[i + 1]),
                             float(x[i])))
                i += 2
            else:
                rows.append((float(t[i]), float(y[i]), float(x[i]), float(x[i])))
                i += 1
        return rows


def _rk4_step(f, t: float, y: float, h: float) -> float:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def solve_random_ode(a: ScalarField, path: LevyPath, x0: float,
                     step: float | None = None) -> FlowSolution:
    """RK4 solution of Y' = a(Y + Z_t) on the jump-aligned grid; X = Y + Z."""
    if step is None:
        step = default_step(path.horizon)
    if step <= 0.0:
        raise ValueError("step must be > 0")
    a_val = a.value
    drift = path.drift_rate
    brown = path.brownian
    jump_at = {float(t): float(s)
               for t, s in zip(path.jump_times, path.jump_sizes)}
    knots = segment_knots(path)

    times = [0.0]
    ys = [float(x0)]
    xs = [float(x0)]
    records = []
    y = float(x0)
    jump_sum = 0.0
    for t0, t1 in zip(knots[:-1], knots[1:]):
        b0 = float(brown.value(t0)) if brown is not None else 0.0
        if brown is not None:
            slope = (float(brown.value(t1)) - b0) / (t1 - t0)
        else:
            slope = 0.0
        base = jump_sum + b0 - slope * t0

        def f(t, u):
            return a_val(u + drift * t + base + slope * t)

        n = substep_count(t1 - t0, step)
        h = (t1 - t0) / n
        t = t0
        for i in range(n):
            y = _rk4_step(f, t, y, h)
            t = t1 if i == n - 1 else t0 + (i + 1) * h
            if not math.isfinite(y):
                raise SolverBlowUp(
                    f"state became non-finite near t={t}", last_good_time=t0)
            times.append(t)
            ys.append(y)
            xs.append(y + drift * t + base + slope * t)
        if t1 in jump_at:
            size = jump_at[t1]
            x_left = xs[-1]
            jump_sum += size
            x_right = x_left + size
            times.append(t1)
            ys.append(y)
            xs.append(x_right)
            records.append((t1, x_left, x_right, size))

    times_arr = np.asarray(times)
    ys_arr = np.asarray(ys)
    xs_arr = np.asarray(xs)
    fderiv = float(np.exp(np.trapezoid(
        np.asarray([a.derivative(x) for x in xs]), times_arr)))
    return FlowSolution(
        times=times_arr, y_values=ys_arr, x_values=xs_arr,
        jump_records=tuple(records),
        terminal_y=float(ys_arr[-1]), terminal_x=float(xs_arr[-1]),
        flow_derivative=fderiv, horizon=path.horizon, x0=float(x0), step=step)


def flow_derivative_exponential(a: ScalarField, solution: FlowSolution) -> float:
    """exp of the trapezoid quadrature of a'(X_s) along the stored grid."""
    vals = np.asarray([a.derivative(x) for x in solution.x_values])
    return float(np.exp(np.trapezoid(vals, solution.times)))


def flow_derivative_variational(a: ScalarField, path: LevyPath, x0: float,
                                step: float | None = None) -> float:
    """Independent route: integrate u' = a'(Y + Z) u alongside Y' = a(Y + Z).

    Kept free of the exponential formula so it can serve as its oracle.
    """
    if step is None:
        step = default_step(path.horizon)
    a_val, a_dot = a.value, a.derivative
    drift = path.drift_rate
    brown = path.brownian
    knots = segment_knots(path)
    jump_sum = 0.0
    jump_at = {float(t): float(s)
               for t, s in zip(path.jump_times, path.jump_sizes)}
    y, u = float(x0), 1.0
    for t0, t1 in zip(knots[:-1], knots[1:]):
        b0 = float(brown.value(t0)) if brown is not None else 0.0
        slope = ((float(brown.value(t1)) - b0) / (t1 - t0)) if brown is not None else 0.0
        base = jump_sum + b0 - slope * t0

        def f(t, state):
            yv, uv = state
            x = yv + drift * t + base + slope * t
            return np.array([a_val(x), a_dot(x) * uv])

        n = substep_count(t1 - t0, step)
        h = (t1 - t0) / n
        state = np.array([y, u])
        t = t0
        for i in range(n):
            k1 = f(t, state)
            k2 = f(t + 0.5 * h, state + 0.5 * h * k1)
            k3 = f(t + 0.5 * h, state + 0.5 * h * k2)
            k4 = f(t + h, state + h * k3)
            state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = t1 if i == n - 1 else t0 + (i + 1) * h
        y, u = float(state[0]), float(state[1])
        if t1 in jump_at:
            jump_sum += jump_at[t1]
    return u


def jump_time_derivative(a: ScalarField, solution: FlowSolution,
                         decomp: PathDecomposition | float,
                         eval_time: float | None = None) -> float:
    """Derivative of the terminal Y with respect to the marked jump time.

    `solution` must be the solved trajectory of the path containing the
    marked jump; `decomp` may be the decomposition or the marked time itself.
    """
    if eval_time is None:
        eval_time = solution.horizon
    if eval_time != solution.horizon:
        raise ValueError("eval_time must equal the solution horizon")
    T = decomp.T if isinstance(decomp, PathDecomposition) else float(decomp)
    if T > eval_time:
        return 0.0
    if T == eval_time:
        raise NonDifferentiablePoint(
            "one-sided derivatives differ when the marked jump sits at the horizon")
    record = next((r for r in solution.jump_records if r[0] == T), None)
    if record is None:
        raise ValueError("solution has no jump at the marked time")
    _, x_left, x_right, _ = record
    i0 = int(np.searchsorted(solution.times, T, side="left"))
    times = solution.times[i0:]
    vals = np.asarray([a.derivative(x) for x in solution.x_values[i0:]])
    quad = float(np.trapezoid(vals, times))
    return (a.value(x_left) - a.value(x_right)) * math.exp(quad)


def hitting_time_of_slope(a: ScalarField, solution: FlowSolution,
                          c: float) -> float | None:
    """First time |a'(X_t)| >= c, refined by bisection inside the grid cell."""
    if c <= 0.0:
        raise ValueError("c must be > 0")
    vals = np.abs(np.asarray([a.derivative(x) for x in solution.x_values]))
    hits = np.flatnonzero(vals >= c)
    if hits.size == 0:
        return None
    i = int(hits[0])
    if i == 0:
        return float(solution.times[0])
    t_lo, t_hi = float(solution.times[i - 1]), float(solution.times[i])
    if t_hi == t_lo:
        return t_hi
    x_lo, x_hi = float(solution.x_values[i - 1]), float(solution.x_values[i])

    def g(t: float) -> float:
        x = x_lo + (x_hi - x_lo) * (t - t_lo) / (t_hi - t_lo)
        return abs(a.derivative(x)) - c

    lo, hi = t_lo, t_hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return hi
