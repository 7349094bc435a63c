"""Diffeomorphic reductions for the elliptic jump SDE.

With a nonvanishing diffusion coefficient sigma, three classical devices
turn the Marcus equation into something already solved elsewhere:

* unit_diffusion_transform — f(x) = int dt/sigma from a base point conjugates
  the equation to one with unit diffusion and drift (a/sigma) o f^-1;
* proportional_solution — when a = k*sigma the solution is the sigma-flow
  evaluated at the linearly drifted driver, in closed form;
* doss_sussman_solve — X_t = phi(Y_t, Z_t) with Y solving a random ODE whose
  right-hand side divides a by the flow's state sensitivity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .flow_engine import ScalarField, segment_knots, substep_count
from .marcus import DiffusionField, FlowDivergence, flow_with_sensitivity, jump_flow_phi
from .path_sampler import LevyPath
from .quadrature import adaptive_simpson


class AssumptionHViolation(ValueError):
    """sigma vanishes (or changes sign) on the requested range."""


@dataclass(frozen=True)
class Diffeomorphism:
    """Strictly monotone change of variables with a numeric inverse."""

    forward: Callable[[float], float]
    forward_derivative: Callable[[float], float]
    inverse: Callable[[float], float]
    base_point: float
    range_lo: float
    range_hi: float

    def validate(self, n: int = 101) -> None:
        xs = np.linspace(self.range_lo, self.range_hi, n)
        fwd = [self.forward(float(x)) for x in xs]
        diffs = np.diff(fwd)
        if not (np.all(diffs > 0.0) or np.all(diffs < 0.0)):
            raise ValueError("forward map is not strictly monotone on its range")
        for x, y in zip(xs, fwd):
            if abs(self.inverse(y) - float(x)) > 1e-9 * (1.0 + abs(float(x))):
                raise ValueError(f"inverse roundtrip failed at x={x}")


def unit_diffusion_transform(sigma: DiffusionField, base_point: float,
                             range_lo: float, range_hi: float,
                             cells: int = 512) -> Diffeomorphism:
    """Build f(x) = int_base^x dt/sigma(t) with a cumulative quadrature table.

    sigma must keep a fixed sign on [range_lo, range_hi]; the integral is
    accumulated per table cell with adaptive Simpson (tol 1e-12 per cell) and
    point evaluations only integrate across the enclosing cell.
    """
    if not (range_lo < range_hi):
        raise ValueError("need range_lo < range_hi")
    if not (range_lo <= base_point <= range_hi):
        raise ValueError("base_point must lie in the range")
    nodes = np.linspace(range_lo, range_hi, cells + 1)
    sig_vals = np.array([sigma.value(float(x)) for x in nodes])
    floor = sigma.min_abs if sigma.min_abs is not None else 1e-12
    if np.any(np.abs(sig_vals) < floor) or np.any(np.sign(sig_vals) != np.sign(sig_vals[0])):
        raise AssumptionHViolation(
            "sigma vanishes or changes sign on the requested range")

    inv = lambda t: 1.0 / sigma.value(t)
    cell_ints = np.array([
        adaptive_simpson(inv, float(nodes[k]), float(nodes[k + 1]), tol=1e-12)
        for k in range(cells)])
    cumulative = np.concatenate([[0.0], np.cumsum(cell_ints)])
    base_val = None  # filled below via the raw table

    def forward_raw(x: float) -> float:
        if x < range_lo:
            return cumulative[0] + adaptive_simpson(inv, range_lo, x, tol=1e-12)
        if x > range_hi:
            return cumulative[-1] + adaptive_simpson(inv, range_hi, x, tol=1e-12)
        k = min(int(np.searchsorted(nodes, x, side="right")) - 1, cells - 1)
        k = max(k, 0)
        return float(cumulative[k]) + adaptive_simpson(inv, float(nodes[k]), x, tol=1e-12)

    base_val = forward_raw(base_point)

    def forward(x: float) -> float:
        return forward_raw(x) - base_val

    increasing = sig_vals[0] > 0.0

    def inverse(y: float) -> float:
        target = y + base_val
        table = cumulative if increasing else -cumulative
        t = target if increasing else -target
        if t <= table[0]:
            x = range_lo
        elif t >= table[-1]:
            x = range_hi
        else:
            k = int(np.searchsorted(table, t)) - 1
            x = float(nodes[k])
        # Newton on forward_raw; derivative is 1/sigma
        for _ in range(100):
            r = forward_raw(x) - target
            if abs(r) <= 1e-13 * (1.0 + abs(target)):
                break
            x = x - r * sigma.value(x)
        return x

    diffeo = Diffeomorphism(
        forward=forward,
        forward_derivative=lambda x: 1.0 / sigma.value(x),
        inverse=inverse,
        base_point=base_point,
        range_lo=range_lo,
        range_hi=range_hi,
    )
    return diffeo


def reduced_drift(a: ScalarField, sigma: DiffusionField,
                  diffeo: Diffeomorphism) -> ScalarField:
    """Drift of the unit-diffusion conjugate: y -> (a/sigma)(f^-1(y))."""
    inv = diffeo.inverse
    a_val, a_dot = a.value, a.derivative
    s_val, s_dot = sigma.value, sigma.derivative

    def value(y: float) -> float:
        x = inv(y)
        return a_val(x) / s_val(x)

    def derivative(y: float) -> float:
        # chain rule with (f^-1)'(y) = sigma(f^-1(y))
        x = inv(y)
        return (a_dot(x) * s_val(x) - a_val(x) * s_dot(x)) / s_val(x)

    return ScalarField(value=value, derivative=derivative)


def proportional_solution(sigma: DiffusionField, k: float, x0: float,
                          path: LevyPath, tol: float = 1e-10) -> float:
    """Closed-form terminal value when a = k * sigma: the sigma-flow of x0
    evaluated at Z_horizon + k * horizon."""
    return jump_flow_phi(sigma, x0, path.terminal + k * path.horizon, tol)


def phi_inverse_psi(sigma: DiffusionField, x: float, t: float,
                    tol: float = 1e-9, max_expansions: int = 60) -> float:
    """Solve phi(x, psi) = t for psi by bracketed bisection plus Newton."""
    flow = lambda u: jump_flow_phi(sigma, x, u, min(tol, 1e-10))
    if t == x:
        return 0.0
    increasing = sigma.value(x) > 0.0
    sign = 1.0 if increasing else -1.0
    # G(u) = sign * phi(x, u) is strictly increasing in u; solve G(u) = sign*t
    G = lambda u: sign * flow(u)
    target = sign * t
    g0 = sign * x
    step_dir = 1.0 if target > g0 else -1.0
    u_far = step_dir
    expansions = 0
    while (G(u_far) - target) * step_dir < 0.0:
        u_far *= 2.0
        expansions += 1
        if expansions > max_expansions:
            raise RuntimeError(
                f"bracketing failed for psi({x}, {t}) after {max_expansions} expansions")
    lo, hi = (0.0, u_far) if u_far > 0.0 else (u_far, 0.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if G(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * (1.0 + abs(hi)):
            break
    u = 0.5 * (lo + hi)
    for _ in range(50):
        v = flow(u)
        if abs(v - t) <= tol:
            return u
        u = u - (v - t) / sigma.value(v)
    raise RuntimeError(f"psi({x}, {t}) did not converge to tol={tol}")


def doss_sussman_drift(a: ScalarField, sigma: DiffusionField,
                       x: float, z: float) -> float:
    """b(x, z) = a(phi(x, z)) / phi_x(x, z), the random-ODE right-hand side."""
    if z == 0.0:
        return a.value(x)
    phi, log_sens = flow_with_sensitivity(sigma, x, z)
    return a.value(phi) * math.exp(-log_sens)


def doss_sussman_solve(a: ScalarField, sigma: DiffusionField, path: LevyPath,
                       x0: float, step: float | None = None,
                       phi_tol: float = 1e-10) -> float:
    """Terminal value via X_t = phi(Y_t, Z_t) with Y a pathwise random ODE.

    The flow-commutation that makes this exact holds for the Marcus jump
    rule in one dimension for any cadlag driver, Brownian part or not.
    """
    if step is None:
        step = path.horizon / 4096.0
    drift = path.drift_rate
    brown = path.brownian
    jump_at = {float(t): float(s)
               for t, s in zip(path.jump_times, path.jump_sizes)}
    knots = segment_knots(path)
    y = float(x0)
    jump_sum = 0.0
    for t0, t1 in zip(knots[:-1], knots[1:]):
        b0 = float(brown.value(t0)) if brown is not None else 0.0
        slope = ((float(brown.value(t1)) - b0) / (t1 - t0)) if brown is not None else 0.0
        base = jump_sum + b0 - slope * t0

        def f(t, u):
            return doss_sussman_drift(a, sigma, u, drift * t + base + slope * t)

        n = substep_count(t1 - t0, step)
        h = (t1 - t0) / n
        t = t0
        for i in range(n):
            k1 = f(t, y)
            k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = f(t + h, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not math.isfinite(y):
                raise FlowDivergence(f"transformed state diverged near t={t}")
            t = t1 if i == n - 1 else t0 + (i + 1) * h
        if t1 in jump_at:
            jump_sum += jump_at[t1]
    return jump_flow_phi(sigma, y, path.terminal, phi_tol)
