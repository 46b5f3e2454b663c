"""Brownian initial data and test-function algebra.

Samples the two-sided Brownian profile on a grid, evaluates linear
observables of it, and provides the step-function machinery (closed-form
L2 norms, antiderivatives, cross-correlations) used throughout the
estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.random import Generator, Philox

from .errors import DomainError

_GRID_TOL = 1e-9


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous-in-breakpoint step function of bounded support.

    phi(x) = values[i] on (breakpoints[i], breakpoints[i+1]] and zero
    outside [breakpoints[0], breakpoints[-1]].
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or vals.ndim != 1 or len(bp) != len(vals) + 1:
            raise DomainError(
                "step function needs n+1 breakpoints for n values, got "
                f"{len(bp)} and {len(vals)}")
        if np.any(np.diff(bp) < 0):
            raise DomainError("step-function breakpoints must be nondecreasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="left") - 1
        inside = (x > self.breakpoints[0]) & (x <= self.breakpoints[-1])
        out = np.where(inside, self.values[np.clip(idx, 0, len(self.values) - 1)], 0.0)
        return out if out.ndim else float(out)

    @property
    def l2_norm_sq(self) -> float:
        gaps = np.diff(self.breakpoints)
        return float(np.sum(self.values ** 2 * gaps))

    @property
    def integral(self) -> float:
        return float(np.sum(self.values * np.diff(self.breakpoints)))

    def antiderivative(self, x):
        """psi(x) = int_0^x phi, the exact piecewise-linear cumulative."""
        x = np.asarray(x, dtype=float)
        bp, c = self.breakpoints, self.values
        cum = np.concatenate([[0.0], np.cumsum(c * np.diff(bp))])
        at0 = np.interp(0.0, bp, cum, left=0.0, right=cum[-1])
        out = np.interp(x, bp, cum, left=0.0, right=cum[-1]) - at0
        return out if out.ndim else float(out)

    def scaled_breakpoints(self, factor: float) -> "StepFunction":
        """Same values on breakpoints divided by ``factor``.

        This is the 1:2:3 spatial rescaling of an observable: the t-time
        observable with kernel phi matches the time-1 observable with
        kernel phi on breakpoints / t**(2/3).
        """
        if factor <= 0:
            raise DomainError("breakpoint scale factor must be positive")
        return StepFunction(self.breakpoints / factor, self.values)

    def fingerprint(self) -> tuple:
        return (tuple(self.breakpoints.tolist()), tuple(self.values.tolist()))


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function, zero outside its knot range."""

    knots: np.ndarray
    values: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.knots, self.values, left=0.0, right=0.0)
        return out if out.ndim else float(out)

    @property
    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.knots))


@dataclass(frozen=True)
class SmoothTestFunction:
    """C^1 test function of bounded support with its exact derivative."""

    a: float
    b: float
    fn: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    deriv_bound: float
    name: str = "smooth"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.a) & (x < self.b)
        out = np.where(inside, self.fn(np.clip(x, self.a, self.b)), 0.0)
        return out if out.ndim else float(out)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.a) & (x < self.b)
        out = np.where(inside, self.deriv(np.clip(x, self.a, self.b)), 0.0)
        return out if out.ndim else float(out)


def bump(a: float, b: float, amplitude: float = 1.0) -> SmoothTestFunction:
    """Smooth compactly supported bump amp * e * exp(-1/(1-s^2)) on (a, b)."""
    if b <= a:
        raise DomainError("bump requires a < b")
    half = (b - a) / 2.0
    mid = (a + b) / 2.0

    def _s(x):
        return (np.asarray(x, dtype=float) - mid) / half

    def fn(x):
        s = np.clip(_s(x), -1 + 1e-12, 1 - 1e-12)
        return amplitude * np.e * np.exp(-1.0 / (1.0 - s ** 2))

    def deriv(x):
        s = np.clip(_s(x), -1 + 1e-12, 1 - 1e-12)
        return fn(x) * (-2.0 * s / (1.0 - s ** 2) ** 2) / half

    # max of |phi'| for the standard bump occurs near |s| = 0.5; a dense
    # scan is cheap and exact enough for a declared sup-norm
    xs = np.linspace(a + 1e-9, b - 1e-9, 4001)
    bound = float(np.max(np.abs(deriv(xs)))) * 1.0001
    return SmoothTestFunction(a, b, fn, deriv, bound, name=f"bump[{a},{b}]")


def cosine_taper(a: float, b: float, amplitude: float = 1.0) -> SmoothTestFunction:
    """Raised-cosine window amp * (1 + cos(pi s)) / 2 on (a, b)."""
    if b <= a:
        raise DomainError("cosine_taper requires a < b")
    half = (b - a) / 2.0
    mid = (a + b) / 2.0

    def fn(x):
        s = (np.asarray(x, dtype=float) - mid) / half
        return amplitude * 0.5 * (1.0 + np.cos(np.pi * s))

    def deriv(x):
        s = (np.asarray(x, dtype=float) - mid) / half
        return -amplitude * 0.5 * np.pi * np.sin(np.pi * s) / half

    bound = amplitude * 0.5 * np.pi / half
    return SmoothTestFunction(a, b, fn, deriv, bound, name=f"cosine-taper[{a},{b}]")


@dataclass(frozen=True)
class BrownianPath:
    """Two-sided Brownian motion evaluated on a grid, anchored B(0) = 0."""

    z_grid: np.ndarray
    values: np.ndarray
    seed: int

    def __post_init__(self):
        z = np.asarray(self.z_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if np.any(np.diff(z) <= 0):
            raise DomainError("path grid must be strictly increasing")
        object.__setattr__(self, "z_grid", z)
        object.__setattr__(self, "values", v)

    def value_at(self, z: float) -> float:
        idx = _grid_index(self.z_grid, z)
        return float(self.values[idx])


def _grid_index(grid: np.ndarray, z: float) -> int:
    idx = int(np.searchsorted(grid, z))
    for k in (idx - 1, idx, idx + 1):
        if 0 <= k < len(grid) and abs(grid[k] - z) <= _GRID_TOL * max(1.0, abs(z)):
            return k
    raise DomainError(f"coordinate {z} is not on the grid")


def sample_path(z_grid, seed: int, stream: int = 0) -> BrownianPath:
    """Brownian values on z_grid with independent Gaussian increments.

    Pure function of (seed, stream): replaying the same pair reproduces
    the path bit-exactly.
    """
    z = np.asarray(z_grid, dtype=float)
    if z.ndim != 1 or len(z) < 1 or np.any(np.diff(z) <= 0):
        raise DomainError("z_grid must be one-dimensional and strictly increasing")
    try:
        i0 = _grid_index(z, 0.0)
    except DomainError:
        raise DomainError("z_grid must contain 0 (the anchoring point of the path)")
    rng = Generator(Philox(key=np.array([seed & (2**64 - 1), 0x62726F776E], dtype=np.uint64),
                           counter=[0, 0, np.uint64(stream), 0]))
    incs = rng.standard_normal(len(z) - 1) * np.sqrt(np.diff(z))
    vals = np.concatenate([[0.0], np.cumsum(incs)])
    vals -= vals[i0]
    vals[i0] = 0.0
    return BrownianPath(z_grid=z, values=vals, seed=seed)


def perturb(path: BrownianPath, phi: StepFunction, eps: float) -> BrownianPath:
    """Shift the path by eps times the antiderivative of phi."""
    psi = phi.antiderivative(path.z_grid)
    return BrownianPath(z_grid=path.z_grid, values=path.values + eps * psi,
                        seed=path.seed)


def wiener_integral(phi: StepFunction, path: BrownianPath, beta: float) -> float:
    """X_0^phi = beta * sum_i c_i (B(x_i) - B(x_{i-1})), exact on the grid."""
    bp = phi.breakpoints
    vals = np.array([path.value_at(b) for b in bp])
    return float(beta * np.sum(phi.values * np.diff(vals)))


def zeta(x: float, u):
    """zeta_x(u): 1_{(0,x]}(u) for x > 0, -1_{(x,0]}(u) for x < 0, else 0."""
    u = np.asarray(u, dtype=float)
    if x > 0:
        out = np.where((u > 0) & (u <= x), 1.0, 0.0)
    elif x < 0:
        out = np.where((u > x) & (u <= 0), -1.0, 0.0)
    else:
        out = np.zeros_like(u)
    return out if out.ndim else float(out)


def cross_correlation(phi1: StepFunction, phi2: StepFunction, z: float) -> float:
    """(phi1 * phi2)(z) = int phi1(u) phi2(u + z) du, exact.

    Sum over cell pairs of value products times overlap lengths; the
    second function's cells are shifted left by z.
    """
    a, c = phi1.breakpoints, phi1.values
    b, d = phi2.breakpoints, phi2.values
    total = 0.0
    for i in range(len(c)):
        if c[i] == 0.0:
            continue
        for j in range(len(d)):
            lo = max(a[i], b[j] - z)
            hi = min(a[i + 1], b[j + 1] - z)
            if hi > lo:
                total += c[i] * d[j] * (hi - lo)
    return total


def cross_correlation_function(phi1: StepFunction, phi2: StepFunction) -> PiecewiseLinear:
    """The full map z -> (phi1 * phi2)(z), piecewise linear with kinks at
    differences of breakpoints."""
    knots = np.unique(np.subtract.outer(phi2.breakpoints, phi1.breakpoints).ravel())
    vals = np.array([cross_correlation(phi1, phi2, z) for z in knots])
    return PiecewiseLinear(knots=knots, values=vals)
