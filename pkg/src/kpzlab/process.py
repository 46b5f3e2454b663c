"""Variational composition of initial data with landscape slices.

Implements the height evolution h(x) = max_z { beta B(z) + L(z; x) },
rightmost argmax extraction, time-t argmax scaling, linear observables of
the height, and the explicit step-function form of the Malliavin
derivative of such observables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SampleInvalidError
from .initial import (BrownianPath, SmoothTestFunction, StepFunction,
                      _grid_index)
from .lpp import LandscapeSlice

_Z_TOL = 1e-9


@dataclass(frozen=True)
class HeightSample:
    """Composed height at time 1 with rightmost argmaxes.

    ``censored[k]`` marks an argmax that landed on the z-window boundary;
    such entries are excluded from argmax statistics downstream.
    """

    x_grid: np.ndarray
    h: np.ndarray
    z_argmax: np.ndarray
    censored: np.ndarray
    replica_id: int
    beta: float

    def h_at(self, x: float) -> float:
        return float(self.h[_grid_index(self.x_grid, x)])

    def z_at(self, x: float) -> float:
        k = _grid_index(self.x_grid, x)
        if self.censored[k]:
            raise SampleInvalidError(
                f"argmax at x={x} is censored (z-window boundary)")
        return float(self.z_argmax[k])


def compose_height(slice_: LandscapeSlice, path: BrownianPath, beta: float,
                   x_grid=None) -> HeightSample:
    """h(x_k) = max_j { beta B(z_j) + L(z_j; x_k) } with rightmost argmax.

    Exact float ties are broken toward the largest z.  The argmax is
    flagged censored when it sits on the first or last z-grid point.
    """
    if beta < 0:
        raise DomainError("beta must be >= 0")
    z = slice_.z_grid
    if len(path.z_grid) != len(z) or not np.allclose(path.z_grid, z, atol=1e-9):
        raise DomainError("slice and path must share one z-grid")
    if x_grid is None:
        cols = np.arange(len(slice_.x_grid))
        xg = slice_.x_grid
    else:
        xg = np.asarray(x_grid, dtype=float)
        cols = np.array([_grid_index(slice_.x_grid, x) for x in xg])
    surface = beta * path.values[:, None] + slice_.values[:, cols]
    # rightmost argmax: argmax of the reversed column finds the last peak
    rev_idx = np.argmax(surface[::-1, :], axis=0)
    idx = len(z) - 1 - rev_idx
    h = surface[idx, np.arange(len(cols))]
    return HeightSample(
        x_grid=xg,
        h=h,
        z_argmax=z[idx],
        censored=(idx == 0) | (idx == len(z) - 1),
        replica_id=slice_.replica_id,
        beta=beta,
    )


def time_t_argmax(z1, x: float, t: float):
    """Argmax at time t from a time-1 argmax sample: x + t**(2/3) * z1."""
    if t <= 0:
        raise DomainError("time t must be positive")
    z1 = np.asarray(z1, dtype=float)
    out = x + t ** (2.0 / 3.0) * z1
    return out if out.ndim else float(out)


def observable_step(sample: HeightSample, phi: StepFunction) -> float:
    """X^phi = sum_i c_i (h(x_i) - h(x_{i-1})); breakpoints must lie on the
    sample's x-grid."""
    hs = np.array([sample.h_at(b) for b in phi.breakpoints])
    return float(np.sum(phi.values * np.diff(hs)))


def observable_smooth(sample: HeightSample, phi: SmoothTestFunction) -> float:
    """X^phi = -int phi'(x) h(x) dx by trapezoid quadrature on the x-grid."""
    xg = sample.x_grid
    if phi.a < xg[0] - _Z_TOL or phi.b > xg[-1] + _Z_TOL:
        raise DomainError(
            f"support [{phi.a}, {phi.b}] exceeds the x-grid range "
            f"[{xg[0]}, {xg[-1]}]")
    return float(-np.trapezoid(phi.derivative(xg) * sample.h, xg))


@dataclass(frozen=True)
class MalliavinField:
    """Explicit derivative field u -> DX^phi(u) of a step observable.

    A step function taking values beta * c_j on the argmax intervals
    (Z(x_{j-1}), Z(x_j)]; empty intervals contribute nothing.
    """

    field: StepFunction
    source: StepFunction
    beta: float

    @property
    def norm_sq(self) -> float:
        """Exact ||DX||^2 = beta^2 sum c_j^2 (Z(x_j) - Z(x_{j-1}))."""
        return self.field.l2_norm_sq

    def inner_product(self, phi1: StepFunction) -> float:
        """<DX^phi, phi1> via the closed-form antiderivative of phi1."""
        psi = phi1.antiderivative(self.field.breakpoints)
        return float(np.sum(self.field.values * np.diff(psi)))


def malliavin_field(sample: HeightSample, phi: StepFunction) -> MalliavinField:
    """DX^phi = beta * sum_j c_j 1_{(Z(x_{j-1}), Z(x_j)]}.

    Raises `SampleInvalidError` when any involved argmax is censored; the
    caller discards the replica and counts it.
    """
    zs = np.array([sample.z_at(b) for b in phi.breakpoints])
    if np.any(np.diff(zs) < 0):
        raise DomainError("argmaxes are not monotone across phi's breakpoints")
    return MalliavinField(
        field=StepFunction(zs, sample.beta * phi.values),
        source=phi,
        beta=sample.beta,
    )


def directional_derivative_check(slice_: LandscapeSlice, path: BrownianPath,
                                 phi_dir: StepFunction, phi_obs: StepFunction,
                                 beta: float, eps: float):
    """Finite-difference directional derivative vs the exact <DX, phi_dir>.

    Returns (fd, exact, argmax_moved); when the perturbation flips an
    argmax the finite difference picks up an O(1) jump and the replica
    should be discarded.
    """
    from .initial import perturb

    if eps <= 0:
        raise DomainError("finite-difference step eps must be positive")
    base = compose_height(slice_, path, beta)
    bumped = compose_height(slice_, perturb(path, phi_dir, eps), beta)
    fd = (observable_step(bumped, phi_obs) - observable_step(base, phi_obs)) / eps
    exact = malliavin_field(base, phi_obs).inner_product(phi_dir)
    moved = not np.array_equal(base.z_argmax, bumped.z_argmax)
    return fd, exact, moved
