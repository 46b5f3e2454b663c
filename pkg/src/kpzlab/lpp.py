"""Exponential last-passage percolation engine.

Generates seeded Exp(1) weight lattices, runs streaming corner-growth
dynamic programming from boundary sources to sinks, and rescales the
passage times into spatial slices of the limiting height field.

Conventions
-----------
Lattice sites are 1-based pairs (i, j) with 1 <= i, j <= 2n.  A monotone
path from p to q (p <= q componentwise) moves by +1 in one coordinate per
step and collects the weights of every site it visits, endpoints included.
G(p -> q) is the maximal collected weight.  For a displacement spanning
(di, dj) sites inclusive, the centering surrogate is mu = (sqrt(di) +
sqrt(dj))**2 and fluctuations live on the scale c_h * N**(1/3).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from numpy.random import Generator, Philox

from .errors import CalibrationError, DomainError

# Published Tracy-Widom GUE point statistics (Painleve-II tabulation).
TW_GUE_MEAN = -1.7710868074
TW_GUE_VAR = 0.8131947928

# Fluctuation and transversal constants for Exp(1) corner growth in the
# diagonal direction; used as starting values, refined by calibration.
C_H_DEFAULT = 2.0 ** (4.0 / 3.0)
C_X_DEFAULT = 2.0 ** (5.0 / 3.0)

_ROW_BLOCK = 128
_TINY = 5e-324


@dataclass(frozen=True)
class WeightField:
    """Deterministic lattice of Exp(1) weights, materialized on demand.

    weight(i, j) is a pure function of (master_seed, replica_id, i, j):
    row i is an independent Philox stream keyed by the seeds with the row
    index in the counter block, so distinct sites never share counter
    input and any prefix of a row replays bit-exactly.
    """

    n: int
    master_seed: int
    replica_id: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"field half-width must be >= 1, got {self.n}")

    @property
    def size(self) -> int:
        return 2 * self.n

    def _row_stream(self, i: int) -> Generator:
        key = np.array([self.master_seed & (2**64 - 1), self.replica_id], dtype=np.uint64)
        return Generator(Philox(key=key, counter=[0, 0, np.uint64(i), 0]))

    def row(self, i: int, j0: int, j1: int) -> np.ndarray:
        """Weights w(i, j) for j in [j0, j1)."""
        self._check_bounds(i, j0)
        self._check_bounds(i, j1 - 1)
        raw = self._row_stream(i).standard_exponential(j1 - 1)
        return np.maximum(raw[j0 - 1:], _TINY)

    def rows(self, i0: int, i1: int, j0: int, j1: int) -> np.ndarray:
        """Weight block for rows [i0, i1) and columns [j0, j1)."""
        out = np.empty((i1 - i0, j1 - j0))
        for k, i in enumerate(range(i0, i1)):
            out[k] = self.row(i, j0, j1)
        return out

    def weight(self, i: int, j: int) -> float:
        return float(self.row(i, j, j + 1)[0])

    def _check_bounds(self, i: int, j: int) -> None:
        if not (1 <= i <= self.size and 1 <= j <= self.size):
            raise DomainError(
                f"lattice site ({i}, {j}) outside field bounds [1, {self.size}]^2"
            )


@njit(cache=True)
def _dp_block(w, g, src_rel_rows, src_cols, out):
    """One streaming chunk of the backward corner-growth recursion.

    ``g`` carries G(i+1, .) for the row below the chunk; rows of ``w`` are
    ascending lattice rows and are consumed from the bottom up.  Whenever a
    requested source row is reached its G value is copied into ``out``.
    """
    nb, nc = w.shape
    for r in range(nb - 1, -1, -1):
        right = -np.inf
        for j in range(nc - 1, -1, -1):
            below = g[j]
            m = below if below > right else right
            v = w[r, j] + m
            g[j] = v
            right = v
        for k in range(src_rel_rows.shape[0]):
            if src_rel_rows[k] == r:
                out[k] = g[src_cols[k]]


def _dp_from_slab(slab, src_rows, src_cols):
    """Backward DP over a materialized weight slab (local 0-based coords).

    The sink is the bottom-right corner of ``slab``; returns G values at
    the given source positions.
    """
    nrows, ncols = slab.shape
    g = np.full(ncols, -np.inf)
    g[ncols - 1] = 0.0
    out = np.empty(len(src_rows))
    _dp_block(slab, g, np.asarray(src_rows, dtype=np.int64),
              np.asarray(src_cols, dtype=np.int64), out)
    return out


def lpp_value_table(field: WeightField, sink: tuple[int, int],
                    sources=None) -> np.ndarray:
    """Passage times G(p -> sink) for the requested sources.

    Runs one backward pass of the recursion G(i,j) = w(i,j) +
    max(G(i+1,j), G(i,j+1)); weight rows are generated in blocks so only
    O(row width) state is held, never the O(area) table.

    ``sources`` is a sequence of (i, j) pairs with p <= sink componentwise;
    by default every source on the rectangle corner row/column is not
    needed, so the argument is required for more than one value.
    """
    si, sj = sink
    field._check_bounds(si, sj)
    if sources is None:
        sources = [(1, 1)]
    src = np.asarray(sources, dtype=np.int64)
    if src.ndim != 2 or src.shape[1] != 2:
        raise DomainError("sources must be a sequence of (i, j) pairs")
    if np.any(src < 1) or np.any(src[:, 0] > si) or np.any(src[:, 1] > sj):
        raise DomainError("every source must satisfy 1 <= p <= sink componentwise")

    imin = int(src[:, 0].min())
    jmin = int(src[:, 1].min())
    ncols = sj - jmin + 1
    g = np.full(ncols, -np.inf)
    g[ncols - 1] = 0.0
    out = np.empty(len(src), dtype=float)
    src_cols = src[:, 1] - jmin

    hi = si
    while hi >= imin:
        lo = max(imin, hi - _ROW_BLOCK + 1)
        w = field.rows(lo, hi + 1, jmin, sj + 1)
        in_block = (src[:, 0] >= lo) & (src[:, 0] <= hi)
        rel = np.where(in_block, src[:, 0] - lo, np.int64(-1))
        sub_out = np.empty(len(src))
        _dp_block(w, g, rel, src_cols.astype(np.int64), sub_out)
        out[in_block] = sub_out[in_block]
        hi = lo - 1
    return out


@dataclass(frozen=True)
class LatticeGeometry:
    """Mapping between rescaled coordinates and lattice sites.

    Sources sit on the anti-diagonal through (origin, origin), sinks on
    the one through (origin + N - 1, origin + N - 1); a rescaled
    coordinate u maps to the anti-diagonal offset round(c_x * N**(2/3) *
    u / 2).  The stored grids are the effective (de-rounded) coordinates.
    """

    big_n: int
    z_grid: np.ndarray
    x_grid: np.ndarray
    c_h: float = C_H_DEFAULT
    c_x: float = C_X_DEFAULT
    origin: int = field(init=False, default=0)
    z_offsets: np.ndarray = field(init=False, default=None)
    x_offsets: np.ndarray = field(init=False, default=None)

    def __post_init__(self):
        if self.big_n < 1:
            raise DomainError("scaling parameter N must be >= 1")
        rho = self.anti_diagonal_scale
        z_off = np.round(rho * np.asarray(self.z_grid, dtype=float)).astype(np.int64)
        x_off = np.round(rho * np.asarray(self.x_grid, dtype=float)).astype(np.int64)
        for name, off in (("z_grid", z_off), ("x_grid", x_off)):
            if len(off) == 0:
                raise DomainError(f"{name} must be nonempty")
            if np.any(np.diff(off) <= 0):
                raise DomainError(
                    f"{name} does not map to strictly increasing lattice offsets; "
                    "widen the spacing or increase N")
        max_off = max(int(np.abs(z_off).max()), int(np.abs(x_off).max()), 0)
        object.__setattr__(self, "origin", max_off + 1)
        object.__setattr__(self, "z_offsets", z_off)
        object.__setattr__(self, "x_offsets", x_off)
        object.__setattr__(self, "z_grid", z_off / rho)
        object.__setattr__(self, "x_grid", x_off / rho)

    @property
    def anti_diagonal_scale(self) -> float:
        """Lattice offsets per unit of rescaled space (c_x N^{2/3} / 2)."""
        return self.c_x * self.big_n ** (2.0 / 3.0) / 2.0

    @property
    def height_scale(self) -> float:
        return self.c_h * self.big_n ** (1.0 / 3.0)

    def source(self, k: int) -> tuple[int, int]:
        a = int(self.z_offsets[k])
        return (self.origin + a, self.origin - a)

    def sink(self, k: int) -> tuple[int, int]:
        a = int(self.x_offsets[k])
        base = self.origin + self.big_n - 1
        return (base + a, base - a)

    def required_field_half_width(self) -> int:
        hi = self.origin + self.big_n - 1 + int(np.abs(self.x_offsets).max())
        return hi // 2 + 1

    def with_constants(self, c_h: float, c_x: float) -> "LatticeGeometry":
        return LatticeGeometry(big_n=self.big_n, z_grid=self.z_grid,
                               x_grid=self.x_grid, c_h=c_h, c_x=c_x)


@dataclass(frozen=True)
class LandscapeSlice:
    """Rescaled multi-source passage times on one weight replica.

    values[j, k] approximates the landscape from rescaled source z_grid[j]
    at time 0 to sink x_grid[k] at time 1, parabola included.
    """

    values: np.ndarray
    geometry: LatticeGeometry
    replica_id: int

    @property
    def z_grid(self) -> np.ndarray:
        return self.geometry.z_grid

    @property
    def x_grid(self) -> np.ndarray:
        return self.geometry.x_grid


def landscape_slice(field: WeightField, geom: LatticeGeometry) -> LandscapeSlice:
    """All (source, sink) passage times of one replica, centered and rescaled.

    One backward pass per sink reads every source in a single sweep.  The
    bounding weight slab is materialized once and shared across sinks;
    the streaming entry point stays `lpp_value_table`.

    Each raw value is centered by its exact mean surrogate (which removes
    the discrete curvature bias along with the parabola) and the limit
    parabola -(x - z)^2 is then restored analytically in the effective
    rescaled coordinates.
    """
    srcs = np.array([geom.source(k) for k in range(len(geom.z_grid))], dtype=np.int64)
    sinks = [geom.sink(k) for k in range(len(geom.x_grid))]
    imin = int(srcs[:, 0].min())
    jmin = int(min(srcs[:, 1].min(), min(s[1] for s in sinks)))
    imax = max(s[0] for s in sinks)
    jmax = max(s[1] for s in sinks)
    field._check_bounds(imin, jmin)
    field._check_bounds(imax, jmax)

    slab = field.rows(imin, imax + 1, jmin, jmax + 1)
    n_z, n_x = len(geom.z_grid), len(geom.x_grid)
    vals = np.empty((n_z, n_x))
    scale = geom.height_scale
    for k, (si, sj) in enumerate(sinks):
        view = slab[: si - imin + 1, : sj - jmin + 1]
        g = _dp_from_slab(view, srcs[:, 0] - imin, srcs[:, 1] - jmin)
        di = si - srcs[:, 0] + 1
        dj = sj - srcs[:, 1] + 1
        if di.min() < 1 or dj.min() < 1:
            raise DomainError(
                "a source lies beyond a sink on the lattice; the z/x windows "
                "are too wide for this N")
        mu = (np.sqrt(di) + np.sqrt(dj)) ** 2
        vals[:, k] = (g - mu) / scale - (geom.x_grid[k] - geom.z_grid) ** 2
    return LandscapeSlice(values=vals, geometry=geom, replica_id=field.replica_id)


def calibrate_constants(slices, small_z: float = 0.4,
                        min_ensemble: int = 1000) -> tuple[float, float]:
    """Fit (c_h, c_x) from an ensemble of slices sharing one geometry.

    Targets: the variance of the origin statistic equals the Tracy-Widom
    GUE variance, and increment variances behave like 2|z| as z -> 0 (the
    quadratic correction is fitted and discarded).
    """
    if len(slices) < min_ensemble:
        raise CalibrationError(
            f"calibration needs an ensemble of >= {min_ensemble} slices, "
            f"got {len(slices)}")
    geom = slices[0].geometry
    z = geom.z_grid
    j0 = int(np.argmin(np.abs(z)))
    k0 = int(np.argmin(np.abs(geom.x_grid)))
    vals = np.stack([s.values[:, k0] for s in slices])

    var0 = vals[:, j0].var(ddof=1)
    if var0 <= 0:
        raise CalibrationError("degenerate ensemble: zero variance at the origin")
    c_h = geom.c_h * np.sqrt(var0 / TW_GUE_VAR)

    sel = (np.abs(z - z[j0]) <= small_z) & (np.arange(len(z)) != j0)
    if not np.any(sel):
        raise CalibrationError(
            f"no z-grid points within {small_z} of the origin for the "
            "increment fit")
    dz = np.abs(z[sel] - z[j0])
    inc_var = (vals[:, sel] - vals[:, [j0]]).var(axis=0, ddof=1)
    # least squares for inc_var = a|dz| + b dz^2, slope a is the target
    A = np.stack([dz, dz ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(A, inc_var, rcond=None)
    slope = coef[0]
    if slope <= 0:
        raise CalibrationError("nonpositive increment-variance slope; ensemble too small")
    slope_corr = slope * (TW_GUE_VAR / var0)
    c_x = geom.c_x * 2.0 / slope_corr
    return float(c_h), float(c_x)
