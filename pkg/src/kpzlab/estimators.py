"""Monte-Carlo estimators for the scaling function and argmax law.

Everything funnels through batch means: one batch per landscape replica
group, so slice reuse (many initial paths composed against one slice)
is accounted for in every standard error.  Curves are reduced in a fixed
batch order, making ensemble statistics independent of worker count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_filter

from .errors import DomainError, OutputError, StatisticsError
from .initial import StepFunction, cross_correlation_function

_SE_FLOOR = 1e-15
MIN_BATCHES = 30


@dataclass(frozen=True)
class CurveEstimate:
    """A curve with batch-means error bars."""

    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_batches: int

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if np.any(np.diff(g) <= 0):
            raise DomainError("curve grid must be strictly increasing")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "stderr",
                           np.maximum(np.asarray(self.stderr, dtype=float), _SE_FLOOR))


@dataclass
class EnsembleStore:
    """Columnar per-replica records of one simulation configuration."""

    beta: float
    x_grid: np.ndarray
    h: np.ndarray                 # (n_records, n_x)
    z_argmax: np.ndarray          # (n_records, n_x)
    censored: np.ndarray          # (n_records, n_x) bool
    batch_ids: np.ndarray         # (n_records,)
    replica_ids: np.ndarray       # (n_records,)
    observables: dict = field(default_factory=dict)   # name -> (n_records,)
    obs_meta: dict = field(default_factory=dict)      # name -> metadata dict
    fingerprint: str = ""

    @property
    def n_records(self) -> int:
        return self.h.shape[0]

    @property
    def n_batches(self) -> int:
        return len(np.unique(self.batch_ids))

    @property
    def censor_count(self) -> int:
        return int(self.censored.any(axis=1).sum())

    def column(self, x: float) -> int:
        d = np.abs(self.x_grid - x)
        k = int(np.argmin(d))
        if d[k] > 1e-9 * max(1.0, abs(x)):
            raise DomainError(f"x={x} is not on the store's x-grid")
        return k

    def valid_z(self, x: float = 0.0):
        """(values, mask) of non-censored argmaxes at position x."""
        k = self.column(x)
        mask = ~self.censored[:, k]
        return self.z_argmax[:, k], mask

    def save(self, path) -> None:
        try:
            np.savez_compressed(
                path,
                beta=self.beta,
                x_grid=self.x_grid,
                h=self.h,
                z_argmax=self.z_argmax,
                censored=self.censored,
                batch_ids=self.batch_ids,
                replica_ids=self.replica_ids,
                obs_names=np.array(sorted(self.observables), dtype=str),
                obs_meta=np.array(json.dumps(self.obs_meta)),
                fingerprint=np.array(self.fingerprint),
                **{f"obs_{k}": v for k, v in self.observables.items()},
            )
        except OSError as exc:
            raise OutputError(f"cannot write ensemble store: {exc}") from exc

    @classmethod
    def load(cls, path) -> "EnsembleStore":
        try:
            with np.load(path) as d:
                names = [str(n) for n in d["obs_names"]]
                return cls(
                    beta=float(d["beta"]),
                    x_grid=d["x_grid"],
                    h=d["h"],
                    z_argmax=d["z_argmax"],
                    censored=d["censored"],
                    batch_ids=d["batch_ids"],
                    replica_ids=d["replica_ids"],
                    observables={n: d[f"obs_{n}"] for n in names},
                    obs_meta=json.loads(str(d["obs_meta"])),
                    fingerprint=str(d["fingerprint"]),
                )
        except OSError as exc:
            raise OutputError(f"cannot read ensemble store: {exc}") from exc


def _batch_reduce(values: np.ndarray, batch_ids: np.ndarray,
                  mask: np.ndarray = None) -> np.ndarray:
    """Per-batch means of ``values`` (rows = records), fixed batch order.

    Batches with no unmasked record are dropped.  Accumulation is by
    sorted batch id so the result never depends on record order.
    """
    order = np.argsort(batch_ids, kind="stable")
    bids = batch_ids[order]
    vals = values[order]
    m = np.ones(len(bids), dtype=bool) if mask is None else mask[order]
    uniq, start = np.unique(bids, return_index=True)
    rows = []
    bounds = list(start) + [len(bids)]
    for b in range(len(uniq)):
        seg = slice(bounds[b], bounds[b + 1])
        mm = m[seg]
        if mm.any():
            rows.append(vals[seg][mm].mean(axis=0))
    if not rows:
        raise StatisticsError("all records are censored or masked out")
    return np.stack(rows)


def _mean_stderr(per_batch: np.ndarray):
    nb = per_batch.shape[0]
    mean = per_batch.mean(axis=0)
    if nb >= 2:
        se = per_batch.std(axis=0, ddof=1) / np.sqrt(nb)
    else:
        se = np.full_like(np.asarray(mean, dtype=float), np.nan)
    return mean, se, nb


def _require_batches(store: EnsembleStore, minimum: int = MIN_BATCHES) -> None:
    if store.n_records == 0:
        raise StatisticsError("ensemble store is empty")
    if store.n_batches < minimum:
        raise StatisticsError(
            f"need >= {minimum} batches for batch-means errors, "
            f"got {store.n_batches}")


def variance_curve(store: EnsembleStore) -> CurveEstimate:
    """g_beta(x) = Var h(x) with batch-means standard errors."""
    _require_batches(store)
    center = store.h.mean(axis=0)
    dev = (store.h - center) ** 2
    per_batch = _batch_reduce(dev, store.batch_ids)
    mean, se, nb = _mean_stderr(per_batch)
    return CurveEstimate(store.x_grid, mean, se, nb)


def argmax_cdf(store: EnsembleStore, grid=None, x: float = 0.0) -> CurveEstimate:
    """ECDF of the non-censored argmax Z at position x on the given grid."""
    _require_batches(store)
    z, mask = store.valid_z(x)
    if mask.sum() < 1000:
        raise StatisticsError(
            f"need >= 1000 non-censored argmax samples, got {int(mask.sum())}")
    g = store.x_grid if grid is None else np.asarray(grid, dtype=float)
    ind = (z[:, None] <= g[None, :]).astype(float)
    per_batch = _batch_reduce(ind, store.batch_ids, mask)
    mean, se, nb = _mean_stderr(per_batch)
    return CurveEstimate(g, mean, se, nb)


def dkw_band(n: int, alpha: float = 0.05) -> float:
    """Dvoretzky-Kiefer-Wolfowitz half-width for an n-sample ECDF."""
    if n < 1:
        raise DomainError("DKW band needs n >= 1")
    return float(np.sqrt(np.log(2.0 / alpha) / (2.0 * n)))


def silverman_bandwidth(z: np.ndarray) -> float:
    n = len(z)
    if n < 2:
        raise StatisticsError("bandwidth selection needs >= 2 samples")
    iqr = np.subtract(*np.percentile(z, [75, 25]))
    scale = min(z.std(ddof=1), iqr / 1.34) if iqr > 0 else z.std(ddof=1)
    if scale <= 0:
        raise StatisticsError("degenerate sample for bandwidth selection")
    return float(0.9 * scale * n ** (-0.2))


def argmax_density(store: EnsembleStore, bandwidth: float = None,
                   grid=None, x: float = 0.0):
    """Gaussian-kernel density of Z with batch-means errors.

    Returns (curve, bandwidth); the bandwidth defaults to Silverman's rule
    on the pooled non-censored samples.
    """
    _require_batches(store)
    z, mask = store.valid_z(x)
    if mask.sum() < 1000:
        raise StatisticsError(
            f"need >= 1000 non-censored argmax samples, got {int(mask.sum())}")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(z[mask])
    g = store.x_grid if grid is None else np.asarray(grid, dtype=float)
    u = (g[None, :] - z[:, None]) / bandwidth
    kern = np.exp(-0.5 * u ** 2) / (bandwidth * np.sqrt(2.0 * np.pi))
    per_batch = _batch_reduce(kern, store.batch_ids, mask)
    mean, se, nb = _mean_stderr(per_batch)
    return CurveEstimate(g, mean, se, nb), float(bandwidth)


def _central_diff(grid: np.ndarray, vals: np.ndarray):
    """First derivative on interior points; vals may be (batches, n)."""
    if grid.shape[0] < 5:
        raise DomainError("grid too coarse for differencing (need >= 5 points)")
    dg = grid[2:] - grid[:-2]
    return grid[1:-1], (vals[..., 2:] - vals[..., :-2]) / dg


def _second_diff(grid: np.ndarray, vals: np.ndarray):
    """Three-point second differences on a (possibly non-uniform) grid.

    Simulation grids are snapped to the lattice, so spacings are only
    approximately equal; the non-uniform formula stays second-order exact
    for quadratics on the snapped points.
    """
    if grid.shape[0] < 9:
        raise DomainError("grid too coarse for second differences (need >= 9 points)")
    hl = grid[1:-1] - grid[:-2]
    hr = grid[2:] - grid[1:-1]
    return grid[1:-1], 2.0 * (vals[..., :-2] / (hl * (hl + hr))
                              - vals[..., 1:-1] / (hl * hr)
                              + vals[..., 2:] / (hr * (hl + hr)))


def gprime_identity_check(g: CurveEstimate, F: CurveEstimate, beta: float,
                          store: EnsembleStore = None, x: float = 0.0) -> dict:
    """Residual of g'(x) = beta^2 (2 F(x) - 1) on the shared interior grid.

    With a store, per-batch residual curves give the standard error of the
    difference directly (the two sides share the ensemble and correlate);
    without one, independent error propagation is used, which is
    conservative for this positively correlated pair.
    """
    if len(g.grid) != len(F.grid) or not np.allclose(g.grid, F.grid):
        raise DomainError("g and F must share one grid")
    inner, gp = _central_diff(g.grid, g.mean)
    rhs = beta ** 2 * (2.0 * F.mean[1:-1] - 1.0)
    residual = gp - rhs
    if store is not None:
        center = store.h.mean(axis=0)
        vb = _batch_reduce((store.h - center) ** 2, store.batch_ids)
        z, mask = store.valid_z(x)
        ind = (z[:, None] <= g.grid[None, :]).astype(float)
        fb = _batch_reduce(ind, store.batch_ids, mask)
        if vb.shape[0] != fb.shape[0]:
            raise StatisticsError("variance and CDF batches are inconsistent")
        _, gpb = _central_diff(g.grid, vb)
        rb = gpb - beta ** 2 * (2.0 * fb[:, 1:-1] - 1.0)
        _, se, nb = _mean_stderr(rb)
    else:
        se_gp = np.sqrt(g.stderr[2:] ** 2 + g.stderr[:-2] ** 2) / (g.grid[2:] - g.grid[:-2])
        se = np.sqrt(se_gp ** 2 + (2.0 * beta ** 2 * F.stderr[1:-1]) ** 2)
        nb = min(g.n_batches, F.n_batches)
    se = np.maximum(se, _SE_FLOOR)
    # local-quadratic (Savitzky-Golay) derivative as an independent cross-check
    step = float(np.mean(np.diff(g.grid)))
    gp_sg = savgol_filter(g.mean, 5, 2, deriv=1, delta=step)[1:-1]
    return {
        "grid": inner,
        "gprime": gp,
        "gprime_smoothed": gp_sg,
        "rhs": rhs,
        "residual": residual,
        "stderr": se,
        "n_batches": nb,
        "max_abs_z": float(np.max(np.abs(residual) / se)),
    }


def second_derivative_curve(g: CurveEstimate, smooth: bool = True) -> CurveEstimate:
    """g'' by second central differences, optionally smoothed by a local
    quadratic fit over 5 points; errors propagated independently."""
    inner, gpp = _second_diff(g.grid, g.mean)
    h = float(np.mean(np.diff(g.grid)))
    if smooth:
        gpp_s = savgol_filter(g.mean, 5, 2, deriv=2, delta=h)[1:-1]
        gpp = 0.5 * (gpp + gpp_s)
    se = np.sqrt(g.stderr[2:] ** 2 + 4.0 * g.stderr[1:-1] ** 2 + g.stderr[:-2] ** 2) / h ** 2
    return CurveEstimate(inner, gpp, se, g.n_batches)


def density_identity_check(g: CurveEstimate, f_kde: CurveEstimate, beta: float,
                           store: EnsembleStore = None, x: float = 0.0,
                           core: float = 1.0) -> dict:
    """Compare g''/(2 beta^2) to the kernel density of Z.

    Reports the total mass of the implied density over the grid and the
    worst pointwise z-score on |x| <= core.
    """
    if beta <= 0:
        raise DomainError("the density identity requires beta > 0")
    gpp = second_derivative_curve(g, smooth=True)
    implied = gpp.mean / (2.0 * beta ** 2)
    mass = float(np.trapezoid(implied, gpp.grid))
    kde = np.interp(gpp.grid, f_kde.grid, f_kde.mean)
    kde_se = np.interp(gpp.grid, f_kde.grid, f_kde.stderr)
    residual = implied - kde
    if store is not None:
        center = store.h.mean(axis=0)
        vb = _batch_reduce((store.h - center) ** 2, store.batch_ids)
        _, gppb = _second_diff(g.grid, vb)
        h = float(np.mean(np.diff(g.grid)))
        sgb = np.stack([savgol_filter(row, 5, 2, deriv=2, delta=h)[1:-1] for row in vb])
        impb = 0.5 * (gppb + sgb) / (2.0 * beta ** 2)
        z, mask = store.valid_z(x)
        bw = silverman_bandwidth(z[mask])
        u = (gpp.grid[None, :] - z[:, None]) / bw
        kern = np.exp(-0.5 * u ** 2) / (bw * np.sqrt(2.0 * np.pi))
        kb = _batch_reduce(kern, store.batch_ids, mask)
        if kb.shape[0] == impb.shape[0]:
            _, se, _ = _mean_stderr(impb - kb)
        else:
            se = np.sqrt((gpp.stderr / (2.0 * beta ** 2)) ** 2 + kde_se ** 2)
    else:
        se = np.sqrt((gpp.stderr / (2.0 * beta ** 2)) ** 2 + kde_se ** 2)
    se = np.maximum(se, _SE_FLOOR)
    sel = np.abs(gpp.grid) <= core + 1e-9
    return {
        "grid": gpp.grid,
        "implied_density": implied,
        "kde": kde,
        "residual": residual,
        "stderr": se,
        "mass": mass,
        "gpp0": float(np.interp(0.0, gpp.grid, gpp.mean)),
        "max_abs_z_core": float(np.max(np.abs(residual[sel]) / se[sel])),
    }


def covariance_identity(store: EnsembleStore, name0: str, name_t: str,
                        phi1: StepFunction, phi2: StepFunction, t: float,
                        x: float = 0.0) -> dict:
    """Both sides of E[X_0^{phi1} X_t^{phi2}] = beta^2 E[(phi1 * phi2)(t^{2/3} Z)].

    The right side evaluates the closed-form cross-correlation at the
    rescaled argmaxes of the same ensemble; the reported z-score uses the
    batch stderr of the per-batch difference.
    """
    for name, phi in ((name0, phi1), (name_t, phi2)):
        if name not in store.observables:
            raise DomainError(f"observable '{name}' not recorded in the store")
        meta = store.obs_meta.get(name, {})
        if "fingerprint" in meta and tuple(map(tuple, meta["fingerprint"])) != phi.fingerprint():
            raise DomainError(f"observable '{name}' was recorded with a different phi")
    if t <= 0:
        raise DomainError("time t must be positive")
    z, mask = store.valid_z(x)
    prod = store.observables[name0] * store.observables[name_t]
    ccf = cross_correlation_function(phi1, phi2)
    rhs_rec = store.beta ** 2 * ccf(t ** (2.0 / 3.0) * z)
    lb = _batch_reduce(prod[:, None], store.batch_ids, mask)[:, 0]
    rb = _batch_reduce(rhs_rec[:, None], store.batch_ids, mask)[:, 0]
    lhs, lhs_se, nb = _mean_stderr(lb)
    rhs, rhs_se, _ = _mean_stderr(rb)
    diff, diff_se, _ = _mean_stderr(lb - rb)
    diff_se = max(float(diff_se), _SE_FLOOR)
    return {
        "lhs": float(lhs), "lhs_stderr": float(lhs_se),
        "rhs": float(rhs), "rhs_stderr": float(rhs_se),
        "diff": float(diff), "diff_stderr": diff_se,
        "z_score": float(diff) / diff_se,
        "n_batches": nb,
    }


def two_point_function(g: CurveEstimate, z: float, t: float) -> float:
    """C_beta(z, t) = g''(z t^{-2/3}) / (2 t^{2/3}), from the estimated g''."""
    if t <= 0:
        raise DomainError("time t must be positive")
    gpp = second_derivative_curve(g, smooth=True)
    arg = z * t ** (-2.0 / 3.0)
    if arg < gpp.grid[0] - 1e-12 or arg > gpp.grid[-1] + 1e-12:
        raise DomainError(
            f"argument {arg:.4g} outside the estimated g'' range "
            f"[{gpp.grid[0]:.4g}, {gpp.grid[-1]:.4g}]")
    return float(np.interp(arg, gpp.grid, gpp.mean) / (2.0 * t ** (2.0 / 3.0)))


def two_point_curve(g: CurveEstimate, t: float) -> CurveEstimate:
    """The full z -> C_beta(z, t) curve on the rescaled interior grid."""
    if t <= 0:
        raise DomainError("time t must be positive")
    gpp = second_derivative_curve(g, smooth=True)
    s = t ** (2.0 / 3.0)
    return CurveEstimate(gpp.grid * s, gpp.mean / (2.0 * s),
                         gpp.stderr / (2.0 * s), gpp.n_batches)


def stationarity_check(store: EnsembleStore, x0: float = 0.0) -> dict:
    """Var(h(x) - h(x0)) against 2|x - x0| (exact at beta = sqrt(2))."""
    _require_batches(store)
    k0 = store.column(x0)
    d = store.h - store.h[:, [k0]]
    center = d.mean(axis=0)
    per_batch = _batch_reduce((d - center) ** 2, store.batch_ids)
    mean, se, nb = _mean_stderr(per_batch)
    target = 2.0 * np.abs(store.x_grid - store.x_grid[k0])
    sel = np.arange(len(store.x_grid)) != k0
    zsc = np.abs(mean[sel] - target[sel]) / np.maximum(se[sel], _SE_FLOOR)
    return {"grid": store.x_grid, "variance": mean, "target": target,
            "stderr": se, "max_abs_z": float(np.max(zsc)), "n_batches": nb}


def sup_moment_stability(store: EnsembleStore) -> dict:
    """Second moment of sup_x h over half vs full ensemble (ratio test)."""
    _require_batches(store)
    sup2 = store.h.max(axis=1) ** 2
    order = np.argsort(store.replica_ids, kind="stable")
    s = sup2[order]
    half = s[: len(s) // 2].mean()
    full = s.mean()
    return {"half": float(half), "full": float(full),
            "ratio": float(full / half) if half > 0 else np.inf}
