"""Large-beta (Chernoff) and flat (beta = 0) regime checks.

Simulates the argmax of Brownian motion minus a parabola as the reference
law for the beta -> infinity limit of the rescaled argmax, and verifies
the flatness/symmetry statements of the beta = 0 regime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .errors import DomainError, StatisticsError
from .estimators import EnsembleStore, dkw_band, variance_curve

_KS_COEFF_95 = 1.358


@dataclass(frozen=True)
class ChernoffReference:
    """Empirical law of argmax_u { B(u) - u^2 } from direct simulation."""

    samples: np.ndarray          # sorted, non-censored
    grid_step: float
    window: float
    censored: int

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.searchsorted(self.samples, x, side="right") / len(self.samples)
        return out if out.ndim else float(out)


def chernoff_reference(n_samples: int, grid_step: float, window: float,
                       seed: int, max_censor_frac: float = 1e-3) -> ChernoffReference:
    """Simulate argmax{B(u) - u^2} on a fine symmetric grid.

    The grid must resolve the window to one part in a thousand; samples
    whose argmax touches the window edge are censored, and more than
    ``max_censor_frac`` of them is treated as a window error.
    """
    if grid_step > 1e-3 * window:
        raise DomainError(
            f"grid_step {grid_step} too coarse: must be <= 1e-3 * window "
            f"({1e-3 * window})")
    if n_samples < 1:
        raise DomainError("need at least one sample")
    m = int(round(window / grid_step))
    u = np.arange(-m, m + 1) * grid_step
    parab = u ** 2
    samples = np.empty(n_samples)
    censored = 0
    block = max(1, int(2e7 // (2 * m + 1)))
    for lo in range(0, n_samples, block):
        hi = min(n_samples, lo + block)
        rng = Generator(Philox(key=np.array([seed & (2**64 - 1), 0x6368], dtype=np.uint64),
                               counter=[0, 0, np.uint64(lo), 0]))
        incs = rng.standard_normal((hi - lo, 2 * m)) * np.sqrt(grid_step)
        b = np.concatenate([np.zeros((hi - lo, 1)), np.cumsum(incs, axis=1)], axis=1)
        b -= b[:, [m]]
        idx = np.argmax(b - parab, axis=1)
        samples[lo:hi] = u[idx]
        censored += int(np.sum((idx == 0) | (idx == 2 * m)))
        samples[lo:hi][(idx == 0) | (idx == 2 * m)] = np.nan
    if censored > max_censor_frac * n_samples:
        raise DomainError(
            f"{censored}/{n_samples} argmaxes hit the window edge; widen "
            f"the window beyond {window}")
    good = np.sort(samples[~np.isnan(samples)])
    return ChernoffReference(samples=good, grid_step=grid_step,
                             window=window, censored=censored)


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if len(a) < 1 or len(b) < 1:
        raise StatisticsError("KS distance needs nonempty samples")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / len(a)
    fb = np.searchsorted(b, pts, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def ks_threshold(n: int, m: int, alpha: float = 0.05) -> float:
    """Asymptotic two-sample KS rejection threshold at level alpha."""
    if alpha != 0.05:
        coeff = np.sqrt(-0.5 * np.log(alpha / 2.0))
    else:
        coeff = _KS_COEFF_95
    return float(coeff * np.sqrt((n + m) / (n * m)))


def large_beta_check(z_by_beta: dict, ref: ChernoffReference) -> dict:
    """KS distance of beta^{-2/3} Z to the Chernoff reference per beta.

    Asserts (as a flag) that the distance at the largest beta improves on
    the smallest beta by more than the combined sampling noise of the two
    KS statistics.
    """
    if len(z_by_beta) < 2:
        raise StatisticsError("the beta ladder needs at least two levels")
    report = {"ks": {}, "threshold": {}, "n": {}}
    for beta, z in sorted(z_by_beta.items()):
        z = np.asarray(z, dtype=float)
        if len(z) < 100:
            raise StatisticsError(f"beta={beta}: need >= 100 samples, got {len(z)}")
        scaled = z * beta ** (-2.0 / 3.0)
        report["ks"][beta] = ks_distance(scaled, ref.samples)
        report["threshold"][beta] = ks_threshold(len(scaled), len(ref.samples))
        report["n"][beta] = len(scaled)
    betas = sorted(z_by_beta)
    lo, hi = betas[0], betas[-1]
    noise = 0.5 * np.hypot(report["threshold"][lo], report["threshold"][hi])
    report["beta_small"], report["beta_large"] = lo, hi
    report["improvement"] = report["ks"][lo] - report["ks"][hi]
    report["noise"] = float(noise)
    report["decreasing_beyond_noise"] = bool(report["improvement"] > noise)
    return report


def flat_regime_check(store: EnsembleStore, x: float = 0.0) -> dict:
    """Flatness of g_0 across the grid and symmetry of the argmax at beta=0."""
    if store.beta != 0.0:
        raise DomainError("flat-regime check requires a beta = 0 ensemble")
    g = variance_curve(store)
    level = float(np.mean(g.mean))
    flat_z = float(np.max(np.abs(g.mean - level) / g.stderr))
    z, mask = store.valid_z(x)
    zz = z[mask]
    if len(zz) < 1000:
        raise StatisticsError(f"need >= 1000 argmax samples, got {len(zz)}")
    ks_sym = ks_distance(zz, -zz)
    band = dkw_band(len(zz))
    f0 = float(np.mean(zz <= 0.0))
    return {
        "g0": g,
        "g0_level": level,
        "flatness_max_z": flat_z,
        "ks_symmetry": ks_sym,
        "ks_threshold": ks_threshold(len(zz), len(zz)),
        "F0_at_0": f0,
        "dkw_band": band,
        "F0_half_within_band": bool(abs(f0 - 0.5) <= band),
    }
