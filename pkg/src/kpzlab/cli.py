"""Command-line interface: simulate / estimate / transport / stein /
chernoff / report, all driven by one plain-text config."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .chernoff import chernoff_reference, flat_regime_check, large_beta_check
from .config import RunConfig, parse_test_function
from .errors import (ConfigError, DependencyError, DomainError, KpzLabError,
                     OutputError)
from .estimators import (CurveEstimate, EnsembleStore, argmax_cdf,
                         argmax_density, covariance_identity,
                         density_identity_check, gprime_identity_check,
                         stationarity_check, two_point_curve, variance_curve)
from .manifest import build_manifest, write_manifest
from .parallel import WORKERS_ENV, default_workers
from .runlog import write_runlog
from .simulate import make_geometry, observable_plan, simulate_ensemble
from .stein import (SteinProblem, catalog, constant_l, derivative_bounds_check,
                    f_l, linear_l, product_l, stein_residual)
from .transport import independence_gap

_STATIONARY_BETA = math.sqrt(2.0)


def _store_path(out: str, beta: float) -> str:
    return os.path.join(out, f"store_beta{beta:g}.npz")


def _load_store(out: str, beta: float) -> EnsembleStore:
    path = _store_path(out, beta)
    if not os.path.exists(path):
        raise DependencyError(
            f"missing ensemble store {path}; run `kpzlab simulate` first")
    return EnsembleStore.load(path)


def _write_curve_csv(path, curve: CurveEstimate) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["grid", "mean", "stderr"])
            for g, m, s in zip(curve.grid, curve.mean, curve.stderr):
                w.writerow([repr(float(g)), repr(float(m)), repr(float(s))])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _read_curve_csv(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DependencyError(f"cannot read {path}: {exc}") from exc
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return data[:, 0], data[:, 1], data[:, 2]


def _write_json(path, payload) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _beta_seed(cfg: RunConfig, index: int) -> int:
    return cfg.seed + 7919 * index


def _geometry_and_plan(cfg: RunConfig, beta: float):
    geom = make_geometry(cfg.big_n, beta, cfg.z_window, cfg.z_step,
                         cfg.x_min, cfg.x_max, cfg.x_step)
    phi1 = parse_test_function(cfg.phi1)
    phi2 = parse_test_function(cfg.phi2)
    plan = observable_plan(phi1, phi2, cfg.t_list, geom.z_grid, geom.x_grid)
    return geom, plan


def _finish(cfg: RunConfig, extra: dict) -> None:
    manifest = build_manifest(cfg.out, cfg.fingerprint(), extra)
    write_manifest(cfg.out, manifest)


def cmd_simulate(cfg: RunConfig) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "config.ini"), "w", encoding="utf-8") as fh:
        fh.write(cfg.canonical_text())
    t0 = time.time()
    censor = {}
    for i, beta in enumerate(cfg.beta_list):
        geom, plan = _geometry_and_plan(cfg, beta)
        seed = _beta_seed(cfg, i)
        store = simulate_ensemble(geom, beta, cfg.n_slices, cfg.paths_per_slice,
                                  seed, plan, cfg.workers,
                                  fingerprint=cfg.fingerprint())
        store.save(_store_path(cfg.out, beta))
        write_runlog(store, os.path.join(cfg.out, f"runlog_beta{beta:g}.bin"), seed)
        censor[f"{beta:g}"] = {
            "censored_records": store.censor_count,
            "total_records": store.n_records,
            "window_ok": store.censor_count <= 1e-3 * store.n_records,
        }
        print(f"simulated beta={beta:g}: {store.n_records} records, "
              f"{store.censor_count} censored")
    # timing goes to stdout, not into the output directory, so identical
    # configs produce identical manifests
    print(f"simulate finished in {time.time() - t0:.1f} s")
    _finish(cfg, {
        "experiment": cfg.experiment,
        "censor_counts": censor,
        "constants": {"c_h": geom.c_h, "c_x": geom.c_x},
    })
    return 0


def _estimate_one(cfg: RunConfig, beta: float, fmt: str) -> dict:
    store = _load_store(cfg.out, beta)
    geom, plan = _geometry_and_plan(cfg, beta)
    tag = f"beta{beta:g}"
    out = cfg.out
    summary = {"beta": beta, "n_records": store.n_records,
               "censored": store.censor_count}

    g = variance_curve(store)
    _write_curve_csv(os.path.join(out, f"g_{tag}.csv"), g)
    F = argmax_cdf(store)
    _write_curve_csv(os.path.join(out, f"F_{tag}.csv"), F)
    gp = gprime_identity_check(g, F, beta, store=store)
    summary["gprime_max_abs_z"] = gp["max_abs_z"]
    summary["gprime_pass"] = bool(gp["max_abs_z"] <= 3.0)

    if beta > 0 and len(store.x_grid) >= 9:
        f_kde, bw = argmax_density(store)
        _write_curve_csv(os.path.join(out, f"f_kde_{tag}.csv"), f_kde)
        dens = density_identity_check(g, f_kde, beta, store=store)
        summary["kde_bandwidth"] = bw
        summary["density_mass"] = dens["mass"]
        summary["density_mass_pass"] = bool(abs(dens["mass"] - 1.0) <= 0.05)
        summary["density_max_abs_z_core"] = dens["max_abs_z_core"]
        summary["gpp0"] = dens["gpp0"]
        for t in cfg.t_list:
            c2 = two_point_curve(g, t)
            _write_curve_csv(os.path.join(out, f"c2pt_{tag}_t{t:g}.csv"), c2)
        if fmt == "svg":
            from . import plots
            plots.overlay(os.path.join(out, f"density_overlay_{tag}.svg"),
                          dens["grid"], dens["implied_density"], dens["kde"],
                          labels=["g''/(2 beta^2)", "KDE of Z"],
                          title=f"argmax density, beta={beta:g}")

    summary["covariance"] = []
    for e in plan:
        rep = covariance_identity(store, e["name0"], e["name_t"],
                                  e["phi1_eff"], e["phi2_eff"], e["t"])
        rep["t"] = e["t"]
        summary["covariance"].append(rep)
    if abs(beta - _STATIONARY_BETA) < 1e-12:
        st = stationarity_check(store)
        summary["stationarity_max_abs_z"] = st["max_abs_z"]
    if fmt == "svg":
        from . import plots
        plots.curve_band(os.path.join(out, f"g_{tag}.svg"), g.grid, g.mean,
                         g.stderr, title=f"g(x), beta={beta:g}",
                         ylabel="Var h(x)")
    return summary


def cmd_estimate(cfg: RunConfig, fmt: str = "csv") -> int:
    summaries = [_estimate_one(cfg, beta, fmt) for beta in cfg.beta_list]
    _write_json(os.path.join(cfg.out, "summary_estimate.json"),
                {"betas": summaries})
    for s in summaries:
        print(f"beta={s['beta']:g}: g' identity max|z|={s['gprime_max_abs_z']:.2f} "
              f"({'pass' if s['gprime_pass'] else 'FAIL'})"
              + (f", g''(0)={s['gpp0']:.3f}" if "gpp0" in s else ""))
    _finish(cfg, {"experiment": cfg.experiment})
    return 0


def cmd_transport(cfg: RunConfig) -> int:
    sec = cfg.raw.get("transport", {})
    n = int(sec.get("n", 512))
    resamples = int(sec.get("resamples", 8))
    reports = []
    for beta in cfg.beta_list:
        store = _load_store(cfg.out, beta)
        _, plan = _geometry_and_plan(cfg, beta)
        for e in plan:
            rep = independence_gap(store, e["name0"], e["name_t"],
                                   e["phi1_eff"], e["phi2_eff"], e["t"],
                                   n=n, resamples=resamples, seed=cfg.seed)
            rep["beta"] = beta
            rep["t"] = e["t"]
            reports.append(rep)
            print(f"beta={beta:g} t={e['t']:g}: gap={rep['gap']:.4f} "
                  f"bound={rep['bound']:.4f} "
                  f"({'ok' if not rep['violation'] else 'VIOLATION'})")
    _write_json(os.path.join(cfg.out, "transport.json"), {"reports": reports})
    try:
        with open(os.path.join(cfg.out, "transport_resamples.csv"), "w",
                  newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["beta", "t", "resample", "w1_joint", "w1_floor"])
            for rep in reports:
                for r, (wj, wf) in enumerate(zip(rep["w1_joint_samples"],
                                                 rep["w1_floor_samples"])):
                    w.writerow([rep["beta"], rep["t"], r, repr(wj), repr(wf)])
    except OSError as exc:
        raise OutputError(f"cannot write transport CSV: {exc}") from exc
    _finish(cfg, {"experiment": cfg.experiment})
    return 0


def cmd_stein(cfg: RunConfig, fmt: str = "csv") -> int:
    os.makedirs(cfg.out, exist_ok=True)
    sec = cfg.raw.get("stein", {})
    phi1 = parse_test_function(cfg.phi1)
    sigma = float(sec.get("sigma", max(cfg.beta_list) * np.sqrt(phi1.l2_norm_sq)))
    n_theta = int(sec.get("n_theta", 64))
    n_gauss = int(sec["n_gauss"]) if "n_gauss" in sec else None
    half = float(sec.get("box", 3.0))
    npts = int(sec.get("grid_points", 21))
    grid = np.linspace(-half, half, npts)

    p_lin = SteinProblem(sigma, linear_l(), n_theta, n_gauss)
    results = {"sigma": sigma, "orders": [n_theta, p_lin.n_gauss], "surfaces": []}
    # closed forms first: l = x1 -> f = -1; l = const -> 0; l = x1 x2 -> -x2
    x1g, x2g = np.meshgrid(grid, grid, indexing="ij")
    p_con = SteinProblem(sigma, constant_l(2.5), n_theta, n_gauss)
    p_pro = SteinProblem(sigma, product_l(), n_theta, n_gauss)
    results["closed_forms"] = {
        "linear_max_err": float(np.max(np.abs(f_l(p_lin, x1g, x2g) + 1.0))),
        "constant_max_err": float(np.max(np.abs(f_l(p_con, x1g, x2g)))),
        "product_max_err": float(np.max(np.abs(f_l(p_pro, x1g, x2g) + x2g))),
    }
    rows = []
    all_ok = True
    first_matrix = None
    for surf in catalog():
        prob = SteinProblem(sigma, surf, n_theta, n_gauss)
        res = stein_residual(prob, grid, grid)
        bounds = derivative_bounds_check(prob, grid, grid)
        if first_matrix is None:
            first_matrix = res["residual_matrix"]
        ok = bool(res["max_residual"] <= 1e-6 and bounds["all_pass"])
        all_ok = all_ok and ok
        entry = {"name": surf.name,
                 "max_residual": res["max_residual"],
                 "max_representation_gap": res["max_representation_gap"],
                 "bounds": {k: bounds[k] for k in ("f", "d1_f", "d2_f")},
                 "pass": ok}
        results["surfaces"].append(entry)
        rows.append([surf.name, repr(res["max_residual"]),
                     repr(res["max_representation_gap"]), ok])
    results["all_pass"] = all_ok and max(results["closed_forms"].values()) <= 1e-8
    _write_json(os.path.join(cfg.out, "stein.json"), results)
    try:
        with open(os.path.join(cfg.out, "stein_residuals.csv"), "w",
                  newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["surface", "max_residual", "max_representation_gap", "pass"])
            w.writerows(rows)
    except OSError as exc:
        raise OutputError(f"cannot write stein CSV: {exc}") from exc
    if fmt == "svg" and first_matrix is not None:
        from . import plots
        plots.heatmap(os.path.join(cfg.out, "stein_residual.svg"), grid, grid,
                      first_matrix, title="Stein equation residual")
    print(f"stein: all_pass={results['all_pass']}")
    _finish(cfg, {"experiment": cfg.experiment})
    return 0


def cmd_chernoff(cfg: RunConfig, fmt: str = "csv") -> int:
    sec = cfg.raw.get("chernoff", {})
    n_samples = int(sec.get("n_samples", 2000))
    window = float(sec.get("window", 2.5))
    grid_step = float(sec.get("grid_step", min(1e-3 * window, 2.5e-3)))
    ref = chernoff_reference(n_samples, grid_step, window, cfg.seed + 999331)
    z_by_beta = {}
    flat_report = None
    for beta in cfg.beta_list:
        store = _load_store(cfg.out, beta)
        if beta == 0.0:
            flat_report = flat_regime_check(store)
            continue
        z, mask = store.valid_z(0.0)
        z_by_beta[beta] = z[mask]
    payload = {"reference": {"n": len(ref.samples), "window": window,
                             "grid_step": grid_step, "censored": ref.censored}}
    print(f"chernoff reference: {len(ref.samples)} samples, "
          f"sd={np.std(ref.samples):.3f}")
    if len(z_by_beta) >= 2:
        rep = large_beta_check(z_by_beta, ref)
        payload["ladder"] = {
            "ks": {f"{b:g}": v for b, v in rep["ks"].items()},
            "threshold": {f"{b:g}": v for b, v in rep["threshold"].items()},
            "improvement": rep["improvement"],
            "noise": rep["noise"],
            "decreasing_beyond_noise": rep["decreasing_beyond_noise"],
        }
        print(f"chernoff ladder: improvement={rep['improvement']:.4f} "
              f"noise={rep['noise']:.4f} "
              f"({'pass' if rep['decreasing_beyond_noise'] else 'FAIL'})")
        if fmt == "svg":
            from . import plots
            bs = sorted(rep["ks"])
            plots.ks_trend(os.path.join(cfg.out, "ks_trend.svg"), bs,
                           [rep["ks"][b] for b in bs])
    if flat_report is not None:
        payload["flat"] = {k: v for k, v in flat_report.items() if k != "g0"}
        print(f"flat regime: flatness max|z|={flat_report['flatness_max_z']:.2f}")
    _write_json(os.path.join(cfg.out, "chernoff.json"), payload)
    _finish(cfg, {"experiment": cfg.experiment})
    return 0


def cmd_report(cfg: RunConfig) -> int:
    from . import plots
    made = []
    if not os.path.isdir(cfg.out):
        raise DependencyError(f"output directory {cfg.out} does not exist")
    for name in sorted(os.listdir(cfg.out)):
        if not name.endswith(".csv"):
            continue
        stem = name[:-4]
        if not (stem.startswith("g_") or stem.startswith("F_")
                or stem.startswith("f_kde_") or stem.startswith("c2pt_")):
            continue
        grid, mean, stderr = _read_curve_csv(os.path.join(cfg.out, name))
        svg = os.path.join(cfg.out, f"{stem}.svg")
        plots.curve_band(svg, grid, mean, stderr, title=stem)
        made.append(svg)
    print(f"report: wrote {len(made)} figures")
    _finish(cfg, {"experiment": cfg.experiment})
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="kpzlab",
        description="Monte-Carlo lab for the KPZ fixed point from Brownian "
                    "initial data (last-passage-percolation approximation)")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "estimate", "transport", "stein", "chernoff", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the INI config")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--workers", type=int,
                       help=f"worker processes (default from ${WORKERS_ENV} or 1)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--format", choices=["csv", "json", "svg"], default="csv",
                       help="svg additionally renders figures")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config)
        if args.out:
            cfg.out = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg.workers = args.workers
        elif default_workers() > 1:
            cfg.workers = default_workers()
        handler = {
            "simulate": lambda: cmd_simulate(cfg),
            "estimate": lambda: cmd_estimate(cfg, args.format),
            "transport": lambda: cmd_transport(cfg),
            "stein": lambda: cmd_stein(cfg, args.format),
            "chernoff": lambda: cmd_chernoff(cfg, args.format),
            "report": lambda: cmd_report(cfg),
        }[args.command]
        return handler()
    except KpzLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
