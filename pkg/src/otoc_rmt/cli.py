"""Command-line orchestration: configured runs, moment validation, variance study.

Configs are INI files with sections [spectrum], [ensemble], [operators],
[run], [output].  All energies are expressed in units of the mean spacing d,
with the correlation width given as the level count N = delta/d, so N is the
single chaos-strength knob; times are given in units of 1/delta and reported
both raw and dimensionless.  Unknown keys are rejected.

Commands: ``otoc-rmt run|validate-moments|variance-report <config>`` with
``--out-dir`` and ``--seed`` overrides; the environment variable
``OTOC_RMT_WORKERS`` overrides the worker count (never the results).
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time

import numpy as np

from . import analytic, wick_oracle
from .ensemble import EnsembleConfig, SpectrumModel, sample_member
from .observables import generate_pair, padded_support
from .otoc_mc import RunConfig, run_series
from .propagator import window_trace_Z

SCHEMA_VERSION = 1

CSV_HEADER = ("t,C_mean,C_stderr,C_analytic,F_mean_re,F_mean_im,F_stderr,"
              "F_analytic_re,F_analytic_im")

#: section -> key -> (parser, default); REQUIRED means no default
_REQUIRED = object()
_SCHEMA = {
    "spectrum": {
        "D": (int, _REQUIRED),
        "N": (float, _REQUIRED),
        "d": (float, 1.0),
    },
    "ensemble": {
        "eigenvalue_mode": (str, "picket"),
        "overlap_mode": (str, "gaussian"),
        "band_cutoff": (float, 6.0),
        "seed": (int, _REQUIRED),
    },
    "operators": {
        "kind": (str, "hopping"),
        "bandwidth": (int, 1),
        "support_lo": (int, -1),   # -1: padded default
        "support_hi": (int, -1),
        "seed": (int, 0),
    },
    "run": {
        "beta_delta": (float, 0.0),
        "t_delta_max": (float, 2.5),
        "t_points": (int, 25),
        "members": (int, 200),
        "normalization_mode": (str, "per_member"),
        "workers": (int, 0),
    },
    "output": {
        "out_dir": (str, "results"),
    },
}


class ConfigError(ValueError):
    """Malformed or invalid experiment configuration."""


def load_config(path):
    """Parse and validate an INI experiment config into a nested dict."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path!r}: {exc}") from exc

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}] in {path!r}")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"unknown key '{key}' in section [{section}] of {path!r}"
                )

    config = {}
    for section, keys in _SCHEMA.items():
        config[section] = {}
        for key, (cast, default) in keys.items():
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    config[section][key] = cast(raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"key '{key}' in [{section}]: cannot parse {raw!r} "
                        f"as {cast.__name__}"
                    ) from exc
            elif default is _REQUIRED:
                raise ConfigError(f"missing required key '{key}' in [{section}]")
            else:
                config[section][key] = default
    return config


def _build_objects(config, seed_override=None):
    spec = config["spectrum"]
    model = SpectrumModel.from_window_count(D=spec["D"], N=spec["N"], d=spec["d"])
    ens = dict(config["ensemble"])
    if seed_override is not None:
        ens["seed"] = seed_override
    ensemble = EnsembleConfig(
        spectrum=model,
        eigenvalue_mode=ens["eigenvalue_mode"],
        overlap_mode=ens["overlap_mode"],
        band_cutoff=ens["band_cutoff"],
        seed=ens["seed"],
    )
    ops = config["operators"]
    lo, hi = ops["support_lo"], ops["support_hi"]
    if lo < 0 or hi < 0:
        lo, hi = padded_support(model, ensemble.band_cutoff)
    pair = generate_pair(model.D, ops["kind"], (lo, hi),
                         bandwidth_b=ops["bandwidth"], seed=ops["seed"])
    return model, ensemble, pair


def _workers(config):
    env = os.environ.get("OTOC_RMT_WORKERS")
    if env is not None:
        return int(env)
    return config["run"]["workers"]


def _fmt(x):
    return f"{x:.17g}"


def write_series_csv(path, series):
    rows = [CSV_HEADER]
    for i in range(series.t.size):
        rows.append(",".join([
            _fmt(series.t[i]),
            _fmt(series.C_mean[i]),
            _fmt(series.C_stderr[i]),
            _fmt(series.C_analytic[i]),
            _fmt(series.F_mean[i].real),
            _fmt(series.F_mean[i].imag),
            _fmt(series.F_stderr[i]),
            _fmt(series.F_analytic[i].real),
            _fmt(series.F_analytic[i].imag),
        ]))
    with open(path, "w", newline="") as handle:
        handle.write("\n".join(rows) + "\n")


def fit_envelope(series, model, pair, beta):
    """Weighted fit of -log(|F_MC| / |operator content|) against t^2.

    Returns (coefficient, points_used); the target coefficient is
    2 delta^2.  Points where the Monte Carlo mean is below four standard
    errors are excluded; the intercept absorbs normalization offsets.
    """
    z_hf = analytic.trZ_HF(beta, model)
    t = series.t
    f_abs = np.abs(series.F_mean)
    content = np.array([abs(analytic.F0(pair, beta, ti, model)) for ti in t])
    mask = (f_abs > 4 * series.F_stderr) & (content > 1e-12 * np.max(content))
    if mask.sum() < 3:
        return float("nan"), int(mask.sum())
    y = -np.log(f_abs[mask] * z_hf / content[mask])
    x = t[mask] ** 2
    sig = series.F_stderr[mask] / f_abs[mask]
    sig = np.where(sig <= 0, np.min(sig[sig > 0]) if np.any(sig > 0) else 1.0, sig)
    wts = np.sqrt(1.0 / sig ** 2)
    basis = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(basis * wts[:, None], y * wts, rcond=None)
    return float(coef[0]), int(mask.sum())


def _acceptance_checks(series, model, pair, beta):
    d2 = model.delta ** 2
    checks = {}

    coef, used = fit_envelope(series, model, pair, beta)
    checks["envelope_coefficient"] = coef
    checks["envelope_target"] = 2.0 * d2
    checks["envelope_points_used"] = used
    checks["envelope_ok"] = (
        bool(abs(coef - 2 * d2) <= 0.10 * 2 * d2) if np.isfinite(coef) else None
    )

    in_window = series.t * model.delta <= 2.5 + 1e-9
    band = 3 * series.F_stderr + (2.0 / model.N) * np.abs(series.F_analytic)
    dev = np.abs(series.F_mean - series.F_analytic)
    frac = float(np.mean(dev[in_window] <= band[in_window]))
    checks["pointwise_fraction"] = frac
    checks["pointwise_ok"] = bool(frac >= 0.90)

    late = series.t * model.delta >= 3.0 - 1e-9
    if np.any(late):
        asym = analytic.C_asymptote(pair, beta, model)
        rel = np.abs(series.C_mean[late] - asym)
        bands = 3 * series.C_stderr[late] + (2.0 / model.N) * abs(asym)
        checks["asymptote_value"] = asym
        checks["asymptote_ok"] = bool(np.all(rel <= bands))
    else:
        checks["asymptote_value"] = None
        checks["asymptote_ok"] = None

    graded = [v for k, v in checks.items() if k.endswith("_ok") and v is not None]
    checks["all_ok"] = bool(all(graded)) if graded else True
    return checks


def cmd_run(config_path, out_dir=None, seed=None):
    """Run MC + analytic comparison; write series.csv and summary.json."""
    config = load_config(config_path)
    model, ensemble, pair = _build_objects(config, seed_override=seed)
    run = config["run"]
    beta = run["beta_delta"] / model.delta
    t_grid = np.linspace(0.0, run["t_delta_max"], run["t_points"]) / model.delta
    rc = RunConfig(
        ensemble=ensemble, pair=pair, beta=beta, t_grid=t_grid,
        members=run["members"], normalization_mode=run["normalization_mode"],
        workers=_workers(config),
    )
    t0 = time.time()
    series = run_series(rc)
    elapsed = time.time() - t0

    out = out_dir or config["output"]["out_dir"]
    os.makedirs(out, exist_ok=True)
    write_series_csv(os.path.join(out, "series.csv"), series)

    checks = _acceptance_checks(series, model, pair, beta)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "seed": ensemble.seed,
        "N": model.N,
        "M": series.M,
        "beta": beta,
        "beta_delta": beta * model.delta,
        "t": [float(x) for x in series.t],
        "t_delta": [float(x * model.delta) for x in series.t],
        "failures": series.failures,
        "checks": checks,
        "elapsed_seconds": elapsed,
    }
    with open(os.path.join(out, "summary.json"), "w") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return 0 if checks["all_ok"] else 2


def cmd_validate_moments(config_path, out_dir=None, seed=None):
    """Analytic moments vs oracle closed forms vs gaussian-mode sampling."""
    config = load_config(config_path)
    model, ensemble, pair = _build_objects(config, seed_override=seed)
    rng = np.random.default_rng(ensemble.seed)
    lo, hi = pair.support
    interior = np.arange(max(lo, 4), min(hi, model.D - 4))
    results = []

    for k in (1, 2, 3):
        tol = 1e-12 if k == 1 else 1e-8
        worst = 0.0
        for _ in range(20):
            chis = tuple(
                (-rng.uniform(0, 0.25) - 1j * rng.uniform(-2, 2)) / model.delta
                for _ in range(k)
            )
            ms = tuple(rng.choice(interior, size=k, replace=False))
            spec = analytic.MomentSpec(chis=chis, m_indices=ms)
            closed = analytic.correlated_moment(spec, model)
            oracle = wick_oracle.exact_moment(spec, model,
                                              restrict="connected_noncrossing")
            worst = max(worst, abs(closed - oracle) / max(abs(oracle), 1e-300))
        results.append({
            "name": f"chain_moment_k{k}", "k": k,
            "relative_error": worst, "tol": tol, "ok": bool(worst < tol),
        })

    # gaussian-mode sample mean of diagonal propagator elements vs closed form
    mc_cfg = EnsembleConfig(spectrum=model, eigenvalue_mode="picket",
                            overlap_mode="gaussian",
                            band_cutoff=ensemble.band_cutoff, seed=ensemble.seed)
    n_members = min(max(config["run"]["members"] * 10, 1000), 4000)
    points = [(int(rng.choice(interior)),
               (-rng.uniform(0, 0.25) - 1j * rng.uniform(-1.5, 1.5)) / model.delta)
              for _ in range(10)]
    acc = np.zeros(len(points), dtype=complex)
    for i in range(n_members):
        member = sample_member(mc_cfg, i)
        for j, (m, chi) in enumerate(points):
            acc[j] += np.sum(member.O[m] ** 2 * np.exp(chi * member.E))
    means = acc / n_members
    ok_pts = 0
    worst_sigma = 0.0
    for j, (m, chi) in enumerate(points):
        pred = analytic.first_moment(chi, model.energies[m], model.delta)
        # exact per-member variance: Var(sum_a O_ma^2 w_a) = 2 sum F^2 |w|^2
        win = window_weight_vec(model, m)
        spread = np.sqrt(2.0 * np.sum(win ** 2
                                      * np.abs(np.exp(chi * model.energies)) ** 2))
        stderr = spread / np.sqrt(n_members)
        n_sig = abs(means[j] - pred) / stderr
        worst_sigma = max(worst_sigma, float(n_sig))
        ok_pts += n_sig <= 3.0
    results.append({
        "name": "first_moment_mc", "k": 1,
        "points_within_3se": int(ok_pts), "points": len(points),
        "worst_sigma": worst_sigma, "ok": bool(ok_pts >= 9),
    })

    out = out_dir or config["output"]["out_dir"]
    os.makedirs(out, exist_ok=True)
    payload = {"schema_version": SCHEMA_VERSION, "checks": results}
    with open(os.path.join(out, "moments.json"), "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=float)
        handle.write("\n")
    return 0 if all(r["ok"] for r in results) else 2


def window_weight_vec(model, m):
    from .ensemble import window_weight
    return window_weight(model.energies[m], model.energies, model)


def cmd_variance_report(config_path, out_dir=None, seed=None):
    """1/N suppression: oracle trace correlations and MC variance halving."""
    config = load_config(config_path)
    model, ensemble, pair = _build_objects(config, seed_override=seed)
    d = model.d
    report = {"schema_version": SCHEMA_VERSION}

    # oracle: partition-trace correlation ratio across an N grid (fixed D)
    eye = np.eye(model.D)
    oracle_rows = []
    for n_win in (model.N / 2, model.N, model.N * 2):
        mdl = SpectrumModel(D=model.D, delta=n_win * d, d=d)
        beta = 0.25 / mdl.delta
        spec = wick_oracle.TraceSpec(mats=[eye], chis=[-beta])
        dec = wick_oracle.variance_decomposition(spec, spec, mdl)
        oracle_rows.append({"N": n_win, "ratio": dec.ratio})
    halvings = [oracle_rows[i + 1]["ratio"] / oracle_rows[i]["ratio"]
                for i in range(len(oracle_rows) - 1)]
    report["oracle_trZ"] = {
        "rows": oracle_rows,
        "halving_factors": halvings,
        "ok": bool(all(abs(h - 0.5) <= 0.05 for h in halvings)),
    }

    # Monte Carlo: var[F]/|<F>|^2 at N and 2N with fixed D/N
    mc_rows = []
    run = config["run"]
    for scale in (1, 2):
        n_win = model.N * scale
        mdl = SpectrumModel(D=int(model.D * scale), delta=n_win * d, d=d)
        lo, hi = padded_support(mdl, ensemble.band_cutoff)
        pr = generate_pair(mdl.D, pair.kind, (lo, hi),
                           bandwidth_b=config["operators"]["bandwidth"],
                           seed=config["operators"]["seed"])
        ens = EnsembleConfig(spectrum=mdl, eigenvalue_mode="picket",
                             overlap_mode="gaussian",
                             band_cutoff=ensemble.band_cutoff,
                             seed=ensemble.seed + scale)
        t_grid = np.array([0.3, 0.6, 0.9, 1.2]) / mdl.delta
        rc = RunConfig(ensemble=ens, pair=pr, beta=0.0, t_grid=t_grid,
                       members=max(run["members"], 100),
                       workers=_workers(config))
        series = run_series(rc)
        ratio = series.F_var / np.abs(series.F_mean) ** 2
        mc_rows.append({"N": n_win, "ratios": [float(r) for r in ratio]})
    mc_halving = float(np.median(
        np.array(mc_rows[1]["ratios"]) / np.array(mc_rows[0]["ratios"])
    ))
    report["mc_variance"] = {
        "rows": mc_rows,
        "halving_factor": mc_halving,
        "ok": bool(abs(mc_halving - 0.5) <= 0.30 * 0.5 + 0.05),
    }
    report["ok"] = bool(report["oracle_trZ"]["ok"] and report["mc_variance"]["ok"])

    out = out_dir or config["output"]["out_dir"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "variance.json"), "w") as handle:
        json.dump(report, handle, indent=2, sort_keys=True, default=float)
        handle.write("\n")
    return 0 if report["ok"] else 2


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="otoc-rmt",
        description="OTOC ensemble runs, moment validation, variance scaling",
    )
    parser.add_argument("command",
                        choices=["run", "validate-moments", "variance-report"])
    parser.add_argument("config", help="path to the INI experiment config")
    parser.add_argument("--out-dir", default=None,
                        help="override the [output] out_dir")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the [ensemble] seed")
    args = parser.parse_args(argv)

    dispatch = {
        "run": cmd_run,
        "validate-moments": cmd_validate_moments,
        "variance-report": cmd_variance_report,
    }
    try:
        return dispatch[args.command](args.config, out_dir=args.out_dir,
                                      seed=args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
