"""Command-line front end: ``evtss <subcommand> [options]``.

Every run writes into ``<out>/<subcommand>_<hash>/`` where the hash is taken
over the echoed run configuration, so identical configurations overwrite
the same directory with identical bytes.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from evtss import plots, report
from evtss.bivar import (
    copula_gof,
    cvm_independence_test,
    fit_bev_logistic,
    fit_copula_joe_frank,
    joint_collision_probability,
    kendall_tau,
    pearson,
    pseudo_observations,
)
from evtss.bivar.logistic import bev_logistic_logpdf, logistic_copula
from evtss.dataset import (
    MEASURE_COLLISION,
    RowParseError,
    SchemaError,
    Series,
    empirical_collision_probability,
    filter_threshold,
    load_csv,
    negate,
    normalize_to_sample_max,
    write_csv,
)
from evtss.dist import gev_pdf
from evtss.fit_pot import fit_gpd, pot_collision_probability
from evtss.fit_uni import NonStationarySpec, fit_gev, lr_test, qq_plot_data
from evtss.prob import (
    DEFAULT_MC_SIZE,
    bm_plugin_estimate,
    exceedance_at_zero,
    prob_covariate_approach,
    prob_locationdist_approach,
)
from evtss.sweep import DEFAULT_GRID, VARIANTS, stable_region, sweep_bm, sweep_pot
from evtss.synth import SynthConfig, generate, generate_with_counts, calibrated_config, true_collision_probability, with_seed

log = logging.getLogger("evtss")

EXIT_OK, EXIT_USAGE, EXIT_NONCONV = 0, 1, 2
DEFAULT_LIMIT = {"ttc": 1.5, "thw": 2.0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    seed: int
    out: str
    input: str | None = None
    schema: dict = field(default_factory=dict)
    measure: str = "ttc"
    limit: tuple[float, ...] = ()
    covariates: tuple[str, ...] = ()
    gumbel: bool = False
    normalized: bool = False
    mc_size: int = DEFAULT_MC_SIZE
    bootstrap: int = 1000
    level: float = 0.95
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def run_dir(self) -> Path:
        d = {k: v for k, v in self.to_dict().items() if k not in ("out", "threads")}
        return Path(self.out) / f"{self.subcommand.replace('-', '_')}_{report.config_hash(d)}"


# ---------------------------------------------------------------- helpers


def _load(cfg: RunConfig):
    if not cfg.input:
        raise UsageError("--input is required")
    if not Path(cfg.input).is_file():
        raise OSError(f"input file not found: {cfg.input}")
    return load_csv(cfg.input, cfg.schema or None)


def _limit(cfg: RunConfig, measure: str, idx: int = 0):
    if not cfg.limit:
        return DEFAULT_LIMIT[measure]
    return cfg.limit[idx] if idx < len(cfg.limit) else cfg.limit[-1]


def _modelling_series(series, normalized: bool):
    if normalized:
        s, shift = normalize_to_sample_max(series)
        return s, shift
    return negate(series), 0.0


def _quiet(fn, *a, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*a, **kw)


def _prepare(cfg: RunConfig):
    run = cfg.run_dir()
    run.mkdir(parents=True, exist_ok=True)
    report.write_json(cfg, run / "config.json")
    return run


def _finish(run: Path, payload: dict, text: str, converged: bool = True) -> int:
    payload = {"converged": converged, **payload}
    report.write_json(payload, run / "report.json")
    (run / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    print(f"\nwritten to {run}")
    return EXIT_OK if converged else EXIT_NONCONV


def _param_rows(fit):
    return [[name, c["estimate"], c["se"]] for name, c in fit.coefficients().items()]


# ---------------------------------------------------------------- commands


def cmd_prob_empirical(cfg: RunConfig) -> int:
    k, n = cfg.extra.get("k"), cfg.extra.get("n")
    if k is None or n is None:
        raise UsageError("prob-empirical needs --k and --n")
    run = _prepare(cfg)
    est = empirical_collision_probability(int(k), int(n), cfg.level)
    text = f"{est.p:.4f} ({est.ci[0]:.4f}, {est.ci[1]:.4f})\n"
    return _finish(run, {"estimate": est}, text)


def cmd_fit_bm(cfg: RunConfig) -> int:
    ds = _load(cfg)
    measure = cfg.measure
    limit = _limit(cfg, measure)
    run = _prepare(cfg)
    filt = filter_threshold(ds, measure, limit)
    k = filt.excluded_collisions[MEASURE_COLLISION[measure]]
    series = filt.series(measure)
    x, shift = _modelling_series(series, cfg.normalized)
    names = tuple(cfg.covariates)
    X = filt.covariate_matrix(names) if names else None

    base_spec = NonStationarySpec(fix_shape_to_zero=cfg.gumbel)
    full_spec = NonStationarySpec(names, fix_shape_to_zero=cfg.gumbel)
    stationary = _quiet(fit_gev, x, spec=base_spec, seed=cfg.seed)
    full = _quiet(fit_gev, x, X, full_spec, seed=cfg.seed) if names else stationary

    fits = {"stationary": stationary}
    lr_rows = []
    if names:
        fits["full"] = full
        lr = lr_test(stationary, full)
        lr_rows.append({"restricted": "stationary", "full": "full", **lr.to_dict()})
        if len(names) > 1:
            for sub in combinations(names, len(names) - 1):
                cols = [names.index(c) for c in sub]
                f = _quiet(fit_gev, x, X[:, cols], NonStationarySpec(sub, fix_shape_to_zero=cfg.gumbel),
                           seed=cfg.seed)
                dropped = next(c for c in names if c not in sub)
                fits[f"without_{dropped}"] = f
                lr_rows.append({"restricted": f"without_{dropped}", "full": "full", **lr_test(f, full).to_dict()})
    gumbel_offer = None
    if not cfg.gumbel and full.prefers_gumbel():
        gumbel_offer = _quiet(fit_gev, x, X, NonStationarySpec(names, fix_shape_to_zero=True), seed=cfg.seed)
        fits["gumbel_refit"] = gumbel_offer

    empirical = empirical_collision_probability(k, len(series), cfg.level)
    probs = {"empirical": empirical, "plugin_stationary": bm_plugin_estimate(stationary.params())}
    if full.converged:
        probs["covariate"] = prob_covariate_approach(full, X, cfg.mc_size, cfg.seed, cfg.level, cfg.threads)
        probs["location_distribution"] = prob_locationdist_approach(full, X, cfg.mc_size, cfg.seed, cfg.level,
                                                                    cfg.threads)

    qq = qq_plot_data(full, x, X, n_sim=200, seed=cfg.seed, level=cfg.level)
    report.write_csv([dict(zip(("theoretical", "empirical", "lower", "upper"), r)) for r in qq.rows()],
                     run / "qq.csv")
    plots.qq_svg(qq, run / "qq.svg", title=f"{measure.upper()} {full.family} QQ")
    grid = np.linspace(x.values.min() - 0.2, max(0.2, x.values.max() + 0.2), 300)
    mu = full.location(X)
    pdf = np.mean([gev_pdf(full.params(None if X is None else X[i]), grid) for i in range(0, len(mu),
                                                                                         max(1, len(mu) // 200))],
                  axis=0)
    plots.density_svg(x.values, grid, pdf, run / "density.svg", title=f"{measure.upper()} fitted density")

    text = [f"measure {measure}, filter < {limit} s, n = {len(series)}, collisions k = {k}",
            f"scale: {'normalized, shift ' + format(shift, '.6g') if cfg.normalized else 'negated'}\n"]
    for label, f in fits.items():
        text.append(report.table(["parameter", "estimate", "se"], _param_rows(f),
                                 title=f"{label} ({f.family}, loglik {f.loglik:.3f}, AIC {f.aic:.3f})"))
    if lr_rows:
        text.append(report.table(["restricted", "full", "statistic", "df", "p_value"],
                                 [[r["restricted"], r["full"], r["statistic"], r["df"], r["p_value"]]
                                  for r in lr_rows], title="likelihood-ratio tests"))
    text.append(report.table(["method", "p", "ci"], [[k2, e.p, e.ci] for k2, e in probs.items()],
                             title="collision probability"))
    converged = all(f.converged for f in fits.values())
    payload = {
        "measure": measure, "limit": limit, "n": len(series), "collisions": k, "shift": shift,
        "fits": {k2: f.to_dict() for k2, f in fits.items()}, "lr_tests": lr_rows,
        "family": full.family, "prefers_gumbel": full.prefers_gumbel(), "probabilities": probs,
        "qq_inside_fraction": qq.inside_fraction,
    }
    return _finish(run, payload, "\n".join(text), converged)


def _biv_data(cfg: RunConfig):
    ds = _load(cfg)
    if cfg.limit:
        ds = filter_threshold(ds, "ttc", _limit(cfg, "ttc", 0))
        ds = filter_threshold(ds, "thw", _limit(cfg, "thw", 1))
    recs = ds.estimation_records()
    ttc = np.array([r.ttc for r in recs])
    thw = np.array([r.thw for r in recs])
    return ds, ttc, thw


def cmd_fit_biv(cfg: RunConfig) -> int:
    ds, ttc, thw = _biv_data(cfg)
    run = _prepare(cfg)
    x, _ = _modelling_series(Series(ttc), False)
    y, shift = _modelling_series(Series(thw), cfg.normalized)
    names = tuple(cfg.covariates)
    X = ds.covariate_matrix(names) if names else None
    spec = NonStationarySpec(names)

    # route (a): joint ML, shapes free
    biv = _quiet(fit_bev_logistic, (x, y), (X, X), (spec, spec), seed=cfg.seed)
    m1 = biv.margin_location(0, X, len(ttc))
    m2 = biv.margin_location(1, X, len(ttc))
    p1, p2 = biv.margin_params(0), biv.margin_params(1)
    pa_each = 1 - logistic_copula(1 - exceedance_at_zero(m1, p1.sigma, p1.xi),
                                  1 - exceedance_at_zero(m2, p2.sigma, p2.xi), biv.r)
    F0a = float(np.mean(1 - exceedance_at_zero(m1, p1.sigma, p1.xi)))
    G0a = float(np.mean(1 - exceedance_at_zero(m2, p2.sigma, p2.xi)))
    route_a = joint_collision_probability(F0a, G0a, biv.r)

    # route (b): margins first, then the copula on pseudo-observations
    u1 = _quiet(fit_gev, x, X, spec, seed=cfg.seed)
    u2 = _quiet(fit_gev, y, X, NonStationarySpec(names, fix_shape_to_zero=cfg.gumbel), seed=cfg.seed)
    if not cfg.gumbel and u2.prefers_gumbel():
        u2 = _quiet(fit_gev, y, X, NonStationarySpec(names, fix_shape_to_zero=True), seed=cfg.seed)
    pobs = pseudo_observations(x, y)
    cop = fit_copula_joe_frank(pobs)
    gof = copula_gof(cop, pobs, cfg.bootstrap, cfg.seed)
    F0b = float(np.mean(1 - exceedance_at_zero(u1.location(X), u1.sigma, u1.xi)))
    G0b = float(np.mean(1 - exceedance_at_zero(u2.location(X), u2.sigma, u2.xi)))
    route_b = joint_collision_probability(F0b, G0b, cop)

    rho = pearson(x, y)
    tau = kendall_tau(x, y)
    cvm = cvm_independence_test(x.values, y.values, max(cfg.bootstrap, 1), cfg.seed)

    # joint density on a grid for the contour plot (stationary margins at the mean location)
    xg = np.linspace(np.quantile(x.values, 0.005), max(0.1, x.values.max() + 0.1), 80)
    yg = np.linspace(np.quantile(y.values, 0.005), max(0.1, y.values.max() + 0.1), 80)
    XX, YY = np.meshgrid(xg, yg)
    mp1 = (float(np.mean(m1)), p1.sigma, p1.xi)
    mp2 = (float(np.mean(m2)), p2.sigma, p2.xi)
    with np.errstate(all="ignore"):
        Z = np.exp(np.vectorize(lambda a, b: _safe_logpdf(a, b, mp1, mp2, biv.r))(XX, YY))
    report.write_csv([{"x": float(a), "y": float(b), "density": float(c)}
                      for a, b, c in zip(XX.ravel(), YY.ravel(), Z.ravel())], run / "contour.csv")
    plots.contour_svg(xg, yg, Z, run / "contour.svg", points=(x.values, y.values))

    text = [f"pairs n = {len(ttc)}, THW scale {'normalized' if cfg.normalized else 'negated'}\n",
            report.table(["parameter", "estimate", "se"],
                         [[nme, v, s] for nme, v, s in zip(biv.param_names(), biv.theta, biv.se)],
                         title=f"route (a) logistic BEV (loglik {biv.loglik:.3f}, AIC {biv.aic:.3f})"),
            f"tail dependence 2 - 2^r = {biv.tail_dependence:.4f}\n",
            report.table(["parameter", "estimate", "se"],
                         [["theta", cop.theta, cop.se[0]], ["delta", cop.delta, cop.se[1]]],
                         title=f"route (b) Joe-Frank copula (implied tau {cop.kendall_tau_implied:.4f})"),
            report.table(["statistic", "value", "p_value"],
                         [["pearson", rho[0], rho[1]], ["kendall_tau", tau[0], tau[1]],
                          ["cvm_independence", cvm.statistic, cvm.p_value],
                          ["gof_cvm", gof.cvm, gof.cvm_p], ["gof_ks", gof.ks, gof.ks_p]],
                         title="dependence diagnostics"),
            report.table(["quantity", "route_a", "route_b"],
                         [[k2, route_a.extra[k2], route_b.extra[k2]]
                          for k2 in ("any", "head_on", "rear_end", "head_on_only", "rear_end_only", "both")],
                         title="collision probabilities")]
    warn = list(biv.warnings)
    payload = {
        "n": len(ttc), "route_a": {"fit": biv.to_dict(), "probability": route_a,
                                   "probability_per_maneuver_mean": float(np.mean(pa_each))},
        "route_b": {"margins": [u1.to_dict(), u2.to_dict()], "copula": cop.to_dict(), "gof": gof.to_dict(),
                    "probability": route_b},
        "diagnostics": {"pearson": rho, "kendall_tau": tau, "cvm_independence": cvm.to_dict()},
        "warnings": warn, "thw_shift": shift,
    }
    if warn:
        text.append("warnings: " + "; ".join(warn) + "\n")
    return _finish(run, payload, "\n".join(text), biv.converged and u1.converged and u2.converged)


def _safe_logpdf(a, b, mp1, mp2, r):
    v = bev_logistic_logpdf(np.array([a]), np.array([b]), mp1, mp2, r)
    if v is None:
        return -np.inf
    v = np.asarray(v, dtype=float).ravel()
    return float(v[0]) if v.size and np.isfinite(v[0]) else -np.inf


def cmd_sweep(cfg: RunConfig) -> int:
    ds = _load(cfg)
    run = _prepare(cfg)
    measure = cfg.measure
    series = ds.series(measure)
    k = ds.collision_counts()[MEASURE_COLLISION[measure]]
    grid = tuple(cfg.extra.get("grid") or DEFAULT_GRID)
    out, text = {}, []
    for method, fn in (("bm", sweep_bm), ("pot", sweep_pot)):
        results = [fn(series, k, grid, v, seed=cfg.seed, threads=cfg.threads) for v in VARIANTS]
        report.write_csv([row for sr in results for row in sr.rows()], run / f"sweep_{method}.csv")
        plots.sweep_svg(results, run / f"sweep_{method}.svg", title=f"{measure.upper()} {method.upper()} sweep")
        out[method] = {}
        for sr in results:
            regions = stable_region(sr, cfg.extra.get("xi_tol", 0.1), cfg.extra.get("min_width", 0.3))
            out[method][sr.variant] = {**sr.to_dict(), "stable_regions": regions}
            text.append(report.table(
                ["threshold", "n", "status", "xi", "xi_se", "p_model", "p_empirical"],
                [[p.threshold, p.n, p.status if p.ok else p.reason, p.xi, p.xi_se, p.p_model, p.p_empirical]
                 for p in sr.points],
                title=f"{method} {sr.variant}: stable regions {regions or 'none'}"))
            text.extend(f"warning: {w}\n" for w in sr.warnings)
    return _finish(run, {"measure": measure, "collisions": k, "sweeps": out}, "\n".join(text))


def cmd_pot(cfg: RunConfig) -> int:
    ds = _load(cfg)
    run = _prepare(cfg)
    measure = cfg.measure
    u = _limit(cfg, measure)
    series = ds.series(measure)
    k = ds.collision_counts()[MEASURE_COLLISION[measure]]
    x, shift = _modelling_series(series, cfg.normalized)
    fit = _quiet(fit_gpd, x, -u - shift, seed=cfg.seed)
    est = pot_collision_probability(fit, 0.0)
    emp = empirical_collision_probability(k, fit.n_exceed, cfg.level)
    text = report.table(["parameter", "estimate", "se"], [["sigma", fit.sigma, fit.se[0]], ["xi", fit.xi, fit.se[1]]],
                        title=f"GPD over {measure.upper()} < {u} s (n_u = {fit.n_exceed} of {fit.n})")
    text += "\n" + report.table(["method", "p"], [["pot conditional", est.extra["conditional"]],
                                            ["pot unconditional", est.extra["unconditional"]],
                                            ["empirical k/(n_u+k)", emp.p]], title="collision probability")
    return _finish(run, {"fit": fit.to_dict(), "probability": est, "empirical": emp, "shift": shift}, text,
                   fit.converged)


def cmd_simulate(cfg: RunConfig) -> int:
    path = cfg.extra.get("config")
    conf = SynthConfig.from_json(path) if path else calibrated_config(n_maneuvers=cfg.extra.get("n_maneuvers") or 1287)
    conf = with_seed(conf, cfg.seed)
    run = _prepare(cfg)
    ds = generate_with_counts(conf) if cfg.extra.get("reference_counts") else generate(conf)
    write_csv(ds, run / "maneuvers.csv")
    report.write_json(conf, run / "synth_config.json")
    payload = {"n": len(ds), "collisions": ds.collision_counts(), "synth_config": conf.to_dict(),
               "csv": str(run / "maneuvers.csv")}
    text = f"{len(ds)} maneuvers, collisions {ds.collision_counts()}\n"
    if cfg.extra.get("truth"):
        tp = true_collision_probability(conf, int(cfg.extra.get("truth_n") or 10_000_000))
        payload["truth"] = tp.to_dict()
        text += report.table(["event", "brute_force", "se", "semi_analytic"],
                             [[k2, getattr(tp, f"p_{k2}"), tp.se[k2], tp.semi_analytic[k2]]
                              for k2 in ("head_on", "rear_end", "joint")], title="true probabilities")
    return _finish(run, payload, text)


COMMANDS = {
    "fit-bm": cmd_fit_bm,
    "fit-biv": cmd_fit_biv,
    "sweep": cmd_sweep,
    "pot": cmd_pot,
    "simulate": cmd_simulate,
    "prob-empirical": cmd_prob_empirical,
}


# ---------------------------------------------------------------- parsing


def _schema(value: str | None) -> dict:
    if not value:
        return {}
    p = Path(value)
    if p.is_file():
        return json.loads(p.read_text(encoding="utf-8"))
    try:
        return dict(item.split("=", 1) for item in value.split(","))
    except ValueError:
        raise UsageError(f"--schema must be a JSON file or name=column pairs, got {value!r}") from None


def _floats(value: str | None) -> tuple[float, ...]:
    if not value:
        return ()
    try:
        return tuple(float(v) for v in value.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="maneuver CSV")
    common.add_argument("--schema", help="JSON file or name=column pairs mapping logical names to CSV columns")
    common.add_argument("--measure", choices=("ttc", "thw"), default="ttc")
    common.add_argument("--limit", help="filter limit / POT threshold in seconds; 'ttc,thw' for fit-biv")
    common.add_argument("--covariates", default="", help="comma-separated covariate names")
    common.add_argument("--gumbel", action="store_true", help="pin the shape to zero")
    common.add_argument("--normalized", action="store_true", help="shift the negated data by its sample maximum")
    common.add_argument("--mc-size", type=int, default=DEFAULT_MC_SIZE)
    common.add_argument("--bootstrap", type=int, default=1000)
    common.add_argument("--seed", type=int, default=None, help="defaults to $EVTSS_SEED, then 0")
    common.add_argument("--level", type=float, default=0.95)
    common.add_argument("--out", default="runs")
    common.add_argument("--threads", type=int, default=1)

    p = _Parser(prog="evtss", description="Collision probabilities from surrogate safety measures.")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    sub.add_parser("fit-bm", parents=[common], help="univariate block-maxima fits and probabilities")
    sub.add_parser("fit-biv", parents=[common], help="bivariate logistic model and Joe-Frank copula")
    sp = sub.add_parser("sweep", parents=[common], help="threshold sensitivity sweeps")
    sp.add_argument("--grid", help="comma-separated thresholds (default 0.6..2.4 by 0.1)")
    sp.add_argument("--xi-tol", type=float, default=0.1)
    sp.add_argument("--min-width", type=float, default=0.3)
    sub.add_parser("pot", parents=[common], help="peaks-over-threshold fit")
    sm = sub.add_parser("simulate", parents=[common], help="write a synthetic maneuver CSV")
    sm.add_argument("--config", help="SynthConfig JSON (default: calibrated)")
    sm.add_argument("--n-maneuvers", type=int)
    sm.add_argument("--truth", action="store_true", help="also compute brute-force true probabilities")
    sm.add_argument("--truth-n", type=int)
    sm.add_argument("--reference-counts", action="store_true",
                    help="stratify to 1287 maneuvers, 9 + 2 collisions, 463 TTC < 1.5 s, 492 THW < 2.0 s")
    pe = sub.add_parser("prob-empirical", parents=[common], help="k/(n+k) with a normal-approximation CI")
    pe.add_argument("--k", type=int)
    pe.add_argument("--n", type=int)
    return p


def config_from_args(args) -> RunConfig:
    seed = args.seed
    if seed is None:
        env = os.environ.get("EVTSS_SEED")
        try:
            seed = int(env) if env else 0
        except ValueError:
            raise UsageError(f"EVTSS_SEED must be an integer, got {env!r}") from None
    extra = {}
    for key in ("grid", "xi_tol", "min_width", "config", "n_maneuvers", "truth", "truth_n", "reference_counts", "k", "n"):
        if hasattr(args, key):
            val = getattr(args, key)
            extra[key] = list(_floats(val)) if key == "grid" else val
    if args.mc_size < 1 or args.bootstrap < 1 or args.threads < 1:
        raise UsageError("--mc-size, --bootstrap and --threads must be positive")
    if not 0 < args.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    return RunConfig(
        subcommand=args.subcommand, seed=seed, out=args.out, input=args.input, schema=_schema(args.schema),
        measure=args.measure, limit=_floats(args.limit),
        covariates=tuple(c for c in args.covariates.split(",") if c), gumbel=args.gumbel,
        normalized=args.normalized, mc_size=args.mc_size, bootstrap=args.bootstrap, level=args.level,
        threads=args.threads, extra=extra,
    )


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        return COMMANDS[cfg.subcommand](cfg)
    except (UsageError, SchemaError, RowParseError, OSError) as e:
        print(f"evtss: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"evtss: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
