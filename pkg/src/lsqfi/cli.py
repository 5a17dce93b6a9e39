"""Command-line entry point: ``lsqfi <subcommand> [--config FILE] [flags]``.

Exit codes: 0 success, 2 input error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .basis import penalty_matrices
from .design import GridCurves, build_design, center_columns
from .diagnostics import qq_simulation, residual_density
from .io import (InputError, ModelBundle, RunConfig, config_help, fit_record, load_bundle, load_config,
                 load_dataset, write_functional_csv, write_json, write_rows)
from .penalty import PenaltyConfig
from .simbench import ErrorCase, METHOD_LABELS, run_benchmark
from .solver import METHODS, FitResult, SingularSystemError, fit, predict, reconstruct
from .tecator import (official_split, parse_tecator, random_split, run_split, tecator_dataset)
from .tuning import TuningGrid, grid_search

log = logging.getLogger("lsqfi")

EXIT_INPUT, EXIT_NUMERIC = 2, 3
CURVE_POINTS = 501


class NumericFailure(RuntimeError):
    pass


def _outdir(cfg: RunConfig) -> Path:
    p = Path(cfg.output)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _grid(cfg: RunConfig) -> TuningGrid:
    return TuningGrid(cfg.eta_grid, cfg.lambda1_grid, cfg.xi)


def _check_hierarchy(cfg: RunConfig, results: list[FitResult]) -> None:
    if not cfg.verify_hierarchy:
        return
    bad = sum(r.hierarchy_violations() for r in results)
    if bad:
        raise NumericFailure(f"hierarchy check failed: {bad} interval(s) with a nonzero interaction "
                             f"but a null main effect")
    print(f"hierarchy verified on {len(results)} fit(s)")


def _write_fit_outputs(out: Path, bundle: ModelBundle, results: list[FitResult], taus, extra=None) -> None:
    spec = bundle.spec
    t = np.linspace(0.0, spec.domain_end, CURVE_POINTS)
    q = bundle.q
    curve_rows, mask_rows, summary = [], [], []
    for tau, res in zip(taus, results):
        beta = reconstruct(res, spec, t)
        curve_rows += [[tau, t[i], *beta[:, i]] for i in range(t.size)]
        for k in range(q + 1):
            mask_rows += [[tau, k, l, int(res.interval_masks[k, l])] for l in range(spec.m_intervals)]
        summary.append({"tau": tau, "method": bundle.method, "gamma": res.coeffs.gamma,
                        "intercept": res.coeffs.intercept, "eta": res.config.eta, "lambda1": res.config.lambda1,
                        "iterations": res.iterations, "converged": res.converged,
                        "hierarchy_violations": res.hierarchy_violations(),
                        "objective_trace": res.objective_trace, **((extra or {}).get(tau, {}))})
    write_json(out / "coefficients.json", bundle.to_json())
    write_rows(out / "beta_curves.csv", ["tau", "t"] + [f"beta_{k}" for k in range(q + 1)], curve_rows)
    write_rows(out / "masks.csv", ["tau", "k", "interval", "null"], mask_rows)
    write_json(out / "summary.json", {"scalar_names": list(bundle.scalar_names), "fits": summary})


def _prepare(cfg: RunConfig):
    data = load_dataset(cfg.curves, cfg.scalars, cfg)
    offsets = None
    if cfg.center:
        data, offsets = center_columns(data)
    return data, offsets


def _bundle(cfg: RunConfig, data, offsets) -> ModelBundle:
    grid = tuple(data.curves.grid) if isinstance(data.curves, GridCurves) else ()
    return ModelBundle(cfg.basis(), data.q, cfg.intercept, data.scalar_names, cfg.method, [], offsets, grid,
                       cfg.map_to_unit, cfg.to_dict(portable=True))


def cmd_fit(cfg: RunConfig) -> None:
    data, offsets = _prepare(cfg)
    spec = cfg.basis()
    design = build_design(data, spec, cfg.intercept)
    mats = penalty_matrices(spec)
    bundle = _bundle(cfg, data, offsets)
    results = []
    for tau in cfg.tau:
        res = fit(design, data.response, spec, cfg.penalty(data.q), cfg.fit_options(tau), mats)
        if not res.converged:
            log.warning("tau=%g: no convergence within %d iterations", tau, cfg.max_iter)
        results.append(res)
        bundle.fits.append(fit_record(res, tau))
    _write_fit_outputs(_outdir(cfg), bundle, results, cfg.tau)
    _check_hierarchy(cfg, results)


def cmd_tune(cfg: RunConfig) -> None:
    data, offsets = _prepare(cfg)
    valid = load_dataset(cfg.valid_curves, cfg.valid_scalars, cfg)
    if offsets is not None:
        valid = offsets.apply(valid)
    spec = cfg.basis()
    dt, dv = build_design(data, spec, cfg.intercept), build_design(valid, spec, cfg.intercept)
    bundle = _bundle(cfg, data, offsets)
    results, rows, extra = [], [], {}
    for tau in cfg.tau:
        opts = cfg.fit_options(tau)
        g = _grid(cfg).for_penalty(opts.penalty)
        tr = grid_search((dt, data.response), (dv, valid.response), spec, g, opts, jobs=cfg.jobs, keep_fits=False)
        results.append(tr.best_fit)
        bundle.fits.append(fit_record(tr.best_fit, tau))
        extra[tau] = {"validation_score": tr.best_score}
        rows += [[tau, g.lambda1_grid[i], g.eta_grid[j], tr.score_table[i, j]]
                 for i in range(len(g.lambda1_grid)) for j in range(len(g.eta_grid))]
    out = _outdir(cfg)
    _write_fit_outputs(out, bundle, results, cfg.tau, extra)
    write_rows(out / "tuning.csv", ["tau", "lambda1", "eta", "score"], rows)
    _check_hierarchy(cfg, results)


def _bundle_design(bundle: ModelBundle, cfg: RunConfig, need_response: bool):
    cfg_b = RunConfig(**{**cfg.__dict__, "map_to_unit": bundle.map_to_unit,
                         "domain_end": bundle.spec.domain_end})
    data = load_dataset(cfg.curves, cfg.scalars, cfg_b, need_response=need_response)
    if data.q != bundle.q:
        raise InputError(f"{cfg.scalars} has {data.q} scalar columns, the model expects {bundle.q}")
    y_off = 0.0
    if bundle.offsets is not None:
        if len(bundle.grid) != data.curves.grid.size or not np.allclose(bundle.grid, data.curves.grid):
            raise InputError(f"{cfg.curves}: grid differs from the one the centred model was fitted on")
        data = bundle.offsets.apply(data)
        y_off = bundle.offsets.response
    return data, build_design(data, bundle.spec, bundle.intercept), y_off


def cmd_predict(cfg: RunConfig) -> None:
    bundle = load_bundle(cfg.model)
    _, design, y_off = _bundle_design(bundle, cfg, need_response=False)
    rows = []
    for i, rec in enumerate(bundle.fits):
        yhat = predict(bundle.coefficients(i), design) + y_off
        rows += [[rec["tau"], r, v] for r, v in enumerate(yhat)]
    write_rows(_outdir(cfg) / "predictions.csv", ["tau", "row", "prediction"], rows)


def cmd_diagnose(cfg: RunConfig) -> None:
    bundle = load_bundle(cfg.model)
    data, design, _ = _bundle_design(bundle, cfg, need_response=True)
    dens_rows = []
    for i, rec in enumerate(bundle.fits):
        resid = data.response - predict(bundle.coefficients(i), design)
        x, d = residual_density(resid, cfg.density_points)
        dens_rows += [[METHOD_LABELS.get(bundle.method, bundle.method), rec["tau"], a, b] for a, b in zip(x, d)]
    out = _outdir(cfg)
    write_rows(out / "residual_density.csv", ["method", "tau", "x", "density"], dens_rows)
    rec = bundle.fits[0]
    pcfg = PenaltyConfig(rec["lambda1"], rec["lambda2"], rec["xi"], rec["eta"])
    qq = qq_simulation(design, data.response, bundle.spec, pcfg, cfg.fit_options(0.5, bundle.method),
                       np.random.default_rng(cfg.seed), cfg.qq_draws)
    write_rows(out / "qq_points.csv", ["probability", "simulated", "observed"], qq.tolist())


def cmd_simulate(cfg: RunConfig) -> None:
    out = _outdir(cfg)
    table, per_rep, meta = [], [], []
    for tau in cfg.tau:
        case = ErrorCase(cfg.error_case, tau=tau)
        for n in cfg.n:
            b = run_benchmark(cfg.scenario, case, n, tau, cfg.methods, cfg.replicates, cfg.seed, _grid(cfg),
                              cfg.n_valid, cfg.basis(), jobs=cfg.jobs, rho_perturb=cfg.rho_perturb,
                              max_iter=cfg.max_iter, conv_tol=cfg.conv_tol, zero_threshold=cfg.zero_threshold,
                              threshold_mode=cfg.threshold_mode)
            head = [cfg.scenario, cfg.error_case, tau]
            table += [head + [r["method"], r["n"], r["metric"], "" if r["k"] is None else r["k"], r["mean"],
                              r["sd"], r["count"]] for r in b.table]
            per_rep += [head + [r["method"], r["n"], r["replicate"], r["metric"],
                                "" if r["k"] is None else r["k"], r["value"]] for r in b.per_replicate]
            meta.append({"tau": tau, "n": n, "failures": b.failures, "hierarchy_fits": b.hierarchy_fits,
                         "hierarchy_violations": b.hierarchy_violations})
            if b.failures:
                log.warning("tau=%g n=%d: %d replicate(s) failed and were excluded", tau, n, b.failures)
            if cfg.verify_hierarchy and b.hierarchy_violations:
                raise NumericFailure(f"{b.hierarchy_violations} hierarchy violation(s) in simulation fits")
    cols = ["scenario", "case", "tau", "method", "n"]
    write_rows(out / "table.csv", cols + ["metric", "k", "mean", "sd", "count"], table)
    write_rows(out / "per_replicate.csv", cols + ["replicate", "metric", "k", "value"], per_rep)
    write_json(out / "simulation_summary.json", {"config": cfg.to_dict(portable=True), "runs": meta})


def _tecator_data(cfg: RunConfig):
    if cfg.tecator_file:
        curves, chem = parse_tecator(cfg.tecator_file)
        return tecator_dataset(curves, chem, cfg.tecator_response)
    if not (cfg.curves and cfg.scalars):
        raise InputError("tecator needs tecator_file, or curves and scalars from convert-tecator")
    tcfg = RunConfig(**{**cfg.__dict__, "response": "fat", "map_to_unit": True, "domain_end": 1.0})
    data = load_dataset(cfg.curves, cfg.scalars, tcfg)
    if cfg.tecator_response == "log":
        data = type(data)(data.curves, data.scalars, np.log(data.response), data.scalar_names)
    return data


def cmd_convert_tecator(cfg: RunConfig) -> None:
    if not cfg.tecator_file:
        raise InputError("convert-tecator needs tecator_file")
    curves, chem = parse_tecator(cfg.tecator_file)
    out = _outdir(cfg)
    write_functional_csv(out / "curves.csv", curves)
    write_rows(out / "scalars.csv", ["moisture", "protein", "fat"], chem[:, [0, 2, 1]].tolist())


def cmd_tecator(cfg: RunConfig) -> None:
    data = _tecator_data(cfg)
    if data.n != 215:
        raise InputError(f"Tecator protocol expects 215 samples, found {data.n}")
    spec = cfg.basis()
    grid = _grid(cfg)
    out = _outdir(cfg)
    kw = dict(rho_perturb=cfg.rho_perturb, max_iter=cfg.max_iter, conv_tol=cfg.conv_tol,
              zero_threshold=cfg.zero_threshold, threshold_mode=cfg.threshold_mode)
    splits = [("official", official_split())]
    rng = np.random.default_rng(cfg.seed)
    splits += [(str(p), random_split(rng)) for p in range(cfg.partitions)]
    set_names = ("C", "M", "T")
    write_rows(out / "partitions.csv", ["partition", "sample", "set"],
               [[name, int(i), set_names[s]] for name, sp in splits for s in range(3) for i in sp[s]])

    def jobs_for(method):
        # least-squares fits do not depend on tau; score them at the median
        return [0.5] if METHODS[method][0] == "ls" else list(cfg.tau)

    rows, official = [], []
    for name, sp in splits:
        for method in cfg.methods:
            for tau in jobs_for(method):
                o = run_split(data, sp, spec, tau, method, grid, kw, jobs=cfg.jobs)
                mu, g1, g2 = o.estimates
                rows.append([name, METHOD_LABELS[method], tau, mu, g1, g2, o.prediction_error,
                             o.best_eta, o.best_lambda1])
                if name == "official":
                    official.append(o)
    cols = ["partition", "method", "tau", "mu", "gamma1", "gamma2", "prediction_error", "eta", "lambda1"]
    write_rows(out / "prediction_error.csv", cols, rows)

    bundle = ModelBundle(spec, data.q, True, data.scalar_names, "mixed", [], None, (), True, cfg.to_dict(portable=True))
    for o in official:
        bundle.fits.append({**fit_record(o.fit, o.tau), "method": o.method})
    write_json(out / "tecator_fits.json", bundle.to_json())
    prop = [o for o in official if o.method == "proposed"]
    if prop:
        pb = ModelBundle(spec, data.q, True, data.scalar_names, "proposed",
                         [fit_record(o.fit, o.tau) for o in prop], None, (), True, cfg.to_dict(portable=True))
        _write_fit_outputs(out, pb, [o.fit for o in prop], [o.tau for o in prop])
    if cfg.partitions:
        summ = []
        for method in cfg.methods:
            for tau in jobs_for(method):
                sel = np.array([r[3:7] for r in rows if r[0] != "official" and r[1] == METHOD_LABELS[method]
                                and r[2] == tau], dtype=float)
                sd = sel.std(axis=0, ddof=1) if len(sel) > 1 else np.zeros(4)
                summ.append([METHOD_LABELS[method], tau, *sel.mean(axis=0), *sd, len(sel)])
        write_rows(out / "random_partition_summary.csv",
                   ["method", "tau", "mu_mean", "gamma1_mean", "gamma2_mean", "prediction_error_mean",
                    "mu_sd", "gamma1_sd", "gamma2_sd", "prediction_error_sd", "partitions"], summ)
    _check_hierarchy(cfg, [o.fit for o in official if METHODS[o.method][1] == "sparse-group"])


HELP = {
    "fit": "fit at fixed (eta, lambda1) for each tau",
    "tune": "grid-search (eta, lambda1) on a validation set, then refit outputs",
    "simulate": "run the replicate benchmark and write table.csv / per_replicate.csv",
    "predict": "predict new rows from a coefficients.json bundle",
    "diagnose": "residual densities and the random-quantile QQ check",
    "tecator": "official split and random partitions on the Tecator data",
    "convert-tecator": "convert the plain-text Tecator file to curves.csv / scalars.csv",
}

COMMANDS = {"fit": cmd_fit, "tune": cmd_tune, "simulate": cmd_simulate, "predict": cmd_predict,
            "diagnose": cmd_diagnose, "tecator": cmd_tecator, "convert-tecator": cmd_convert_tecator}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--seed", type=int, help="random seed (default %(default)s from config)")
    common.add_argument("--jobs", type=int, help="parallel workers for grids and replicates")
    common.add_argument("--tau", type=float, action="append", help="quantile level; repeat for several")
    common.add_argument("--method", choices=sorted(METHODS), help="estimator variant")
    common.add_argument("--output", help="output directory")
    common.add_argument("--verify-hierarchy", action="store_true", default=None,
                        help="fail with exit code 3 if any fit breaks the main-effect hierarchy")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="lsqfi", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter,
                                epilog="configuration keys and defaults:\n" + config_help())
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"seed": args.seed, "jobs": args.jobs, "method": args.method, "output": args.output,
                 "verify_hierarchy": args.verify_hierarchy, "tau": tuple(args.tau) if args.tau else None}
    try:
        cfg = load_config(args.config, overrides)
        cfg.basis()
        COMMANDS[args.command](cfg)
    except (InputError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericFailure, SingularSystemError, np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
