"""Command-line interface.

Subcommands: ``simulate``, ``fit``, ``predict``, ``bootstrap``,
``compare-approx``, ``permute-check``.  Every run is reproducible from the
input CSV plus the run configuration (JSON config file and/or flags); the
only environment variable read is ``COUNTCOPULA_THREADS``, which bounds BLAS
thread counts.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import dependence, likelihood as lk, report, results, simulate as sim
from .data import ingest_csv, write_csv
from .errors import CountCopulaError, InputError
from .estimation import ModelSpec, OptimizerConfig, fit, lr_test
from .model import CONSTANT, COVARIATE

_TIME_COLUMNS = {"date", "year", "day"}


@dataclass
class RunConfig:
    species: list | None = None
    num_coef: int = 7
    n_freq: int = 3
    likelihood: str = lk.DISCRETE
    lambda_mode: str = CONSTANT
    seed: int = 0
    replicates: int = 100
    level: float = 0.95
    optimizer: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def optimizer_config(self):
        return OptimizerConfig(**self.optimizer)

    def model_spec(self):
        num_coef = self.num_coef
        if isinstance(num_coef, list):
            num_coef = tuple(num_coef)
        return ModelSpec(num_coef=num_coef, n_freq=self.n_freq, lambda_mode=self.lambda_mode)


def _load_config(args):
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    for name in ("likelihood", "seed", "replicates"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    lam = getattr(args, "lambda_mode", None)
    if lam is not None and lam != "both":
        cfg.lambda_mode = lam
    return cfg


def _detect_species(path, configured):
    if configured:
        return list(configured)
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        header = next(_csv.reader(fh))
    species = [h.strip() for h in header if h.strip() not in _TIME_COLUMNS]
    if not species:
        raise InputError(f"no species columns found in {path}")
    return species


def _ingest(args, cfg):
    species = _detect_species(args.input, cfg.species)
    return ingest_csv(args.input, species)


def _dependence_payload(fit_result, cfg):
    day = 1.0 if fit_result.model.lambda_spec.mode == COVARIATE else None
    summary = dependence.summarize(
        fit_result, level=cfg.level, day=day, seed=cfg.seed
    )
    return {
        "ci_level": summary.ci_level,
        "evaluated_at_day": summary.evaluated_at,
        "lambda": summary.lam,
        "sigma": summary.sigma,
        "corr": summary.corr,
        "spearman": summary.spearman,
        "pairs": [
            {
                "species": [summary.species_names[c], summary.species_names[r]],
                "corr": summary.corr[r, c],
                "corr_ci": summary.corr_ci[p],
                "spearman": summary.spearman[r, c],
                "spearman_ci": summary.spearman_ci[p],
            }
            for p, (r, c) in enumerate(summary.pairs)
        ],
    }


def _fit_one(table, cfg, lambda_mode, init=None):
    spec = ModelSpec(
        num_coef=tuple(cfg.model_spec().coef_counts(table.n_species)),
        n_freq=cfg.n_freq,
        lambda_mode=lambda_mode,
    )
    return fit(table, spec, cfg.likelihood, cfg.optimizer_config(), init=init)


def cmd_fit(args):
    cfg = _load_config(args)
    table = _ingest(args, cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    modes = [CONSTANT, COVARIATE] if args.lambda_mode == "both" else [cfg.lambda_mode]
    fits = {}
    for mode in modes:
        init = fits.get(CONSTANT) if mode == COVARIATE else None
        fits[mode] = _fit_one(table, cfg, mode, init=init)
    payload = {
        "command": "fit",
        "input": {
            # basename only: the document must not depend on where the
            # inputs happen to live
            "path": os.path.basename(table.source),
            "n_rows": table.n_rows,
            "rows_dropped": table.rows_dropped,
            "leap_rows_dropped": table.leap_rows_dropped,
        },
        "fits": {mode: results.fit_to_dict(f) for mode, f in fits.items()},
        "dependence": {mode: _dependence_payload(f, cfg) for mode, f in fits.items()},
    }
    if len(fits) == 2:
        test = lr_test(fits[CONSTANT], fits[COVARIATE])
        payload["lr_test"] = {
            "statistic": test.statistic,
            "df": test.df,
            "p_value": test.p_value,
            "warning": test.warning,
        }
    results.write_document(os.path.join(args.out_dir, "fit.json"), payload)
    baseline_year = fits[modes[0]].model.design.years[0]
    for mode, f in fits.items():
        report.write_marginal_report(
            f.model, baseline_year, args.out_dir, prefix=f"marginal_quantiles_{mode}"
        )
        report.write_trajectory_report(
            f, args.out_dir, level=cfg.level, seed=cfg.seed,
            prefix=f"spearman_trajectory_{mode}",
        )
    print(f"wrote {os.path.join(args.out_dir, 'fit.json')}")
    if "lr_test" in payload:
        t = payload["lr_test"]
        print(
            f"LR test: statistic={t['statistic']:.2f} df={t['df']} p={t['p_value']:.3g}"
        )
    return 0


def cmd_predict(args):
    doc = results.load_document(args.fit)
    mode = args.model_mode or sorted(doc["fits"])[0]
    if mode not in doc["fits"]:
        raise InputError(f"fit document has no {mode!r} fit")
    fit_result = results.fit_from_dict(doc["fits"][mode])
    os.makedirs(args.out_dir, exist_ok=True)
    year = args.year if args.year is not None else fit_result.model.design.years[0]
    path = report.write_marginal_report(fit_result.model, year, args.out_dir)
    results.write_document(
        os.path.join(args.out_dir, "predict.json"),
        {
            "command": "predict",
            "source_fit": os.path.basename(args.fit),
            "model_mode": mode,
            "year": int(year),
            "clamped_tail_mass": {
                name: fit_result.model.clamped_tail_mass(j, (year, 182))
                for j, name in enumerate(fit_result.model.species_names)
            },
        },
    )
    print(f"wrote {path}")
    return 0


def cmd_bootstrap(args):
    cfg = _load_config(args)
    doc = results.load_document(args.fit)
    mode = args.model_mode or sorted(doc["fits"])[0]
    fit_result = results.fit_from_dict(doc["fits"][mode])
    table = _ingest(args, cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    boot = sim.parametric_bootstrap(
        fit_result,
        (table.years, table.days),
        sim.SimulationConfig(n_replicates=cfg.replicates, seed=cfg.seed, ci_level=cfg.level),
        cfg.optimizer_config(),
    )
    summary = dependence.summarize(
        fit_result, level=cfg.level,
        day=1.0 if fit_result.model.lambda_spec.mode == COVARIATE else None,
        seed=cfg.seed,
    )
    truth = [summary.spearman[r, c] for r, c in summary.pairs]
    report.write_bootstrap_report(boot, fit_result.model.species_names, args.out_dir, truth=truth)
    results.write_document(
        os.path.join(args.out_dir, "bootstrap.json"),
        {
            "command": "bootstrap",
            "source_fit": os.path.basename(args.fit),
            "model_mode": mode,
            "replicates": cfg.replicates,
            "seed": cfg.seed,
            "completed": len(boot.replicate_index),
            "failures": [[int(r), msg] for r, msg in boot.failures],
            "spearman_quantiles": boot.quantiles(),
            "fitted_spearman": truth,
        },
    )
    print(f"bootstrap: {len(boot.replicate_index)}/{cfg.replicates} replicates fitted")
    return 0


def cmd_compare_approx(args):
    cfg = _load_config(args)
    table = _ingest(args, cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    saved_kind = cfg.likelihood
    cfg.likelihood = lk.CONTINUOUS
    fit_cont = _fit_one(table, cfg, cfg.lambda_mode)
    cfg.likelihood = lk.DISCRETE
    fit_disc = _fit_one(table, cfg, cfg.lambda_mode)
    cfg.likelihood = saved_kind
    scatter = sim.compare_approximations(
        fit_cont, fit_disc, (table.years, table.days),
        n_samples=cfg.replicates, seed=cfg.seed,
    )
    report.write_compare_report(scatter, args.out_dir)
    results.write_document(
        os.path.join(args.out_dir, "compare_approx.json"),
        {
            "command": "compare-approx",
            "n_samples": cfg.replicates,
            "seed": cfg.seed,
            "rows": [[k, s, a, e] for k, s, a, e in scatter.rows()],
            "failures": list(scatter.failures),
        },
    )
    print(f"wrote {os.path.join(args.out_dir, 'compare_approx.json')}")
    return 0


def cmd_permute_check(args):
    cfg = _load_config(args)
    table = _ingest(args, cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    rep = dependence.permutation_sensitivity(
        table,
        cfg.model_spec(),
        cfg.likelihood,
        cfg.optimizer_config(),
    )
    report.write_permutation_report(rep, args.out_dir)
    results.write_document(
        os.path.join(args.out_dir, "permute_check.json"),
        {
            "command": "permute-check",
            "orderings": [list(o) for o in rep.orderings],
            "logliks": list(rep.logliks),
            "max_spearman_discrepancy": rep.max_discrepancy,
            "best_ordering": list(rep.best_ordering),
            "flagged": rep.flagged,
            "threshold": rep.threshold,
        },
    )
    verdict = "FLAGGED" if rep.flagged else "ok"
    print(f"ordering sensitivity: max discrepancy {rep.max_discrepancy:.4f} [{verdict}]")
    return 0


def cmd_simulate(args):
    cfg = _load_config(args)
    os.makedirs(args.out_dir, exist_ok=True)
    table, truth = sim.synth_birds(
        seed=cfg.seed, n_years=args.years, missing_rate=args.missing_rate
    )
    out_csv = os.path.join(args.out_dir, "data.csv")
    write_csv(table, out_csv)
    results.write_document(
        os.path.join(args.out_dir, "simulate.json"),
        {
            "command": "simulate",
            "seed": cfg.seed,
            "n_years": args.years,
            "missing_rate": args.missing_rate,
            "n_rows": table.n_rows,
            "rows_dropped": table.rows_dropped,
            "truth_model": results.model_to_dict(truth),
            "data_csv": "data.csv",
        },
    )
    print(f"wrote {out_csv} ({table.n_rows} rows)")
    return 0


def _limit_threads():
    threads = os.environ.get("COUNTCOPULA_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="countcopula",
        description="Joint models for multivariate species count data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, input_required=True):
        if input_required:
            p.add_argument("--input", required=True, help="count CSV")
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out-dir", required=True)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("fit", help="fit the joint model")
    add_common(p)
    p.add_argument("--likelihood", choices=[lk.CONTINUOUS, lk.DISCRETE], default=None)
    p.add_argument("--lambda", dest="lambda_mode",
                   choices=[CONSTANT, COVARIATE, "both"], default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="marginal quantile curves from a saved fit")
    p.add_argument("--fit", required=True, help="fit.json from the fit command")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--year", type=int, default=None)
    p.add_argument("--model-mode", choices=[CONSTANT, COVARIATE], default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bootstrap", help="parametric bootstrap of a saved fit")
    add_common(p)
    p.add_argument("--fit", required=True)
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--model-mode", choices=[CONSTANT, COVARIATE], default=None)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("compare-approx",
                       help="bootstrap comparison of both approximations to the exact likelihood")
    add_common(p)
    p.add_argument("--likelihood", choices=[lk.CONTINUOUS, lk.DISCRETE], default=None)
    p.add_argument("--lambda", dest="lambda_mode",
                   choices=[CONSTANT, COVARIATE], default=None)
    p.add_argument("--replicates", type=int, default=None, help="bootstrap samples per kind")
    p.set_defaults(func=cmd_compare_approx)

    p = sub.add_parser("permute-check", help="species-ordering sensitivity diagnostic")
    add_common(p)
    p.add_argument("--likelihood", choices=[lk.CONTINUOUS, lk.DISCRETE], default=None)
    p.add_argument("--lambda", dest="lambda_mode",
                   choices=[CONSTANT, COVARIATE], default=None)
    p.set_defaults(func=cmd_permute_check)

    p = sub.add_parser("simulate", help="generate synthetic bird-like count data")
    add_common(p, input_required=False)
    p.add_argument("--years", type=int, default=15)
    p.add_argument("--missing-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None):
    _limit_threads()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CountCopulaError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
