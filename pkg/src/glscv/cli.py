"""Command-line front end.

Subcommands write their results into ``--out`` and print a one-line
summary.  Observation numbers on the command line and in CSV output are
1-based.  Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
error (including a failed ``check``).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .covariance import CorrelationModel
from .crossval import json_number, compare_folds, format_number, make_folds, simulate_kfold
from .dataset import ModelSpec, build_design, load_design_csv, load_long_csv
from .diagnostics import deletion_stats, loo_all, srd_via_partial
from .errors import DataError, GlsError, NumericalError, ParameterDomainError
from .glsfit import fit_gls

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    command: str
    mode: str
    input: str | None
    x: str | None
    y: str | None
    groups: str | None
    subject: str
    time: str
    response: str
    numeric: tuple
    categorical: tuple
    intercept: bool
    family: str
    rho: float | None
    estimate_rho: bool
    rho_policy: str
    scheme: str
    k: int | None
    seed: int
    n_sims: int
    watch: int | None
    out: Path

    @classmethod
    def from_args(cls, args):
        mode = args.mode or ("long" if args.input else "design")
        if mode == "long" and not args.input:
            raise UsageError("--mode long needs --input")
        if mode == "design" and not (args.x and args.y and args.groups):
            raise UsageError("--mode design needs --x, --y and --groups")
        categorical = []
        for item in args.categorical:
            col, sep, ref = item.partition(":")
            if not sep or not col or not ref:
                raise UsageError(f"--categorical expects COLUMN:REFERENCE, got {item!r}")
            categorical.append((col, ref))
        if args.estimate_rho and args.family == "identity":
            raise UsageError("--estimate-rho needs --family ar1 or car1")
        if args.family != "identity" and args.rho is None and not args.estimate_rho:
            raise UsageError(f"--family {args.family} needs --rho or --estimate-rho")
        scheme = {"subject": "leave_subject"}.get(args.scheme, args.scheme)
        if args.command in ("cv", "diagnose") and scheme == "kfold" and not args.k:
            raise UsageError("--scheme kfold needs --k")
        if args.command == "simulate" and not args.k:
            raise UsageError("simulate needs --k")
        return cls(
            command=args.command, mode=mode, input=args.input, x=args.x, y=args.y,
            groups=args.groups, subject=args.subject, time=args.time, response=args.response,
            numeric=tuple(c for c in args.numeric.split(",") if c) if args.numeric else (),
            categorical=tuple(categorical), intercept=not args.no_intercept,
            family=args.family, rho=args.rho, estimate_rho=args.estimate_rho,
            rho_policy=args.rho_policy, scheme=scheme, k=args.k, seed=args.seed,
            n_sims=args.n_sims, watch=args.watch, out=Path(args.out),
        )

    def model(self):
        if self.family == "identity":
            return CorrelationModel("identity")
        start = self.rho if self.rho is not None else 0.5
        return CorrelationModel(self.family, start)


def _common(parser):
    g = parser.add_argument_group("input")
    g.add_argument("--mode", choices=("long", "design"))
    g.add_argument("--input", help="long-format CSV")
    g.add_argument("--subject", default="subject_id", help="subject column (long mode)")
    g.add_argument("--time", default="time", help="time column (long mode)")
    g.add_argument("--response", default="response", help="response column (long mode)")
    g.add_argument("--numeric", default="", help="comma-separated numeric terms")
    g.add_argument("--categorical", action="append", default=[], metavar="COL:REF",
                   help="categorical term with its reference level (repeatable)")
    g.add_argument("--no-intercept", action="store_true")
    g.add_argument("--x", help="headerless design matrix CSV (design mode)")
    g.add_argument("--y", help="response CSV (design mode)")
    g.add_argument("--groups", help="subject_id,time CSV (design mode)")
    m = parser.add_argument_group("model")
    m.add_argument("--family", choices=("identity", "ar1", "car1"), default="identity")
    m.add_argument("--rho", type=float)
    m.add_argument("--estimate-rho", action="store_true")
    m.add_argument("--rho-policy", choices=("fixed", "reestimate"), default="fixed")
    c = parser.add_argument_group("folds")
    c.add_argument("--scheme", choices=("loo", "subject", "kfold"), default="loo")
    c.add_argument("--k", type=int)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--n-sims", type=int, default=1)
    c.add_argument("--watch", type=int, help="1-based observation number to track")
    parser.add_argument("--out", default=".", help="output directory")


def build_parser():
    parser = _Parser(prog="glscv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [
        ("fit", "fit the model and write a JSON summary"),
        ("diagnose", "closed-form deletion diagnostics per fold"),
        ("cv", "closed-form versus refit comparison"),
        ("simulate", "repeated random K-fold estimated SRDs"),
        ("check", "verify the closed-form identities against refits"),
    ]:
        _common(sub.add_parser(name, help=text))
    return parser


def load_problem(cfg):
    if cfg.mode == "design":
        return load_design_csv(cfg.x, cfg.y, cfg.groups)
    data = load_long_csv(cfg.input, {"subject": cfg.subject, "time": cfg.time,
                                     "response": cfg.response})
    spec = ModelSpec(numeric_terms=cfg.numeric, categorical_terms=cfg.categorical,
                     intercept=cfg.intercept)
    return build_design(data, spec)


def _fit(cfg, problem):
    return fit_gls(problem, cfg.model(), estimate_rho=cfg.estimate_rho)


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n")


def cmd_fit(cfg, problem):
    fit = _fit(cfg, problem)
    out = {
        "family": cfg.family,
        "n": fit.n,
        "p": fit.p,
        "n_groups": problem.layout.n_blocks,
        "beta": {name: json_number(b) for name, b in zip(problem.column_names, fit.beta_hat)},
        "sigma2": json_number(fit.sigma2_hat),
        "rho": json_number(fit.rho_hat),
        "rho_estimated": fit.rho_estimated,
        "reml": json_number(fit.reml),
    }
    cfg.out.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out / "fit.json", out)
    print(f"fit: n={fit.n} p={fit.p} sigma2={format_number(fit.sigma2_hat)}"
          f" rho={format_number(fit.rho_hat)} -> {cfg.out / 'fit.json'}")


def _folds(cfg, problem):
    return make_folds(problem, cfg.scheme, k=cfg.k, seed=cfg.seed)


def cmd_diagnose(cfg, problem):
    fit = _fit(cfg, problem)
    folds = _folds(cfg, problem)
    cols = ["fold_id", "subject", "m", "obs", "srd", "lmocv_sq", "cook_multiple",
            "cook_distance", "sigma2_deleted_est", "cv_resid_raw", "cv_resid_tilde", "status"]
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "diagnostics.csv"
    stats = loo_all(fit) if folds.scheme == "loo" else None
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for j, M in enumerate(folds):
            if stats is not None:
                d = stats[j]
            else:
                try:
                    d = deletion_stats(fit, M)
                except GlsError as exc:
                    w.writerow([j, "", len(M), ";".join(str(i + 1) for i in M)]
                               + ["nan"] * 7 + [f"failed: {exc}"])
                    continue
            subj = problem.group_ids[M[0]] if folds.scheme == "leave_subject" else ""
            w.writerow([
                j, subj, d.m, ";".join(str(i + 1) for i in d.M),
                format_number(d.srd), format_number(d.lmocv_sq), format_number(d.cook_multiple),
                format_number(d.cook_distance), format_number(d.sigma2_deleted_est),
                ";".join(format_number(v) for v in d.cv_resid_raw),
                ";".join(format_number(v) for v in d.cv_resid_tilde),
                "ok" if d.ok else f"failed: {d.error}",
            ])
    print(f"diagnose: {len(folds)} {folds.scheme} folds -> {path}")


def cmd_cv(cfg, problem):
    fit = _fit(cfg, problem)
    report = compare_folds(fit, _folds(cfg, problem), cfg.rho_policy)
    csv_path, json_path = report.write(cfg.out)
    s = report.summary
    print(f"cv: {s['n_folds']} folds, mean srd actual={format_number(s['mean_srd_actual'])}"
          f" estimated={format_number(s['mean_srd_est'])}"
          f" lmocv_sq={format_number(s['mean_lmocv_sq'])} -> {csv_path}, {json_path}")


def cmd_simulate(cfg, problem):
    watched = None
    if cfg.watch is not None:
        if not 1 <= cfg.watch <= problem.n:
            raise UsageError(f"--watch must lie in 1..{problem.n}")
        watched = cfg.watch - 1
    summary = simulate_kfold(problem, cfg.model(), cfg.k, cfg.n_sims, cfg.seed,
                             watched_index=watched, estimate_rho=cfg.estimate_rho)
    csv_path, json_path = summary.write(cfg.out)
    means = summary.sim_means
    print(f"simulate: {cfg.n_sims} x {cfg.k}-fold, mean of means={format_number(np.nanmean(means))}"
          f" -> {csv_path}, {json_path}")


def run_checks(problem, model, estimate_rho=False):
    """Oracle checks on ``problem``; returns a list of ``(name, passed, detail)``."""
    results = []

    def record(name, value, tol):
        results.append((name, bool(value <= tol), f"{value:.3g} <= {tol:.3g}"))

    fits = [("ols", fit_gls(problem))]
    if model.family != "identity":
        fits.append((model.family, fit_gls(problem, model, estimate_rho=estimate_rho)))
    scale = max(1.0, float(np.linalg.norm(problem.Y)))
    for tag, fit in fits:
        ortho = float(np.max(np.abs(fit.tilde_r @ problem.X))) / (
            scale * max(1.0, float(np.max(np.abs(problem.X)))))
        record(f"{tag}: orthogonality r'Sigma^-1 X = 0", ortho, 1e-8)
        trace = float(np.sum(fit.tilde_X * (problem.X @ fit.xtsix_inv)))
        record(f"{tag}: trace(Sigma^-1 H) = p", abs(trace - fit.p), 1e-8)
        for scheme in ("loo", "leave_subject"):
            folds = make_folds(problem, scheme)
            decomp = route = 0.0
            for M in folds:
                try:
                    d = deletion_stats(fit, M)
                except GlsError:
                    continue
                denom = max(1.0, abs(d.srd))
                decomp = max(decomp, abs(d.lmocv_sq - d.cook_multiple - d.srd) / denom)
                route = max(route, abs(srd_via_partial(fit, M) - d.srd) / denom)
            record(f"{tag} {scheme}: lmocv_sq - cook_multiple = srd", decomp, 1e-9)
            record(f"{tag} {scheme}: partial-correlation route = srd", route, 1e-9)
            report = compare_folds(fit, folds, "hold_fixed")
            worst = max((abs(r.error) / max(1.0, abs(r.srd_actual)) for r in report.good()),
                        default=0.0)
            record(f"{tag} {scheme}: refit srd = closed-form srd", worst, 1e-7)
    return results


def cmd_check(cfg, problem):
    results = run_checks(problem, cfg.model(), cfg.estimate_rho)
    failed = [r for r in results if not r[1]]
    cfg.out.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out / "check.json",
                [{"check": n, "passed": ok, "detail": d} for n, ok, d in results])
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name} ({detail})", file=sys.stderr)
    print(f"check: {len(results) - len(failed)}/{len(results)} passed")
    return EXIT_OK if not failed else EXIT_NUMERIC


COMMANDS = {
    "fit": cmd_fit, "diagnose": cmd_diagnose, "cv": cmd_cv,
    "simulate": cmd_simulate, "check": cmd_check,
}


def run_cli(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        problem = load_problem(cfg)
        code = COMMANDS[cfg.command](cfg, problem)
        return EXIT_OK if code is None else code
    except (UsageError, ParameterDomainError) as exc:
        print(f"glscv: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"glscv: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"glscv: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"glscv: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
