"""Command-line entry point: ``bavamio fit | fit-glm | simulate | irrstat | rerun``.

Exit codes: 0 success, 2 bad flags, 3 data errors, 4 solver failures.
Every command that takes ``--out`` writes only inside that directory and
leaves a ``manifest.json`` from which ``bavamio rerun`` reproduces the other
outputs byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from bavamio import __version__, _kernels
from bavamio.data import DataError, Dataset, Hyperparameters, load_dataset, read_table, standardize
from bavamio.glm import FAMILIES, glm_cross_validate, glm_path, rho_grid
from bavamio.linear import SolverConfig, SolverError
from bavamio.penalty import initial_weight
from bavamio.selection import build_grid, fit_path
from bavamio.simulation import (
    ESTIMATORS,
    GLM_ESTIMATORS,
    CovarianceSpec,
    SimulationConfig,
    irr_contributions,
    irr_stat,
    rows_to_csv,
    run_study_one,
    run_study_two,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _cov_token(text):
    try:
        return CovarianceSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="bavamio", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="linear path fit with BF or CV selection")
    _data_flags(f)
    f.add_argument("--lambda", dest="lam", type=float)
    f.add_argument("--tau1", type=float)
    f.add_argument("--tau2", type=float)
    f.add_argument("--tau3", type=float, default=1e-6)
    f.add_argument("--grid", type=_positive_int, default=100)
    f.add_argument("--select", choices=("bf", "cv"), default="bf")
    f.add_argument("--cv-folds", type=_positive_int, default=10)
    f.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("fit-glm", help="logistic path fit with CV selection")
    _data_flags(g)
    g.add_argument("--family", choices=sorted(FAMILIES), default="logistic")
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--tau3", type=float, default=1e-6)
    g.add_argument("--rho-grid", type=_positive_int, default=100)
    g.add_argument("--cv-folds", type=_positive_int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--intercept", action="store_true", help="add an unpenalized intercept")

    s = sub.add_parser("simulate", help="run a seeded simulation study")
    s.add_argument("--study", choices=("one", "two", "glm"), required=True)
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--p", type=_positive_int, required=True)
    s.add_argument("--n-active", type=_positive_int, default=None)
    s.add_argument("--cov", type=_cov_token, default=CovarianceSpec())
    noise = s.add_mutually_exclusive_group()
    noise.add_argument("--snr", type=float)
    noise.add_argument("--sigma2", type=float)
    s.add_argument("--replicates", type=_positive_int, default=1)
    s.add_argument("--pairs", type=_positive_int, default=1, help="(Sigma, beta) pairs, study two")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--estimators", default=None, help="comma-separated subset")
    s.add_argument("--recipe", choices=("default", "snr1"), default="default")
    s.add_argument("--grid", type=_positive_int, default=100)
    s.add_argument("--cv-folds", type=_positive_int, default=10)
    s.add_argument("--out", required=True)

    i = sub.add_parser("irrstat", help="irrepresentable statistic of a design")
    i.add_argument("--data", required=True, help="CSV with a header; every column is a covariate")
    i.add_argument("--support", type=_int_list, required=True, help="1-based column indices")
    i.add_argument("--signs", type=_int_list, required=True)
    i.add_argument("--out", default=None)

    r = sub.add_parser("rerun", help="repeat a run from its manifest.json")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    return p


def _data_flags(sp):
    sp.add_argument("--data", required=True)
    sp.add_argument("--response", required=True)
    sp.add_argument("--standardize", action="store_true")
    sp.add_argument("--out", required=True)


# ---------------------------------------------------------------- output

def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, columns, rows):
    lines = [",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n",
                          encoding="utf-8")


def _jsonable(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, CovarianceSpec):
        return v.token()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, command, args, resolved, seeds, inputs):
    _write_json(out / "manifest.json", {
        "command": command,
        "args": args,
        "resolved": resolved,
        "seeds": seeds,
        "version": __version__,
        "backend": _kernels.BACKEND,
        "inputs": inputs,
    })


def _args_dict(ns):
    d = {k: v for k, v in vars(ns).items() if k not in ("out", "command", "func")}
    if "data" in d and d["data"] is not None:
        d["data"] = str(Path(d["data"]).resolve())
    return json.loads(json.dumps(d, default=_jsonable))


# ---------------------------------------------------------------- commands

def _load(args, binary=False):
    d = load_dataset(args.data, args.response)
    if binary:
        bad = np.flatnonzero((d.y != 0) & (d.y != 1))
        if bad.size:
            raise DataError(
                f"response must be 0/1; data row {bad[0] + 1} has {float(d.y[bad[0]])!r}"
            )
    if d.n < 2 or d.p < 1:
        raise DataError("need at least two rows and one covariate")
    rec = None
    if args.standardize:
        d, rec = standardize(d, center_response=not binary)
    return d, rec


def cmd_fit(args):
    d, rec = _load(args)
    base = Hyperparameters.default(d.n, d.p) if d.p > 1 else None
    lam = args.lam if args.lam is not None else 1.0 / math.sqrt(d.n)
    tau2 = args.tau2 if args.tau2 is not None else (
        args.tau1 - 1.0 if args.tau1 is not None else (base.tau2 if base else 1.0))
    tau1 = args.tau1 if args.tau1 is not None else tau2 + 1.0
    try:
        h = Hyperparameters(lam=lam, tau1=tau1, tau2=tau2, tau3=args.tau3, grid_size=args.grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.select == "bf" and lam <= 0:
        raise UsageError("--select bf needs --lambda > 0")
    if args.select == "cv" and not 2 <= args.cv_folds <= d.n:
        raise UsageError("--cv-folds must lie in [2, n]")
    grid = build_grid(d, h.grid_size, h.lam)
    res = fit_path(d, h, grid, (args.select,), SolverConfig(), K=args.cv_folds, seed=args.seed)
    k = res.selected[args.select]
    fit = res.fits[k]

    out = _outdir(args.out)
    cols = ("psi", "kappa_star", "log_bf", "cv_mean", "cv_se", "n_selected", "sigma2")
    rows = []
    for i, f in enumerate(res.fits):
        cvm = res.cv.mean[i] if res.cv is not None else None
        cvs = res.cv.se[i] if res.cv is not None else None
        rows.append((res.psi[i], res.kappa_star[i], res.log_bf[i], cvm, cvs, f.n_selected,
                     f.sigma2))
    _write_csv(out / "path.csv", cols, rows)
    intercept, beta = 0.0, fit.beta
    if rec is not None:
        intercept, beta = rec.coef_to_original(fit.beta)
    _write_coefficients(out, d, beta, intercept if rec is not None else None)
    summary = {
        "selection": args.select,
        "selected_index": k,
        "psi": float(res.psi[k]),
        "n_selected": fit.n_selected,
        "support": (fit.support + 1).tolist(),
        "sigma2": fit.sigma2,
        "log_bf": float(res.log_bf[k]),
        "hyperparameters": {"lambda": h.lam, "tau1": h.tau1, "tau2": h.tau2, "tau3": h.tau3,
                            "grid": h.grid_size},
        "max_nonzero_on_path": int(res.n_selected.max()),
        "all_converged": bool(all(f.converged for f in res.fits)),
        "n": d.n,
        "p": d.p,
        "standardized": rec is not None,
    }
    _write_json(out / "summary.json", summary)
    return out, summary["hyperparameters"], {"cv": args.seed}, {"data": _digest(args.data)}


def _write_coefficients(out, d: Dataset, beta, intercept):
    rows = []
    if intercept is not None:
        rows.append((0, "(intercept)", float(intercept)))
    names = d.names()
    rows += [(j + 1, names[j], float(beta[j])) for j in range(d.p)]
    _write_csv(out / "coefficients.csv", ("index", "name", "beta"), rows)


def cmd_fit_glm(args):
    d, rec = _load(args, binary=True)
    family = FAMILIES[args.family]
    lam = args.lam if args.lam is not None else 1.0 / math.sqrt(d.n)
    if lam < 0 or not 0 < args.tau3 < 1:
        raise UsageError("need --lambda >= 0 and --tau3 in (0, 1)")
    if not 2 <= args.cv_folds <= d.n:
        raise UsageError("--cv-folds must lie in [2, n]")
    cfg = SolverConfig()
    rhos = rho_grid(d, family, max(args.rho_grid, 2), lam, args.tau3)
    cv = glm_cross_validate(d, family, lam, rhos, args.cv_folds, args.seed, cfg, args.tau3,
                            args.intercept)
    fits = glm_path(d, family, lam, rhos, args.tau3, cfg, args.intercept)
    k = cv.select()
    fit = fits[k]
    phi0 = initial_weight(args.tau3)

    out = _outdir(args.out)
    rows = [(rhos[i], rhos[i] * phi0, f.n_selected, cv.mean[i], cv.se[i])
            for i, f in enumerate(fits)]
    _write_csv(out / "path.csv", ("rho", "psi", "n_selected", "cv_mean", "cv_se"), rows)
    eta = d.x @ fit.beta + fit.intercept
    nu = family.mean(eta)
    _write_csv(out / "label_probabilities.csv", ("row", "nu", "label"),
               [(i + 1, float(v), int(v >= 0.5)) for i, v in enumerate(nu)])
    intercept, beta = fit.intercept, fit.beta
    if rec is not None:
        _, beta = rec.coef_to_original(fit.beta)
        intercept = fit.intercept - float(rec.means @ beta)
    _write_coefficients(out, d, beta, intercept if (args.intercept or rec is not None) else None)
    summary = {
        "selection": "cv",
        "family": family.name,
        "selected_index": k,
        "rho": float(rhos[k]),
        "n_selected": fit.n_selected,
        "support": (fit.support + 1).tolist(),
        "cv_deviance": float(cv.mean[k]),
        "training_error": float(np.mean((nu >= 0.5) != (d.y == 1))),
        "hyperparameters": {"lambda": lam, "tau3": args.tau3, "grid": len(rhos)},
        "all_converged": bool(all(f.converged for f in fits)),
        "n": d.n,
        "p": d.p,
        "standardized": rec is not None,
    }
    _write_json(out / "summary.json", summary)
    return out, summary["hyperparameters"], {"cv": args.seed}, {"data": _digest(args.data)}


def cmd_simulate(args):
    if args.study == "glm":
        allowed = GLM_ESTIMATORS
    elif args.study == "two":
        allowed = ("bmio", "lasso")
    else:
        allowed = ESTIMATORS
    est = tuple(args.estimators.split(",")) if args.estimators else allowed
    unknown = [e for e in est if e not in allowed]
    if unknown:
        raise UsageError(f"unknown estimators {unknown} (allowed: {', '.join(allowed)})")
    n_active = args.n_active if args.n_active is not None else min(10, args.p)
    if args.study == "two" and args.n_active is None:
        n_active = min(5, args.p - 1)
    sigma2 = args.sigma2
    if sigma2 is None and args.snr is None:
        sigma2 = 1.0
    try:
        cfg = SimulationConfig(
            study=args.study, n=args.n, p=args.p, n_active=n_active, cov=args.cov,
            sigma_y2=sigma2, target_snr=args.snr, replicates=args.replicates, seed=args.seed,
            estimators=est, recipe=args.recipe, grid_size=args.grid, cv_folds=args.cv_folds,
            n_pairs=args.pairs,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.study != "two" and not 2 <= args.cv_folds <= args.n:
        raise UsageError("--cv-folds must lie in [2, n]")
    try:
        if args.study == "two":
            report = run_study_two(cfg)
        else:
            report = run_study_one(cfg, logistic=args.study == "glm")
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    out = _outdir(args.out)
    if args.study == "two":
        (out / "irrstat.csv").write_text(rows_to_csv(report.extra), encoding="utf-8")
        summary = dict(report.summary, pairs=len(report.extra))
    else:
        (out / "replicates.csv").write_text(rows_to_csv(report.rows), encoding="utf-8")
        agg = report.aggregate()
        (out / "aggregate.csv").write_text(rows_to_csv(agg), encoding="utf-8")
        summary = {"aggregate": agg, "failures": sum(bool(r["error"]) for r in report.rows)}
    summary["config"] = report.config
    _write_json(out / "summary.json", summary)
    seeds = {"base": args.seed, "replicates": [args.seed + r for r in range(args.replicates)]}
    return out, report.config, seeds, {}


def cmd_irrstat(args):
    header, x = read_table(args.data)
    p = x.shape[1]
    if len(args.support) != len(args.signs):
        raise UsageError("--support and --signs must have the same length")
    if any(not 1 <= j <= p for j in args.support):
        raise UsageError(f"support indices must lie in [1, {p}]")
    if len(set(args.support)) != len(args.support):
        raise UsageError("support indices must be distinct")
    if any(s not in (-1, 1) for s in args.signs):
        raise UsageError("signs must be +1 or -1")
    support = np.array(args.support) - 1
    try:
        stat = irr_stat(x, support, args.signs)
        contrib = irr_contributions(x, support, args.signs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(str(exc)) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    worst = max(contrib, key=lambda j: (contrib[j], -j))
    print(f"irr_stat {stat!r}")
    print(f"max_contributor {worst + 1} {header[worst]} {contrib[worst]!r}")
    if args.out is None:
        return None, {}, {}, {}
    out = _outdir(args.out)
    rows = [(j + 1, header[j], contrib[j]) for j in sorted(contrib)]
    _write_csv(out / "irrstat.csv", ("index", "name", "contribution"), rows)
    _write_json(out / "summary.json", {"irr_stat": stat, "max_contributor": worst + 1,
                                       "support": args.support, "signs": args.signs})
    return out, {}, {}, {"data": _digest(args.data)}


COMMANDS = {"fit": cmd_fit, "fit-glm": cmd_fit_glm, "simulate": cmd_simulate,
            "irrstat": cmd_irrstat}


def _namespace_from_manifest(path, out):
    m = json.loads(Path(path).read_text(encoding="utf-8"))
    command = m.get("command")
    if command not in COMMANDS:
        raise UsageError(f"manifest names unknown command {command!r}")
    args = dict(m["args"])
    if command == "simulate":
        args["cov"] = _cov_token(args["cov"])
    if "data" in args:
        want = m.get("inputs", {}).get("data")
        if want is not None and Path(args["data"]).is_file() and _digest(args["data"]) != want:
            raise DataError(f"{args['data']} changed since the manifest was written")
    ns = argparse.Namespace(command=command, out=out, **args)
    return command, ns


def _glue_signs(argv):
    # "--signs -1,1" would otherwise read "-1,1" as an option
    out = list(argv)
    for i in range(len(out) - 1):
        if out[i] == "--signs" and out[i + 1].startswith("-"):
            out[i:i + 2] = [f"--signs={out[i + 1]}"]
            break
    return out


def run(argv=None):
    parser = build_parser()
    argv = _glue_signs(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)  # exits 2 on bad flags
    try:
        if args.command == "rerun":
            command, args = _namespace_from_manifest(args.manifest, args.out)
        else:
            command = args.command
        out, resolved, seeds, inputs = COMMANDS[command](args)
        if out is not None:
            _write_manifest(out, command, _args_dict(args), resolved, seeds, inputs)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bavamio: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"bavamio: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"bavamio: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"bavamio: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
