"""Command-line interface: ``mtcov {estimate,simulate,bench,scaling}``.

Options may also come from a JSON file given with ``--config``; keys are the
long flag names with dashes replaced by underscores. Explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bench, estimators as est, simgen
from .data import (
    Dataset, MatrixParseError, PenaltyPair, atomic_write_text,
    dataset_from_paths, dumps_json, format_matrix_csv, load_manifest, validate_dataset,
)
from .interaction import interaction_matrix
from .solver import DEFAULT_L1_RATIOS, cross_validate, fit

logger = logging.getLogger("mtcov")

SUBCOMMANDS = ("estimate", "simulate", "bench", "scaling")

DEFAULTS = {
    "method": "proposed",
    "l1_ratios": list(DEFAULT_L1_RATIOS),
    "cv_folds": 5,
    "n_alphas": 100,
    "eps": 1e-3,
    "tol": 1e-8,
    "cv_tol": 1e-4,
    "max_iter": 10_000,
    "seed": 0,
    "s_kind": "full-rank",
    "snr": 1.0,
    "sparsity": 0.1,
    "rho": 0.5,
    "reps": 1,
    "parallelism": 1,
    "n_values": [200, 400, 800],
    "log_level": "WARNING",
    "project_psd": False,
    "dump": False,
    "cv": False,
}


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    subcommand: str
    options: dict = field(default_factory=dict)
    penalty: PenaltyPair | None = None

    def __getattr__(self, name):
        try:
            return self.__dict__["options"][name]
        except KeyError:
            raise AttributeError(name) from None


def _csv_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _csv_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file with option values")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    solver = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = solver.add_argument_group("penalty / solver")
    g.add_argument("--lambda", dest="lam", type=float, help="group-lasso weight")
    g.add_argument("--tau", type=float, help="ridge weight")
    g.add_argument("--alpha", type=float, help="overall penalty (lambda = alpha*r, tau = alpha*(1-r))")
    g.add_argument("--l1-ratio", type=float, help="r in (0, 1]")
    g.add_argument("--cv", action="store_true", help="choose the penalty by K-fold cross-validation")
    g.add_argument("--cv-folds", type=int)
    g.add_argument("--n-alphas", type=int)
    g.add_argument("--l1-ratios", type=_csv_floats, help="comma-separated CV grid of l1 ratios")
    g.add_argument("--eps", type=float, help="alpha_min / alpha_max of the CV grid")
    g.add_argument("--tol", type=float)
    g.add_argument("--cv-tol", type=float, help="tolerance of the CV path fits")
    g.add_argument("--max-iter", type=int)

    scenario = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    s = scenario.add_argument_group("scenario")
    s.add_argument("--n", type=int)
    s.add_argument("--p", type=int)
    s.add_argument("--T", type=int)
    s.add_argument("--s-kind", choices=["full-rank", "low-rank"])
    s.add_argument("--snr", type=float)
    s.add_argument("--sparsity", type=float, help="fraction of nonzero rows of B*")
    s.add_argument("--rho", type=float, help="design correlation decay")

    parallel = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    parallel.add_argument("--reps", type=int)
    parallel.add_argument("--parallelism", type=int)

    parser = argparse.ArgumentParser(prog="mtcov", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", metavar="{estimate,simulate,bench,scaling}")
    sub.required = True

    p = sub.add_parser("estimate", parents=[common, solver], argument_default=argparse.SUPPRESS,
                       help="estimate the noise covariance of a dataset")
    p.add_argument("--manifest", help="JSON dataset manifest")
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--sigma")
    p.add_argument("--e", help="true noise matrix (enables the oracle estimator)")
    p.add_argument("--method", choices=["proposed", "naive", "mm", "oracle"])
    p.add_argument("--project-psd", action="store_true")

    p = sub.add_parser("simulate", parents=[common, scenario], argument_default=argparse.SUPPRESS,
                       help="generate a synthetic dataset")
    p.add_argument("--dump", action="store_true", help="write matrices and a manifest to --out")

    sub.add_parser("bench", parents=[common, solver, scenario, parallel], argument_default=argparse.SUPPRESS,
                   help="Monte-Carlo comparison of the estimators")

    p = sub.add_parser("scaling", parents=[common, solver, scenario, parallel],
                       argument_default=argparse.SUPPRESS, help="mean proposed loss as n grows")
    p.add_argument("--n-values", type=_csv_ints, help="comma-separated sample sizes")
    return parser


def parse_args(argv=None) -> CliConfig:
    """Parse ``argv`` into a CliConfig; usage errors exit with status 2."""
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    sub = ns.pop("subcommand")
    options = dict(DEFAULTS)
    if "config" in ns:
        try:
            file_opts = json.loads(Path(ns["config"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {ns['config']}: {exc}")
        if not isinstance(file_opts, dict):
            parser.error("config file must hold a JSON object")
        file_opts = {k.replace("-", "_"): v for k, v in file_opts.items()}
        if "lambda" in file_opts:
            file_opts["lam"] = file_opts.pop("lambda")
        options.update(file_opts)
    options.update(ns)

    try:
        penalty = _resolve_penalty(options)
        _check_required(sub, options)
    except UsageError as exc:
        parser.error(str(exc))
    return CliConfig(sub, options, penalty)


def _resolve_penalty(o: dict) -> PenaltyPair | None:
    has_alpha = o.get("alpha") is not None
    has_direct = o.get("lam") is not None or o.get("tau") is not None
    if has_alpha and has_direct:
        raise UsageError("give either --alpha/--l1-ratio or --lambda/--tau, not both")
    try:
        if has_alpha:
            if o.get("l1_ratio") is None:
                raise UsageError("--alpha needs --l1-ratio")
            return PenaltyPair.from_alpha(o["alpha"], o["l1_ratio"])
        if has_direct:
            return PenaltyPair(o.get("lam") or 0.0, o.get("tau") or 0.0)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return None


def _check_required(sub: str, o: dict) -> None:
    if sub == "estimate":
        if not o.get("manifest") and not (o.get("x") and o.get("y")):
            raise UsageError("estimate needs --manifest or both --x and --y")
    if sub in ("simulate", "bench", "scaling"):
        missing = [f"--{k}" for k in ("n", "p", "T") if o.get(k) is None]
        if sub == "scaling":
            missing = [m for m in missing if m != "--n"]
        if missing:
            raise UsageError(f"{sub} needs {' '.join(missing)}")
    if sub in ("bench", "scaling") or (sub == "simulate" and o.get("dump")):
        if not o.get("out"):
            raise UsageError(f"{sub} needs --out")


def _effective_parallelism(requested: int) -> int:
    cap = os.environ.get("MTCOV_THREADS")
    if cap:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError:
            logger.warning("ignoring non-integer MTCOV_THREADS=%r", cap)
    return max(1, requested)


def _scenario(o: dict) -> simgen.ScenarioSpec:
    n = o.get("n")
    if n is None:
        n = o["n_values"][0]
    return simgen.ScenarioSpec(
        n=int(n), p=int(o["p"]), T=int(o["T"]), s_kind=o["s_kind"].replace("-", "_"),
        sparsity_frac=float(o["sparsity"]), snr=float(o["snr"]), rho=float(o["rho"]), seed=int(o["seed"]),
    )


def _cv_spec(cfg: CliConfig) -> bench.CvSpec:
    o = cfg.options
    return bench.CvSpec(
        l1_ratios=tuple(o["l1_ratios"]), n_alphas=int(o["n_alphas"]), folds=int(o["cv_folds"]),
        eps=float(o["eps"]), cv_tol=float(o["cv_tol"]), tol=float(o["tol"]), max_iter=int(o["max_iter"]),
        fixed_penalty=None if o.get("cv") else cfg.penalty,
    )


# ---------------------------------------------------------------------------
# subcommands


def _load_dataset(o: dict) -> Dataset:
    if o.get("manifest"):
        return load_manifest(o["manifest"])
    return dataset_from_paths({k: o.get(k) for k in ("x", "y", "sigma", "e")})


def _estimate(cfg: CliConfig) -> dict[str, str]:
    o = cfg.options
    ds = _load_dataset(o)
    problems = validate_dataset(ds)
    if problems:
        raise ValueError("invalid dataset: " + "; ".join(problems))
    method = o["method"]
    x, y, sigma = ds.x, ds.y, ds.sigma
    if method in ("mm", "proposed") and sigma is None:
        raise ValueError(f"method {method!r} needs the design covariance Σ (--sigma)")
    if method == "oracle" and (ds.truth is None or ds.truth.e is None):
        raise ValueError("method 'oracle' needs the true noise matrix (--e)")

    result = {"method": method, "n": ds.n, "p": ds.p, "T": ds.n_tasks}
    matrices = {}
    if method in ("naive", "proposed"):
        penalty = cfg.penalty
        if penalty is None or o.get("cv"):
            table = cross_validate(x, y, l1_ratios=o["l1_ratios"], n_alphas=o["n_alphas"], folds=o["cv_folds"],
                                   seed=o["seed"], eps=o["eps"], tol=o["cv_tol"], max_iter=o["max_iter"])
            penalty = table.best_penalty
            result["cv"] = {"alpha": table.best_alpha, "l1_ratio": table.best_l1_ratio,
                            "mean_cv_error": float(table.mean_cv_error[table.best]), **table.meta}
        f = fit(x, y, penalty, tol=o["tol"], max_iter=o["max_iter"])
        result["penalty"] = penalty.as_dict()
        result["converged"] = f.converged
        result["iterations"] = f.iterations
        result["support_size"] = int(f.support.size)
        if method == "naive":
            estimate = est.estimate_naive(f.residual)
        else:
            inter = interaction_matrix(x, f)
            estimate = est.estimate_proposed(x, y, f, inter.a_hat, sigma)
            matrices["a_hat"] = inter.a_hat
            result["gen_error"] = est.estimate_gen_error(f.residual, inter.a_hat).value
            matrices["oos_error"] = est.estimate_oos_error(x, y, f, inter.a_hat, sigma)
    elif method == "mm":
        estimate = est.estimate_mm(x, y, sigma)
    else:
        estimate = est.estimate_oracle(ds.truth.e)

    if o.get("project_psd"):
        estimate = estimate.project_psd()
    matrices["s_hat"] = estimate.s_hat
    result.update(matrices)
    result["meta"] = estimate.meta
    files = {"estimate.json": dumps_json(result)}
    files.update({f"{name}.csv": format_matrix_csv(m) for name, m in matrices.items()})
    if not o.get("out"):
        sys.stdout.write(files["estimate.json"])
        return {}
    return files


def _simulate(cfg: CliConfig) -> dict[str, str]:
    o = cfg.options
    spec = _scenario(o)
    ds = simgen.sample_dataset(spec)
    t = ds.truth
    snr = float(np.sum(t.b_star * (ds.sigma @ t.b_star)) / np.trace(t.s)) if np.trace(t.s) > 0 else 0.0
    info = {"scenario": spec.to_dict(), "sigma_kernel": simgen.SIGMA_KERNEL, "realized_snr": snr,
            "support_size": int(np.count_nonzero(np.any(t.b_star != 0, axis=1)))}
    if not o.get("dump"):
        sys.stdout.write(dumps_json(info))
        return {}
    mats = {"x": ds.x, "y": ds.y, "e": t.e, "b_star": t.b_star, "s": t.s, "sigma": ds.sigma}
    files = {f"{k}.csv": format_matrix_csv(v) for k, v in mats.items()}
    manifest = {k: f"{k}.csv" for k in mats}
    manifest.update(info)
    files["manifest.json"] = dumps_json(manifest)
    return files


def _bench(cfg: CliConfig) -> dict[str, str]:
    o = cfg.options
    summary = bench.run_experiment(_scenario(o), _cv_spec(cfg), int(o["reps"]),
                                   _effective_parallelism(int(o["parallelism"])))
    for m in bench.METHODS:
        s = summary.methods[m]
        logger.info("%-8s mean loss %.4f (sd %.4f)", m, s.mean_loss, s.sd_loss)
    return {"__bench__": summary}


def _scaling(cfg: CliConfig) -> dict[str, str]:
    o = cfg.options
    table = bench.scaling_study(_scenario(o), o["n_values"], int(o["reps"]), _cv_spec(cfg),
                                _effective_parallelism(int(o["parallelism"])))
    return {"scaling.json": dumps_json(table.to_dict())}


def main(cfg: CliConfig) -> int:
    """Run a parsed configuration; returns the process exit code."""
    logging.basicConfig(level=cfg.options["log_level"], format="%(levelname)s %(name)s: %(message)s")
    handlers = {"estimate": _estimate, "simulate": _simulate, "bench": _bench, "scaling": _scaling}
    try:
        files = handlers[cfg.subcommand](cfg)
        if files:
            out = Path(cfg.options["out"])
            out.mkdir(parents=True, exist_ok=True)
            if "__bench__" in files:
                bench.write_outputs(files["__bench__"], out)
            else:
                for name, text in files.items():
                    atomic_write_text(out / name, text)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, OSError, MatrixParseError) as exc:
        print(f"mtcov {cfg.subcommand}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def run(argv=None) -> int:
    return main(parse_args(argv))


if __name__ == "__main__":
    sys.exit(run())
