"""Monte-Carlo harness: replications, per-method Frobenius losses, entrywise
bias / standard-deviation maps, and sample-size scaling studies.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from joblib import Parallel, delayed

from . import estimators as est
from .data import PenaltyPair, atomic_write_text, dumps_json, format_matrix_csv
from .interaction import interaction_matrix
from .simgen import ScenarioSpec, make_rng, sample_dataset, scenario_S
from .solver import DEFAULT_L1_RATIOS, cross_validate, fit

logger = logging.getLogger(__name__)

METHODS = ("naive", "mm", "proposed", "oracle")
_ROLE_CV = 4


@dataclass(frozen=True)
class CvSpec:
    """How the penalty is chosen in each replication.

    With ``fixed_penalty`` set, cross-validation is skipped.
    """

    l1_ratios: tuple = DEFAULT_L1_RATIOS
    n_alphas: int = 100
    folds: int = 5
    eps: float = 1e-3
    cv_tol: float = 1e-4
    tol: float = 1e-8
    max_iter: int = 10_000
    fixed_penalty: PenaltyPair | None = None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("l1_ratios", "n_alphas", "folds", "eps", "cv_tol", "tol", "max_iter")}
        d["l1_ratios"] = list(self.l1_ratios)
        d["fixed_penalty"] = None if self.fixed_penalty is None else self.fixed_penalty.as_dict()
        d["selection"] = "per replication"
        return d


@dataclass(frozen=True)
class ReplicationRecord:
    rep_index: int
    losses: dict
    chosen_penalty: tuple
    a_hat_trace: float
    converged: bool
    support_size: int
    gen_error: float
    gen_error_target: float
    oos_trace: float
    oos_target: float
    s_hats: dict | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "rep_index", "losses", "a_hat_trace", "converged", "support_size",
            "gen_error", "gen_error_target", "oos_trace", "oos_target")}
        d["chosen_penalty"] = {"alpha": self.chosen_penalty[0], "l1_ratio": self.chosen_penalty[1]}
        return d


def frobenius_loss(estimate, truth) -> float:
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    return float(np.sqrt(np.sum((estimate - truth) ** 2)))


def _alpha_form(penalty: PenaltyPair) -> tuple[float, float]:
    alpha = penalty.lam + penalty.tau
    return alpha, penalty.lam / alpha


def run_replication(spec: ScenarioSpec, cv: CvSpec, rep_index: int, keep_estimates: bool = True) -> ReplicationRecord:
    """Simulate one dataset, fit, and evaluate every estimator against the truth."""
    ds = sample_dataset(spec, rep_index)
    x, y, sigma, truth = ds.x, ds.y, ds.sigma, ds.truth

    if cv.fixed_penalty is not None:
        penalty = cv.fixed_penalty
        chosen = _alpha_form(penalty)
    else:
        cv_seed = int(make_rng(spec.seed, rep_index, _ROLE_CV).integers(2**63))
        table = cross_validate(x, y, l1_ratios=cv.l1_ratios, n_alphas=cv.n_alphas, folds=cv.folds,
                               seed=cv_seed, eps=cv.eps, tol=cv.cv_tol, max_iter=cv.max_iter)
        penalty = table.best_penalty
        chosen = (table.best_alpha, table.best_l1_ratio)
    result = fit(x, y, penalty, tol=cv.tol, max_iter=cv.max_iter)
    if not result.converged:
        logger.warning("replication %d: solver did not converge", rep_index)
    inter = interaction_matrix(x, result)
    a_hat = inter.a_hat

    s_hats = {
        "naive": est.estimate_naive(result.residual).s_hat,
        "mm": est.estimate_mm(x, y, sigma).s_hat,
        "proposed": est.estimate_proposed(x, y, result, a_hat, sigma).s_hat,
        "oracle": est.estimate_oracle(truth.e).s_hat,
    }
    losses = {m: frobenius_loss(s_hats[m], truth.s) for m in METHODS}
    target = est.gen_error_target(truth.s, sigma, result.b_hat, truth.b_star)
    oos = est.estimate_oos_error(x, y, result, a_hat, sigma)
    return ReplicationRecord(
        rep_index=rep_index,
        losses=losses,
        chosen_penalty=chosen,
        a_hat_trace=float(np.trace(a_hat)),
        converged=result.converged,
        support_size=int(result.support.size),
        gen_error=est.estimate_gen_error(result.residual, a_hat).value,
        gen_error_target=target,
        oos_trace=float(np.trace(oos)),
        oos_target=target - float(np.trace(truth.s)),
        s_hats=s_hats if keep_estimates else None,
    )


@dataclass(frozen=True)
class MethodSummary:
    mean_loss: float
    sd_loss: float
    bias: np.ndarray
    sd: np.ndarray

    def to_dict(self) -> dict:
        return {"mean_loss": self.mean_loss, "sd_loss": self.sd_loss, "bias": self.bias, "sd": self.sd}


@dataclass(frozen=True)
class ExperimentSummary:
    methods: dict
    config: dict
    records: list
    n_unconverged: int
    wall_time: float = field(compare=False)

    def to_dict(self) -> dict:
        return {
            "methods": {m: s.to_dict() for m, s in self.methods.items()},
            "config": self.config,
            "n_unconverged": self.n_unconverged,
            "wall_time": self.wall_time,
            "records": [r.to_dict() for r in self.records],
        }


def _sd(a: np.ndarray, axis=0):
    # sample sd with n-1 denominator; defined as 0 for a single replication
    if a.shape[axis] < 2:
        return np.zeros_like(np.take(a, 0, axis=axis))
    return np.std(a, axis=axis, ddof=1)


def summarize(records: Sequence[ReplicationRecord], s_true, config: dict | None = None,
              wall_time: float = 0.0) -> ExperimentSummary:
    """Fold replication records (in rep_index order) into per-method statistics."""
    records = sorted(records, key=lambda r: r.rep_index)
    s_true = np.asarray(s_true, dtype=float)
    methods = {}
    for m in METHODS:
        losses = np.array([r.losses[m] for r in records])
        if all(r.s_hats is not None for r in records):
            stack = np.stack([r.s_hats[m] for r in records])
            bias, sd = stack.mean(axis=0) - s_true, _sd(stack)
        else:
            bias = sd = np.full(s_true.shape, np.nan)
        methods[m] = MethodSummary(float(losses.mean()), float(_sd(losses)), bias, sd)
    return ExperimentSummary(methods, config or {}, list(records),
                             sum(not r.converged for r in records), wall_time)


def run_experiment(spec: ScenarioSpec, cv: CvSpec, n_reps: int, parallelism: int = 1) -> ExperimentSummary:
    """Run ``n_reps`` replications and aggregate them.

    Replications may run concurrently; each one draws from its own random
    substreams and aggregation follows rep_index order, so the summary does
    not depend on ``parallelism``.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    start = time.perf_counter()
    if parallelism > 1:
        records = Parallel(n_jobs=parallelism, prefer="threads")(
            delayed(run_replication)(spec, cv, i) for i in range(n_reps)
        )
    else:
        records = [run_replication(spec, cv, i) for i in range(n_reps)]
    config = {"scenario": spec.to_dict(), "cv": cv.to_dict(), "n_reps": n_reps}
    return summarize(records, scenario_S(spec), config, time.perf_counter() - start)


SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["methods", "config", "n_unconverged", "wall_time", "records"],
    "properties": {
        "methods": {
            "type": "object",
            "required": list(METHODS),
            "additionalProperties": {
                "type": "object",
                "required": ["mean_loss", "sd_loss", "bias", "sd"],
                "properties": {
                    "mean_loss": {"type": "number", "minimum": 0},
                    "sd_loss": {"type": "number", "minimum": 0},
                    "bias": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                    "sd": {"type": "array", "items": {"type": "array", "items": {"type": "number", "minimum": 0}}},
                },
            },
        },
        "config": {"type": "object", "required": ["scenario", "cv", "n_reps"]},
        "n_unconverged": {"type": "integer", "minimum": 0},
        "wall_time": {"type": "number", "minimum": 0},
        "records": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["rep_index", "losses", "chosen_penalty", "a_hat_trace", "converged"],
            },
        },
    },
}


def write_outputs(summary: ExperimentSummary, out_dir) -> list[Path]:
    """Write summary.json, losses.csv and per-method bias/std heatmap CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        path = out / name
        atomic_write_text(path, text)
        written.append(path)

    put("summary.json", dumps_json(summary.to_dict()))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rep_index", "method", "loss"])
    for r in summary.records:
        for m in METHODS:
            w.writerow([r.rep_index, m, format(r.losses[m], ".17g")])
    put("losses.csv", buf.getvalue())
    for m, s in summary.methods.items():
        put(f"bias_{m}.csv", format_matrix_csv(s.bias))
        put(f"std_{m}.csv", format_matrix_csv(s.sd))
    return written


# ---------------------------------------------------------------------------
# Scaling in n


@dataclass(frozen=True)
class ScalingTable:
    n_values: list
    p_values: list
    mean_loss: list
    slope: float

    def to_dict(self) -> dict:
        rows = [{"n": n, "p": p, "mean_proposed_loss": l}
                for n, p, l in zip(self.n_values, self.p_values, self.mean_loss)]
        return {"rows": rows, "loglog_slope": self.slope}


def loglog_slope(n_values, losses) -> float:
    """Least-squares slope of log(loss) against log(n)."""
    return float(np.polyfit(np.log(np.asarray(n_values, float)), np.log(np.asarray(losses, float)), 1)[0])


def scaling_study(base_spec: ScenarioSpec, n_values, n_reps: int, cv: CvSpec | None = None,
                  parallelism: int = 1, loss_fn: Callable[[ScenarioSpec], float] | None = None) -> ScalingTable:
    """Mean proposed loss as n grows with p/n held at the base scenario's ratio."""
    n_values = [int(n) for n in n_values]
    if len(n_values) < 2:
        raise ValueError("need at least two values of n")
    cv = cv or CvSpec()
    ratio = base_spec.p / base_spec.n
    if loss_fn is None:
        def loss_fn(s):
            return run_experiment(s, cv, n_reps, parallelism).methods["proposed"].mean_loss
    p_values, losses = [], []
    for n in n_values:
        spec = base_spec.replace(n=n, p=int(round(ratio * n)))
        p_values.append(spec.p)
        losses.append(float(loss_fn(spec)))
        logger.info("scaling: n=%d p=%d mean proposed loss %.4f", n, spec.p, losses[-1])
    return ScalingTable(n_values, p_values, losses, loglog_slope(n_values, losses))
