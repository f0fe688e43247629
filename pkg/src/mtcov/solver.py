"""Multi-task elastic-net by block coordinate descent.

Minimizes ``(1/2n)||Y - XB||_F^2 + lam * ||B||_{2,1} + (tau/2) ||B||_F^2`` over
``B`` of shape (p, T). Rows are updated with exact block minimization, so
inactive rows are exact zeros and the support can be read off without a
threshold.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _cd
from .data import PenaltyPair

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000
DEFAULT_L1_RATIOS = (0.5, 0.7, 0.9, 1.0)


@dataclass(frozen=True)
class FitResult:
    b_hat: np.ndarray
    residual: np.ndarray
    support: np.ndarray
    penalty: PenaltyPair
    iterations: int
    objective_trace: np.ndarray
    converged: bool

    @property
    def objective(self) -> float:
        return float(self.objective_trace[-1])


def block_soft_threshold(v, threshold: float) -> np.ndarray:
    """Proximal operator of ``threshold * ||.||_2``: shrink ``v`` toward zero by ``threshold``.

    >>> block_soft_threshold([3.0, 4.0], 2.5)
    array([1.5, 2. ])
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    out = np.array(v, dtype=np.float64, copy=True)
    _cd.bst_inplace(out, float(threshold))
    return out


def objective(x, y, b, penalty: PenaltyPair) -> float:
    r = np.ascontiguousarray(y - x @ b)
    return float(_cd.objective(r, np.ascontiguousarray(b), penalty.lam, penalty.tau))


def _check_xy(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("x and y must be 2-dimensional")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("x and y must be finite")
    return x, y


class _Problem:
    """Design-dependent quantities shared by every fit on the same ``x``."""

    def __init__(self, x, y):
        self.x, self.y = _check_xy(x, y)
        self.n, self.p = self.x.shape
        self.xf = np.asfortranarray(self.x)
        self.colsq = np.einsum("ij,ij->j", self.x, self.x) / self.n
        # zero columns never enter the model
        self.rows = np.flatnonzero(self.colsq > 0).astype(np.int64)

    def solve(self, penalty: PenaltyPair, b, tol, max_iter, trace=True):
        """Run coordinate descent in place on ``b``; returns (residual, iterations, converged, trace)."""
        lam, tau = penalty.lam, penalty.tau
        r = np.asfortranarray(self.y - self.x @ b)
        obj = [_cd.objective(r, b, lam, tau)] if trace else None
        it = 0
        converged = False
        while it < max_iter:
            # full sweep: also the convergence check
            dmax = _cd.sweep(self.xf, r, b, self.colsq, self.rows, lam, tau)
            it += 1
            if trace:
                obj.append(_cd.objective(r, b, lam, tau))
            if dmax <= tol * (1.0 + np.abs(b).max(initial=0.0)):
                converged = True
                break
            # iterate on the current working set until it settles
            while it < max_iter:
                active = np.flatnonzero(np.any(b != 0.0, axis=1)).astype(np.int64)
                if active.size == 0:
                    break
                dmax = _cd.sweep(self.xf, r, b, self.colsq, active, lam, tau)
                it += 1
                if trace:
                    obj.append(_cd.objective(r, b, lam, tau))
                if dmax <= tol * (1.0 + np.abs(b).max(initial=0.0)):
                    break
        return r, it, converged, obj

    def fit(self, penalty, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, b_init=None) -> FitResult:
        t = self.y.shape[1]
        if b_init is None:
            b = np.zeros((self.p, t))
        else:
            b = np.array(b_init, dtype=np.float64, order="C", copy=True)
            if b.shape != (self.p, t):
                raise ValueError(f"b_init must have shape {(self.p, t)}, got {b.shape}")
            b[self.colsq == 0] = 0.0
        _, it, converged, obj = self.solve(penalty, b, tol, max_iter)
        if not converged:
            logger.warning("coordinate descent stopped after %d sweeps without converging", it)
        return _make_result(self.x, self.y, b, penalty, it, obj, converged)


def _make_result(x, y, b, penalty, it, obj, converged) -> FitResult:
    residual = y - x @ b
    support = np.flatnonzero(np.any(b != 0.0, axis=1))
    trace = np.asarray(obj, dtype=np.float64)
    for a in (b, residual, support, trace):
        a.setflags(write=False)
    return FitResult(b, residual, support, penalty, it, trace, converged)


def fit(x, y, penalty: PenaltyPair, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
        b_init=None) -> FitResult:
    """Fit the multi-task elastic-net at a fixed penalty pair.

    Parameters
    ----------
    x : array of shape (n, p)
    y : array of shape (n, T)
    penalty : PenaltyPair
    tol : float
        Converged once a full sweep changes no coefficient by more than
        ``tol * (1 + max|B|)``.
    max_iter : int
        Maximum number of sweeps. Hitting it returns ``converged=False``.
    b_init : array of shape (p, T), optional
        Warm start.
    """
    return _Problem(x, y).fit(penalty, tol=tol, max_iter=max_iter, b_init=b_init)


def fit_per_task(x, y, penalty: PenaltyPair, **kwargs) -> list[FitResult]:
    """Fit each column of ``y`` separately (single-task lasso / ridge / elastic-net)."""
    x, y = _check_xy(x, y)
    prob = _Problem(x, y[:, :1])
    fits = []
    for t in range(y.shape[1]):
        prob.y = y[:, t : t + 1]
        fits.append(prob.fit(penalty, **kwargs))
    return fits


def stack_fits(fits: list[FitResult]) -> FitResult:
    """Join single-task fits column-wise into one multi-task FitResult."""
    b = np.hstack([f.b_hat for f in fits])
    residual = np.hstack([f.residual for f in fits])
    support = np.flatnonzero(np.any(b != 0.0, axis=1))
    trace = np.array([sum(f.objective for f in fits)])
    for a in (b, residual, support, trace):
        a.setflags(write=False)
    return FitResult(
        b, residual, support, fits[0].penalty,
        max(f.iterations for f in fits), trace, all(f.converged for f in fits),
    )


def kkt_violation(x, y, fit: FitResult) -> float:
    """Largest scaled violation of the optimality conditions of ``fit``.

    With ``G = X^T F - n tau B``, active rows must satisfy
    ``G_k = n lam b_k / ||b_k||`` and inactive rows ``||G_k|| <= n lam``. Both
    are measured relative to ``n lam`` (to ``n`` when ``lam == 0``).
    """
    x, y = _check_xy(x, y)
    n = x.shape[0]
    lam, tau = fit.penalty.lam, fit.penalty.tau
    b = fit.b_hat
    g = x.T @ (y - x @ b) - n * tau * b
    norms = np.linalg.norm(b, axis=1)
    active = norms > 0
    if lam == 0:
        return float(np.max(np.linalg.norm(g, axis=1), initial=0.0) / n)
    scale = n * lam
    out = 0.0
    if active.any():
        stat = g[active] - scale * b[active] / norms[active, None]
        out = float(np.max(np.linalg.norm(stat, axis=1)) / scale)
    if (~active).any():
        inactive = np.linalg.norm(g[~active], axis=1) / scale - 1.0
        out = max(out, float(np.max(inactive)), 0.0)
    return out


def alpha_max(x, y, l1_ratio: float = 1.0) -> float:
    """Smallest alpha at which the fit with ``lam = alpha * l1_ratio`` is identically zero."""
    if not l1_ratio > 0:
        raise ValueError("l1_ratio must be positive")
    x, y = _check_xy(x, y)
    n = x.shape[0]
    value = float(np.max(np.linalg.norm(x.T @ y, axis=1))) / (n * l1_ratio)
    if value == 0.0:
        warnings.warn("X^T Y is identically zero; alpha_max is 0", RuntimeWarning, stacklevel=2)
    return value


def make_alpha_grid(alpha_max: float, n_alphas: int = 100, eps: float = 1e-3) -> np.ndarray:
    """Log-spaced decreasing grid from ``alpha_max`` to ``eps * alpha_max``."""
    if not alpha_max > 0:
        raise ValueError(f"alpha_max must be positive, got {alpha_max}")
    if n_alphas < 2:
        raise ValueError("n_alphas must be at least 2")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    grid = np.geomspace(alpha_max, eps * alpha_max, n_alphas)
    grid[0] = alpha_max
    return grid


def fit_path(x, y, alphas, l1_ratio: float, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER) -> list[FitResult]:
    """Fits along a decreasing alpha path, each warm-started from the previous one."""
    prob = _Problem(x, y)
    fits = []
    b = None
    for alpha in alphas:
        f = prob.fit(PenaltyPair.from_alpha(alpha, l1_ratio), tol=tol, max_iter=max_iter, b_init=b)
        b = f.b_hat
        fits.append(f)
    return fits


# ---------------------------------------------------------------------------
# Cross-validation


@dataclass(frozen=True)
class CvTable:
    grid: list[tuple[float, float]]
    mean_cv_error: np.ndarray
    best: int
    fold_errors: np.ndarray = field(repr=False)
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def best_alpha(self) -> float:
        return self.grid[self.best][0]

    @property
    def best_l1_ratio(self) -> float:
        return self.grid[self.best][1]

    @property
    def best_penalty(self) -> PenaltyPair:
        return PenaltyPair.from_alpha(self.best_alpha, self.best_l1_ratio)


def fold_indices(n: int, folds: int, seed) -> list[np.ndarray]:
    """Seeded shuffle of ``range(n)`` split into ``folds`` contiguous blocks."""
    if folds < 2:
        raise ValueError("folds must be at least 2")
    perm = np.random.default_rng(seed).permutation(n)
    blocks = np.array_split(perm, folds)
    if any(len(b) == 0 for b in blocks):
        raise ValueError(f"cannot split {n} rows into {folds} nonempty folds")
    return blocks


def _select_best(grid, errors) -> int:
    best_err = np.min(errors)
    ties = np.flatnonzero(errors == best_err)
    return int(max(ties, key=lambda i: grid[i][0]))


def cross_validate(x, y, l1_ratios=DEFAULT_L1_RATIOS, n_alphas: int = 100, folds: int = 5, seed=0,
                   eps: float = 1e-3, tol: float = 1e-4, max_iter: int = DEFAULT_MAX_ITER) -> CvTable:
    """K-fold cross-validation over the (alpha, l1_ratio) grid.

    Each l1_ratio gets a log-spaced alpha grid computed on the full data. Per
    fold, the path is fitted with warm starts and scored by held-out mean
    squared error per row, ``||Y_val - X_val B||_F^2 / n_val``.

    Path fits use the looser ``tol`` (default 1e-4) since they only rank
    penalties; refit the winner at full precision.
    """
    x, y = _check_xy(x, y)
    n = x.shape[0]
    if n < folds:
        raise ValueError(f"need at least {folds} rows for {folds}-fold CV, got {n}")
    blocks = fold_indices(n, folds, seed)

    grid = []
    for r in l1_ratios:
        for a in make_alpha_grid(alpha_max(x, y, r), n_alphas, eps):
            grid.append((float(a), float(r)))

    errors = np.empty((folds, len(grid)))
    unconverged = 0
    for k, val in enumerate(blocks):
        train = np.setdiff1d(np.arange(n), val)
        prob = _Problem(x[train], y[train])
        xv, yv = x[val], y[val]
        for ri, r in enumerate(l1_ratios):
            b = np.zeros((x.shape[1], y.shape[1]))
            for ai in range(n_alphas):
                g = ri * n_alphas + ai
                pen = PenaltyPair.from_alpha(grid[g][0], r)
                _, _, ok, _ = prob.solve(pen, b, tol, max_iter, trace=False)
                unconverged += not ok
                errors[k, g] = np.sum((yv - xv @ b) ** 2) / len(val)

    mean = errors.mean(axis=0)
    if not np.all(np.isfinite(mean)):
        raise FloatingPointError("non-finite cross-validation error")
    meta = {"folds": folds, "seed": seed, "eps": eps, "n_alphas": n_alphas, "tol": tol,
            "unconverged_fits": unconverged, "metric": "mean squared error per held-out row"}
    return CvTable(grid, mean, _select_best(grid, mean), errors, meta)


def fit_cv(x, y, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, **cv_kwargs):
    """Cross-validate, then refit on all rows at the selected penalty."""
    table = cross_validate(x, y, max_iter=max_iter, **cv_kwargs)
    return table, fit(x, y, table.best_penalty, tol=tol, max_iter=max_iter)
