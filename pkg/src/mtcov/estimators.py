"""Noise covariance estimators and prediction-error estimates.

All functions are pure. ``sigma`` is the known design covariance; its inverse
is only ever applied through a Cholesky factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .data import CovarianceEstimate, Method, symmetrize
from .solver import FitResult

SATURATION_MARGIN = 1e-12


class SaturatedInteractionError(ValueError):
    """``n I - A`` is (numerically) singular."""


@dataclass(frozen=True)
class GenErrorEstimate:
    value: float

    def __post_init__(self):
        if not (np.isfinite(self.value) and self.value >= 0):
            raise ValueError(f"generalization error estimate must be finite and >= 0, got {self.value}")


def _require_sigma(sigma, p):
    if sigma is None:
        raise ValueError("this estimator needs the design covariance sigma (Σ); none was provided")
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (p, p):
        raise ValueError(f"sigma must be {p}x{p}, got {sigma.shape}")
    try:
        return sla.cholesky(sigma, lower=True)
    except np.linalg.LinAlgError:
        raise ValueError("sigma is singular or not positive definite") from None


def whitened_gram(x, m, sigma) -> np.ndarray:
    """``M^T X Sigma^{-1} X^T M`` computed as ``G^T G`` with ``G = L^{-1} X^T M``, ``Sigma = L L^T``."""
    x = np.asarray(x, dtype=np.float64)
    chol = _require_sigma(sigma, x.shape[1])
    g = sla.solve_triangular(chol, x.T @ m, lower=True)
    return g.T @ g


def _gram(m: np.ndarray) -> np.ndarray:
    return symmetrize(m.T @ m)


def estimate_naive(f) -> CovarianceEstimate:
    f = np.asarray(f, dtype=np.float64)
    n = f.shape[0]
    return CovarianceEstimate(_gram(f) / n, Method.NAIVE, {"n": n})


def estimate_oracle(e) -> CovarianceEstimate:
    e = np.asarray(e, dtype=np.float64)
    n = e.shape[0]
    return CovarianceEstimate(_gram(e) / n, Method.ORACLE, {"n": n})


def estimate_mm(x, y, sigma) -> CovarianceEstimate:
    """Method-of-moments estimator; unbiased under Gaussian design, needs no fit."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = x.shape
    yty = y.T @ y
    s_hat = (n + 1 + p) / (n * (n + 1)) * yty - whitened_gram(x, y, sigma) / (n * (n + 1))
    s_hat = symmetrize(s_hat)
    psd = bool(np.linalg.eigvalsh(s_hat)[0] >= 0)
    return CovarianceEstimate(s_hat, Method.MM, {"n": n, "p": p, "psd": psd})


def _sandwich_inverse(a_hat, n):
    """``(I - A/n)^{-1}``, refusing when ``||A/n||_op`` reaches 1."""
    a_hat = np.asarray(a_hat, dtype=np.float64)
    t = a_hat.shape[0]
    ratio = float(np.linalg.norm(a_hat, 2)) / n
    if ratio >= 1 - SATURATION_MARGIN:
        raise SaturatedInteractionError(
            f"interaction matrix saturates n (||A/n||_op = {ratio:.6g})"
        )
    return np.linalg.inv(np.eye(t) - a_hat / n), ratio


def estimate_proposed(x, y, fit: FitResult, a_hat, sigma) -> CovarianceEstimate:
    """Debiased residual covariance.

    ``(nI - A)^{-1} [F^T((p+n)I - X Sigma^{-1} X^T) F - A F^T F - F^T F A] (nI - A)^{-1}``,
    with the bracket assembled in that order before the sandwich.
    """
    x = np.asarray(x, dtype=np.float64)
    n, p = x.shape
    f = np.asarray(fit.residual, dtype=np.float64)
    a_hat = np.asarray(a_hat, dtype=np.float64)
    ftf = f.T @ f
    bracket = (p + n) * ftf - whitened_gram(x, f, sigma) - a_hat @ ftf - ftf @ a_hat
    inv, ratio = _sandwich_inverse(a_hat, n)
    # (nI - A)^{-1} = (I - A/n)^{-1} / n
    s_hat = symmetrize(inv @ bracket @ inv) / n**2
    meta = {"n": n, "p": p, "penalty": fit.penalty.as_dict(), "df_trace": float(np.trace(a_hat)),
            "a_over_n_opnorm": ratio, "psd": bool(np.linalg.eigvalsh(s_hat)[0] >= 0)}
    return CovarianceEstimate(s_hat, Method.PROPOSED, meta)


def estimate_gen_error(f, a_hat) -> GenErrorEstimate:
    """Estimate of ``trace(S) + ||Sigma^{1/2}(B_hat - B*)||_F^2``: ``||(I - A/n)^{-1} F^T||_F^2 / n``."""
    f = np.asarray(f, dtype=np.float64)
    n = f.shape[0]
    inv, _ = _sandwich_inverse(a_hat, n)
    return GenErrorEstimate(float(np.sum((inv @ f.T) ** 2)) / n)


def gen_error_target(s, sigma, b_hat, b_star) -> float:
    """The quantity estimated by :func:`estimate_gen_error`, from simulation truth."""
    d = np.asarray(b_hat) - np.asarray(b_star)
    return float(np.trace(s)) + float(np.sum(d * (np.asarray(sigma) @ d)))


def estimate_oos_error(x, y, fit: FitResult, a_hat, sigma) -> np.ndarray:
    """Estimate of the out-of-sample error matrix ``H^T H``, ``H = Sigma^{1/2}(B_hat - B*)``.

    ``(1/n^2) (I - A/n)^{-1} (F^T Z Z^T F + A F^T F + F^T F A - p F^T F) (I - A/n)^{-1}``
    with ``Z = X Sigma^{-1/2}``. Not projected onto the PSD cone.
    """
    x = np.asarray(x, dtype=np.float64)
    n, p = x.shape
    f = np.asarray(fit.residual, dtype=np.float64)
    a_hat = np.asarray(a_hat, dtype=np.float64)
    ftf = f.T @ f
    inner = whitened_gram(x, f, sigma) + a_hat @ ftf + ftf @ a_hat - p * ftf
    inv, _ = _sandwich_inverse(a_hat, n)
    return symmetrize(inv @ inner @ inv) / n**2
