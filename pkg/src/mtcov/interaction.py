"""Interaction matrix of a fitted multi-task elastic-net.

The interaction matrix is the T x T generalization of the degrees of freedom.
It is computed on the support only: with ``s = |support|``, the linear system
has size ``T*s`` and coefficients are vectorized column by column,
``vec(B) = [B e_1; ...; B e_T]``, so the (t, t') block of the system is s x s.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .data import symmetrize
from .solver import FitResult

PINV_RCOND = 1e-12


@dataclass(frozen=True)
class InteractionResult:
    a_hat: np.ndarray
    support: np.ndarray
    system_dim: int
    factorization: str
    min_eig: float

    def op_norm_ratio(self, n: int) -> float:
        """``||A/n||_op``; below 1 means ``n I - A`` is invertible."""
        if not self.a_hat.any():
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvalsh(self.a_hat)))) / n


def hessian_block(b_k, lam: float) -> np.ndarray:
    """Hessian of ``u -> lam * ||u||`` at ``u = b_k != 0``.

    Equals ``lam / ||b_k|| * (I - b_k b_k^T / ||b_k||^2)``: zero along ``b_k``
    and ``lam / ||b_k||`` on its orthogonal complement.
    """
    b_k = np.asarray(b_k, dtype=np.float64)
    nrm = np.linalg.norm(b_k)
    if nrm == 0:
        raise ValueError("Hessian block is undefined at a zero row; restrict to the support")
    u = b_k / nrm
    return (lam / nrm) * (np.eye(b_k.size) - np.outer(u, u))


def assemble_restricted_system(x_s, h_blocks, tau: float, n: int) -> np.ndarray:
    """Build the (T*s) x (T*s) system on the support.

    Block (t, t') is ``delta_{tt'} (X_S^T X_S + n tau I) + n diag_k(H^(k)[t, t'])``.
    An empty ``h_blocks`` (lam == 0) must be passed with ``n_tasks`` implied by
    shape ``(0, T, T)``.
    """
    x_s = np.asarray(x_s, dtype=np.float64)
    h = np.asarray(h_blocks, dtype=np.float64)
    s = x_s.shape[1]
    if h.ndim != 3 or h.shape[1] != h.shape[2]:
        raise ValueError("h_blocks must have shape (s, T, T)")
    t = h.shape[1]
    if h.shape[0] not in (0, s):
        raise ValueError(f"got {h.shape[0]} Hessian blocks for a support of size {s}")
    gram = x_s.T @ x_s
    gram[np.diag_indices(s)] += n * tau
    m = np.zeros((t, s, t, s))
    for k in range(t):
        m[k, :, k, :] = gram
    if h.shape[0]:
        idx = np.arange(s)
        m[:, idx, :, idx] += n * h
    m = m.reshape(t * s, t * s)
    return symmetrize(m)


def _inverse_psd(m: np.ndarray):
    """Inverse of a PSD matrix by Cholesky, or its pseudo-inverse when singular."""
    try:
        c, lower = sla.cho_factor(m, lower=True, check_finite=False)
        piv = np.diag(c) ** 2
        if piv.min() <= PINV_RCOND * piv.max():
            # factorization only survived through rounding
            raise np.linalg.LinAlgError("numerically singular")
        inv, info = sla.lapack.dpotri(c, lower=1)
        if info != 0:
            raise np.linalg.LinAlgError(f"dpotri failed with info={info}")
        inv = np.tril(inv) + np.tril(inv, -1).T
        return inv, "cholesky", np.nan
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(m)
        keep = w > PINV_RCOND * max(w[-1], 0.0)
        inv = (v[:, keep] / w[keep]) @ v[:, keep].T
        return symmetrize(inv), "eigen_pinv", float(w[0])


def interaction_matrix(x, fit: FitResult, with_min_eig: bool = False) -> InteractionResult:
    """Interaction matrix ``A`` of ``fit``.

    ``A[t, t'] = trace(G_{tt'} X_S^T X_S)`` where ``G`` is the (pseudo-)inverse
    of the support-restricted system and ``G_{tt'}`` its s x s blocks. Returns
    zeros when the support is empty.

    ``min_eig`` is always reported on the eigen path; on the Cholesky path it
    costs an extra eigen-decomposition and is only computed on request.
    """
    x = np.asarray(x, dtype=np.float64)
    b = fit.b_hat
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(x))):
        raise ValueError("fit and design must be finite")
    n = x.shape[0]
    t = b.shape[1]
    support = np.asarray(fit.support)
    if support.size == 0:
        return InteractionResult(np.zeros((t, t)), support, 0, "cholesky", np.nan)

    lam, tau = fit.penalty.lam, fit.penalty.tau
    s = support.size
    if lam > 0:
        h = np.stack([hessian_block(b[k], lam) for k in support])
    else:
        h = np.zeros((0, t, t))
    x_s = x[:, support]
    m = assemble_restricted_system(x_s, h, tau, n)
    g, how, min_eig = _inverse_psd(m)
    if with_min_eig and np.isnan(min_eig):
        min_eig = float(sla.eigh(m, eigvals_only=True, subset_by_index=[0, 0])[0])

    gram = x_s.T @ x_s
    a_hat = np.einsum("iajb,ab->ij", g.reshape(t, s, t, s), gram)
    return InteractionResult(symmetrize(a_hat), support, t * s, how, min_eig)


def per_task_df_matrix(column_fits: list[FitResult]) -> np.ndarray:
    """Diagonal matrix of the support sizes of independently fitted columns."""
    return np.diag([float(np.count_nonzero(f.b_hat)) for f in column_fits])
