"""Synthetic multi-task datasets: correlated Gaussian design, row-sparse
coefficients scaled to a target SNR, and Gaussian noise with full- or
low-rank covariance.

Randomness comes from Philox streams keyed by ``(seed, rep_index, role)``, so
every replication and every matrix role has its own substream and results do
not depend on execution order.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, Truth

SIGMA_KERNEL = "ar_decay: Sigma_jk = rho^|j-k|"

# substream roles; the S draw is shared by all replications of a scenario
_ROLE_S, _ROLE_B, _ROLE_X, _ROLE_E = range(4)
_SHARED_REP = 2**32 - 1


def make_rng(seed: int, rep_index: int, role: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep_index), int(role)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ScenarioSpec:
    n: int
    p: int
    T: int
    s_kind: str = "full_rank"
    low_rank_dim: int = 10
    sparsity_frac: float = 0.1
    snr: float = 1.0
    sigma_kind: str = "ar_decay"
    rho: float = 0.5
    seed: int = 0
    # fixed noise covariance, overriding s_kind (tests and custom scenarios)
    s_matrix: tuple | None = None

    def __post_init__(self):
        if min(self.n, self.p, self.T) < 1:
            raise ValueError("n, p and T must be positive")
        if self.s_kind not in ("full_rank", "low_rank"):
            raise ValueError(f"unknown s_kind {self.s_kind!r}")
        if self.sigma_kind != "ar_decay":
            raise ValueError(f"unknown sigma_kind {self.sigma_kind!r}")
        if not 0 < self.sparsity_frac <= 1:
            raise ValueError("sparsity_frac must lie in (0, 1]")
        if self.support_size < 1:
            raise ValueError(f"floor(sparsity_frac * p) = {self.support_size}; need at least one row")
        if not self.snr > 0:
            raise ValueError("snr must be positive")
        if self.low_rank_dim < 1:
            raise ValueError("low_rank_dim must be at least 1")
        if self.s_matrix is not None:
            s = np.asarray(self.s_matrix, dtype=float)
            if s.shape != (self.T, self.T):
                raise ValueError(f"s_matrix must be {self.T}x{self.T}")
            object.__setattr__(self, "s_matrix", tuple(map(tuple, s)))

    @property
    def support_size(self) -> int:
        # small epsilon guards against 0.1 * 30 = 2.9999999999999996
        return int(math.floor(self.sparsity_frac * self.p + 1e-9))

    def replace(self, **changes) -> "ScenarioSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["s_matrix"] = None if self.s_matrix is None else [list(r) for r in self.s_matrix]
        return d


def _check_psd(s: np.ndarray, what: str) -> np.ndarray:
    w = np.linalg.eigvalsh(s)
    if w[0] < -1e-10 * max(abs(w[-1]), abs(w[0])):
        raise ValueError(f"{what} is not positive semi-definite (min eigenvalue {w[0]:.3g})")
    return w


def make_full_rank_S(T: int) -> np.ndarray:
    """``S[t, t'] = cos(t - t') / (1 + sqrt|t - t'|)``; unit diagonal."""
    if T < 1:
        raise ValueError("T must be positive")
    d = np.subtract.outer(np.arange(T), np.arange(T)).astype(float)
    s = np.cos(d) / (1.0 + np.sqrt(np.abs(d)))
    _check_psd(s, "full-rank S")
    return s


def make_low_rank_S(T: int, r: int, rng: np.random.Generator | None = None, u=None) -> np.ndarray:
    """``S = u u^T`` with ``u`` of shape (T, r) drawn i.i.d. N(0, 1/T) unless given."""
    if r < 1:
        raise ValueError("rank must be at least 1")
    if u is None:
        u = rng.standard_normal((T, r)) / np.sqrt(T)
    u = np.asarray(u, dtype=float).reshape(T, r)
    return u @ u.T


@functools.lru_cache(maxsize=8)
def _sigma_cached(p: int, rho: float) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(p)
    sigma = rho ** np.abs(np.subtract.outer(idx, idx)).astype(float)
    chol = np.linalg.cholesky(sigma)
    sigma.setflags(write=False)
    chol.setflags(write=False)
    return sigma, chol


def make_sigma(p: int, rho: float = 0.5) -> np.ndarray:
    """Toeplitz design covariance ``Sigma[j, k] = rho^|j-k|``."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    return _sigma_cached(int(p), float(rho))[0].copy()


def make_coefficients(p: int, T: int, s_true, sigma, sparsity_frac: float, rng: np.random.Generator,
                      snr: float = 1.0) -> np.ndarray:
    """Row-sparse coefficients with ``trace(B^T Sigma B) = snr * trace(S)``.

    ``floor(sparsity_frac * p)`` rows chosen uniformly without replacement are
    drawn from N(0, I_T / p); all other rows are zero. The matrix is then
    rescaled to hit the target signal-to-noise ratio.
    """
    m = int(math.floor(sparsity_frac * p + 1e-9))
    if m < 1:
        raise ValueError("support would be empty")
    sigma = np.asarray(sigma, dtype=float)
    target = snr * float(np.trace(s_true))
    for _ in range(2):
        b = np.zeros((p, T))
        rows = np.sort(rng.choice(p, size=m, replace=False))
        b[rows] = rng.standard_normal((m, T)) / np.sqrt(p)
        energy = float(np.sum(b * (sigma @ b)))
        if energy > 0:
            return b * np.sqrt(target / energy)
    raise FloatingPointError("trace(B^T Sigma B) vanished twice; cannot rescale coefficients")


def noise_factor(s: np.ndarray) -> np.ndarray:
    """Matrix ``W`` (r, T) with ``W^T W = S`` over the numerical range of ``S``."""
    s = np.asarray(s, dtype=float)
    w, v = np.linalg.eigh(s)
    top = max(abs(w[-1]), abs(w[0]))
    if w[0] < -1e-10 * top:
        raise ValueError(f"noise covariance is not PSD (min eigenvalue {w[0]:.3g})")
    keep = w > 1e-10 * top if top > 0 else np.zeros_like(w, dtype=bool)
    return np.sqrt(w[keep])[:, None] * v[:, keep].T


def scenario_S(spec: ScenarioSpec) -> np.ndarray:
    """The noise covariance of a scenario, shared by all of its replications."""
    if spec.s_matrix is not None:
        return np.array(spec.s_matrix, dtype=float)
    if spec.s_kind == "full_rank":
        return make_full_rank_S(spec.T)
    return make_low_rank_S(spec.T, spec.low_rank_dim, make_rng(spec.seed, _SHARED_REP, _ROLE_S))


def sample_dataset(spec: ScenarioSpec, rep_index: int = 0) -> Dataset:
    """Draw one replication ``Y = X B* + E`` with the truth attached."""
    s = scenario_S(spec)
    w = noise_factor(s)
    sigma, chol = _sigma_cached(spec.p, float(spec.rho))

    b_star = make_coefficients(spec.p, spec.T, s, sigma, spec.sparsity_frac,
                               make_rng(spec.seed, rep_index, _ROLE_B), spec.snr) \
        if np.trace(s) > 0 else np.zeros((spec.p, spec.T))
    x = make_rng(spec.seed, rep_index, _ROLE_X).standard_normal((spec.n, spec.p)) @ chol.T
    g = make_rng(spec.seed, rep_index, _ROLE_E).standard_normal((spec.n, w.shape[0]))
    e = g @ w if w.shape[0] else np.zeros((spec.n, spec.T))
    y = x @ b_star + e
    meta = {"scenario": spec.to_dict(), "rep_index": rep_index, "sigma_kernel": SIGMA_KERNEL,
            "support_selection": "uniform without replacement"}
    return Dataset(x=x, y=y, sigma=sigma, truth=Truth(e=e, b_star=b_star, s=s), meta=meta)
