"""Matrix-valued domain types, validation and CSV/JSON file I/O.

All containers are frozen dataclasses holding read-only float64 arrays, so
they can be shared between threads without copying.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

SYMMETRY_RTOL = 1e-10
PSD_RTOL = 1e-10


class MatrixParseError(ValueError):
    """Raised when a CSV matrix file is malformed."""

    def __init__(self, message: str, path: str | os.PathLike | None = None, line: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if self.path is not None:
            where = self.path if line is None else f"{self.path}:{line}"
            where += ": "
        super().__init__(where + message)


def _frozen(a, name: str, ndim: int = 2) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    if out.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    out.setflags(write=False)
    return out


def is_symmetric(a: np.ndarray, rtol: float = SYMMETRY_RTOL) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(float(np.max(np.abs(a), initial=0.0)), np.finfo(float).tiny)
    return float(np.max(np.abs(a - a.T), initial=0.0)) <= rtol * scale


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class Truth:
    """Simulation ground truth: noise ``e``, coefficients ``b_star`` and noise covariance ``s``."""

    e: np.ndarray | None = None
    b_star: np.ndarray | None = None
    s: np.ndarray | None = None

    def __post_init__(self):
        for name in ("e", "b_star", "s"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _frozen(value, name))


@dataclass(frozen=True)
class Dataset:
    """Design ``x`` (n, p), responses ``y`` (n, T) and optional known design covariance."""

    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray | None = None
    truth: Truth | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x, "x"))
        object.__setattr__(self, "y", _frozen(self.y, "y"))
        if self.sigma is not None:
            object.__setattr__(self, "sigma", _frozen(self.sigma, "sigma"))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_tasks(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True)
class PenaltyPair:
    """Group-lasso weight ``lam`` and ridge weight ``tau`` of the multi-task elastic-net.

    Unpenalized least squares (both zero) is rejected unless ``allow_zero`` is set.
    """

    lam: float
    tau: float
    allow_zero: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        lam, tau = float(self.lam), float(self.tau)
        if not (np.isfinite(lam) and np.isfinite(tau)):
            raise ValueError("penalties must be finite")
        if lam < 0 or tau < 0:
            raise ValueError(f"penalties must be nonnegative, got lam={lam}, tau={tau}")
        if lam == 0 and tau == 0 and not self.allow_zero:
            raise ValueError("lam and tau are both zero: unpenalized least squares is not supported")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "tau", tau)

    @classmethod
    def from_alpha(cls, alpha: float, l1_ratio: float) -> "PenaltyPair":
        """Map the (alpha, l1_ratio) parameterization to ``lam = alpha * r``, ``tau = alpha * (1 - r)``."""
        if not 0 < l1_ratio <= 1:
            raise ValueError(f"l1_ratio must lie in (0, 1], got {l1_ratio}")
        return cls(alpha * l1_ratio, alpha * (1.0 - l1_ratio))

    def tau_prime(self, sigma: np.ndarray) -> float:
        """Ridge weight relative to the operator norm of ``sigma`` (diagnostics only)."""
        return self.tau / float(np.linalg.norm(sigma, 2))

    def as_dict(self) -> dict:
        return {"lambda": self.lam, "tau": self.tau}


class Method(str, enum.Enum):
    PROPOSED = "proposed"
    NAIVE = "naive"
    MM = "mm"
    ORACLE = "oracle"


@dataclass(frozen=True)
class CovarianceEstimate:
    s_hat: np.ndarray
    method: Method
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        s_hat = _frozen(self.s_hat, "s_hat")
        if s_hat.shape[0] != s_hat.shape[1]:
            raise ValueError(f"s_hat must be square, got {s_hat.shape}")
        if not is_symmetric(s_hat):
            raise ValueError("s_hat is not symmetric")
        object.__setattr__(self, "s_hat", s_hat)
        object.__setattr__(self, "method", Method(self.method))

    def project_psd(self) -> "CovarianceEstimate":
        """Copy with negative eigenvalues clipped to zero."""
        w, v = np.linalg.eigh(self.s_hat)
        clipped = symmetrize((v * np.clip(w, 0.0, None)) @ v.T)
        return CovarianceEstimate(clipped, self.method, {**self.meta, "projected_psd": True})


# ---------------------------------------------------------------------------
# Validation


def _psd_violation(a: np.ndarray) -> float | None:
    """Return the offending min eigenvalue if ``a`` is not PSD, else None."""
    w = np.linalg.eigvalsh(symmetrize(a))
    scale = max(float(np.max(np.abs(w))), 0.0)
    if w[0] < -PSD_RTOL * scale:
        return float(w[0])
    return None


def validate_dataset(ds: Dataset) -> list[str]:
    """List the invariants violated by ``ds``; an empty list means valid."""
    report = []
    n, p = ds.x.shape
    if n < 1 or p < 1:
        report.append(f"x must have n >= 1 and p >= 1, got shape {ds.x.shape}")
    if ds.y.shape[1] < 1:
        report.append("y must have at least one column (T >= 1)")
    if ds.y.shape[0] != n:
        report.append(f"row-count mismatch: x has {n} rows, y has {ds.y.shape[0]}")
    for name in ("x", "y"):
        if not np.all(np.isfinite(getattr(ds, name))):
            report.append(f"{name} contains non-finite entries")

    if ds.sigma is not None:
        sig = ds.sigma
        if sig.shape != (p, p):
            report.append(f"sigma must be {p}x{p}, got {sig.shape}")
        elif not np.all(np.isfinite(sig)):
            report.append("sigma contains non-finite entries")
        else:
            if not is_symmetric(sig):
                report.append("sigma is not symmetric")
            min_eig = float(np.linalg.eigvalsh(symmetrize(sig))[0])
            if min_eig <= 0:
                report.append(f"sigma is not positive definite (min eigenvalue {min_eig:.3g})")

    truth = ds.truth
    if truth is not None:
        t = ds.y.shape[1]
        if truth.e is not None and truth.e.shape != ds.y.shape:
            report.append(f"truth.e must have shape {ds.y.shape}, got {truth.e.shape}")
        if truth.b_star is not None and truth.b_star.shape != (p, t):
            report.append(f"truth.b_star must have shape {(p, t)}, got {truth.b_star.shape}")
        if truth.s is not None:
            if truth.s.shape != (t, t):
                report.append(f"truth.s must be {t}x{t}, got {truth.s.shape}")
            else:
                if not is_symmetric(truth.s):
                    report.append("truth.s is not symmetric")
                bad = _psd_violation(truth.s)
                if bad is not None:
                    report.append(f"truth.s is not positive semi-definite (min eigenvalue {bad:.3g})")
    return report


# ---------------------------------------------------------------------------
# CSV matrices


def _parse_csv_strict(text: str, path) -> np.ndarray:
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.strip().split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise MatrixParseError(f"ragged row: expected {width} fields, found {len(fields)}", path, lineno)
        try:
            rows.append([float(v) for v in fields])
        except ValueError:
            bad = next(v for v in fields if not _is_float(v))
            raise MatrixParseError(f"non-numeric field {bad!r}", path, lineno) from None
    return np.array(rows, dtype=np.float64)


def _is_float(v: str) -> bool:
    try:
        float(v)
    except ValueError:
        return False
    return True


def load_matrix_csv(path: str | os.PathLike) -> np.ndarray:
    """Read a headerless, comma-separated numeric matrix.

    Raises
    ------
    MatrixParseError
        On an empty file, ragged rows or non-numeric fields; the error carries
        the offending 1-based line number in ``line``.
    """
    text = Path(path).read_text()
    if not text.strip():
        raise MatrixParseError("empty file", path)
    return _parse_csv_strict(text.rstrip("\n"), path)


def format_matrix_csv(m: np.ndarray) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    return "".join(",".join(format(float(v), ".17g") for v in row) + "\n" for row in m)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temporary sibling file, then rename it over ``path``."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        tmp.write_text(text)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def save_matrix_csv(path: str | os.PathLike, m: np.ndarray) -> None:
    """Write ``m`` as headerless CSV with 17 significant digits (exact float64 round trip)."""
    atomic_write_text(path, format_matrix_csv(m))


# ---------------------------------------------------------------------------
# Dataset manifests


def load_manifest(path: str | os.PathLike) -> Dataset:
    """Load a dataset from a JSON manifest ``{"x": ..., "y": ..., "sigma"?: ..., "e"?: ...}``.

    Relative paths are resolved against the manifest's directory. Optional
    ``b_star`` and ``s`` keys populate the ground truth as well.
    """
    path = Path(path)
    spec = json.loads(path.read_text())
    return dataset_from_paths(
        {k: v for k, v in spec.items() if isinstance(v, str)}, base=path.parent
    )


def dataset_from_paths(paths: dict[str, Any], base: str | os.PathLike | None = None) -> Dataset:
    missing = [k for k in ("x", "y") if not paths.get(k)]
    if missing:
        raise ValueError(f"dataset requires paths for {', '.join(missing)}")

    def read(key):
        value = paths.get(key)
        if not value:
            return None
        p = Path(value)
        if base is not None and not p.is_absolute():
            p = Path(base) / p
        return load_matrix_csv(p)

    truth_parts = {k: read(k) for k in ("e", "b_star", "s")}
    truth = Truth(**truth_parts) if any(v is not None for v in truth_parts.values()) else None
    return Dataset(x=read("x"), y=read("y"), sigma=read("sigma"), truth=truth)


# ---------------------------------------------------------------------------
# JSON


def _to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return format(obj, ".17g") if np.isfinite(obj) else "null"
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(k)}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[" + pad + ("," + pad).join(_encode(v, indent, level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits, NaN as null."""
    return _encode(_to_jsonable(obj), indent, 0) + "\n"
