import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mtcov.data import (
    CovarianceEstimate, Dataset, MatrixParseError, Method, PenaltyPair, Truth, dumps_json,
    load_manifest, load_matrix_csv, save_matrix_csv, validate_dataset,
)


def test_load_simple(tmp_path):
    f = tmp_path / "m.csv"
    f.write_text("1,2\n3,4\n")
    np.testing.assert_array_equal(load_matrix_csv(f), [[1, 2], [3, 4]])


def test_load_single_entry(tmp_path):
    f = tmp_path / "m.csv"
    f.write_text("0\n")
    m = load_matrix_csv(f)
    assert m.shape == (1, 1) and m[0, 0] == 0


def test_round_trip_random(tmp_path, rng):
    m = rng.standard_normal((5, 3)) * 10.0 ** rng.integers(-8, 8, size=(5, 3))
    save_matrix_csv(tmp_path / "m.csv", m)
    np.testing.assert_allclose(load_matrix_csv(tmp_path / "m.csv"), m, rtol=1e-12, atol=0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_round_trip_property(tmp_path_factory, m):
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    save_matrix_csv(path, m)
    # 17 significant digits reproduce every float64 exactly
    np.testing.assert_array_equal(load_matrix_csv(path), m)


@pytest.mark.parametrize(
    "text, line",
    [("1,2\n3\n", 2), ("1,2\n3,4\n5,6,7\n", 3), ("1,a\n", 1), ("1,2\n,4\n", 2)],
)
def test_parse_errors_carry_line(tmp_path, text, line):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(MatrixParseError) as exc:
        load_matrix_csv(f)
    assert exc.value.line == line
    assert f"bad.csv:{line}" in str(exc.value)


def test_empty_file(tmp_path):
    f = tmp_path / "empty.csv"
    f.write_text("")
    with pytest.raises(MatrixParseError, match="empty"):
        load_matrix_csv(f)


def _dataset(rng, n=10, p=3, t=2, **kw):
    return Dataset(x=rng.standard_normal((n, p)), y=rng.standard_normal((kw.pop("ny", n), t)), **kw)


def test_validate_conforming(rng):
    assert validate_dataset(_dataset(rng, sigma=np.eye(3) + 0.1)) == []


def test_validate_row_mismatch(rng):
    report = validate_dataset(_dataset(rng, ny=9))
    assert any("row-count mismatch" in r for r in report)


def test_validate_non_pd_sigma(rng):
    sigma = np.diag([1.0, 1.0, -0.1])
    report = validate_dataset(_dataset(rng, sigma=sigma))
    assert any("not positive definite" in r for r in report)


def test_validate_truth(rng):
    s = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
    report = validate_dataset(_dataset(rng, truth=Truth(s=s)))
    assert any("truth.s" in r for r in report)


def test_validate_is_pure(rng):
    ds = _dataset(rng, ny=9, sigma=-np.eye(3))
    first = validate_dataset(ds)
    assert validate_dataset(ds) == first
    assert len(first) == 2


def test_dataset_is_read_only(rng):
    ds = _dataset(rng)
    with pytest.raises(ValueError):
        ds.x[0, 0] = 1.0


def test_penalty_pair():
    pen = PenaltyPair.from_alpha(0.1, 0.9)
    assert pen.lam == pytest.approx(0.09, abs=1e-15)
    assert pen.tau == pytest.approx(0.01, abs=1e-15)
    with pytest.raises(ValueError):
        PenaltyPair(0.0, 0.0)
    assert PenaltyPair(0.0, 0.0, allow_zero=True).lam == 0
    with pytest.raises(ValueError):
        PenaltyPair(-1.0, 0.0)
    with pytest.raises(ValueError):
        PenaltyPair.from_alpha(1.0, 0.0)


def test_covariance_estimate_symmetry():
    with pytest.raises(ValueError, match="symmetric"):
        CovarianceEstimate(np.array([[1.0, 0.0], [1.0, 1.0]]), Method.NAIVE)
    est = CovarianceEstimate(np.array([[1.0, 2.0], [2.0, 1.0]]), "mm")
    assert est.method is Method.MM
    clipped = est.project_psd().s_hat
    assert np.linalg.eigvalsh(clipped).min() >= -1e-12


def test_manifest(tmp_path, rng):
    x, y = rng.standard_normal((4, 2)), rng.standard_normal((4, 3))
    save_matrix_csv(tmp_path / "x.csv", x)
    save_matrix_csv(tmp_path / "y.csv", y)
    save_matrix_csv(tmp_path / "sigma.csv", np.eye(2))
    (tmp_path / "m.json").write_text(json.dumps({"x": "x.csv", "y": "y.csv", "sigma": "sigma.csv"}))
    ds = load_manifest(tmp_path / "m.json")
    np.testing.assert_array_equal(ds.y, y)
    assert ds.truth is None and ds.sigma.shape == (2, 2)


def test_dumps_json_is_deterministic():
    obj = {"b": 0.1, "a": [1, 2.5, float("nan")], "m": np.eye(2)}
    text = dumps_json(obj)
    assert text == dumps_json(dict(reversed(list(obj.items()))))
    back = json.loads(text)
    assert list(back) == ["a", "b", "m"]
    assert back["b"] == 0.1 and back["a"][2] is None
    assert "0.10000000000000001" in text
