import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csa2sls.errors import SingularMatrixError
from csa2sls.linalg import lstsq_qr, spd_solve, thin_qr


def test_qr_identity():
    f = thin_qr(np.eye(3))
    assert f.rank == 3
    np.testing.assert_allclose(np.abs(f.Q), np.eye(3))
    np.testing.assert_allclose(np.abs(f.R), np.eye(3))


def test_qr_duplicated_column(rng):
    A = rng.standard_normal((10, 3))
    A = np.column_stack([A, A[:, 1]])
    f = thin_qr(A)
    assert f.rank == 3
    assert f.deficient_column() == 3


def test_qr_reconstruction(rng):
    A = rng.standard_normal((50, 4))
    f = thin_qr(A)
    assert np.linalg.norm(A - f.Q @ f.R) / np.linalg.norm(A) < 1e-10
    np.testing.assert_allclose(f.Q.T @ f.Q, np.eye(4), atol=1e-10)


def test_qr_errors():
    with pytest.raises(ValueError):
        thin_qr(np.ones((2, 3)))
    with pytest.raises(ValueError):
        thin_qr(np.array([[1.0], [np.nan]]))


def test_spd_examples():
    np.testing.assert_allclose(spd_solve(2 * np.eye(3), np.eye(3)), 0.5 * np.eye(3))
    np.testing.assert_allclose(spd_solve([[2.0, 1.0], [1.0, 2.0]], [1.0, 1.0]), [1 / 3, 1 / 3], rtol=1e-14)


def test_spd_singular():
    with pytest.raises(SingularMatrixError) as info:
        spd_solve([[1.0, 1.0], [1.0, 1.0]], [1.0, 0.0])
    assert info.value.index == 1
    with pytest.raises(SingularMatrixError) as info:
        spd_solve([[0.0, 0.0], [0.0, 1.0]], [1.0, 0.0])
    assert info.value.index == 0


def test_spd_rejects_asymmetric():
    with pytest.raises(ValueError):
        spd_solve([[2.0, 1.0], [0.0, 2.0]], [1.0, 1.0])


def test_spd_badly_scaled_columns(rng):
    A = rng.standard_normal((100, 3)) * np.array([1e-4, 1.0, 1e5])
    b = rng.standard_normal(100)
    x = spd_solve(A.T @ A, A.T @ b)
    np.testing.assert_allclose(x, np.linalg.lstsq(A, b, rcond=None)[0], rtol=1e-8)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(10, 200), p=st.integers(1, 10), seed=st.integers(0, 2**32 - 1))
def test_normal_equations_match_qr(n, p, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, p))
    b = rng.standard_normal(n)
    x_ne = spd_solve(A.T @ A, A.T @ b)
    x_qr = lstsq_qr(A, b)
    np.testing.assert_allclose(x_ne, x_qr, rtol=1e-8, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(8, 20), p=st.integers(1, 8), r=st.integers(0, 8), seed=st.integers(0, 2**32 - 1))
def test_rank_matches_svd(n, p, r, seed):
    rng = np.random.default_rng(seed)
    r = min(r, p)
    A = rng.standard_normal((n, r)) @ rng.standard_normal((r, p)) if r else np.zeros((n, p))
    s = np.linalg.svd(A, compute_uv=False)
    svd_rank = int(np.sum(s > 1e-10 * max(s.max(), 1e-300))) if s.max() > 0 else 0
    assert thin_qr(A).rank == svd_rank
