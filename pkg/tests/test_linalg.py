import numpy as np
import pytest
from hypothesis import given, strategies as st

from relaycast.linalg import NumericalError, cholesky, hermitian_eig, is_hermitian, solve_linear


def _random_hermitian(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return A + A.conj().T


def test_eig_identity():
    lam, U = hermitian_eig(np.eye(2))
    np.testing.assert_allclose(lam, [1.0, 1.0])
    np.testing.assert_allclose(U.conj().T @ U, np.eye(2), atol=1e-12)


def test_eig_diagonal():
    lam, U = hermitian_eig(np.diag([3.0, -1.0]))
    np.testing.assert_allclose(lam, [3.0, -1.0])
    np.testing.assert_allclose(np.abs(U), np.eye(2), atol=1e-12)


@given(st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_eig_reconstruction(n, seed):
    rng = np.random.default_rng(seed)
    H = _random_hermitian(rng, n)
    lam, U = hermitian_eig(H)
    assert np.all(np.diff(lam) <= 0)
    scale = np.abs(H).max()
    assert np.abs(U @ np.diag(lam) @ U.conj().T - H).max() <= 1e-9 * scale
    assert np.abs(U.conj().T @ U - np.eye(n)).max() <= 1e-9


def test_eig_rejects_non_hermitian():
    with pytest.raises(ValueError):
        hermitian_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_cholesky_identity_and_diagonal():
    np.testing.assert_allclose(cholesky(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(cholesky(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


@given(st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_cholesky_reconstruction(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    P = A.conj().T @ A + np.eye(n)
    L = cholesky(P)
    assert np.allclose(L, np.tril(L))
    assert np.abs(L @ L.conj().T - P).max() <= 1e-10 * np.abs(P).max()


@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_cholesky_recovers_factor_up_to_phase(n, seed):
    rng = np.random.default_rng(seed)
    L = np.tril(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)), -1)
    L += np.diag(rng.uniform(0.5, 2.0, n))
    L2 = cholesky(L @ L.conj().T)
    # positive real diagonals fix the column phases, so the factors agree
    np.testing.assert_allclose(L2, L, atol=1e-9 * np.abs(L).max())


def test_cholesky_indefinite_reports_pivot():
    with pytest.raises(NumericalError) as err:
        cholesky(np.diag([1.0, -2.0, 3.0]))
    assert err.value.pivot == 1
    with pytest.raises(NumericalError) as err:
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert err.value.pivot == 1


def test_solve_trivial():
    b = np.array([1.0 + 2j, 3.0])
    np.testing.assert_allclose(solve_linear(np.eye(2), b), b)
    np.testing.assert_allclose(solve_linear(np.diag([2.0, 4.0]), [2.0, 4.0]), [1.0, 1.0])


@given(st.integers(0, 2**32 - 1))
def test_solve_residual(seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    A = Q @ np.diag(rng.uniform(1.0, 10.0, 8)) @ Q.conj().T
    b = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    x = solve_linear(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-9 * np.linalg.norm(b)


def test_solve_singular_reports_condition():
    with pytest.raises(NumericalError) as err:
        solve_linear(np.array([[1.0, 1.0], [1.0, 1.0]]), [1.0, 2.0])
    assert err.value.condition > 1e12
    with pytest.raises(NumericalError):
        solve_linear(np.diag([1.0, 1e-14]), [1.0, 1.0])


def test_is_hermitian_tolerance():
    H = np.array([[1.0, 1j], [-1j, 2.0]])
    assert is_hermitian(H)
    assert not is_hermitian(H + np.array([[0, 1e-6], [0, 0]]))
