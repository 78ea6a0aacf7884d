import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import rand_basis
from reprocs.linalg import (
    BasisMatrix,
    BudgetExceededError,
    SingularityError,
    dif,
    eigensplit_from_samples,
    eigenvectors_above,
    kappa_s,
    projected_ls,
    ric_delta,
)


def brute_kappa(P, s):
    n = P.shape[0]
    return max(np.linalg.norm(P[list(T)], 2) for T in itertools.combinations(range(n), s))


# -- BasisMatrix ------------------------------------------------------------

def test_basis_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        BasisMatrix(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_basis_empty_and_readonly():
    B = BasisMatrix.empty(5)
    assert B.shape == (5, 0)
    P = BasisMatrix(np.eye(3)[:, :2])
    with pytest.raises(ValueError):
        P.data[0, 0] = 2.0


def test_basis_more_columns_than_rows():
    with pytest.raises(ValueError):
        BasisMatrix(np.ones((2, 3)))


# -- dif ---------------------------------------------------------------------

def test_dif_identity(rng):
    P = rand_basis(rng, 7, 3)
    assert dif(P, P) < 1e-12


def test_dif_orthogonal_lines():
    assert dif(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0)


def test_dif_planar_rotation():
    th = math.pi / 6
    assert dif(np.array([math.cos(th), math.sin(th)]), np.array([1.0, 0.0])) == pytest.approx(0.5, abs=1e-12)


def test_dif_dimension_mismatch():
    with pytest.raises(ValueError):
        dif(np.eye(3)[:, :1], np.eye(4)[:, :1])


def test_dif_symmetric_same_rank(rng):
    for _ in range(50):
        P, Q = rand_basis(rng, 9, 3), rand_basis(rng, 9, 3)
        assert abs(dif(P, Q) - dif(Q, P)) < 1e-10


# -- kappa_s -----------------------------------------------------------------

def test_kappa_coordinate_direction():
    e = np.eye(6)[:, [2]]
    for s in (1, 2, 4):
        assert kappa_s(e, s, "exact") == pytest.approx(1.0)


def test_kappa_flat_vector():
    assert kappa_s(0.5 * np.ones((4, 1)), 1, "exact") == pytest.approx(0.5)


def test_kappa_exact_matches_brute_force(rng):
    P = rand_basis(rng, 6, 2)
    assert kappa_s(P, 2, "exact") == pytest.approx(brute_kappa(P, 2), abs=1e-12)


def test_kappa_bound_dominates_exact(rng):
    for _ in range(30):
        n, r = rng.integers(4, 10), rng.integers(1, 4)
        P = rand_basis(rng, n, r)
        s = int(rng.integers(1, 4))
        ex, bd = kappa_s(P, s, "exact"), kappa_s(P, s, "bound")
        assert ex <= bd + 1e-12
        if s == 1:
            assert ex == pytest.approx(bd, abs=1e-14)


def test_kappa_orthogonal_pieces(rng):
    for _ in range(30):
        P = rand_basis(rng, 10, 4)
        P1, P2 = P[:, :2], P[:, 2:]
        s = 3
        assert kappa_s(P, s, "exact") ** 2 <= kappa_s(P1, s, "exact") ** 2 + kappa_s(P2, s, "exact") ** 2 + 1e-12


def test_kappa_budget():
    with pytest.raises(BudgetExceededError):
        kappa_s(np.full((40, 1), 1 / math.sqrt(40)), 10, "exact", budget=1000)


# -- ric_delta ---------------------------------------------------------------

def test_ric_empty_basis():
    assert ric_delta(np.zeros((5, 0)), 2) == 0.0


def test_ric_single_coordinate():
    assert ric_delta(np.eye(4)[:, [0]], 1) == pytest.approx(1.0)


def test_ric_equals_kappa_squared_random(rng):
    P = rand_basis(rng, 8, 2)
    assert ric_delta(P, 2) == pytest.approx(brute_kappa(P, 2) ** 2, abs=1e-10)


def test_ric_kappa_identity_200_instances():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(3, 13))
        r = int(rng.integers(1, min(4, n - 1) + 1))
        s = int(rng.integers(1, min(3, n) + 1))
        P = rand_basis(rng, n, r)
        worst = max(worst, abs(ric_delta(P, s) - kappa_s(P, s, "exact") ** 2))
    assert worst <= 1e-10


# -- eigen splits ------------------------------------------------------------

def test_eigen_diagonal():
    sp = eigenvectors_above(np.diag([3.0, 1.0, 0.1]), 0.5)
    assert np.allclose(sp.eigenvalues_kept, [3.0, 1.0])
    assert dif(sp.basis, np.eye(3)[:, :2]) < 1e-12
    assert np.allclose(sp.eigenvalues_dropped, [0.1])


def test_eigen_zero_matrix():
    assert eigenvectors_above(np.zeros((4, 4)), 0.1).rank == 0


def test_eigen_known_factors(rng):
    Q = rand_basis(rng, 2, 2)
    M = Q @ np.diag([5.0, 0.4]) @ Q.T
    sp = eigenvectors_above(M, 1.0)
    assert sp.rank == 1
    assert dif(sp.basis, Q[:, :1]) <= 1e-8


def test_eigen_tie_at_threshold_kept():
    sp = eigenvectors_above(np.diag([1.0, 2.0, 0.5]), 1.0)
    assert sp.rank == 2


def test_eigen_rejects_asymmetric():
    with pytest.raises(ValueError):
        eigenvectors_above(np.array([[1.0, 1.0], [0.0, 1.0]]), 0.1)


def test_eigen_reconstruction(rng):
    A = rng.standard_normal((6, 6))
    M = A @ A.T
    sp = eigenvectors_above(M, 2.0)
    B = sp.basis.data
    R = M - B @ np.diag(sp.eigenvalues_kept) @ B.T
    dropped_max = sp.eigenvalues_dropped.max() if sp.eigenvalues_dropped.size else 0.0
    assert np.linalg.norm(R, 2) <= dropped_max + 1e-8
    # all eigenvalues accounted for
    allv = np.sort(np.concatenate([sp.eigenvalues_kept, sp.eigenvalues_dropped]))
    assert np.allclose(allv, np.linalg.eigvalsh(M), atol=1e-8)


def test_samples_split_matches_gram(rng):
    D = rng.standard_normal((8, 20))
    a = eigensplit_from_samples(D, 20, 0.8)
    b = eigenvectors_above(D @ D.T / 20, 0.8)
    assert a.rank == b.rank
    assert np.allclose(a.eigenvalues_kept, b.eigenvalues_kept)
    assert dif(a.basis, b.basis) < 1e-8


def test_samples_split_wide_pads_zeros(rng):
    D = rng.standard_normal((10, 3))
    sp = eigensplit_from_samples(D, 3, 0.0)
    assert sp.eigenvalues_kept.size + sp.eigenvalues_dropped.size == 10


# -- projected_ls ------------------------------------------------------------

def test_pls_identity_projector():
    x = projected_ls(np.zeros((3, 0)), [1], np.array([3.0, 5.0, 7.0]))
    assert np.allclose(x, [0.0, 5.0, 0.0])


def test_pls_empty_support(rng):
    assert np.all(projected_ls(rand_basis(rng, 4, 1), [], rng.standard_normal(4)) == 0)


def test_pls_matches_svd_pinv(rng):
    P = rand_basis(rng, 5, 1)
    y = rng.standard_normal(5)
    T = [0, 3]
    A = (np.eye(5) - P @ P.T)[:, T]
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    xT = Vt.T @ ((U.T @ y) / s)
    x = projected_ls(P, T, y)
    assert np.allclose(x[T], xT, atol=1e-12)
    assert np.all(np.delete(x, T) == 0)


def test_pls_singular():
    P = np.eye(3)[:, [1]]
    with pytest.raises(SingularityError):
        projected_ls(P, [1], np.ones(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(0, 3), st.integers(0, 2**31 - 1))
def test_dif_in_unit_interval(n, r, seed):
    r = min(r, n)
    rng = np.random.default_rng(seed)
    P, Q = rand_basis(rng, n, r), rand_basis(rng, n, max(r, 1))
    assert 0.0 <= dif(P, Q) <= 1.0
