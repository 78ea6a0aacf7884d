import itertools

import numpy as np
import pytest

from conftest import rand_basis
from reprocs.linalg import ric_delta
from reprocs.sparse import (
    ProjectedOperator,
    SolverOptions,
    bpdn_solve,
    recover_frame,
    recover_frame_mc,
    threshold_support,
)

cp = pytest.importorskip("cvxpy")


def cvx_l1(Q, y, xi):
    n = y.size
    Phi = np.eye(n) - Q @ Q.T
    v = cp.Variable(n)
    pr = cp.Problem(cp.Minimize(cp.norm1(v)), [cp.norm(y - Phi @ v) <= xi])
    pr.solve(solver="CLARABEL")
    return pr.value


def enum_oracle(Q, y, xi, kmax):
    """Smallest l1 over restricted least-squares points on supports of size <= kmax."""
    n = y.size
    Phi = np.eye(n) - Q @ Q.T
    best = np.inf if np.linalg.norm(y) > xi else 0.0
    for k in range(1, kmax + 1):
        for T in itertools.combinations(range(n), k):
            A = Phi[:, T]
            z = np.linalg.lstsq(A, y, rcond=None)[0]
            if np.linalg.norm(y - A @ z) <= xi + 1e-12:
                best = min(best, np.abs(z).sum())
    return best


# -- operator ----------------------------------------------------------------

def test_operator_idempotent_symmetric(rng):
    op = ProjectedOperator(rand_basis(rng, 20, 3))
    for _ in range(10):
        v, w = rng.standard_normal(20), rng.standard_normal(20)
        pv = op.matvec(v)
        assert np.linalg.norm(op.matvec(pv) - pv) <= 1e-10 * np.linalg.norm(v)
        assert abs(w @ pv - v @ op.matvec(w)) < 1e-10


# -- bpdn_solve --------------------------------------------------------------

def test_identity_equality_constrained(rng):
    y = rng.standard_normal(9)
    rep = bpdn_solve(ProjectedOperator.identity(9), y, 0.0)
    assert rep.converged
    assert np.allclose(rep.solution, y, atol=1e-9)


def test_large_xi_gives_zero(rng):
    y = rng.standard_normal(7)
    rep = bpdn_solve(ProjectedOperator.identity(7), y, np.linalg.norm(y) * 1.01)
    assert rep.converged and np.all(rep.solution == 0)


def test_negative_xi_rejected():
    with pytest.raises(ValueError):
        bpdn_solve(ProjectedOperator.identity(3), np.ones(3), -1.0)


def test_infeasible_range_component(rng):
    Q = rand_basis(rng, 6, 1)
    with pytest.raises(ValueError):
        bpdn_solve(ProjectedOperator(Q), 5 * Q[:, 0], 0.1)


def test_enumeration_oracle_two_sparse():
    rng = np.random.default_rng(3)
    for _ in range(10):
        Q = rand_basis(rng, 6, 1)
        x = np.zeros(6)
        T = rng.choice(6, 2, replace=False)
        x[T] = rng.choice([-3.0, 3.0], 2)
        op = ProjectedOperator(Q)
        y = op.matvec(x)
        rep = bpdn_solve(op, y, 1e-9)
        assert rep.converged
        assert rep.l1_value == pytest.approx(enum_oracle(Q, y, 1e-9, 2), abs=1e-6)


@pytest.mark.parametrize("xi", [0.0, 0.05, 0.5, 2.0])
def test_matches_cvxpy(xi):
    rng = np.random.default_rng(int(xi * 100) + 1)
    for _ in range(6):
        n = int(rng.choice([30, 64]))
        r = int(rng.integers(0, 8))
        s = int(rng.integers(1, 10))
        Q = rand_basis(rng, n, r)
        op = ProjectedOperator(Q)
        x = np.zeros(n)
        x[rng.choice(n, s, replace=False)] = rng.uniform(2, 6, s)
        y = op.matvec(x + 0.01 * rng.standard_normal(n))
        rep = bpdn_solve(op, y, xi)
        ref = cvx_l1(Q, y, xi)
        assert rep.converged
        assert rep.residual_norm <= xi * (1 + 1e-6) + 1e-9
        assert abs(rep.l1_value - ref) <= 1e-5 * max(ref, 1.0)


def test_report_certificate(rng):
    Q = rand_basis(rng, 40, 4)
    op = ProjectedOperator(Q)
    x = np.zeros(40)
    x[:5] = 3.0
    rep = bpdn_solve(op, op.matvec(x) + 0.01 * op.matvec(rng.standard_normal(40)), 0.2)
    assert rep.converged
    assert 0 <= rep.duality_gap <= 1e-6 * rep.l1_value
    assert rep.l1_value == pytest.approx(np.abs(rep.solution).sum())


def test_nonconvergence_flagged(rng):
    Q = rand_basis(rng, 64, 5)
    op = ProjectedOperator(Q)
    x = np.zeros(64)
    x[rng.choice(64, 12, replace=False)] = rng.uniform(2, 6, 12)
    rep = bpdn_solve(op, op.matvec(x), 0.3, SolverOptions(max_iters=1, newton_iters=1, opt_tol=1e-12))
    assert not rep.converged


def test_deterministic(rng):
    Q = rand_basis(rng, 30, 3)
    op = ProjectedOperator(Q)
    y = op.matvec(rng.standard_normal(30))
    a, b = bpdn_solve(op, y, 0.4), bpdn_solve(op, y, 0.4)
    assert np.array_equal(a.solution, b.solution)


# -- thresholding / frame recovery --------------------------------------------

def test_threshold_examples():
    assert list(threshold_support(np.array([10.0, 0.1, -8.0]), 7.0)) == [0, 2]
    assert threshold_support(np.zeros(4), 1.0).size == 0
    assert list(threshold_support(np.array([7.0, 7.0 + 1e-12]), 7.0)) == [1]


def test_recover_frame_clean(rng):
    Q = rand_basis(rng, 12, 2)
    m = Q @ rng.standard_normal(2)
    est = recover_frame(ProjectedOperator(Q), m, 0.1, 0.7)
    assert est.support.size == 0
    assert np.all(est.x_hat == 0)
    assert np.allclose(est.l_hat, m)


def test_recover_frame_benchmark_style():
    rng = np.random.default_rng(11)
    n, r, s = 256, 10, 20
    P = rand_basis(rng, n, r)
    l = P @ rng.uniform(-5, 5, r)
    T = np.arange(40, 60)
    x = np.zeros(n)
    x[T] = rng.uniform(2, 6, s)
    m = l + x
    est = recover_frame(ProjectedOperator(P), m, 0.1, 1.0)
    assert np.array_equal(est.support, T)
    assert np.array_equal(est.l_hat, m - est.x_hat)
    assert np.allclose(est.l_hat, l, atol=1e-8)


def test_recover_frame_mc(rng):
    Q = rand_basis(rng, 15, 2)
    l = Q @ rng.standard_normal(2)
    T = np.array([3, 7])
    m = l.copy()
    m[T] = 0.0
    est = recover_frame_mc(ProjectedOperator(Q), m, T)
    assert np.array_equal(est.support, T)
    assert np.allclose(est.l_hat, l, atol=1e-10)
    assert est.report is None


# -- property suites ---------------------------------------------------------

def _cs_instances(count, seed):
    """Small instances with delta_2s(Phi) < sqrt(2) - 1, x_min > 14 xi and ||b|| <= xi."""
    rng = np.random.default_rng(seed)
    made = 0
    while made < count:
        n = int(rng.integers(16, 33))
        r = int(rng.integers(1, 3))
        s = int(rng.integers(1, 3))
        Q = rand_basis(rng, n, r)
        if ric_delta(Q, 2 * s) >= np.sqrt(2) - 1:
            continue
        xi = float(rng.uniform(0.01, 0.2))
        T = np.sort(rng.choice(n, s, replace=False))
        x = np.zeros(n)
        x[T] = rng.choice([-1.0, 1.0], s) * rng.uniform(14 * xi * 1.01, 14 * xi + 3, s)
        Phi = np.eye(n) - Q @ Q.T
        b = Phi @ rng.standard_normal(n)
        b *= rng.uniform(0, 1) * xi / max(np.linalg.norm(b), 1e-300)
        made += 1
        yield Q, x, T, b, xi, Phi


def test_cs_error_and_exact_support_100_instances():
    worst_ratio = 0.0
    misses = 0
    for Q, x, T, b, xi, Phi in _cs_instances(100, 2024):
        y = Phi @ x + b
        rep = bpdn_solve(ProjectedOperator(Q), y, xi)
        assert rep.converged
        err = np.linalg.norm(rep.solution - x)
        worst_ratio = max(worst_ratio, err / xi)
        omega = 7 * xi
        assert 7 * xi <= omega <= np.abs(x[T]).min() - 7 * xi
        if not np.array_equal(threshold_support(rep.solution, omega), T):
            misses += 1
    assert worst_ratio <= 7.0
    assert misses == 0


def test_error_identity_when_support_exact():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(50):
        n, r = 40, 3
        P = rand_basis(rng, n, r)
        Ph = np.linalg.qr(P + 1e-3 * rng.standard_normal((n, r)))[0]
        l = P @ rng.uniform(-5, 5, r)
        T = np.sort(rng.choice(n, 3, replace=False))
        x = np.zeros(n)
        x[T] = rng.uniform(2, 6, 3)
        est = recover_frame(ProjectedOperator(Ph), l + x, 0.1, 1.0)
        if not np.array_equal(est.support, T):
            continue
        Phi = np.eye(n) - Ph @ Ph.T
        PT = Phi[:, T]
        e_pred = np.zeros(n)
        e_pred[T] = np.linalg.solve(PT.T @ PT, PT.T @ (Phi @ l))
        assert np.linalg.norm((est.x_hat - x) - e_pred) <= 1e-8
        assert np.allclose(est.x_hat - x, l - est.l_hat, atol=1e-12)
        checked += 1
    assert checked >= 40
