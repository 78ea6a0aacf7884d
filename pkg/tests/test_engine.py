import math
import warnings

import numpy as np
import pytest

from conftest import rand_basis
from reprocs.engine import (
    DETECT,
    PPCA,
    EngineParams,
    ReProCS,
    ReProCSState,
    detect_or_ppca,
    perturbed_basis,
    theorem_K,
    theorem_params,
    train_init,
    zeta_upper_bound,
)
from reprocs.linalg import dif
from reprocs.models import SignalModelConfig, SupportModelConfig, make_scenario


def fresh_state(P, alpha, lam=1.0):
    n = P.shape[0]
    return ReProCSState(P_star=P.copy(), P_new=np.zeros((n, 0)), lambda_train_minus=lam, t_train=0, t=0,
                        buffer=np.zeros((n, alpha)))


# -- train_init --------------------------------------------------------------

def test_train_rank_one():
    v = np.array([3.0, 4.0, 0.0]) / 5.0
    P, lam = train_init(np.tile(v[:, None], (1, 10)))
    assert P.r == 1 and dif(P, v) < 1e-12
    assert lam == pytest.approx(1.0)


def test_train_noiseless_exact(rng):
    P0 = rand_basis(rng, 20, 3)
    M = P0 @ rng.standard_normal((3, 50))
    P, _ = train_init(M)
    assert P.r == 3 and dif(P, P0) <= 1e-8


def test_train_fixed_rank_eigenvalue(rng):
    M = np.diag([3.0, 2.0, 1.0, 0.5]) @ rng.standard_normal((4, 200))
    P, lam = train_init(M, "fixed_rank", 2)
    w = np.sort(np.linalg.eigvalsh(M @ M.T / 200))[::-1]
    assert P.r == 2 and lam == pytest.approx(w[1], rel=1e-10)


def test_train_energy_fraction(rng):
    M = np.diag([10.0, 1.0, 0.01]) @ rng.standard_normal((3, 500))
    P, _ = train_init(M, "energy_fraction", p=0.9)
    assert P.r == 1


def test_train_errors():
    with pytest.raises(ValueError):
        train_init(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        train_init(np.ones((3, 4)), "fixed_rank", 5)
    with pytest.raises(ValueError):
        train_init(np.ones((3, 4)), "bogus")


# -- step --------------------------------------------------------------------

def test_step_in_range_frame(rng):
    P = rand_basis(rng, 30, 3)
    eng = ReProCS(P, 1.0, EngineParams(alpha=10, K=2, xi=0.1, omega=0.7))
    m = P @ rng.standard_normal(3)
    rec = eng.step(m)
    assert rec.t == 1 and rec.support.size == 0
    assert np.all(rec.x_hat == 0) and np.allclose(rec.l_hat, m)


def test_step_mc_empty_support(rng):
    P = rand_basis(rng, 30, 3)
    eng = ReProCS(P, 1.0, EngineParams(alpha=10, K=2))
    m = rng.standard_normal(30)
    rec = eng.step(m, known_support=np.array([], dtype=int))
    assert np.array_equal(rec.l_hat, m)


def test_step_identity_lhat_plus_xhat(rng):
    P = rand_basis(rng, 40, 2)
    eng = ReProCS(P, 1.0, EngineParams(alpha=5, K=1, xi=0.1, omega=1.0))
    x = np.zeros(40)
    x[[3, 9]] = [4.0, 5.0]
    m = P @ rng.standard_normal(2) + x
    rec = eng.step(m)
    assert np.array_equal(rec.l_hat, m - rec.x_hat)
    assert list(rec.support) == [3, 9]


def test_step_rejects_bad_shape(rng):
    eng = ReProCS(rand_basis(rng, 5, 1), 1.0, EngineParams(alpha=2, K=1))
    with pytest.raises(ValueError):
        eng.step(np.zeros(4))


def test_singular_recorded_or_halted():
    P = np.eye(4)[:, [0]]
    eng = ReProCS(P, 1.0, EngineParams(alpha=3, K=1))
    rec = eng.step(np.zeros(4), known_support=[0])
    assert rec.error and "singular" in rec.error
    eng = ReProCS(P, 1.0, EngineParams(alpha=3, K=1, halt_on_error=True))
    with pytest.raises(RuntimeError):
        eng.step(np.zeros(4), known_support=[0])


def test_transitions_only_at_window_ends(rng):
    n, alpha = 20, 5
    P = rand_basis(rng, n, 4)
    eng = ReProCS(P[:, :2], 1.0, EngineParams(alpha=alpha, K=2), t_train=3)
    events = {}
    for _ in range(40):
        rec = eng.step(P @ (3 * rng.standard_normal(4)), known_support=[])
        if rec.event not in (None, "none"):
            events[rec.t] = rec.event
    assert all((t - 3) % alpha == 0 for t in events)
    assert events[8] == "detect" and events[13] == "ppca" and events[18] == "ppca_final"


# -- detect_or_ppca ----------------------------------------------------------

def test_no_detection_when_in_range(rng):
    P = rand_basis(rng, 15, 3)
    st = fresh_state(P, 20)
    ev, _ = detect_or_ppca(st, P @ rng.standard_normal((3, 20)), EngineParams(alpha=20, K=3))
    assert ev == "none" and st.phase == DETECT and st.j_hat == 0


def test_detect_then_ppca_matches_direct_eig(rng):
    n, alpha = 20, 200
    B = rand_basis(rng, n, 3)
    P, p_new = B[:, :2], B[:, 2]
    st = fresh_state(P, alpha, lam=1.0)  # thresh 0.5
    a = rng.choice([-1.0, 1.0], alpha) * math.sqrt(1.5)  # sample variance 1.5 > 2 * thresh
    D = np.outer(p_new, a) + P @ rng.standard_normal((2, alpha))
    prm = EngineParams(alpha=alpha, K=2)
    ev, _ = detect_or_ppca(st, D, prm)
    assert ev == "detect" and st.phase == PPCA and st.j_hat == 1 and st.k == 0
    ev, r = detect_or_ppca(st, D, prm)
    assert ev == "ppca" and r == 1 and st.r_hat[(1, 1)] == 1
    Dp = D - P @ (P.T @ D)
    w, V = np.linalg.eigh(Dp @ Dp.T / alpha)
    assert dif(st.P_new, V[:, w >= 0.5]) < 1e-8
    assert np.abs(st.P_star.T @ st.P_new).max() <= 1e-8
    ev, r = detect_or_ppca(st, D, prm)
    assert ev == "ppca_final" and st.phase == DETECT
    assert st.P_star.shape[1] == 3 and st.P_new.shape[1] == 0
    assert np.abs(st.P_star.T @ st.P_star - np.eye(3)).max() <= 1e-8


def test_empty_ppca_split_counts():
    P = np.eye(6)[:, :2]
    st = fresh_state(P, 4)
    st.phase, st.j_hat = PPCA, 1
    ev, r = detect_or_ppca(st, np.zeros((6, 4)), EngineParams(alpha=4, K=1))
    assert ev == "ppca_final" and r == 0 and st.P_star.shape[1] == 2


def test_buffer_length_checked():
    st = fresh_state(np.eye(3)[:, :1], 4)
    with pytest.raises(ValueError):
        detect_or_ppca(st, np.zeros((3, 3)), EngineParams(alpha=4, K=1))


# -- theorem parameters ------------------------------------------------------

def test_theorem_K_example():
    assert theorem_K(2, 1e-6) == 81
    assert math.ceil(math.log(3.2e-7) / math.log(0.83)) == 81


def _scenario():
    sig = SignalModelConfig(n=64, t_max=400, r0=3, change_times=(200,), r_new=1, t_train=20)
    sup = SupportModelConfig("model3", n=64, s=3, rho=1, beta=3, alpha=100)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return make_scenario(sig, sup, "rpca", 0)


def test_theorem_xi_omega():
    tr = _scenario()
    zb = zeta_upper_bound(4, 1.0, float(tr.signal.Lam.max()), tr.signal.gamma())
    tp = theorem_params(tr, zb)
    assert tp.omega == pytest.approx(7 * tp.xi)
    tiny = theorem_params(tr, 1e-30)
    assert tiny.xi == pytest.approx(tr.signal.gamma_new(None), rel=1e-10)
    with pytest.raises(ValueError):
        theorem_params(tr, 10 * zb)


# -- streams -----------------------------------------------------------------

def test_noiseless_static_stream(rng):
    n, r, T = 30, 3, 300
    P = rand_basis(rng, n, r)
    L = P @ rng.uniform(-5, 5, (r, T))
    eng = ReProCS(P, 1.0, EngineParams(alpha=50, K=2, xi=0.1, omega=1.0))
    for t in range(T):
        rec = eng.step(L[:, t])
        assert np.allclose(rec.l_hat, L[:, t], atol=1e-12)
        assert rec.event in (None, "none")
        assert dif(eng.P_hat, P) < 1e-14
    assert eng.state.j_hat == 0


def test_no_false_detection_10k_frames():
    sig = SignalModelConfig(n=64, t_max=10_100, r0=4, change_times=(), t_train=100)
    sup = SupportModelConfig("model3", n=64, s=4, rho=2, beta=5, alpha=400, dwell=4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tr = make_scenario(sig, sup, "rpca", 1)
    P0 = perturbed_basis(tr.signal.basis_at(1), 1e-8, np.random.default_rng(0))
    eng = ReProCS(P0, 1.0, EngineParams(alpha=400, K=3, xi=0.1, omega=1.0), t_train=100)
    for rec in eng.run(tr.M[:, 100:]):
        assert rec.event in (None, "none")
    assert eng.state.t == 10_100 and not eng.state.t_hat


def test_checkpoint_resume_matches(tmp_path, rng):
    n = 20
    B = rand_basis(rng, n, 3)
    A = rng.standard_normal((3, 60)) * 2
    A[2, :25] = 0
    M = B @ A
    prm = EngineParams(alpha=5, K=2)
    full = ReProCS(B[:, :2], 1.0, prm)
    recs = [full.step(M[:, t], known_support=[]) for t in range(60)]
    part = ReProCS(B[:, :2], 1.0, prm)
    for t in range(32):
        part.step(M[:, t], known_support=[])
    part.state.save(tmp_path)
    resumed = ReProCS.from_state(ReProCSState.load(tmp_path), prm)
    for t in range(32, 60):
        rec = resumed.step(M[:, t], known_support=[])
        assert np.allclose(rec.l_hat, recs[t].l_hat, atol=1e-12)
    assert resumed.state.t_hat == full.state.t_hat and resumed.state.r_hat == full.state.r_hat
    assert dif(resumed.P_hat, full.P_hat) < 1e-12
