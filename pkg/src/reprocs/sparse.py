"""Noisy l1 recovery against a projected measurement operator.

The sparse-recovery step solves::

    minimize ||x||_1   subject to   ||y - Phi x||_2 <= xi,      Phi = I - Q Q'

for a basis matrix ``Q``.  Because ``Phi`` is an orthogonal projector the
penalised problem ``1/2 ||y - Phi x||^2 + lam ||x||_1`` collapses to a smooth
Huber regression over the ``r`` coefficients ``c`` of ``range(Q)``::

    min_c  sum_i huber_lam((Phi y + Q c)_i),     x = soft(Phi y + Q c, lam)

which is solved by a damped semismooth Newton iteration with exact line
search.  An outer safeguarded secant search on ``lam`` hits the residual
constraint, and every iterate yields a dual-feasible point, so the reported
gap is a certified bound on l1 suboptimality.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from .linalg import BasisMatrix, as_array, projected_ls

log = logging.getLogger(__name__)


class ProjectedOperator:
    """``Phi = I - P P'`` applied implicitly from the basis ``P``."""

    __slots__ = ("basis",)

    def __init__(self, basis):
        Q = np.ascontiguousarray(as_array(basis))
        self.basis = Q

    @classmethod
    def identity(cls, n: int) -> "ProjectedOperator":
        return cls(np.zeros((n, 0)))

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def r(self) -> int:
        return self.basis.shape[1]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        Q = self.basis
        if Q.shape[1] == 0:
            return np.array(v, dtype=float)
        return v - Q @ (Q.T @ v)

    rmatvec = matvec  # symmetric

    def __matmul__(self, v):
        return self.matvec(np.asarray(v, dtype=float))


@dataclass
class SolverOptions:
    max_iters: int = 100        # outer iterations on the penalty
    newton_iters: int = 60      # inner iterations per penalty value
    feas_tol: float = 1e-6
    opt_tol: float = 1e-6


@dataclass
class L1SolveReport:
    solution: np.ndarray
    residual_norm: float
    l1_value: float
    iterations: int
    converged: bool
    duality_gap: float
    penalty: float = float("nan")


def _huber_value(z: np.ndarray, lam: float) -> float:
    a = np.abs(z)
    return float(np.sum(np.where(a <= lam, 0.5 * z * z, lam * a - 0.5 * lam * lam)))


def _piece(z: np.ndarray, lam: float) -> np.ndarray:
    """-1, 0 or +1 per coordinate: clipped low, quadratic, clipped high."""
    return np.where(z > lam, 1, np.where(z < -lam, -1, 0))


def _line_search(z: np.ndarray, w: np.ndarray, lam: float) -> float:
    """Exact minimiser over t >= 0 of ``sum huber(z + t w)``.

    The derivative is piecewise linear and nondecreasing in ``t``; walk its
    breakpoints in order and solve on the segment where it changes sign.
    """
    # derivative at t: sum w_i * clip(z_i + t w_i)  =  a + b t
    inside = np.abs(z) <= lam
    a = float(np.dot(w[inside], z[inside]) + lam * np.dot(w[~inside], np.sign(z[~inside])))
    b = float(np.dot(w[inside], w[inside]))
    if a >= 0:
        return 0.0
    nz = w != 0
    wn, zn = w[nz], z[nz]
    # each coordinate enters the quadratic zone at t_in and leaves at t_out
    t1 = (-lam - zn) / wn
    t2 = (lam - zn) / wn
    t_in = np.minimum(t1, t2)
    t_out = np.maximum(t1, t2)
    sgn_after = np.sign(wn)  # sign of z + t w once it has left the zone
    # contributions switch as follows:
    #   entering at t_in (>0):  clipped at -sgn*lam  ->  quadratic
    #   leaving at t_out (>0):  quadratic            ->  clipped at +sgn*lam
    ev_t, ev_da, ev_db = [], [], []
    m_in = t_in > 0
    if np.any(m_in):
        wi, zi = wn[m_in], zn[m_in]
        ev_t.append(t_in[m_in])
        ev_da.append(wi * zi + lam * np.abs(wi))
        ev_db.append(wi * wi)
    m_out = t_out > 0
    if np.any(m_out):
        wo, zo = wn[m_out], zn[m_out]
        ev_t.append(t_out[m_out])
        ev_da.append(-(wo * zo) + lam * sgn_after[m_out] * wo)
        ev_db.append(-(wo * wo))
    if not ev_t:
        return np.inf if b == 0 else -a / b
    ev_t = np.concatenate(ev_t)
    order = np.argsort(ev_t, kind="stable")
    ev_t = ev_t[order]
    A = a + np.concatenate([[0.0], np.cumsum(np.concatenate(ev_da)[order])])
    B = b + np.concatenate([[0.0], np.cumsum(np.concatenate(ev_db)[order])])
    # derivative at each breakpoint, evaluated with the slope of the segment before it
    left_t = np.concatenate([[0.0], ev_t])
    deriv_end = A[:-1] + B[:-1] * ev_t
    hit = np.nonzero(deriv_end >= 0)[0]
    if hit.size == 0:
        k = ev_t.size
        return np.inf if B[k] <= 0 else max(-A[k] / B[k], left_t[k])
    k = hit[0]
    if B[k] <= 0:
        return float(ev_t[k])
    return float(min(max(-A[k] / B[k], left_t[k]), ev_t[k]))


def _huber_newton(Q, yt, lam, c, iters, tol):
    """Minimise ``sum huber_lam(yt + Q c)`` over ``c``; returns ``(c, z)``."""
    r = Q.shape[1]
    z = yt + Q @ c
    band = lam * (1.0 + 1e-9)
    for _ in range(iters):
        psi = np.clip(z, -lam, lam)
        g = Q.T @ psi
        gnorm = np.linalg.norm(g)
        if gnorm <= tol:
            break
        act = np.abs(z) <= band
        Qa = Q[act]
        H = Qa.T @ Qa
        mu = 1e-10 + 1e-8 * np.trace(H) / r
        H[np.diag_indices(r)] += mu
        try:
            d = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            d = -g
        w = Q @ d
        z1 = z + w
        # the full step is exact when every coordinate stays on the same piece
        if np.any(act) and np.array_equal(_piece(z1, lam), _piece(z, lam)):
            c = c + d
            z = z1
            continue
        t = _line_search(z, w, lam)
        if not np.isfinite(t):
            # unbounded descent cannot happen for a coercive objective; treat as stall
            break
        if t <= 0:
            # Newton direction stalled, fall back to steepest descent
            d = -g
            w = Q @ d
            t = _line_search(z, w, lam)
            if not np.isfinite(t) or t <= 0:
                break
        c = c + t * d
        z = yt + Q @ c
    return c, z


def _solve_exact(Q, yt):
    """``min ||x||_1  s.t.  Phi x = yt``  (least absolute deviations in ``c``).

    Returns ``x`` and a dual vector ``u`` in range(Phi) with ``||u||_inf = 1``
    (``None`` when ``yt = 0``).
    """
    n, r = Q.shape
    if r == 0:
        u = np.sign(yt)
        return yt.copy(), (u if np.any(u) else None)
    # variables [c (free), t >= 0]; minimise sum t with -t <= yt + Q c <= t
    cost = np.concatenate([np.zeros(r), np.ones(n)])
    I = np.eye(n)
    A_ub = np.block([[Q, -I], [-Q, -I]])
    b_ub = np.concatenate([-yt, yt])
    bounds = [(None, None)] * r + [(0, None)] * n
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP solve failed: {res.message}")
    c = res.x[:r]
    x = yt + Q @ c
    # dual certificate: z in range(Phi) from the inequality multipliers
    lam_ub = -res.ineqlin.marginals
    u = lam_ub[:n] - lam_ub[n:]
    u = u - Q @ (Q.T @ u)
    scale = np.max(np.abs(u))
    return x, (u / scale if scale > 0 else None)


def _dual_bound(yt, u, xi_t) -> float:
    """Lower bound on the optimal l1 value from a dual vector ``u`` in range(Phi)."""
    if u is None:
        return 0.0
    return (float(yt @ u) - xi_t * float(np.linalg.norm(u))) / float(np.max(np.abs(u)))


def bpdn_solve(op: ProjectedOperator, y, xi: float, opts: SolverOptions | None = None) -> L1SolveReport:
    """Solve ``min ||x||_1 s.t. ||y - Phi x||_2 <= xi`` for ``Phi = I - P P'``.

    Returns a report whose ``converged`` flag is set only when the returned
    point is feasible to ``feas_tol`` and its l1 value is within a relative
    ``opt_tol`` of a dual lower bound.
    """
    opts = opts or SolverOptions()
    if xi < 0:
        raise ValueError("xi must be non-negative")
    if not isinstance(op, ProjectedOperator):
        op = ProjectedOperator(op)
    Q = op.basis
    y = np.asarray(y, dtype=float)
    n = op.n
    if y.shape != (n,):
        raise ValueError(f"y must have shape ({n},), got {y.shape}")

    cy = Q.T @ y
    yt = y - Q @ cy
    perp2 = float(cy @ cy)
    ynorm = float(np.linalg.norm(y))
    if perp2 > (xi * (1 + opts.feas_tol)) ** 2 + (1e-12 * ynorm) ** 2:
        raise ValueError("constraint infeasible: component of y in range(P) exceeds xi")
    xi_t = float(np.sqrt(max(xi * xi - perp2, 0.0)))

    def full_res(rn: float) -> float:
        return float(np.sqrt(rn * rn + perp2))

    yt_norm = float(np.linalg.norm(yt))
    if yt_norm <= xi_t:
        return L1SolveReport(np.zeros(n), full_res(yt_norm), 0.0, 0, True, 0.0, np.inf)

    def exact_report(iters: int) -> L1SolveReport:
        x, u = _solve_exact(Q, yt)
        rn = float(np.linalg.norm(op.matvec(x) - yt))
        l1 = float(np.abs(x).sum())
        gap = max(l1 - _dual_bound(yt, u, xi_t), 0.0)
        ok = full_res(rn) <= xi * (1 + opts.feas_tol) + 1e-9 * max(ynorm, 1.0) and gap <= opts.opt_tol * max(l1, 1e-300)
        return L1SolveReport(x, full_res(rn), l1, iters, bool(ok), gap, 0.0)

    # a tiny xi~ makes the penalty too small to resolve; the equality-constrained
    # solution is then feasible and within xi~ sqrt(n) of optimal
    if xi_t <= 1e-7 * yt_norm:
        return exact_report(1)

    r = Q.shape[1]
    lo, hi = 0.0, float(np.max(np.abs(yt)))
    f_lo, f_hi = -xi_t, yt_norm - xi_t
    lam = hi * xi_t / yt_norm
    c = np.zeros(r)
    best_x, best_l1, best_rn = None, np.inf, np.nan
    lower = -np.inf
    gap = np.inf
    prev = None
    it = 0
    for it in range(1, opts.max_iters + 1):
        c, z = _huber_newton(Q, yt, lam, c, opts.newton_iters, 1e-10 * lam * np.sqrt(n))
        psi = np.clip(z, -lam, lam)
        x = z - psi
        u = psi - Q @ (Q.T @ psi) if r else psi
        rn = float(np.linalg.norm(u))  # = ||yt - Phi x||
        l1 = float(np.abs(x).sum())
        scale = float(np.max(np.abs(u)))
        if scale > 0:
            lower = max(lower, (float(yt @ u) - xi_t * rn) / scale)
        if full_res(rn) <= xi * (1 + opts.feas_tol) and l1 < best_l1:
            best_x, best_l1, best_rn = x, l1, rn
        gap = best_l1 - lower
        if best_x is not None and gap <= opts.opt_tol * max(best_l1, 1e-300):
            return L1SolveReport(best_x, full_res(best_rn), best_l1, it, True, max(gap, 0.0), lam)
        fval = rn - xi_t
        if fval > 0:
            hi, f_hi = lam, fval
        else:
            lo, f_lo = lam, fval
        # secant on the last two penalties, else proportional rescaling
        if prev is not None and prev[1] != fval:
            cand = lam - fval * (lam - prev[0]) / (fval - prev[1])
        else:
            cand = lam * xi_t / rn if rn > 0 else 0.5 * (lo + hi)
        prev = (lam, fval)
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi) if lo == 0 else np.sqrt(lo * hi)
        if cand == lam:
            break
        lam = cand

    # fall back to the equality-constrained solution if it certifies
    fb = exact_report(it + 1)
    if fb.converged:
        return fb
    if best_x is None:
        best_x, best_rn = x, rn
        best_l1 = float(np.abs(x).sum())
    log.debug("bpdn_solve did not converge: gap=%g after %d iterations", gap, it)
    return L1SolveReport(best_x, full_res(best_rn), best_l1, it, False, float(gap), lam)


def threshold_support(x_cs, omega: float) -> np.ndarray:
    """Indices with ``|x_i| > omega`` (strict), ascending."""
    x_cs = np.asarray(x_cs)
    return np.flatnonzero(np.abs(x_cs) > omega)


@dataclass
class FrameEstimate:
    x_hat: np.ndarray
    l_hat: np.ndarray
    support: np.ndarray
    report: L1SolveReport | None = None


def recover_frame(op: ProjectedOperator, m, xi: float, omega: float,
                  opts: SolverOptions | None = None) -> FrameEstimate:
    """Project, l1-recover, threshold and debias one observation vector."""
    m = np.asarray(m, dtype=float)
    y = op.matvec(m)
    report = bpdn_solve(op, y, xi, opts)
    T = threshold_support(report.solution, omega)
    x_hat = projected_ls(op.basis, T, y)
    return FrameEstimate(x_hat=x_hat, l_hat=m - x_hat, support=T, report=report)


def recover_frame_mc(op: ProjectedOperator, m, support) -> FrameEstimate:
    """Known-support variant: least squares on ``support`` only."""
    m = np.asarray(m, dtype=float)
    T = np.unique(np.asarray(support, dtype=np.intp))
    y = op.matvec(m)
    x_hat = projected_ls(op.basis, T, y)
    return FrameEstimate(x_hat=x_hat, l_hat=m - x_hat, support=T)


__all__ = [
    "BasisMatrix",
    "FrameEstimate",
    "L1SolveReport",
    "ProjectedOperator",
    "SolverOptions",
    "bpdn_solve",
    "recover_frame",
    "recover_frame_mc",
    "threshold_support",
]
