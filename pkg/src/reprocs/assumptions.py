"""Checks of the correctness-theorem preconditions, and proof-side oracles.

Each ``check_*`` function returns a :class:`CheckResult` carrying the
measured value, the required bound and a pass flag.  :func:`check_scenario`
bundles them into an :class:`AssumptionReport`.

Two oracles from the proofs are exposed for property testing:
:func:`h_star_upper` builds the explicit area/time partition that shows a
moving-block support has small ``h_u``, and :func:`blockbanded_bound_check`
measures ``||sum_t I_T A_t I_T'||`` against ``rho^2 h^+ alpha sigma^+``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import as_array, dif, kappa_s
from .matio import format_value

STRICT = "strict"
ADVISORY = "advisory"


class ModelViolation(ValueError):
    """Supports do not satisfy the structural model a construction relies on."""


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    bound: float
    condition: str
    details: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        if self.bound == 0:
            return math.inf if self.measured > 0 else 0.0
        return self.measured / self.bound


@dataclass
class AssumptionReport:
    checks: list[CheckResult]
    mode: str = STRICT

    @property
    def passed(self) -> bool | None:
        if self.mode == ADVISORY:
            return None
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["check", "measured", "bound", "pass"])
            for c in self.checks:
                flag = "" if self.mode == ADVISORY else format_value(bool(c.passed))
                w.writerow([c.name, format_value(float(c.measured)), format_value(float(c.bound)), flag])

    def to_keyvalue(self) -> str:
        lines = [f"mode = {self.mode}"]
        if self.mode == STRICT:
            lines.append(f"overall = {format_value(bool(self.passed))}")
        for c in self.checks:
            p = c.name
            lines.append(f"{p}.condition = {c.condition}")
            lines.append(f"{p}.measured = {format_value(float(c.measured))}")
            lines.append(f"{p}.bound = {format_value(float(c.bound))}")
            lines.append(f"{p}.ratio = {format_value(float(c.ratio))}")
            if self.mode == STRICT:
                lines.append(f"{p}.pass = {format_value(bool(c.passed))}")
            for k, v in c.details.items():
                lines.append(f"{p}.{k} = {format_value(v)}")
        return "\n".join(lines) + "\n"

    def write_keyvalue(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_keyvalue())


# --------------------------------------------------------------------------
# individual checks
# --------------------------------------------------------------------------


def incoherence(P) -> float:
    """Smallest ``mu`` with ``max_i ||P' e_i||^2 <= mu r / n``."""
    P = as_array(P)
    n, r = P.shape
    if r == 0:
        return 0.0
    return float(np.max(np.sum(P * P, axis=1)) * n / r)


def check_denseness(P0, new_bases: Sequence, s: int, n: int | None = None,
                    kappa_mode: str = "bound") -> CheckResult:
    """Incoherence of ``P0`` and each new basis, and the two rank-sparsity products."""
    P0 = as_array(P0)
    n = P0.shape[0] if n is None else n
    news = [as_array(B) for B in new_bases]
    mus = [incoherence(P0)] + [incoherence(B) for B in news]
    mu = max(mus)
    r0 = P0.shape[1]
    J = len(news)
    r_new = max((B.shape[1] for B in news), default=0)
    prod_all = 2 * s * (r0 + J * r_new) * mu
    prod_new = 2 * s * r_new * mu
    ok_all = prod_all <= 0.09 * n
    ok_new = prod_new <= 0.0004 * n
    s2 = min(2 * s, n)
    Pall = np.hstack([P0] + news) if news else P0
    k_star = kappa_s(Pall, s2, mode=kappa_mode) if Pall.shape[1] else 0.0
    k_new = max((kappa_s(B, s2, mode=kappa_mode) for B in news if B.shape[1]), default=0.0)
    return CheckResult(
        name="denseness",
        passed=bool(ok_all and ok_new),
        measured=prod_all / n,
        bound=0.09,
        condition="2 s (r0 + J r_new) mu <= 0.09 n and 2 s r_new mu <= 0.0004 n",
        details={
            "mu": mu,
            "product_all_over_n": prod_all / n,
            "product_new_over_n": prod_new / n,
            "product_new_bound": 0.0004,
            "product_new_pass": bool(ok_new),
            "kappa_2s_all": k_star,
            "kappa_2s_all_target": 0.3,
            "kappa_2s_new": k_new,
            "kappa_2s_new_target": 0.02,
            "kappa_mode": kappa_mode,
        },
    )


def max_slow_change_horizon(q: float, v: float) -> int:
    """Largest integer ``d`` with ``q v^d <= 3``."""
    if v <= 1:
        return 2**63 - 1
    d = math.floor(math.log(3.0 / q) / math.log(v))
    while q * v ** (d + 1) <= 3:
        d += 1
    while d > 0 and q * v**d > 3:
        d -= 1
    return d


def check_slow_change(Lam: np.ndarray, change_times: Sequence[int], groups: Sequence[int], d: int,
                      lambda_train_minus: float, q=None, v=None, rel_tol: float = 1e-12) -> CheckResult:
    """Sandwich ``lam_hat <= lam_new^- <= lam_new^+ <= 3 lam_hat`` over ``[t_j, t_j + d]``.

    ``Lam[t-1, i]`` is the variance of direction ``i`` at time ``t``; ``groups``
    labels each direction with the change that introduced it (0 for the
    initial ones).  If ``q`` and ``v`` are given, ``q v^d <= 3`` is also tested.
    """
    Lam = np.asarray(Lam, dtype=float)
    groups = np.asarray(groups)
    T = Lam.shape[0]
    lo, hi = math.inf, 0.0
    ct = list(change_times)
    nxt = ct[1:] + [T + 1]
    for j, (tj, tn) in enumerate(zip(ct, nxt), start=1):
        cols = groups == j
        last = min(tj + d, tn - 1, T)
        blk = Lam[tj - 1 : last, cols]
        if blk.size:
            lo = min(lo, float(blk.min()))
            hi = max(hi, float(blk.max()))
    if not ct:
        lo = hi = lambda_train_minus
    lam = lambda_train_minus
    ok = lo >= lam * (1 - rel_tol) and hi <= 3 * lam * (1 + rel_tol)
    details = {"lambda_new_minus": lo, "lambda_new_plus": hi, "lambda_train_minus": lam, "d": d}
    if q is not None and v is not None:
        growth = float(np.max(np.asarray(q, dtype=float) * np.asarray(v, dtype=float) ** d))
        details["q_v_pow_d"] = growth
        ok = ok and growth <= 3
    return CheckResult(
        name="slow_change",
        passed=bool(ok),
        measured=hi / lam,
        bound=3.0,
        condition="lambda_train <= lambda_new^- <= lambda_new^+ <= 3 lambda_train on [t_j, t_j + d]",
        details=details,
    )


def check_spacing(change_times: Sequence[int], d: int, K: int, alpha: int, t_max: int | None = None) -> CheckResult:
    """``d >= (K+2) alpha`` and consecutive changes at least ``d`` apart."""
    ct = list(change_times)
    gaps = [b - a for a, b in zip(ct, ct[1:])]
    min_gap = min(gaps) if gaps else math.inf
    need = (K + 2) * alpha
    ok = d >= need and min_gap >= d
    return CheckResult(
        name="spacing_d",
        passed=bool(ok),
        measured=float(d),
        bound=float(need),
        condition="d >= (K + 2) alpha and t_{j+1} - t_j >= d",
        details={"min_gap": float(min_gap), "d": d},
    )


def check_xmin(X, xi: float) -> CheckResult:
    X = np.asarray(X, dtype=float)
    nz = np.abs(X[X != 0])
    x_min = float(nz.min()) if nz.size else math.inf
    return CheckResult(
        name="xmin_margin",
        passed=bool(x_min > 14 * xi),
        measured=x_min,
        bound=14 * xi,
        condition="x_min > 14 xi",
        details={"margin": x_min - 14 * xi, "xi": xi},
    )


def check_init(P_hat, P_true, r0: int, zeta: float) -> CheckResult:
    e = dif(P_hat, P_true)
    return CheckResult(
        name="init_accuracy",
        passed=bool(e <= r0 * zeta),
        measured=e,
        bound=r0 * zeta,
        condition="dif(P_train_hat, P_0) <= r0 zeta",
    )


def check_zeta(zeta: float, r: int, lambda_train_minus: float, lambda_plus: float, gamma: float) -> CheckResult:
    from .engine import zeta_upper_bound

    zb = zeta_upper_bound(r, lambda_train_minus, lambda_plus, gamma)
    return CheckResult(
        name="zeta_range",
        passed=bool(0 < zeta <= zb),
        measured=zeta,
        bound=zb,
        condition="zeta <= min{1e-4/r^2, 0.03 lam/(r^2 lam+), 1/(r^3 gamma^2), lam/(r^3 gamma^2)}",
    )


# --------------------------------------------------------------------------
# support structure
# --------------------------------------------------------------------------


def support_runs(supports: Sequence[np.ndarray]) -> tuple[list[np.ndarray], np.ndarray]:
    """Distinct consecutive sets ``T^[k]`` and their 1-based start times ``t^k``."""
    sets: list[np.ndarray] = []
    starts: list[int] = []
    prev = None
    for t, T in enumerate(supports, start=1):
        T = np.asarray(T, dtype=np.intp)
        if prev is None or not np.array_equal(T, prev):
            sets.append(T)
            starts.append(t)
            prev = T
    return sets, np.asarray(starts, dtype=np.int64)


def _masks(sets: Sequence[np.ndarray], n: int) -> np.ndarray:
    M = np.zeros((len(sets), n), dtype=bool)
    for k, T in enumerate(sets):
        M[k, T] = True
    return M


def check_support_model(supports: Sequence[np.ndarray], rho: int, beta: int, alpha: int, n: int,
                        s: int | None = None) -> CheckResult:
    """Structural conditions on the sequence of distinct supports.

    1. each set persists fewer than ``beta`` frames (and has at most ``s`` indices);
    2. ``T^[k]`` and ``T^[k+rho]`` are disjoint;
    3. over the next ``alpha`` sets the departure sets ``T^[i] minus T^[i+1]``
       total at most ``n`` indices and none meets ``T^[k] minus T^[k+1]``.

    The last set's dwell is truncated by the end of the sequence.  The
    numeric budget ``rho^2 beta <= 0.01 alpha`` is checked separately by
    :func:`check_support_budget`.
    """
    rho = int(rho)
    sets, starts = support_runs(supports)
    K = len(sets)
    ends = np.append(starts[1:], len(supports) + 1)
    dwell = ends - starts
    max_dwell = int(dwell.max()) if K else 0
    sizes = np.array([T.size for T in sets])
    max_size = int(sizes.max()) if K else 0
    M = _masks(sets, n)
    # condition 2
    rho_hits = int(np.sum(np.any(M[:-rho] & M[rho:], axis=1))) if K > rho else 0
    # condition 3 on departure sets D_k = T^[k] \ T^[k+1], k = 0 .. K-2
    if K >= 2:
        D = M[:-1] & ~M[1:]
        nd = D.shape[0]
        C = np.vstack([np.zeros((1, n), dtype=np.int64), np.cumsum(D, axis=0)])
        csize = np.concatenate([[0], np.cumsum(D.sum(axis=1))])
        k = np.arange(nd)
        hi = np.minimum(k + alpha, nd - 1)  # last departure index in (k, k+alpha]
        window_sum = csize[hi + 1] - csize[k + 1]
        later = C[hi + 1] - C[k + 1]  # per index: departures in (k, k+alpha]
        overlap = int(np.sum(np.any(D & (later > 0), axis=1)))
        max_window_sum = int(window_sum.max())
    else:
        overlap, max_window_sum = 0, 0
    ok1 = max_dwell < beta and (s is None or max_size <= s)
    ok = ok1 and rho_hits == 0 and overlap == 0 and max_window_sum <= n
    return CheckResult(
        name="support_model",
        passed=bool(ok),
        measured=float(max_dwell),
        bound=float(beta),
        condition="dwell < beta, |T| <= s, T[k] & T[k+rho] empty, departures over alpha sets disjoint and <= n",
        details={
            "max_dwell": max_dwell,
            "max_size": max_size,
            "distinct_sets": K,
            "rho_overlaps": rho_hits,
            "departure_overlaps": overlap,
            "max_window_departures": max_window_sum,
        },
    )


def check_support_budget(rho: float, beta: int, alpha: int) -> CheckResult:
    val = rho**2 * beta
    return CheckResult(
        name="support_budget",
        passed=bool(val <= 0.01 * alpha),
        measured=float(val),
        bound=0.01 * alpha,
        condition="rho^2 beta <= 0.01 alpha",
    )


@dataclass
class WindowPartition:
    """Area sets ``T_(i)`` and time blocks ``J_(i)`` (1-based, inclusive) for one window."""

    u: int
    areas: list[np.ndarray]
    blocks: list[tuple[int, int] | None]  # None marks an area no frame is assigned to

    @property
    def h(self) -> int:
        return max((b[1] - b[0] + 1 for b in self.blocks if b is not None), default=0)


def _verify_partition(part: WindowPartition, supports, rho: int, n: int) -> None:
    masks = _masks(part.areas, n)
    if np.any(masks.sum(axis=0) > 1):
        raise ModelViolation(f"window {part.u}: area sets are not mutually disjoint")
    l = len(part.areas)
    for i, blk in enumerate(part.blocks):
        if blk is None:
            continue
        a, b = blk
        cover = np.any(masks[i : min(i + rho, l)], axis=0)
        for t in range(a, b + 1):
            T = np.asarray(supports[t - 1], dtype=np.intp)
            if T.size and not np.all(cover[T]):
                raise ModelViolation(f"window {part.u}: T_t at t={t} not covered by areas {i + 1}..{i + rho}")


def area_partition(supports: Sequence[np.ndarray], alpha: int, rho: int, n: int,
                       verify: bool = True) -> list[WindowPartition]:
    """Per-window partition built from consecutive support differences.

    For the window starting at ``t_u``, let ``T^[k_u], ..., T^[k_u + l - 1]`` be
    the distinct sets seen.  Areas are ``T^[k_u+i-1] minus T^[k_u+i]`` for
    ``i < l`` and the whole last set for ``i = l``; time block ``i`` is the run
    of set ``k_u + i - 1`` clipped to the window.
    """
    sets, starts = support_runs(supports)
    t_max = len(supports)
    ends = np.append(starts[1:], t_max + 1) - 1
    out: list[WindowPartition] = []
    for u, tu in enumerate(range(1, t_max + 1, alpha), start=1):
        te = min(tu + alpha - 1, t_max)
        ku = int(np.searchsorted(starts, tu, side="right") - 1)
        kl = int(np.searchsorted(starts, te, side="right") - 1)
        areas, blocks = [], []
        for k in range(ku, kl + 1):
            if k < kl:
                areas.append(np.setdiff1d(sets[k], sets[k + 1]))
            else:
                areas.append(sets[k])
            blocks.append((max(int(starts[k]), tu), min(int(ends[k]), te)))
        part = WindowPartition(u=u, areas=areas, blocks=blocks)
        if verify:
            _verify_partition(part, supports, rho, n)
        out.append(part)
    return out


def h_star_upper(supports: Sequence[np.ndarray], alpha: int, rho: int, n: int | None = None) -> np.ndarray:
    """Constructive upper bound on ``h_u*(alpha)`` for each window ``u``.

    Raises :class:`ModelViolation` when the construction does not yield a
    valid partition (the supports then do not follow the moving-block model
    for this ``rho``).
    """
    if n is None:
        n = 1 + max((int(np.max(T)) for T in supports if len(T)), default=0)
    return np.array([p.h for p in area_partition(supports, alpha, rho, n)], dtype=np.int64)


def everyframe_partition(supports: Sequence[np.ndarray], alpha: int, s: int, n: int,
                         verify: bool = True) -> list[WindowPartition]:
    """Partition for a block that moves every frame, from its relative position.

    Areas are consecutive runs of ``s`` indices starting at the block's top at
    the window start; time block ``i`` holds the frames whose unwrapped
    displacement lies in ``[(i-1) s, i s)``.  Used with ``rho = 2``.
    """
    tops = []
    for T in supports:
        T = np.asarray(T, dtype=np.intp)
        inside = np.zeros(n, dtype=bool)
        inside[T] = True
        cand = T[~inside[(T - 1) % n]]
        if cand.size != 1:
            raise ModelViolation("support is not a single cyclic block")
        tops.append(int(cand[0]))
    tops = np.asarray(tops)
    t_max = len(supports)
    out = []
    for u, tu in enumerate(range(1, t_max + 1, alpha), start=1):
        te = min(tu + alpha - 1, t_max)
        seg = tops[tu - 1 : te]
        steps = np.mod(np.diff(seg), n)
        disp = np.concatenate([[0], np.cumsum(steps)])
        if disp[-1] + s > n:
            raise ModelViolation(f"window {u}: block travels {disp[-1]} indices, wrapping onto itself")
        chunk = disp // s
        n_areas = int(chunk[-1]) + 2
        areas = [np.mod(seg[0] + np.arange(i * s, min((i + 1) * s, n)), n) for i in range(n_areas)]
        blocks = []
        for i in range(n_areas):
            idx = np.flatnonzero(chunk == i)
            blocks.append((tu + int(idx[0]), tu + int(idx[-1])) if idx.size else None)
        part = WindowPartition(u=u, areas=areas, blocks=blocks)
        if verify:
            _verify_partition(part, supports, 2, n)
        out.append(part)
    return out


def h_everyframe_upper(supports, alpha: int, s: int, n: int) -> np.ndarray:
    return np.array([p.h for p in everyframe_partition(supports, alpha, s, n)], dtype=np.int64)


# --------------------------------------------------------------------------
# block-banded norm bound
# --------------------------------------------------------------------------


@dataclass
class BlockBandedResult:
    norm: float
    bound: float
    passed: bool
    sigma_plus: float


def blockbanded_bound_check(A_list: Sequence[np.ndarray], supports: Sequence[np.ndarray], rho: int,
                            h_plus: float, alpha: int, n: int, sigma_plus: float | None = None,
                            check_model: bool = True, psd_tol: float = 1e-10) -> BlockBandedResult:
    """Spectral norm of ``M = sum_t I_T A_t I_T'`` against ``rho^2 h^+ alpha sigma^+``.

    ``supports`` covers one window of at most ``alpha`` frames.  With
    ``check_model`` the constructive partition must give ``h <= h^+ alpha``.
    """
    if len(A_list) != len(supports):
        raise ValueError("need one matrix per frame")
    if len(supports) > alpha:
        raise ValueError("supports span more than one window")
    norms = []
    for A, T in zip(A_list, supports):
        A = np.asarray(A, dtype=float)
        if A.shape != (len(T), len(T)):
            raise ValueError("A_t must be |T_t| x |T_t|")
        if A.size:
            if np.max(np.abs(A - A.T)) > psd_tol * max(1.0, np.max(np.abs(A))):
                raise ValueError("A_t must be symmetric")
            w = np.linalg.eigvalsh(A)
            if w[0] < -psd_tol * max(1.0, w[-1]):
                raise ValueError("A_t must be positive semidefinite")
            norms.append(float(w[-1]))
    sp = max(norms, default=0.0) if sigma_plus is None else float(sigma_plus)
    if norms and max(norms) > sp * (1 + 1e-12):
        raise ValueError("some ||A_t|| exceeds sigma_plus")
    if check_model:
        h = int(h_star_upper(supports, alpha, rho, n).max()) if len(supports) else 0
        if h > h_plus * alpha * (1 + 1e-12):
            raise ModelViolation(f"constructive h = {h} exceeds h^+ alpha = {h_plus * alpha:g}")
    touched = np.unique(np.concatenate([np.asarray(T, dtype=np.intp) for T in supports])) if supports else np.array([], int)
    pos = np.full(n, -1)
    pos[touched] = np.arange(touched.size)
    M = np.zeros((touched.size, touched.size))
    for A, T in zip(A_list, supports):
        if len(T):
            p = pos[np.asarray(T, dtype=np.intp)]
            M[np.ix_(p, p)] += A
    norm = float(np.linalg.eigvalsh(M)[-1]) if M.size else 0.0
    bound = rho**2 * h_plus * alpha * sp
    return BlockBandedResult(norm=norm, bound=bound, passed=bool(norm <= bound * (1 + 1e-12) + 1e-12), sigma_plus=sp)


# --------------------------------------------------------------------------
# whole-scenario report
# --------------------------------------------------------------------------


def check_scenario(truth, params, zeta: float, P_init, d: int | None = None, mode: str = STRICT,
                   lambda_train_minus: float | None = None) -> AssumptionReport:
    """All theorem preconditions for a generated scenario and engine settings.

    ``params`` needs ``alpha``, ``K`` and (for rpca) ``xi``.
    """
    if mode not in (STRICT, ADVISORY):
        raise ValueError(f"mode must be {STRICT!r} or {ADVISORY!r}")
    sig = truth.signal
    scfg = truth.signal_cfg
    pcfg = truth.support_cfg
    lam = lambda_train_minus if lambda_train_minus is not None else (scfg.lambda_train_minus if scfg else 1.0)
    if d is None:
        d = scfg.horizon() if scfg is not None else truth.t_max
    J = len(sig.change_times)
    r0 = sig.r0
    news = [sig.new_basis(j) for j in range(1, J + 1)]
    r_new = max((B.r for B in news), default=0)
    r = r0 + J * r_new
    s = max((len(T) for T in truth.supports), default=0)
    checks = [check_init(P_init, sig.basis_at(1), r0, zeta)]
    q = v = None
    if scfg is not None and J:
        q, v = scfg.q_list(), scfg.v_list()
    checks.append(check_slow_change(sig.Lam, sig.change_times, sig.groups, d, lam, q, v))
    checks.append(check_spacing(sig.change_times, d, params.K, params.alpha, truth.t_max))
    rho = int(round(pcfg.rho)) if pcfg is not None else 2
    beta = pcfg.beta if pcfg is not None else max(1, s)
    checks.append(check_support_model(truth.supports, rho, beta, params.alpha, truth.n, s))
    checks.append(check_support_budget(rho, beta, params.alpha))
    checks.append(check_denseness(sig.basis_at(1), [B.data for B in news], s, truth.n))
    if truth.mode == "rpca" and truth.X is not None and getattr(params, "xi", None) is not None:
        checks.append(check_xmin(truth.X, params.xi))
    lam_plus = float(np.max(sig.Lam)) if sig.Lam.size else 0.0
    if r and lam_plus and sig.gamma():
        checks.append(check_zeta(zeta, r, lam, lam_plus, sig.gamma()))
    return AssumptionReport(checks=checks, mode=mode)
