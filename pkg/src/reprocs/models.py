"""Synthetic ground-truth streams: subspace signals, moving supports, outliers.

Time is 1-based (``t = 1 .. t_max``) and column ``t - 1`` of every matrix holds
frame ``t``.  Support indices are 0-based everywhere, including on disk.

Randomness comes from numpy's Philox counter-based generator, keyed by
``(seed, stream)`` through a ``SeedSequence``; each generator below draws from
its own stream so that e.g. changing the outlier magnitudes does not perturb
the low-rank part.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .linalg import BasisMatrix
from .matio import read_keyvalue, read_matrix, write_keyvalue, write_matrix

STREAM_SIGNAL = 0
STREAM_SUPPORT = 1
STREAM_OUTLIER = 2
STREAM_INIT = 3


class ModelConfigError(ValueError):
    """A generator configuration is infeasible."""


class ComplianceWarning(UserWarning):
    """A configuration violates a model assumption but generation proceeds."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox-4x64 generator keyed by ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def _complain(msg: str, strict: bool) -> None:
    if strict:
        raise ModelConfigError(msg)
    warnings.warn(msg, ComplianceWarning, stacklevel=3)


# --------------------------------------------------------------------------
# low-rank signal
# --------------------------------------------------------------------------


@dataclass
class SignalModelConfig:
    """Piecewise-constant subspace with slowly growing new directions.

    ``q`` and ``v`` may be scalars or one value per new direction (in order of
    appearance).  ``d`` is the slow-change horizon; ``None`` means the span to
    the next change (or to ``t_max``).  With ``compliance`` on, violated
    model inequalities are errors instead of warnings (``alpha`` and ``K``
    are then needed for the ``d >= (K+2) alpha`` test).
    """

    n: int
    t_max: int
    r0: int
    change_times: tuple[int, ...] = ()
    r_new: int | tuple[int, ...] = 2
    q: float | tuple[float, ...] = 1.0
    v: float | tuple[float, ...] = 1.00017
    lambda_train_minus: float = 1.0
    gamma_star: float = 5.0
    t_train: int = 0
    d: int | None = None
    star_after_change: bool = True
    compliance: bool = False
    alpha: int | None = None
    K: int | None = None
    star_profile: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    @property
    def J(self) -> int:
        return len(self.change_times)

    def r_new_list(self) -> list[int]:
        if isinstance(self.r_new, (int, np.integer)):
            return [int(self.r_new)] * self.J
        out = [int(x) for x in self.r_new]
        if len(out) != self.J:
            raise ModelConfigError(f"r_new has {len(out)} entries for {self.J} changes")
        return out

    @property
    def r_total(self) -> int:
        return self.r0 + sum(self.r_new_list())

    def _per_direction(self, val, name) -> np.ndarray:
        m = sum(self.r_new_list())
        arr = np.atleast_1d(np.asarray(val, dtype=float))
        if arr.size == 1:
            arr = np.full(m, arr[0])
        if arr.size != m:
            raise ModelConfigError(f"{name} has {arr.size} entries for {m} new directions")
        return arr

    def q_list(self) -> np.ndarray:
        return self._per_direction(self.q, "q")

    def v_list(self) -> np.ndarray:
        return self._per_direction(self.v, "v")

    def segment_ends(self) -> list[int]:
        """Last frame governed by each change (next change minus one, or ``t_max``)."""
        ends = list(self.change_times[1:]) + [self.t_max + 1]
        return [e - 1 for e in ends]

    def horizon(self) -> int:
        if self.d is not None:
            return int(self.d)
        if not self.change_times:
            return self.t_max
        return min(e - t + 1 for t, e in zip(self.change_times, self.segment_ends()))

    def validate(self) -> None:
        if self.n < 1 or self.t_max < 1 or self.r0 < 0:
            raise ModelConfigError("n, t_max must be positive and r0 non-negative")
        ct = list(self.change_times)
        if ct != sorted(ct) or len(set(ct)) != len(ct):
            raise ModelConfigError("change_times must be strictly increasing")
        if ct and (ct[0] <= self.t_train or ct[-1] > self.t_max):
            raise ModelConfigError("change_times must lie in (t_train, t_max]")
        if self.r_total >= self.n:
            raise ModelConfigError(f"total rank {self.r_total} must be below n = {self.n}")
        if np.any(self.v_list() <= 1) or np.any(self.q_list() < 1):
            _complain("slow-increase model needs v_i > 1 and q_i >= 1", self.compliance)
        if self.lambda_train_minus <= 0:
            raise ModelConfigError("lambda_train_minus must be positive")
        gaps = [b - a for a, b in zip([self.t_train] + ct, ct + [self.t_max + 1])][1:]
        if ct and self.r_total >= min(gaps):
            _complain(f"total rank {self.r_total} is not below the shortest segment {min(gaps)}", self.compliance)
        d = self.horizon()
        if ct:
            growth = float(np.max(self.q_list() * self.v_list() ** d))
            if growth > 3:
                _complain(f"q v^d = {growth:.4g} exceeds 3 for d = {d}", self.compliance)
            if min(gaps) < d:
                _complain(f"changes {min(gaps)} frames apart, closer than d = {d}", self.compliance)
        if self.compliance:
            if self.alpha is None or self.K is None:
                raise ModelConfigError("compliance mode needs alpha and K")
            if d < (self.K + 2) * self.alpha:
                raise ModelConfigError(f"d = {d} is below (K+2) alpha = {(self.K + 2) * self.alpha}")


@dataclass
class SignalTruth:
    """Output of :func:`gen_signal`.

    ``P_all`` holds every direction ever used, ordered by appearance, so the
    true basis at time ``t`` is ``P_all[:, :rank_at(t)]``.  ``Lam[t-1, i]`` is
    the variance of coefficient ``i`` at time ``t`` (zero before it exists).
    """

    L: np.ndarray
    A: np.ndarray
    Lam: np.ndarray
    P_all: np.ndarray
    groups: np.ndarray
    change_times: tuple[int, ...]

    @property
    def r0(self) -> int:
        return int(np.sum(self.groups == 0))

    def rank_at(self, t: int) -> int:
        return self.r0 + int(np.sum(self.groups[self.groups > 0] <= np.searchsorted(self.change_times, t, side="right")))

    def basis_at(self, t: int) -> BasisMatrix:
        return BasisMatrix(self.P_all[:, : self.rank_at(t)], check=False)

    def new_basis(self, j: int) -> BasisMatrix:
        """Directions added at change ``j`` (1-based)."""
        return BasisMatrix(self.P_all[:, self.groups == j], check=False)

    @property
    def segments(self) -> list[BasisMatrix]:
        starts = [1] + list(self.change_times)
        return [self.basis_at(t) for t in starts]

    def gamma(self) -> float:
        return float(np.max(np.abs(self.A))) if self.A.size else 0.0

    def gamma_new(self, d: int | None = None) -> float:
        """Largest new-direction coefficient over ``[t_j, t_j + d]`` (to the next change if ``d`` is None)."""
        out = 0.0
        ends = list(self.change_times[1:]) + [self.L.shape[1] + 1]
        for j, (tj, nxt) in enumerate(zip(self.change_times, ends), start=1):
            hi = nxt - 1 if d is None else min(tj + d, nxt - 1)
            cols = self.groups == j
            blk = self.A[tj - 1 : hi, cols]
            if blk.size:
                out = max(out, float(np.max(np.abs(blk))))
        return out


def gen_signal(cfg: SignalModelConfig, seed: int) -> SignalTruth:
    """Generate ``L = [l_1 ... l_tmax]`` with ``l_t = P_t a_t``.

    Existing directions get coefficients uniform on ``[-gamma_star, gamma_star]``;
    new direction ``i`` added at ``t_j`` gets coefficients uniform on
    ``+-sqrt(3 q_i v_i^(t - t_j) lambda_train_minus)``, so its variance is exactly
    ``q_i v_i^(t - t_j) lambda_train_minus``.  Once the following change occurs the
    direction is treated as existing (unless ``star_after_change`` is off).
    """
    cfg.validate()
    rng = make_rng(seed, STREAM_SIGNAL)
    n, T = cfg.n, cfg.t_max
    r_new = cfg.r_new_list()
    rJ = cfg.r_total
    G = rng.standard_normal((n, rJ))
    P_all = np.linalg.qr(G)[0] if rJ else np.zeros((n, 0))
    groups = np.concatenate([np.zeros(cfg.r0, dtype=int)] + [np.full(k, j + 1) for j, k in enumerate(r_new)])
    groups = groups.astype(int)

    t = np.arange(1, T + 1)
    Lam = np.zeros((T, rJ))
    star_var = cfg.gamma_star**2 / 3.0
    if cfg.r0:
        prof = np.ones((T, cfg.r0))
        if cfg.star_profile is not None:
            prof = np.broadcast_to(np.asarray(cfg.star_profile(t), dtype=float), (T, cfg.r0))
        Lam[:, : cfg.r0] = star_var * prof**2
    q, v = cfg.q_list(), cfg.v_list()
    ends = cfg.segment_ends()
    col = cfg.r0
    i_dir = 0
    for j, tj in enumerate(cfg.change_times):
        for _ in range(r_new[j]):
            live = (t >= tj) & (t <= ends[j]) if cfg.star_after_change else (t >= tj)
            Lam[live, col] = q[i_dir] * v[i_dir] ** (t[live] - tj) * cfg.lambda_train_minus
            if cfg.star_after_change:
                Lam[t > ends[j], col] = star_var
            col += 1
            i_dir += 1
    # a_t entries uniform with variance Lam, i.e. half-width sqrt(3 Lam)
    U = rng.uniform(-1.0, 1.0, size=(T, rJ))
    A = U * np.sqrt(3.0 * Lam)
    L = P_all @ A.T
    return SignalTruth(L=L, A=A, Lam=Lam, P_all=P_all, groups=groups,
                       change_times=tuple(int(x) for x in cfg.change_times))


# --------------------------------------------------------------------------
# supports
# --------------------------------------------------------------------------


@dataclass
class SupportModelConfig:
    """Moving-object support models.

    ``model3``: a block of ``s`` indices that stays put for ``dwell`` frames
    (default ``beta - 1``), then moves down by a uniform integer amount in
    ``[ceil(s/rho), floor(s/rho2)]``; a block that would run past the last
    index restarts at index 0.
    ``bernoulli_gaussian``: the block moves by ``ceil(1.1 s/rho + N(0, sigma2))``
    with probability ``q`` each frame, top index taken mod ``n``; the part
    below the last index is cut off.
    ``everyframe``: the block moves by a uniform amount in ``{1..m}`` every
    frame, wrapping cyclically.
    """

    variant: str
    n: int
    s: int
    rho: float = 2
    beta: int = 18
    alpha: int = 800
    rho2: float | None = None
    dwell: int | None = None
    q: float | None = None
    sigma2: float | None = None
    m: int | None = None
    strict: bool = False

    VARIANTS = ("model3", "bernoulli_gaussian", "everyframe")

    def validate(self) -> None:
        if self.variant not in self.VARIANTS:
            raise ModelConfigError(f"unknown support variant {self.variant!r}")
        if not (1 <= self.s <= self.n):
            raise ModelConfigError(f"need 1 <= s <= n, got s={self.s}, n={self.n}")
        if self.rho <= 0 or self.beta < 1 or self.alpha < 1:
            raise ModelConfigError("rho, beta, alpha must be positive")


SupportSeq = list  # list of sorted 0-based index arrays, one per frame


def motion_bounds(cfg: SupportModelConfig) -> tuple[int, int]:
    rho2 = cfg.rho if cfg.rho2 is None else cfg.rho2
    lo = math.ceil(cfg.s / cfg.rho - 1e-12)
    hi = math.floor(cfg.s / rho2 + 1e-12)
    return lo, hi


def gen_support_model3(cfg: SupportModelConfig, t_max: int, seed: int) -> SupportSeq:
    cfg.validate()
    lo, hi = motion_bounds(cfg)
    if lo > hi:
        raise ModelConfigError(f"infeasible motion bounds: ceil(s/rho)={lo} > floor(s/rho2)={hi}")
    if lo < 1:
        raise ModelConfigError("block must move by at least one index")
    dwell = cfg.beta - 1 if cfg.dwell is None else int(cfg.dwell)
    if dwell < 1:
        raise ModelConfigError("dwell must be at least one frame (beta >= 2 when dwell is derived)")
    if dwell >= cfg.beta:
        _complain(f"dwell {dwell} is not below beta = {cfg.beta}", cfg.strict)
    if cfg.rho**2 * cfg.beta > 0.01 * cfg.alpha:
        _complain(f"rho^2 beta = {cfg.rho**2 * cfg.beta:g} exceeds 0.01 alpha = {0.01 * cfg.alpha:g}", cfg.strict)
    if hi * cfg.alpha > cfg.n:
        _complain(f"(s/rho2) alpha = {hi * cfg.alpha} exceeds n = {cfg.n}", cfg.strict)
    if cfg.n < 2 * cfg.s:
        _complain("n < 2s: restarted block can overlap the one before it", cfg.strict)
    rng = make_rng(seed, STREAM_SUPPORT)
    base = np.arange(cfg.s)
    out: SupportSeq = []
    o = 0
    while len(out) < t_max:
        blk = base + o
        out.extend([blk] * min(dwell, t_max - len(out)))
        o += int(rng.integers(lo, hi + 1))
        if o + cfg.s > cfg.n:
            o = 0
    return out


def bernoulli_dwell_bound(n: int, t_max: int, beta: int) -> float:
    """Smallest move probability ``q`` for which dwell ``< beta`` holds w.h.p."""
    return 1.0 - (n**-10.0 / (2.0 * t_max)) ** (1.0 / beta)


def gen_support_bernoulli_gaussian(cfg: SupportModelConfig, t_max: int, seed: int) -> SupportSeq:
    cfg.validate()
    q = 1.0 if cfg.q is None else float(cfg.q)
    sigma2 = 0.0 if cfg.sigma2 is None else float(cfg.sigma2)
    if not (0 <= q <= 1) or sigma2 < 0:
        raise ModelConfigError("need 0 <= q <= 1 and sigma2 >= 0")
    n, s = cfg.n, cfg.s
    if q == 0:
        _complain("q = 0: the support never moves", cfg.strict)
    if s > 1.2 * cfg.rho * n / cfg.alpha:
        _complain(f"s = {s} exceeds 1.2 rho n / alpha = {1.2 * cfg.rho * n / cfg.alpha:g}", cfg.strict)
    if sigma2 > s**2 / (4000 * cfg.rho**2 * math.log(n)):
        _complain("sigma2 exceeds s^2 / (4000 rho^2 log n)", cfg.strict)
    if q < bernoulli_dwell_bound(n, t_max, cfg.beta):
        _complain(f"q = {q:g} below the dwell bound for beta = {cfg.beta}", cfg.strict)
    rng = make_rng(seed, STREAM_SUPPORT)
    theta = rng.random(t_max) < q
    noise = rng.normal(0.0, math.sqrt(sigma2), t_max) if sigma2 > 0 else np.zeros(t_max)
    step = 11.0 * s / (10.0 * cfg.rho)
    # each move is rounded up so the top index stays integral
    incr = np.where(theta, np.ceil(step + noise), 0.0)
    incr[0] = 0.0
    o = 1.0 + np.cumsum(incr)  # 1-based topmost index, o_1 = 1
    top = np.mod(o, n).astype(np.int64)
    top[top == 0] = n
    out: SupportSeq = []
    for t0 in top - 1:
        out.append(np.arange(t0, min(t0 + s, n)))
    return out


def longest_dwell(supports: Sequence[np.ndarray]) -> int:
    """Longest run of consecutive frames with an identical support."""
    best = run = 0
    prev = None
    for T in supports:
        if prev is not None and np.array_equal(T, prev):
            run += 1
        else:
            run = 1
        best = max(best, run)
        prev = T
    return best


def gen_support_everyframe(cfg: SupportModelConfig, t_max: int, seed: int) -> SupportSeq:
    cfg.validate()
    m = 1 if cfg.m is None else int(cfg.m)
    if m < 1:
        raise ModelConfigError("m must be at least 1")
    n, s = cfg.n, cfg.s
    if s > 0.0025 * cfg.alpha:
        _complain(f"s = {s} exceeds 0.0025 alpha = {0.0025 * cfg.alpha:g}", cfg.strict)
    if m > (n - s) / cfg.alpha:
        _complain(f"m = {m} exceeds (n - s)/alpha = {(n - s) / cfg.alpha:g}", cfg.strict)
    rng = make_rng(seed, STREAM_SUPPORT)
    shifts = rng.integers(1, m + 1, size=t_max)
    shifts[0] = 0
    tops = np.mod(np.cumsum(shifts), n)
    base = np.arange(s)
    return [np.sort(np.mod(base + o, n)) for o in tops]


def gen_support(cfg: SupportModelConfig, t_max: int, seed: int) -> SupportSeq:
    fn = {
        "model3": gen_support_model3,
        "bernoulli_gaussian": gen_support_bernoulli_gaussian,
        "everyframe": gen_support_everyframe,
    }.get(cfg.variant)
    if fn is None:
        raise ModelConfigError(f"unknown support variant {cfg.variant!r}")
    return fn(cfg, t_max, seed)


# --------------------------------------------------------------------------
# outliers and observations
# --------------------------------------------------------------------------


def gen_outliers(supports: Sequence[np.ndarray], n: int, magnitude_range=(2.0, 6.0), seed: int = 0,
                 random_sign: bool = False) -> np.ndarray:
    """Outlier matrix with magnitudes uniform on ``magnitude_range`` on each ``T_t``."""
    x_lo, x_hi = map(float, magnitude_range)
    if x_lo <= 0 or x_hi < x_lo:
        raise ModelConfigError("need 0 < x_lo <= x_hi")
    rng = make_rng(seed, STREAM_OUTLIER)
    X = np.zeros((n, len(supports)))
    for j, T in enumerate(supports):
        k = len(T)
        if not k:
            continue
        vals = rng.uniform(x_lo, x_hi, size=k)
        if random_sign:
            vals *= rng.choice([-1.0, 1.0], size=k)
        X[T, j] = vals
    return X


def support_mask(supports: Sequence[np.ndarray], n: int) -> np.ndarray:
    mask = np.zeros((n, len(supports)), dtype=bool)
    for j, T in enumerate(supports):
        mask[T, j] = True
    return mask


def assemble(L: np.ndarray, supports: Sequence[np.ndarray], mode: str, X: np.ndarray | None = None) -> np.ndarray:
    """Observations: ``L`` with ``T_t`` zeroed (mc) or ``L + X`` (rpca)."""
    if mode == "mc":
        M = L.copy()
        M[support_mask(supports, L.shape[0])] = 0.0
        return M
    if mode == "rpca":
        if X is None or X.shape != L.shape:
            raise ValueError("rpca mode needs an outlier matrix shaped like L")
        return L + X
    raise ValueError(f"mode must be 'mc' or 'rpca', got {mode!r}")


# --------------------------------------------------------------------------
# scenario bundle
# --------------------------------------------------------------------------


@dataclass
class ScenarioTruth:
    mode: str
    signal: SignalTruth
    supports: SupportSeq
    M: np.ndarray
    X: np.ndarray | None
    seed: int
    signal_cfg: SignalModelConfig | None = None
    support_cfg: SupportModelConfig | None = None
    magnitude_range: tuple[float, float] = (2.0, 6.0)

    @property
    def L(self) -> np.ndarray:
        return self.signal.L

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def t_max(self) -> int:
        return self.L.shape[1]

    @property
    def change_times(self) -> tuple[int, ...]:
        return self.signal.change_times

    def save(self, directory: str | os.PathLike) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_matrix(d / "L.mat", self.L)
        write_matrix(d / "M.mat", self.M)
        if self.X is not None:
            write_matrix(d / "X.mat", self.X)
        write_matrix(d / "P.mat", self.signal.P_all)
        write_matrix(d / "A.mat", self.signal.A)
        write_matrix(d / "Lambda.mat", self.signal.Lam)
        with open(d / "supports.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "indices"])
            for t, T in enumerate(self.supports, start=1):
                w.writerow([t, ",".join(str(int(i)) for i in T)])
        meta = {
            "mode": json.dumps(self.mode),
            "seed": json.dumps(int(self.seed)),
            "change_times": json.dumps(list(self.change_times)),
            "groups": json.dumps([int(g) for g in self.signal.groups]),
            "magnitude_range": json.dumps(list(self.magnitude_range)),
        }
        for prefix, cfg in (("signal", self.signal_cfg), ("support", self.support_cfg)):
            if cfg is None:
                continue
            for f in dataclasses.fields(cfg):
                val = getattr(cfg, f.name)
                if callable(val):
                    val = None
                meta[f"{prefix}.{f.name}"] = json.dumps(val)
        with open(d / "meta", "w") as fh:
            for k, v in meta.items():
                fh.write(f"{k} = {v}\n")

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "ScenarioTruth":
        d = Path(directory)
        raw = {k: json.loads(v) for k, v in read_keyvalue(d / "meta").items()}
        L = read_matrix(d / "L.mat")
        M = read_matrix(d / "M.mat")
        X = read_matrix(d / "X.mat") if (d / "X.mat").exists() else None
        sig = SignalTruth(
            L=L,
            A=read_matrix(d / "A.mat"),
            Lam=read_matrix(d / "Lambda.mat"),
            P_all=read_matrix(d / "P.mat"),
            groups=np.asarray(raw["groups"], dtype=int),
            change_times=tuple(raw["change_times"]),
        )
        supports: SupportSeq = []
        with open(d / "supports.csv", newline="") as fh:
            r = csv.reader(fh)
            next(r)
            for row in r:
                supports.append(np.array([int(x) for x in row[1].split(",")] if row[1] else [], dtype=np.intp))

        def _cfg(klass, prefix):
            kv = {k.split(".", 1)[1]: v for k, v in raw.items() if k.startswith(prefix + ".")}
            if not kv:
                return None
            for key in ("change_times", "r_new", "q", "v"):
                if isinstance(kv.get(key), list):
                    kv[key] = tuple(kv[key])
            return klass(**kv)

        return cls(
            mode=raw["mode"],
            signal=sig,
            supports=supports,
            M=M,
            X=X,
            seed=raw["seed"],
            signal_cfg=_cfg(SignalModelConfig, "signal"),
            support_cfg=_cfg(SupportModelConfig, "support"),
            magnitude_range=tuple(raw.get("magnitude_range", (2.0, 6.0))),
        )


def make_scenario(signal_cfg: SignalModelConfig, support_cfg: SupportModelConfig, mode: str, seed: int,
                  magnitude_range=(2.0, 6.0), random_sign: bool = False) -> ScenarioTruth:
    """Signal, supports, outliers (rpca only) and observations from one seed."""
    if support_cfg.n != signal_cfg.n:
        raise ModelConfigError("signal and support configs disagree on n")
    sig = gen_signal(signal_cfg, seed)
    sup = gen_support(support_cfg, signal_cfg.t_max, seed)
    X = None
    if mode == "rpca":
        X = gen_outliers(sup, signal_cfg.n, magnitude_range, seed, random_sign)
    M = assemble(sig.L, sup, mode, X)
    return ScenarioTruth(mode=mode, signal=sig, supports=sup, M=M, X=X, seed=int(seed),
                         signal_cfg=signal_cfg, support_cfg=support_cfg,
                         magnitude_range=tuple(map(float, magnitude_range)))
