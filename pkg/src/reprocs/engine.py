"""The ReProCS state machine: per-frame recovery plus periodic subspace update.

Frames are numbered with absolute time ``t``; the first processed frame is
``t_train + 1`` and window boundaries fall where ``(t - t_train) % alpha == 0``.
At each boundary the last ``alpha`` low-rank estimates, projected away from the
current star basis, either trigger a change detection (detect phase) or yield a
fresh estimate of the new directions (ppca phase, repeated ``K`` times).
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import (
    BasisMatrix,
    EigenDecompositionError,
    SingularityError,
    as_array,
    dif,
    eigensplit_from_samples,
    projected_ls,
)
from .matio import read_keyvalue, read_matrix, write_keyvalue, write_matrix
from .sparse import ProjectedOperator, SolverOptions, bpdn_solve, threshold_support

log = logging.getLogger(__name__)

DETECT = "detect"
PPCA = "ppca"


@dataclass
class EngineParams:
    alpha: int
    K: int
    xi: float | None = None
    omega: float | None = None
    thresh: float | None = None  # defaults to lambda_train_minus / 2
    solver: SolverOptions = field(default_factory=SolverOptions)
    halt_on_error: bool = False

    def __post_init__(self):
        if self.alpha < 1 or self.K < 1:
            raise ValueError("alpha and K must be at least 1")


@dataclass
class ReProCSState:
    P_star: np.ndarray
    P_new: np.ndarray
    lambda_train_minus: float
    t_train: int
    t: int  # last processed frame
    phase: str = DETECT
    j_hat: int = 0
    k: int = 0
    t_hat: list[int] = field(default_factory=list)
    r_hat: dict[tuple[int, int], int] = field(default_factory=dict)
    buffer: np.ndarray | None = None
    fill: int = 0

    @property
    def P_hat(self) -> np.ndarray:
        if self.P_new.shape[1] == 0:
            return self.P_star
        return np.hstack([self.P_star, self.P_new])

    def copy(self) -> "ReProCSState":
        return copy.deepcopy(self)

    # -- checkpoints: bases as text matrices, scalars as key-value --------
    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_matrix(d / "P_star.mat", self.P_star)
        write_matrix(d / "P_new.mat", self.P_new)
        if self.buffer is not None:
            write_matrix(d / "buffer.mat", self.buffer[:, : self.fill])
        write_keyvalue(d / "state", {
            "lambda_train_minus": float(self.lambda_train_minus),
            "t_train": self.t_train,
            "t": self.t,
            "phase": self.phase,
            "j_hat": self.j_hat,
            "k": self.k,
            "t_hat": list(self.t_hat),
            "r_hat": [f"{j}:{k}:{r}" for (j, k), r in sorted(self.r_hat.items())],
            "alpha": None if self.buffer is None else self.buffer.shape[1],
        })

    @classmethod
    def load(cls, directory) -> "ReProCSState":
        d = Path(directory)
        kv = read_keyvalue(d / "state")
        ints = lambda s: [int(x) for x in s.split(",")] if s else []  # noqa: E731
        r_hat = {}
        for item in kv["r_hat"].split(",") if kv["r_hat"] else []:
            j, k, r = (int(x) for x in item.split(":"))
            r_hat[(j, k)] = r
        st = cls(
            P_star=read_matrix(d / "P_star.mat"),
            P_new=read_matrix(d / "P_new.mat"),
            lambda_train_minus=float(kv["lambda_train_minus"]),
            t_train=int(kv["t_train"]),
            t=int(kv["t"]),
            phase=kv["phase"],
            j_hat=int(kv["j_hat"]),
            k=int(kv["k"]),
            t_hat=ints(kv["t_hat"]),
            r_hat=r_hat,
        )
        if kv.get("alpha"):
            alpha = int(kv["alpha"])
            st.buffer = np.zeros((st.P_star.shape[0], alpha))
            if (d / "buffer.mat").exists():
                part = read_matrix(d / "buffer.mat")
                st.buffer[:, : part.shape[1]] = part
                st.fill = part.shape[1]
        return st


@dataclass
class RecoveryRecord:
    t: int
    l_hat: np.ndarray
    x_hat: np.ndarray
    support: np.ndarray
    phase: str
    j_hat: int
    k: int
    converged: bool = True
    error: str | None = None
    event: str | None = None  # "detect", "ppca", "ppca_final" at window boundaries
    r_hat: int | None = None


# --------------------------------------------------------------------------
# initialisation
# --------------------------------------------------------------------------


def train_init(M_train, rank_rule: str = "nonzero_eig", r0: int | None = None,
               p: float | None = None) -> tuple[BasisMatrix, float]:
    """Subspace and smallest retained eigenvalue of ``(1/t_train) M M'``.

    ``rank_rule`` is ``"nonzero_eig"`` (eigenvalues above ``1e-10`` times the
    largest), ``"fixed_rank"`` (top ``r0``) or ``"energy_fraction"`` (fewest
    leading eigenvalues whose sum reaches fraction ``p`` of the total).
    """
    M = np.asarray(M_train, dtype=float)
    if M.ndim != 2 or M.shape[1] < 1:
        raise ValueError("training data must be an n x t_train array with t_train >= 1")
    split = eigensplit_from_samples(M, M.shape[1], 0.0)
    vals = split.eigenvalues_kept
    U = split.basis.data
    if vals.size == 0 or vals[0] <= 0:
        raise ValueError("training data is identically zero")
    if rank_rule == "nonzero_eig":
        k = int(np.sum(vals > 1e-10 * vals[0]))
    elif rank_rule == "fixed_rank":
        if r0 is None or not (1 <= r0 <= vals.size):
            raise ValueError("fixed_rank needs 1 <= r0 <= min(n, t_train)")
        k = int(r0)
    elif rank_rule == "energy_fraction":
        if p is None or not (0 < p <= 1):
            raise ValueError("energy_fraction needs 0 < p <= 1")
        frac = np.cumsum(vals) / np.sum(vals)
        k = int(np.searchsorted(frac, p * (1 - 1e-12)) + 1)
        k = min(k, vals.size)
    else:
        raise ValueError(f"unknown rank rule {rank_rule!r}")
    return BasisMatrix(U[:, :k], check=False), float(vals[k - 1])


def perturbed_basis(P, noise: float, rng: np.random.Generator) -> BasisMatrix:
    """Orthonormalised ``P + noise * G`` with ``G`` standard Gaussian."""
    P = as_array(P)
    return BasisMatrix.orthonormalize(P + noise * rng.standard_normal(P.shape))


# --------------------------------------------------------------------------
# the engine
# --------------------------------------------------------------------------


def detect_or_ppca(state: ReProCSState, D_frames: np.ndarray, params: EngineParams) -> tuple[str, int | None]:
    """Window-boundary update, in place.  Returns ``(event, r_hat)``.

    ``D_frames`` are the ``alpha`` buffered low-rank estimates; they are
    projected away from the star basis in force during the window.
    """
    alpha = params.alpha
    if D_frames.shape[1] != alpha:
        raise ValueError(f"buffer holds {D_frames.shape[1]} frames, expected {alpha}")
    thresh = params.thresh if params.thresh is not None else state.lambda_train_minus / 2.0
    Ps = state.P_star
    D = D_frames - Ps @ (Ps.T @ D_frames) if Ps.shape[1] else D_frames
    if state.phase == DETECT:
        sv = np.linalg.svd(D, compute_uv=False)
        lam_max = float(sv[0] ** 2 / alpha) if sv.size else 0.0
        if lam_max >= thresh:
            state.phase = PPCA
            state.j_hat += 1
            state.k = 0
            state.t_hat.append(state.t)
            return "detect", None
        return "none", None
    split = eigensplit_from_samples(D, alpha, thresh)
    state.P_new = np.ascontiguousarray(split.basis.data)
    state.k += 1
    state.r_hat[(state.j_hat, state.k)] = split.rank
    if state.k == params.K:
        state.phase = DETECT
        state.P_star = np.ascontiguousarray(state.P_hat)
        state.P_new = np.zeros((Ps.shape[0], 0))
        return "ppca_final", split.rank
    return "ppca", split.rank


class ReProCS:
    """Online estimator.  Call :meth:`step` once per frame, in order.

    ``known_support`` given to :meth:`step` selects the matrix-completion
    path (least squares on the given missing set); without it the outlier
    support is estimated by l1 recovery and thresholding.
    """

    def __init__(self, P_init, lambda_train_minus: float, params: EngineParams, t_train: int = 0):
        P = as_array(P_init)
        BasisMatrix(P)  # validate
        if lambda_train_minus <= 0:
            raise ValueError("lambda_train_minus must be positive")
        self.params = params
        self.state = ReProCSState(
            P_star=np.ascontiguousarray(P, dtype=float),
            P_new=np.zeros((P.shape[0], 0)),
            lambda_train_minus=float(lambda_train_minus),
            t_train=int(t_train),
            t=int(t_train),
            buffer=np.zeros((P.shape[0], params.alpha)),
        )
        self._P_hat = self.state.P_hat

    @classmethod
    def from_state(cls, state: ReProCSState, params: EngineParams) -> "ReProCS":
        obj = cls.__new__(cls)
        obj.params = params
        obj.state = state
        if state.buffer is None or state.buffer.shape[1] != params.alpha:
            raise ValueError("checkpoint buffer does not match alpha")
        obj._P_hat = state.P_hat
        return obj

    @property
    def n(self) -> int:
        return self.state.P_star.shape[0]

    @property
    def P_hat(self) -> np.ndarray:
        return self._P_hat

    def _recover(self, m: np.ndarray, known_support):
        P = self._P_hat
        y = m - P @ (P.T @ m) if P.shape[1] else m.copy()
        converged = True
        err = None
        if known_support is not None:
            T = np.unique(np.asarray(known_support, dtype=np.intp))
            x_cs = None
        else:
            prm = self.params
            if prm.xi is None or prm.omega is None:
                raise ValueError("RPCA mode needs xi and omega")
            rep = bpdn_solve(ProjectedOperator(P), y, prm.xi, prm.solver)
            converged = rep.converged
            if not converged:
                err = "l1 solver did not converge"
            x_cs = rep.solution
            T = threshold_support(x_cs, prm.omega)
        try:
            x_hat = projected_ls(P, T, y)
        except SingularityError as exc:
            err = f"singular restricted projector: {exc}"
            x_hat = np.zeros(self.n) if x_cs is None else x_cs
        return x_hat, T, converged, err

    def step(self, m_t, known_support=None) -> RecoveryRecord:
        st = self.state
        m = np.asarray(m_t, dtype=float)
        if m.shape != (self.n,):
            raise ValueError(f"frame must have shape ({self.n},), got {m.shape}")
        st.t += 1
        x_hat, T, converged, err = self._recover(m, known_support)
        if err and self.params.halt_on_error:
            raise RuntimeError(f"t={st.t}: {err}")
        l_hat = m - x_hat
        st.buffer[:, st.fill] = l_hat
        st.fill += 1
        rec = RecoveryRecord(t=st.t, l_hat=l_hat, x_hat=x_hat, support=T, phase=st.phase,
                             j_hat=st.j_hat, k=st.k, converged=converged, error=err)
        if (st.t - st.t_train) % self.params.alpha == 0:
            try:
                rec.event, rec.r_hat = detect_or_ppca(st, st.buffer, self.params)
            except EigenDecompositionError as exc:
                rec.error = f"eigendecomposition failed: {exc}"
                if self.params.halt_on_error:
                    raise
            st.fill = 0
            self._P_hat = st.P_hat
        return rec

    def run(self, M, supports=None):
        """Process columns of ``M`` in order; yields a record per frame."""
        M = np.asarray(M, dtype=float)
        for j in range(M.shape[1]):
            yield self.step(M[:, j], None if supports is None else supports[j])


# --------------------------------------------------------------------------
# theorem-prescribed parameters (reporting only)
# --------------------------------------------------------------------------


@dataclass
class TheoremParams:
    K: int
    alpha: int
    C_add: float
    xi: float
    omega: float
    zeta: float
    zeta_bound: float
    engine: EngineParams


def zeta_upper_bound(r: int, lambda_train_minus: float, lambda_plus: float, gamma: float) -> float:
    return min(
        1e-4 / r**2,
        0.03 * lambda_train_minus / (r**2 * lambda_plus),
        1.0 / (r**3 * gamma**2),
        lambda_train_minus / (r**3 * gamma**2),
    )


def theorem_K(r_new: int, zeta: float) -> int:
    return math.ceil(math.log(0.16 * r_new * zeta) / math.log(0.83))


def theorem_params(truth, zeta: float, lambda_train_minus: float | None = None, d: int | None = None,
                   check_zeta: bool = True) -> TheoremParams:
    """``K``, ``alpha``, ``xi`` and ``omega`` as prescribed by the correctness theorem.

    ``truth`` is a :class:`~reprocs.models.ScenarioTruth` (or anything with
    ``signal``, ``n``).  The prescribed ``alpha`` is typically astronomically
    large; these values are for reporting, not for running.
    """
    sig = truth.signal
    cfg = getattr(truth, "signal_cfg", None)
    lam_minus = lambda_train_minus
    if lam_minus is None:
        lam_minus = cfg.lambda_train_minus if cfg is not None else 1.0
    if d is None and cfg is not None and cfg.d is not None:
        d = cfg.d
    groups = sig.groups
    J = len(sig.change_times)
    r0 = int(np.sum(groups == 0))
    r_new = max((int(np.sum(groups == j)) for j in range(1, J + 1)), default=0)
    r = r0 + J * r_new
    gamma = sig.gamma()
    gamma_new = sig.gamma_new(d)
    lam_plus = float(np.max(sig.Lam)) if sig.Lam.size else 0.0
    zb = zeta_upper_bound(r, lam_minus, lam_plus, gamma) if (r and gamma and lam_plus) else float("inf")
    if not (zeta > 0):
        raise ValueError("zeta must be positive")
    if check_zeta and zeta > zb:
        raise ValueError(f"zeta = {zeta:g} exceeds the admissible bound {zb:g}")
    rn = max(r_new, 1)
    K = theorem_K(rn, zeta)
    C_add = 32 * 100**2 * max(16.0, 1.2 * (math.sqrt(zeta) + math.sqrt(r_new) * gamma_new) ** 4) / (
        rn * zeta * lam_minus) ** 2
    alpha = math.ceil(C_add * (math.log(6 * (K + 1) * max(J, 1)) + 11 * math.log(truth.n)))
    xi = math.sqrt(r_new) * gamma_new + (math.sqrt(r) + math.sqrt(r_new)) * math.sqrt(zeta)
    omega = 7 * xi
    eng = EngineParams(alpha=alpha, K=K, xi=xi, omega=omega, thresh=lam_minus / 2)
    return TheoremParams(K=K, alpha=alpha, C_add=C_add, xi=xi, omega=omega, zeta=zeta, zeta_bound=zb, engine=eng)


def subspace_error(P_hat, P_true) -> float:
    return dif(P_hat, P_true)
