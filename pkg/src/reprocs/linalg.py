"""Dense linear-algebra primitives used throughout the package.

Everything here works on real ``numpy`` arrays.  Subspaces are carried as
column-orthonormal matrices (:class:`BasisMatrix`); an ``n x 0`` array is the
empty basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, islice

import numpy as np
import scipy.linalg

# Tolerances.  Module-level so callers can override them globally.
ORTHONORMAL_TOL = 1e-10
SYMMETRY_TOL = 1e-8
RANK_TOL = 1e-10
ENUMERATION_BUDGET = 10**6
EXACT_KAPPA_MAX_N = 64


class SingularityError(np.linalg.LinAlgError):
    """A restricted matrix is (numerically) rank deficient."""


class EigenDecompositionError(np.linalg.LinAlgError):
    """The symmetric eigensolver failed to converge."""


class BudgetExceededError(RuntimeError):
    """An exhaustive enumeration would visit more subsets than allowed."""


class BasisMatrix:
    """An ``n x r`` matrix with orthonormal columns.

    ``r == 0`` is allowed and represents the empty basis.  The data array is
    made read-only so instances can be shared freely.
    """

    __slots__ = ("_data",)

    def __init__(self, data, *, check: bool = True, tol: float | None = None):
        arr = np.array(data, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError(f"basis must be 2-D, got shape {arr.shape}")
        n, r = arr.shape
        if r > n:
            raise ValueError(f"basis has more columns ({r}) than rows ({n})")
        if check and r:
            tol = ORTHONORMAL_TOL if tol is None else tol
            err = np.max(np.abs(arr.T @ arr - np.eye(r)))
            if err > tol:
                raise ValueError(f"columns are not orthonormal (max |P'P - I| = {err:.3g})")
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def empty(cls, n: int) -> "BasisMatrix":
        return cls(np.zeros((n, 0)), check=False)

    @classmethod
    def orthonormalize(cls, A) -> "BasisMatrix":
        """Orthonormal basis for the columns of ``A`` (Householder QR, column order kept)."""
        A = np.asarray(A, dtype=float)
        if A.ndim == 1:
            A = A[:, None]
        if A.shape[1] == 0:
            return cls.empty(A.shape[0])
        Q, _ = np.linalg.qr(A)
        return cls(Q, check=False)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def n(self) -> int:
        return self._data.shape[0]

    @property
    def r(self) -> int:
        return self._data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    def hstack(self, other: "BasisMatrix | np.ndarray") -> "BasisMatrix":
        return BasisMatrix(np.hstack([self._data, as_array(other)]))

    def projector(self) -> np.ndarray:
        return self._data @ self._data.T

    def __array__(self, dtype=None, copy=None):
        return self._data if dtype is None else self._data.astype(dtype)

    def __repr__(self) -> str:
        return f"BasisMatrix(n={self.n}, r={self.r})"


def as_array(P) -> np.ndarray:
    """Plain 2-D array view of a basis (``BasisMatrix`` or array-like)."""
    if isinstance(P, BasisMatrix):
        return P.data
    arr = np.asarray(P, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


@dataclass(frozen=True)
class EigenSplit:
    """Eigenvectors of a PSD matrix split at a threshold."""

    basis: BasisMatrix
    eigenvalues_kept: np.ndarray
    eigenvalues_dropped: np.ndarray

    @property
    def rank(self) -> int:
        return self.basis.r

    @property
    def lambda_max(self) -> float:
        if self.eigenvalues_kept.size:
            return float(self.eigenvalues_kept[0])
        if self.eigenvalues_dropped.size:
            return float(self.eigenvalues_dropped[0])
        return 0.0


def dif(Phat, P) -> float:
    """Subspace error ``||(I - Phat Phat') P||_2``, a number in [0, 1]."""
    Phat, P = as_array(Phat), as_array(P)
    if Phat.shape[0] != P.shape[0]:
        raise ValueError(f"dimension mismatch: {Phat.shape[0]} vs {P.shape[0]}")
    if P.shape[1] == 0:
        return 0.0
    R = P - Phat @ (Phat.T @ P)
    val = np.linalg.norm(R, 2)
    return float(min(max(val, 0.0), 1.0))


def _subset_count(n: int, s: int) -> int:
    return math.comb(n, s)


def _iter_subset_blocks(n: int, s: int, block: int = 4096):
    it = combinations(range(n), s)
    while True:
        chunk = list(islice(it, block))
        if not chunk:
            return
        yield np.array(chunk, dtype=np.intp)


def kappa_s(P, s: int, mode: str = "auto", budget: int | None = None) -> float:
    """Denseness coefficient ``max_{|T| <= s} ||I_T' P||_2``.

    ``mode="exact"`` enumerates every size-``s`` row subset, ``"bound"``
    returns ``sqrt(s) * kappa_1(P)`` and ``"auto"`` picks exact for
    ``n <= 64`` and the bound otherwise.
    """
    P = as_array(P)
    n, r = P.shape
    if s < 1:
        raise ValueError("s must be a positive integer")
    if s > n:
        raise ValueError(f"s={s} exceeds n={n}")
    if r == 0:
        return 0.0
    row_norms = np.sqrt(np.sum(P * P, axis=1))
    kappa1 = float(row_norms.max())
    if mode == "auto":
        mode = "exact" if n <= EXACT_KAPPA_MAX_N else "bound"
    if mode == "bound":
        return math.sqrt(s) * kappa1
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    if s == 1:
        return kappa1
    budget = ENUMERATION_BUDGET if budget is None else budget
    if _subset_count(n, s) > budget:
        raise BudgetExceededError(f"C({n},{s}) = {_subset_count(n, s)} subsets exceeds budget {budget}")
    best = 0.0
    for idx in _iter_subset_blocks(n, s):
        sub = P[idx]  # (m, s, r)
        if s <= r:
            G = sub @ np.swapaxes(sub, 1, 2)
        else:
            G = np.swapaxes(sub, 1, 2) @ sub
        best = max(best, float(np.linalg.eigvalsh(G)[:, -1].max()))
    return math.sqrt(max(best, 0.0))


def ric_delta(P, s: int, budget: int | None = None) -> float:
    """Restricted isometry constant ``delta_s(I - P P')`` by exhaustive search.

    Meant as a test oracle on small instances: the projector is formed
    explicitly and the Gram matrix of every size-``s`` column subset is
    eigen-decomposed.
    """
    P = as_array(P)
    n = P.shape[0]
    if s < 1 or s > n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    budget = ENUMERATION_BUDGET if budget is None else budget
    if _subset_count(n, s) > budget:
        raise BudgetExceededError(f"C({n},{s}) = {_subset_count(n, s)} subsets exceeds budget {budget}")
    Phi = np.eye(n) - P @ P.T
    delta = 0.0
    for idx in _iter_subset_blocks(n, s):
        cols = np.swapaxes(Phi[:, idx], 0, 1)  # (m, n, s)
        G = np.swapaxes(cols, 1, 2) @ cols
        w = np.linalg.eigvalsh(G)
        delta = max(delta, float(np.max(1.0 - w[:, 0])), float(np.max(w[:, -1] - 1.0)))
    return max(delta, 0.0)


def _split(vecs: np.ndarray, vals: np.ndarray, thresh: float) -> EigenSplit:
    # descending eigenvalue, ties by ascending original index
    order = np.lexsort((np.arange(vals.size), -vals))
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    keep = vals >= thresh
    return EigenSplit(
        basis=BasisMatrix(vecs[:, keep], check=False),
        eigenvalues_kept=vals[keep],
        eigenvalues_dropped=vals[~keep],
    )


def eigenvectors_above(M, thresh: float) -> EigenSplit:
    """Basis for the eigenvectors of symmetric PSD ``M`` with eigenvalue >= ``thresh``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if thresh < 0:
        raise ValueError("thresh must be non-negative")
    asym = np.max(np.abs(M - M.T)) if M.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValueError(f"matrix is not symmetric (max |M - M'| = {asym:.3g})")
    M = 0.5 * (M + M.T)
    try:
        vals, vecs = scipy.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise EigenDecompositionError(str(exc)) from exc
    return _split(vecs, vals, thresh)


def eigensplit_from_samples(D, alpha: int, thresh: float) -> EigenSplit:
    """Same split as ``eigenvectors_above(D @ D.T / alpha, thresh)``, via an SVD of ``D``.

    Avoids forming the ``n x n`` Gram matrix.  Eigenvalues are ``sigma**2 / alpha``;
    when ``D`` has fewer columns than rows the missing eigenvalues are zeros.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    try:
        U, sv, _ = scipy.linalg.svd(D, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        try:
            U, sv, _ = scipy.linalg.svd(D, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise EigenDecompositionError(str(exc)) from exc
    vals = sv**2 / alpha
    split = _split(U, vals, thresh)
    pad = n - vals.size
    if pad > 0:
        dropped = np.concatenate([split.eigenvalues_dropped, np.zeros(pad)])
        split = EigenSplit(split.basis, split.eigenvalues_kept, dropped)
    return split


def restricted_projector(Q: np.ndarray, T) -> np.ndarray:
    """Columns ``T`` of ``I - Q Q'`` as an ``n x |T|`` array."""
    T = np.asarray(T, dtype=np.intp)
    A = -(Q @ Q[T].T) if Q.shape[1] else np.zeros((Q.shape[0], T.size))
    A[T, np.arange(T.size)] += 1.0
    return A


def projected_ls(Phi_base, T, y, *, rank_tol: float | None = None) -> np.ndarray:
    """Least-squares estimate supported on ``T``: ``x_T = ((I - P P')_T)^+ y``.

    Solved by a Householder QR of the restricted matrix.  Raises
    :class:`SingularityError` if its smallest singular value is at most
    ``rank_tol``.
    """
    Q = as_array(Phi_base)
    y = np.asarray(y, dtype=float)
    n = Q.shape[0]
    if y.shape != (n,):
        raise ValueError(f"y must have shape ({n},), got {y.shape}")
    T = np.unique(np.asarray(T, dtype=np.intp))
    x = np.zeros(n)
    if T.size == 0:
        return x
    if T[0] < 0 or T[-1] >= n:
        raise IndexError("support index out of range")
    A = restricted_projector(Q, T)
    Qf, R = np.linalg.qr(A)
    sv = np.linalg.svd(R, compute_uv=False)
    tol = RANK_TOL if rank_tol is None else rank_tol
    if sv[-1] <= tol:
        raise SingularityError(
            f"restricted projector on |T|={T.size} is rank deficient (sigma_min={sv[-1]:.3g})"
        )
    x[T] = scipy.linalg.solve_triangular(R, Qf.T @ y)
    return x
