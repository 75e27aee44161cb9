"""Sparse linear algebra for the symmetric indefinite saddle-point systems.

CSR construction and matvec are exact, deterministic reimplementations
(duplicates summed in insertion order).  Solves go through one contract with
two backends: a sparse direct factorization below a size threshold and a
preconditioned MINRES above it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    SingularMatrix,
    SizeLimitExceeded,
    SolverBreakdown,
    ToleranceNotReached,
)

_PIVOT_RTOL = 1e-13
_DENSE_SVD_CAP = 2000


@dataclass
class SparseMatrixCSR:
    """Compressed sparse row matrix.

    Column indices are strictly increasing within each row; duplicates were
    summed at construction time.
    """

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple[int, int]

    @property
    def nnz(self) -> int:
        return len(self.data)

    @property
    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry (cached)."""
        cached = getattr(self, "_row_ids", None)
        if cached is None:
            cached = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
            object.__setattr__(self, "_row_ids", cached)
        return cached

    def diagonal(self) -> np.ndarray:
        n = min(self.shape)
        d = np.zeros(n)
        for i in range(n):
            row = slice(self.indptr[i], self.indptr[i + 1])
            hit = np.searchsorted(self.indices[row], i)
            cols = self.indices[row]
            if hit < len(cols) and cols[hit] == i:
                d[i] = self.data[row][hit]
        return d

    def entry(self, i: int, j: int) -> float:
        row = slice(self.indptr[i], self.indptr[i + 1])
        cols = self.indices[row]
        hit = np.searchsorted(cols, j)
        if hit < len(cols) and cols[hit] == j:
            return float(self.data[row][hit])
        return 0.0

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.csr_matrix(
            (self.data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for i in range(self.shape[0]):
            row = slice(self.indptr[i], self.indptr[i + 1])
            out[i, self.indices[row]] = self.data[row]
        return out


def csr_from_triplets(n: int, m: int, rows, cols, values) -> SparseMatrixCSR:
    """Build CSR from COO triplets; duplicates are summed in input order."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if not (len(rows) == len(cols) == len(values)):
        raise DimensionMismatch("triplet arrays differ in length")
    if len(rows) and (rows.min() < 0 or rows.max() >= n
                      or cols.min() < 0 or cols.max() >= m):
        raise IndexOutOfRange(f"triplet index outside {n} x {m}")

    if len(rows) == 0:
        return SparseMatrixCSR(np.zeros(n + 1, dtype=np.int64),
                               np.zeros(0, dtype=np.int64), np.zeros(0), (n, m))

    # Stable sort keeps duplicate triplets in insertion order, and np.add.at
    # accumulates sequentially, so the summation order is reproducible.
    order = np.lexsort((cols, rows))
    r, c, v = rows[order], cols[order], values[order]
    new_group = np.empty(len(r), dtype=bool)
    new_group[0] = True
    new_group[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    gid = np.cumsum(new_group) - 1
    data = np.zeros(int(gid[-1]) + 1)
    np.add.at(data, gid, v)
    ur, uc = r[new_group], c[new_group]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, ur + 1, 1)
    indptr = np.cumsum(indptr)
    return SparseMatrixCSR(indptr, uc.astype(np.int64), data, (n, m))


def matvec(A: SparseMatrixCSR, x: np.ndarray) -> np.ndarray:
    """y = A x, accumulated in storage (ascending column) order per row."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"matvec: {A.shape} with vector {x.shape}")
    if A.nnz == 0:
        return np.zeros(A.shape[0])
    return np.bincount(A.row_ids, weights=A.data * x[A.indices],
                       minlength=A.shape[0])


@dataclass
class SolverConfig:
    """Knobs of solve_symmetric_indefinite.

    ``precond_apply`` (an SPD operator, e.g. a block-diagonal solve) takes
    precedence over ``precond_diag`` for the iterative backend.
    """

    tol: float = 1e-10
    direct_threshold: int = 50_000
    max_iterations: int | None = None
    method: str = "auto"              # auto | direct | minres
    precond_diag: np.ndarray | None = field(default=None, repr=False)
    precond_apply: object = field(default=None, repr=False)


def _check_symmetry(K: SparseMatrixCSR, n_samples: int = 500) -> None:
    n = K.shape[0]
    if K.shape[0] != K.shape[1]:
        raise DimensionMismatch("solve needs a square matrix")
    if K.nnz == 0:
        return
    scale = np.abs(K.data).max()
    idx = np.linspace(0, K.nnz - 1, min(n_samples, K.nnz)).astype(int)
    row_ids = K.row_ids
    for t in idx:
        i, j = int(row_ids[t]), int(K.indices[t])
        if abs(K.data[t] - K.entry(j, i)) > 1e-12 * max(scale, 1.0):
            raise SolverBreakdown(f"matrix not symmetric at ({i}, {j})")


def _solve_direct(K: SparseMatrixCSR, rhs: np.ndarray) -> np.ndarray:
    try:
        lu = scipy.sparse.linalg.splu(K.to_scipy().tocsc(),
                                      permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from exc
    u_diag = np.abs(lu.U.diagonal())
    if u_diag.size and u_diag.min() < _PIVOT_RTOL * max(u_diag.max(), 1e-300):
        raise SingularMatrix(
            f"pivot ratio {u_diag.min() / u_diag.max():.2e} below {_PIVOT_RTOL}")
    return lu.solve(rhs)


def _minres(K: SparseMatrixCSR, rhs: np.ndarray, tol: float,
            max_iterations: int, apply_m_inv):
    """MINRES with an SPD preconditioner given as an operator.

    Short-recurrence Lanczos in the preconditioned inner product; |eta|
    tracks the preconditioned residual norm.
    """
    n = len(rhs)
    x = np.zeros(n)
    v_old = np.zeros(n)
    v = rhs.copy()
    z = apply_m_inv(v)
    gamma_old = 1.0
    gamma = float(np.sqrt(z @ v))
    if gamma == 0.0:
        return x, 0
    norm0 = gamma
    eta = gamma
    s_old = s = 0.0
    c_old = c = 1.0
    w_old = np.zeros(n)
    w = np.zeros(n)

    for it in range(1, max_iterations + 1):
        z = z / gamma
        Az = matvec(K, z)
        delta = float(z @ Az)
        v_new = Az - (delta / gamma) * v - (gamma / gamma_old) * v_old
        z_new = apply_m_inv(v_new)
        gamma_new = float(np.sqrt(max(z_new @ v_new, 0.0)))

        a0 = c * delta - c_old * s * gamma
        a1 = np.hypot(a0, gamma_new)
        a2 = s * delta + c_old * c * gamma
        a3 = s_old * gamma
        if a1 == 0.0:
            raise SolverBreakdown("MINRES breakdown (zero subdiagonal)")
        c_new = a0 / a1
        s_new = gamma_new / a1

        w_new = (z - a3 * w_old - a2 * w) / a1
        x = x + (c_new * eta) * w_new
        eta = -s_new * eta

        v_old, v = v, v_new
        w_old, w = w, w_new
        z = z_new
        gamma_old, gamma = gamma, gamma_new
        c_old, c = c, c_new
        s_old, s = s, s_new

        if abs(eta) <= tol * norm0 or gamma == 0.0:
            return x, it
    return x, max_iterations


def solve_symmetric_indefinite(K: SparseMatrixCSR, rhs: np.ndarray,
                               config: SolverConfig | None = None):
    """Solve K x = rhs for symmetric (indefinite) K.

    Returns (x, relative_residual).  Raises ToleranceNotReached with the
    best iterate attached when the residual target is missed.
    """
    config = config or SolverConfig()
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != K.shape[0]:
        raise DimensionMismatch("rhs length does not match matrix")
    _check_symmetry(K)

    norm_rhs = float(np.linalg.norm(rhs))
    if norm_rhs == 0.0:
        return np.zeros(K.shape[0]), 0.0

    n = K.shape[0]
    method = config.method
    if method == "auto":
        method = "direct" if n <= config.direct_threshold else "minres"

    if method == "direct":
        x = _solve_direct(K, rhs)
        iterations = 0
    elif method == "minres":
        if config.precond_apply is not None:
            apply_m_inv = config.precond_apply
        else:
            diag = config.precond_diag
            if diag is None:
                diag = np.abs(K.diagonal())
            diag = np.where(np.abs(diag) > 1e-300, np.abs(diag), 1.0)
            inv = 1.0 / diag
            apply_m_inv = lambda r: inv * r
        max_it = config.max_iterations or max(20 * n, 1000)
        x, iterations = _minres(K, rhs, 0.01 * config.tol, max_it, apply_m_inv)
    else:
        raise SolverBreakdown(f"unknown solver method {config.method!r}")

    residual = float(np.linalg.norm(matvec(K, x) - rhs) / norm_rhs)
    if residual > config.tol:
        raise ToleranceNotReached(
            f"residual {residual:.3e} above tol {config.tol:.3e}",
            x=x, iterations=iterations, residual=residual)
    return x, residual


def min_singular_value_dense(M: np.ndarray) -> float:
    """Smallest singular value of a small dense matrix."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] > _DENSE_SVD_CAP:
        raise SizeLimitExceeded(
            f"{M.shape[0]} rows exceeds dense cap {_DENSE_SVD_CAP}")
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[-1])


# --- MatrixMarket coordinate format ---------------------------------------

def write_matrix_market(A: SparseMatrixCSR, path) -> None:
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row_ids, A.indices, A.data):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def read_matrix_market(path) -> SparseMatrixCSR:
    with open(path) as fh:
        header = fh.readline()
        if "coordinate" not in header:
            raise DimensionMismatch("only coordinate MatrixMarket supported")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        n, m, nnz = (int(t) for t in line.split())
        rows, cols, vals = [], [], []
        for _ in range(nnz):
            i, j, v = fh.readline().split()
            rows.append(int(i) - 1)
            cols.append(int(j) - 1)
            vals.append(float(v))
    return csr_from_triplets(n, m, rows, cols, vals)
