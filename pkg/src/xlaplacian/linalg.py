"""Sparse symmetric storage, lazy linear operators, and eigensolvers.

The central objects are :class:`SparseSymMatrix` (CSR storage of a real
symmetric matrix with both triangles explicit) and :class:`LinearOperator`
(a sparse base plus an optional diagonal shift and an optional lazy rank-one
term).  ``top_eigenpairs`` returns the algebraically largest eigenpairs with
residual certificates, using a dense symmetric solver below
``DENSE_THRESHOLD`` and implicitly restarted Lanczos (ARPACK) above it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

#: Below this dimension the dense symmetric solver is both the primary
#: path and the test oracle; above it the iterative solver is used.
DENSE_THRESHOLD = 512

DEFAULT_MAX_ITER = 1000


class NonConvergenceError(RuntimeError):
    """Eigensolver ran out of budget.

    ``best`` holds the best available iterate as an :class:`EigenPairs`
    (possibly with fewer pairs than requested, possibly ``None``) so that
    callers may retry with a larger budget or warm-start from it.
    """

    def __init__(self, message: str, best: "EigenPairs | None" = None):
        super().__init__(message)
        self.best = best


# ---------------------------------------------------------------------------
# storage
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SparseSymMatrix:
    """Real symmetric matrix in CSR form, both (i,j) and (j,i) stored.

    Invariants: ``row_offsets`` is non-decreasing with ``row_offsets[0] == 0``
    and ``row_offsets[-1] == len(col_indices)``; column indices are strictly
    increasing within each row; the entry pattern and values are symmetric.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @cached_property
    def _scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=(self.n, self.n)
        )

    @property
    def nnz(self) -> int:
        return int(self.col_indices.shape[0])

    @staticmethod
    def empty(n: int) -> "SparseSymMatrix":
        """All-zero matrix of dimension n."""
        return SparseSymMatrix(
            n,
            np.zeros(n + 1, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            np.zeros(0, dtype=np.float64),
        )

    @staticmethod
    def from_coo(n: int, i, j, v) -> "SparseSymMatrix":
        """Build from coordinate triplets that already contain both triangles.

        Raises ``ValueError`` on duplicate coordinates, out-of-range indices
        or an asymmetric pattern.
        """
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        v = np.asarray(v, dtype=np.float64)
        if not (i.shape == j.shape == v.shape):
            raise ValueError("coordinate arrays must have equal length")
        if i.size and (i.min() < 0 or i.max() >= n or j.min() < 0 or j.max() >= n):
            raise ValueError("index out of range")
        order = np.lexsort((j, i))
        i, j, v = i[order], j[order], v[order]
        if i.size > 1:
            dup = (i[1:] == i[:-1]) & (j[1:] == j[:-1])
            if dup.any():
                k = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate entry at ({i[k]}, {j[k]})")
        row_offsets = np.zeros(n + 1, dtype=np.int64)
        np.add.at(row_offsets, i + 1, 1)
        np.cumsum(row_offsets, out=row_offsets)
        m = SparseSymMatrix(n, row_offsets, j, v)
        m.validate()
        return m

    @staticmethod
    def from_edges(n: int, u, v, w=None) -> "SparseSymMatrix":
        """Build from undirected edges given once each (u != v)."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        if np.any(u == v):
            raise ValueError("self-loops not allowed in edge construction")
        w = np.ones(u.shape[0]) if w is None else np.asarray(w, dtype=np.float64)
        return SparseSymMatrix.from_coo(
            n, np.concatenate([u, v]), np.concatenate([v, u]), np.concatenate([w, w])
        )

    @staticmethod
    def from_dense(a: np.ndarray, tol: float = 0.0) -> "SparseSymMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square matrix")
        if not np.allclose(a, a.T, atol=1e-12):
            raise ValueError("matrix is not symmetric")
        a = (a + a.T) / 2.0
        i, j = np.nonzero(np.abs(a) > tol)
        return SparseSymMatrix.from_coo(a.shape[0], i, j, a[i, j])

    def validate(self) -> None:
        """Check structural invariants; raises ``ValueError`` on violation."""
        if self.row_offsets.shape != (self.n + 1,):
            raise ValueError("row_offsets has wrong length")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != self.nnz:
            raise ValueError("row_offsets endpoints inconsistent with nnz")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        for r in range(self.n):
            cols = self.col_indices[self.row_offsets[r]: self.row_offsets[r + 1]]
            if cols.size > 1 and np.any(np.diff(cols) <= 0):
                raise ValueError(f"columns not strictly increasing in row {r}")
        t = self._scipy - self._scipy.T
        if t.nnz and np.max(np.abs(t.data)) > 1e-12 * max(1.0, self.max_abs()):
            raise ValueError("matrix is not symmetric")

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.nnz else 0.0

    def degrees(self) -> np.ndarray:
        """Row sums (weighted degrees)."""
        return np.asarray(self._scipy.sum(axis=1)).ravel()

    def row_counts(self) -> np.ndarray:
        """Number of stored entries per row (unweighted degrees)."""
        return np.diff(self.row_offsets)

    def to_dense(self) -> np.ndarray:
        return self._scipy.toarray()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self._scipy @ x

    def scale(self, alpha: float) -> "SparseSymMatrix":
        return SparseSymMatrix(
            self.n, self.row_offsets, self.col_indices, alpha * self.values
        )


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearOperator:
    """base + diag(diag_shift) + zeta * outer(direction, direction), all lazy.

    Action on x: ``base @ x + diag_shift * x + zeta * direction * (direction @ x)``.
    Symmetric by construction; the rank-one term is never densified.
    """

    base: SparseSymMatrix
    diag_shift: np.ndarray | None = None
    rank_one: tuple[float, np.ndarray] | None = None

    def __post_init__(self):
        n = self.base.n
        if self.diag_shift is not None and np.shape(self.diag_shift) != (n,):
            raise ValueError("diag_shift length must equal dimension")
        if self.rank_one is not None:
            zeta, d = self.rank_one
            if np.shape(d) != (n,):
                raise ValueError("rank-one direction length must equal dimension")
            if abs(np.linalg.norm(d) - 1.0) > 1e-8:
                raise ValueError("rank-one direction must be a unit vector")

    @property
    def n(self) -> int:
        return self.base.n

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim not in (1, 2) or x.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: operator is {self.n}, vector is {x.shape}")
        y = self.base.matvec(x)
        if self.diag_shift is not None:
            y = y + (self.diag_shift * x.T).T
        if self.rank_one is not None:
            zeta, d = self.rank_one
            y = y + zeta * np.outer(d, d @ x).reshape(y.shape)
        return y

    def add_diag(self, extra: np.ndarray) -> "LinearOperator":
        cur = np.zeros(self.n) if self.diag_shift is None else self.diag_shift
        return LinearOperator(self.base, cur + np.asarray(extra, dtype=np.float64), self.rank_one)

    def negate(self) -> "LinearOperator":
        diag = None if self.diag_shift is None else -self.diag_shift
        r1 = None if self.rank_one is None else (-self.rank_one[0], self.rank_one[1])
        return LinearOperator(self.base.scale(-1.0), diag, r1)

    def to_dense(self) -> np.ndarray:
        a = self.base.to_dense()
        if self.diag_shift is not None:
            a = a + np.diag(self.diag_shift)
        if self.rank_one is not None:
            zeta, d = self.rank_one
            a = a + zeta * np.outer(d, d)
        return a

    def norm_upper_bound(self) -> float:
        """Cheap upper bound on the spectral norm (infinity norm of parts)."""
        b = 0.0
        if self.base.nnz:
            b = float(np.max(np.bincount(
                np.repeat(np.arange(self.n), self.base.row_counts()),
                weights=np.abs(self.base.values), minlength=self.n)))
        if self.diag_shift is not None:
            b += float(np.max(np.abs(self.diag_shift)))
        if self.rank_one is not None:
            b += abs(self.rank_one[0])
        return b

    def to_scipy(self) -> spla.LinearOperator:
        return spla.LinearOperator(
            (self.n, self.n), matvec=self.matvec, rmatvec=self.matvec, dtype=np.float64
        )


def as_operator(a) -> LinearOperator:
    """Wrap a SparseSymMatrix (or pass through a LinearOperator)."""
    if isinstance(a, LinearOperator):
        return a
    if isinstance(a, SparseSymMatrix):
        return LinearOperator(a)
    raise TypeError(f"cannot interpret {type(a).__name__} as a linear operator")


def matvec(op: LinearOperator, x: np.ndarray) -> np.ndarray:
    """Apply the operator to a vector."""
    return as_operator(op).matvec(x)


# ---------------------------------------------------------------------------
# eigenpairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues in descending order, unit eigenvectors as columns.

    ``residuals[i]`` is ``||op v_i - values[i] v_i||_2``; every residual is
    certified <= ``tol`` (absolute).
    """

    values: np.ndarray
    vectors: np.ndarray  # shape (n, k), column i pairs with values[i]
    residuals: np.ndarray
    tol: float

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def n(self) -> int:
        return int(self.vectors.shape[0])

    def min_gap(self) -> float:
        """Smallest gap between consecutive returned eigenvalues."""
        if len(self) < 2:
            return np.inf
        return float(np.min(np.abs(np.diff(self.values))))

    def validate(self, ortho_tol: float = 1e-6, norm_tol: float = 1e-9) -> None:
        if np.any(np.diff(self.values) > 0):
            raise ValueError("eigenvalues not in descending order")
        if np.any(self.residuals > self.tol):
            raise ValueError("residual exceeds tolerance")
        norms = np.linalg.norm(self.vectors, axis=0)
        if np.any(np.abs(norms - 1.0) > norm_tol):
            raise ValueError("eigenvector not unit length")
        g = self.vectors.T @ self.vectors - np.eye(len(self))
        if len(self) > 1 and np.max(np.abs(g)) > ortho_tol:
            raise ValueError("eigenvectors not orthogonal")


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _pairs_from_dense(op: LinearOperator, q: int, tol: float) -> EigenPairs:
    w, u = np.linalg.eigh(op.to_dense())
    order = np.argsort(w)[::-1][:q]
    values = w[order]
    vectors = _canonical_signs(u[:, order])
    residuals = np.linalg.norm(op.matvec(vectors) - vectors * values, axis=0)
    return EigenPairs(values, vectors, residuals, tol)


def _warm_vector(n: int, warm_start: EigenPairs | None, seed: int) -> np.ndarray:
    if warm_start is not None and len(warm_start) > 0:
        if warm_start.n != n:
            raise ValueError("warm_start dimension mismatch")
        v0 = warm_start.vectors.sum(axis=1)
        nrm = np.linalg.norm(v0)
        if nrm > 0:
            return v0 / nrm
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    return v0 / np.linalg.norm(v0)


def top_eigenpairs(
    op,
    q: int,
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    warm_start: EigenPairs | None = None,
    seed: int = 0,
    dense_threshold: int = DENSE_THRESHOLD,
) -> EigenPairs:
    """Algebraically largest ``q`` eigenpairs of a symmetric operator.

    ``tol`` is the absolute residual bound certified on every returned pair;
    the default is ``1e-8 * max(1, norm bound)``.  For ``n <= dense_threshold``
    (or ``q >= n``) a full dense symmetric eigendecomposition is used; above
    it, implicitly restarted Lanczos started from ``warm_start`` (sum of the
    supplied vectors) or a seeded pseudo-random vector.  Deterministic given
    identical inputs.

    Raises :class:`NonConvergenceError` (carrying the best iterate) when the
    iteration budget ``max_iter`` is exhausted.
    """
    op = as_operator(op)
    n = op.n
    if not 1 <= q <= n:
        raise ValueError(f"need 1 <= q <= n, got q={q}, n={n}")
    scale = max(1.0, op.norm_upper_bound())
    if tol is None:
        tol = 1e-8 * scale

    if n <= dense_threshold or q >= n:
        pairs = _pairs_from_dense(op, q, tol)
        if np.any(pairs.residuals > tol):
            raise NonConvergenceError(
                f"dense solve residuals exceed tol={tol:g}", best=pairs
            )
        return pairs

    v0 = _warm_vector(n, warm_start, seed)
    ncv = min(n, max(2 * q + 1, 20))
    try:
        w, u = spla.eigsh(
            op.to_scipy(), k=q, which="LA", v0=v0, tol=tol / scale,
            maxiter=max_iter, ncv=ncv,
        )
    except spla.ArpackNoConvergence as e:
        best = None
        if e.eigenvalues is not None and e.eigenvalues.size:
            order = np.argsort(e.eigenvalues)[::-1]
            vals = e.eigenvalues[order]
            vecs = _canonical_signs(e.eigenvectors[:, order])
            res = np.linalg.norm(op.matvec(vecs) - vecs * vals, axis=0)
            best = EigenPairs(vals, vecs, res, tol)
        raise NonConvergenceError(
            f"eigensolver did not converge within {max_iter} iterations "
            f"({0 if best is None else len(best)}/{q} pairs available)",
            best=best,
        ) from e
    order = np.argsort(w)[::-1]
    values = w[order]
    vectors = _canonical_signs(u[:, order])
    residuals = np.linalg.norm(op.matvec(vectors) - vectors * values, axis=0)
    if np.any(residuals > tol):
        raise NonConvergenceError(
            f"residuals exceed tol={tol:g} after iterative solve",
            best=EigenPairs(values, vectors, residuals, tol),
        )
    return EigenPairs(values, vectors, residuals, tol)


# ---------------------------------------------------------------------------
# bipartite embedding of rectangular matrices
# ---------------------------------------------------------------------------

def bipartite_embed(a) -> SparseSymMatrix:
    """Symmetric block embedding [[0, A], [A^T, 0]] of an m x n sparse matrix.

    Its non-negative eigenvalues are the singular values of A and the
    spectrum is symmetric about zero.  Accepts any scipy sparse matrix or a
    dense array; raises ``ValueError`` for empty dimensions.
    """
    a = sp.csr_matrix(a)
    m, n = a.shape
    if m == 0 or n == 0:
        raise ValueError("cannot embed a matrix with an empty dimension")
    a = a.tocoo()
    i = np.concatenate([a.row, a.col + m])
    j = np.concatenate([a.col + m, a.row])
    v = np.concatenate([a.data, a.data])
    return SparseSymMatrix.from_coo(m + n, i, j, v)


# ---------------------------------------------------------------------------
# plain-text coordinate format
# ---------------------------------------------------------------------------

def save_coordinate(path, matrix) -> None:
    """Write `n m nnz` header plus one `i j value` triple per line (0-based).

    Symmetric matrices store both (i,j) and (j,i).
    """
    if isinstance(matrix, SparseSymMatrix):
        coo = matrix._scipy.tocoo()
        shape = (matrix.n, matrix.n)
    else:
        coo = sp.coo_matrix(matrix)
        shape = coo.shape
    with open(path, "w") as fh:
        fh.write(f"{shape[0]} {shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v!r}\n")


def load_coordinate(path):
    """Read the coordinate format; returns SparseSymMatrix when square and
    symmetric, otherwise a scipy CSR matrix.  Lines starting with '#' are
    ignored."""
    rows, cols, vals = [], [], []
    header = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if header is None:
                    if len(parts) != 3:
                        raise ValueError("header must be `n m nnz`")
                    header = (int(parts[0]), int(parts[1]), int(parts[2]))
                    continue
                if len(parts) != 3:
                    raise ValueError("expected `i j value`")
                rows.append(int(parts[0]))
                cols.append(int(parts[1]))
                vals.append(float(parts[2]))
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
    if header is None:
        raise ValueError(f"{path}: missing header line")
    n, m, nnz = header
    if len(vals) != nnz:
        raise ValueError(f"{path}: header promises {nnz} entries, found {len(vals)}")
    mat = sp.csr_matrix(
        (np.array(vals), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=(n, m),
    )
    if n == m:
        asym = (mat - mat.T)
        if asym.nnz == 0 or np.max(np.abs(asym.data)) <= 1e-12:
            coo = mat.tocoo()
            return SparseSymMatrix.from_coo(n, coo.row, coo.col, coo.data)
    return mat
