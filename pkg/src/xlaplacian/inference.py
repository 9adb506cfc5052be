"""Downstream inference: spectral embedding + k-means, permutation-maximized
overlap, detectability thresholds, rank estimation, and alternating least
squares completion with spectral initialization."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.optimize import linear_sum_assignment

from .baselines import bethe_hessian, trim_rect
from .graphs import CompletionInstance, PairwiseParams, PlantedGraph
from .linalg import EigenPairs, SparseSymMatrix, bipartite_embed, top_eigenpairs
from .xlap import LearningConfig, learn_regularization


class NumericalError(RuntimeError):
    """Objective became non-finite during optimization."""


@dataclass(frozen=True)
class ClusteringResult:
    labels: np.ndarray
    overlap: float
    permutation: np.ndarray


@dataclass
class CompletionResult:
    u: np.ndarray
    v: np.ndarray
    rmse: float
    iterations: int
    objective_trace: list[float] = field(default_factory=list)


# ---------------------------------------------------------------------------
# k-means on spectral embeddings
# ---------------------------------------------------------------------------

def _kmeans_once(x: np.ndarray, k: int, rng: np.random.Generator,
                 max_iter: int) -> tuple[np.ndarray, float]:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        tot = d2.sum()
        if tot <= 0:
            centers[c] = x[int(rng.integers(n))]
        else:
            centers[c] = x[int(rng.choice(n, p=d2 / tot))]
        d2 = np.minimum(d2, np.sum((x - centers[c]) ** 2, axis=1))

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dist = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dist, axis=1)
        for c in range(k):
            mask = new_labels == c
            if mask.any():
                centers[c] = x[mask].mean(axis=0)
            else:
                centers[c] = x[int(np.argmax(np.min(dist, axis=1)))]
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    inertia = float(np.sum((x - centers[labels]) ** 2))
    return labels, inertia


def kmeans(x: np.ndarray, k: int, restarts: int = 10, max_iter: int = 100,
           seed: int = 0) -> np.ndarray:
    """k-means with k-means++ seeding; best of `restarts` runs by
    within-cluster sum of squares.  Deterministic per seed."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] < k:
        raise ValueError("fewer points than clusters")
    if k == 1:
        return np.zeros(x.shape[0], dtype=np.int64)
    rng = np.random.default_rng(seed)
    best, best_inertia = None, np.inf
    for _ in range(restarts):
        labels, inertia = _kmeans_once(x, k, rng, max_iter)
        if inertia < best_inertia:
            best, best_inertia = labels, inertia
    return best


def embed_kmeans(pairs, q: int, use_range: tuple[int, int] | None = None,
                 restarts: int = 10, seed: int = 0) -> np.ndarray:
    """Cluster the rows of selected eigenvectors into q groups.

    ``use_range`` is a 1-based inclusive (lo, hi) rank range into the
    eigenvector columns (default: all of them); accepts an
    :class:`EigenPairs` or a plain (n, k) column matrix.
    """
    vectors = pairs.vectors if isinstance(pairs, EigenPairs) else np.asarray(pairs)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    k = vectors.shape[1]
    if use_range is None:
        use_range = (1, k)
    lo, hi = use_range
    if not (1 <= lo <= hi <= k):
        raise ValueError(f"vector range {use_range} outside available 1..{k}")
    return kmeans(vectors[:, lo - 1: hi], q, restarts=restarts, seed=seed)


# ---------------------------------------------------------------------------
# overlap
# ---------------------------------------------------------------------------

def overlap_permutation(pred: np.ndarray, truth: np.ndarray,
                        q: int) -> tuple[float, np.ndarray]:
    """Best label permutation and the agreement fraction it achieves.

    The maximum over permutations is an assignment problem on the confusion
    matrix and is solved exactly.
    """
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError("label arrays must have equal length")
    for name, arr in (("pred", pred), ("truth", truth)):
        if arr.size and (arr.min() < 0 or arr.max() >= q):
            raise ValueError(f"{name} labels outside [0, {q})")
    confusion = np.zeros((q, q), dtype=np.int64)
    np.add.at(confusion, (pred, truth), 1)
    rows, cols = linear_sum_assignment(-confusion)
    perm = np.empty(q, dtype=np.int64)
    perm[rows] = cols
    agree = confusion[rows, cols].sum()
    return float(agree / max(len(pred), 1)), perm


def overlap(pred: np.ndarray, truth: np.ndarray, q: int) -> float:
    """Fraction of correctly reconstructed labels, maximized over label
    permutations."""
    return overlap_permutation(pred, truth, q)[0]


def clustering_result(pred: np.ndarray, truth: np.ndarray, q: int) -> ClusteringResult:
    ov, perm = overlap_permutation(pred, truth, q)
    return ClusteringResult(labels=perm[pred], overlap=ov, permutation=perm)


# ---------------------------------------------------------------------------
# theoretical thresholds and spectrum statistics
# ---------------------------------------------------------------------------

def sbm_threshold(c: float, q: int) -> float:
    """Detectability transition eps* = (sqrt(c) - 1) / (sqrt(c) - 1 + q)."""
    if c <= 1:
        raise ValueError("mean degree must exceed 1 (undetectable regime)")
    s = np.sqrt(c) - 1.0
    return float(s / (s + q))


def excess_degree(graph) -> float:
    """<k^2>/<k> - 1 over the empirical (entry-count) degree sequence."""
    a = graph.adjacency if isinstance(graph, PlantedGraph) else graph
    k = a.row_counts().astype(np.float64)
    tot = k.sum()
    if tot == 0:
        raise ValueError("excess degree undefined for an edgeless graph")
    return float((k @ k) / tot - 1.0)


def pairwise_limit(params: PairwiseParams) -> float:
    """Theoretical measurement budget c_hat below which no algorithm can
    recover the pairwise clusters:
    1/c_hat = (1/q) int ds (p_in - p_out)^2 / (p_in + (q-1) p_out)
    with the model's Gaussian weight densities.  Returns ``inf`` when the
    integral is numerically zero (identical distributions)."""
    sig = np.sqrt(params.variance)

    def gauss(s, m):
        return np.exp(-((s - m) ** 2) / (2 * params.variance)) / (sig * np.sqrt(2 * np.pi))

    def integrand(s):
        p_in = gauss(s, params.mean_in)
        p_out = gauss(s, params.mean_out)
        den = p_in + (params.q - 1) * p_out
        if den <= 0:
            return 0.0
        return (p_in - p_out) ** 2 / den

    lo = min(params.mean_in, params.mean_out) - 12 * sig
    hi = max(params.mean_in, params.mean_out) + 12 * sig
    val, _ = quad(integrand, lo, hi, epsabs=1e-300, epsrel=1e-8, limit=400)
    if val <= 1e-12:
        return np.inf
    return float(params.q / val)


def estimate_rank(values, r_max: int) -> int:
    """Rank from the largest consecutive-ratio gap in a descending
    non-negative spectrum: argmax over 1 <= i <= r_max of
    values[i-1] / max(values[i], floor) with floor = 1e-12 * values[0].
    Returns 0 when every value is below the floor."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] < r_max + 1:
        raise ValueError(f"need at least r_max + 1 = {r_max + 1} values")
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    if values[0] <= 0:
        return 0
    floor = 1e-12 * values[0]
    ratios = values[:r_max] / np.maximum(values[1: r_max + 1], floor)
    return int(np.argmax(ratios)) + 1


# ---------------------------------------------------------------------------
# matrix completion
# ---------------------------------------------------------------------------

def spectral_init(inst: CompletionInstance, method: str, r: int,
                  trim_factor: float = 3.0, seed: int = 0,
                  learn_kwargs: dict | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Initial factors from the top-r spectrum of a chosen operator.

    method: 'trimsvd' (bipartite embedding of the trimmed matrix),
    'bethe-hessian' (most negative pairs of H on the embedding), or
    'xlaplacian' (embedding plus learned diagonal).  Row-block and
    column-block components are normalized and scaled by sqrt(|eigenvalue|).
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    n, m = inst.shape
    if inst.observed.nnz == 0:
        raise ValueError("observed matrix has no revealed entries")
    if method == "trimsvd":
        emb = bipartite_embed(trim_rect(inst.observed, factor=trim_factor))
        pairs = top_eigenpairs(emb, r, seed=seed)
        lam = pairs.values
    elif method == "bethe-hessian":
        h = bethe_hessian(bipartite_embed(inst.observed))
        pairs = top_eigenpairs(h.negate(), r, seed=seed)
        lam = -pairs.values
    elif method == "xlaplacian":
        emb = bipartite_embed(inst.observed)
        cfg = LearningConfig(q=r, seed=seed, **(learn_kwargs or {}))
        state = learn_regularization(emb, cfg)
        pairs = state.pairs
        lam = pairs.values
    else:
        raise ValueError(f"unknown init method {method!r}")
    u0 = np.empty((n, r))
    v0 = np.empty((m, r))
    for k in range(r):
        ub, vb = pairs.vectors[:n, k], pairs.vectors[n:, k]
        nu, nv = np.linalg.norm(ub), np.linalg.norm(vb)
        if nu < 1e-12 or nv < 1e-12:
            raise ValueError("degenerate embedding vector (zero block component)")
        s = np.sqrt(abs(lam[k]))
        u0[:, k] = s * ub / nu
        v0[:, k] = s * vb / nv
    return u0, v0


def _solve_rows(mat_csr: sp.csr_matrix, factors: np.ndarray, r: int,
                ridge: float) -> np.ndarray:
    """Ridge least squares per row of mat against the given column factors."""
    n = mat_csr.shape[0]
    out = np.zeros((n, r))
    indptr, indices, data = mat_csr.indptr, mat_csr.indices, mat_csr.data
    eye = ridge * np.eye(r)
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        if lo == hi:
            continue
        f = factors[indices[lo:hi]]
        out[i] = np.linalg.solve(f.T @ f + eye, f.T @ data[lo:hi])
    return out


def als_complete(inst: CompletionInstance, r: int,
                 init: tuple[np.ndarray, np.ndarray],
                 max_iters: int = 400, tol: float = 1e-12,
                 ridge: float = 1e-6) -> CompletionResult:
    """Alternating ridge-regularized least squares on
    sum_revealed (A_ij - (U V^T)_ij)^2 + ridge (||U||^2 + ||V||^2).

    Each half-sweep minimizes the objective exactly over one factor, so the
    recorded objective trace is non-increasing.  Stops when a full sweep
    improves the objective by less than ``tol`` or after ``max_iters``
    sweeps.  The reported RMSE is measured against the ground truth over ALL
    entries.  Raises :class:`NumericalError` on a non-finite objective.
    """
    u = np.array(init[0], dtype=np.float64, copy=True)
    v = np.array(init[1], dtype=np.float64, copy=True)
    if u.shape[1] != r or v.shape[1] != r:
        raise ValueError("init factors do not match the requested rank")
    a_csr = inst.observed.tocsr()
    at_csr = a_csr.T.tocsr()
    coo = inst.observed.tocoo()
    rows, cols, vals = coo.row, coo.col, coo.data

    def objective() -> float:
        pred = np.sum(u[rows] * v[cols], axis=1)
        return float(np.sum((vals - pred) ** 2)
                     + ridge * (np.sum(u * u) + np.sum(v * v)))

    trace = [objective()]
    iterations = 0
    for _ in range(max_iters):
        u = _solve_rows(a_csr, v, r, ridge)
        v = _solve_rows(at_csr, u, r, ridge)
        obj = objective()
        if not np.isfinite(obj):
            raise NumericalError("ALS objective diverged (non-finite)")
        trace.append(obj)
        iterations += 1
        if trace[-2] - trace[-1] < tol:
            break
    truth = inst.ground_truth()
    rmse = float(np.linalg.norm(u @ v.T - truth) / np.sqrt(truth.size))
    return CompletionResult(u=u, v=v, rmse=rmse, iterations=iterations,
                            objective_trace=trace)
