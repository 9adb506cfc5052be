"""Learned diagonal regularization for sparse spectral inference.

Localized eigenvectors of sparse or noisy matrices carry large eigenvalues
that bury the informative spectrum.  ``learn_regularization`` measures
localization with the inverse participation ratio (IPR) and iteratively
subtracts ``eta * v_i**2`` from the diagonal, where v is the most localized
of the current top-q eigenvectors, until all of them are delocalized.  The
resulting operator ``A + diag(X)`` is the X-Laplacian.

The ``predicted_*`` functions are first-order perturbation predictors for a
diagonal update ``-eta * diag(v**2)``.  They require the complete spectrum
and are intended as verification instruments at small dimension, not as
production paths.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    DENSE_THRESHOLD,
    EigenPairs,
    LinearOperator,
    NonConvergenceError,
    as_operator,
    top_eigenpairs,
)

log = logging.getLogger(__name__)


class DegenerateSpectrumError(ValueError):
    """An eigenvalue gap fell below gap_tol; the predictor would divide by ~0."""


# ---------------------------------------------------------------------------
# inverse participation ratio
# ---------------------------------------------------------------------------

def ipr(v: np.ndarray) -> float:
    """Inverse participation ratio sum(v_i^4) of a unit vector.

    Ranges from 1/n (uniform) to 1 (single coordinate); larger means more
    localized.  Raises ``ValueError`` if v is not unit length within 1e-8.
    """
    v = np.asarray(v, dtype=np.float64)
    nrm2 = float(v @ v)
    if abs(nrm2 - 1.0) > 2e-8:
        raise ValueError(f"ipr requires a unit vector, got ||v||^2 = {nrm2!r}")
    return float(np.sum(v ** 4))


def select_most_localized(pairs: EigenPairs) -> tuple[int, np.ndarray]:
    """Index and vector of the maximum-IPR member; ties go to the smaller
    eigenvalue-rank index."""
    if len(pairs) == 0:
        raise ValueError("empty eigenpair set")
    iprs = np.sum(pairs.vectors ** 4, axis=0)
    i = int(np.argmax(iprs))
    return i, pairs.vectors[:, i]


# ---------------------------------------------------------------------------
# learning loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LearningConfig:
    """Knobs for the regularization learning loop.

    ``delta`` defaults to 5/n when left ``None``.  ``eig_tol`` is forwarded
    to the eigensolver (``None`` = solver default).
    """

    q: int
    eta: float = 10.0
    delta: float | None = None
    max_steps: int = 500
    eig_tol: float | None = None
    eig_max_iter: int = 1000
    seed: int = 0

    def resolved_delta(self, n: int) -> float:
        d = 5.0 / n if self.delta is None else self.delta
        if not (1.0 / n < d <= 1.0):
            raise ValueError(f"delta must lie in (1/n, 1], got {d}")
        return d

    def validate(self, n: int) -> None:
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        self.resolved_delta(n)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Snapshot taken each time the diagonal is updated.

    The spectrum refers to the operator *before* the update, so
    ``trace_x == -eta * step`` with ``step`` counting prior updates.
    """

    step: int
    selected_index: int
    selected_ipr: float
    trace_x: float
    eigenvalues: np.ndarray
    iprs: np.ndarray


@dataclass
class LearningTrajectory:
    records: list[TrajectoryRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass
class XLaplacianState:
    """Result of ``learn_regularization``.

    ``x_diag`` is the learned non-positive diagonal; ``pairs`` holds the
    eigenpairs of the final operator (the solve that decided termination).
    """

    base: LinearOperator
    x_diag: np.ndarray
    steps: int
    trajectory: LearningTrajectory
    converged: bool
    pairs: EigenPairs

    def operator(self) -> LinearOperator:
        """The regularized operator base + diag(x_diag)."""
        return self.base.add_diag(self.x_diag)


def learn_regularization(a, cfg: LearningConfig) -> XLaplacianState:
    """Learn a non-positive diagonal X making the top-q eigenvectors of
    ``a + diag(X)`` delocalized.

    Each iteration solves the current top-q eigenpairs (warm-started from
    the previous ones), picks the most localized eigenvector v, and stops
    converged when its IPR is below delta; otherwise every diagonal entry i
    is decreased by ``eta * v_i**2``.  Hitting ``max_steps`` stops with
    ``converged=False`` and the current state.  Eigensolver failures are
    re-raised with the step attached.
    """
    base = as_operator(a)
    n = base.n
    cfg.validate(n)
    delta = cfg.resolved_delta(n)

    x = np.zeros(n)
    traj = LearningTrajectory()
    pairs: EigenPairs | None = None
    steps = 0
    converged = False
    while True:
        op = base.add_diag(x) if steps else base
        try:
            pairs = top_eigenpairs(
                op, cfg.q, tol=cfg.eig_tol, max_iter=cfg.eig_max_iter,
                warm_start=pairs, seed=cfg.seed,
            )
        except NonConvergenceError as e:
            raise NonConvergenceError(
                f"eigensolver failed at learning step {steps}: {e}", best=e.best
            ) from e
        if pairs.min_gap() < 1e-10 * max(1.0, abs(pairs.values[0])):
            log.warning("near-degenerate leading eigenvalues at step %d "
                        "(gap %.3e); cluster basis is arbitrary", steps, pairs.min_gap())
        idx, v = select_most_localized(pairs)
        v_ipr = ipr(v)
        if v_ipr < delta:
            converged = True
            break
        if steps >= cfg.max_steps:
            break
        traj.records.append(TrajectoryRecord(
            step=steps,
            selected_index=idx,
            selected_ipr=v_ipr,
            trace_x=float(np.sum(x)),
            eigenvalues=pairs.values.copy(),
            iprs=np.sum(pairs.vectors ** 4, axis=0),
        ))
        v = v / np.linalg.norm(v)  # keep sum(v^2) = 1 to machine precision
        x -= cfg.eta * v ** 2
        steps += 1
    return XLaplacianState(
        base=base, x_diag=x, steps=steps, trajectory=traj,
        converged=converged, pairs=pairs,
    )


# ---------------------------------------------------------------------------
# first-order perturbation predictors (verification instruments)
# ---------------------------------------------------------------------------

def predicted_eigenvalue_shift(u: np.ndarray, v: np.ndarray, eta: float) -> float:
    """First-order eigenvalue change of eigenvector u under the diagonal
    update -eta * diag(v**2): ``-eta * sum(v_k^2 u_k^2)``.

    For u == v this equals ``-eta * ipr(v)``: the more localized the
    penalized vector, the larger the drop of its own eigenvalue.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("u and v must have the same length")
    return float(-eta * np.sum(v ** 2 * u ** 2))


def _check_complete(pairs: EigenPairs, i: int) -> None:
    n = pairs.n
    if len(pairs) != n:
        raise ValueError("predictors need the complete spectrum (all n eigenpairs)")
    if n > DENSE_THRESHOLD:
        raise ValueError(f"predictors are restricted to n <= {DENSE_THRESHOLD}")
    if not 0 <= i < n:
        raise ValueError(f"index {i} out of range")


def _gap_tol(pairs: EigenPairs, gap_tol: float | None) -> float:
    if gap_tol is not None:
        return gap_tol
    spread = float(pairs.values[0] - pairs.values[-1])
    return 1e-6 * max(spread, 1e-300)


def predicted_eigenvector_shift(
    i: int, pairs: EigenPairs, v: np.ndarray, eta: float,
    gap_tol: float | None = None,
) -> np.ndarray:
    """First-order change of eigenvector i under -eta * diag(v**2).

    ``u_hat_i = -eta * sum_{j != i} [sum_k u_jk v_k^2 u_ik / (l_i - l_j)] u_j``.
    Needs all n eigenpairs; raises :class:`DegenerateSpectrumError` when any
    gap to eigenvalue i is below ``gap_tol`` (default 1e-6 * spectral range).
    """
    _check_complete(pairs, i)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (pairs.n,):
        raise ValueError("v has wrong length")
    tol = _gap_tol(pairs, gap_tol)
    lam = pairs.values
    gaps = lam[i] - lam
    others = np.arange(len(lam)) != i
    if np.any(np.abs(gaps[others]) < tol):
        raise DegenerateSpectrumError(
            f"eigenvalue gap below {tol:g} at index {i}; prediction undefined"
        )
    u_i = pairs.vectors[:, i]
    numer = pairs.vectors.T @ (v ** 2 * u_i)  # numer[j] = u_j . (v^2 * u_i)
    coef = np.zeros(len(lam))
    coef[others] = numer[others] / gaps[others]
    return -eta * (pairs.vectors @ coef)


def predicted_ipr_change(
    i: int, pairs: EigenPairs, v: np.ndarray, eta: float,
    gap_tol: float | None = None,
) -> tuple[float, float]:
    """Signal and cross-talk terms of the first-order IPR change of
    eigenvector i under -eta * diag(v**2).

    signal    = -4 eta sum_l sum_{j!=i} u_jl^2 v_l^2 u_il^4 / (l_i - l_j)
    crosstalk = -4 eta sum_l sum_{j!=i} sum_{k!=l}
                u_il^3 v_k^2 u_jk u_ik u_jl / (l_i - l_j)

    ``ipr(u_i) + signal + crosstalk`` approximates the IPR of the perturbed
    eigenvector to first order.  The cross-talk term has zero mean over
    random bases; for the leading eigenvector the signal term is <= 0 (all
    denominators positive), so the update can only delocalize it.
    """
    _check_complete(pairs, i)
    v = np.asarray(v, dtype=np.float64)
    tol = _gap_tol(pairs, gap_tol)
    lam = pairs.values
    gaps = lam[i] - lam
    others = np.arange(len(lam)) != i
    if np.any(np.abs(gaps[others]) < tol):
        raise DegenerateSpectrumError(
            f"eigenvalue gap below {tol:g} at index {i}; prediction undefined"
        )
    u = pairs.vectors
    u_i = u[:, i]
    inv = np.zeros(len(lam))
    inv[others] = 1.0 / gaps[others]
    # a[j] = sum_l u_jl^2 v_l^2 u_il^4  (the k == l part of the full sum)
    a = (u ** 2).T @ (v ** 2 * u_i ** 4)
    # numer[j] = u_j . (v^2 u_i),  b[j] = u_j . u_i^3
    numer = u.T @ (v ** 2 * u_i)
    b = u.T @ u_i ** 3
    signal = -4.0 * eta * float(a @ inv)
    crosstalk = -4.0 * eta * float((b * numer - a) @ inv)
    return signal, crosstalk


# ---------------------------------------------------------------------------
# serialization of the learned diagonal
# ---------------------------------------------------------------------------

def save_x_diag(path, state: XLaplacianState, eta: float, delta: float) -> None:
    """Plain-text format: header `xlap-diag n steps eta delta converged`
    followed by one real per line."""
    with open(path, "w") as fh:
        fh.write(
            f"xlap-diag {state.x_diag.shape[0]} {state.steps} {eta!r} {delta!r} "
            f"{int(state.converged)}\n"
        )
        for xi in state.x_diag:
            fh.write(f"{xi!r}\n")


def load_x_diag(path) -> tuple[np.ndarray, dict]:
    """Read the format written by :func:`save_x_diag`; '#' lines are skipped.

    Returns (x_diag, meta) with meta keys n, steps, eta, delta, converged.
    """
    meta = None
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if meta is None:
                parts = line.split()
                if len(parts) != 6 or parts[0] != "xlap-diag":
                    raise ValueError(f"{path}:{lineno}: bad xlap-diag header")
                meta = {
                    "n": int(parts[1]), "steps": int(parts[2]),
                    "eta": float(parts[3]), "delta": float(parts[4]),
                    "converged": bool(int(parts[5])),
                }
                continue
            values.append(float(line))
    if meta is None:
        raise ValueError(f"{path}: missing xlap-diag header")
    x = np.array(values)
    if x.shape[0] != meta["n"]:
        raise ValueError(f"{path}: expected {meta['n']} values, found {x.shape[0]}")
    return x, meta
