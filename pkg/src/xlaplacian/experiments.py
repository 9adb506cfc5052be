"""Reusable experiment pipelines: method dispatch for clustering a graph,
ensemble sweeps for community detection and pairwise clustering, and the
rank-estimation + completion pipeline.

These are pure functions of their parameters and seeds; the CLI wraps them
with config parsing and CSV output, and the acceptance tests call them
directly.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import baselines, graphs, inference
from .linalg import NonConvergenceError, as_operator, top_eigenpairs
from .xlap import LearningConfig, learn_regularization

log = logging.getLogger(__name__)

GRAPH_METHODS = ("adjacency", "norm-laplacian", "rank-one", "bethe-hessian",
                 "nonbacktracking", "xlaplacian")
COMPLETION_METHODS = ("trimsvd", "bethe-hessian", "xlaplacian")


def _is_weighted(a) -> bool:
    return a.nnz > 0 and not np.all(a.values == 1.0)


def default_vector_range(method: str, q: int, weighted: bool) -> tuple[int, int]:
    """Which eigenvector ranks feed k-means.

    Unweighted graphs: ranks 2..q for adjacency-like operators (rank 1
    essentially sorts vertices by degree) and 1..q for the Bethe-Hessian
    negative subspace.  Zero-mean weighted similarities have no trivial
    leading vector: there the informative directions are ranks 1..q-1 for
    every method.
    """
    if weighted:
        return (1, max(q - 1, 1))
    if method == "bethe-hessian":
        return (1, q)
    return (2, q) if q > 1 else (1, 1)


@dataclass
class ClusterRun:
    result: inference.ClusteringResult
    steps: int = 0
    converged: bool = True
    extras: dict | None = None


def cluster_graph(
    graph: graphs.PlantedGraph,
    method: str,
    q: int | None = None,
    seed: int = 0,
    eta: float = 10.0,
    delta: float | None = None,
    max_steps: int = 500,
    vector_range: tuple[int, int] | None = None,
    restarts: int = 10,
    zeta_grid=None,
) -> ClusterRun:
    """Cluster a planted graph with one of the named spectral methods and
    score it against the planted labels."""
    if graph.labels is None:
        raise ValueError("graph carries no ground-truth labels")
    a = graph.adjacency
    if q is None:
        q = int(graph.labels.max()) + 1
    weighted = _is_weighted(a)
    rng_range = vector_range or default_vector_range(method, q, weighted)
    lo, hi = rng_range
    n_vec = max(hi, q)

    extras: dict = {}
    steps, converged = 0, True
    if method == "adjacency":
        pairs = top_eigenpairs(a, n_vec, seed=seed)
        vectors = pairs.vectors
    elif method == "norm-laplacian":
        pairs = top_eigenpairs(baselines.sym_laplacian(a).negate(), n_vec, seed=seed)
        vectors = pairs.vectors
    elif method == "bethe-hessian":
        pairs = top_eigenpairs(baselines.bethe_hessian(a).negate(), n_vec, seed=seed)
        vectors = pairs.vectors
        extras["negative_eigenvalues"] = int(np.sum(pairs.values > 0))
    elif method == "nonbacktracking":
        comp = baselines.nonbacktracking_companion(a)
        mu, vparts, _, _ = baselines.nonbacktracking_eigenpairs(comp, n_vec, seed=seed)
        vectors = vparts / np.linalg.norm(vparts, axis=0)
        extras["mu"] = mu
    elif method == "rank-one":
        if zeta_grid is None:
            zeta_grid = np.linspace(0.0, 3.0, 13) / a.n
        best_zeta, best_ov = baselines.zeta_scan(
            a, graph.labels, zeta_grid, q=q, seed=seed, restarts=restarts)
        pairs = top_eigenpairs(baselines.rank_one_regularized(a, best_zeta), q, seed=seed)
        pred = inference.embed_kmeans(pairs, q, restarts=restarts, seed=seed)
        extras["zeta"] = best_zeta
        return ClusterRun(inference.clustering_result(pred, graph.labels, q),
                          extras=extras)
    elif method == "xlaplacian":
        cfg = LearningConfig(q=max(q, hi), eta=eta, delta=delta,
                             max_steps=max_steps, seed=seed)
        state = learn_regularization(a, cfg)
        vectors = state.pairs.vectors
        steps, converged = state.steps, state.converged
        extras["trace_x"] = float(np.sum(state.x_diag))
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {GRAPH_METHODS}")

    pred = inference.embed_kmeans(vectors, q, use_range=rng_range,
                                  restarts=restarts, seed=seed)
    return ClusterRun(inference.clustering_result(pred, graph.labels, q),
                      steps=steps, converged=converged, extras=extras)


# ---------------------------------------------------------------------------
# noise application
# ---------------------------------------------------------------------------

def apply_noise(graph: graphs.PlantedGraph, noise: dict | None,
                seed: int) -> graphs.PlantedGraph:
    """Apply the configured injectors in a fixed order; seeds are derived
    from the instance seed so ensembles stay reproducible."""
    if not noise:
        return graph
    if noise.get("cliques", 0):
        graph = graphs.add_cliques(graph, int(noise["cliques"]),
                                   int(noise.get("clique_size", 10)), seed + 101)
    if noise.get("hubs", 0):
        graph = graphs.add_hubs(graph, int(noise["hubs"]),
                                int(noise.get("hub_degree", 50)), seed + 202)
    if noise.get("perturb_neighbors", 0):
        graph = graphs.perturb_neighbors(graph, int(noise["perturb_neighbors"]),
                                         seed + 303)
    return graph


def make_graph(model: str, n: int, q: int, c: float, eps: float = 0.0,
               gamma: float = 2.5, mean_in: float = 0.75,
               mean_out: float = -0.75, variance: float = 1.0,
               noise: dict | None = None, seed: int = 0) -> graphs.PlantedGraph:
    if model == "sbm":
        g = graphs.gen_sbm(graphs.SBMParams(n=n, q=q, c=c, eps=eps), seed)
    elif model == "dcsbm":
        g = graphs.gen_dcsbm(graphs.SBMParams(n=n, q=q, c=c, eps=eps), gamma, seed)
    elif model == "pairwise":
        g = graphs.gen_pairwise(graphs.PairwiseParams(
            n=n, q=q, c=c, mean_in=mean_in, mean_out=mean_out,
            variance=variance), seed)
    else:
        raise ValueError(f"unknown model {model!r}")
    return apply_noise(g, noise, seed)


# ---------------------------------------------------------------------------
# ensemble sweeps
# ---------------------------------------------------------------------------

def _detect_one(task):
    (model_kwargs, method, sweep_key, sweep_value, seed, run_kwargs) = task
    kwargs = dict(model_kwargs)
    kwargs[sweep_key] = sweep_value
    kwargs["seed"] = seed
    try:
        g = make_graph(**kwargs)
        run = cluster_graph(g, method, seed=seed, **run_kwargs)
        return (sweep_value, method, seed, run.result.overlap, run.steps)
    except (NonConvergenceError, ValueError) as e:
        log.warning("run failed (%s=%s method=%s seed=%d): %s",
                    sweep_key, sweep_value, method, seed, e)
        return (sweep_value, method, seed, np.nan, -1)


def sweep(model_kwargs: dict, methods, sweep_key: str, sweep_values,
          n_seeds: int, base_seed: int = 0, jobs: int = 1,
          run_kwargs: dict | None = None) -> list[tuple]:
    """Grid x seeds ensemble; returns per-run rows
    (sweep_value, method, seed, overlap, steps) sorted deterministically.
    Failed runs yield NaN overlap instead of aborting the sweep."""
    run_kwargs = run_kwargs or {}
    tasks = [
        (model_kwargs, method, sweep_key, value, base_seed + s, run_kwargs)
        for value in sweep_values
        for method in methods
        for s in range(n_seeds)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_detect_one, tasks, chunksize=1))
    else:
        rows = [_detect_one(t) for t in tasks]
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows


def aggregate(rows) -> list[tuple]:
    """Collapse per-run rows into (sweep_value, method, mean, stderr, n_ok)."""
    groups: dict = {}
    for value, method, _seed, ov, _steps in rows:
        groups.setdefault((value, method), []).append(ov)
    out = []
    for (value, method), ovs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        arr = np.array(ovs, dtype=np.float64)
        ok = arr[np.isfinite(arr)]
        if ok.size:
            mean = float(ok.mean())
            stderr = float(ok.std(ddof=1) / np.sqrt(ok.size)) if ok.size > 1 else 0.0
        else:
            mean, stderr = np.nan, np.nan
        out.append((value, method, mean, stderr, int(ok.size)))
    return out


# ---------------------------------------------------------------------------
# rank estimation + completion pipeline
# ---------------------------------------------------------------------------

def make_completion(n: int, m: int, r: int, c: float, seed: int,
                    noise: dict | None = None) -> graphs.CompletionInstance:
    inst = graphs.gen_completion(n, m, r, c, seed)
    if noise and noise.get("bip_cliques", 0):
        inst = graphs.add_bipartite_cliques(
            inst, int(noise["bip_cliques"]),
            int(noise.get("bip_clique_size", 20)), seed + 404)
    return inst


def estimate_rank_for(inst: graphs.CompletionInstance, method: str,
                      r_max: int = 8, seed: int = 0,
                      learn_max_steps: int = 150,
                      trim_factor: float = 3.0) -> int:
    """Method-specific rank estimate.

    trimsvd / xlaplacian: consecutive-ratio gap of the top r_max + 1
    eigenvalues of the (trimmed / learned) bipartite embedding.
    bethe-hessian: number of negative eigenvalues of H on the embedding
    (dense; instances here are desk-scale).
    """
    from .linalg import bipartite_embed

    if method == "trimsvd":
        emb = bipartite_embed(baselines.trim_rect(inst.observed, factor=trim_factor))
        pairs = top_eigenpairs(emb, r_max + 1, seed=seed)
        values = np.maximum(pairs.values, 0.0)
        return inference.estimate_rank(values, r_max)
    if method == "xlaplacian":
        emb = bipartite_embed(inst.observed)
        cfg = LearningConfig(q=r_max + 1, max_steps=learn_max_steps, seed=seed)
        state = learn_regularization(emb, cfg)
        values = np.maximum(state.pairs.values, 0.0)
        return inference.estimate_rank(values, r_max)
    if method == "bethe-hessian":
        emb = bipartite_embed(inst.observed)
        h = baselines.bethe_hessian(emb)
        if emb.n > 4096:
            raise ValueError("dense negative-eigenvalue count limited to n <= 4096")
        w = np.linalg.eigvalsh(h.to_dense())
        return int(np.sum(w < -1e-10 * max(1.0, abs(w).max())))
    raise ValueError(f"unknown completion method {method!r}")


def complete_one(inst: graphs.CompletionInstance, method: str, r_max: int = 8,
                 seed: int = 0, max_iters: int = 400, tol: float = 1e-13,
                 learn_max_steps: int = 150,
                 success_rmse: float = 1e-7) -> dict:
    """Rank estimate -> spectral init -> ALS for one instance and method."""
    try:
        r_hat = estimate_rank_for(inst, method, r_max=r_max, seed=seed,
                                  learn_max_steps=learn_max_steps)
        if r_hat < 1:
            raise ValueError("estimated rank 0; nothing to complete")
        init = inference.spectral_init(
            inst, method, r_hat, seed=seed,
            learn_kwargs={"max_steps": learn_max_steps})
        res = inference.als_complete(inst, r_hat, init, max_iters=max_iters, tol=tol)
        return {"method": method, "estimated_rank": r_hat, "rmse": res.rmse,
                "success": bool(res.rmse < success_rmse),
                "iterations": res.iterations}
    except (NonConvergenceError, ValueError, inference.NumericalError) as e:
        log.warning("completion failed (method=%s seed=%d): %s", method, seed, e)
        return {"method": method, "estimated_rank": -1, "rmse": np.nan,
                "success": False, "iterations": -1}
