"""Seeded generators for synthetic benchmarks and edge-list ingestion.

All generators are pure functions of (params, seed) using numpy's PCG64
streams, so identical inputs give identical outputs.  Edge sampling for the
block models uses geometric skips per block (O(edges), not O(n^2)).
Noise injectors only ever add edges; labels and existing weights are never
touched.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .linalg import SparseSymMatrix


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SBMParams:
    """Planted-partition parameters: n nodes, q equal groups, mean degree c,
    eps = c_out/c_in in [0, 1]."""

    n: int
    q: int
    c: float
    eps: float

    @property
    def c_in(self) -> float:
        return self.q * self.c / (1.0 + (self.q - 1) * self.eps)

    @property
    def c_out(self) -> float:
        return self.eps * self.c_in

    def validate(self) -> None:
        if self.n < 2 or self.q < 1 or self.n % self.q:
            raise ValueError("n must be positive and divisible by q")
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")
        if self.c <= 0 or self.c_in > self.n or self.c_out > self.n:
            raise ValueError("infeasible degree parameters")


@dataclass(frozen=True)
class PairwiseParams:
    """Sparse pairwise-similarity model: ER topology with mean degree c,
    edge weights Normal(mean_in, variance) within groups and
    Normal(mean_out, variance) across."""

    n: int
    q: int
    c: float
    mean_in: float = 0.75
    mean_out: float = -0.75
    variance: float = 1.0

    def validate(self) -> None:
        if self.n < 2 or self.q < 1 or self.n % self.q:
            raise ValueError("n must be positive and divisible by q")
        if self.variance <= 0:
            raise ValueError("variance must be positive")
        if not 0 < self.c < self.n:
            raise ValueError("need 0 < c < n")


@dataclass(frozen=True)
class PlantedGraph:
    """Adjacency (possibly weighted) plus ground-truth labels and the
    generator record that produced it."""

    adjacency: SparseSymMatrix
    labels: np.ndarray | None
    params: dict
    seed: int

    @property
    def n(self) -> int:
        return self.adjacency.n


@dataclass(frozen=True)
class CompletionInstance:
    """Low-rank ground truth (u_true @ v_true.T) observed on a sparse set of
    revealed entries."""

    u_true: np.ndarray
    v_true: np.ndarray
    observed: sp.csr_matrix
    params: dict
    seed: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.observed.shape

    @property
    def revealed(self) -> tuple[np.ndarray, np.ndarray]:
        coo = self.observed.tocoo()
        return coo.row, coo.col

    def ground_truth(self) -> np.ndarray:
        return self.u_true @ self.v_true.T


# ---------------------------------------------------------------------------
# low-level sampling helpers
# ---------------------------------------------------------------------------

def _bernoulli_flat(rng: np.random.Generator, total: int, p: float) -> np.ndarray:
    """Sorted indices in [0, total) hit by independent Bernoulli(p) trials,
    sampled with geometric skips in O(hits)."""
    if total <= 0 or p <= 0.0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(total, dtype=np.int64)
    chunks = []
    pos = -1
    while True:
        left = total - pos
        size = max(16, int(left * p * 1.2 + 10.0 * np.sqrt(left * p + 1.0)))
        steps = np.cumsum(rng.geometric(p, size=size)) + pos
        past = steps >= total
        if past.any():
            chunks.append(steps[: int(np.argmax(past))])
            break
        chunks.append(steps)
        pos = int(steps[-1])
    return np.concatenate(chunks)


def _tri_unrank(k: np.ndarray, g: int) -> tuple[np.ndarray, np.ndarray]:
    """Map flat indices of the strict upper triangle of a g x g block to
    (i, j) with i < j.  Row i starts at offset i*g - i*(i+1)/2."""
    k = np.asarray(k, dtype=np.int64)
    tg = 2 * g - 1
    i = np.floor((tg - np.sqrt(tg * tg - 8.0 * k)) / 2.0).astype(np.int64)
    i = np.clip(i, 0, g - 2)
    off = i * g - i * (i + 1) // 2
    # fix up float rounding
    while True:
        lo = off > k
        if not lo.any():
            break
        i[lo] -= 1
        off = i * g - i * (i + 1) // 2
    while True:
        hi = k >= (i + 1) * g - (i + 1) * (i + 2) // 2
        if not hi.any():
            break
        i[hi] += 1
    off = i * g - i * (i + 1) // 2
    j = i + 1 + (k - off)
    return i, j


def _block_labels(n: int, q: int) -> np.ndarray:
    return np.repeat(np.arange(q, dtype=np.int64), n // q)


def _edge_dict(m: SparseSymMatrix) -> dict:
    """Upper-triangle entries as {(i, j): weight} with i < j."""
    upper = sp.triu(m._scipy, k=1).tocoo()
    return {(int(i), int(j)): float(v)
            for i, j, v in zip(upper.row, upper.col, upper.data)}


def _dict_to_matrix(n: int, edges: dict) -> SparseSymMatrix:
    if not edges:
        return SparseSymMatrix.empty(n)
    ij = np.array(list(edges.keys()), dtype=np.int64)
    w = np.fromiter(edges.values(), dtype=np.float64, count=len(edges))
    return SparseSymMatrix.from_edges(n, ij[:, 0], ij[:, 1], w)


# ---------------------------------------------------------------------------
# stochastic block model and friends
# ---------------------------------------------------------------------------

def gen_sbm(p: SBMParams, seed: int) -> PlantedGraph:
    """Planted partition with intra-pair probability c_in/n and inter-pair
    probability c_out/n; q equal groups of n/q nodes."""
    p.validate()
    rng = np.random.default_rng(seed)
    g = p.n // p.q
    p_in, p_out = p.c_in / p.n, p.c_out / p.n
    us, vs = [], []
    for a in range(p.q):
        flat = _bernoulli_flat(rng, g * (g - 1) // 2, p_in)
        i, j = _tri_unrank(flat, g)
        us.append(i + a * g)
        vs.append(j + a * g)
        for b in range(a + 1, p.q):
            flat = _bernoulli_flat(rng, g * g, p_out)
            us.append(flat // g + a * g)
            vs.append(flat % g + b * g)
    u = np.concatenate(us) if us else np.zeros(0, np.int64)
    v = np.concatenate(vs) if vs else np.zeros(0, np.int64)
    adj = (SparseSymMatrix.from_edges(p.n, u, v) if u.size
           else SparseSymMatrix.empty(p.n))
    return PlantedGraph(
        adjacency=adj, labels=_block_labels(p.n, p.q),
        params={"model": "sbm", "n": p.n, "q": p.q, "c": p.c, "eps": p.eps},
        seed=seed,
    )


def _truncated_powerlaw(rng: np.random.Generator, n: int, gamma: float) -> np.ndarray:
    """Propensities with density ~ theta^-gamma on [1, n^(1/(gamma-1))]."""
    kmax = n ** (1.0 / (gamma - 1.0))
    u = rng.random(n)
    tail = 1.0 - kmax ** (1.0 - gamma)
    return (1.0 - u * tail) ** (1.0 / (1.0 - gamma))


def gen_dcsbm(p: SBMParams, gamma: float, seed: int,
              theta: np.ndarray | None = None) -> PlantedGraph:
    """Degree-corrected block model: node propensities theta drawn from a
    truncated power law with exponent -gamma (or supplied explicitly),
    normalized to mean 1 per group; edge probability ~ theta_i theta_j times
    the block factor, giving expected mean degree c.

    Sampled as a Poisson multigraph collapsed to a simple graph, so
    saturated pairs lose a small fraction of the expected degree.
    """
    p.validate()
    if gamma <= 2.0 and theta is None:
        raise ValueError("gamma must exceed 2")
    rng = np.random.default_rng(seed)
    g = p.n // p.q
    labels = _block_labels(p.n, p.q)
    if theta is None:
        theta = _truncated_powerlaw(rng, p.n, gamma)
    else:
        theta = np.asarray(theta, dtype=np.float64).copy()
    for a in range(p.q):
        grp = labels == a
        theta[grp] *= g / theta[grp].sum()

    edges = set()
    for a in range(p.q):
        ia = np.flatnonzero(labels == a)
        ta = theta[ia]
        sa = ta.sum()
        for b in range(a, p.q):
            c_ab = p.c_in if a == b else p.c_out
            ib = np.flatnonzero(labels == b)
            tb = theta[ib]
            sb = tb.sum()
            if a == b:
                lam = (c_ab / p.n) * (sa * sb - np.sum(ta * ta)) / 2.0
            else:
                lam = (c_ab / p.n) * sa * sb
            m_edges = rng.poisson(lam)
            if m_edges == 0:
                continue
            i = rng.choice(ia, size=m_edges, p=ta / sa)
            j = rng.choice(ib, size=m_edges, p=tb / sb)
            keep = i != j
            lo = np.minimum(i[keep], j[keep])
            hi = np.maximum(i[keep], j[keep])
            edges.update(zip(lo.tolist(), hi.tolist()))
    adj = _dict_to_matrix(p.n, {e: 1.0 for e in edges})
    return PlantedGraph(
        adjacency=adj, labels=labels,
        params={"model": "dcsbm", "n": p.n, "q": p.q, "c": p.c, "eps": p.eps,
                "gamma": gamma},
        seed=seed,
    )


# ---------------------------------------------------------------------------
# noise injectors (monotone: edges only grow)
# ---------------------------------------------------------------------------

def add_cliques(graph: PlantedGraph, count: int, size: int, seed: int) -> PlantedGraph:
    """Add `count` cliques over `size` uniformly chosen nodes each (selections
    of different cliques may overlap); missing edges get weight 1."""
    n = graph.n
    if size > n:
        raise ValueError("clique size exceeds node count")
    rng = np.random.default_rng(seed)
    edges = _edge_dict(graph.adjacency)
    for _ in range(count):
        nodes = np.sort(rng.choice(n, size=size, replace=False))
        for ai in range(size):
            for bi in range(ai + 1, size):
                edges.setdefault((int(nodes[ai]), int(nodes[bi])), 1.0)
    return replace(
        graph, adjacency=_dict_to_matrix(n, edges),
        params={**graph.params, "cliques": count, "clique_size": size},
    )


def add_hubs(graph: PlantedGraph, count: int, degree: int, seed: int) -> PlantedGraph:
    """Pick `count` distinct nodes and attach weight-1 edges to uniformly
    random non-neighbors until each has degree >= `degree`."""
    n = graph.n
    if degree >= n:
        raise ValueError("hub degree must be below node count")
    rng = np.random.default_rng(seed)
    edges = _edge_dict(graph.adjacency)
    nbrs = [set() for _ in range(n)]
    for (i, j) in edges:
        nbrs[i].add(j)
        nbrs[j].add(i)
    hubs = rng.choice(n, size=count, replace=False)
    for h in hubs:
        h = int(h)
        need = degree - len(nbrs[h])
        if need <= 0:
            continue
        pool = np.setdiff1d(np.arange(n), np.append(np.fromiter(nbrs[h], dtype=np.int64, count=len(nbrs[h])), h))
        chosen = rng.choice(pool, size=need, replace=False)
        for t in chosen:
            t = int(t)
            edges.setdefault((min(h, t), max(h, t)), 1.0)
            nbrs[h].add(t)
            nbrs[t].add(h)
    return replace(
        graph, adjacency=_dict_to_matrix(n, edges),
        params={**graph.params, "hubs": count, "hub_degree": degree},
    )


def perturb_neighbors(graph: PlantedGraph, count: int, seed: int) -> PlantedGraph:
    """For each of `count` uniformly selected nodes (in selection order),
    connect all current neighbors of the node to each other with weight 1."""
    n = graph.n
    if count > n:
        raise ValueError("count exceeds node count")
    rng = np.random.default_rng(seed)
    edges = _edge_dict(graph.adjacency)
    nbrs = [set() for _ in range(n)]
    for (i, j) in edges:
        nbrs[i].add(j)
        nbrs[j].add(i)
    selected = rng.choice(n, size=count, replace=False)
    for s in selected:
        ring = sorted(nbrs[int(s)])
        for ai in range(len(ring)):
            for bi in range(ai + 1, len(ring)):
                a, b = ring[ai], ring[bi]
                if (a, b) not in edges:
                    edges[(a, b)] = 1.0
                    nbrs[a].add(b)
                    nbrs[b].add(a)
    return replace(
        graph, adjacency=_dict_to_matrix(n, edges),
        params={**graph.params, "perturbed_nodes": count},
    )


# ---------------------------------------------------------------------------
# pairwise similarity model
# ---------------------------------------------------------------------------

def gen_pairwise(p: PairwiseParams, seed: int) -> PlantedGraph:
    """ER topology with mean degree c; each present pair (i, j) carries a
    Gaussian similarity whose mean depends on whether the labels agree."""
    p.validate()
    rng = np.random.default_rng(seed)
    labels = _block_labels(p.n, p.q)
    flat = _bernoulli_flat(rng, p.n * (p.n - 1) // 2, p.c / p.n)
    i, j = _tri_unrank(flat, p.n)
    same = labels[i] == labels[j]
    means = np.where(same, p.mean_in, p.mean_out)
    w = rng.normal(means, np.sqrt(p.variance))
    adj = (SparseSymMatrix.from_edges(p.n, i, j, w) if i.size
           else SparseSymMatrix.empty(p.n))
    return PlantedGraph(
        adjacency=adj, labels=labels,
        params={"model": "pairwise", "n": p.n, "q": p.q, "c": p.c,
                "mean_in": p.mean_in, "mean_out": p.mean_out,
                "variance": p.variance},
        seed=seed,
    )


# ---------------------------------------------------------------------------
# matrix completion instances
# ---------------------------------------------------------------------------

def gen_completion(n: int, m: int, r: int, c: float, seed: int) -> CompletionInstance:
    """Rank-r ground truth U V^T with iid standard-normal factors; entries
    revealed independently with probability c/sqrt(nm)."""
    if r < 1 or r > min(n, m):
        raise ValueError("rank out of range")
    p_reveal = c / np.sqrt(n * m)
    if not 0 < p_reveal <= 1:
        raise ValueError("infeasible revealed-entry density")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, r))
    v = rng.standard_normal((m, r))
    flat = _bernoulli_flat(rng, n * m, p_reveal)
    ri, rj = flat // m, flat % m
    vals = np.sum(u[ri] * v[rj], axis=1)
    observed = sp.csr_matrix((vals, (ri, rj)), shape=(n, m))
    return CompletionInstance(
        u_true=u, v_true=v, observed=observed,
        params={"model": "completion", "n": n, "m": m, "r": r, "c": c},
        seed=seed,
    )


def add_bipartite_cliques(inst: CompletionInstance, count: int, size: int,
                          seed: int) -> CompletionInstance:
    """Reveal `count` dense size x size blocks: each picks `size` rows and
    `size` columns and reveals every crossing entry (values still from the
    ground truth)."""
    n, m = inst.shape
    if size > min(n, m):
        raise ValueError("clique size exceeds matrix dimensions")
    rng = np.random.default_rng(seed)
    coo = inst.observed.tocoo()
    pairs = set(zip(coo.row.tolist(), coo.col.tolist()))
    for _ in range(count):
        rows = rng.choice(n, size=size, replace=False)
        cols = rng.choice(m, size=size, replace=False)
        for a in rows:
            for b in cols:
                pairs.add((int(a), int(b)))
    ri = np.fromiter((a for a, _ in pairs), dtype=np.int64, count=len(pairs))
    rj = np.fromiter((b for _, b in pairs), dtype=np.int64, count=len(pairs))
    order = np.lexsort((rj, ri))
    ri, rj = ri[order], rj[order]
    vals = np.sum(inst.u_true[ri] * inst.v_true[rj], axis=1)
    observed = sp.csr_matrix((vals, (ri, rj)), shape=(n, m))
    return replace(
        inst, observed=observed,
        params={**inst.params, "bip_cliques": count, "bip_clique_size": size},
    )


# ---------------------------------------------------------------------------
# edge-list files
# ---------------------------------------------------------------------------

def load_edge_list(path, labels_path=None, n: int | None = None) -> PlantedGraph:
    """Read whitespace-separated `u v [w]` lines (0-based); '#' lines are
    skipped.  Duplicate edges collapse to the first occurrence; self-loops
    are dropped and counted in params."""
    us, vs, ws = [], [], []
    seen = {}
    self_loops = 0
    duplicates = 0
    max_node = -1
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected `u v [w]`")
            try:
                a, b = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed edge line") from None
            if a < 0 or b < 0:
                raise ValueError(f"{path}:{lineno}: negative node id")
            max_node = max(max_node, a, b)
            if a == b:
                self_loops += 1
                continue
            key = (min(a, b), max(a, b))
            if key in seen:
                duplicates += 1
                continue
            seen[key] = w
    labels = None
    if labels_path is not None:
        labels = load_labels(labels_path)
        max_node = max(max_node, labels.shape[0] - 1)
    size = max(max_node + 1, 0) if n is None else n
    edges = dict(seen)
    adj = _dict_to_matrix(size, edges)
    return PlantedGraph(
        adjacency=adj, labels=labels,
        params={"model": "file", "path": str(path), "self_loops_dropped": self_loops,
                "duplicates_collapsed": duplicates},
        seed=0,
    )


def save_edge_list(path, graph: PlantedGraph, comments: list[str] | None = None) -> None:
    """Write `u v` lines, or `u v w` when any weight differs from 1."""
    edges = _edge_dict(graph.adjacency)
    weighted = any(w != 1.0 for w in edges.values())
    with open(path, "w") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        for (i, j) in sorted(edges):
            if weighted:
                fh.write(f"{i} {j} {edges[(i, j)]!r}\n")
            else:
                fh.write(f"{i} {j}\n")


def load_labels(path) -> np.ndarray:
    """One integer per line, aligned with node ids; '#' lines skipped."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed label line") from None
    return np.array(out, dtype=np.int64)


def save_labels(path, labels: np.ndarray, comments: list[str] | None = None) -> None:
    with open(path, "w") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        for t in labels:
            fh.write(f"{int(t)}\n")
