"""Random-cluster sampling at the Ising point on a lattice domain.

The model weight of a configuration is p^o (1-p)^c q^k where o and c
count open and closed primal edges and k counts clusters of black faces.
With wired counting all boundary blacks are identified into one cluster.
The self-dual point p/(1-p) = sqrt(q) is the default; at q = 2 this is
p = sqrt(2)/(1 + sqrt(2)).

Engines: exact enumeration with inverse-CDF lookup for small domains, a
single-edge heat-bath chain, and a cluster chain that alternates cluster
coloring with conditional edge resampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .lattice_domain import Domain

P_C = math.sqrt(2.0) / (1.0 + math.sqrt(2.0))

FkConfig = np.ndarray  # uint8 vector, one open/closed state per primal edge


@dataclass(frozen=True)
class ModelParams:
    p: float = P_C
    q: float = 2.0


def _components(n_nodes: int, us: np.ndarray, vs: np.ndarray) -> tuple[int, np.ndarray]:
    if len(us) == 0:
        return n_nodes, np.arange(n_nodes, dtype=np.int64)
    data = np.ones(len(us), dtype=np.int8)
    m = sparse.coo_matrix((data, (us, vs)), shape=(n_nodes, n_nodes))
    ncomp, labels = csgraph.connected_components(m, directed=False)
    return int(ncomp), labels


def cluster_labels(domain: Domain, config: np.ndarray, wired: bool = True
                   ) -> tuple[int, np.ndarray]:
    """Cluster count and per-black labels; wired merges boundary blacks."""
    config = np.asarray(config, dtype=np.uint8)
    pe = np.asarray(domain.pedges, dtype=np.int64).reshape(-1, 2)
    openmask = config == 1
    us = pe[openmask, 0]
    vs = pe[openmask, 1]
    if wired:
        hub = domain.n_vertices
        bb = np.fromiter(domain.boundary_blacks, dtype=np.int64)
        us = np.concatenate([us, bb])
        vs = np.concatenate([vs, np.full(len(bb), hub, dtype=np.int64)])
        ncomp, labels = _components(domain.n_vertices + 1, us, vs)
        return ncomp, labels[: domain.n_vertices]
    return _components(domain.n_vertices, us, vs)


def count_clusters(domain: Domain, config: np.ndarray, wired: bool = True) -> int:
    return cluster_labels(domain, config, wired)[0]


def count_dual_clusters(domain: Domain, config: np.ndarray) -> int:
    """Components of the dual graph (interior whites plus one outer vertex)
    across dual-open edges, i.e. closed primal edges."""
    config = np.asarray(config, dtype=np.uint8)
    closed = np.nonzero(config == 0)[0]
    de = domain.dual_edges[closed]
    ncomp, _ = _components(domain.n_dual, de[:, 0], de[:, 1])
    return ncomp


def fk_weight(domain: Domain, config: np.ndarray, params: ModelParams = ModelParams()
              ) -> float:
    config = np.asarray(config, dtype=np.uint8)
    o = int(config.sum())
    c = domain.n_edges - o
    k = count_clusters(domain, config, wired=True)
    return params.p ** o * (1.0 - params.p) ** c * params.q ** k


class _DSU:
    __slots__ = ("parent",)

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _cluster_count_fast(domain: Domain, bits: int, edge_ids: Sequence[int],
                        wired: bool) -> int:
    n = domain.n_vertices
    dsu = _DSU(n + 1)
    k = n + (0 if wired else 1)
    if wired:
        k += 1
        for b in domain.boundary_blacks:
            if dsu.union(b, n):
                k -= 1
    for i, e in enumerate(edge_ids):
        if (bits >> i) & 1:
            a, b = domain.pedges[e]
            if dsu.union(a, b):
                k -= 1
    return k - (0 if wired else 1)


@dataclass(frozen=True)
class EnumMeasure:
    domain: Domain
    params: ModelParams
    edge_ids: tuple[int, ...]
    probs: np.ndarray
    wired: bool

    def config(self, index: int) -> np.ndarray:
        cfg = np.zeros(self.domain.n_edges, dtype=np.uint8)
        for k, e in enumerate(self.edge_ids):
            cfg[e] = (index >> k) & 1
        return cfg

    def sample_index(self, rng: np.random.Generator, n: int) -> np.ndarray:
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        return np.searchsorted(cum, rng.random(n), side="right")


def enumerate_measure(domain: Domain, params: ModelParams = ModelParams(),
                      cap: int = 20, edges: Sequence[int] | None = None,
                      wired: bool = True) -> EnumMeasure:
    """Exact probability table of the model over all configurations.

    `edges` restricts the dynamic edges (the others stay closed), which
    keeps enumeration feasible on constrained domains.
    """
    edge_ids = tuple(range(domain.n_edges)) if edges is None else tuple(edges)
    ne = len(edge_ids)
    if ne > cap:
        raise ValueError(f"{ne} edges exceed enumeration cap {cap}")
    lp, lc, lq = math.log(params.p), math.log1p(-params.p), math.log(params.q)
    logw = np.empty(1 << ne)
    for bits in range(1 << ne):
        o = bits.bit_count()
        k = _cluster_count_fast(domain, bits, edge_ids, wired)
        logw[bits] = o * lp + (ne - o) * lc + k * lq
    w = np.exp(logw - logw.max())
    return EnumMeasure(domain, params, edge_ids, w / w.sum(), wired)


def _resample_edges(domain: Domain, cfg: np.ndarray, edge_ids: np.ndarray,
                    pe: np.ndarray, p: float, wired: bool,
                    rng: np.random.Generator) -> None:
    # one cluster-coloring sweep conditioned on the current configuration
    us = pe[cfg[edge_ids] == 1, 0]
    vs = pe[cfg[edge_ids] == 1, 1]
    n = domain.n_vertices
    if wired:
        bb = np.fromiter(domain.boundary_blacks, dtype=np.int64)
        us = np.concatenate([us, bb])
        vs = np.concatenate([vs, np.full(len(bb), n, dtype=np.int64)])
        ncomp, labels = _components(n + 1, us, vs)
    else:
        ncomp, labels = _components(n, us, vs)
    spins = rng.integers(0, 2, size=ncomp, dtype=np.int8)
    aligned = spins[labels[pe[:, 0]]] == spins[labels[pe[:, 1]]]
    cfg[edge_ids] = (aligned & (rng.random(len(edge_ids)) < p)).astype(np.uint8)


def _heatbath_sweep(domain: Domain, cfg: np.ndarray, edge_ids: np.ndarray,
                    adj: list, boundary: frozenset, p: float, q: float,
                    rng: np.random.Generator) -> None:
    p_iso = p / (p + q * (1.0 - p))
    for e in rng.permutation(edge_ids):
        e = int(e)
        a, b = domain.pedges[e]
        cfg[e] = 0
        # endpoints connected in the rest, with boundary blacks identified?
        seen = {a}
        stack = [a]
        hub_done = False
        found = False
        while stack:
            u = stack.pop()
            if u == b:
                found = True
                break
            if u in boundary and not hub_done:
                hub_done = True
                for v in boundary:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            for (v, ee) in adj[u]:
                if cfg[ee] and ee != e and v not in seen:
                    seen.add(v)
                    stack.append(v)
        prob = p if found else p_iso
        cfg[e] = 1 if rng.random() < prob else 0


def sample(domain: Domain, params: ModelParams = ModelParams(), n: int = 1,
           seed: int = 0, engine: str = "auto", burn_in: int = 100,
           thinning: int = 10, cap: int = 20,
           edges: Sequence[int] | None = None, wired: bool = True) -> np.ndarray:
    """Draw n configurations; returns an (n, n_edges) uint8 array.

    Engines: "enum" draws independent exact samples from the enumerated
    table, "heatbath" runs a single-edge chain (burn_in sweeps, then one
    sample every `thinning` sweeps), "cluster" runs a cluster-coloring
    chain with the same schedule.  "auto" picks enum when the dynamic edge
    count is within `cap`, otherwise cluster.
    """
    edge_ids = np.arange(domain.n_edges, dtype=np.int64) if edges is None \
        else np.asarray(sorted(edges), dtype=np.int64)
    rng = np.random.Generator(np.random.Philox(seed))
    if engine == "sw":
        engine = "cluster"
    if engine == "auto":
        engine = "enum" if len(edge_ids) <= cap else "cluster"

    if engine == "enum":
        em = enumerate_measure(domain, params, cap=cap, edges=edge_ids, wired=wired)
        idx = em.sample_index(rng, n)
        out = np.zeros((n, domain.n_edges), dtype=np.uint8)
        for k, e in enumerate(em.edge_ids):
            out[:, e] = (idx >> k) & 1
        return out

    if engine == "cluster":
        if abs(params.q - 2.0) > 1e-12:
            raise ValueError("cluster engine requires q = 2")
        pe = np.asarray(domain.pedges, dtype=np.int64).reshape(-1, 2)[edge_ids]
        cfg = np.zeros(domain.n_edges, dtype=np.uint8)
        out = np.empty((n, domain.n_edges), dtype=np.uint8)
        for _ in range(burn_in):
            _resample_edges(domain, cfg, edge_ids, pe, params.p, wired, rng)
        for i in range(n):
            for _ in range(thinning):
                _resample_edges(domain, cfg, edge_ids, pe, params.p, wired, rng)
            out[i] = cfg
        return out

    if engine == "heatbath":
        adj: list = [[] for _ in range(domain.n_vertices)]
        eset = set(int(e) for e in edge_ids)
        for e, (a, b) in enumerate(domain.pedges):
            if e in eset:
                adj[a].append((b, e))
                adj[b].append((a, e))
        boundary = domain.boundary_blacks if wired else frozenset()
        cfg = np.zeros(domain.n_edges, dtype=np.uint8)
        out = np.empty((n, domain.n_edges), dtype=np.uint8)
        for _ in range(burn_in):
            _heatbath_sweep(domain, cfg, edge_ids, adj, boundary, params.p, params.q, rng)
        for i in range(n):
            for _ in range(thinning):
                _heatbath_sweep(domain, cfg, edge_ids, adj, boundary, params.p, params.q, rng)
            out[i] = cfg
        return out

    raise ValueError(f"unknown engine {engine!r}")


def dual_config(domain: Domain, config: np.ndarray) -> np.ndarray:
    """Dual edge states: the dual edge crossing each primal edge is open
    exactly when the primal edge is closed."""
    return (1 - np.asarray(config, dtype=np.uint8)).astype(np.uint8)
