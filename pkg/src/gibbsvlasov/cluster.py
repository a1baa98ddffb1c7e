"""Brute-force cluster-expansion checks on small vertex sets.

Graphs on ``k`` labelled vertices ``0..k-1`` are edge sets of pairs
``(i, j)`` with ``i < j``.  The tree-graph identity uses a Penrose partition
rooted at vertex 0: for a spanning tree ``T`` with depths ``d`` and parents
``p``, the admissible extra edges are

* ``{i, j}`` with ``d(i) == d(j)``, and
* ``{i, j}`` with ``d(j) == d(i) + 1`` and ``i > p(j)``.

A connected graph ``G`` maps to its breadth-first tree with smallest-index
parents; the preimage of ``T`` is exactly ``[T, T u R(T)]``, so every
connected graph is counted once.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .kernels import FourierKernel

__all__ = [
    "EdgeWeights",
    "MayerFunctions",
    "mayer_functions",
    "enumerate_connected_graphs",
    "enumerate_trees",
    "connected_graph_sum",
    "penrose_tree_sum",
    "penrose_extra_edges",
    "cayley_count",
    "phi_k",
    "phi_k_routes",
    "tree_integral",
    "cycle_trace",
    "logZh_truncated",
    "Zh_set_partitions",
    "varphi_bound_check",
]

MAX_GRAPH_K = 5
MAX_QUAD_K = 4


@dataclass(frozen=True)
class EdgeWeights:
    """Symmetric ``k x k`` weights ``h_e`` with zero diagonal."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("edge weights must be a square matrix")
        if not np.array_equal(h, h.T):
            raise ValueError("edge weights must be symmetric")
        if np.any(np.diag(h) != 0):
            raise ValueError("edge weights must have zero diagonal")
        object.__setattr__(self, "h", h)

    @property
    def k(self) -> int:
        return self.h.shape[0]

    @classmethod
    def random(cls, k: int, rng: np.random.Generator, low=-1.0, high=1.0) -> "EdgeWeights":
        a = np.triu(rng.uniform(low, high, (k, k)), 1)
        return cls(a + a.T)


def _all_edges(k: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(k), 2))


def _is_connected(k: int, edges) -> bool:
    parent = list(range(k))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        parent[find(i)] = find(j)
    return len({find(v) for v in range(k)}) == 1


@lru_cache(maxsize=None)
def enumerate_connected_graphs(k: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """All connected simple graphs on ``k <= 5`` labelled vertices."""
    if k < 2:
        raise ValueError("need at least two vertices")
    if k > MAX_GRAPH_K:
        raise ValueError(f"graph enumeration is capped at k={MAX_GRAPH_K}")
    edges = _all_edges(k)
    out = []
    for mask in range(1, 1 << len(edges)):
        chosen = tuple(e for b, e in enumerate(edges) if mask >> b & 1)
        if len(chosen) >= k - 1 and _is_connected(k, chosen):
            out.append(chosen)
    return tuple(out)


def _prufer_decode(seq, k: int) -> tuple[tuple[int, int], ...]:
    degree = [1] * k
    for a in seq:
        degree[a] += 1
    edges = []
    for a in seq:
        leaf = min(v for v in range(k) if degree[v] == 1)
        edges.append((min(leaf, a), max(leaf, a)))
        degree[leaf] -= 1
        degree[a] -= 1
    u, w = [v for v in range(k) if degree[v] == 1]
    edges.append((u, w))
    return tuple(sorted(edges))


@lru_cache(maxsize=None)
def enumerate_trees(k: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """Labelled spanning trees on ``k`` vertices, decoded from Pruefer codes."""
    if k < 2:
        raise ValueError("need at least two vertices")
    if k == 2:
        return (((0, 1),),)
    return tuple(_prufer_decode(seq, k) for seq in itertools.product(range(k), repeat=k - 2))


def cayley_count(k: int) -> int:
    """Number of distinct labelled trees found by enumeration (``k <= 7``)."""
    if not 2 <= k <= 7:
        raise ValueError("cayley_count supports 2 <= k <= 7")
    return len(set(enumerate_trees(k)))


def _depths_parents(k: int, tree) -> tuple[list[int], list[int]]:
    adj = {v: [] for v in range(k)}
    for i, j in tree:
        adj[i].append(j)
        adj[j].append(i)
    depth, parent = [-1] * k, [-1] * k
    depth[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for w in adj[u]:
                if depth[w] < 0:
                    depth[w], parent[w] = depth[u] + 1, u
                    nxt.append(w)
        frontier = nxt
    return depth, parent


@lru_cache(maxsize=None)
def penrose_extra_edges(k: int, tree: tuple[tuple[int, int], ...]) -> tuple[tuple[int, int], ...]:
    """The admissible non-tree edges ``R(T)`` of the Penrose partition."""
    depth, parent = _depths_parents(k, tree)
    tree_set = set(tree)
    extra = []
    for i, j in _all_edges(k):
        if (i, j) in tree_set:
            continue
        if depth[i] == depth[j]:
            extra.append((i, j))
        else:
            lo, hi = (i, j) if depth[i] < depth[j] else (j, i)
            if depth[hi] == depth[lo] + 1 and lo > parent[hi]:
                extra.append((i, j))
    return tuple(extra)


def connected_graph_sum(w: EdgeWeights) -> float:
    """``sum_{G connected} prod_{e in G} h_e`` by enumeration."""
    h = w.h
    return float(sum(math.prod(h[i, j] for i, j in g) for g in enumerate_connected_graphs(w.k)))


def penrose_tree_sum(w: EdgeWeights) -> float:
    """``sum_T prod_{e in T} h_e prod_{e in R(T)} (1 + h_e)``."""
    h, k = w.h, w.k
    total = 0.0
    for tree in enumerate_trees(k):
        extra = penrose_extra_edges(k, tree)
        total += math.prod(h[i, j] for i, j in tree) * math.prod(1.0 + h[i, j] for i, j in extra)
    return float(total)


@dataclass(frozen=True)
class MayerFunctions:
    """Mayer data ``f = exp(-(beta/N) W) - 1``, ``c0 = int f``, ``h = (f - c0)/(1 + c0)``
    tabulated on the grid ``i / grid_size``."""

    kernel: FourierKernel
    beta: float
    N: int
    grid_size: int
    f_grid: np.ndarray
    c0: float
    h_grid: np.ndarray
    h_L1: float
    h_L2: float
    W_neg_sup: float

    def f(self, x):
        return np.expm1(-(self.beta / self.N) * self.kernel.potential(x))

    def h(self, x):
        return (self.f(x) - self.c0) / (1.0 + self.c0)

    def at_grid(self, n: int) -> "MayerFunctions":
        return mayer_functions(self.kernel, self.N, self.beta, n)


def mayer_functions(kernel: FourierKernel, N: int, beta: float, grid_size: int = 64) -> MayerFunctions:
    if kernel.dimension != 1:
        raise ValueError("Mayer tabulation is implemented for d = 1")
    if grid_size < 4 * kernel.cutoff:
        raise ValueError("grid_size must be at least 4*cutoff")
    W = kernel.grid_values(grid_size)
    f = np.expm1(-(beta / N) * W)
    c0 = float(f.mean())
    h = (f - c0) / (1.0 + c0)
    return MayerFunctions(
        kernel=kernel, beta=float(beta), N=int(N), grid_size=grid_size,
        f_grid=f, c0=c0, h_grid=h,
        h_L1=float(np.mean(np.abs(h))), h_L2=float(np.sqrt(np.mean(h**2))),
        W_neg_sup=float(max(0.0, -W.min())),
    )


def _edge_tables(h_grid: np.ndarray, k: int) -> dict:
    """``h(x_i - x_j)`` on the ``n^(k-1)`` grid with ``x_0`` pinned at 0."""
    n = h_grid.size
    axes = [np.zeros(1, dtype=int)] + [np.arange(n)] * (k - 1)
    idx = np.ix_(*axes[1:]) if k > 1 else ()
    coords = [np.zeros((1,) * (k - 1), dtype=int)] + list(idx)
    return {(i, j): h_grid[(coords[i] - coords[j]) % n] for i, j in _all_edges(k)}


def _graph_integral(tables: dict, edges, shape) -> float:
    prod = np.ones(shape)
    for e in edges:
        prod = prod * tables[e]
    return float(prod.mean())


def tree_integral(mayer: MayerFunctions, tree) -> float:
    """Quadrature of ``prod_{e in T} h_e`` over the torus (vanishes for centred ``h``)."""
    k = max(max(e) for e in tree) + 1
    tables = _edge_tables(mayer.h_grid, k)
    return _graph_integral(tables, tree, (mayer.grid_size,) * (k - 1))


def cycle_trace(mayer: MayerFunctions, length: int = 3, absolute: bool = True) -> float:
    """``int prod_r |h(x_r - x_{r+1})| dx`` around a cycle, as ``Tr((|h|*)^l)``."""
    g = np.abs(mayer.h_grid) if absolute else mayer.h_grid
    spec = np.fft.fft(g) / g.size
    return float(np.real(np.sum(spec**length)))


def phi_k_routes(mayer: MayerFunctions, k: int) -> tuple[float, float]:
    """``phi([k])`` on the current grid via connected graphs and via the
    tree representation ``sum_T int prod_T h (prod_{R(T)} (1+h) - 1)``."""
    if k < 2 or k > MAX_QUAD_K:
        raise ValueError(f"phi_k supports 2 <= k <= {MAX_QUAD_K}")
    shape = (mayer.grid_size,) * (k - 1)
    tables = _edge_tables(mayer.h_grid, k)
    graph_total = np.zeros(shape)
    for g in enumerate_connected_graphs(k):
        term = np.ones(shape)
        for e in g:
            term = term * tables[e]
        graph_total += term
    tree_total = np.zeros(shape)
    for tree in enumerate_trees(k):
        bare = np.ones(shape)
        for e in tree:
            bare = bare * tables[e]
        dressing = np.ones(shape)
        for e in penrose_extra_edges(k, tree):
            dressing = dressing * (1.0 + tables[e])
        tree_total += bare * (dressing - 1.0)
    return float(graph_total.mean()), float(tree_total.mean())


def phi_k(mayer: MayerFunctions, k: int, grid_size: int | None = None, tol: float = 1e-9,
          max_grid: int | None = None, route_tol: float = 1e-8) -> float:
    """Cluster coefficient ``phi([k])`` by tensor quadrature.

    With ``grid_size=None`` the grid is doubled from ``mayer.grid_size`` until
    successive values differ by less than ``tol``.  The graph and tree routes
    must agree to ``route_tol``; a mismatch raises ``ArithmeticError``.
    """
    if mayer.kernel.dimension != 1:
        raise ValueError("phi_k requires d = 1")
    if k < 2 or k > MAX_QUAD_K:
        raise ValueError(f"phi_k supports 2 <= k <= {MAX_QUAD_K}")
    if grid_size is not None:
        m = mayer if grid_size == mayer.grid_size else mayer.at_grid(grid_size)
        graph, tree = phi_k_routes(m, k)
    else:
        max_grid = max_grid or {2: 4096, 3: 512, 4: 128}[k]
        m = mayer
        graph, tree = phi_k_routes(m, k)
        while m.grid_size * 2 <= max_grid:
            m = m.at_grid(m.grid_size * 2)
            g2, t2 = phi_k_routes(m, k)
            done = abs(g2 - graph) < tol
            graph, tree = g2, t2
            if done:
                break
    if abs(graph - tree) > route_tol:
        raise ArithmeticError(f"graph and tree routes disagree: {graph} vs {tree}")
    return graph


@dataclass(frozen=True)
class TruncatedLogZh:
    value: float
    terms: dict
    tail_bound: float | None


def logZh_truncated(mayer: MayerFunctions, kmax: int, C: float | None = None,
                    grid_size: int | None = None) -> TruncatedLogZh:
    """``sum_{k=2}^{kmax} binom(N, k) phi([k])`` (exchangeability collapses
    the subset sum).  With ``C`` given, ``tail_bound`` sums the cluster bound
    over the dropped sizes ``kmax < k <= N``."""
    if kmax not in (2, 3, 4):
        raise ValueError("kmax must be 2, 3 or 4")
    N = mayer.N
    terms = {}
    for k in range(2, min(kmax, N) + 1):
        terms[k] = math.comb(N, k) * phi_k(mayer, k, grid_size)
    tail = None
    if C is not None:
        tail = float(sum(_cluster_bound(mayer, k, C) for k in range(kmax + 1, N + 1)))
    return TruncatedLogZh(float(sum(terms.values())), terms, tail)


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def Zh_set_partitions(mayer: MayerFunctions, grid_size: int | None = None) -> float:
    """Exact finite-``N`` expansion ``Z_h = sum_{partitions} prod_B phi(B)``
    (singletons weigh 1), valid for ``N <= 4``."""
    N = mayer.N
    if N > MAX_QUAD_K:
        raise ValueError("set-partition expansion needs N <= 4")
    phis = {1: 1.0}
    for k in range(2, N + 1):
        phis[k] = phi_k(mayer, k, grid_size)
    return float(sum(math.prod(phis[len(b)] for b in part) for part in _set_partitions(list(range(N)))))


def _cluster_bound(mayer: MayerFunctions, k: int, C: float) -> float:
    N = mayer.N
    return (math.exp(mayer.beta * k * mayer.W_neg_sup) * C**k * N**2 * mayer.h_L2**2
            * (N * mayer.h_L1) ** (k - 2))


def varphi_bound_check(mayer: MayerFunctions, k: int, C: float, grid_size: int | None = None) -> dict:
    """Compare ``binom(N,k)|phi([k])|`` with the cluster bound at constant ``C``.

    Returns ``lhs``, ``rhs``, ``holds`` and ``C_min``, the smallest constant
    for which the inequality holds.
    """
    if k > MAX_QUAD_K:
        raise ValueError(f"k must be <= {MAX_QUAD_K}")
    lhs = math.comb(mayer.N, k) * abs(phi_k(mayer, k, grid_size))
    rhs = _cluster_bound(mayer, k, C)
    unit = _cluster_bound(mayer, k, 1.0)
    c_min = (lhs / unit) ** (1.0 / k) if unit > 0 else (0.0 if lhs == 0 else math.inf)
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs, "C_min": c_min}
