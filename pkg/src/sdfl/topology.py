"""Communication graphs, per-round neighbour selection, and mixing matrices.

Graphs are undirected and connected; every node's neighbourhood is closed
(contains the node itself). A round selection picks, for every node i, a
subset of its neighbourhood that always includes i; the induced column-
stochastic matrix assigns weight 1/t_i to each selected neighbour.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TopologyGraph:
    """Undirected graph over m nodes; `adj` is boolean with a False diagonal."""

    m: int
    adj: np.ndarray

    def __post_init__(self):
        adj = self.adj
        if adj.shape != (self.m, self.m):
            raise ValueError("adjacency shape mismatch")
        if adj.dtype != np.bool_:
            raise ValueError("adjacency must be boolean")
        if np.any(np.diag(adj)):
            raise ValueError("no self loops; neighbourhoods add the node itself")
        if not np.array_equal(adj, adj.T):
            raise ValueError("graph must be undirected (symmetric adjacency)")

    def neighborhood(self, i: int) -> np.ndarray:
        """Closed neighbourhood of i, ascending, including i."""
        nbrs = np.flatnonzero(self.adj[i])
        return np.sort(np.append(nbrs, i))

    def closed_sizes(self) -> np.ndarray:
        return self.adj.sum(axis=1).astype(np.int64) + 1

    def degrees(self) -> np.ndarray:
        """Open degrees (neighbours excluding self)."""
        return self.adj.sum(axis=1).astype(np.int64)

    def edges(self):
        ii, jj = np.nonzero(np.triu(self.adj, k=1))
        return list(zip(ii.tolist(), jj.tolist()))


def _is_connected(adj: np.ndarray) -> bool:
    m = adj.shape[0]
    if m <= 1:
        return True
    seen = np.zeros(m, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i]):
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    return bool(seen.all())


def complete_graph(m: int) -> TopologyGraph:
    adj = np.ones((m, m), dtype=bool)
    np.fill_diagonal(adj, False)
    return TopologyGraph(m=m, adj=adj)


def generate_random_graph(m: int, edge_prob: float,
                          rng: np.random.Generator) -> TopologyGraph:
    """Erdos-Renyi graph, resampled (up to 1000 times) until connected."""
    if m < 2:
        raise ValueError("need at least 2 nodes; use complete_graph(1) for one")
    if not 0.0 < edge_prob <= 1.0:
        raise ValueError(f"edge probability must be in (0, 1], got {edge_prob}")
    for _ in range(1000):
        upper = rng.random((m, m)) < edge_prob
        adj = np.triu(upper, k=1)
        adj = adj | adj.T
        if _is_connected(adj):
            return TopologyGraph(m=m, adj=adj)
    raise RuntimeError(
        f"no connected graph in 1000 draws at edge_prob={edge_prob}; "
        "increase edge_prob")


@dataclass(frozen=True)
class RoundSelection:
    """Per-node selected neighbourhoods for one communication round."""

    selected: tuple  # tuple of ascending int arrays, each containing its node

    def __post_init__(self):
        for i, sel in enumerate(self.selected):
            if i not in sel:
                raise ValueError(f"node {i} missing from its own selection")

    @property
    def m(self) -> int:
        return len(self.selected)

    def t(self) -> np.ndarray:
        return np.array([len(sel) for sel in self.selected], dtype=np.int64)

    def cross_edges(self):
        """Undirected edges {i, j}, i != j, used by any selection this round."""
        edges = set()
        for i, sel in enumerate(self.selected):
            for j in sel:
                if j != i:
                    edges.add((min(i, int(j)), max(i, int(j))))
        return edges


def participation_sizes(g: TopologyGraph, r: float) -> np.ndarray:
    """t_i = max(1, round(r * |N_i|)) with half-up rounding, |N_i| closed."""
    if not 0.0 < r <= 1.0:
        raise ValueError(f"participation rate must be in (0, 1], got {r}")
    sizes = g.closed_sizes()
    return np.maximum(1, np.floor(r * sizes + 0.5).astype(np.int64))


def select_neighbors(g: TopologyGraph, r: float,
                     rng: np.random.Generator) -> RoundSelection:
    """Uniformly sample t_i - 1 neighbours of each node, with i forced in."""
    tsizes = participation_sizes(g, r)
    picks = []
    for i in range(g.m):
        others = np.flatnonzero(g.adj[i])
        k = int(tsizes[i]) - 1
        chosen = rng.choice(others, size=k, replace=False) if k > 0 else \
            np.empty(0, dtype=np.int64)
        picks.append(np.sort(np.append(chosen, i)).astype(np.int64))
    return RoundSelection(selected=tuple(picks))


def select_responders(g: TopologyGraph, latencies: np.ndarray,
                      tsizes: np.ndarray) -> RoundSelection:
    """First-t_i-responders: keep the t_i - 1 neighbours with the smallest
    sampled link latency (ties by node index), plus the node itself.
    `latencies[i, j]` is the latency of link i <- j this round.
    """
    picks = []
    for i in range(g.m):
        others = np.flatnonzero(g.adj[i])
        k = int(tsizes[i]) - 1
        if k > 0:
            order = np.lexsort((others, latencies[i, others]))
            chosen = others[order[:k]]
        else:
            chosen = np.empty(0, dtype=np.int64)
        picks.append(np.sort(np.append(chosen, i)).astype(np.int64))
    return RoundSelection(selected=tuple(picks))


def mixing_matrix(sel: RoundSelection) -> np.ndarray:
    """Column-stochastic A with A[j, i] = 1/t_i for j in node i's selection."""
    m = sel.m
    A = np.zeros((m, m))
    for i, chosen in enumerate(sel.selected):
        A[chosen, i] = 1.0 / len(chosen)
    return A


def check_window_connectivity(selections) -> bool:
    """True iff the union of selected cross edges over the window connects V."""
    selections = list(selections)
    if not selections:
        raise ValueError("need at least one recorded round")
    m = selections[0].m
    adj = np.zeros((m, m), dtype=bool)
    for sel in selections:
        for i, j in sel.cross_edges():
            adj[i, j] = adj[j, i] = True
    return _is_connected(adj)


@dataclass(frozen=True)
class TheoryConstants:
    """Constants of the convergence bound; conservative by construction.

    tau is mathematically in (0, 1) but rounds to 1.0 in float64 already at
    modest sizes, and c0 overflows; the log10 fields are computed stably and
    stay meaningful at any size.
    """

    tau: float
    c0: float
    log10_one_minus_tau: float
    log10_c0: float


def theory_constants(m: int, B: int, lipschitz: float) -> TheoryConstants:
    """tau = (1 - m^(-mB))^(1/B) and c0 = (80 m sqrt(l) / (1 - tau))^2."""
    if m < 2 or B < 1 or not lipschitz > 0:
        raise ValueError("need m >= 2, B >= 1, lipschitz > 0")
    log_x = -m * B * math.log(m)  # ln of m^(-mB)
    if log_x > -50.0:
        x = math.exp(log_x)
        log_tau = math.log1p(-x) / B
        tau = math.exp(log_tau)
        ln_one_minus_tau = math.log(-math.expm1(log_tau))
    else:
        # x below ~1e-22: 1 - tau ~= x / B, far under float resolution of tau
        tau = 1.0
        ln_one_minus_tau = log_x - math.log(B)
    log10_omt = ln_one_minus_tau / math.log(10.0)
    log10_c0 = 2.0 * (math.log10(80.0 * m) + 0.5 * math.log10(lipschitz) - log10_omt)
    c0 = 10.0 ** log10_c0 if log10_c0 < 308 else math.inf
    return TheoryConstants(tau=tau, c0=c0, log10_one_minus_tau=log10_omt,
                           log10_c0=log10_c0)


def window_connectivity_probability(m: int, B: int, tsizes) -> float:
    """Diagnostic lower bound on the probability that every pair communicates
    within B rounds: prod_i [1 - (1 - (t_i - 1)/(m - 1))^B]^(m-1).
    """
    p = 1.0
    for t in np.asarray(tsizes, dtype=np.float64):
        p *= (1.0 - (1.0 - (t - 1.0) / (m - 1.0)) ** B) ** (m - 1)
    return float(p)


def save_edge_list(g: TopologyGraph, path) -> None:
    """One 'i j' pair per line, 0-based node ids."""
    with open(path, "w", encoding="ascii") as fh:
        for i, j in g.edges():
            fh.write(f"{i} {j}\n")


def load_edge_list(path, m: int) -> TopologyGraph:
    adj = np.zeros((m, m), dtype=bool)
    with open(path, encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            i, j = (int(tok) for tok in line.split())
            adj[i, j] = adj[j, i] = True
    return TopologyGraph(m=m, adj=adj)
