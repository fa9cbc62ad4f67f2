"""Weighted digraphs, Laplacians, condensation and essential phases of Laplacians.

Conventions: an edge ``(i, j, w)`` points from tail ``i`` to head ``j``; node
``j`` then receives ``y_i`` with gain ``a_ji = w``.  The Laplacian has
``l_ij = -a_ij`` off the diagonal and in-degrees on the diagonal, so
``L @ 1 = 0``.  Node indices are 0-based here (files use 1-based ids).
"""

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.sparse.csgraph import connected_components

from . import phasecore
from .errors import (
    NoSpanningTreeError,
    NotStronglyConnectedError,
    PhaseSyncError,
    PreconditionError,
)
from .phasecore import EssentialPhaseResult

POSITIVITY_TOL = 1e-10


@dataclass(frozen=True)
class WeightedDigraph:
    n: int
    edges: tuple = ()

    def __post_init__(self):
        edges = tuple((int(i), int(j), float(w)) for i, j, w in self.edges)
        for i, j, w in edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not w > 0:
                raise ValueError(f"edge ({i}, {j}) has non-positive weight {w}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def undirected(cls, n, edges):
        """Graph with both orientations of every ``(i, j, w)``."""
        both = []
        for i, j, w in edges:
            both += [(i, j, w), (j, i, w)]
        return cls(n, both)

    def adjacency(self):
        """Matrix ``A`` with ``A[j, i] = a_ji``, the weight of edge i -> j."""
        A = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            A[j, i] += w
        return A

    def is_undirected(self, tol=0.0):
        A = self.adjacency()
        return bool(np.all(np.abs(A - A.T) <= tol))


@dataclass(frozen=True)
class Block:
    nodes: tuple
    start: int
    stop: int
    L_block: np.ndarray
    L_component: np.ndarray


@dataclass(frozen=True)
class LaplacianDecomposition:
    """Laplacian permuted into lower block-triangular (Frobenius) form.

    ``permutation[k]`` is the original index of the node placed at position
    ``k``; ``L_perm = L[np.ix_(permutation, permutation)]``.  Block 0 holds
    the roots.
    """

    L: np.ndarray
    permutation: np.ndarray
    L_perm: np.ndarray
    blocks: list = field(default_factory=list)
    roots_first: bool = True

    @property
    def components(self):
        return [b.nodes for b in self.blocks]


@dataclass(frozen=True)
class IncidenceFactorization:
    E: np.ndarray
    edge_order: list
    weights: np.ndarray


def laplacian(G):
    A = G.adjacency()
    return np.diag(A.sum(axis=1)) - A


def _scc(G):
    ncomp, labels = connected_components(G.adjacency().T != 0, directed=True,
                                         connection="strong")
    return ncomp, labels


def _condensation_order(G, ncomp, labels):
    """Topological order of SCCs, ties broken by smallest member index."""
    members = [sorted(np.flatnonzero(labels == c).tolist()) for c in range(ncomp)]
    succ = [set() for _ in range(ncomp)]
    indeg = [0] * ncomp
    for i, j, _ in G.edges:
        a, b = labels[i], labels[j]
        if a != b and b not in succ[a]:
            succ[a].add(b)
            indeg[b] += 1
    sources = [c for c in range(ncomp) if indeg[c] == 0]
    heap = [(members[c][0], c) for c in sources]
    heapq.heapify(heap)
    order = []
    while heap:
        _, c = heapq.heappop(heap)
        order.append(c)
        for b in succ[c]:
            indeg[b] -= 1
            if indeg[b] == 0:
                heapq.heappush(heap, (members[b][0], b))
    return order, members, sources


def connectivity(G, tol=1e-12):
    """Spanning-tree, strong-connectivity and weight-balance flags."""
    ncomp, labels = _scc(G)
    _, _, sources = _condensation_order(G, ncomp, labels)
    A = G.adjacency()
    d_in, d_out = A.sum(axis=1), A.sum(axis=0)
    return {
        "has_spanning_tree": len(sources) == 1,
        "strongly_connected": ncomp == 1,
        "weight_balanced": bool(np.allclose(d_in, d_out, rtol=0, atol=tol * max(1.0, A.max(initial=0)))),
    }


def _induced_laplacian(G, nodes):
    idx = {v: k for k, v in enumerate(nodes)}
    sub = WeightedDigraph(len(nodes), [(idx[i], idx[j], w) for i, j, w in G.edges
                                       if i in idx and j in idx])
    return laplacian(sub)


def frobenius_form(G):
    """Condense ``G`` into strongly connected components, roots first.

    Raises
    ------
    NoSpanningTreeError
        If the condensation has more than one source.
    """
    ncomp, labels = _scc(G)
    order, members, sources = _condensation_order(G, ncomp, labels)
    if len(sources) != 1:
        raise NoSpanningTreeError(f"graph has {len(sources)} source components, no spanning tree")
    L = laplacian(G)
    perm = np.array([v for c in order for v in members[c]], dtype=int)
    Lp = L[np.ix_(perm, perm)]
    blocks, start = [], 0
    for c in order:
        nodes = tuple(members[c])
        stop = start + len(nodes)
        blocks.append(Block(nodes, start, stop, Lp[start:stop, start:stop].copy(),
                            _induced_laplacian(G, nodes)))
        start = stop
    return LaplacianDecomposition(L, perm, Lp, blocks, True)


def left_null_vector(L):
    """Left null vector of a Laplacian normalized to max entry 1."""
    L = np.asarray(L, dtype=float)
    ns = null_space(L.T, rcond=1e-10)
    if ns.shape[1] != 1:
        # fall back to the smallest singular direction
        _, _, Vh = np.linalg.svd(L.T)
        v = Vh[-1]
    else:
        v = ns[:, 0]
    v = v / v[np.argmax(np.abs(v))]
    return v


def essential_phase_laplacian(L):
    """Exact essential phase of the Laplacian of a strongly connected graph.

    With ``v`` the positive left null vector and ``V = diag(v)``, ``VL`` is
    the Laplacian of a weight-balanced graph; its phases on the complement
    of ``1`` give the essential phase.  ``scaling`` is the optimal diagonal
    similarity ``V^{-1/2}``.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    if n == 1:
        return EssentialPhaseResult(0.0, np.ones(1), True)
    A = -L.copy()
    np.fill_diagonal(A, 0)
    ncomp, _ = connected_components(A != 0, directed=True, connection="strong")
    if ncomp != 1:
        raise NotStronglyConnectedError(f"Laplacian graph has {ncomp} strong components")
    v = left_null_vector(L)
    if np.any(v <= POSITIVITY_TOL):
        raise PreconditionError(f"left null vector is not strictly positive: min {v.min():.3g}")
    VL = v[:, None] * L
    # orthonormal basis of the complement of 1
    Q = np.linalg.svd(np.eye(n) - 1.0 / n, full_matrices=True)[0][:, : n - 1]
    prof = phasecore.phases(Q.T @ VL @ Q)
    return EssentialPhaseResult(float(max(prof.upper, 0.0)), 1 / np.sqrt(v), True)


def component_phase_bounds(dec, refine=False):
    """Essential-phase bounds ``theta_k`` for each diagonal block.

    ``theta_1`` is exact (root component).  For later blocks the essential
    phase of the component's own Laplacian bounds that of the nonsingular
    block from above; with ``refine`` the block is also scaled numerically
    and the smaller value kept.
    """
    thetas = []
    for k, block in enumerate(dec.blocks):
        theta = essential_phase_laplacian(block.L_component).value
        if k > 0 and refine and len(block.nodes) > 1:
            try:
                theta = min(theta, phasecore.essential_phase(block.L_block).value)
            except PhaseSyncError:  # refinement is best effort; the bound stands
                pass
        thetas.append(theta)
    return thetas


def incidence(G, tol=0.0):
    """Incidence factorization ``L = E diag(a) E'`` of an undirected graph.

    Each undirected edge ``{i, j}`` (``i < j``) becomes a column with ``+1``
    at head ``j`` and ``-1`` at tail ``i``.
    """
    A = G.adjacency()
    if not np.all(np.abs(A - A.T) <= tol):
        raise PreconditionError("incidence factorization needs an undirected graph")
    pairs = [(i, j) for i in range(G.n) for j in range(i + 1, G.n) if A[j, i] > 0]
    E = np.zeros((G.n, len(pairs)))
    for k, (i, j) in enumerate(pairs):
        E[j, k], E[i, k] = 1.0, -1.0
    weights = np.array([A[j, i] for i, j in pairs])
    return IncidenceFactorization(E, pairs, weights)
