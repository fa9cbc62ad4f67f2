"""Random instances for the test suites."""

import numpy as np
from scipy import signal

from phasesync import netgraph
from phasesync.ltisys import StateSpace, TransferMatrix


def random_spanning_digraph(rng, n, extra=0.5, undirected=False):
    """Random tree rooted at node 0 plus random extra edges."""
    edges = {}
    for j in range(1, n):
        i = int(rng.integers(0, j))
        edges[(i, j)] = float(rng.uniform(0.5, 2.0))
    for _ in range(int(extra * n)):
        i, j = rng.choice(n, 2, replace=False)
        edges[(int(i), int(j))] = float(rng.uniform(0.5, 2.0))
    items = [(i, j, w) for (i, j), w in edges.items()]
    if undirected:
        seen = {}
        for i, j, w in items:
            seen.setdefault((min(i, j), max(i, j)), w)
        return netgraph.WeightedDigraph.undirected(n, [(i, j, w) for (i, j), w in seen.items()])
    return netgraph.WeightedDigraph(n, items)


def random_pd(rng, m, cond=4.0):
    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    return Q @ np.diag(rng.uniform(1.0, cond, m)) @ Q.T


def integrator_agent(rng, m, lag_range=(0.5, 5.0), lead=False):
    """P(s) = L (p/z)(s+z)/(s(s+p)) L' with L L' = M0 positive definite.

    Each channel has phase in (-pi, -pi/2] (pure lag) or, with ``lead``,
    a lead-lag whose phase can rise above -pi/2.
    """
    M0 = random_pd(rng, m)
    p = rng.uniform(*lag_range)
    z = rng.uniform(0.2, 3.0) * p if lead else rng.uniform(1.5, 6.0) * p
    a, b, c, d = signal.tf2ss([p / z, p], [1.0, p, 0.0])
    L = np.linalg.cholesky(M0)
    S = StateSpace(np.kron(np.eye(m), a), np.kron(np.eye(m), b) @ L.T,
                   L @ np.kron(np.eye(m), c), np.zeros((m, m)))
    return TransferMatrix.from_statespace(S, [0.0])


def lag_agent(rng, m):
    """P(s) = M0 k/(s (s+p)(s+r)): phase sweeps from -pi/2 towards -3pi/2."""
    M0 = random_pd(rng, m)
    p, r = rng.uniform(0.5, 4.0, 2)
    a, b, c, d = signal.tf2ss([p * r], np.polymul([1.0, p, 0.0], [1.0, r]))
    L = np.linalg.cholesky(M0)
    S = StateSpace(np.kron(np.eye(m), a), np.kron(np.eye(m), b) @ L.T,
                   L @ np.kron(np.eye(m), c), np.zeros((m, m)))
    return TransferMatrix.from_statespace(S, [0.0])


def oscillator_agent(rng, m):
    """Positive real P(s) = M1 2s/(s^2+1) + M2/(s+p) with M1, M2 positive definite."""
    M1, M2 = random_pd(rng, m), random_pd(rng, m)
    p = rng.uniform(0.5, 3.0)
    a, b, c, _ = signal.tf2ss([2.0, 0.0], [1.0, 0.0, 1.0])
    L1, L2 = np.linalg.cholesky(M1), np.linalg.cholesky(M2)
    A = np.block([[np.kron(np.eye(m), a), np.zeros((2 * m, m))],
                  [np.zeros((m, 2 * m)), -p * np.eye(m)]])
    B = np.vstack([np.kron(np.eye(m), b) @ L1.T, L2.T])
    C = np.hstack([L1 @ np.kron(np.eye(m), c), L2])
    return TransferMatrix.from_statespace(StateSpace(A, B, C, np.zeros((m, m))), [1.0])


def edge_system(rng, m):
    """Stable sectorial W(s) = w (s+a)/(s+b) I with a, b > 0."""
    w, a, b = rng.uniform(0.5, 2.0), *rng.uniform(0.2, 5.0, 2)
    A = -b * np.eye(m)
    return TransferMatrix.from_statespace(
        StateSpace(A, np.eye(m), w * (a - b) * np.eye(m), w * np.eye(m)), [])


def random_instance(rng):
    """One analysis instance: (kind, agents, graph, extra) with kind in {"t1", "t2"}."""
    n = int(rng.integers(2, 6))
    m = int(rng.integers(1, 3))
    family = rng.choice(["lead", "lag", "osc", "t1"], p=[0.3, 0.2, 0.2, 0.3])
    if family == "t1":
        G = random_spanning_digraph(rng, n, undirected=True)
        agents = [integrator_agent(rng, m, lead=bool(rng.integers(2))) for _ in range(n)]
        edges = {(i, j): edge_system(rng, m) for i, j, _ in G.edges if i < j}
        return "t1", agents, G, edges
    G = random_spanning_digraph(rng, n)
    if family == "osc":
        agents = [oscillator_agent(rng, m) for _ in range(n)]
    elif family == "lag":
        agents = [lag_agent(rng, m) for _ in range(n)]
    else:
        agents = [integrator_agent(rng, m, lead=True) for _ in range(n)]
    return "t2", agents, G, None


def sectorial_matrix(rng, n, spread=2.5, center=0.0, complex_T=True):
    """T^* D T with unimodular D whose angles lie within ``spread`` about ``center``."""
    T = rng.standard_normal((n, n))
    if complex_T:
        T = T + 1j * rng.standard_normal((n, n))
    ang = center + rng.uniform(-spread / 2, spread / 2, n)
    return T.conj().T @ np.diag(np.exp(1j * ang)) @ T, np.sort(ang)[::-1]


def phase_oracle(C, center):
    """Phases of a sectorial C from the eigenvalues of C^{-*} C (equal to exp(2j phi))."""
    lam = np.linalg.eigvals(np.linalg.solve(C.conj().T, C))
    half = np.angle(lam * np.exp(-2j * center)) / 2
    return np.sort(center + half)[::-1]


def two_mode_agent(rng, m):
    """Random residues at 0 and j plus a stable first-order remainder."""
    M0 = rng.standard_normal((m, m)) + 2 * np.eye(m)
    M1 = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    p = rng.uniform(0.5, 3.0)
    rem = StateSpace(-p * np.eye(m), np.eye(m), rng.standard_normal((m, m)), np.zeros((m, m)))
    return TransferMatrix({0.0: M0, 1.0: M1}, rem)
