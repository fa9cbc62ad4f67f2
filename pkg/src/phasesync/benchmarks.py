"""The five-agent example network and its reported controller.

The agents are entered from their published partial-fraction expressions.
The edge weights of the published network are not available, so the
topology is reconstructed: a directed unit 3-cycle of roots feeding a pair
of mutually coupled followers.
"""

import numpy as np

from .ltisys import TransferMatrix
from .netgraph import WeightedDigraph

OMEGA = (0.0, 1.0)

P = np.poly1d


def _entries(M):
    return [[np.atleast_1d(np.asarray(e.coeffs if isinstance(e, np.poly1d) else e, float)).tolist()
             for e in row] for row in M]


def _agent_doc(M0, N, R, rden):
    """``M0/s + N(s)/(s^2+1) + R(s)/rden(s)`` as an agent document."""
    return {"m": 2, "modes": list(OMEGA), "terms": [
        {"num": _entries(M0), "den": [1.0, 0.0]},
        {"num": _entries(N), "den": [1.0, 0.0, 1.0]},
        {"num": _entries(R), "den": np.asarray(rden.coeffs, float).tolist()},
    ]}


def five_agents_json():
    """Documents for the five agents in the rational-terms file layout."""
    s = P([1, 0])
    one = P([1])
    return [
        _agent_doc([[14, 2], [5, 12]],
                   [[8 * s - 10, 12 * s - 2], [14 * s - 6, 2 * s - 2]],
                   [[3 * (s + 1), 3 * (s + 4)], [3 * (s - 1), 3 * (s + 3)]], s + 2),
        _agent_doc([[17, 7], [5, 26]],
                   [[14 * s - 8, 6 * s - 10], [12 * s - 14, 6 * s - 8]],
                   [[one, s + 4], [s + 5, (s + 3) * (s + 1)]], (s + 6) * (s + 2)),
        _agent_doc([[14, 17], [26, 34]],
                   [[8 * s - 4, 8 * s - 8], [8 * s - 2, 2 * s - 4]],
                   [[10 * (s + 8) * (s + 3), 10 * (s + 14)], [10 * (s - 5), 10 * (s + 7)]],
                   (s + 4) * (s + 2)),
        _agent_doc([[4, 3], [2, 13]],
                   [[6 * s, 6 * s - 8], [6 * s - 22, 2 * s - 8]],
                   [[4 * (s + 10), 4 * (s + 4) * (s + 8)],
                    [4 * (s + 6) * (s + 2) * (s + 20), 4 * (s + 3)]],
                   (s + 11) * (s + 20) * (s + 5)),
        _agent_doc([[2, 2], [7, 13]],
                   [[2 * s - 4, -12 * one], [2 * s - 8, 2 * s - 10]],
                   [[20 * (s + 6), s + 4], [s - 5, 3 * one]], s + 9),
    ]


def five_agents():
    from .io import system_from_json
    return [system_from_json(doc) for doc in five_agents_json()]


def five_agent_network():
    """Roots 0 -> 1 -> 2 -> 0; node 2 drives node 3; nodes 3 and 4 coupled both ways."""
    return WeightedDigraph(5, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0),
                               (2, 3, 1.0), (3, 4, 1.0), (4, 3, 1.0)])


def published_controller():
    """The published uniform controller, gain 0.01 included."""
    num = np.array([
        [[62.14, 251.9, 444, 499.6, 422, 234.4, 57.76],
         [-42.5, -157, -240.3, -241.6, -215.1, -136.8, -37.47]],
        [[-71.2, -276.3, -463.7, -516, -460.6, -273.8, -70.57],
         [67.56, 277.3, 500, 578, 493.7, 272.2, 66.28]],
    ]) * 0.01
    den = np.array([16, 96, 240, 320, 240, 96, 16], float)
    C = TransferMatrix.from_rational(num, den)
    C.rational = (num, den)
    return C


def five_agent_network_json():
    return {"n": 5, "undirected": False,
            "edges": [{"from": i + 1, "to": j + 1, "w": w} for i, j, w in five_agent_network().edges]}
