import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import (
    integrator_agent,
    oscillator_agent,
    random_instance,
    random_spanning_digraph,
)
from phasesync import analysis, ltisys
from phasesync.errors import NoSpanningTreeError, PreconditionError
from phasesync.ltisys import StateSpace, TransferMatrix
from phasesync.netgraph import WeightedDigraph

seeds = st.integers(0, 2**32 - 1)
INT = TransferMatrix.from_statespace(StateSpace([[0.0]], [[1.0]], [[1.0]], [[0.0]]))
CYCLE3 = WeightedDigraph(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)])


def tf(num, den, omega=None):
    return TransferMatrix.from_rational([[list(num)]], list(den), omega)


# -- small phase -----------------------------------------------------------------


def test_small_phase_integrator_unit():
    v = analysis.small_phase_check(INT, 1.0)
    assert v.holds
    assert v.margin == pytest.approx(np.pi / 2, abs=1e-6)


def test_small_phase_integrator_lead():
    H = tf([1.0, 1.0], [1.0, 2.0])
    v = analysis.small_phase_check(INT, H)
    # largest lead of (s+1)/(s+2), attained at w = sqrt(2)
    lead = np.arctan(np.sqrt(2)) - np.arctan(np.sqrt(2) / 2)
    assert v.holds
    assert v.margin > np.pi / 2 - lead
    attained_upper = v.per_component[0]["attained"][1]
    assert attained_upper == pytest.approx(-np.pi / 2 + lead, abs=1e-4)


def test_small_phase_double_integrator():
    G = StateSpace([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [[1.0, 0.0]], [[0.0]])
    v = analysis.small_phase_check(G, 1.0)
    assert not v.holds and v.precondition_failed


def test_small_phase_unstable_h():
    v = analysis.small_phase_check(INT, StateSpace([[1.0]], [[1.0]], [[1.0]], [[1.0]]))
    assert v.precondition_failed


def test_small_phase_violation():
    # 1/s with a biproper lag reaching below -pi/2 gives a sum below -pi
    H = tf([1.0, 20.0, 100.0], [1.0, 2.0, 1.0])
    v = analysis.small_phase_check(INT, H)
    assert not v.holds and not v.precondition_failed
    assert v.worst_frequency > 1


# -- undirected, edge dynamics ------------------------------------------------------


def test_edge_network_integrators_static_edges(rng):
    G = random_spanning_digraph(rng, 4, undirected=True)
    agents = [tf([k], [1.0, 0.0]) for k in (1.0, 2.0, 0.5, 3.0)]
    v = analysis.check_edge_network(agents, G)
    assert v.holds
    assert v.margin == pytest.approx(np.pi / 2, abs=1e-6)


def test_edge_network_lag_edge_violates():
    G = WeightedDigraph.undirected(3, [(0, 1, 1.0), (1, 2, 1.0)])
    W = TransferMatrix.from_rational([[[1.0, 20.0, 100.0]]], [1.0, 2.0, 1.0])
    v = analysis.check_edge_network([INT] * 3, G, {(0, 1): W, (1, 2): W})
    assert not v.holds
    # phase of ((s+10)/(s+1))^2 is lowest at w = sqrt(10)
    assert v.worst_frequency == pytest.approx(np.sqrt(10), rel=0.05)


def test_edge_network_single_edge_consensus():
    G = WeightedDigraph.undirected(2, [(0, 1, 1.0)])
    v = analysis.check_edge_network([INT, INT], G)
    assert v.holds
    cl = ltisys.closed_loop([INT, INT], G, mode="edges")
    _, Y = ltisys.simulate(cl.A, cl.C, [1.0, 3.0], 20.0)
    np.testing.assert_allclose(Y[-1], [2.0, 2.0], atol=1e-6)


def test_edge_network_rejects_directed():
    with pytest.raises(PreconditionError):
        analysis.check_edge_network([INT] * 3, CYCLE3)


def test_edge_network_reports_both_residue_readings(rng):
    G = WeightedDigraph.undirected(2, [(0, 1, 1.0)])
    agents = [integrator_agent(rng, 2), integrator_agent(rng, 2)]
    v = analysis.check_edge_network(agents, G)
    res = v.details["residues"]
    assert set(res) == {"joint", "individual"}
    assert len(res["individual"][0.0]) == 2


# -- directed, controllers ------------------------------------------------------------


def test_controller_network_positive_real(rng):
    G = random_spanning_digraph(rng, 4)
    v = analysis.check_controller_network([oscillator_agent(rng, 2) for _ in range(4)], G)
    assert v.holds


def test_controller_network_undirected_full_interval(rng):
    G = random_spanning_digraph(rng, 4, undirected=True)
    agents = [integrator_agent(rng, 1) for _ in range(4)]
    v = analysis.check_controller_network(agents, G)
    assert v.holds
    assert v.per_component[0]["interval"] == pytest.approx((-np.pi, np.pi))


def test_controller_network_cycle_violation():
    # 1/(s(s+1)) reaches -pi + pi/6 at w = tan(pi/3)
    P = tf([1.0], [1.0, 1.0, 0.0])
    v = analysis.check_controller_network([P] * 3, CYCLE3)
    assert not v.holds
    lo, hi = v.per_component[0]["interval"]
    assert lo == pytest.approx(-np.pi + np.pi / 6)
    assert v.worst_frequency >= np.tan(np.pi / 3) * 0.99


def test_controller_network_no_spanning_tree():
    with pytest.raises(NoSpanningTreeError):
        analysis.check_controller_network([INT] * 3, WeightedDigraph(3, [(0, 2, 1.0), (1, 2, 1.0)]))


def test_verdict_serializes(rng):
    v = analysis.check_controller_network([integrator_agent(rng, 1) for _ in range(3)], CYCLE3)
    doc = json.loads(json.dumps(v.to_dict()))
    assert doc["holds"] == v.holds
    assert len(doc["trace"]["omega"]) == len(doc["trace"]["margin"])


# -- properties ---------------------------------------------------------------------


@settings(max_examples=6, deadline=None)
@given(seeds)
def test_monotone_under_grid_enlargement(seed):
    rng = np.random.default_rng(seed)
    P = tf([1.0], [1.0, rng.uniform(0.2, 2.0), 0.0])
    coarse = analysis.check_controller_network([P] * 3, CYCLE3, n_points=60, refine=False)
    extra = rng.uniform(0, 100, 200)
    fine = analysis.check_controller_network([P] * 3, CYCLE3, n_points=60, refine=False, extra_omegas=extra)
    if not coarse.holds:
        assert not fine.holds
    assert fine.margin <= coarse.margin + 1e-12


@settings(max_examples=8, deadline=None)
@given(seeds)
def test_soundness_against_eigenstructure(seed):
    rng = np.random.default_rng(seed)
    kind, agents, G, edges = random_instance(rng)
    if kind == "t1":
        v = analysis.check_edge_network(agents, G, edges)
        cl = ltisys.closed_loop(agents, G, mode="edges", edge_dynamics=edges)
    else:
        v = analysis.check_controller_network(agents, G)
        cl = ltisys.closed_loop(agents, G)
    if v.holds:
        assert ltisys.verify_sync(cl, agents[0].modes).passed
