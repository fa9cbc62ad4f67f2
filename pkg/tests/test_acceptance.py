"""Acceptance criteria; each test prints one PASS/FAIL line."""

import time

import numpy as np
import pytest

from generators import (
    integrator_agent,
    random_instance,
    random_spanning_digraph,
    sectorial_matrix,
    two_mode_agent,
)
from phasesync import analysis, benchmarks, ltisys, netgraph, phasecore, synthesis
from phasesync.errors import PhaseSyncError
from phasesync.ltisys import StateSpace, TransferMatrix
from phasesync.netgraph import WeightedDigraph
from phasesync.synthesis import InterpolationSpec


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'}: {detail}")
    return emit


def test_essential_phase_exactness(report):
    t0 = time.perf_counter()
    cycle = WeightedDigraph(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)])
    phi = netgraph.essential_phase_laplacian(netgraph.laplacian(cycle)).value
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        G = random_spanning_digraph(rng, int(rng.integers(2, 12)), extra=1.0, undirected=True)
        worst = max(worst, netgraph.essential_phase_laplacian(netgraph.laplacian(G)).value)
    elapsed = time.perf_counter() - t0
    ok = abs(phi - np.pi / 6) < 1e-6 and round(phi, 4) == 0.5236 and worst < 1e-8 and elapsed < 1
    report(1, ok, f"3-cycle {phi:.10f}, undirected max {worst:.1e}, {elapsed:.2f} s")
    assert ok


def _matrix_property_cases(rng, count):
    comp = prod = kron = 0
    for _ in range(count):
        n = int(rng.integers(2, 6))
        C, _ = sectorial_matrix(rng, n, spread=2.8, center=rng.uniform(-3, 3))
        X = rng.standard_normal((n, int(rng.integers(1, n + 1)))) * (1 + 0j)
        X = X + 1j * rng.standard_normal(X.shape)
        pC, pX = phasecore.phases(C), phasecore.phases(phasecore.compress(C, X))
        shift = 2 * np.pi * np.round((pC.center - pX.center) / (2 * np.pi))
        comp += pX.lower + shift >= pC.lower - 1e-8 and pX.upper + shift <= pC.upper + 1e-8

        A, _ = sectorial_matrix(rng, n, spread=2.0, center=rng.uniform(-1, 1))
        R = rng.standard_normal((n, n))
        B = R @ R.T if rng.integers(2) else sectorial_matrix(rng, n, spread=1.0)[0]
        lo, hi = phasecore.product_angle_bounds(A, B)
        c = phasecore.phases(A).center + phasecore.phases(B).center
        lam = np.linalg.eigvals(A @ B)
        lam = lam[np.abs(lam) > 1e-9 * np.abs(lam).max()]
        ang = c + np.angle(lam * np.exp(-1j * c))
        prod += bool(np.all(ang >= lo - 1e-8) and np.all(ang <= hi + 1e-8))

        na, nb = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        A, _ = sectorial_matrix(rng, na, spread=1.4)
        B, _ = sectorial_matrix(rng, nb, spread=1.4)
        expect = phasecore.kron_phases(A, B).phases
        kron += bool(np.abs(phasecore.phases(np.kron(A, B)).phases - expect).max() <= 1e-8)
    return comp, prod, kron


def test_matrix_property_suites(report):
    t0 = time.perf_counter()
    comp, prod, kron = _matrix_property_cases(np.random.default_rng(2), 1000)
    elapsed = time.perf_counter() - t0
    ok = comp == prod == kron == 1000 and elapsed < 30
    report(2, ok, f"compression {comp}/1000, product {prod}/1000, Kronecker {kron}/1000, "
                  f"{elapsed:.1f} s")
    assert ok


def test_interpolation(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    node_err = pole_err = imag_rel = 0.0
    for _ in range(100):
        q, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        omega = tuple(np.sort(rng.uniform(0.2, 5.0, q)))
        K = [rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)) for _ in range(q)]
        K0 = rng.standard_normal((m, m))
        C, G = synthesis.interpolate(InterpolationSpec(omega, K, K0), return_coefficients=True)
        node_err = max(node_err, np.abs(C(0.0) - K0).max(),
                       *[np.abs(C(1j * w) - Kk).max() for w, Kk in zip(omega, K)])
        # triangular state matrix: its eigenvalues are the diagonal entries
        A = C.realization.A
        assert np.all(np.triu(A, 1) == 0)
        pole_err = max(pole_err, np.abs(np.diag(A) + 1).max())
        imag_rel = max(imag_rel, C.imag_residual / np.abs(G).max())
    elapsed = time.perf_counter() - t0
    ok = node_err < 1e-9 and pole_err < 1e-9 and imag_rel < 1e-12 and elapsed < 10
    report(3, ok, f"node error {node_err:.1e}, pole error {pole_err:.1e}, "
                  f"relative imaginary part {imag_rel:.1e}, {elapsed:.1f} s")
    assert ok


def test_analysis_soundness(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    holds = false_pos = conservative = 0
    for _ in range(100):
        kind, agents, G, edges = random_instance(rng)
        if kind == "t1":
            v = analysis.check_edge_network(agents, G, edges)
            cl = ltisys.closed_loop(agents, G, mode="edges", edge_dynamics=edges)
        else:
            v = analysis.check_controller_network(agents, G)
            cl = ltisys.closed_loop(agents, G)
        passed = ltisys.verify_sync(cl, agents[0].modes).passed
        holds += v.holds
        false_pos += v.holds and not passed
        conservative += passed and not v.holds
    elapsed = time.perf_counter() - t0
    ok = false_pos == 0 and holds > 0 and elapsed < 300
    report(4, ok, f"{holds} verdicts hold, {false_pos} false positives, "
                  f"{conservative} conservative, {elapsed:.0f} s")
    assert ok


def test_five_agent_reproduction(report):
    t0 = time.perf_counter()
    agents, G = benchmarks.five_agents(), benchmarks.five_agent_network()
    thetas = netgraph.component_phase_bounds(netgraph.frobenius_form(G))
    topo_ok = abs(thetas[0] - 0.5236) < 1e-4 and abs(thetas[1]) < 1e-4

    uni = synthesis.design_uniform(agents, G)
    margin = min(uni.certificates["lmi_margin"].values()) if uni.feasible else float("nan")
    rep = uni.report
    T = 12.0 / abs(rep.slowest_stable)
    cl = ltisys.closed_loop(agents, G, uni.controllers)
    x0 = cl.initial_state(np.random.default_rng(5).standard_normal(cl.plant_states))
    _, Y = ltisys.simulate(cl.A, cl.C, x0, T, dt=T / 6000)
    tail = ltisys.disagreement(Y, G.n, 2).tail_norm

    per = synthesis.design_per_agent(agents, G)

    published_rep = ltisys.verify_sync(ltisys.closed_loop(agents, G, benchmarks.published_controller()),
                                   agents[0].modes)
    try:
        verdict = analysis.check_controller_network(agents, G, benchmarks.published_controller())
        published_verdict = "holds" if verdict.holds else f"not certified ({verdict.reason})"
    except PhaseSyncError as exc:
        published_verdict = f"not certified ({exc})"
    elapsed = time.perf_counter() - t0
    ok = (topo_ok and uni.feasible and margin > 1e-6 and tail < 1e-3 and per.feasible
          and per.report.passed and elapsed < 120)
    report(5, ok, f"theta {thetas[0]:.4f}/{thetas[1]:.4f}; uniform eps {uni.epsilon:g}, "
                  f"LMI margin {margin:.2e}, tail {tail:.1e} over T={T:.0f}; per-agent eps "
                  f"{per.epsilon:g}; published controller: eigen test "
                  f"{'PASS' if published_rep.passed else 'FAIL'}, phase test {published_verdict}; "
                  f"{elapsed:.0f} s")
    assert ok


def test_consensus_specialization(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    good = 0
    for _ in range(50):
        n, m = int(rng.integers(2, 7)), int(rng.integers(1, 4))
        agents = [integrator_agent(rng, m, lead=bool(rng.integers(2))) for _ in range(n)]
        G = random_spanning_digraph(rng, n, extra=rng.uniform(0, 1))
        res = synthesis.design_uniform(agents, G)
        good += bool(res.feasible and res.controllers.realization.nx == 0 and res.report.passed)
    one = TransferMatrix.from_statespace(StateSpace([[0.0]], [[1.0]], [[1.0]], [[0.0]]))
    pair = [one, one.scaled(-1.0)]
    anta = synthesis.design_uniform(pair, WeightedDigraph.undirected(2, [(0, 1, 1.0)]))
    elapsed = time.perf_counter() - t0
    ok = good == 50 and not anta.feasible and elapsed < 60
    report(6, ok, f"{good}/50 static designs certified, antagonistic pair "
                  f"{'infeasible' if not anta.feasible else 'FEASIBLE'}, {elapsed:.1f} s")
    assert ok


def test_low_gain_search(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    found = tried = monotone = checked = 0
    while tried < 50:
        n, m = int(rng.integers(2, 6)), int(rng.integers(1, 3))
        agents = [two_mode_agent(rng, m) for _ in range(n)]
        G = random_spanning_digraph(rng, n, extra=rng.uniform(0, 1))
        targets = [{w: np.linalg.inv(M) for w, M in P.residues.items()} for P in agents]
        if not synthesis.hurwitz_precondition(agents, G, targets)[0]:
            continue
        tried += 1
        base = [synthesis.interpolate(InterpolationSpec.from_modes(P.modes, t))
                for P, t in zip(agents, targets)]
        eps, _, rep, _ = synthesis.epsilon_search(agents, G, base, "per-agent",
                                                  raise_on_failure=False)
        found += eps is not None and eps >= 1e-8 and rep.passed
        if eps is not None and checked < 10:
            checked += 1
            half = ltisys.closed_loop(agents, G, [C.scaled(eps / 2) for C in base], mode="per-agent")
            monotone += ltisys.verify_sync(half, agents[0].modes).passed
    elapsed = time.perf_counter() - t0
    ok = found == 50 and monotone == checked == 10
    report(7, ok, f"{found}/50 searches certified a gain, halving kept {monotone}/{checked}, "
                  f"{elapsed:.1f} s")
    assert ok
