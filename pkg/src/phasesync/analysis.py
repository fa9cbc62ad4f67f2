"""Phase-based synchronization checks on a frequency grid.

Three checkers are provided: the small phase test for a feedback pair, the
undirected test with heterogeneous edge dynamics, and the directed test
with agent-dependent controllers.  All of them sweep the indented imaginary
axis, aggregate the largest and smallest phases, and return an
:class:`AnalysisVerdict` holding the attained margin and a trace per sample.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ltisys, netgraph, phasecore
from .errors import NotSemiSimpleError, PhaseSyncError, PreconditionError
from .ltisys import TransferMatrix
from .phasecore import Kind

NEAR_VIOLATION = 0.05
PHASE_STEP = 0.1


@dataclass
class AnalysisVerdict:
    """Outcome of a grid-based phase check.

    ``margin`` is the smallest slack over on-axis samples, in radians;
    ``per_component`` lists one dict per group of agents with the condition
    interval and the attained phase interval.
    """

    holds: bool
    margin: float
    worst_frequency: float
    per_component: list = field(default_factory=list)
    reason: str = ""
    precondition_failed: bool = False
    trace: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self):
        def clean(x):
            if isinstance(x, dict):
                return {str(k): clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            if isinstance(x, np.ndarray):
                return clean(x.tolist())
            if isinstance(x, (np.floating, float)):
                return float(x) if np.isfinite(x) else None
            if isinstance(x, (np.integer, np.bool_)):
                return x.item()
            if isinstance(x, Kind):
                return x.value
            return x

        return clean({
            "holds": self.holds, "margin": self.margin,
            "worst_frequency": self.worst_frequency,
            "per_component": self.per_component, "reason": self.reason,
            "precondition_failed": self.precondition_failed,
            "details": self.details, "trace": self.trace,
        })


def _failed(reason, precondition=True, **details):
    return AnalysisVerdict(False, -np.inf, float("nan"), reason=reason,
                           precondition_failed=precondition, details=details)


def _threads():
    try:
        return max(1, int(os.environ.get("PHASESYNC_THREADS", "")))
    except ValueError:
        return min(8, os.cpu_count() or 1)


def _pmap(fn, items):
    items = list(items)
    nt = min(_threads(), len(items))
    if nt <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(nt) as ex:
        return list(ex.map(fn, items))


def _bounds(profiles):
    up = np.array([p.upper if p else np.nan for p in profiles])
    lo = np.array([p.lower if p else np.nan for p in profiles])
    return up, lo


def common_path(systems, eps=1e-3, n_points=400, extra_omegas=()):
    """Indented path shared by several systems (union of poles and zeros)."""
    poles = sorted({w for S in systems for w in S.modes.omega})
    zeros = sorted({z for S in systems for z in ltisys.imaginary_zeros(S.realization)})
    inf_zero = any(np.linalg.matrix_rank(S.realization.D) < S.m for S in systems)
    path = ltisys.indented_path(poles, zeros, eps, n_points, infinite_zero=inf_zero)
    if len(extra_omegas):
        path = path.with_points(extra_omegas)
    return path


def sweep(systems, margin_fn, eps=1e-3, n_points=400, refine=True, tol=None,
          extra_omegas=(), max_rounds=6):
    """Phase profiles of ``systems`` on a common adaptive path.

    ``margin_fn(ups, los)`` maps per-system bound arrays to a per-sample
    margin.  Adjacent on-axis samples are bisected while some phase moves by
    more than ``PHASE_STEP`` or the margin is within ``NEAR_VIOLATION`` of 0.
    """
    path = common_path(systems, eps, n_points, extra_omegas)
    caches = [{} for _ in systems]
    for rnd in range(max_rounds + 1):
        profiles = _pmap(lambda k: ltisys.track_phases(systems[k].realization, path, tol, caches[k]),
                         range(len(systems)))
        if not refine or rnd == max_rounds:
            break
        ups, los = zip(*[_bounds(p) for p in profiles])
        marg = margin_fn(ups, los)
        idx = np.flatnonzero(path.on_axis[:-1] & path.on_axis[1:])
        jump = np.zeros(idx.size)
        for u, l in zip(ups, los):
            jump = np.fmax(jump, np.fmax(np.abs(np.diff(u)), np.abs(np.diff(l)))[idx])
        near = np.fmin(np.abs(marg[idx]), np.abs(marg[idx + 1])) < NEAR_VIOLATION
        bad = idx[(jump > PHASE_STEP) | near]
        if bad.size == 0:
            break
        bad = bad[:400]
        new = path.with_points((path.omega[bad] + path.omega[bad + 1]) / 2)
        if new.s.size == path.s.size:
            break
        path = new
    return path, profiles


def _joint_kind(system, path, tol):
    """Frequency-wise classification of a (block-diagonal) aggregate."""
    resp = ltisys.phase_response(system, path=path, refine=False, tol=tol)
    return resp


def _as_tm(P):
    return ltisys.as_transfer_matrix(P)


def _worst(margin, path):
    axis = path.on_axis
    m = np.where(axis, margin, np.inf)
    m = np.where(np.isnan(m), -np.inf, m)
    k = int(np.argmin(m))
    return float(m[k]), float(path.omega[k])


def small_phase_check(G, H, eps=1e-3, n_points=400, refine=True, tol=None, extra_omegas=()):
    """Small phase test for the feedback interconnection of ``G`` and ``H``.

    ``G`` must be semi-stable with simple imaginary-axis poles and
    frequency-wise semi-sectorial, ``H`` stable and frequency-wise
    sectorial.  The test holds when the sums of the largest phases stay
    below pi and the sums of the smallest stay above -pi at every on-axis
    sample.
    """
    try:
        G, H = _as_tm(G), _as_tm(H)
    except NotSemiSimpleError as exc:
        return _failed(f"G has a non-simple imaginary-axis pole: {exc}")
    except PhaseSyncError as exc:
        return _failed(str(exc))
    if not H.is_stable:
        return _failed("H must be stable")

    def margin_fn(ups, los):
        return np.fmin(np.pi - (ups[0] + ups[1]), np.pi + (los[0] + los[1]))

    path, (pG, pH) = sweep([G, H], margin_fn, eps, n_points, refine, tol, extra_omegas)
    rG = ltisys.phase_response(G, path=path, refine=False, tol=tol)
    rH = ltisys.phase_response(H, path=path, refine=False, tol=tol)
    if not rG.kind.is_semi:
        return _failed("G is not frequency-wise semi-sectorial", failures=rG.failures[:5])
    if rH.kind is not Kind.SECTORIAL:
        return _failed("H is not frequency-wise sectorial", failures=rH.failures[:5])
    (uG, lG), (uH, lH) = _bounds(pG), _bounds(pH)
    up, lo = uG + uH, lG + lH
    margin = margin_fn((uG, uH), (lG, lH))
    m, w = _worst(margin, path)
    ax = path.on_axis
    trace = {"omega": path.omega[ax], "upper_sum": up[ax], "lower_sum": lo[ax], "margin": margin[ax]}
    comp = [{"component": 1, "interval": (-np.pi, np.pi),
             "attained": (float(np.nanmin(lo[ax])), float(np.nanmax(up[ax])))}]
    return AnalysisVerdict(m > 0, m, w, comp, "" if m > 0 else "phase condition violated",
                           trace=trace)


def _residue_report(P_list, joint):
    """Residue sectoriality: block-diagonal (joint) and per agent."""
    out = {"joint": {}, "individual": {}}
    for w, M in joint.residues.items():
        out["joint"][w] = phasecore.classify(M).kind
        out["individual"][w] = [phasecore.classify(P.residues[w]).kind if w in P.residues
                                else Kind.QUASI_SECTORIAL for P in P_list]
    return out


def check_edge_network(agents, G, edge_dynamics=None, eps=1e-3, n_points=400, refine=True,
                   tol=None, extra_omegas=()):
    """Undirected network with heterogeneous edge dynamics.

    Parameters
    ----------
    agents : list of TransferMatrix
    G : WeightedDigraph
        Must be undirected and connected.
    edge_dynamics : dict or list, optional
        Stable system per undirected edge, keyed ``(i, j)`` with ``i < j`` or
        listed in incidence order.  Defaults to the identity.

    Raises
    ------
    PreconditionError
        Directed or disconnected graph.
    """
    if not G.is_undirected():
        raise PreconditionError("this check needs an undirected graph")
    if not netgraph.connectivity(G)["has_spanning_tree"]:
        raise PreconditionError("graph is not connected")
    agents = [_as_tm(P) for P in agents]
    m = agents[0].m
    inc = netgraph.incidence(G)
    if isinstance(edge_dynamics, (list, tuple)):
        edge_dynamics = dict(zip(inc.edge_order, edge_dynamics))
    edge_dynamics = edge_dynamics or {}
    edges = [_as_tm(edge_dynamics.get(e, np.eye(m))) for e in inc.edge_order]
    if any(not W.is_stable for W in edges):
        return _failed("edge dynamics must be stable")
    # distinct edge systems only; identical objects share a sweep
    uniq = list({id(W): W for W in edges}.values())
    nA = len(agents)

    def margin_fn(ups, los):
        pu = np.nanmax(np.vstack(ups[:nA]), axis=0) if nA else 0
        pl = np.nanmin(np.vstack(los[:nA]), axis=0)
        wu = np.max(np.vstack(ups[nA:]), axis=0)
        wl = np.min(np.vstack(los[nA:]), axis=0)
        return np.fmin(np.pi - (pu + wu), np.pi + (pl + wl))

    systems = agents + uniq
    path, profiles = sweep(systems, margin_fn, eps, n_points, refine, tol, extra_omegas)

    Pjoint = ltisys.block_diag(agents)
    Wjoint = ltisys.block_diag(uniq)
    rP = ltisys.phase_response(Pjoint, path=path, refine=False, tol=tol)
    rW = ltisys.phase_response(Wjoint, path=path, refine=False, tol=tol)
    res = _residue_report(agents, Pjoint)
    details = {"residues": res, "theta": 0.0}
    if not rP.kind.is_semi:
        return _failed("agents are not jointly frequency-wise semi-sectorial", **details)
    if any(k is not Kind.SECTORIAL for k in res["joint"].values()):
        return _failed("joint residue matrices are not sectorial", **details)
    if rW.kind is not Kind.SECTORIAL:
        return _failed("edge dynamics are not frequency-wise sectorial", **details)

    ups, los = zip(*[_bounds(p) for p in profiles])
    margin = margin_fn(ups, los)
    m_, w = _worst(margin, path)
    ax = path.on_axis
    pu = np.nanmax(np.vstack(ups[:nA]), axis=0)
    pl = np.nanmin(np.vstack(los[:nA]), axis=0)
    wu = np.nanmax(np.vstack(ups[nA:]), axis=0)
    wl = np.nanmin(np.vstack(los[nA:]), axis=0)
    trace = {"omega": path.omega[ax], "upper_sum": (pu + wu)[ax], "lower_sum": (pl + wl)[ax],
             "margin": margin[ax]}
    comp = [{"component": 1, "interval": (-np.pi, np.pi),
             "attained": (float(np.nanmin((pl + wl)[ax])), float(np.nanmax((pu + wu)[ax])))}]
    return AnalysisVerdict(m_ > 0, m_, w, comp, "" if m_ > 0 else "phase condition violated",
                           trace=trace, details=details)


def check_controller_network(agents, G, controllers=None, eps=1e-3, n_points=400, refine=True,
                   tol=None, refine_theta=False, extra_omegas=()):
    """Directed network with agent-dependent controllers.

    For each strongly connected component ``k`` (Frobenius order) the phases
    of ``P_i C_i`` over its agents must lie in ``(-pi + theta_k, pi - theta_k)``
    with ``theta_k`` the essential-phase bound of the component.

    Raises
    ------
    NoSpanningTreeError
        If the graph has no root.
    """
    dec = netgraph.frobenius_form(G)
    thetas = netgraph.component_phase_bounds(dec, refine=refine_theta)
    agents = [_as_tm(P) for P in agents]
    n = len(agents)
    if n != G.n:
        raise PreconditionError(f"{n} agents for {G.n} nodes")
    if controllers is None:
        controllers = [np.eye(agents[0].m)] * n
    elif not isinstance(controllers, (list, tuple)):
        controllers = [controllers] * n
    try:
        loops = [ltisys.series(P, C) for P, C in zip(agents, controllers)]
    except PreconditionError as exc:
        return _failed(str(exc))

    comp_of = np.empty(n, int)
    for k, b in enumerate(dec.blocks):
        comp_of[list(b.nodes)] = k
    th = np.array(thetas)[comp_of]

    def margin_fn(ups, los):
        U, Lo = np.vstack(ups), np.vstack(los)
        return np.min(np.fmin(np.pi - th[:, None] - U, Lo + np.pi - th[:, None]), axis=0)

    path, profiles = sweep(loops, margin_fn, eps, n_points, refine, tol, extra_omegas)
    ups, los = zip(*[_bounds(p) for p in profiles])
    U, Lo = np.vstack(ups), np.vstack(los)
    ax = path.on_axis
    per, details = [], {"theta": thetas, "components": dec.components, "residues": {}}
    trace = {"omega": path.omega[ax], "components": []}
    for k, b in enumerate(dec.blocks):
        nodes = list(b.nodes)
        joint = ltisys.block_diag([loops[i] for i in nodes])
        r = ltisys.phase_response(joint, path=path, refine=False, tol=tol)
        details["residues"][k + 1] = _residue_report([loops[i] for i in nodes], joint)
        if not r.kind.is_semi:
            return _failed(f"component {k + 1} loops are not jointly frequency-wise "
                           "semi-sectorial", **details)
        cu, cl = np.nanmax(U[nodes], axis=0), np.nanmin(Lo[nodes], axis=0)
        cm = np.fmin(np.pi - thetas[k] - cu, cl + np.pi - thetas[k])
        per.append({"component": k + 1, "nodes": [v + 1 for v in nodes],
                    "interval": (-np.pi + thetas[k], np.pi - thetas[k]),
                    "attained": (float(np.nanmin(cl[ax])), float(np.nanmax(cu[ax]))),
                    "margin": _worst(cm, path)[0]})
        trace["components"].append({"upper": cu[ax], "lower": cl[ax], "margin": cm[ax]})
    margin = margin_fn(ups, los)
    m_, w = _worst(margin, path)
    trace["margin"] = margin[ax]
    return AnalysisVerdict(m_ > 0, m_, w, per, "" if m_ > 0 else "phase condition violated",
                           trace=trace, details=details)
