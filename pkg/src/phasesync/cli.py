"""Command-line front end.

Exit codes: 0 success (or the condition holds), 1 negative verdict or
infeasible design, 2 input error, 3 domain error, 4 precondition failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import analysis, io, ltisys, netgraph, phasecore, synthesis
from .errors import (
    NotSemiSimpleError,
    PhaseSyncError,
    PreconditionError,
    SearchFailure,
    ShapeError,
    SingularResidueError,
)

EXIT_OK, EXIT_NEGATIVE, EXIT_INPUT, EXIT_DOMAIN, EXIT_PRECONDITION = range(5)


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _fmt_phases(ph):
    return "[" + ", ".join(f"{x:.6g}" for x in ph) + "]"


def cmd_phases(args):
    C = io.load_matrix(args.matrix)
    tol = args.tol
    prof = phasecore.phases(C, tol)
    flag = " (boundary-detected)" if prof.boundary_detected else ""
    print(f"{prof.kind.value}, phases {_fmt_phases(prof.phases)}{flag}")
    print(f"center {prof.center:.6g}, margin {prof.margin:.6g}, rank {prof.rank}")
    if args.out:
        io.write_json(_out(args, "phases.json"), {
            "kind": prof.kind.value, "phases": prof.phases, "center": prof.center,
            "margin": prof.margin, "rank": prof.rank, "boundary_detected": prof.boundary_detected})
    return EXIT_OK


def cmd_lap_phase(args):
    G = io.load_graph(args.network)
    flags = netgraph.connectivity(G)
    print(", ".join(f"{k}={v}" for k, v in flags.items()))
    dec = netgraph.frobenius_form(G)
    thetas = netgraph.component_phase_bounds(dec, refine=args.refine)
    rows = []
    for k, (b, th) in enumerate(zip(dec.blocks, thetas), 1):
        nodes = [v + 1 for v in b.nodes]
        print(f"component {k}: nodes {nodes}, essential phase {th:.6f}")
        rows.append({"component": k, "nodes": nodes, "theta": th})
    if args.out:
        io.write_json(_out(args, "lap_phase.json"), {"connectivity": flags, "components": rows})
    return EXIT_OK


def _write_verdict(args, verdict, kind):
    io.write_json(_out(args, "verdict.json"), verdict.to_dict())
    tr = verdict.trace
    if not tr:
        return
    if "components" in tr:
        header = ["omega", "component", "upper", "lower", "margin"]
        rows = []
        for k, c in enumerate(tr["components"], 1):
            rows += [(w, k, u, l, m) for w, u, l, m in zip(tr["omega"], c["upper"], c["lower"], c["margin"])]
    else:
        header = ["omega", "upper_sum", "lower_sum", "margin"]
        rows = zip(tr["omega"], tr["upper_sum"], tr["lower_sum"], tr["margin"])
    io.write_csv(_out(args, "margins.csv"), header, rows)


def cmd_analyze(args):
    G = io.load_graph(args.network)
    agents = io.load_agents(args.agents)
    opts = dict(eps=args.eps, n_points=args.grid, tol=args.tol)
    if args.mode == "edges":
        emap = {}
        if args.controllers:
            mode, _, emap = io.load_controllers(args.controllers)
            if mode != "edges":
                raise io.SchemaError("edge analysis needs an edges controllers file")
            emap = {(min(k), max(k)): v for k, v in emap.items()}
        verdict = analysis.check_edge_network(agents, G, emap, **opts)
    else:
        ctrl = None
        if args.controllers:
            _, ctrl, _ = io.load_controllers(args.controllers)
        verdict = analysis.check_controller_network(agents, G, ctrl, refine_theta=args.refine, **opts)
    _write_verdict(args, verdict, args.mode)
    state = "holds" if verdict.holds else "violated"
    print(f"{state}: margin {verdict.margin:.6g} rad, worst frequency {verdict.worst_frequency:.6g}")
    if verdict.reason:
        print(verdict.reason)
    if verdict.precondition_failed:
        return EXIT_PRECONDITION
    return EXIT_OK if verdict.holds else EXIT_NEGATIVE


def cmd_design(args):
    G = io.load_graph(args.network)
    agents = io.load_agents(args.agents)
    eps_min = args.eps if args.eps is not None else 1e-8
    try:
        if args.mode == "per-agent":
            res = synthesis.design_per_agent(agents, G, eps_min=eps_min)
        else:
            res = synthesis.design_uniform(agents, G, refine=args.refine, seed=args.seed,
                                           eps_min=eps_min)
    except SearchFailure as exc:
        print(f"search failed: {exc}")
        io.write_json(_out(args, "certificate.json"), {"feasible": False, "reason": str(exc),
                                                      "diagnostics": exc.diagnostics})
        return EXIT_NEGATIVE
    cert = {"feasible": res.feasible, "epsilon": res.epsilon, "epsilon_star": res.epsilon_star,
            "reason": res.reason, "mode": res.mode,
            "targets": {str(k): v for k, v in res.targets.items()} if res.targets else {},
            "certificates": {k: v for k, v in res.certificates.items() if k != "sync"},
            "trace": res.trace}
    if res.report is not None:
        cert["sync"] = {"passed": res.report.passed, "slowest_stable": res.report.slowest_stable}
    io.write_json(_out(args, "certificate.json"), cert)
    if not res.feasible:
        print(f"infeasible: {res.reason}")
        return EXIT_NEGATIVE
    mode = "uniform" if res.mode == "uniform" else "per-agent"
    doc = io.controllers_to_json(mode, res.base, res.epsilon)
    io.write_json(_out(args, "controllers.json"), doc)
    print(f"feasible: epsilon {res.epsilon:g} (epsilon* {res.epsilon_star:g}), "
          f"slowest stable eigenvalue {res.report.slowest_stable:.4g}")
    return EXIT_OK


def _parse_x0(spec):
    if os.path.exists(spec):
        with open(spec) as fh:
            return np.asarray(json.load(fh), float)
    return np.array([float(v) for v in spec.split(",") if v.strip()])


GNUPLOT = """set datafile separator ','
set key autotitle columnhead
set xlabel 't'
set multiplot layout 2,1
set title 'outputs'
plot for [k=2:{ncol}] 'trajectories.csv' using 1:k with lines
set title 'disagreement'
plot for [k=2:{ncol}] 'disagreement.csv' using 1:k with lines
unset multiplot
"""


def cmd_simulate(args):
    G = io.load_graph(args.network)
    agents = io.load_agents(args.agents)
    if args.controllers:
        mode, ctrl, emap = io.load_controllers(args.controllers)
    else:
        # identity coupling; "controllers" and "uniform" coincide here
        mode = "edges" if args.mode == "edges" else "uniform"
        ctrl, emap = np.eye(agents[0].m), None
    cl = ltisys.closed_loop(agents, G, ctrl, mode=mode, edge_dynamics=emap)
    if args.x0:
        x0 = cl.initial_state(_parse_x0(args.x0))
    else:
        x0 = cl.initial_state(np.random.default_rng(args.seed).standard_normal(cl.plant_states))
    n, m = cl.n, cl.m
    t, Y = ltisys.simulate(cl.A, cl.C, x0, args.tfinal, args.dt)
    d = ltisys.disagreement(Y, n, m)
    io.write_trajectories(_out(args, "trajectories.csv"), t, Y, n, m)
    io.write_trajectories(_out(args, "disagreement.csv"), t, d.disagreement, n, m)
    with open(_out(args, "plot.gp"), "w") as fh:
        fh.write(GNUPLOT.format(ncol=n * m + 1))
    rep = ltisys.verify_sync(cl, agents[0].modes)
    print(f"final outputs {_fmt_phases(Y[-1])}")
    print(f"disagreement tail {d.tail_norm:.3e}; eigenvalue test {'PASS' if rep.passed else 'FAIL'}")
    return EXIT_OK


def cmd_sweep(args):
    agents = io.load_agents(args.agents)
    rows = []
    for i, P in enumerate(agents, 1):
        r = ltisys.phase_response(P, eps=args.eps, n_points=args.grid, tol=args.tol)
        ax = r.axis
        rows += [(i, w, u, l) for w, u, l in zip(r.omega[ax], r.upper[ax], r.lower[ax])]
        print(f"agent {i}: {r.kind.value}, max phase {r.max_phase:.4f}, min phase {r.min_phase:.4f}")
    io.write_csv(_out(args, "sweep.csv"), ["agent", "omega", "upper", "lower"], rows)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="phasesync", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, network=True, agents=True):
        if network:
            sp.add_argument("--network", required=True, help="graph JSON (1-based ids)")
        if agents:
            sp.add_argument("--agents", required=True, help="agents JSON")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--refine", action="store_true",
                        help="refine component essential-phase bounds numerically")

    sp = sub.add_parser("phases", help="classification and phases of a matrix")
    sp.add_argument("matrix")
    sp.add_argument("--tol", type=float, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_phases)

    sp = sub.add_parser("lap-phase", help="components and essential phases of a graph")
    common(sp, agents=False)
    sp.set_defaults(func=cmd_lap_phase)

    sp = sub.add_parser("analyze", help="phase conditions for synchronization")
    common(sp)
    sp.add_argument("--controllers", default=None)
    sp.add_argument("--mode", choices=["edges", "controllers"], default="controllers")
    sp.add_argument("--eps", type=float, default=1e-3, help="indentation radius scale")
    sp.add_argument("--grid", type=int, default=400, help="base number of frequency samples")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("design", help="synthesize synchronizing controllers")
    common(sp)
    sp.add_argument("--mode", choices=["uniform", "per-agent"], default="uniform")
    sp.add_argument("--eps", type=float, default=None, help="smallest gain of the scan")
    sp.set_defaults(func=cmd_design)

    sp = sub.add_parser("simulate", help="closed-loop time response")
    common(sp)
    sp.add_argument("--controllers", default=None)
    sp.add_argument("--mode", choices=["uniform", "per-agent", "edges", "controllers"],
                    default="controllers")
    sp.add_argument("--tfinal", type=float, default=20.0)
    sp.add_argument("--dt", type=float, default=1e-2)
    sp.add_argument("--x0", default=None, help="comma list or JSON file of agent states")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="phase responses of the agents")
    common(sp, network=False)
    sp.add_argument("--eps", type=float, default=1e-3)
    sp.add_argument("--grid", type=int, default=400)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (json.JSONDecodeError, FileNotFoundError, io.SchemaError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (PreconditionError, NotSemiSimpleError, SingularResidueError) as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ShapeError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PhaseSyncError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
