"""JSON and CSV formats for matrices, graphs, agents, controllers and results.

Complex matrices are row-major nested lists whose entries are either real
numbers or ``[re, im]`` pairs.  Graph files use 1-based node ids.
"""

import csv
import json

import numpy as np

from .errors import ShapeError
from .ltisys import StateSpace, TransferMatrix, rational_to_ss, ss_parallel
from .netgraph import WeightedDigraph


class SchemaError(ShapeError):
    """An input document does not follow the expected layout."""


def _load(src):
    if isinstance(src, (dict, list)):
        return src
    with open(src) as fh:
        return json.load(fh)


def matrix_from_json(obj):
    if isinstance(obj, dict):
        obj = obj.get("matrix", obj.get("C"))
    if not isinstance(obj, list) or not obj:
        raise SchemaError("matrix must be a non-empty list of rows")
    rows = []
    for row in obj:
        if not isinstance(row, list):
            raise SchemaError("matrix rows must be lists")
        vals = []
        for e in row:
            if isinstance(e, (int, float)):
                vals.append(complex(e))
            elif isinstance(e, list) and len(e) == 2:
                vals.append(complex(float(e[0]), float(e[1])))
            else:
                raise SchemaError(f"bad matrix entry {e!r}")
        rows.append(vals)
    if len({len(r) for r in rows}) != 1:
        raise SchemaError("ragged matrix")
    M = np.array(rows, dtype=complex)
    return M.real.copy() if not np.any(M.imag) else M


def matrix_to_json(M):
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def load_matrix(src):
    return matrix_from_json(_load(src))


# -- graphs ------------------------------------------------------------------


def graph_from_json(obj):
    try:
        n = int(obj["n"])
        edges = [(int(e["from"]) - 1, int(e["to"]) - 1, float(e.get("w", 1.0)))
                 for e in obj.get("edges", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad graph document: {exc}") from None
    try:
        if obj.get("undirected", False):
            return WeightedDigraph.undirected(n, edges)
        return WeightedDigraph(n, edges)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


def graph_to_json(G):
    undirected = G.is_undirected()
    edges = [(i, j, w) for i, j, w in G.edges if not undirected or i < j]
    return {"n": G.n, "undirected": undirected,
            "edges": [{"from": i + 1, "to": j + 1, "w": w} for i, j, w in edges]}


def load_graph(src):
    return graph_from_json(_load(src))


# -- systems -----------------------------------------------------------------


def _ss_from_json(obj):
    try:
        D = np.atleast_2d(np.asarray(obj["D"], float))
        A = np.asarray(obj.get("A", []), float)
        nx = A.shape[0] if A.size else 0
        A = A.reshape(nx, nx)
        B = np.asarray(obj.get("B", []), float).reshape(nx, D.shape[1])
        C = np.asarray(obj.get("C", []), float).reshape(D.shape[0], nx)
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"bad state-space block: {exc}") from None
    return StateSpace(A, B, C, D)


def _terms_ss(terms):
    parts = []
    for t in terms:
        try:
            parts.append(rational_to_ss(t["num"], t["den"]))
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad rational term: {exc}") from None
    return ss_parallel(parts)


def _part_ss(obj):
    if "terms" in obj:
        return _terms_ss(obj["terms"])
    if "num" in obj:
        return _terms_ss([obj])
    if "D" in obj:
        return _ss_from_json(obj)
    if "static" in obj:
        return StateSpace.static(np.asarray(obj["static"], float))
    raise SchemaError("system needs 'terms', 'num'/'den', state-space or 'static' data")


def system_from_json(obj):
    """A :class:`TransferMatrix` from an agent/controller document.

    Accepted layouts: partial fractions (``residues`` + ``remainder``),
    rational ``terms``, a single ``num``/``den``, state space
    (``A, B, C, D``) or ``static``.
    """
    if not isinstance(obj, dict):
        raise SchemaError("system must be a JSON object")
    modes = obj.get("modes")
    if "residues" in obj:
        res = {float(w): matrix_from_json(M) for w, M in obj["residues"].items()}
        rem = obj.get("remainder")
        m = next(iter(res.values())).shape[0] if res else int(obj["m"])
        rem_ss = _part_ss(rem) if rem else StateSpace.static(np.zeros((m, m)))
        P = TransferMatrix(res, rem_ss)
    else:
        P = TransferMatrix.from_statespace(_part_ss(obj), modes)
    if "m" in obj and int(obj["m"]) != P.m:
        raise SchemaError(f"declared m={obj['m']} but system is {P.m}x{P.m}")
    if modes is not None and tuple(float(w) for w in modes) != P.modes.omega:
        raise SchemaError(f"declared modes {modes} differ from {P.modes.omega}")
    if "num" in obj and "den" in obj:
        P.rational = (np.asarray(obj["num"], float), np.asarray(obj["den"], float))
    return P


def load_agents(src):
    doc = _load(src)
    items = doc.get("agents") if isinstance(doc, dict) else doc
    if not isinstance(items, list) or not items:
        raise SchemaError("agents file must hold a non-empty list")
    return [system_from_json(a) for a in items]


def load_controllers(src):
    """Returns ``(mode, controllers, edge_map)``.

    ``controllers`` is one system (uniform) or a list (per-agent); for
    edge files ``edge_map`` maps 0-based ``(tail, head)`` pairs to systems.
    """
    doc = _load(src)
    if not isinstance(doc, dict):
        raise SchemaError("controllers file must be a JSON object")
    mode = doc.get("mode", "uniform")
    eps = float(doc.get("epsilon", 1.0))
    if mode == "edges":
        emap = {}
        for e in doc.get("edges", []):
            emap[(int(e["from"]) - 1, int(e["to"]) - 1)] = system_from_json(e["system"]).scaled(eps)
        return mode, None, emap
    items = doc.get("controllers")
    if not isinstance(items, list) or not items:
        raise SchemaError("controllers file needs a non-empty 'controllers' list")
    ctrl = [system_from_json(c).scaled(eps) for c in items]
    if mode == "uniform":
        if len(ctrl) != 1:
            raise SchemaError("uniform mode takes exactly one controller")
        return mode, ctrl[0], None
    if mode != "per-agent":
        raise SchemaError(f"unknown controller mode {mode!r}")
    return mode, ctrl, None


def controller_to_json(C, eps=1.0):
    if C.rational is not None:
        num, den = C.rational
        return {"num": (eps * np.asarray(num)).tolist(), "den": np.asarray(den).tolist()}
    R = C.realization
    return {"A": R.A.tolist(), "B": R.B.tolist(), "C": (eps * R.C).tolist(),
            "D": (eps * R.D).tolist()}


def controllers_to_json(mode, controllers, eps=1.0, **extra):
    items = [controllers] if mode == "uniform" else list(controllers)
    doc = {"mode": mode, "epsilon": eps, "controllers": [controller_to_json(C) for C in items]}
    doc.update(extra)
    return doc


# -- output ------------------------------------------------------------------


def to_jsonable(x):
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (float, np.floating)):
        return float(x) if np.isfinite(x) else None
    if isinstance(x, (np.integer, np.bool_)):
        return x.item()
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x):
    return f"{x:.12g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(float(v)) for v in r])


def trajectory_header(n, m):
    return ["t"] + [f"y{i}_{k}" for i in range(1, n + 1) for k in range(1, m + 1)]


def write_trajectories(path, t, Y, n, m):
    write_csv(path, trajectory_header(n, m), np.column_stack([t, Y]))
