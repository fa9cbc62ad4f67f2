"""Controller synthesis: interpolation on the persistent modes, per-agent and
uniform designs, sector LMIs and the low-gain search.

Controllers are built as ``C(s) = eps * Ct(s)`` where ``Ct`` interpolates
prescribed values at ``s = 0`` and ``s = j w_k``; a scan over ``eps`` then
certifies synchronization from the closed-loop spectrum.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np
from numpy.polynomial import Polynomial
from scipy.linalg import block_diag

from . import ltisys, netgraph, phasecore
from .errors import (
    NotSemiSectorialError,
    PreconditionError,
    SearchFailure,
    ShapeError,
    SingularResidueError,
)
from .ltisys import PersistentModes, StateSpace, TransferMatrix

FEAS_TOL = 1e-6
SINGULAR_COND = 1e12


# --------------------------------------------------------------------------
# interpolation


@dataclass
class InterpolationSpec:
    """Values to hit on the imaginary axis.

    ``K0`` is the real value at ``s = 0`` (``None`` when 0 is not a
    persistent mode); ``K[k]`` is the complex value at ``s = j omega[k]``.
    """

    omega: tuple
    K: list
    K0: np.ndarray = None

    def __post_init__(self):
        self.omega = tuple(float(w) for w in self.omega)
        if any(w <= 0 for w in self.omega):
            raise ValueError("interpolation frequencies must be positive")
        if len(set(self.omega)) != len(self.omega):
            raise ValueError("coincident interpolation nodes")
        if len(self.K) != len(self.omega):
            raise ShapeError("one target per frequency is required")
        self.K = [np.atleast_2d(np.asarray(k, dtype=complex)) for k in self.K]
        if self.K0 is not None:
            K0 = np.atleast_2d(np.asarray(self.K0))
            if np.iscomplexobj(K0):
                if np.abs(K0.imag).max() > 1e-12 * max(1.0, np.abs(K0).max()):
                    raise ValueError("the DC target must be real")
                K0 = K0.real
            self.K0 = K0.astype(float)
        targets = ([self.K0] if self.K0 is not None else []) + self.K
        if not targets:
            raise ValueError("no interpolation targets")
        m = targets[0].shape[0]
        for T in targets:
            if T.shape != (m, m):
                raise ShapeError("targets must be square and of equal size")
            if np.linalg.cond(T) > SINGULAR_COND:
                raise PreconditionError("interpolation targets must be nonsingular")

    @property
    def m(self):
        return (self.K0 if self.K0 is not None else self.K[0]).shape[0]

    @classmethod
    def from_modes(cls, modes, targets):
        """Spec from ``{w: K_w}`` with ``w`` ranging over ``modes``."""
        omega = modes.omega if isinstance(modes, PersistentModes) else tuple(modes)
        K0 = targets.get(0.0) if 0.0 in omega else None
        pos = [w for w in omega if w > 0]
        return cls(tuple(pos), [targets[w] for w in pos], K0)


def _poly_coeffs(nodes, values):
    """Matrix Lagrange polynomial through (nodes, values); ascending coefficients."""
    m = values[0].shape[0]
    deg = len(nodes) - 1
    coef = np.zeros((deg + 1, m, m), complex)
    for l, (zl, V) in enumerate(zip(nodes, values)):
        basis = Polynomial([1.0 + 0j])
        for k, zk in enumerate(nodes):
            if k != l:
                basis = basis * Polynomial([-zk, 1.0]) / (zl - zk)
        c = basis.coef
        coef[: c.size] += c[:, None, None] * V[None]
    return coef


def interpolate(spec, return_coefficients=False):
    """Stable real-rational ``C(s)`` with ``C(0) = K0`` and ``C(j w_k) = K_k``.

    The interpolant is a matrix Lagrange polynomial on the unit circle in
    ``w = (1 - s)/(1 + s)`` with nodes ``w_k = (1 - j w_k)/(1 + j w_k)``,
    their conjugates and ``w = 1`` for DC.  Since ``w = 2p - 1`` with
    ``p = 1/(s+1)``, the same polynomial is built directly at the nodes
    ``p_k = (1 + w_k)/2``, giving ``C(s) = sum_r G_r / (s+1)^r``.  The
    realization is a chain of ``m``-wide first-order lags, so its state
    matrix is triangular with diagonal -1.  ``C.imag_residual`` is the
    largest imaginary part discarded from the coefficients.
    """
    nodes, values = [], []
    if spec.K0 is not None:
        nodes.append(1.0 + 0j)
        values.append(spec.K0.astype(complex))
    for w, K in zip(spec.omega, spec.K):
        nodes.append(1 / (1 + 1j * w))
        values.append(K)
    for w, K in zip(spec.omega, spec.K):
        nodes.append(1 / (1 - 1j * w))
        values.append(K.conj())
    G = _poly_coeffs(nodes, values)
    m = spec.m
    d = G.shape[0] - 1
    scale = max(1.0, np.abs(G).max())
    imag = float(np.abs(G.imag).max())
    if imag > 1e-12 * scale * max(1, d) ** 2:
        raise ValueError(f"interpolant is not real (imag {imag:.2e})")
    G = G.real
    C = _lag_chain(G)
    C.imag_residual = imag
    # rational form num/(s+1)^d, descending powers
    num = np.zeros((m, m, d + 1))
    for r in range(d + 1):
        # (s+1)^(d-r), placed in descending order
        b = np.array([comb(d - r, t) for t in range(d - r, -1, -1)], float)
        num[:, :, r:] += G[r][:, :, None] * b[None, None, :]
    den = np.array([comb(d, t) for t in range(d, -1, -1)], float)
    C.rational = (num, den)
    if return_coefficients:
        return C, G
    return C


def _lag_chain(G):
    """Realization of ``sum_r G_r p^r`` with ``p = 1/(s+1)``."""
    d = G.shape[0] - 1
    m = G.shape[1]
    if d == 0:
        return TransferMatrix.static(G[0])
    n = d * m
    A = -np.eye(n) + np.eye(n, k=-m)
    B = np.zeros((n, m))
    B[:m] = np.eye(m)
    Cm = np.hstack([G[r] for r in range(1, d + 1)])
    return TransferMatrix({}, StateSpace(A, B, Cm, G[0]))


def to_rational(C, eps=1.0):
    """``(num, den)`` coefficient arrays of a controller (descending powers)."""
    if C.rational is None:
        raise ValueError("controller has no stored rational form")
    num, den = C.rational
    return eps * np.asarray(num), np.asarray(den)


# --------------------------------------------------------------------------
# sector LMIs


@dataclass
class LmiProblem:
    """Find ``K`` with ``Herm(e^{+-j theta} M K) > 0`` for every ``(M, theta)``."""

    constraints: list
    real: bool = False
    feas_tol: float = FEAS_TOL

    def __post_init__(self):
        cons = []
        for M, th in self.constraints:
            M = np.atleast_2d(np.asarray(M, dtype=complex))
            if not 0 <= th < np.pi / 2:
                raise ValueError(f"theta must lie in [0, pi/2), got {th}")
            cons.append((M, float(th)))
        if not cons:
            raise ValueError("empty LMI problem")
        m = cons[0][0].shape[0]
        if any(M.shape != (m, m) for M, _ in cons):
            raise ShapeError("all constraint matrices must be m x m")
        self.constraints = cons

    @property
    def m(self):
        return self.constraints[0][0].shape[0]


@dataclass
class LmiResult:
    feasible: bool
    K: np.ndarray
    margin: float
    constraint_margins: np.ndarray
    history: list = field(default_factory=list)
    scale: float = 1.0


def lmi_margins(problem, K, scale=1.0):
    """Smallest eigenvalue of every sector constraint at ``K``."""
    out = []
    for M, th in problem.constraints:
        X = (M / scale) @ K
        for sgn in (1, -1):
            Y = np.exp(1j * sgn * th) * X
            out.append(np.linalg.eigvalsh((Y + Y.conj().T) / 2)[0])
    return np.array(out)


def _objective(data, K):
    """min over constraints of lambda_min and a supergradient."""
    best, grad = np.inf, None
    for Rm, Mh in data:
        Y = Rm @ K
        lam, V = np.linalg.eigh((Y + Y.conj().T) / 2)
        if lam[0] < best:
            x = V[:, 0]
            best, grad = lam[0], Mh @ np.outer(x, x.conj())
    return best, grad


def solve_sector_lmi(problem, restarts=5, seed=0, iters=600, step=0.5, warm=None):
    """Maximize the sector margin ``t`` over ``||K||_F <= 1``.

    Projected supergradient ascent on the concave function ``t(K)``, the
    smallest eigenvalue over all constraints.  Data are divided by the
    largest residue norm so the margin is scale free.

    Returns
    -------
    LmiResult
        ``K`` refers to the original (unscaled) data; ``feasible`` iff the
        best margin exceeds ``feas_tol``.
    """
    rng = np.random.default_rng(seed)
    m = problem.m
    scale = max(np.linalg.norm(M, 2) for M, _ in problem.constraints)
    data = []
    for M, th in problem.constraints:
        Ms = M / scale
        for sgn in (1, -1):
            R = np.exp(1j * sgn * th) * Ms
            data.append((R, R.conj().T))
    dtype = float if problem.real else complex

    def project(K):
        if problem.real:
            K = K.real
        nrm = np.linalg.norm(K)
        return K / nrm if nrm > 1 else K

    starts = []
    if warm is not None:
        starts.append(np.asarray(warm, dtype=complex) * scale)
    try:
        inv = sum(np.linalg.inv(M / scale) for M, _ in problem.constraints)
        starts.append(inv)
    except np.linalg.LinAlgError:
        pass
    starts.append(np.eye(m, dtype=complex))
    for _ in range(restarts):
        R = rng.standard_normal((m, m)) + (0 if problem.real else 1j * rng.standard_normal((m, m)))
        starts.append(R)

    best_t, best_K, history = -np.inf, None, []
    for K in starts:
        K = project(K.astype(complex) / max(np.linalg.norm(K), 1e-300))
        if problem.real:
            K = K.real
        t0 = None
        for it in range(iters):
            t, g = _objective(data, K)
            if t > best_t:
                best_t, best_K = t, K.copy()
            history.append(best_t)
            if t0 is None:
                t0 = t
            g = g.real if problem.real else g
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            K = project(K.astype(dtype) + step / np.sqrt(it + 1) * g / gn)
    K = best_K.astype(dtype) if problem.real else best_K
    if problem.real:
        K = np.real(K)
    margins = lmi_margins(problem, K, scale)
    t = float(margins.min())
    return LmiResult(t > problem.feas_tol, K / scale, t, margins, history, scale)


# --------------------------------------------------------------------------
# designs and the gain search


@dataclass
class DesignResult:
    controllers: object
    epsilon: float
    epsilon_star: float
    feasible: bool
    mode: str
    base: object = None
    targets: dict = field(default_factory=dict)
    certificates: dict = field(default_factory=dict)
    report: object = None
    trace: list = field(default_factory=list)
    reason: str = ""


def _common_modes(agents):
    agents = [ltisys.as_transfer_matrix(P) for P in agents]
    omegas = {P.modes.omega for P in agents}
    if len(omegas) != 1:
        raise PreconditionError(f"agents do not share the persistent modes: {omegas}")
    return agents, agents[0].modes


def _check_nonsingular(M, i, w):
    if np.linalg.cond(M) > SINGULAR_COND:
        raise SingularResidueError(f"residue of agent {i + 1} at j*{w:g} is singular")


def _component_index(dec, n):
    comp = np.empty(n, int)
    for k, b in enumerate(dec.blocks):
        comp[list(b.nodes)] = k
    return comp


def hurwitz_precondition(agents, G, targets):
    """Check ``-M_kk K_kk (L_kk (x) I)`` Hurwitz for every mode and component.

    ``targets[i][w]`` is the controller value of agent ``i`` at ``j w``.  For
    the root component the ``m`` eigenvalues at 0 (from the Laplacian null
    vector) are set aside.
    """
    agents, modes = _common_modes(agents)
    dec = netgraph.frobenius_form(G)
    m = modes.m
    out, ok = [], True
    for k, b in enumerate(dec.blocks):
        nodes = list(b.nodes)
        Lk = np.kron(b.L_block, np.eye(m))
        for w in modes.omega:
            MK = np.zeros((len(nodes) * m,) * 2, complex)
            for a, i in enumerate(nodes):
                MK[a * m:(a + 1) * m, a * m:(a + 1) * m] = agents[i].residues[w] @ targets[i][w]
            lam = np.linalg.eigvals(-MK @ Lk)
            if k == 0:
                lam = lam[np.argsort(np.abs(lam))][m:]
            worst = float(lam.real.max()) if lam.size else -np.inf
            passed = worst < 0
            ok &= passed
            out.append({"component": k + 1, "omega": w, "max_real": worst, "passed": passed,
                        "angles": np.sort(np.angle(-lam)).tolist()})
    return ok, out


def epsilon_search(agents, G, base, mode="uniform", eps_min=1e-8, hurwitz=None,
                   raise_on_failure=True):
    """Scan ``eps = 1, 1/2, 1/4, ...`` and keep the first certified gain.

    Returns
    -------
    epsilon, epsilon_star, report, trace
        ``epsilon_star`` is the failing value just above ``epsilon`` (1 if
        ``eps = 1`` already passes).

    Raises
    ------
    SearchFailure
        No gain down to ``eps_min`` passes; diagnostics include the
        eigenvalue trace and the Hurwitz precondition.
    """
    agents, modes = _common_modes(agents)
    trace = []
    eps, prev_fail = 1.0, None
    while eps >= eps_min:
        if mode == "uniform":
            ctrl = base.scaled(eps)
        else:
            ctrl = [C.scaled(eps) for C in base]
        cl = ltisys.closed_loop(agents, G, ctrl, mode=mode)
        rep = ltisys.verify_sync(cl, modes)
        trace.append({"epsilon": eps, "passed": rep.passed, "reason": rep.reason,
                      "slowest": rep.slowest_stable,
                      "max_real": float(np.max(rep.eigenvalues.real)) if rep.eigenvalues.size else 0.0})
        if rep.passed:
            return eps, (prev_fail if prev_fail is not None else 1.0), rep, trace
        prev_fail = eps
        eps /= 2
    diag = {"trace": trace, "hurwitz": hurwitz}
    if raise_on_failure:
        raise SearchFailure("no gain in the scan certifies synchronization", diag)
    return None, prev_fail, None, trace


def design_per_agent(agents, G, eps_min=1e-8):
    """Agent-dependent design: ``Ct_i`` interpolates the inverse residues.

    Then ``M_ki Ct_i(j w_k) = I`` for every agent and mode, so the relevant
    eigen-angles equal those of the Laplacian blocks.
    """
    agents, modes = _common_modes(agents)
    n, m = len(agents), modes.m
    if n != G.n:
        raise ShapeError(f"{n} agents for {G.n} nodes")
    dec = netgraph.frobenius_form(G)
    targets, base = [], []
    for i, P in enumerate(agents):
        t = {}
        for w, M in P.residues.items():
            _check_nonsingular(M, i, w)
            t[w] = np.linalg.inv(M)
        targets.append(t)
        base.append(interpolate(InterpolationSpec.from_modes(modes, t)))
    cert = {}
    for k, b in enumerate(dec.blocks):
        nodes = list(b.nodes)
        Lk = np.kron(b.L_block, np.eye(m))
        ref = np.sort(np.angle(np.linalg.eigvals(Lk)[np.abs(np.linalg.eigvals(Lk)) > 1e-9]))
        for w in modes.omega:
            MK = np.zeros_like(Lk, dtype=complex)
            for a, i in enumerate(nodes):
                MK[a * m:(a + 1) * m, a * m:(a + 1) * m] = agents[i].residues[w] @ targets[i][w]
            lam = np.linalg.eigvals(MK @ Lk)
            ang = np.sort(np.angle(lam[np.abs(lam) > 1e-9]))
            cert[(k + 1, w)] = {"angles": ang.tolist(), "laplacian_angles": ref.tolist(),
                                "max_deviation": float(np.abs(ang - ref).max()) if ang.size == ref.size and ang.size else 0.0}
    hz = hurwitz_precondition(agents, G, targets)
    eps, eps_star, rep, trace = epsilon_search(agents, G, base, "per-agent", eps_min, hz)
    return DesignResult([C.scaled(eps) for C in base], eps, eps_star, True, "per-agent", base,
                        {i: t for i, t in enumerate(targets)},
                        {"angles": cert, "hurwitz": hz[1], "sync": rep}, rep, trace)


def design_uniform(agents, G, refine=False, seed=0, restarts=5, eps_min=1e-8):
    """Uniform design from the sector LMIs, one problem per persistent mode.

    Returns an infeasible :class:`DesignResult` (with per-mode margins) when
    some LMI has no solution.
    """
    agents, modes = _common_modes(agents)
    n, m = len(agents), modes.m
    if n != G.n:
        raise ShapeError(f"{n} agents for {G.n} nodes")
    dec = netgraph.frobenius_form(G)
    thetas = netgraph.component_phase_bounds(dec, refine=refine)
    comp = _component_index(dec, n)
    for i, P in enumerate(agents):
        for w, M in P.residues.items():
            _check_nonsingular(M, i, w)
    K, lmi = {}, {}
    for w in modes.omega:
        prob = LmiProblem([(agents[i].residues[w], thetas[comp[i]]) for i in range(n)],
                          real=(w == 0.0))
        res = solve_sector_lmi(prob, restarts=restarts, seed=seed)
        lmi[w] = res
        K[w] = res.K
    cert = {"theta": thetas, "lmi_margin": {w: r.margin for w, r in lmi.items()}}
    if not all(r.feasible for r in lmi.values()):
        bad = [w for w, r in lmi.items() if not r.feasible]
        return DesignResult(None, float("nan"), float("nan"), False, "uniform", None, K, cert,
                            reason=f"sector LMI infeasible at modes {bad}")
    # phase-interval check on every mode/component
    phase_ok, intervals = True, []
    for k, b in enumerate(dec.blocks):
        for w in modes.omega:
            X = block_diag(*[agents[i].residues[w] @ K[w] for i in b.nodes])
            try:
                prof = phasecore.phases(X)
                lo, hi = prof.lower, prof.upper
            except NotSemiSectorialError:
                lo, hi = -np.inf, np.inf
            inside = -np.pi / 2 + thetas[k] < lo and hi < np.pi / 2 - thetas[k]
            phase_ok &= inside
            intervals.append({"component": k + 1, "omega": w, "phases": (lo, hi),
                              "interval": (-np.pi / 2 + thetas[k], np.pi / 2 - thetas[k]),
                              "inside": inside})
    cert["phase_intervals"] = intervals
    if not phase_ok:
        return DesignResult(None, float("nan"), float("nan"), False, "uniform", None, K, cert,
                            reason="phase interval check failed")
    base = interpolate(InterpolationSpec.from_modes(modes, K))
    targets = [K] * n
    hz = hurwitz_precondition(agents, G, targets)
    cert["hurwitz"] = hz[1]
    eps, eps_star, rep, trace = epsilon_search(agents, G, base, "uniform", eps_min, hz)
    cert["sync"] = rep
    return DesignResult(base.scaled(eps), eps, eps_star, True, "uniform", base, K, cert, rep, trace)
