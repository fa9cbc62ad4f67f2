"""Transfer matrices with persistent modes, phase responses and closed loops.

A :class:`TransferMatrix` stores a square system in partial-fraction form::

    P(s) = M_0 / s + sum_k [ M_k / (s - j w_k) + conj(M_k) / (s + j w_k) ] + Delta(s)

with ``Delta`` stable, together with a real state-space realization that is
minimal on the imaginary-axis part.  Closed loops are assembled as plain
state-space matrices and synchronization is certified from their spectrum.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, signal

from . import netgraph, phasecore
from .errors import (
    NotSemiSectorialError,
    NotSemiSimpleError,
    NumericalDegeneracyError,
    PoleEvaluationError,
    PreconditionError,
    ShapeError,
)
from .phasecore import Kind, PhaseProfile

CLUSTER_RTOL = 1e-7
STABILITY_RTOL = 1e-8
RESIDUE_RANK_RTOL = 1e-10


# --------------------------------------------------------------------------
# state space


def _mat(X, rows=None, cols=None, dtype=float):
    X = np.asarray(X, dtype=dtype)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(rows if rows is not None else -1, cols if cols is not None else 1)
    return X


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Real realization ``x' = Ax + Bu, y = Cx + Du``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = _mat(self.D)
        p, m = D.shape
        A = np.asarray(self.A, dtype=float)
        nx = int(math.isqrt(A.size))
        try:
            if nx * nx != A.size or (A.ndim == 2 and A.shape[0] != A.shape[1]):
                raise ValueError("A must be square")
            A = A.reshape(nx, nx)
            B = np.asarray(self.B, dtype=float).reshape(nx, m)
            C = np.asarray(self.C, dtype=float).reshape(p, nx)
        except ValueError as exc:
            raise ShapeError(f"incompatible state-space dimensions: {exc}") from None
        for name, X in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, X)

    @classmethod
    def static(cls, D):
        D = _mat(D)
        return cls(np.zeros((0, 0)), np.zeros((0, D.shape[1])), np.zeros((D.shape[0], 0)), D)

    @property
    def nx(self):
        return self.A.shape[0]

    @property
    def shape(self):
        return self.D.shape

    def __call__(self, s):
        if self.nx == 0:
            return self.D.astype(complex)
        M = s * np.eye(self.nx) - self.A
        try:
            X = np.linalg.solve(M, self.B)
        except np.linalg.LinAlgError:
            raise PoleEvaluationError(f"evaluation at a pole s={s}") from None
        if np.linalg.cond(M) > 1e14:
            raise PoleEvaluationError(f"evaluation numerically at a pole s={s}")
        return self.C @ X + self.D

    def scaled(self, c):
        return StateSpace(self.A, self.B, c * self.C, c * self.D)

    def poles(self):
        return np.linalg.eigvals(self.A) if self.nx else np.empty(0, complex)

    def zeros(self):
        """Finite invariant zeros from the Rosenbrock pencil (square systems)."""
        p, m = self.shape
        if p != m:
            raise ShapeError("zeros are computed for square systems")
        n = self.nx
        if n == 0:
            return np.empty(0, complex)
        big = np.block([[self.A, self.B], [self.C, self.D]])
        E = np.zeros_like(big)
        E[:n, :n] = np.eye(n)
        with np.errstate(all="ignore"):
            alpha, beta = linalg.eigvals(big, E, homogeneous_eigvals=True)
        scale = 1.0 + np.abs(big).max()
        finite = np.abs(beta) > 1e-10 * (np.abs(alpha) / scale + np.abs(beta)) * 1
        finite &= np.abs(beta) * scale * 1e9 > np.abs(alpha)
        return alpha[finite] / beta[finite]


def _blkdiag(mats, shape_if_empty=(0, 0)):
    mats = [np.atleast_2d(M) if np.size(M) else np.zeros(np.shape(M) if np.ndim(M) == 2 else (0, 0))
            for M in mats]
    if not mats:
        return np.zeros(shape_if_empty)
    return linalg.block_diag(*mats)


def balance(P):
    """Diagonal similarity reducing the norm of ``A`` (same transfer matrix)."""
    if P.nx == 0:
        return P
    _, (scale, _) = linalg.matrix_balance(P.A, permute=False, separate=True)
    return StateSpace(P.A * (1 / scale)[:, None] * scale[None, :], P.B / scale[:, None],
                      P.C * scale[None, :], P.D)


def balanced_norm(A):
    """Spectral norm of ``A`` after diagonal balancing (a similarity invariant scale)."""
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(linalg.matrix_balance(A, permute=False)[0], 2))


def ss_block_diag(systems):
    return StateSpace(_blkdiag([s.A for s in systems]), _blkdiag([s.B for s in systems]),
                      _blkdiag([s.C for s in systems]), _blkdiag([s.D for s in systems]))


def ss_series(first, second):
    """``second`` driven by ``first``: transfer ``second(s) @ first(s)``."""
    A1, B1, C1, D1 = first.A, first.B, first.C, first.D
    A2, B2, C2, D2 = second.A, second.B, second.C, second.D
    n1, n2 = A1.shape[0], A2.shape[0]
    A = np.block([[A1, np.zeros((n1, n2))], [B2 @ C1, A2]])
    B = np.vstack([B1, B2 @ D1])
    C = np.hstack([D2 @ C1, C2])
    return StateSpace(A, B, C, D2 @ D1)


def ss_parallel(systems):
    s = ss_block_diag(systems)
    p, m = systems[0].shape
    In, Out = np.vstack([np.eye(m)] * len(systems)), np.hstack([np.eye(p)] * len(systems))
    return StateSpace(s.A, s.B @ In, Out @ s.C, Out @ s.D @ In)


def rational_to_ss(num, den):
    """Realization of an ``p x m`` matrix of scalar rational entries.

    ``num[i][j]`` and ``den[i][j]`` (or a single common ``den``) are
    coefficient lists in descending powers of ``s``.
    """
    p = len(num)
    m = len(num[0])
    common = np.ndim(den) == 1 or (len(den) and np.isscalar(den[0]))
    blocks = []
    for i in range(p):
        for j in range(m):
            nij = np.trim_zeros(np.atleast_1d(np.asarray(num[i][j], dtype=float)), "f")
            if nij.size == 0:
                continue
            dij = np.asarray(den if common else den[i][j], dtype=float)
            dij = np.trim_zeros(np.atleast_1d(dij), "f")
            if nij.size > dij.size:
                raise ShapeError(f"entry ({i}, {j}) is improper")
            a, b, c, d = signal.tf2ss(nij, dij)
            Bf = np.zeros((a.shape[0], m))
            Bf[:, j] = b[:, 0]
            Cf = np.zeros((p, a.shape[0]))
            Cf[i, :] = c[0]
            Df = np.zeros((p, m))
            Df[i, j] = d[0, 0]
            blocks.append(StateSpace(a, Bf, Cf, Df))
    if not blocks:
        return StateSpace.static(np.zeros((p, m)))
    return ss_parallel(blocks)


# --------------------------------------------------------------------------
# persistent modes and residues


@dataclass(frozen=True)
class PersistentModes:
    omega: tuple
    m: int

    def __post_init__(self):
        om = tuple(float(w) for w in self.omega)
        if any(w < 0 for w in om) or any(b <= a for a, b in zip(om, om[1:])):
            raise ValueError(f"mode frequencies must be nonnegative and increasing: {om}")
        object.__setattr__(self, "omega", om)

    @property
    def has_dc(self):
        return bool(self.omega) and self.omega[0] == 0.0

    @property
    def positive(self):
        return tuple(w for w in self.omega if w > 0)

    @property
    def poles(self):
        out = []
        for w in self.omega:
            out += [0j] if w == 0 else [1j * w, -1j * w]
        return out


def _cluster_tol(A):
    return CLUSTER_RTOL * max(1.0, balanced_norm(A))


def _spectral_projector(A, lam, tol, count):
    """Projector onto the invariant subspace of the eigenvalues near ``lam``.

    The cluster is moved to the leading block of a complex Schur form and
    decoupled with a Sylvester equation, which avoids inverting a possibly
    ill-conditioned eigenvector matrix.
    """
    n = A.shape[0]
    T, Z, k = linalg.schur(A.astype(complex), output="complex",
                           sort=lambda x: abs(x - lam) < tol)
    if k != count:
        raise NumericalDegeneracyError(f"eigenvalue cluster at {lam} is not separable")
    X = linalg.solve_sylvester(T[:k, :k], -T[k:, k:], -T[:k, k:]) if k < n else np.zeros((k, 0))
    Pi = np.zeros((n, n), complex)
    Pi[:k, :k] = np.eye(k)
    Pi[:k, k:] = -X
    return Z @ Pi @ Z.conj().T


def residues(P, modes, check=True):
    """Residue matrices ``lim (s - j w_k) P(s)`` from a realization.

    Uses the spectral projector of ``A`` onto each ``j w_k`` eigenspace.

    Returns
    -------
    dict
        ``{w_k: M_k}``; ``M_0`` is real.

    Raises
    ------
    NotSemiSimpleError
        If an imaginary-axis eigenvalue has a Jordan block.
    """
    if isinstance(modes, PersistentModes):
        modes = modes.omega
    A, B, C = P.A, P.B, P.C
    p, m = P.shape
    out = {}
    if A.shape[0] == 0:
        return {w: np.zeros((p, m), complex if w else float) for w in modes}
    lam = np.linalg.eigvals(A)
    tol = _cluster_tol(A)
    for w in modes:
        idx = np.abs(lam - 1j * w) < tol
        alg = int(idx.sum())
        if alg == 0:
            out[w] = np.zeros((p, m), complex if w else float)
            continue
        sv = np.linalg.svd(A - 1j * w * np.eye(A.shape[0]), compute_uv=False)
        geo = int(np.sum(sv < np.sqrt(np.finfo(float).eps) * max(1.0, sv[0])))
        if geo < alg:
            raise NotSemiSimpleError(
                f"eigenvalue j*{w:g} has algebraic multiplicity {alg} "
                f"but geometric multiplicity {geo}")
        M = C @ _spectral_projector(A, 1j * w, tol, alg) @ B
        if w == 0:
            if np.abs(M.imag).max(initial=0) > 1e-8 * max(1.0, np.abs(M).max()):
                raise NumericalDegeneracyError("DC residue is not real")
            M = M.real
        out[w] = M
    if check:
        for w, M in out.items():
            h = 1e-6 * (1 + w)
            s = 1j * w + h
            approx = h * P(s)
            err = np.abs(approx - M).max()
            if err > 1e-3 * (1 + np.abs(M).max() + np.abs(approx).max()):
                raise NumericalDegeneracyError(f"residue at j*{w:g} fails the limit check ({err:.3g})")
    return out


def _split_stable(P, modes_tol):
    """Block-diagonalize a realization into (stable part, imaginary-axis part)."""
    n = P.nx
    if n == 0:
        return P, np.empty(0, complex)
    thr = -modes_tol

    def is_stable(re, im):
        return re < thr

    T, Z, k = linalg.schur(P.A, output="real", sort=is_stable)
    lam = np.linalg.eigvals(T[k:, k:]) if k < n else np.empty(0, complex)
    if np.any(lam.real > modes_tol):
        raise PreconditionError(
            f"system has open right-half-plane poles {lam[lam.real > modes_tol]}")
    T11, T12, T22 = T[:k, :k], T[:k, k:], T[k:, k:]
    X = linalg.solve_sylvester(T11, -T22, -T12) if 0 < k < n else np.zeros((k, n - k))
    Bz, Cz = Z.T @ P.B, P.C @ Z
    B1 = Bz[:k] - X @ Bz[k:]
    rem = StateSpace(T11, B1, Cz[:, :k], P.D)
    return rem, lam


def _detect_modes(lam, tol):
    om = sorted(abs(x.imag) for x in lam if abs(x.real) <= tol)
    out = []
    for w in om:
        if w < tol:
            w = 0.0
        if not out or w - out[-1] > tol:
            out.append(w)
    return tuple(out)


def _mode_block(w, M):
    """Minimal real realization of M/s (w = 0) or M/(s-jw) + conj(M)/(s+jw)."""
    p, m = M.shape
    U, sv, Vh = np.linalg.svd(M)
    r = int(np.sum(sv > RESIDUE_RANK_RTOL * max(sv[0], np.finfo(float).tiny))) if sv.size else 0
    if r == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), np.zeros((p, m)))
    Bc = sv[:r, None] * Vh[:r]
    Cc = U[:, :r]
    if w == 0:
        return StateSpace(np.zeros((r, r)), Bc.real, Cc.real, np.zeros((p, m)))
    I = np.eye(r)
    A = np.block([[np.zeros((r, r)), -w * I], [w * I, np.zeros((r, r))]])
    B = np.vstack([Bc.real, Bc.imag])
    C = 2 * np.hstack([Cc.real, -Cc.imag])
    return StateSpace(A, B, C, np.zeros((p, m)))


class TransferMatrix:
    """Square real-rational system with simple poles at ``j*Omega``.

    Parameters
    ----------
    residues : dict
        ``{w_k: M_k}`` for every persistent frequency ``w_k >= 0``; the
        DC residue is real.
    remainder : StateSpace or array_like
        Stable part ``Delta(s)``; a matrix is taken as a static gain.
    rational : tuple, optional
        ``(num, den)`` coefficient form kept for serialization.
    """

    def __init__(self, residues, remainder, rational=None):
        if not isinstance(remainder, StateSpace):
            remainder = StateSpace.static(remainder)
        m = remainder.shape[0]
        if remainder.shape != (m, m):
            raise ShapeError(f"transfer matrices must be square, got {remainder.shape}")
        res = {}
        for w, M in sorted(residues.items()):
            w = float(w)
            M = _mat(M, dtype=complex)
            if M.shape != (m, m):
                raise ShapeError(f"residue at {w} has shape {M.shape}, expected {(m, m)}")
            if w == 0:
                if np.abs(M.imag).max(initial=0) > 1e-9 * max(1.0, np.abs(M).max()):
                    raise ShapeError("DC residue must be real")
                M = M.real.copy()
            res[w] = M
        if remainder.nx:
            remainder = balance(remainder)
            lam = np.linalg.eigvals(remainder.A)
            if np.any(lam.real >= -STABILITY_RTOL * max(1.0, np.abs(lam).max())):
                raise PreconditionError("remainder must be stable")
        self.modes = PersistentModes(tuple(res), m)
        self.residues = res
        self.remainder = remainder
        self.rational = rational
        self.imag_residual = 0.0
        parts = [_mode_block(w, M) for w, M in res.items()] + [remainder]
        self.realization = ss_parallel(parts)

    # -- constructors -------------------------------------------------------
    @classmethod
    def from_statespace(cls, P, omega=None, check=True):
        """Partial-fraction form of a realization whose non-stable poles are on jR."""
        if P.shape[0] != P.shape[1]:
            raise ShapeError("transfer matrices must be square")
        tol = _cluster_tol(P.A) if P.nx else 1e-12
        lam = P.poles()
        if omega is None:
            omega = _detect_modes(lam, tol)
        res = residues(P, tuple(omega), check=check)
        rem, lam_axis = _split_stable(P, tol)
        for x in lam_axis:
            if min((abs(x - p) for p in PersistentModes(tuple(omega), 1).poles), default=np.inf) > tol:
                raise PreconditionError(f"imaginary-axis pole {x} is not a declared mode")
        return cls(res, rem)

    @classmethod
    def from_rational(cls, num, den, omega=None):
        return cls.from_statespace(rational_to_ss(num, den), omega)

    @classmethod
    def from_terms(cls, terms, omega=None):
        """Sum of rational matrices, each given as ``(num, den)``."""
        return cls.from_statespace(ss_parallel([rational_to_ss(n, d) for n, d in terms]), omega)

    @classmethod
    def static(cls, K):
        return cls({}, StateSpace.static(_mat(K)))

    # -- basic properties ---------------------------------------------------
    @property
    def m(self):
        return self.modes.m

    @property
    def is_stable(self):
        return not self.residues

    def residue(self, w):
        return self.residues[float(w)]

    def scaled(self, c):
        rational = None
        if self.rational is not None:
            num, den = self.rational
            rational = (np.asarray(num) * c, den)
        return TransferMatrix({w: c * M for w, M in self.residues.items()},
                              self.remainder.scaled(c), rational)

    def __call__(self, s):
        return freq_response(self, s)

    def __repr__(self):
        return f"TransferMatrix(m={self.m}, omega={self.modes.omega}, nx={self.realization.nx})"


def as_transfer_matrix(P, m=None):
    if isinstance(P, TransferMatrix):
        return P
    if isinstance(P, StateSpace):
        return TransferMatrix.from_statespace(P)
    K = _mat(P)
    return TransferMatrix.static(K)


def freq_response(P, s, path="fraction", check=False):
    """Evaluate ``P(s)``.

    ``path="fraction"`` sums the partial fractions, ``"realization"`` uses
    ``C (sI - A)^{-1} B + D``; with ``check`` both are computed and required
    to agree to 1e-9 (relative).
    """
    P = as_transfer_matrix(P)
    for p in P.modes.poles:
        if abs(s - p) <= 1e-12 * (1 + abs(p)):
            raise PoleEvaluationError(f"s={s} is a pole")
    if path == "realization" and not check:
        return P.realization(s)
    val = P.remainder(s).astype(complex)
    for w, M in P.residues.items():
        if w == 0:
            val = val + M / s
        else:
            val = val + M / (s - 1j * w) + M.conj() / (s + 1j * w)
    if check:
        other = P.realization(s)
        if np.abs(other - val).max() > 1e-9 * (1 + np.abs(val).max()):
            raise NumericalDegeneracyError("partial fraction and realization disagree")
    return val


# --------------------------------------------------------------------------
# phase response along the indented imaginary axis


@dataclass
class IndentedPath:
    """Samples of the upper indented imaginary axis, ordered along the path."""

    s: np.ndarray
    on_axis: np.ndarray
    param: np.ndarray
    discs: list = field(default_factory=list)

    @property
    def omega(self):
        return self.s.imag

    def with_points(self, omegas):
        """Path with extra on-axis samples (points inside indentations dropped)."""
        om = np.asarray([w for w in omegas if not _in_disc(w, self.discs)])
        if om.size == 0:
            return self
        s = np.concatenate([self.s, 1j * om])
        on = np.concatenate([self.on_axis, np.ones(om.size, bool)])
        par = np.concatenate([self.param, om])
        order = np.argsort(par, kind="stable")
        s, on, par = s[order], on[order], par[order]
        keep = np.concatenate([[True], np.diff(par) > 0])
        return IndentedPath(s[keep], on[keep], par[keep], self.discs)


def _in_disc(w, discs):
    return any(abs(w - c) < r for c, r in discs)


def indented_path(poles, zeros=(), eps=1e-3, n_points=400, omega_max=None,
                  infinite_zero=False, arc_points=17):
    """Build an indented frequency path.

    Semicircular detours of radius ``eps * (1 + w)`` go around every pole or
    zero frequency ``w``; a quarter circle handles ``w = 0``; when infinity
    is a zero the path ends with an arc of radius ``1/eps`` (at least ten
    times ``omega_max``).
    """
    centers = sorted({round(float(w), 12) for w in list(poles) + list(zeros) if w >= 0})
    top = max([1.0] + centers)
    omega_max = 100 * top if omega_max is None else omega_max
    discs = [(c, eps * (1 + c)) for c in centers]
    half = n_points // 2
    axis = np.union1d(np.geomspace(1e-3 * min(1.0, top), omega_max, half),
                      np.linspace(0, omega_max, n_points - half))
    R = None
    if infinite_zero:
        R = max(1.0 / eps, 10 * omega_max)
        axis = np.union1d(axis, np.geomspace(omega_max, R, 40))
    axis = np.array([w for w in axis if not _in_disc(w, discs)])
    pts = [(w, 1j * w, True) for w in axis]
    for c, r in discs:
        if c == 0:
            psi = np.linspace(0, np.pi / 2, arc_points)
            pts += [(r * np.sin(t), r * np.exp(1j * t), t == psi[-1]) for t in psi]
        else:
            psi = np.linspace(-np.pi / 2, np.pi / 2, arc_points)
            pts += [(c + r * np.sin(t), 1j * c + r * np.exp(1j * t), t in (psi[0], psi[-1]))
                    for t in psi]
    if R is not None:
        psi = np.linspace(np.pi / 2, 0, arc_points)
        pts += [(R + (np.pi / 2 - t), R * np.exp(1j * t), t == psi[0]) for t in psi[1:]]
    pts.sort(key=lambda x: x[0])
    par = np.array([p[0] for p in pts])
    keep = np.concatenate([[True], np.diff(par) > 1e-15])
    return IndentedPath(np.array([p[1] for p in pts])[keep], np.array([p[2] for p in pts])[keep],
                        par[keep], discs)


@dataclass
class PhaseResponse:
    path: IndentedPath
    profiles: list
    upper: np.ndarray
    lower: np.ndarray
    center: np.ndarray
    kind: Kind
    residue_kinds: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def omega(self):
        return self.path.omega

    @property
    def axis(self):
        return self.path.on_axis

    @property
    def max_phase(self):
        """Largest phase over on-axis samples (sup over omega not in Omega)."""
        v = self.upper[self.axis]
        return float(np.nanmax(v)) if v.size else float("nan")

    @property
    def min_phase(self):
        v = self.lower[self.axis]
        return float(np.nanmin(v)) if v.size else float("nan")


def track_phases(evaluate, path, tol=None, cache=None):
    """Principal phase profiles along ``path`` made continuous in the center.

    The first sample keeps its principal branch (DC anchor); each later
    profile is moved by a multiple of 2*pi to minimize the jump in center.
    Samples that are not semi-sectorial get ``None``.  ``cache`` (a dict)
    keeps principal profiles between calls on refined paths.
    """
    cache = {} if cache is None else cache
    profiles = []
    prev = None
    for s in path.s:
        key = complex(s)
        if key in cache:
            prof = cache[key]
        else:
            try:
                prof = phasecore.phases(evaluate(s), tol, hint=prev, quick_reject=True)
            except (NotSemiSectorialError, NumericalDegeneracyError):
                prof = None
            cache[key] = prof
        if prof is None:
            profiles.append(None)
            continue
        if prev is not None:
            k = np.round((prev - prof.center) / (2 * np.pi))
            if k:
                prof = prof.shifted(2 * np.pi * k)
        prev = prof.center
        profiles.append(prof)
    return profiles


def _kind_of_samples(profiles, need_sectorial):
    if any(p is None for p in profiles):
        return Kind.NOT_SEMI_SECTORIAL
    if need_sectorial and all(p.kind is Kind.SECTORIAL for p in profiles):
        return Kind.SECTORIAL
    return Kind.SEMI_SECTORIAL


def imaginary_zeros(P, tol=1e-7):
    z = P.zeros()
    scale = 1 + np.abs(z).max(initial=0)
    return sorted({round(abs(x.imag), 12) for x in z if abs(x.real) <= tol * scale})


def phase_response(P, eps=1e-3, n_points=400, path=None, refine=True, tol=None,
                   spread_step=0.1, max_rounds=6):
    """Phase response of a square system along the indented imaginary axis.

    Parameters
    ----------
    P : TransferMatrix
    eps : float
        Indentation scale; detours have radius ``eps * (1 + w)``.
    n_points : int
        Base number of on-axis samples up to ``100 * max(1, w_q)``.
    path : IndentedPath, optional
        Use this path instead of building one.
    refine : bool
        Bisect adjacent on-axis samples whose largest or smallest phase
        changes by more than ``spread_step``.

    Returns
    -------
    PhaseResponse
        ``kind`` is the frequency-wise classification: sectorial only for
        stable systems sectorial at every sample and at infinity,
        semi-sectorial when every sample and every residue is semi-sectorial.
    """
    P = as_transfer_matrix(P)
    if path is None:
        D = P.realization.D
        inf_zero = np.linalg.matrix_rank(D) < P.m
        path = indented_path(P.modes.omega, imaginary_zeros(P.realization), eps, n_points,
                             infinite_zero=inf_zero)
    evaluate = P.realization

    cache = {}
    profiles = track_phases(evaluate, path, tol, cache)
    for _ in range(max_rounds if refine else 0):
        up = np.array([p.upper if p else np.nan for p in profiles])
        lo = np.array([p.lower if p else np.nan for p in profiles])
        idx = np.flatnonzero(path.on_axis[:-1] & path.on_axis[1:])
        jumps = np.maximum(np.abs(np.diff(up)), np.abs(np.diff(lo)))[idx]
        bad = idx[jumps > spread_step]
        if bad.size == 0:
            break
        mids = (path.omega[bad] + path.omega[bad + 1]) / 2
        new = path.with_points(mids)
        if new.s.size == path.s.size:
            break
        path = new
        profiles = track_phases(evaluate, path, tol, cache)

    upper = np.array([p.upper if p else np.nan for p in profiles])
    lower = np.array([p.lower if p else np.nan for p in profiles])
    center = np.array([p.center if p else np.nan for p in profiles])
    failures = [(float(path.s[i].imag), complex(path.s[i])) for i, p in enumerate(profiles) if p is None]

    res_kinds = {w: phasecore.classify(M).kind for w, M in P.residues.items()}
    kind = _kind_of_samples(profiles, need_sectorial=P.is_stable)
    if kind is Kind.SECTORIAL:
        Dk = phasecore.classify(P.realization.D).kind if np.any(P.realization.D) else Kind.NOT_SEMI_SECTORIAL
        if Dk is not Kind.SECTORIAL:
            kind = Kind.SEMI_SECTORIAL
    if kind.is_semi and any(not k.is_semi for k in res_kinds.values()):
        kind = Kind.NOT_SEMI_SECTORIAL
    return PhaseResponse(path, profiles, upper, lower, center, kind, res_kinds, failures)


# --------------------------------------------------------------------------
# composition


def _as_stable_ss(C, m):
    if isinstance(C, TransferMatrix):
        if not C.is_stable:
            raise PreconditionError("controllers and edge dynamics must be stable")
        return C.realization
    if isinstance(C, StateSpace):
        if C.nx and np.any(C.poles().real >= 0):
            raise PreconditionError("controllers and edge dynamics must be stable")
        return C
    K = _mat(C)
    if K.shape == (1, 1) and m > 1:
        K = K[0, 0] * np.eye(m)
    return StateSpace.static(K)


def series(P, C):
    """The product ``P(s) C(s)`` for a stable ``C``.

    The residues of the product are ``M_k C(j w_k)``; they are recomputed
    from the series realization and cross-checked.
    """
    P = as_transfer_matrix(P)
    Css = _as_stable_ss(C, P.m)
    ser = ss_series(Css, P.realization)
    out = TransferMatrix.from_statespace(ser, P.modes.omega, check=False)
    for w, M in P.residues.items():
        expect = M @ Css(1j * w)
        if w == 0:
            expect = expect.real
        got = out.residues[w]
        if np.abs(got - expect).max() > 1e-7 * (1 + np.abs(expect).max()):
            raise NumericalDegeneracyError(f"series residue mismatch at j*{w:g}")
    return out


def block_diag(systems):
    systems = [as_transfer_matrix(P) for P in systems]
    omegas = sorted({w for P in systems for w in P.modes.omega})
    res = {}
    for w in omegas:
        res[w] = linalg.block_diag(*[P.residues.get(w, np.zeros((P.m, P.m), complex if w else float))
                                     for P in systems])
    rem = ss_block_diag([P.remainder for P in systems])
    return TransferMatrix(res, rem)


# --------------------------------------------------------------------------
# closed loop


@dataclass(frozen=True, eq=False)
class ClosedLoop:
    """Autonomous closed loop ``x' = A x``, ``y = C x``.

    The first ``plant_states`` coordinates are the agents' states in agent
    order, then controller/edge states.
    """

    A: np.ndarray
    C: np.ndarray
    n: int
    m: int
    plant_states: int
    agent_states: tuple = ()

    def initial_state(self, x_agents):
        x0 = np.zeros(self.A.shape[0])
        x_agents = np.asarray(x_agents, dtype=float).ravel()
        if x_agents.size == self.A.shape[0]:
            return x_agents.copy()
        if x_agents.size != self.plant_states:
            raise ShapeError(f"x0 has {x_agents.size} entries, expected {self.plant_states} "
                             f"(agent states) or {self.A.shape[0]} (full state)")
        x0[: self.plant_states] = x_agents
        return x0


def _controller_map(G, m, mode, controllers, edge_dynamics, factorized):
    """State space of the map y -> u implementing the protocol."""
    n = G.n
    L = netgraph.laplacian(G)
    Lm = np.kron(L, np.eye(m))
    if mode in ("uniform", "per-agent"):
        if mode == "uniform":
            ctrl = [_as_stable_ss(controllers if controllers is not None else np.eye(m), m)] * n
        else:
            if controllers is None or len(controllers) != n:
                raise ShapeError("per-agent mode needs one controller per agent")
            ctrl = [_as_stable_ss(c, m) for c in controllers]
        K = ss_block_diag(ctrl)
        return StateSpace(K.A, K.B @ (-Lm), K.C, K.D @ (-Lm))
    if mode != "edges":
        raise ValueError(f"unknown coupling mode {mode!r}")
    edge_dynamics = edge_dynamics or {}
    parts = []
    if factorized:
        inc = netgraph.incidence(G)
        for k, (i, j) in enumerate(inc.edge_order):
            W = _as_stable_ss(edge_dynamics.get((i, j), np.eye(m)), m)
            sel = np.zeros((m, n * m))
            sel[:, j * m:(j + 1) * m], sel[:, i * m:(i + 1) * m] = np.eye(m), -np.eye(m)
            # y_j - y_i feeds W; +a W to u_i, -a W to u_j
            parts.append((W, sel, -inc.weights[k] * sel.T))
    else:
        for tail, head, a in G.edges:
            W = _as_stable_ss(edge_dynamics.get((tail, head), np.eye(m)), m)
            sel = np.zeros((m, n * m))
            sel[:, tail * m:(tail + 1) * m] += np.eye(m)
            sel[:, head * m:(head + 1) * m] -= np.eye(m)
            place = np.zeros((n * m, m))
            place[head * m:(head + 1) * m] = a * np.eye(m)
            parts.append((W, sel, place))
    if not parts:
        return StateSpace.static(np.zeros((n * m, n * m)))
    A = _blkdiag([W.A for W, _, _ in parts])
    B = np.vstack([W.B @ sel for W, sel, _ in parts])
    C = np.hstack([place @ W.C for W, _, place in parts])
    D = sum(place @ W.D @ sel for W, sel, place in parts)
    return StateSpace(A, B.reshape(A.shape[0], n * m), C.reshape(n * m, A.shape[0]), D)


def closed_loop(agents, G, controllers=None, mode="uniform", edge_dynamics=None, factorized=None):
    """Assemble the autonomous closed loop of agents coupled over ``G``.

    Parameters
    ----------
    agents : list of TransferMatrix
    G : WeightedDigraph
    controllers : system or list of systems, optional
        A single stable controller for ``mode="uniform"``, one per agent for
        ``mode="per-agent"``.  Protocol: ``u_i = C_i(s) sum_j a_ij (y_j - y_i)``.
    mode : {"uniform", "per-agent", "edges"}
    edge_dynamics : dict, optional
        ``mode="edges"``: stable system per edge, keyed ``(tail, head)``;
        for an undirected factorized graph keyed by ``(i, j)``, ``i < j``.
        Missing edges use the identity.
    factorized : bool, optional
        Realize each undirected edge once through the incidence matrix
        (default when the graph is undirected).
    """
    agents = [as_transfer_matrix(P) for P in agents]
    n = len(agents)
    if n != G.n:
        raise ShapeError(f"{n} agents for a graph with {G.n} nodes")
    m = agents[0].m
    if any(P.m != m for P in agents):
        raise ShapeError("agents must share the I/O dimension")
    if factorized is None:
        factorized = mode == "edges" and G.is_undirected()
    plant = ss_block_diag([P.realization for P in agents])
    K = _controller_map(G, m, mode, controllers, edge_dynamics, factorized)
    Ap, Bp, Cp, Dp = plant.A, plant.B, plant.C, plant.D
    Ak, Bk, Ck, Dk = K.A, K.B, K.C, K.D
    loop = np.eye(n * m) - Dk @ Dp
    if np.linalg.cond(loop) > 1e12:
        raise PreconditionError("algebraic loop is ill-posed (I - Dk Dp singular)")
    F = np.linalg.inv(loop)
    Yx = Cp + Dp @ F @ Dk @ Cp
    Yk = Dp @ F @ Ck
    A = np.block([[Ap + Bp @ F @ Dk @ Cp, Bp @ F @ Ck],
                  [Bk @ Yx, Ak + Bk @ Yk]])
    C = np.hstack([Yx, Yk])
    return ClosedLoop(A, C, n, m, Ap.shape[0], tuple(P.realization.nx for P in agents))


@dataclass
class SyncReport:
    passed: bool
    eigenvalues: np.ndarray
    multiplicities: dict
    offending: list
    slowest_stable: float
    reason: str = ""

    def __bool__(self):
        return self.passed


def verify_sync(A_cl, modes, n=None, m=None):
    """Eigenstructure test for synchronization.

    PASS iff the closed right half plane contains exactly the persistent
    modes, each with algebraic and geometric multiplicity ``m``, and every
    other eigenvalue has real part below ``-1e-8 * ||A||``.
    """
    if isinstance(A_cl, ClosedLoop):
        m = A_cl.m if m is None else m
        A_cl = A_cl.A
    if isinstance(modes, PersistentModes):
        m = modes.m if m is None else m
        modes = modes.omega
    A = np.asarray(A_cl, dtype=float)
    N = A.shape[0]
    if N:
        A = linalg.matrix_balance(A, permute=False)[0]
    lam = np.linalg.eigvals(A) if N else np.empty(0, complex)
    normA = max(1.0, balanced_norm(A))
    ctol = CLUSTER_RTOL * normA
    stol = STABILITY_RTOL * normA
    assigned = np.zeros(lam.size, bool)
    mult, reasons = {}, []
    for p in PersistentModes(tuple(modes), m or 1).poles:
        idx = np.abs(lam - p) < ctol
        assigned |= idx
        alg = int(idx.sum())
        sv = np.linalg.svd(A - p * np.eye(N), compute_uv=False) if N else np.empty(0)
        geo = int(np.sum(sv < np.sqrt(np.finfo(float).eps) * normA))
        mult[p] = (alg, geo)
        if alg != m or geo != m:
            reasons.append(f"mode {p}: algebraic {alg}, geometric {geo}, expected {m}")
    rest = lam[~assigned]
    bad = rest[rest.real >= -stol]
    if bad.size:
        reasons.append(f"{bad.size} eigenvalue(s) not in the open left half plane")
    stable = rest[rest.real < -stol]
    slowest = float(stable.real.max()) if stable.size else -np.inf
    return SyncReport(not reasons, lam, mult, list(bad), slowest, "; ".join(reasons))


# --------------------------------------------------------------------------
# simulation


def simulate(A_cl, C_cl, x0, T, dt=1e-2):
    """Exact sampled response ``x_{k+1} = expm(A dt) x_k``.

    Returns ``(t, Y)`` with ``Y[k]`` the stacked outputs at ``t[k]``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    A = np.asarray(A_cl, dtype=float)
    C = np.asarray(C_cl, dtype=float)
    steps = int(round(T / dt))
    Phi = linalg.expm(A * dt)
    X = np.empty((steps + 1, A.shape[0]))
    X[0] = np.asarray(x0, dtype=float).ravel()
    for k in range(steps):
        X[k + 1] = Phi @ X[k]
    return np.arange(steps + 1) * dt, X @ C.T


@dataclass
class Disagreement:
    average: np.ndarray
    disagreement: np.ndarray
    tail_norm: float


def disagreement(Y, n, m, tail=0.1):
    """Average output and disagreement ``y - 1 (x) y_ave``; sup norm over the tail."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != n * m:
        raise ShapeError(f"trajectory must have {n * m} columns, got shape {Y.shape}")
    blocks = Y.reshape(Y.shape[0], n, m)
    ave = blocks.mean(axis=1)
    dis = (blocks - ave[:, None, :]).reshape(Y.shape)
    start = int(np.floor((1 - tail) * Y.shape[0]))
    start = min(start, Y.shape[0] - 1)
    return Disagreement(ave, dis, float(np.abs(dis[start:]).max()))
