"""Numerical range, sectoriality and phases of complex square matrices.

The phases of a semi-sectorial matrix ``C`` are the angles of the unitary
diagonal factor in a congruence ``C = T^* D T``.  For a sectorial matrix they
are obtained from any rotation ``gamma`` for which ``Herm(exp(-j gamma) C)`` is
positive definite: writing ``exp(-j gamma) C = H + jS`` with ``H`` and ``S``
Hermitian, the phases are ``gamma + arctan(eig(H^{-1/2} S H^{-1/2}))``.

Singular semi-sectorial matrices are compressed onto the orthogonal
complement of their kernel; nonsingular semi-sectorial matrices whose
numerical range touches the origin get their boundary phases
``theta0 +/- pi/2`` from the null space of the Hermitian part at the
supporting rotation ``theta0``.
"""

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .errors import (
    NotEssentiallySemiSectorialError,
    NotSemiSectorialError,
    NumericalDegeneracyError,
    PreconditionError,
    ShapeError,
)

__all__ = [
    "Kind", "Sectoriality", "PhaseProfile", "EssentialPhaseResult",
    "as_matrix", "herm", "default_tol", "support", "min_support",
    "classify", "phases", "compress", "product_angle_bounds",
    "kron_phases", "essential_phase", "wrap_angle",
]

GRID_POINTS = 720
# relative threshold for eigenvalues of the Hermitian part treated as zero
# at the supporting rotation of a boundary (semi-sectorial) matrix
_NULL_RTOL = 1e-7
_KERNEL_ANGLE_TOL = 1e-6


class Kind(str, enum.Enum):
    SECTORIAL = "sectorial"
    QUASI_SECTORIAL = "quasi-sectorial"
    SEMI_SECTORIAL = "semi-sectorial"
    NOT_SEMI_SECTORIAL = "not-semi-sectorial"

    @property
    def is_semi(self):
        return self is not Kind.NOT_SEMI_SECTORIAL


@dataclass(frozen=True)
class Sectoriality:
    """Classification of a matrix by the position of 0 relative to W(C).

    ``margin`` is ``max_theta lambda_min(Herm(exp(-j theta) C))``, positive
    exactly when the matrix is sectorial; ``angle`` is the maximizing
    rotation.
    """

    kind: Kind
    margin: float
    rank: int
    angle: float


@dataclass(frozen=True)
class PhaseProfile:
    phases: np.ndarray
    center: float
    kind: Kind
    rank: int
    margin: float = float("nan")
    boundary_detected: bool = False

    @property
    def upper(self):
        return float(self.phases[0]) if self.phases.size else self.center

    @property
    def lower(self):
        return float(self.phases[-1]) if self.phases.size else self.center

    @property
    def spread(self):
        return self.upper - self.lower

    def shifted(self, delta):
        """Same profile on another branch (all phases moved by ``delta``)."""
        return replace(self, phases=self.phases + delta, center=self.center + delta)


@dataclass(frozen=True)
class EssentialPhaseResult:
    value: float
    scaling: np.ndarray
    exact: bool
    evaluations: int = 0


def as_matrix(C):
    C = np.asarray(C, dtype=complex)
    if C.ndim == 0:
        C = C.reshape(1, 1)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] == 0:
        raise ShapeError(f"expected a nonempty square matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ShapeError("matrix has non-finite entries")
    return C


def herm(X):
    return (X + X.conj().T) / 2


def default_tol(C):
    return 1e-9 * max(np.linalg.norm(C), np.finfo(float).tiny)


def wrap_angle(a):
    """Map an angle into (-pi, pi]."""
    return float(np.pi - np.mod(np.pi - a, 2 * np.pi))


def _principal(phi):
    center = (phi[0] + phi[-1]) / 2 if phi.size else 0.0
    return phi + (wrap_angle(center) - center)


def support(C, theta):
    """Support function of the numerical range in direction ``theta``.

    Returns ``lambda_max(Herm(exp(-j theta) C))`` = ``max Re(exp(-j theta) w)``
    over ``w`` in W(C).
    """
    C = as_matrix(C)
    return float(np.linalg.eigvalsh(herm(np.exp(-1j * theta) * C))[-1])


def min_support(C, theta):
    """``lambda_min(Herm(exp(-j theta) C))``; positive iff W(C) avoids the closed half plane."""
    C = as_matrix(C)
    return float(np.linalg.eigvalsh(herm(np.exp(-1j * theta) * C))[0])


def _rotation_curve(C):
    H = herm(C)
    S = herm(-1j * C)

    def curve(theta):
        theta = np.atleast_1d(theta)
        mats = np.cos(theta)[:, None, None] * H + np.sin(theta)[:, None, None] * S
        return np.linalg.eigvalsh(mats)[:, 0]

    return curve, H, S


def _zoom_max(curve, a, b, xtol=1e-13, points=33):
    """Maximize a batched scalar function on [a, b] by repeated grid zooming."""
    best_t, best_v = a, -np.inf
    while True:
        ts = np.linspace(a, b, points)
        vs = curve(ts)
        i = int(np.argmax(vs))
        if vs[i] > best_v:
            best_t, best_v = float(ts[i]), float(vs[i])
        h = ts[1] - ts[0]
        if h <= xtol:
            return best_t, best_v
        a, b = best_t - h, best_t + h


def _best_rotation(C):
    """Maximize ``lambda_min(Herm(exp(-j theta) C))`` over theta."""
    curve, H, S = _rotation_curve(C)
    grid = np.linspace(0, 2 * np.pi, GRID_POINTS, endpoint=False)
    vals = curve(grid)
    i = int(np.argmax(vals))
    h = grid[1] - grid[0]
    theta, val = _zoom_max(curve, grid[i] - h, grid[i] + h)
    if vals[i] > val:
        theta, val = grid[i], float(vals[i])

    # smooth maximum: polish on the derivative of the (simple) smallest eigenvalue
    def slope(t):
        w, V = np.linalg.eigh(np.cos(t) * H + np.sin(t) * S)
        x = V[:, 0]
        return float(np.real(x.conj() @ (np.cos(t) * S - np.sin(t) * H) @ x)), w

    try:
        lo, hi = theta - 1e-6, theta + 1e-6
        (s_lo, w_lo), (s_hi, _) = slope(lo), slope(hi)
        gap = w_lo[1] - w_lo[0] if w_lo.size > 1 else np.inf
        if s_lo > 0 > s_hi and gap > 1e-6 * max(1.0, abs(w_lo[-1])):
            from scipy.optimize import brentq

            t = brentq(lambda t: slope(t)[0], lo, hi, xtol=1e-15)
            v = float(curve(t)[0])
            if v >= val - 16 * np.finfo(float).eps * max(1.0, np.linalg.norm(H) + np.linalg.norm(S)):
                theta, val = t, v
    except (ValueError, np.linalg.LinAlgError):
        pass
    return float(np.mod(theta, 2 * np.pi)), float(val)


def _range_basis(C, tol):
    """Orthonormal basis of (ker C)^perp and the rank; checks ker C = ker C^*."""
    U, s, Vh = np.linalg.svd(C)
    r = int(np.sum(s > tol))
    n = C.shape[0]
    if r == n:
        return np.eye(n, dtype=complex), r
    V = Vh.conj().T
    # principal angles between ker C (V[:, r:]) and ker C^* (U[:, r:])
    overlap = np.linalg.norm(U[:, :r].conj().T @ V[:, r:], 2) if r else 0.0
    if overlap > _KERNEL_ANGLE_TOL:
        raise NumericalDegeneracyError(
            f"ker C differs from ker C^* (overlap {overlap:.3g}); "
            "0 is not a normal eigenvalue")
    return V[:, :r], r


def classify(C, tol=None):
    """Classify ``C`` as sectorial, quasi-sectorial, semi-sectorial or neither."""
    C = as_matrix(C)
    tol = default_tol(C) if tol is None else tol
    if tol <= 0:
        raise ValueError("tol must be positive")
    if np.linalg.norm(C) == 0:
        return Sectoriality(Kind.QUASI_SECTORIAL, 0.0, 0, 0.0)
    theta, margin = _best_rotation(C)
    rank = int(np.linalg.matrix_rank(C, tol=tol))
    if margin > tol:
        return Sectoriality(Kind.SECTORIAL, margin, rank, theta)
    if margin < -tol:
        return Sectoriality(Kind.NOT_SEMI_SECTORIAL, margin, rank, theta)
    kind = Kind.SEMI_SECTORIAL
    if rank < C.shape[0]:
        try:
            X, rank = _range_basis(C, tol)
        except NumericalDegeneracyError:
            return Sectoriality(kind, margin, rank, theta)
        inner = classify(X.conj().T @ C @ X, tol)
        if inner.kind is Kind.SECTORIAL:
            kind = Kind.QUASI_SECTORIAL
    return Sectoriality(kind, margin, rank, theta)


def _sectorial_phases(C, gamma, tol):
    R = np.exp(-1j * gamma) * C
    w, V = np.linalg.eigh(herm(R))
    if w[0] <= tol:
        return None
    Hm = (V / np.sqrt(w)) @ V.conj().T
    mu = np.linalg.eigvalsh(Hm @ herm(-1j * R) @ Hm)
    phi = _principal(np.sort(gamma + np.arctan(mu))[::-1])
    return PhaseProfile(phi, float((phi[0] + phi[-1]) / 2), Kind.SECTORIAL,
                        C.shape[0], float(w[0]))


def _boundary_phases(C, theta0, margin, tol):
    """Phases of a nonsingular matrix whose numerical range has 0 on its boundary."""
    n = C.shape[0]
    scale = np.linalg.norm(C)
    null_tol = max(tol, _NULL_RTOL * scale)
    if np.linalg.norm(herm(np.exp(-1j * theta0) * C)) <= null_tol:
        # rotated Hermitian: the supporting rotation is fixed only modulo pi
        alt = theta0 + np.pi
        if abs(wrap_angle(alt)) < abs(wrap_angle(theta0)):
            theta0 = alt
    theta0 = wrap_angle(theta0)
    R = np.exp(-1j * theta0) * C
    H0, S0 = herm(R), herm(-1j * R)
    w, V = np.linalg.eigh(H0)
    null = w <= null_tol
    N, Rb = V[:, null], V[:, ~null]
    d = N.shape[1]
    s = np.linalg.eigvalsh(N.conj().T @ S0 @ N) if d else np.empty(0)
    p = int(np.sum(s > null_tol))
    q = int(np.sum(s < -null_tol))
    z = d - p - q
    nfinite = n - d - z
    if nfinite < 0:
        raise NumericalDegeneracyError("inconsistent boundary structure")
    if nfinite == 0:
        mu = np.empty(0)
    elif z == 0:
        Snn = N.conj().T @ S0 @ N
        Srn = Rb.conj().T @ S0 @ N
        schur = Rb.conj().T @ S0 @ Rb
        if d:
            schur = schur - Srn @ np.linalg.solve(Snn, Srn.conj().T)
        hr = w[~null]
        mu = np.linalg.eigvalsh(herm(schur / np.sqrt(np.outer(hr, hr))))
    else:
        ab = linalg.eigvals(S0, H0, homogeneous_eigvals=True)
        alpha, beta = ab[0], ab[1]
        finiteness = np.abs(beta) / (np.abs(alpha) + np.abs(beta))
        keep = np.argsort(finiteness)[::-1][:nfinite]
        mu = np.real(alpha[keep] / beta[keep])
    phi = np.concatenate([
        theta0 + np.arctan(mu),
        np.full(p + z, theta0 + np.pi / 2),
        np.full(q + z, theta0 - np.pi / 2),
    ])
    phi = _principal(np.sort(phi)[::-1])
    return PhaseProfile(phi, float((phi[0] + phi[-1]) / 2), Kind.SEMI_SECTORIAL,
                        n, margin, boundary_detected=bool(p + q + z))


def _eigs_surround_origin(C, tol):
    """True when 0 is strictly inside the convex hull of the eigenvalues."""
    lam = np.linalg.eigvals(C)
    lam = lam[np.abs(lam) > tol]
    if lam.size < 2:
        return False
    ang = np.sort(np.angle(lam))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    return bool(gaps.max() < np.pi - 1e-6)


def phases(C, tol=None, hint=None, quick_reject=False):
    """Phases of a semi-sectorial matrix, sorted in descending order.

    Parameters
    ----------
    C : array_like
        Square complex matrix.
    tol : float, optional
        Sectoriality tolerance, default ``1e-9 * ||C||_F``.
    hint : float, optional
        Candidate rotation tried first (e.g. the phase center at a
        neighbouring frequency); it only affects speed.
    quick_reject : bool
        Raise as soon as the eigenvalues alone surround the origin; the
        reported margin is then only an upper bound.

    Returns
    -------
    PhaseProfile
        Principal-branch phases (center in (-pi, pi]).  ``margin`` is the
        smallest eigenvalue of the Hermitian part at the rotation used.

    Raises
    ------
    NotSemiSectorialError
        If 0 lies in the interior of W(C).
    NumericalDegeneracyError
        If ``C`` is singular but its kernel is not that of ``C^*``.
    """
    C = as_matrix(C)
    tol = default_tol(C) if tol is None else tol
    n = C.shape[0]
    if np.linalg.norm(C) == 0:
        return PhaseProfile(np.empty(0), 0.0, Kind.QUASI_SECTORIAL, 0, 0.0)
    candidates = [] if hint is None else [hint]
    tr = np.trace(C)
    if abs(tr) > tol:
        candidates.append(np.angle(tr))
    for g in candidates:
        prof = _sectorial_phases(C, g, tol)
        if prof is not None:
            return prof
    if quick_reject and _eigs_surround_origin(C, tol):
        lam = np.linalg.eigvals(C)
        th = np.linspace(0, 2 * np.pi, GRID_POINTS, endpoint=False)
        bound = float(np.max(np.min(np.real(np.exp(-1j * th)[:, None] * lam[None]), axis=1)))
        raise NotSemiSectorialError(
            f"eigenvalues surround the origin (margin at most {bound:.3g})", bound)
    theta, margin = _best_rotation(C)
    if margin > tol:
        prof = _sectorial_phases(C, theta, tol)
        if prof is not None:
            return prof
    if margin < -tol:
        raise NotSemiSectorialError(
            f"0 is interior to the numerical range (margin {margin:.3g})", margin)
    X, rank = _range_basis(C, tol)
    if rank < n:
        inner = phases(X.conj().T @ C @ X, tol, hint=theta)
        kind = Kind.QUASI_SECTORIAL if inner.kind is Kind.SECTORIAL else Kind.SEMI_SECTORIAL
        return replace(inner, kind=kind, rank=rank, margin=margin)
    return _boundary_phases(C, theta, margin, tol)


def compress(C, X, tol=1e-12):
    """Compression ``X^* C X`` for a full-column-rank ``X``."""
    C = as_matrix(C)
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != C.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows, C is {C.shape[0]}x{C.shape[0]}")
    s = np.linalg.svd(X, compute_uv=False)
    if s.size == 0 or s[-1] <= tol * s[0] or X.shape[1] > X.shape[0]:
        raise ShapeError("X must have full column rank")
    return X.conj().T @ C @ X


def product_angle_bounds(A, B, tol=None):
    """Interval ``[lower(A) + lower(B), upper(A) + upper(B)]``.

    For quasi-sectorial ``A`` and semi-sectorial ``B`` the nonzero
    eigenvalues of ``AB`` have angles in this interval when angles are taken
    within pi of ``center(A) + center(B)``.
    """
    pa = phases(A, tol)
    if pa.kind not in (Kind.SECTORIAL, Kind.QUASI_SECTORIAL):
        raise PreconditionError(f"first factor must be quasi-sectorial, got {pa.kind.value}")
    pb = phases(B, tol)
    return pa.lower + pb.lower, pa.upper + pb.upper


def kron_phases(A, B, tol=None):
    """Phases of ``A (x) B`` as the pairwise sums of the factors' phases."""
    pa, pb = phases(A, tol), phases(B, tol)
    total = pa.spread + pb.spread
    if total > np.pi + 1e-12:
        raise PreconditionError(f"combined phase spread {total:.6g} exceeds pi")
    phi = np.sort(np.add.outer(pa.phases, pb.phases).ravel())[::-1]
    sectorial = pa.kind is Kind.SECTORIAL and pb.kind is Kind.SECTORIAL and total < np.pi
    kind = Kind.SECTORIAL if sectorial else Kind.SEMI_SECTORIAL
    center = float((phi[0] + phi[-1]) / 2) if phi.size else 0.0
    return PhaseProfile(phi, center, kind, pa.rank * pb.rank)


def essential_phase(C, tol=None, restarts=3, seed=0, step=0.5, min_step=1e-6, history=None):
    """Upper bound on the essential (largest) phase by diagonal scaling.

    Minimizes ``upper(D^{-1} C D)`` over ``D = diag(exp(u))`` by coordinate
    descent on ``u`` from ``u = 0`` and ``restarts`` random starts.  Scalings
    that leave the matrix non-semi-sectorial are ranked by their
    sectoriality margin so the descent can walk into the feasible region.
    If ``history`` is a list, every feasible evaluation is appended to it as
    ``(scaling, value)``.
    """
    C = as_matrix(C)
    n = C.shape[0]
    norm = np.linalg.norm(C)
    best = [np.inf, np.ones(n)]
    count = [0]

    def objective(u):
        d = np.exp(u)
        M = C * (d[None, :] / d[:, None])
        count[0] += 1
        try:
            value = phases(M, tol).upper
        except NotSemiSectorialError as exc:
            return np.pi + max(0.0, -exc.margin) / norm
        except NumericalDegeneracyError:
            return 2 * np.pi
        if history is not None:
            history.append((d.copy(), value))
        if value < best[0]:
            best[0], best[1] = value, d.copy()
        return value

    rng = np.random.default_rng(seed)
    starts = [np.zeros(n)] + [np.concatenate([[0.0], rng.normal(size=n - 1)])
                              for _ in range(restarts)]
    for u in starts:
        f = objective(u)
        h = step
        while h > min_step and n > 1:
            improved = False
            for i in range(1, n):
                for sign in (1.0, -1.0):
                    trial = u.copy()
                    trial[i] += sign * h
                    ft = objective(trial)
                    if ft < f - 1e-15:
                        u, f, improved = trial, ft, True
                        break
            if not improved:
                h /= 2
    if not np.isfinite(best[0]):
        raise NotEssentiallySemiSectorialError(
            "no diagonal scaling tried makes the matrix semi-sectorial")
    d = best[1] / best[1][0]
    return EssentialPhaseResult(float(best[0]), d, False, count[0])
