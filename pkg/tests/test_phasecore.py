import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import phase_oracle, sectorial_matrix
from phasesync import phasecore as pc
from phasesync.errors import (
    NotEssentiallySemiSectorialError,
    NotSemiSectorialError,
    PreconditionError,
    ShapeError,
)
from phasesync.phasecore import Kind

seeds = st.integers(0, 2**32 - 1)


# -- support -----------------------------------------------------------------


def test_support_identity():
    assert pc.support(np.eye(2), 0.0) == pytest.approx(1.0)


def test_support_diag_one_j():
    assert pc.support(np.diag([1, 1j]), 0.0) == pytest.approx(1.0)


def test_support_rejects_nonsquare():
    with pytest.raises(ShapeError):
        pc.support(np.ones((2, 3)), 0.0)


@settings(max_examples=100, deadline=None)
@given(seeds, st.floats(0, 2 * np.pi))
def test_support_bounds_spectrum(seed, theta):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    lam = np.linalg.eigvals(C)
    assert pc.support(C, theta) >= np.max(np.real(np.exp(-1j * theta) * lam)) - 1e-10


def test_support_matches_sampled_numerical_range(rng):
    C = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    x = rng.standard_normal((3, 20000)) + 1j * rng.standard_normal((3, 20000))
    x /= np.linalg.norm(x, axis=0)
    w = np.einsum("in,ij,jn->n", x.conj(), C, x)
    for theta in np.linspace(0, 2 * np.pi, 7):
        sampled = np.max(np.real(np.exp(-1j * theta) * w))
        assert sampled <= pc.support(C, theta) + 1e-12
        assert sampled >= pc.support(C, theta) - 0.05


# -- classify ----------------------------------------------------------------


def test_classify_identity():
    assert pc.classify(np.eye(2)).kind is Kind.SECTORIAL


def test_classify_quasi():
    assert pc.classify(np.diag([0.0, 1.0])).kind is Kind.QUASI_SECTORIAL


def test_classify_jordan_is_semi_not_quasi():
    res = pc.classify(np.array([[1.0, 2.0], [0.0, 1.0]]))
    assert res.kind is Kind.SEMI_SECTORIAL
    # W is the unit disk centred at 1: the smallest support is exactly 0
    thetas = np.linspace(0, 2 * np.pi, 4001)
    best = max(-pc.support(-np.array([[1.0, 2.0], [0.0, 1.0]]), t) for t in thetas)
    assert abs(best) < 1e-6
    assert abs(res.margin) < 1e-8


ROOTS3 = np.diag(np.exp(2j * np.pi * np.arange(3) / 3))


def test_classify_not_semi():
    assert pc.classify(ROOTS3).kind is Kind.NOT_SEMI_SECTORIAL


def test_classify_segment_through_zero_is_semi():
    # W(diag(1, -1)) = [-1, 1] has empty interior
    assert pc.classify(np.diag([1.0, -1.0])).kind is Kind.SEMI_SECTORIAL


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_classify_margin_consistent(seed):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    res = pc.classify(C)
    tol = pc.default_tol(C)
    if res.kind is Kind.SECTORIAL:
        assert res.margin > tol
    if res.kind.is_semi:
        assert res.margin >= -tol
    # brute-force max over a fine grid never beats the refined optimum
    th = np.linspace(0, 2 * np.pi, 3000)
    grid = max(-pc.support(-C, t) for t in th[::10])
    assert grid <= res.margin + 1e-9


# -- phases ------------------------------------------------------------------


def test_phases_diag_rotations():
    p = pc.phases(np.diag(np.exp([1j * np.pi / 4, -1j * np.pi / 4])))
    np.testing.assert_allclose(p.phases, [np.pi / 4, -np.pi / 4], atol=1e-10)


def test_phases_identity_plus_skew():
    p = pc.phases(np.eye(2) + 1j * np.diag([1.0, -1.0]))
    np.testing.assert_allclose(p.phases, [np.pi / 4, -np.pi / 4], atol=1e-10)


def test_phases_skew_symmetric():
    p = pc.phases(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    np.testing.assert_allclose(np.sort(np.abs(p.phases)), [np.pi / 2, np.pi / 2], atol=1e-8)
    assert p.upper == pytest.approx(np.pi / 2, abs=1e-8)
    assert p.lower == pytest.approx(-np.pi / 2, abs=1e-8)


def test_phases_jordan_boundary():
    p = pc.phases(np.array([[1.0, 2.0], [0.0, 1.0]]))
    assert p.boundary_detected
    np.testing.assert_allclose(p.phases, [np.pi / 2, -np.pi / 2], atol=1e-6)


def test_phases_quasi_compresses_kernel():
    p = pc.phases(np.diag([0.0, np.exp(0.3j)]))
    assert p.kind is Kind.QUASI_SECTORIAL
    assert p.rank == 1
    np.testing.assert_allclose(p.phases, [0.3], atol=1e-10)


def test_phases_rejects_not_semi():
    with pytest.raises(NotSemiSectorialError):
        pc.phases(ROOTS3)


@settings(max_examples=200, deadline=None)
@given(seeds, st.integers(1, 5), st.floats(-3.0, 3.0))
def test_phases_match_congruence_oracle(seed, n, center):
    rng = np.random.default_rng(seed)
    C, _ = sectorial_matrix(rng, n, spread=2.5, center=center)
    p = pc.phases(C)
    assert p.kind is Kind.SECTORIAL
    assert p.phases.size == n
    assert p.spread < np.pi
    assert p.center == pytest.approx((p.upper + p.lower) / 2, abs=1e-12)
    assert -np.pi < p.center <= np.pi
    np.testing.assert_allclose(p.phases, phase_oracle(C, p.center), atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(seeds, st.floats(-np.pi / 4, np.pi / 4))
def test_phases_rotation_shift(seed, alpha):
    rng = np.random.default_rng(seed)
    C, _ = sectorial_matrix(rng, 3, spread=2.0, center=0.0)
    p0 = pc.phases(C)
    p1 = pc.phases(np.exp(1j * alpha) * C)
    np.testing.assert_allclose(p1.phases, p0.phases + alpha, atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_phases_eigenvalue_angles_inside(seed):
    rng = np.random.default_rng(seed)
    C, _ = sectorial_matrix(rng, 4, spread=2.8, center=rng.uniform(-3, 3))
    p = pc.phases(C)
    ang = p.center + np.angle(np.linalg.eigvals(C) * np.exp(-1j * p.center))
    assert np.all(ang <= p.upper + 1e-8) and np.all(ang >= p.lower - 1e-8)


# -- compression, products, Kronecker ----------------------------------------


def test_compress_identity_selector(rng):
    C, _ = sectorial_matrix(rng, 3)
    np.testing.assert_allclose(pc.compress(C, np.eye(3)), C)


def test_compress_principal_submatrix():
    C = np.diag([np.exp(1j * np.pi / 3), 1.0])
    out = pc.compress(C, np.array([1.0, 0.0]))
    assert out.shape == (1, 1)
    assert out[0, 0] == pytest.approx(np.exp(1j * np.pi / 3))


def test_compress_rank_deficient():
    with pytest.raises(ShapeError):
        pc.compress(np.eye(3), np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]]))


@settings(max_examples=200, deadline=None)
@given(seeds, st.integers(2, 5))
def test_compression_property(seed, n):
    rng = np.random.default_rng(seed)
    C, _ = sectorial_matrix(rng, n, spread=2.8, center=rng.uniform(-3, 3))
    k = int(rng.integers(1, n + 1))
    X = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    pC = pc.phases(C)
    pX = pc.phases(pc.compress(C, X))
    shift = 2 * np.pi * np.round((pC.center - pX.center) / (2 * np.pi))
    assert pX.lower + shift >= pC.lower - 1e-8
    assert pX.upper + shift <= pC.upper + 1e-8


def test_product_bounds_trivial():
    assert pc.product_angle_bounds(np.eye(2), np.eye(2)) == pytest.approx((0.0, 0.0))
    r = np.exp(1j * np.pi / 6) * np.eye(2)
    assert pc.product_angle_bounds(r, r) == pytest.approx((np.pi / 3, np.pi / 3))


def test_product_bounds_requires_quasi():
    J = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(PreconditionError):
        pc.product_angle_bounds(J, np.eye(2))


@settings(max_examples=200, deadline=None)
@given(seeds, st.integers(1, 4))
def test_product_angle_property(seed, n):
    rng = np.random.default_rng(seed)
    A, _ = sectorial_matrix(rng, n, spread=2.0, center=rng.uniform(-1, 1))
    R = rng.standard_normal((n, n))
    B = R @ R.T
    lo, hi = pc.product_angle_bounds(A, B)
    c = pc.phases(A).center + pc.phases(B).center
    lam = np.linalg.eigvals(A @ B)
    lam = lam[np.abs(lam) > 1e-9 * np.max(np.abs(lam))]
    ang = c + np.angle(lam * np.exp(-1j * c))
    assert np.all(ang >= lo - 1e-8) and np.all(ang <= hi + 1e-8)


def test_kron_trivial():
    np.testing.assert_allclose(pc.kron_phases(np.eye(2), np.eye(2)).phases, np.zeros(4), atol=1e-12)
    p = pc.kron_phases(np.diag([np.exp(1j * np.pi / 8), 1.0]), np.eye(2))
    np.testing.assert_allclose(p.phases, [np.pi / 8, np.pi / 8, 0, 0], atol=1e-12)


def test_kron_spread_precondition():
    A = np.diag(np.exp([1.0j, -1.0j]))
    with pytest.raises(PreconditionError):
        pc.kron_phases(A, A)


@settings(max_examples=200, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_kron_property(seed, na, nb):
    rng = np.random.default_rng(seed)
    A, _ = sectorial_matrix(rng, na, spread=1.4)
    B, _ = sectorial_matrix(rng, nb, spread=1.4)
    expected = pc.kron_phases(A, B).phases
    direct = pc.phases(np.kron(A, B)).phases
    np.testing.assert_allclose(direct, expected, atol=1e-8)


# -- essential phase -----------------------------------------------------------


def test_essential_phase_hermitian_psd(rng):
    R = rng.standard_normal((3, 3))
    res = pc.essential_phase(R @ R.T + np.eye(3))
    assert res.value == pytest.approx(0.0, abs=1e-9)
    assert not res.exact


def test_essential_phase_diagonal():
    res = pc.essential_phase(np.diag(np.exp([1j * np.pi / 5, -1j * np.pi / 7])))
    assert res.value == pytest.approx(np.pi / 5, abs=1e-9)


def test_essential_phase_failure():
    with pytest.raises(NotEssentiallySemiSectorialError):
        pc.essential_phase(ROOTS3)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_essential_phase_upper_bound(seed):
    rng = np.random.default_rng(seed)
    C, _ = sectorial_matrix(rng, 3, spread=2.0)
    history = []
    res = pc.essential_phase(C, restarts=1, history=history)
    assert res.value <= pc.phases(C).upper + 1e-12
    assert all(res.value <= v + 1e-12 for _, v in history)
    d = res.scaling
    assert pc.phases(C * (d[None, :] / d[:, None])).upper == pytest.approx(res.value, abs=1e-9)
