import functools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kreincount import count_engine as ce
from kreincount.constrained import (AmbiguousKernelError, OperatorPair, admissible_deltas,
                                    constrained_index_matrix, kernel_basis, project_pencil,
                                    proposition1_indices, select_delta, zero_splitting)
from kreincount.oracle import random_trial
from kreincount.pencil_core import Pencil, classify, inertia
from kreincount.wave_operators import nls_grid, nls_operators, nls_soliton


@functools.lru_cache(maxsize=None)
def _nls(sigma):
    prof = nls_soliton(sigma, 1.0, nls_grid(1.0, 512, 20.0))
    return prof, nls_operators(prof)


def _toy():
    return OperatorPair(Lp=np.diag([5.0, 7.0]), Lm=np.diag([0.0, 1.0]), omega_plus=1.0,
                        omega_minus=1.0)


# ---------------------------------------------------------------- kernel_basis

def test_kernel_of_identity_is_empty():
    assert kernel_basis(np.eye(4), tol=1e-9).shape == (4, 0)


def test_kernel_of_diagonal():
    V = kernel_basis(np.diag([0.0, 1.0, 2.0]), tol=1e-9)
    assert V.shape == (3, 1) and abs(abs(V[0, 0]) - 1) < 1e-14


def test_kernel_of_cubic_nls_l_minus():
    prof, ops = _nls(1)
    V = kernel_basis(ops.Lm, tol=1e-6)
    assert V.shape[1] == 1
    phi = prof.values / np.linalg.norm(prof.values)
    assert abs(abs(V[:, 0] @ phi) - 1) < 1e-8
    assert np.min(np.abs(np.linalg.eigvalsh(ops.Lm))) < 1e-5


def test_kernel_weighted_orthonormal():
    rng = np.random.default_rng(0)
    w = rng.uniform(0.5, 2.0, 5)
    S = np.diag([0.0, 0.0, 1.0, 2.0, 3.0])
    Q = np.linalg.qr(rng.standard_normal((5, 5)))[0]
    S = Q @ S @ Q.T
    L = S * np.sqrt(w)[None, :] / np.sqrt(w)[:, None]   # W L symmetric
    V = kernel_basis(L, w, tol=1e-10)
    assert V.shape[1] == 2
    assert np.allclose(V.T @ (w[:, None] * V), np.eye(2), atol=1e-12)
    assert np.linalg.norm(L @ V) < 1e-12


def test_ambiguous_kernel():
    ops = OperatorPair(Lp=np.eye(3), Lm=np.diag([0.0, 5e-10, 1.0]), omega_plus=1.0,
                       omega_minus=1.0)
    with pytest.raises(AmbiguousKernelError):
        project_pencil(ops, tol=1e-10)


# ---------------------------------------------------------------- project_pencil

def test_project_without_kernel():
    Lp = np.array([[2.0, 1.0], [1.0, 3.0]])
    Lm = np.array([[4.0, 1.0], [1.0, -2.0]])
    cp = project_pencil(OperatorPair(Lp, Lm, 1.0, 1.0))
    assert np.allclose(cp.pencil.A, Lp)
    assert np.allclose(cp.pencil.K, np.linalg.inv(Lm))


def test_project_toy():
    cp = project_pencil(_toy())
    assert cp.pencil.dim == 1
    assert np.allclose(cp.pencil.A, [[7.0]]) and np.allclose(cp.pencil.K, [[1.0]])


def test_project_cubic_nls_kappa():
    _, ops = _nls(1)
    cp = project_pencil(ops, tol=1e-10)
    assert inertia(cp.pencil.K) == (0, 0, 511)


# ---------------------------------------------------------------- select_delta

def test_delta_double_negative(diag_pencil):
    sigma, delta = select_delta(diag_pencil, classify(diag_pencil))
    assert sigma == -1 and delta == 0.5


def test_delta_fallback():
    p = Pencil(np.diag([1.0, 2.0]), np.eye(2))
    sigma, delta = select_delta(p, classify(p))
    assert sigma is None and delta == 0.5


def test_delta_cubic_nls():
    _, ops = _nls(1)
    p = project_pencil(ops, 1e-10).pencil
    spec = classify(p, zero_tol=1e-6)
    sigma, delta = select_delta(p, spec, zero_tol=1e-6)
    pos = [pt.gamma.real for pt in spec.points if pt.gamma.real > 1e-6]
    assert sigma is None and delta == pytest.approx(min(pos) / 2, rel=1e-12)


def test_admissible_deltas_inside_gap():
    d1, d2 = admissible_deltas(-2.0, 1.0)
    assert 0 < d2 < d1 < 2.0


# ---------------------------------------------------------------- A(0-)

def test_index_matrix_without_kernel():
    ops = OperatorPair(np.eye(2), 2 * np.eye(2), 1.0, 1.0)
    assert constrained_index_matrix(ops).shape == (0, 0)


def test_index_matrix_toy():
    A0 = constrained_index_matrix(_toy(), mu=-0.001)
    assert A0.shape == (1, 1) and A0[0, 0] == pytest.approx(1 / (-0.001 - 5.0), rel=1e-14)
    assert A0[0, 0] == pytest.approx(-0.19996, abs=1e-5)


def test_index_matrix_cubic_nls_matches_slope():
    prof, ops = _nls(1)
    A0 = constrained_index_matrix(ops)
    # L+ d_omega phi = -phi, so A(0-) = (d_omega phi, phi) / |phi|^2 = slope / (2 |phi|^2)
    expected = 0.5 * prof.slope / prof.norm2
    assert A0[0, 0] == pytest.approx(expected, rel=1e-4)
    assert A0[0, 0] > 0


# ---------------------------------------------------------------- kernel index bookkeeping

def test_prop1_cubic_nls():
    _, ops = _nls(1)
    pi = proposition1_indices(ops)
    assert (pi.n0, pi.z0, pi.z1) == (1, 0, 0) and pi.consistent


def test_prop1_sigma3():
    _, ops = _nls(3)
    pi = proposition1_indices(ops)
    assert pi.n0 == 0 and pi.consistent


def test_prop1_toy():
    pi = proposition1_indices(_toy())
    assert pi.n0 == 0 and pi.A0_eigenvalues[0] < 0


# ---------------------------------------------------------------- zero splitting

def test_zero_splitting_simple_positive():
    p = Pencil(np.diag([0.0, 1.0]), np.eye(2))
    spec = classify(p)
    _, delta = select_delta(p, spec)
    zs = zero_splitting(p, spec, delta)
    assert (zs["n_minus"], zs["n_plus"]) == (0, 1) and zs["pass"] and zs["complete"]


def test_zero_splitting_jordan(jordan_pencil):
    spec = classify(jordan_pencil)
    _, delta = select_delta(jordan_pencil, spec)
    zs = zero_splitting(jordan_pencil, spec, delta)
    assert (zs["n_minus"], zs["n_plus"]) == (1, 0) and zs["pass"]


def test_zero_splitting_no_zero():
    p = Pencil(np.diag([1.0, 2.0]), np.eye(2))
    spec = classify(p)
    zs = zero_splitting(p, spec, 0.5)
    assert (zs["n_minus"], zs["n_plus"]) == (0, 0)


# ---------------------------------------------------------------- properties

@st.composite
def operator_pairs(draw):
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    k = int(rng.integers(0, 3))
    w = rng.uniform(0.5, 2.0, n) if rng.random() < 0.5 else None
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    d = rng.uniform(0.5, 3.0, n) * rng.choice([-1, 1], n)
    d[:k] = 0.0
    Sm = Q @ np.diag(d) @ Q.T
    Sp = rng.standard_normal((n, n))
    Sp = Sp + Sp.T
    if w is not None:
        s = np.sqrt(w)
        Lm, Lp = Sm * s[None, :] / s[:, None], Sp * s[None, :] / s[:, None]
    else:
        Lm, Lp = Sm, Sp
    return OperatorPair(Lp, Lm, 1.0, 1.0, weights=w), int(np.sum(d < 0))


@given(operator_pairs())
def test_kappa_identity(case):
    ops, n_Lm = case
    cp = project_pencil(ops, tol=1e-10)
    assert inertia(cp.pencil.K)[0] == n_Lm == inertia(ops.sym("m"), 1e-10)[0]


@given(operator_pairs())
def test_projector_idempotent_symmetric(case):
    ops, _ = case
    cp = project_pencil(ops, tol=1e-10)
    P = cp.projector
    assert np.linalg.norm(P @ P - P) <= 1e-12
    assert np.linalg.norm(P - P.T) <= 1e-12
    if ops.weights is not None:
        # back in grid coordinates the projector is W-symmetric
        s = np.sqrt(ops.weights)
        Pg = P * s[None, :] / s[:, None]
        WP = ops.weights[:, None] * Pg
        assert np.linalg.norm(WP - WP.T) <= 1e-12


@given(st.integers(0, 2**31 - 1))
def test_delta_invariance(seed):
    p, _ = random_trial(seed)
    spec = classify(p)
    sigma, delta = select_delta(p, spec)
    d1, d2 = admissible_deltas(sigma, delta)
    assert ce.tally(spec, p, d1) == ce.tally(spec, p, d2)
