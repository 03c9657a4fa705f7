import numpy as np
import pytest
from hypothesis import given, strategies as st

from kreincount.constrained import select_delta
from kreincount.oracle import random_pencil, random_spd_pencil, random_trial
from kreincount.pencil_core import Pencil, classify
from kreincount.pontryagin import (MetricSplit, RankDeficientError, SpectrumProximityError,
                                   Subspace, cayley_isometry_residual, contraction_witness,
                                   gram_signature, invariance_residual,
                                   maximal_nonpositive_subspace, pontryagin_checks,
                                   self_adjointness_defect)

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def _metric(seed, dim=6):
    return random_pencil(dim, seed=seed).K


# ---------------------------------------------------------------- gram_signature

def test_signature_of_negative_part():
    m = MetricSplit.from_metric(_metric(1))
    assert gram_signature(Subspace(m.P_minus), m) == (m.kappa, 0, 0)


def test_signature_of_positive_part():
    K = _metric(2)
    m = MetricSplit.from_metric(K)
    assert gram_signature(Subspace(m.P_plus), m) == (0, 0, K.shape[0] - m.kappa)


def test_signature_of_neutral_vector():
    m = MetricSplit.from_metric(SWAP)
    assert gram_signature(Subspace(np.array([[1.0], [0.0]])), m) == (0, 1, 0)


def test_rank_deficient_basis():
    with pytest.raises(RankDeficientError):
        Subspace(np.array([[1.0, 2.0], [1.0, 2.0]]))


# ---------------------------------------------------------------- maximal subspace

def test_positive_metric_gives_empty_subspace():
    p = random_spd_pencil(5, seed=4)
    S = maximal_nonpositive_subspace(p, classify(p))
    assert S.dim == 0 == MetricSplit.from_metric(p.K).kappa


def test_complex_example_subspace(complex_pencil):
    spec = classify(complex_pencil)
    S = maximal_nonpositive_subspace(complex_pencil, spec)
    m = MetricSplit.from_metric(complex_pencil.K)
    assert m.kappa == 1 and S.dim == 1
    assert gram_signature(S, m)[2] == 0


def test_jordan_example_subspace(jordan_pencil):
    spec = classify(jordan_pencil)
    S = maximal_nonpositive_subspace(jordan_pencil, spec)
    assert S.dim == 1
    f = S.basis[:, 0]
    # span{f1} = span{e1}
    assert abs(abs(f[0]) - np.linalg.norm(f)) < 1e-10


# ---------------------------------------------------------------- Cayley transform

def test_cayley_scalar_operator():
    K = _metric(3, 4)
    p = Pencil(K.copy(), K)
    assert cayley_isometry_residual(p, 0.5, 0.2 + 0.7j, 50, 0) <= 1e-14


def test_cayley_jordan_example(jordan_pencil):
    assert cayley_isometry_residual(jordan_pencil, 1.0, 1j, 100, 0) <= 1e-10


def test_cayley_rejects_spectral_point():
    K = np.eye(2)
    p = Pencil(np.eye(2), K)
    # T = I / 2 has eigenvalue 0.5; z = 0.5 + 1e-10 i is too close
    with pytest.raises(SpectrumProximityError):
        cayley_isometry_residual(p, 1.0, 0.5 + 1e-10j, 5, 0)


def test_cayley_lower_half_plane_rejected(jordan_pencil):
    with pytest.raises(ValueError):
        cayley_isometry_residual(jordan_pencil, 1.0, -1j)


@given(st.integers(0, 2**31 - 1))
def test_cayley_random_8x8(seed):
    p = random_pencil(8, seed=seed)
    spec = classify(p)
    _, delta = select_delta(p, spec)
    T_ev = 1.0 / (spec.raw_eigenvalues + delta)
    if np.min(np.abs(T_ev - (0.3 + 1j))) <= 1e-6:
        return
    assert cayley_isometry_residual(p, delta, 0.3 + 1j, 100, seed) <= 1e-9


# ---------------------------------------------------------------- contraction witness

def test_contraction_of_negative_part():
    m = MetricSplit.from_metric(_metric(5))
    assert contraction_witness(Subspace(m.P_minus), m) <= 1e-14


def test_contraction_of_neutral_line():
    m = MetricSplit.from_metric(SWAP)
    w = contraction_witness(Subspace(np.array([[1.0], [0.0]])), m)
    assert abs(w - 1.0) < 1e-12


@given(st.integers(0, 2**31 - 1))
def test_contraction_random_6x6(seed):
    p = random_pencil(6, seed=seed)
    S = maximal_nonpositive_subspace(p, classify(p))
    m = MetricSplit.from_metric(p.K)
    assert contraction_witness(S, m) <= 1 + 1e-8


# ---------------------------------------------------------------- properties

pencils = st.integers(0, 2**31 - 1).map(lambda s: random_trial(s)[0])


@given(pencils)
def test_assembled_subspace_properties(p):
    spec = classify(p)
    _, delta = select_delta(p, spec)
    m = MetricSplit.from_metric(p.K)
    S = maximal_nonpositive_subspace(p, spec)
    assert S.dim == m.kappa
    assert gram_signature(S, m)[2] == 0
    assert invariance_residual(p, S, delta) <= 1e-7


@given(pencils)
def test_indefinite_cauchy_schwarz(p):
    S = maximal_nonpositive_subspace(p, classify(p))
    B = S.basis
    G = B.conj().T @ p.K @ B
    scale = p.norm_K * np.max(np.linalg.norm(B, axis=0), initial=0.0) ** 2
    for i in range(S.dim):
        for j in range(S.dim):
            lhs = abs(G[i, j]) ** 2
            rhs = G[i, i].real * G[j, j].real
            assert lhs <= rhs + 1e-10 * scale ** 2


@given(pencils)
def test_maximality(p):
    m = MetricSplit.from_metric(p.K)
    if m.P_plus.shape[1] == 0:
        return
    S = maximal_nonpositive_subspace(p, classify(p))
    # B^H K B has kappa non-positive eigenvalues at most, so one more column
    # with a positive direction must show up as n_pos >= 1
    v = m.P_plus[:, :1]
    B = np.hstack([S.basis, v]) if S.dim else v
    try:
        ext = Subspace(B)
    except RankDeficientError:
        return
    assert gram_signature(ext, m)[2] >= 1


@given(pencils)
def test_self_adjointness(p):
    spec = classify(p)
    _, delta = select_delta(p, spec)
    assert self_adjointness_defect(p, delta) <= 1e-10


def test_pontryagin_checks_jordan(jordan_pencil):
    spec = classify(jordan_pencil)
    _, delta = select_delta(jordan_pencil, spec)
    res = pontryagin_checks(jordan_pencil, spec, delta)
    assert res["pass"] and res["kappa"] == res["dim"] == 1
