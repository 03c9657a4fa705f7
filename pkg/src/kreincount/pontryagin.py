"""Indefinite metric ``[x, y] = (K x, y)``: splits, subspace signatures, the
maximal non-positive invariant subspace, and isometry/contraction checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import svds

from .pencil_core import Pencil, PencilError, Spectrum, symmetrize


class RankDeficientError(PencilError):
    pass


class TheoremViolationError(PencilError):
    pass


class SpectrumProximityError(PencilError):
    pass


@dataclass(frozen=True)
class MetricSplit:
    K: np.ndarray
    kappa: int
    P_minus: np.ndarray
    P_plus: np.ndarray
    d_minus: np.ndarray
    d_plus: np.ndarray

    @classmethod
    def from_metric(cls, K: np.ndarray, zero_tol: float = 1e-10) -> "MetricSplit":
        K = symmetrize(K)
        d, V = np.linalg.eigh(K)
        scale = np.max(np.abs(d))
        if np.any(np.abs(d) <= zero_tol * scale):
            raise PencilError("metric K is singular")
        neg = d < 0
        return cls(K=K, kappa=int(np.sum(neg)), P_minus=V[:, neg], P_plus=V[:, ~neg],
                   d_minus=d[neg], d_plus=d[~neg])


@dataclass(frozen=True)
class Subspace:
    basis: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.basis)
        if B.ndim != 2:
            raise ValueError("basis must be a matrix of columns")
        if B.shape[1]:
            s = np.linalg.svd(B, compute_uv=False)
            if s[-1] <= 1e-10 * s[0]:
                raise RankDeficientError(
                    f"basis is rank deficient: sigma_min/sigma_max = {s[-1] / s[0]:.3e}")
        object.__setattr__(self, "basis", B)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def gram_signature(S: Subspace, m: MetricSplit, tol: float = 1e-9) -> Tuple[int, int, int]:
    """Inertia of the Hermitian Gram matrix ``B^H K B``, zero threshold relative to ``|K| |B|^2``."""
    B = S.basis
    if S.dim == 0:
        return 0, 0, 0
    G = B.conj().T @ m.K @ B
    G = 0.5 * (G + G.conj().T)
    ev = np.linalg.eigvalsh(G)
    normK = max(np.max(np.abs(m.d_minus), initial=0.0), np.max(np.abs(m.d_plus), initial=0.0))
    thr = tol * normK * np.linalg.norm(B, 2) ** 2
    return int(np.sum(ev < -thr)), int(np.sum(np.abs(ev) <= thr)), int(np.sum(ev > thr))


def shifted_operator(p: Pencil, delta: float) -> np.ndarray:
    """``T = (A + delta K)^{-1} K``, self-adjoint in ``[., .]``."""
    return sla.solve(p.A + delta * p.K, p.K)


def _generalized_eigenspace(T: np.ndarray, gamma: complex, m: int) -> np.ndarray:
    M = np.linalg.matrix_power(T - gamma * np.eye(T.shape[0]), m)
    _, s, vh = np.linalg.svd(M)
    return vh[-m:].conj().T


def _point_contribution(p: Pencil, pt, Kinv_A: np.ndarray) -> Optional[np.ndarray]:
    g = complex(pt.gamma)
    if g.imag > 0:
        if pt.chain.shape[1] == pt.alg_mult:
            return pt.chain
        return _generalized_eigenspace(Kinv_A, g, pt.alg_mult)
    if g.imag < 0 or not pt.krein_nn:
        return None
    # chains keep f_1 first; semi-simple eigenspaces are stored negative-first
    return pt.chain[:, :pt.krein_nn]


def _refine(p: Pencil, F: np.ndarray, gamma: complex, steps: int = 2) -> np.ndarray:
    """Shifted inverse iteration ``F <- (A - s K)^{-1} K F`` with ``s`` next to ``gamma``.

    The iteration is a function of ``K^{-1} A`` and so keeps every invariant
    subspace; it only removes eigensolver noise from the basis.
    """
    s = gamma + 1e-7 * (1.0 + abs(gamma))
    if gamma.imag == 0:
        s = s.real
    M = p.A - s * p.K
    try:
        lu = sla.lu_factor(M)
    except (np.linalg.LinAlgError, ValueError):
        return F
    for _ in range(steps):
        G = sla.lu_solve(lu, p.K @ F)
        if not np.all(np.isfinite(G)):
            return F
        F, _ = np.linalg.qr(G)
    return F


def maximal_nonpositive_subspace(p: Pencil, spec: Spectrum) -> Subspace:
    """Non-positive ``K^{-1} A``-invariant subspace of dimension ``kappa``.

    Real points contribute their ``krein_nn`` leading chain or eigenspace
    vectors; each upper-half complex point contributes its whole
    generalized eigenspace, which is neutral.
    """
    m = MetricSplit.from_metric(p.K)
    Kinv_A = sla.solve(p.K, p.A)
    cols: List[np.ndarray] = []
    for pt in spec.points:
        F = _point_contribution(p, pt, Kinv_A)
        if F is None:
            continue
        # a partial Jordan chain is not a spectral subspace; inverse
        # iteration would rotate it toward the chain's end
        if pt.is_jordan and F.shape[1] < pt.alg_mult:
            cols.append(F)
        else:
            cols.append(_refine(p, F, complex(pt.gamma)))
    n = p.dim
    B = np.hstack(cols) if cols else np.zeros((n, 0))
    if B.shape[1] != m.kappa:
        raise TheoremViolationError(
            f"assembled non-positive subspace has dimension {B.shape[1]}, kappa = {m.kappa}")
    if not any(np.iscomplexobj(c) for c in cols):
        B = B.real
    return Subspace(B)


def invariance_residual(p: Pencil, S: Subspace, delta: float,
                        T: Optional[np.ndarray] = None) -> float:
    """``|T Q - Q C| / |T|`` with ``Q`` an orthonormal basis of ``S`` and ``C`` least squares."""
    if S.dim == 0:
        return 0.0
    T = shifted_operator(p, delta) if T is None else T
    Q, _ = np.linalg.qr(S.basis)
    TQ = T @ Q
    C = Q.conj().T @ TQ
    return float(np.linalg.norm(TQ - Q @ C, 2) / _norm2(T))


def _norm2(M: np.ndarray) -> float:
    """Spectral norm; Lanczos estimate for large matrices."""
    if min(M.shape) <= 200:
        return float(np.linalg.norm(M, 2))
    return float(svds(M, k=1, return_singular_vectors=False, random_state=0)[0])


def cayley_isometry_residual(p: Pencil, delta: float, z: complex = 0.3 + 1j,
                             trial_count: int = 100, seed: int = 0,
                             proximity: float = 1e-8, T: Optional[np.ndarray] = None,
                             T_eigenvalues: Optional[np.ndarray] = None) -> float:
    """``max |[Ug, Ug] - [g, g]| / (|g|^2 |K|)`` over random complex ``g``,
    ``U = (T - conj z)(T - z)^{-1}``."""
    if z.imag <= 0:
        raise ValueError("z must lie in the upper half plane")
    T = shifted_operator(p, delta) if T is None else T
    ev = np.linalg.eigvals(T) if T_eigenvalues is None else T_eigenvalues
    if np.min(np.abs(ev - z)) <= proximity:
        raise SpectrumProximityError(f"z = {z} is within {proximity:g} of the spectrum of T")
    n = p.dim
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, trial_count)) + 1j * rng.standard_normal((n, trial_count))
    # U g without forming U: solve (T - z) y = g, then apply (T - conj z)
    Y = sla.solve(T - z * np.eye(n), G)
    UG = T @ Y - np.conj(z) * Y
    K = p.K
    before = np.einsum("ij,ij->j", G.conj(), K @ G).real
    after = np.einsum("ij,ij->j", UG.conj(), K @ UG).real
    scale = np.sum(np.abs(G) ** 2, axis=0) * p.norm_K
    return float(np.max(np.abs(after - before) / scale))


def contraction_witness(S: Subspace, m: MetricSplit) -> float:
    """Norm of the map ``x- -> x+`` whose graph is ``S``, in coordinates where
    the metric is ``-I`` on the negative part and ``+I`` on the positive part."""
    if S.dim != m.kappa:
        raise ValueError(f"subspace dimension {S.dim} differs from kappa = {m.kappa}")
    if m.kappa == 0:
        return 0.0
    Ym = np.sqrt(-m.d_minus)[:, None] * (m.P_minus.T @ S.basis)
    Yp = np.sqrt(m.d_plus)[:, None] * (m.P_plus.T @ S.basis)
    s = np.linalg.svd(Ym, compute_uv=False)
    if s[-1] <= 1e-10 * max(s[0], 1e-300):
        raise RankDeficientError("projection of the subspace onto the negative part is singular")
    X = np.linalg.solve(Ym.T, Yp.T).T
    return float(np.linalg.norm(X, 2)) if X.size else 0.0


def self_adjointness_defect(p: Pencil, delta: float, T: Optional[np.ndarray] = None) -> float:
    """``|K T - T^T K| / (|K| |T|)`` for ``T = (A + delta K)^{-1} K``, Frobenius norms."""
    T = shifted_operator(p, delta) if T is None else T
    K = p.K
    KT = K @ T
    return float(np.linalg.norm(KT - KT.T) / (np.linalg.norm(K) * np.linalg.norm(T)))


def pontryagin_checks(p: Pencil, spec: Spectrum, delta: float, z: complex = 0.3 + 1j,
                      trial_count: int = 100, seed: int = 0) -> dict:
    """All Pontryagin-space checks for one pencil, as plain numbers."""
    m = MetricSplit.from_metric(p.K)
    S = maximal_nonpositive_subspace(p, spec)
    sig = gram_signature(S, m)
    T = shifted_operator(p, delta)
    inv = invariance_residual(p, S, delta, T)
    cw = contraction_witness(S, m)
    # T has eigenvalues 1 / (gamma + delta); keep the probe point off them
    T_ev = 1.0 / (np.asarray(spec.raw_eigenvalues) + delta)
    zz = z
    for k in range(20):
        if np.min(np.abs(T_ev - zz)) > 1e-6 * max(1.0, np.max(np.abs(T_ev))):
            break
        zz = z.real + 1j * z.imag * (1.5 + 0.37 * k)
    cay = cayley_isometry_residual(p, delta, zz, trial_count, seed, T=T, T_eigenvalues=T_ev)
    return {
        "kappa": m.kappa, "dim": S.dim, "gram_signature": list(sig),
        "invariance_residual": inv, "contraction_witness": cw,
        "cayley_residual": cay, "cayley_z": [zz.real, zz.imag],
        "self_adjointness_defect": self_adjointness_defect(p, delta, T),
        "pass": bool(S.dim == m.kappa and sig[2] == 0 and inv <= 1e-7
                     and cw <= 1 + 1e-8 and cay <= 1e-9),
    }
