"""Dense generalized eigenvalue pencils ``A u = gamma K u``.

The pencil is solved through the standard eigenproblem of ``T = K^{-1} A``.
Eigenvalues are clustered, Jordan chains are extracted for defective real
points, and every point receives its Krein contribution to the maximal
non-negative / non-positive subspaces of the indefinite metric ``(K., .)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components


class PencilError(Exception):
    """Base class for numerical failures in the pencil machinery."""


class SingularMetricError(PencilError):
    pass


class EigensolverError(PencilError):
    pass


class UnsupportedStructureError(PencilError):
    pass


class DegenerateChainError(PencilError):
    pass


class ChainResidualError(PencilError):
    pass


def symmetrize(M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix must be square, got shape {M.shape}")
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class Pencil:
    """Pair of symmetric matrices with essential-spectrum thresholds.

    ``omega_plus`` and ``omega_minus`` emulate the lower edges of the
    continuous spectra of ``L+`` and ``L-``; isolated positive eigenvalues
    of the pencil lie below ``omega_plus * omega_minus``.
    """

    A: np.ndarray
    K: np.ndarray
    omega_plus: float = 0.0
    omega_minus: float = 1.0

    def __post_init__(self):
        A = symmetrize(self.A)
        K = symmetrize(self.K)
        if A.shape != K.shape:
            raise ValueError(f"A and K differ in shape: {A.shape} vs {K.shape}")
        if self.omega_minus <= 0 or self.omega_plus < 0:
            raise ValueError("thresholds need omega_minus > 0 and omega_plus >= 0")
        s = np.linalg.svd(K, compute_uv=False)
        if s[-1] <= 1e-10 * s[0]:
            raise SingularMetricError(
                f"K is numerically singular: sigma_min/sigma_max = {s[-1] / s[0]:.3e}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "K", K)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @cached_property
    def norm_A(self) -> float:
        # symmetric, so the spectral norm is the largest |eigenvalue|
        return float(np.max(np.abs(sla.eigvalsh(self.A)), initial=0.0))

    @cached_property
    def norm_K(self) -> float:
        return float(np.max(np.abs(sla.eigvalsh(self.K)), initial=0.0))

    @property
    def band_edge(self) -> float:
        """Lower edge ``omega_plus * omega_minus`` of the emulated continuum in gamma."""
        return self.omega_plus * self.omega_minus


@dataclass
class EigenPoint:
    gamma: complex
    alg_mult: int
    geom_mult: int
    chain: np.ndarray
    krein_np: Optional[int] = None
    krein_nn: Optional[int] = None
    is_embedded: bool = False
    in_band: bool = False
    chain_sign: int = 0
    residual: float = 0.0
    members: Tuple[complex, ...] = ()

    @property
    def is_real(self) -> bool:
        return np.imag(self.gamma) == 0.0

    @property
    def is_jordan(self) -> bool:
        return self.alg_mult > self.geom_mult

    @property
    def classified(self) -> bool:
        return self.krein_np is not None and self.krein_nn is not None


@dataclass
class Spectrum:
    points: List[EigenPoint]
    total_dim: int
    residual: float
    raw_eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def real_points(self):
        return [pt for pt in self.points if pt.is_real]

    def sorted(self) -> "Spectrum":
        key = lambda pt: (np.real(pt.gamma), np.imag(pt.gamma))
        return replace(self, points=sorted(self.points, key=key))


def inertia(M, zero_tol: float = 1e-9) -> Tuple[int, int, int]:
    """Counts of negative, zero and positive eigenvalues of a symmetric matrix.

    The zero band is ``[-zero_tol * |M|_2, zero_tol * |M|_2]``.
    """
    M = symmetrize(M)
    if M.size == 0:
        return (0, 0, 0)
    try:
        ev = sla.eigvalsh(M)
    except (np.linalg.LinAlgError, ValueError) as exc:
        cond = np.linalg.cond(M)
        raise EigensolverError(f"symmetric eigensolve failed (cond = {cond:.3e}): {exc}")
    scale = np.max(np.abs(ev))
    thr = zero_tol * scale
    n_neg = int(np.sum(ev < -thr))
    n_pos = int(np.sum(ev > thr))
    return (n_neg, M.shape[0] - n_neg - n_pos, n_pos)


def _components(vals: np.ndarray, tol: float) -> List[np.ndarray]:
    n = len(vals)
    if n == 0:
        return []
    dist = np.abs(vals[:, None] - vals[None, :])
    scale = 1.0 + np.maximum(np.abs(vals)[:, None], np.abs(vals)[None, :])
    ncomp, labels = connected_components(dist <= tol * scale, directed=False)
    return [np.flatnonzero(labels == k) for k in range(ncomp)]


# A Jordan block of size m <= 6 perturbed by roundoff has eigenvectors at
# angles near eps^(1/m) > 1e-3, so a well-conditioned set cannot come from one.
_SEMISIMPLE_SMIN = 1e-2


def _independent(V: np.ndarray) -> bool:
    """True when the normalized columns of ``V`` are well conditioned."""
    if V.shape[1] < 2:
        return True
    V = V / np.linalg.norm(V, axis=0)
    # the threshold is far above the Gram-matrix roundoff floor
    ev = np.linalg.eigvalsh(V.conj().T @ V)
    return bool(np.sqrt(max(ev[0], 0.0)) > _SEMISIMPLE_SMIN)


def _is_defective_group(T: np.ndarray, mu: complex, m: int, tol: float,
                        V: Optional[np.ndarray] = None) -> bool:
    """True when ``(T - mu)^m`` has ``m`` negligible singular values.

    Distinct eigenvalues at relative separation ``d`` leave singular values
    of order ``d^m``; a perturbed Jordan block leaves roundoff only.  A well
    conditioned eigenvector set ``V`` settles the question without the
    dense factorization.
    """
    if V is not None and _independent(V):
        return False
    S = T - mu * np.eye(T.shape[0])
    nrm = np.linalg.norm(S, 2)
    P = np.linalg.matrix_power(S / nrm, m)
    s = np.linalg.svd(P, compute_uv=False)
    return bool(np.all(s[-m:] <= tol))


def _group_eigenvalues(T, vals, cluster_tol, jordan_radius, jordan_tol, max_jordan, vecs=None):
    groups = _components(vals, cluster_tol)
    if jordan_radius <= 0 or len(groups) < 2:
        return groups
    centers = np.array([vals[g].mean() for g in groups])
    merged = []
    for cand in _components(centers, jordan_radius):
        if len(cand) == 1:
            merged.append(groups[cand[0]])
            continue
        idx = np.concatenate([groups[c] for c in cand])
        if len(idx) <= max_jordan and _is_defective_group(
                T, vals[idx].mean(), len(idx), jordan_tol,
                None if vecs is None else vecs[:, idx]):
            merged.append(idx)
        else:
            merged.extend(groups[c] for c in cand)
    return merged


def _null_space(M: np.ndarray, thr: float, max_dim: int) -> np.ndarray:
    _, s, vh = np.linalg.svd(M)
    k = int(np.sum(s <= thr))
    k = max(1, min(k, max_dim))
    return vh[-k:].conj().T


def solve_pencil(p: Pencil, cluster_tol: float = 1e-7, zero_tol: float = 1e-12,
                 jordan_radius: float = 1e-3, jordan_tol: float = 1e-10,
                 max_jordan: int = 6) -> Spectrum:
    """All eigenvalues of the pencil, clustered into EigenPoints.

    Eigenvalues closer than ``cluster_tol * (1 + |gamma|)`` share a point.
    Clusters closer than ``jordan_radius * (1 + |gamma|)`` are merged when
    they are the roundoff splitting of a Jordan block.  Cluster means with
    imaginary part below the cluster tolerance are snapped to the real
    axis, and real means with ``|gamma| <= zero_tol`` are snapped to zero.
    """
    A, K = p.A, p.K
    try:
        T = sla.solve(K, A, assume_a="sym")
        vals, vecs = sla.eig(T)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(f"eigensolve of K^-1 A failed: {exc}")
    if not np.all(np.isfinite(vals)):
        raise EigensolverError("non-finite eigenvalues returned by the eigensolver")

    groups = _group_eigenvalues(T, vals, cluster_tol, jordan_radius, jordan_tol, max_jordan, vecs)
    normK = p.norm_K
    points: List[EigenPoint] = []
    for g in groups:
        mu = complex(vals[g].mean())
        tol = cluster_tol * (1.0 + abs(mu))
        if abs(mu.imag) <= tol:
            mu = complex(mu.real, 0.0)
            if abs(mu.real) <= zero_tol:
                mu = 0j
        m = len(g)
        if m == 1:
            f = vecs[:, g[0]]
            if mu.imag == 0.0:
                f = _realify(f)
            F = (f / np.linalg.norm(f))[:, None]
            geom = 1
        elif _independent(vecs[:, g]):
            F, _ = np.linalg.qr(vecs[:, g])
            if mu.imag == 0.0:
                F = _real_basis(F)
            geom = m
        else:
            M = A - mu.real * K if mu.imag == 0.0 else A - mu * K
            spread = float(np.max(np.abs(vals[g] - mu)))
            s_max = np.linalg.norm(M, 2)
            thr = max(1e-8 * s_max, 10.0 * spread * normK)
            F = _null_space(M, thr, m)
            if mu.imag == 0.0:
                F = _real_basis(F)
            geom = F.shape[1]
        points.append(EigenPoint(gamma=mu, alg_mult=m, geom_mult=geom, chain=F,
                                 members=tuple(complex(v) for v in vals[g])))

    points = _enforce_conjugate_symmetry(points)
    AFs = _batch_mul(A, [pt.chain for pt in points])
    KFs = _batch_mul(K, [pt.chain for pt in points])
    for pt, AF, KF in zip(points, AFs, KFs):
        g = pt.gamma
        pt.in_band = bool(g.imag == 0.0 and g.real > 0.0 and g.real >= p.band_edge)
        pt.residual = point_residual(p, pt, AF, KF)
    spec = Spectrum(points=points, total_dim=p.dim,
                    residual=max((pt.residual for pt in points), default=0.0),
                    raw_eigenvalues=vals)
    total = sum(pt.alg_mult for pt in points)
    if total != p.dim:
        raise EigensolverError(f"multiplicities sum to {total}, expected {p.dim}")
    return spec.sorted()


def _realify(f: np.ndarray) -> np.ndarray:
    """Rotate a complex eigenvector of a real eigenvalue onto the real axis."""
    k = np.argmax(np.abs(f))
    f = f * np.exp(-1j * np.angle(f[k]))
    return np.real(f)


def _real_basis(F: np.ndarray) -> np.ndarray:
    if not np.iscomplexobj(F):
        return F
    R = np.hstack([F.real, F.imag])
    k = F.shape[1]
    # leading left singular vectors from the small Gram matrix
    ev, W = np.linalg.eigh(R.T @ R)
    W = W[:, ::-1][:, :k]
    U = R @ W / np.sqrt(np.maximum(ev[::-1][:k], 1e-300))
    U, _ = np.linalg.qr(U)
    return U


def _enforce_conjugate_symmetry(points: List[EigenPoint]) -> List[EigenPoint]:
    """Rebuild lower-half points as exact conjugates of upper-half ones."""
    upper = [pt for pt in points if pt.gamma.imag > 0]
    lower = [pt for pt in points if pt.gamma.imag < 0]
    real = [pt for pt in points if pt.gamma.imag == 0]
    if sorted(pt.alg_mult for pt in upper) != sorted(pt.alg_mult for pt in lower) or len(upper) != len(lower):
        raise EigensolverError("complex eigenvalues do not pair into conjugates")
    out = real + upper
    for pt in upper:
        out.append(EigenPoint(gamma=pt.gamma.conjugate(), alg_mult=pt.alg_mult,
                              geom_mult=pt.geom_mult, chain=pt.chain.conj(),
                              members=tuple(np.conj(pt.members))))
    return out


def _mul(M: np.ndarray, F: np.ndarray) -> np.ndarray:
    """``M @ F`` without promoting a real ``M`` to complex."""
    if np.iscomplexobj(F) and not np.iscomplexobj(M):
        # strided real/imag views would bypass BLAS
        return M @ np.ascontiguousarray(F.real) + 1j * (M @ np.ascontiguousarray(F.imag))
    return M @ F


def _batch_mul(M: np.ndarray, Fs: List[np.ndarray]) -> List[np.ndarray]:
    """``[M @ F for F in Fs]`` as a single matrix product."""
    if not Fs:
        return []
    big = _mul(M, np.hstack(Fs))
    cuts = np.cumsum([F.shape[1] for F in Fs])[:-1]
    return [B if np.iscomplexobj(F) else B.real for B, F in zip(np.split(big, cuts, axis=1), Fs)]


def point_residual(p: Pencil, pt: EigenPoint, AF: Optional[np.ndarray] = None,
                   KF: Optional[np.ndarray] = None) -> float:
    """Relative residual of the stored eigen/chain vectors of one point.

    ``AF`` and ``KF`` are optional precomputed products with the chain.
    """
    scale = p.norm_A + abs(pt.gamma) * p.norm_K
    F = pt.chain
    g = pt.gamma if pt.gamma.imag != 0 else pt.gamma.real
    KF = _mul(p.K, F) if KF is None else KF
    AF = _mul(p.A, F) if AF is None else AF
    R = AF - g * KF
    if pt.is_jordan and F.shape[1] == pt.alg_mult:
        R[:, 1:] -= KF[:, :-1]
    res = np.linalg.norm(R, axis=0) / np.maximum(np.linalg.norm(F, axis=0), 1e-300)
    return float(np.max(res) / scale)


def jordan_chain(p: Pencil, point: EigenPoint, tol: float = 1e-6) -> EigenPoint:
    """Jordan chain ``A f_j = gamma0 K f_j + K f_{j-1}`` with ``f_0 = 0``.

    Semi-simple points are returned unchanged.  Chains are solved in the
    least-squares sense on the range of ``A - gamma0 K``.
    """
    if point.alg_mult == point.geom_mult:
        return point
    if point.geom_mult > 1:
        raise UnsupportedStructureError(
            f"gamma = {point.gamma}: geometric multiplicity {point.geom_mult} "
            f"with algebraic multiplicity {point.alg_mult}")
    if point.gamma.imag != 0:
        raise UnsupportedStructureError("Jordan chains are extracted for real points only")
    g0 = point.gamma.real
    M = p.A - g0 * p.K
    u, s, vh = np.linalg.svd(M)
    f1 = vh[-1]
    r = len(s) - 1
    pinv = (vh[:r].T / s[:r]) @ u[:, :r].T
    chain = [f1 / np.linalg.norm(f1)]
    worst = 0.0
    for _ in range(1, point.alg_mult):
        rhs = p.K @ chain[-1]
        f = pinv @ rhs
        res = np.linalg.norm(M @ f - rhs) / max(np.linalg.norm(rhs), 1e-300)
        worst = max(worst, res)
        if res > tol:
            raise ChainResidualError(
                f"chain solve at gamma = {g0:.6g} has residual {res:.3e} > {tol:.1e}")
        chain.append(f)
    F = np.column_stack(chain)
    out = replace(point, chain=F)
    out.residual = point_residual(p, out)
    return out


def gram(K: np.ndarray, F: np.ndarray, G: Optional[np.ndarray] = None) -> np.ndarray:
    """Hermitian Gram matrix ``G_ij = (K f_j, f_i)`` = ``F^H K G``."""
    G = F if G is None else G
    return F.conj().T @ _mul(K, G)


def krein_classify(p: Pencil, spec: Spectrum, gram_tol: float = 1e-8) -> Spectrum:
    """Fill ``krein_np`` / ``krein_nn`` on every point of a spectrum.

    Real semi-simple points use the inertia of the Gram matrix of their
    eigenspace; real Jordan chains use the parity rule with the sign of
    ``(K f_1, f_n)``; complex points contribute ``alg_mult`` to both counts.
    Positive points inside the emulated band that are simple use the
    embedded-eigenvalue rule, in which a neutral vector counts on both sides.
    """
    normK = p.norm_K
    out = []
    semi = [pt.chain for pt in spec.points if pt.gamma.imag == 0 and not pt.is_jordan]
    KFs = iter(_batch_mul(p.K, semi))
    for pt in spec.points:
        pt = replace(pt)
        if pt.gamma.imag != 0:
            pt.krein_np = pt.krein_nn = pt.alg_mult
        elif pt.is_jordan:
            if pt.chain.shape[1] != pt.alg_mult:
                pt = jordan_chain(p, pt)
            F = pt.chain
            n = pt.alg_mult
            top = float(F[:, 0] @ p.K @ F[:, -1])
            thr = gram_tol * normK * np.linalg.norm(F[:, 0]) * np.linalg.norm(F[:, -1])
            k = n // 2
            if abs(top) <= thr:
                if pt.in_band:
                    pt.krein_np = pt.krein_nn = n - k
                    pt.chain_sign = 0
                    out.append(pt)
                    continue
                raise DegenerateChainError(
                    f"(K f1, fn) = {top:.3e} vanishes on the isolated chain at gamma = {pt.gamma.real:.6g}")
            pt.chain_sign = 1 if top > 0 else -1
            if n % 2 == 0:
                pt.krein_np = pt.krein_nn = k
            elif top > 0:
                pt.krein_np, pt.krein_nn = k + 1, k
            else:
                pt.krein_np, pt.krein_nn = k, k + 1
        else:
            F = pt.chain
            G = np.real(F.conj().T @ next(KFs))
            G = 0.5 * (G + G.T)
            if pt.alg_mult == 1 and pt.in_band:
                val = G[0, 0]
                thr = gram_tol * normK * float(F[:, 0] @ F[:, 0])
                if val > thr:
                    pt.krein_np, pt.krein_nn = 1, 0
                elif val < -thr:
                    pt.krein_np, pt.krein_nn = 0, 1
                else:
                    pt.krein_np = pt.krein_nn = 1
                pt.chain_sign = int(np.sign(val)) if abs(val) > thr else 0
                out.append(pt)
                continue
            ev, Q = np.linalg.eigh(G)
            norms = np.linalg.norm(F, axis=0)
            thr = gram_tol * normK * np.max(norms) ** 2
            if np.any(np.abs(ev) <= thr) and not pt.in_band:
                raise DegenerateChainError(
                    f"Gram matrix of the semi-simple point gamma = {pt.gamma.real:.6g} "
                    f"has a zero eigenvalue ({np.min(np.abs(ev)):.3e})")
            pt.krein_np = int(np.sum(ev > thr))
            pt.krein_nn = int(np.sum(ev < -thr))
            n_zero = pt.alg_mult - pt.krein_np - pt.krein_nn
            pt.krein_np += n_zero
            pt.krein_nn += n_zero
            # store the eigenspace in Gram-diagonal form, negative directions first
            order = np.argsort(ev)
            pt.chain = F @ Q[:, order]
            pt.chain_sign = int(np.sign(ev[order][0])) if pt.alg_mult == 1 else 0
        out.append(pt)
    return replace(spec, points=out)


def classify(p: Pencil, cluster_tol: float = 1e-7, zero_tol: float = 1e-12, **kw) -> Spectrum:
    """``solve_pencil`` followed by chain extraction and Krein classification."""
    spec = solve_pencil(p, cluster_tol=cluster_tol, zero_tol=zero_tol, **kw)
    pts = [jordan_chain(p, pt) if (pt.is_jordan and pt.gamma.imag == 0) else pt
           for pt in spec.points]
    spec = replace(spec, points=pts)
    spec.residual = max((pt.residual for pt in pts), default=0.0)
    return krein_classify(p, spec)
