"""Constrained pencil ``A = P L+ P``, ``K = P L-^{-1} P`` on ``ker(L-)^perp``.

Weighted inner products ``(f, g)_W = f^T W g`` are folded in by the
similarity ``W^{1/2} L W^{-1/2}``; everything downstream sees plain
symmetric matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg as sla

from .pencil_core import (Pencil, PencilError, Spectrum, inertia, symmetrize)


class AmbiguousKernelError(PencilError):
    pass


class DeltaSelectionError(PencilError):
    pass


class ShiftError(PencilError):
    pass


@dataclass
class OperatorPair:
    """Discretized ``L+`` and ``L-`` with their essential-spectrum edges.

    With ``weights`` present the matrices are symmetric in ``(f, g)_W``,
    i.e. ``diag(W) @ L`` is symmetric.  ``meta`` carries model data such as
    the profile, the derivative matrix of the KdV model, or block sizes.
    """

    Lp: np.ndarray
    Lm: np.ndarray
    omega_plus: float
    omega_minus: float
    weights: Optional[np.ndarray] = None
    meta: Dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.Lp.shape[0]

    def sym(self, which: str) -> np.ndarray:
        """``W^{1/2} L W^{-1/2}`` for ``which`` in {'p', 'm'}."""
        L = self.Lp if which == "p" else self.Lm
        return symmetrized(L, self.weights)

    def symmetry_defect(self) -> float:
        out = 0.0
        for L in (self.Lp, self.Lm):
            WL = L if self.weights is None else self.weights[:, None] * L
            out = max(out, np.linalg.norm(WL - WL.T) / max(np.linalg.norm(WL), 1e-300))
        return out


def symmetrized(L: np.ndarray, weights: Optional[np.ndarray]) -> np.ndarray:
    if weights is None:
        return symmetrize(L)
    s = np.sqrt(weights)
    return symmetrize(s[:, None] * L / s[None, :])


@dataclass
class ConstrainedIndices:
    n0: Optional[int] = None
    z0: Optional[int] = None
    z1: Optional[int] = None
    n_minus: Optional[int] = None
    n_plus: Optional[int] = None
    sigma_neg1: Optional[float] = None
    delta: Optional[float] = None
    nL_plus: Optional[int] = None
    nA_direct: Optional[int] = None
    consistent: Optional[bool] = None
    A0_eigenvalues: Tuple[float, ...] = ()

    def as_dict(self) -> Dict:
        return {
            "n0": self.n0, "z0": self.z0, "z1": self.z1,
            "n_minus": self.n_minus, "n_plus": self.n_plus,
            "delta": self.delta, "sigma_neg1": self.sigma_neg1,
            "n_L_plus": self.nL_plus, "n_A_direct": self.nA_direct,
            "proposition1_consistent": self.consistent,
        }


@dataclass
class ConstrainedPencil:
    pencil: Pencil
    basis: np.ndarray        # orthonormal basis of H in symmetrized coordinates
    kernel: np.ndarray       # orthonormal basis of ker(L-) in symmetrized coordinates
    projector: np.ndarray    # orthogonal projector off ker(L-), symmetrized coordinates
    Sp: np.ndarray
    Sm: np.ndarray

    def to_weighted(self, v: np.ndarray, weights: Optional[np.ndarray]) -> np.ndarray:
        """Map symmetrized-coordinate vectors back to the original grid values."""
        return v if weights is None else v / np.sqrt(weights)[:, None if v.ndim > 1 else ...]


def kernel_basis(L: np.ndarray, weights: Optional[np.ndarray] = None,
                 tol: float = 1e-10) -> np.ndarray:
    """Eigenvectors with ``|eigenvalue| <= tol * |L|``, orthonormal in ``(., .)_W``.

    Returned in original (unsymmetrized) coordinates.
    """
    S = symmetrized(L, weights)
    ev, V = np.linalg.eigh(S)
    scale = np.max(np.abs(ev)) if ev.size else 1.0
    V0 = V[:, np.abs(ev) <= tol * scale]
    if weights is not None:
        V0 = V0 / np.sqrt(weights)[:, None]
    return V0


def _kernel_sym(S: np.ndarray, tol: float, what: str = "L-") -> Tuple[np.ndarray, np.ndarray]:
    ev, V = np.linalg.eigh(S)
    scale = np.max(np.abs(ev))
    a = np.abs(ev)
    band = (a > tol * scale) & (a <= 10 * tol * scale)
    if np.any(band):
        raise AmbiguousKernelError(
            f"{what} has eigenvalue {ev[band][0]:.3e} in the ambiguous band "
            f"({tol * scale:.3e}, {10 * tol * scale:.3e}]")
    return V[:, a <= tol * scale], ev


def project_pencil(ops: OperatorPair, tol: float = 1e-10) -> ConstrainedPencil:
    """Compress ``L+`` and ``L-^{-1}`` onto ``H = ker(L-)^perp``.

    ``K`` is formed by solving ``(L- + V V^T) X = Q`` with ``V`` the kernel
    basis and ``Q`` the basis of ``H``; since ``Q`` is orthogonal to ``V``
    this yields ``L-^{-1} Q`` without forming an inverse.
    """
    Sp = ops.sym("p")
    Sm = ops.sym("m")
    V, _ = _kernel_sym(Sm, tol)
    n = Sm.shape[0]
    if V.shape[1] == 0:
        Q = np.eye(n)
    else:
        Q = sla.null_space(V.T)
    P = np.eye(n) - V @ V.T
    X = sla.solve(Sm + V @ V.T, Q, assume_a="sym")
    A = Q.T @ Sp @ Q
    K = Q.T @ X
    pencil = Pencil(A, K, omega_plus=ops.omega_plus, omega_minus=ops.omega_minus)
    return ConstrainedPencil(pencil=pencil, basis=Q, kernel=V, projector=P, Sp=Sp, Sm=Sm)


def select_delta(p: Pencil, spec: Spectrum, zero_tol: float = 0.0,
                 invert_tol: float = 1e-12) -> Tuple[Optional[float], float]:
    """``(sigma_neg1, delta)`` with ``delta = |sigma_neg1| / 2``.

    Without negative eigenvalues the fallback is half the smallest nonzero
    ``|Re gamma|``; when every eigenvalue is zero any positive shift is
    admissible and ``delta = 1``.
    """
    reals = np.array([pt.gamma.real for pt in spec.points if pt.gamma.imag == 0])
    negs = reals[reals < -zero_tol]
    sigma = float(np.max(negs)) if negs.size else None
    if sigma is not None:
        delta = abs(sigma) / 2
    else:
        nz = np.array([abs(pt.gamma.real) for pt in spec.points if abs(pt.gamma.real) > zero_tol])
        delta = float(np.min(nz)) / 2 if nz.size else 1.0
    check_shift(p, delta, invert_tol)
    return sigma, delta


def check_shift(p: Pencil, delta: float, invert_tol: float = 1e-12) -> None:
    s = np.linalg.svd(p.A + delta * p.K, compute_uv=False)
    if s[-1] <= invert_tol * s[0]:
        raise DeltaSelectionError(f"A + delta K is singular for delta = {delta:.6g}")


def admissible_deltas(sigma_neg1: Optional[float], delta: float) -> Tuple[float, float]:
    """Two distinct shifts inside ``(0, |sigma_neg1|)``, used for shift-invariance checks."""
    if sigma_neg1 is None:
        return delta, 0.5 * delta
    g = abs(sigma_neg1)
    return 0.5 * g, 0.25 * g


def constrained_index_matrix(ops: OperatorPair, mu: Optional[float] = None,
                             tol: float = 1e-10) -> np.ndarray:
    """``A_ij(mu) = ((mu - L+)^{-1} v_i, v_j)`` over ``ker(L-)``.

    ``mu`` defaults to ``-1e-6`` times the smallest nonzero ``|eigenvalue|``
    of ``L+`` as a stand-in for ``0^-``; a multiple of ``|L+|`` can jump past
    negative eigenvalues when ``L+`` is a high-order operator.
    """
    Sp = ops.sym("p")
    Sm = ops.sym("m")
    V, _ = _kernel_sym(Sm, tol)
    ev = np.linalg.eigvalsh(Sp)
    a = np.abs(ev)
    if mu is None:
        nz = a[a > tol * np.max(a)]
        mu = -1e-6 * float(np.min(nz))
    nz_ev = ev[a > tol * np.max(a)]
    if nz_ev.size and np.min(np.abs(nz_ev - mu)) <= 0.5 * abs(mu):
        raise PencilError(f"mu = {mu:.3e} is too close to the spectrum of L+")
    if V.shape[1] == 0:
        return np.zeros((0, 0))
    X = sla.solve(mu * np.eye(Sp.shape[0]) - Sp, V, assume_a="sym")
    return symmetrize(V.T @ X)


def proposition1_indices(ops: OperatorPair, cp: Optional[ConstrainedPencil] = None,
                         tol: float = 1e-10, zero_tol: float = 1e-8,
                         inertia_tol: float = 1e-9) -> ConstrainedIndices:
    """``n0``, ``z0``, ``z1`` and the check ``n(A) == n(L+) - n0``."""
    if cp is None:
        cp = project_pencil(ops, tol)
    A0 = constrained_index_matrix(ops, tol=tol)
    if A0.size:
        ev = np.linalg.eigvalsh(A0)
        thr = zero_tol * max(np.max(np.abs(ev)), 1e-300)
        n0 = int(np.sum(ev >= -thr))
        z1 = int(np.sum(np.abs(ev) <= thr))
    else:
        ev = np.zeros(0)
        n0 = z1 = 0
    Vp, _ = _kernel_sym(cp.Sp, tol, "L+")
    z0 = 0
    for u in Vp.T:
        if np.linalg.norm(u - cp.projector @ u) > 1e-8 * np.linalg.norm(u):
            z0 += 1
    nLp = inertia(cp.Sp, inertia_tol)[0]
    nA = inertia(cp.pencil.A, inertia_tol)[0]
    return ConstrainedIndices(n0=n0, z0=z0, z1=z1, nL_plus=nLp, nA_direct=nA,
                              consistent=(nA == nLp - n0), A0_eigenvalues=tuple(ev))


def zero_splitting(p: Pencil, spec: Spectrum, delta: float,
                   inertia_tol: float = 1e-9, gram_tol: float = 1e-8) -> Dict:
    """Signs of the eigenvalues of ``A + delta K`` bifurcating from ``ker(A)``.

    A zero chain of length ``n`` with ``s = sign(K f1, fn)`` yields a
    positive eigenvalue when ``n`` is odd and ``s > 0`` or ``n`` is even and
    ``s < 0``.  Semi-simple zero eigenspaces are split along their Gram
    eigenvectors, each being a chain of length one.
    """
    n_minus = n_plus = 0
    normK = p.norm_K
    for pt in spec.points:
        if pt.gamma != 0:
            continue
        F = pt.chain
        if pt.is_jordan:
            n = pt.alg_mult
            top = float(F[:, 0] @ p.K @ F[:, -1])
            if abs(top) <= gram_tol * normK * np.linalg.norm(F[:, 0]) * np.linalg.norm(F[:, -1]):
                raise ShiftError("(K f1, fn) vanishes on the zero chain")
            positive = (n % 2 == 1 and top > 0) or (n % 2 == 0 and top < 0)
            n_plus += int(positive)
            n_minus += int(not positive)
        else:
            G = np.real(F.conj().T @ p.K @ F)
            ev = np.linalg.eigvalsh(0.5 * (G + G.T))
            if np.any(np.abs(ev) <= gram_tol * normK):
                raise ShiftError("degenerate Gram matrix on the zero eigenspace")
            n_plus += int(np.sum(ev > 0))
            n_minus += int(np.sum(ev < 0))
    iA = inertia(p.A, inertia_tol)
    iS = inertia(p.A + delta * p.K, inertia_tol)
    direct_minus = iS[0] - iA[0]
    direct_plus = iS[2] - iA[2]
    return {
        "n_minus": n_minus, "n_plus": n_plus,
        "direct_n_minus": direct_minus, "direct_n_plus": direct_plus,
        "dim_HA_zero": iA[1],
        "pass": (n_minus == direct_minus and n_plus == direct_plus),
        "complete": (n_minus + n_plus == iA[1]),
    }
