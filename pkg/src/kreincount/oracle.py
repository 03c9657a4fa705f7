"""Independent cross-checks: direct linearized spectra, a second pencil
route, and random pencils with planted structure."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from .pencil_core import Pencil, PencilError, EigensolverError, _components


class InfeasibleSpecError(ValueError):
    pass


# ---------------------------------------------------------------------------
# random pencils

@dataclass(frozen=True)
class JordanSpec:
    gamma0: float
    length: int
    sign: int = 1


def _flip(n: int) -> np.ndarray:
    return np.fliplr(np.eye(n))


def _jordan_block(g0: float, n: int, sign: int):
    """Canonical pair with ``K^-1 A = g0 I + N`` and ``(K e1, en) = sign``."""
    F = _flip(n)
    N = np.eye(n, k=1)
    return sign * (g0 * F + F @ N), sign * F


def _complex_block(a: float, b: float):
    return np.array([[a, b], [b, -a]]), np.diag([1.0, -1.0])


def _haar(n: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def _block_inertia(K0: np.ndarray) -> Tuple[int, int]:
    ev = np.linalg.eigvalsh(K0)
    return int(np.sum(ev < 0)), int(np.sum(ev > 0))


def random_pencil(dim: int, inertia_K: Optional[Tuple[int, int, int]] = None,
                  jordan_spec: Optional[Sequence[JordanSpec]] = None,
                  complex_pairs: Sequence[Tuple[float, float]] = (),
                  seed: int = 0, omega_plus: float = 1e6, omega_minus: float = 1.0,
                  separation: float = 1e-2, max_resample: int = 200) -> Pencil:
    """Random symmetric pencil with a prescribed metric inertia.

    Planted Jordan blocks and complex pairs live in canonical coordinates;
    the remaining block is a generic pair ``(S, diag(+-1))`` with ``S``
    random symmetric, so ``M = K^-1 S`` is self-adjoint in ``[.,.]``.
    The whole pair is then rotated by a Haar orthogonal ``Q``, which keeps
    ``K = Q^T diag(+-1) Q``.  Generic eigenvalues closer than
    ``separation`` to a planted one are resampled.
    """
    rng = np.random.default_rng(seed)
    jordan_spec = list(jordan_spec or [])
    blocks = [_jordan_block(js.gamma0, js.length, 1 if js.sign >= 0 else -1) for js in jordan_spec]
    blocks += [_complex_block(a, b) for a, b in complex_pairs]
    used = sum(b[0].shape[0] for b in blocks)
    if used > dim:
        raise InfeasibleSpecError(f"planted blocks need {used} dimensions, pencil has {dim}")
    planted_neg = sum(_block_inertia(K0)[0] for _, K0 in blocks)
    planted_pos = used - planted_neg
    if inertia_K is None:
        n_neg = planted_neg + int(rng.integers(0, dim - used + 1))
        inertia_K = (n_neg, 0, dim - n_neg)
    n_neg, n_zero, n_pos = inertia_K
    if n_zero != 0 or n_neg + n_pos != dim:
        raise InfeasibleSpecError(f"inertia {inertia_K} invalid for an invertible K of dim {dim}")
    rest_neg = n_neg - planted_neg
    rest_pos = n_pos - planted_pos
    if rest_neg < 0 or rest_pos < 0:
        raise InfeasibleSpecError(f"planted blocks force inertia ({planted_neg}, 0, {planted_pos})")
    planted_vals = [js.gamma0 for js in jordan_spec] + [complex(a, b) for a, b in complex_pairs]
    planted_vals += [complex(a, -b) for a, b in complex_pairs]

    m = dim - used
    for _ in range(max_resample):
        S = rng.standard_normal((m, m))
        S = 0.5 * (S + S.T)
        D = np.concatenate([-np.ones(rest_neg), np.ones(rest_pos)])
        rng.shuffle(D)
        if m:
            ev = np.linalg.eigvals(S / D[:, None])
            gaps = [abs(e - v) for e in ev for v in planted_vals]
            if gaps and min(gaps) < separation:
                continue
            if np.min(np.abs(ev)) < 1e-6:
                continue
        A0 = sla.block_diag(*([b[0] for b in blocks] + ([S] if m else [])))
        K0 = sla.block_diag(*([b[1] for b in blocks] + ([np.diag(D)] if m else [])))
        Q = _haar(dim, rng)
        K = Q.T @ K0 @ Q
        if np.linalg.cond(K) > 1e6:
            continue
        return Pencil(Q.T @ A0 @ Q, K, omega_plus=omega_plus, omega_minus=omega_minus)
    raise InfeasibleSpecError("could not draw a well-separated pencil")


def random_spd_pencil(dim: int, seed: int = 0, spread: float = 2.0,
                      omega_plus: float = 1e6, omega_minus: float = 1.0) -> Pencil:
    """Random symmetric ``A`` with a random positive definite ``K`` whose
    eigenvalues are log-uniform in ``[e^-spread, e^spread]``."""
    rng = np.random.default_rng(seed)
    Q = _haar(dim, rng)
    K = (Q * np.exp(rng.uniform(-spread, spread, dim))) @ Q.T
    S = rng.standard_normal((dim, dim))
    return Pencil(0.5 * (S + S.T), K, omega_plus=omega_plus, omega_minus=omega_minus)


def random_trial(seed: int, dim_range: Tuple[int, int] = (2, 10)) -> Tuple[Pencil, Dict]:
    """One trial of the theorem suite: 20% planted Jordan blocks, 20% planted
    complex pairs, the rest generic."""
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(dim_range[0], dim_range[1] + 1))
    kind = rng.random()
    jordan, pairs = [], []
    if kind < 0.2 and dim >= 2:
        length = int(rng.integers(2, min(3, dim) + 1))
        jordan = [JordanSpec(float(np.round(rng.uniform(-2, 2), 3)), length,
                             int(rng.choice([-1, 1])))]
    elif kind < 0.4 and dim >= 2:
        pairs = [(float(rng.uniform(-2, 2)), float(rng.uniform(0.2, 2)))]
    label = "jordan" if jordan else ("complex" if pairs else "generic")
    p = random_pencil(dim, jordan_spec=jordan, complex_pairs=pairs,
                      seed=int(rng.integers(0, 2**31 - 1)))
    return p, {"dim": dim, "kind": label, "jordan": jordan, "pairs": pairs}


def qz_eigenvalues(p: Pencil) -> np.ndarray:
    """Second route: QZ on the pair (A, K)."""
    vals = sla.eig(p.A, p.K, right=False, homogeneous_eigvals=False)
    if not np.all(np.isfinite(vals)):
        raise EigensolverError("QZ returned infinite eigenvalues; K is singular")
    return vals


# ---------------------------------------------------------------------------
# direct linearization

@dataclass
class DirectSpectrum:
    """Eigenvalues ``lambda`` of the linearized problem with the pencil-side
    vectors ``u`` and the partner vectors ``w`` (``L- w = lambda u``)."""

    lam: np.ndarray
    U: np.ndarray
    W: np.ndarray
    model: str
    meta: Dict = field(default_factory=dict)


def _eig(M: np.ndarray):
    try:
        return sla.eig(M)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(f"direct eigensolve failed: {exc}")


def direct_linearized_spectrum(ops, model: str) -> DirectSpectrum:
    """Eigenvalues of the linearized operator in symmetrized coordinates.

    nls / dnls / vortex n = 0: ``[[0, L-], [-L+, 0]]`` acting on ``(u, w)``.
    vortex n >= 1: ``s3 H_n phi = i lambda phi`` for ``n`` and ``-n``, with
    ``u = phi`` and ``w = -i s3 phi`` placed in the stacked coordinates.
    kdv: ``Dz L- w = lambda w`` with ``u = Dz^{-1} w``.
    """
    Sp, Sm = ops.sym("p"), ops.sym("m")
    n = Sp.shape[0]
    if model == "kdv":
        Dz = ops.meta["Dz"]
        lam, Wv = _eig(Dz @ Sm)
        U = np.linalg.solve(Dz, Wv)
        return DirectSpectrum(lam, U, Wv, model)
    if model == "vortex" and ops.meta.get("n", 0) >= 1:
        b = ops.meta["block"]
        s3 = np.concatenate([np.ones(b // 2), -np.ones(b // 2)])
        lams, Us, Ws = [], [], []
        for k in range(2):
            sl = slice(k * b, (k + 1) * b)
            H = Sp[sl, sl]
            mu, Phi = _eig(s3[:, None] * H)
            U = np.zeros((n, b), dtype=complex)
            W = np.zeros((n, b), dtype=complex)
            U[sl] = Phi
            W[sl] = -1j * s3[:, None] * Phi
            lams.append(-1j * mu)
            Us.append(U)
            Ws.append(W)
        return DirectSpectrum(np.concatenate(lams), np.hstack(Us), np.hstack(Ws), model)
    Z = np.zeros((n, n))
    J = np.block([[Z, Sm], [-Sp, Z]])
    lam, V = _eig(J)
    return DirectSpectrum(lam, V[:n], V[n:], model)


def _span(U: np.ndarray, rank_tol: float = 1e-8) -> np.ndarray:
    """Coefficients ``C`` with ``U C`` an orthonormal basis of ``span(U)``."""
    u, s, vh = np.linalg.svd(U, full_matrices=False)
    r = int(np.sum(s > rank_tol * s[0])) if s.size else 0
    return vh[:r].conj().T / s[:r]


def direct_counts(ops, model: str, ds: Optional[DirectSpectrum] = None,
                  zero_tol: float = 1e-6, cluster_tol: float = 1e-6,
                  kernel_tol: float = 1e-10, gram_tol: float = 1e-8,
                  model_factor: Optional[int] = None) -> Dict[str, int]:
    """Counters from the direct eigensolve, independent of the pencil route.

    Nonzero ``gamma = -lambda^2`` are grouped, the ``u`` vectors of each group
    span the pencil eigenspace, and ``(K u, u) = u^H w / lambda`` gives the
    Krein form without inverting ``L-``.  ``gamma = 0`` is read from the kernel
    of ``P L+ P`` on ``ker(L-)^perp`` with ``K`` the pseudo-inverse of ``L-``.
    """
    from .count_engine import _MODEL_FACTOR
    ds = ds or direct_linearized_spectrum(ops, model)
    f = model_factor or _MODEL_FACTOR[model]
    band = ops.omega_plus * ops.omega_minus
    gam = -ds.lam ** 2
    keep = np.abs(gam) > zero_tol
    idx = np.nonzero(keep)[0]
    c = dict(Np_neg=0, Nn_neg=0, Np_zero=0, Nn_zero=0, Np_pos=0, Nn_pos=0,
             Nc_plus=0, Nc_minus=0)
    g_imag_tol = cluster_tol
    for grp in _components(gam[idx], cluster_tol):
        sel = idx[grp]
        g = complex(np.mean(gam[sel]))
        U = ds.U[:, sel]
        Wl = ds.W[:, sel] / ds.lam[sel]
        C = _span(U)
        dim = C.shape[1]
        if abs(g.imag) > g_imag_tol * (1 + abs(g)):
            c["Nc_plus" if g.imag > 0 else "Nc_minus"] += dim
            continue
        G = C.conj().T @ (U.conj().T @ Wl) @ C
        G = 0.5 * (G + G.conj().T)
        ev = np.linalg.eigvalsh(G)
        thr = gram_tol * max(np.max(np.abs(ev)), 1e-300)
        npos, nneg = int(np.sum(ev > thr)), int(np.sum(ev < -thr))
        nz = dim - npos - nneg
        if g.real < 0:
            c["Np_neg"] += npos + nz
            c["Nn_neg"] += nneg + nz
        else:
            c["Nn_pos"] += nneg + nz
            if g.real < band:
                c["Np_pos"] += npos + nz
    # gamma = 0 from the constrained kernel
    Sp, Sm = ops.sym("p"), ops.sym("m")
    evm, Vm = np.linalg.eigh(Sm)
    scale = np.max(np.abs(evm))
    ker = np.abs(evm) <= kernel_tol * scale
    Q = Vm[:, ~ker]
    Kinv = Q @ np.diag(1.0 / evm[~ker]) @ Q.T
    Ah = Q.T @ Sp @ Q
    eva, Va = np.linalg.eigh(Ah)
    zero = np.abs(eva) <= kernel_tol * np.max(np.abs(eva))
    if np.any(zero):
        Z0 = Q @ Va[:, zero]
        G = Z0.T @ Kinv @ Z0
        ev = np.linalg.eigvalsh(0.5 * (G + G.T))
        c["Np_zero"] = int(np.sum(ev > 0))
        c["Nn_zero"] = int(np.sum(ev < 0))
    raw_real = sum(1 for i in idx if abs(ds.lam[i].imag) <= cluster_tol * (1 + abs(ds.lam[i]))
                   and ds.lam[i].real > 0)
    raw_comp = sum(1 for i in idx if ds.lam[i].real > cluster_tol * (1 + abs(ds.lam[i]))
                   and ds.lam[i].imag > cluster_tol * (1 + abs(ds.lam[i])))
    # each real gamma < 0 of the pencil carries Np + Nn = alg_mult
    alg_neg = c["Np_neg"] + c["Nn_neg"] - 0
    c["N_real"] = alg_neg // f
    c["N_comp"] = c["Nc_plus"] // f
    c["N_imag_neg"] = c["Nn_pos"] // f
    c["N_zero_neg"] = c["Nn_zero"] // f if model == "vortex" else c["Nn_zero"]
    c["raw_lambda_real"] = raw_real
    c["raw_lambda_complex"] = raw_comp
    return c


def pencil_vs_direct(report_pencil, report_direct: Dict[str, int]) -> Dict[str, Tuple[int, int]]:
    """Counters that differ between the two routes, as ``name -> (pencil, direct)``.

    Only keys present in both are compared; diagnostic ``raw_*`` keys are skipped.
    """
    rp = report_pencil.as_dict() if hasattr(report_pencil, "as_dict") else dict(report_pencil)
    out = {}
    for k, v in report_direct.items():
        if k.startswith("raw_") or k not in rp:
            continue
        if int(rp[k]) != int(v):
            out[k] = (int(rp[k]), int(v))
    return out


def lambda_symmetry_defect(lam: np.ndarray) -> Dict[str, float]:
    """Distance of the set ``lam`` from its images under ``-lambda`` and
    ``conj(lambda)``, relative to ``max(1, |lambda|)``."""
    lam = np.asarray(lam)
    sc = np.maximum(1.0, np.abs(lam))
    neg = np.min(np.abs(lam[None, :] + lam[:, None]), axis=1) / sc
    conj = np.min(np.abs(lam[None, :] - np.conj(lam)[:, None]), axis=1) / sc
    return {"minus": float(np.max(neg, initial=0.0)), "conjugate": float(np.max(conj, initial=0.0))}


# ---------------------------------------------------------------------------
# second pencil route

def reduction_route_counts(p: Pencil, cluster_tol: float = 1e-4, zero_tol: float = 1e-10,
                           gram_tol: float = 1e-8) -> Dict[str, int]:
    """Sign counters by simultaneous reduction, independent of chain extraction.

    ``K = V diag(d) V^T`` gives ``S = C^T A C`` and ``J = sign(d)`` with
    ``C = V |d|^{-1/2}``.  QZ on ``(S, J)`` yields the eigenvalues; each
    cluster's generalized eigenspace is the null space of ``(J S - mu)^m``
    and the inertia of the ``J``-Gram matrix on it gives ``(Np, Nn)``.
    This covers Jordan blocks without the parity rule.
    """
    d, V = np.linalg.eigh(p.K)
    C = V / np.sqrt(np.abs(d))
    S = C.T @ p.A @ C
    S = 0.5 * (S + S.T)
    J = np.sign(d)
    vals = sla.eig(S, np.diag(J), right=False)
    if not np.all(np.isfinite(vals)):
        raise EigensolverError("QZ returned infinite eigenvalues")
    T = J[:, None] * S
    nT = max(np.linalg.norm(T, 2), 1e-300)
    c = dict(Np_neg=0, Nn_neg=0, Np_zero=0, Nn_zero=0, Np_pos=0, Nn_pos=0,
             Nc_plus=0, Nc_minus=0)
    for grp in _components(vals, cluster_tol):
        mu = complex(np.mean(vals[grp]))
        m = len(grp)
        if abs(mu.imag) > cluster_tol * (1 + abs(mu)):
            c["Nc_plus" if mu.imag > 0 else "Nc_minus"] += m
            continue
        mu = mu.real
        M = np.linalg.matrix_power((T - mu * np.eye(p.dim)) / nT, m)
        _, s, vh = np.linalg.svd(M)
        X = vh[-m:].T
        G = X.T @ (J[:, None] * X)
        ev = np.linalg.eigvalsh(0.5 * (G + G.T))
        npos, nneg = int(np.sum(ev > gram_tol)), int(np.sum(ev < -gram_tol))
        if npos + nneg != m:
            raise PencilError(f"degenerate Krein form on the generalized eigenspace at {mu:.6g}")
        key = "neg" if mu < -zero_tol else ("zero" if mu <= zero_tol else "pos")
        c["Np_" + key] += npos
        c["Nn_" + key] += nneg
    return c
