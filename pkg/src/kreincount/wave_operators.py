"""Discretized wave profiles and linearization operators ``L+``, ``L-``.

Models: NLS solitons (finite differences), lattice NLS (DNLS), radial
NLS vortices with cubic-quintic nonlinearity, and fifth-order KdV
traveling waves (Fourier spectral).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .constrained import OperatorPair


class ProfileError(RuntimeError):
    pass


class WaveSpeedError(ValueError):
    pass


# ---------------------------------------------------------------------------
# grids

@dataclass(frozen=True)
class Grid1D:
    """``n_points`` nodes on ``[-L, L]``.

    ``fd``: interior nodes of a Dirichlet grid, ``h = 2L / (n + 1)``, with a
    central stencil of order ``fd_order`` (2 or 4; values outside are zero).
    ``periodic``: ``x_j = -L + j h`` with ``h = 2L / n``; reflection maps
    ``j -> -j mod n``.
    """

    n_points: int
    L: float
    kind: str = "fd"
    fd_order: int = 4

    def __post_init__(self):
        if self.n_points < 16:
            raise ValueError("Grid1D needs at least 16 points")
        if self.L <= 0:
            raise ValueError("half length must be positive")
        if self.kind not in ("fd", "periodic"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.fd_order not in (2, 4):
            raise ValueError("fd_order must be 2 or 4")

    @property
    def h(self) -> float:
        n = self.n_points
        return 2 * self.L / (n + 1) if self.kind == "fd" else 2 * self.L / n

    @property
    def x(self) -> np.ndarray:
        n = self.n_points
        if self.kind == "fd":
            return -self.L + self.h * np.arange(1, n + 1)
        return -self.L + self.h * np.arange(n)

    def reflect(self, f: np.ndarray) -> np.ndarray:
        if self.kind == "fd":
            return f[::-1]
        return np.roll(f[::-1], 1)

    def laplacian(self) -> np.ndarray:
        if self.kind == "fd":
            n = self.n_points
            if self.fd_order == 2:
                return (np.eye(n, k=1) + np.eye(n, k=-1) - 2 * np.eye(n)) / self.h ** 2
            return (-np.eye(n, k=2) + 16 * np.eye(n, k=1) - 30 * np.eye(n)
                    + 16 * np.eye(n, k=-1) - np.eye(n, k=-2)) / (12 * self.h ** 2)
        D = self.derivative()
        return D @ D

    def wavenumbers(self) -> np.ndarray:
        n = self.n_points
        k = 2 * np.pi * np.fft.fftfreq(n, d=self.h)
        if n % 2 == 0:
            k[n // 2] = 0.0
        return k

    def derivative(self) -> np.ndarray:
        """Spectral first derivative with the Nyquist mode removed (periodic only)."""
        if self.kind != "periodic":
            raise ValueError("spectral derivative needs a periodic grid")
        n = self.n_points
        F = np.fft.fft(np.eye(n), axis=0)
        D = np.real(np.fft.ifft(1j * self.wavenumbers()[:, None] * F, axis=0))
        return 0.5 * (D - D.T)

    def norm2(self, f: np.ndarray) -> float:
        return float(self.h * np.sum(f ** 2))


@dataclass(frozen=True)
class RadialGrid:
    """Cell-centred nodes ``r_j = (j - 1/2) h`` on ``(0, r_max)`` with Dirichlet
    data at ``r_max``; weights ``r_j h`` realize ``(f, g) = int f g r dr``."""

    n_points: int
    r_max: float

    def __post_init__(self):
        if self.n_points < 16 or self.r_max <= 0:
            raise ValueError("RadialGrid needs n_points >= 16 and r_max > 0")

    @property
    def h(self) -> float:
        return self.r_max / (self.n_points + 0.5)

    @property
    def r(self) -> np.ndarray:
        return (np.arange(1, self.n_points + 1) - 0.5) * self.h

    @property
    def weights(self) -> np.ndarray:
        return self.r * self.h

    def radial_laplacian(self) -> np.ndarray:
        """``(1/r) d/dr (r d/dr)`` in flux form; ``r_{1/2} = 0`` closes the origin."""
        n, h, r = self.n_points, self.h, self.r
        rp = r + h / 2
        rm = r - h / 2
        M = np.diag(-(rp + rm)) + np.diag(rp[:-1], 1) + np.diag(rm[1:], -1)
        return M / (r[:, None] * h ** 2)

    def norm2(self, f: np.ndarray) -> float:
        return float(np.sum(self.weights * f ** 2))


@dataclass
class Profile:
    grid: object
    values: np.ndarray
    model: str
    params: Dict
    residual: float
    slope: Optional[float] = None
    norm2: Optional[float] = None
    meta: Dict = field(default_factory=dict)


def _newton(G: Callable, J: Callable, x0: np.ndarray, tol: float = 1e-8,
            maxit: int = 50, project: Optional[Callable] = None,
            lstsq: bool = False, damping: bool = True) -> Tuple[np.ndarray, float, list]:
    x = x0.copy()
    trace = []
    scale = max(np.linalg.norm(x0), 1.0)
    for _ in range(maxit):
        g = G(x)
        res = float(np.linalg.norm(g))
        trace.append(res)
        if res <= tol * max(np.linalg.norm(x), 1e-300) * 1e-2 or res < 1e-13 * scale:
            return x, res, trace
        Jx = J(x)
        if lstsq:
            dx = np.linalg.lstsq(Jx, -g, rcond=1e-13)[0]
        else:
            dx = np.linalg.solve(Jx, -g)
        t = 1.0
        if damping:
            while t > 1e-3:
                xn = x + t * dx
                if project is not None:
                    xn = project(xn)
                if np.linalg.norm(G(xn)) < (1 - 1e-4 * t) * res or t <= 1e-3:
                    break
                t *= 0.5
        x = x + t * dx
        if project is not None:
            x = project(x)
    g = G(x)
    res = float(np.linalg.norm(g))
    trace.append(res)
    if res <= tol * max(np.linalg.norm(x), 1e-300):
        return x, res, trace
    raise ProfileError(f"Newton did not converge: residual trace {trace[-5:]}")


# ---------------------------------------------------------------------------
# NLS solitons

def nls_grid(omega: float, n_points: int = 512, L: Optional[float] = None) -> Grid1D:
    return Grid1D(n_points, L if L is not None else 20.0 / np.sqrt(omega), "fd")


def _nls_solve(sigma: int, omega: float, g: Grid1D) -> Tuple[np.ndarray, float]:
    x = g.x
    D2 = g.laplacian()
    amp = ((sigma + 1) * omega) ** (1.0 / (2 * sigma))
    phi0 = amp / np.cosh(sigma * np.sqrt(omega) * x) ** (1.0 / sigma)
    G = lambda f: -D2 @ f + omega * f - f ** (2 * sigma + 1)
    J = lambda f: -D2 + np.diag(omega - (2 * sigma + 1) * f ** (2 * sigma))
    even = lambda f: 0.5 * (f + g.reflect(f))
    phi, res, _ = _newton(G, J, phi0, project=even)
    return phi, res


def nls_soliton(sigma: int, omega: float, g: Optional[Grid1D] = None,
                slope_step: float = 1e-4) -> Profile:
    """Ground state of ``-phi'' + omega phi - phi^(2 sigma + 1) = 0`` (``F = -s^sigma``)."""
    if sigma < 1 or int(sigma) != sigma:
        raise ValueError("sigma must be a positive integer")
    if omega <= 0:
        raise ValueError("omega must be positive")
    g = g or nls_grid(omega)
    phi, res = _nls_solve(sigma, omega, g)
    dw = slope_step * omega
    n_p = g.norm2(_nls_solve(sigma, omega + dw, g)[0])
    n_m = g.norm2(_nls_solve(sigma, omega - dw, g)[0])
    return Profile(grid=g, values=phi, model="nls", params={"sigma": sigma, "omega": omega},
                   residual=res, slope=(n_p - n_m) / (2 * dw), norm2=g.norm2(phi))


def nls_operators(p: Profile) -> OperatorPair:
    """``L+ = -Delta + omega - (2 sigma + 1) phi^(2 sigma)``, ``L- = -Delta + omega - phi^(2 sigma)``."""
    sigma, omega = p.params["sigma"], p.params["omega"]
    g = p.grid
    D2 = g.laplacian()
    s = p.values ** (2 * sigma)
    Lm = -D2 + np.diag(omega - s)
    Lp = -D2 + np.diag(omega - (2 * sigma + 1) * s)
    return OperatorPair(Lp=Lp, Lm=Lm, omega_plus=omega, omega_minus=omega,
                        meta={"model": "nls", "profile": p})


# ---------------------------------------------------------------------------
# lattice NLS

def dnls_laplacian(M: int) -> np.ndarray:
    return np.eye(M, k=1) + np.eye(M, k=-1) - 2 * np.eye(M)


def dnls_state(eps: float, pattern: Sequence[int], omega: float = 1.0, M: int = 41,
               steps: int = 20) -> Tuple[np.ndarray, float]:
    """Stationary state of ``-eps Delta phi + omega phi - phi^3 = 0`` continued in ``eps``
    from the anticontinuum seed ``sqrt(omega) * pattern`` centred on the lattice."""
    pattern = np.asarray(pattern, dtype=float)
    if pattern.size > M or np.any(np.abs(pattern) != 1):
        raise ValueError("pattern must hold +-1 entries and fit the lattice")
    start = (M - pattern.size) // 2
    phi = np.zeros(M)
    phi[start:start + pattern.size] = np.sqrt(omega) * pattern
    Lap = dnls_laplacian(M)
    res = 0.0
    for e in np.linspace(0.0, eps, steps + 1)[1:]:
        G = lambda f, e=e: -e * Lap @ f + omega * f - f ** 3
        J = lambda f, e=e: -e * Lap + np.diag(omega - 3 * f ** 2)
        try:
            phi, res, _ = _newton(G, J, phi, tol=1e-12)
        except ProfileError as exc:
            raise ProfileError(f"continuation failed at eps = {e:.4g}: {exc}")
    return phi, res


def dnls_operators(eps: float, pattern: Sequence[int], omega: float = 1.0,
                   M: int = 41) -> OperatorPair:
    """Jacobians ``L+ = -eps Delta + omega - 3 phi^2``, ``L- = -eps Delta + omega - phi^2``.

    The continuous spectrum ``[omega, omega + 4 eps]`` of both operators sets
    ``omega+ = omega- = omega``.
    """
    phi, res = dnls_state(eps, pattern, omega, M)
    Lap = dnls_laplacian(M)
    Lp = -eps * Lap + np.diag(omega - 3 * phi ** 2)
    Lm = -eps * Lap + np.diag(omega - phi ** 2)
    prof = Profile(grid=None, values=phi, model="dnls",
                   params={"eps": eps, "pattern": list(pattern), "omega": omega, "M": M},
                   residual=res, norm2=float(phi @ phi))
    return OperatorPair(Lp=Lp, Lm=Lm, omega_plus=omega, omega_minus=omega,
                        meta={"model": "dnls", "profile": prof,
                              "band": (omega, omega + 4 * eps)})


# ---------------------------------------------------------------------------
# vortices, F(s) = -s + s^2

def cq_F(s):
    return -s + s ** 2


def cq_dF(s):
    return -1.0 + 2 * s


def _vortex_residual(rg: RadialGrid, m: int, omega: float):
    Lap = rg.radial_laplacian()
    r = rg.r
    base = -Lap + np.diag(m ** 2 / r ** 2 + omega)
    G = lambda f: base @ f + cq_F(f ** 2) * f
    J = lambda f: base + np.diag(cq_F(f ** 2) + 2 * f ** 2 * cq_dF(f ** 2))
    return G, J


def vortex_guess(rg: RadialGrid, m: int, omega: float, r0: Optional[float] = None) -> np.ndarray:
    """``A (r / (1 + r))^m sech(k (r - r0))``-type guess with a flat top.

    ``A^2`` is the smaller root of ``omega - s + s^2 = 0`` scaled up slightly,
    ``k = sqrt(omega)`` and ``r0 = 6 + 2 m`` by default.
    """
    s_star = 0.5 * (1 - np.sqrt(max(1 - 4 * omega, 0.0)))
    A = np.sqrt(max(2 * s_star, 1e-3))
    r = rg.r
    r0 = 6.0 + 2 * m if r0 is None else r0
    k = np.sqrt(omega)
    return A * (r / (1 + r)) ** m / np.cosh(k * np.maximum(r - r0, 0.0))


def vortex_profile(m: int, omega: float, rg: RadialGrid, slope_step: float = 1e-4,
                   guess: Optional[np.ndarray] = None) -> Profile:
    """Charge-``m`` vortex of ``-Delta_m phi + omega phi - phi^3 + phi^5 = 0``."""
    if m < 1:
        raise ValueError("charge m must be positive")
    if not 0 < omega < 3.0 / 16:
        raise ValueError("omega must lie in (0, 3/16) for cubic-quintic vortices")
    G, J = _vortex_residual(rg, m, omega)
    phi0 = vortex_guess(rg, m, omega) if guess is None else guess
    phi, res, trace = _newton(G, J, phi0, maxit=100)
    if np.max(np.abs(phi)) < 1e-3:
        raise ProfileError("Newton collapsed to the trivial state")
    dw = slope_step * omega
    n_pm = []
    for w in (omega + dw, omega - dw):
        Gw, Jw = _vortex_residual(rg, m, w)
        n_pm.append(rg.norm2(_newton(Gw, Jw, phi, maxit=50)[0]))
    return Profile(grid=rg, values=phi, model="vortex", params={"m": m, "omega": omega},
                   residual=res, slope=(n_pm[0] - n_pm[1]) / (2 * dw), norm2=rg.norm2(phi),
                   meta={"trace": trace})


def vortex_shooting(m: int, omega: float, r_max: float, a_bracket=(1e-3, 5.0),
                    r0: float = 1e-3, iters: int = 200) -> Tuple[np.ndarray, np.ndarray, float]:
    """Independent shooting oracle: ``phi ~ a r^m`` at the origin, bisection on ``a``.

    Trajectories with ``a`` above the vortex value escape the positive well
    (sign change or blow-up); those below stay trapped in it up to ``r_max``.
    The returned trajectory is the last escaping or trapped one, truncated at
    its event.
    """
    def rhs(r, y):
        f, fp = y
        return [fp, -fp / r + m ** 2 * f / r ** 2 + omega * f + cq_F(f ** 2) * f]

    def blow(r, y):
        return abs(y[0]) - 2.0
    blow.terminal = True

    def cross(r, y):
        return y[0]
    cross.terminal = True
    cross.direction = -1

    def shoot(a):
        y0 = [a * r0 ** m, m * a * r0 ** (m - 1)]
        sol = solve_ivp(rhs, (r0, r_max), y0, events=(blow, cross), rtol=1e-11, atol=1e-13,
                        dense_output=True)
        if sol.t_events[0].size or sol.t_events[1].size:
            return 1, sol
        return -1, sol

    lo, hi = a_bracket
    s_lo = shoot(lo)[0]
    if s_lo == shoot(hi)[0]:
        raise ProfileError("shooting bracket does not straddle the vortex")
    best = None
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        s, sol = shoot(mid)
        best = sol
        if s == s_lo:
            lo = mid
        else:
            hi = mid
        if abs(hi - lo) < 1e-15 * abs(hi):
            break
    return best.t, best.y[0], 0.5 * (lo + hi)


def _H_block(p: Profile, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Diagonal pieces and coupling of ``H_n`` on the radial grid."""
    rg = p.grid
    m, omega = p.params["m"], p.params["omega"]
    r = rg.r
    s = p.values ** 2
    Lap = rg.radial_laplacian()
    pot = omega + cq_F(s) + s * cq_dF(s)
    Dp = -Lap + np.diag((n + m) ** 2 / r ** 2 + pot)
    Dm = -Lap + np.diag((n - m) ** 2 / r ** 2 + pot)
    C = np.diag(s * cq_dF(s))
    return Dp, Dm, C


def H_n(p: Profile, n: int) -> np.ndarray:
    Dp, Dm, C = _H_block(p, n)
    return np.block([[Dp, C], [C, Dm]])


def pauli(N: int):
    I = np.eye(N)
    Z = np.zeros((N, N))
    s1 = np.block([[Z, I], [I, Z]])
    s3 = np.block([[I, Z], [Z, -I]])
    return s1, s3


def vortex_mode_operators(p: Profile, n: int) -> OperatorPair:
    """Operators for angular mode ``n`` of a charge-``m`` vortex.

    ``n = 0``: scalar ``L+ = -Delta_m + omega + F + 2 phi^2 F'``, ``L- = -Delta_m + omega + F``.
    ``n >= 1``: the ``(n, -n)`` pair stacked, ``L+ = diag(H_n, s1 H_n s1)`` and
    ``L- = diag(s3 H_n s3, s3 s1 H_n s1 s3)``.
    """
    rg = p.grid
    m, omega = p.params["m"], p.params["omega"]
    r = rg.r
    s = p.values ** 2
    if n < 0:
        raise ValueError("mode index must be non-negative; -n is stacked with n")
    if n == 0:
        Lap = rg.radial_laplacian()
        base = -Lap + np.diag(m ** 2 / r ** 2 + omega + cq_F(s))
        Lm = base
        Lp = base + np.diag(2 * s * cq_dF(s))
        return OperatorPair(Lp=Lp, Lm=Lm, omega_plus=omega, omega_minus=omega,
                            weights=rg.weights, meta={"model": "vortex", "n": 0, "profile": p})
    N = rg.n_points
    H = H_n(p, n)
    s1, s3 = pauli(N)
    Hm = s1 @ H @ s1
    Lp = sla.block_diag(H, Hm)
    Lm = sla.block_diag(s3 @ H @ s3, s3 @ Hm @ s3)
    w = np.tile(rg.weights, 4)
    return OperatorPair(Lp=Lp, Lm=Lm, omega_plus=omega, omega_minus=omega, weights=w,
                        meta={"model": "vortex", "n": n, "profile": p, "H": H, "block": 2 * N})


def vortex_kernel_vector(p: Profile) -> np.ndarray:
    """``phi' 1 - (m/r) phi s3 1`` for mode ``n = 1``.

    Components are formed as ``r^m (r^-m phi)'`` and ``r^-m (r^m phi)'``;
    both inner functions are even in ``r``, so centred differences with a
    mirrored ghost cell avoid the ``1/r^2`` amplification of the cancellation
    error in ``phi' - (m/r) phi`` near the origin.
    """
    rg = p.grid
    m = p.params["m"]
    r, h, f = rg.r, rg.h, p.values

    def d_even(g):
        ge = np.concatenate([[g[0]], g, [0.0]])
        return (ge[2:] - ge[:-2]) / (2 * h)

    u = r ** m * d_even(f / r ** m)
    v = d_even(r ** m * f) / r ** m
    return np.concatenate([u, v])


# ---------------------------------------------------------------------------
# fifth-order KdV

KDV_KEYS = ("a1", "a2", "a3", "b1", "b2", "b3")


def _kdv_parts(coef: Dict, c: float, g: Grid1D):
    D = g.derivative()
    D2 = D @ D
    D4 = D2 @ D2
    lin = coef["a3"] * D4 - coef["a2"] * D2 + (coef["a1"] + c) * np.eye(g.n_points)
    return D, D2, lin


def kdv_Lminus(coef: Dict, c: float, g: Grid1D, phi: np.ndarray) -> np.ndarray:
    """``a3 d^4 - a2 d^2 + a1 + c + 3 b1 phi - b2 (d phi d + phi'') + 6 b3 phi^2``."""
    D, D2, lin = _kdv_parts(coef, c, g)
    L = (lin + np.diag(3 * coef["b1"] * phi + 6 * coef["b3"] * phi ** 2)
         - coef["b2"] * (D @ np.diag(phi) @ D + np.diag(D2 @ phi)))
    return 0.5 * (L + L.T)


def _kdv_solve(coef: Dict, c: float, g: Grid1D, phi0: np.ndarray) -> Tuple[np.ndarray, float]:
    D, D2, lin = _kdv_parts(coef, c, g)

    def G(f):
        Df = D @ f
        return (lin @ f + 1.5 * coef["b1"] * f ** 2 - coef["b2"] * (f * (D2 @ f) + 0.5 * Df ** 2)
                + 2 * coef["b3"] * f ** 3)

    J = lambda f: kdv_Lminus(coef, c, g, f)
    even = lambda f: 0.5 * (f + g.reflect(f))
    phi, res, _ = _newton(G, J, phi0, project=even, lstsq=True)
    return phi, res


def check_wave_speed(coef: Dict, g: Grid1D) -> None:
    k = g.wavenumbers()
    cw = coef["a1"] + coef["a2"] * k ** 2 + coef["a3"] * k ** 4
    if coef["a3"] <= 0 or np.any(cw < 0):
        raise WaveSpeedError("need a3 > 0 and a1 + a2 k^2 + a3 k^4 >= 0 on the grid")


def kdv_guess(coef: Dict, c: float, g: Grid1D) -> np.ndarray:
    """KdV soliton ``-(a1 + c)/b1 sech^2(sqrt((a1 + c)/a2) x / 2)`` of the third-order part."""
    a = coef["a1"] + c
    amp = -a / coef["b1"] if coef["b1"] != 0 else 1.0
    width = np.sqrt(a / coef["a2"]) if coef["a2"] > 0 else 1.0
    return amp / np.cosh(0.5 * width * g.x) ** 2


def kdv_profile(coef: Dict, c: float, g: Grid1D, slope_step: float = 1e-4,
                guess: Optional[np.ndarray] = None) -> Profile:
    """Even traveling wave of the integrated stationary equation
    ``a3 phi'''' - a2 phi'' + (a1 + c) phi + 3/2 b1 phi^2 - b2 (phi phi'' + phi'^2 / 2) + 2 b3 phi^3 = 0``.
    """
    if g.kind != "periodic":
        raise ValueError("KdV needs a periodic grid")
    if c <= 0:
        raise ValueError("wave speed c must be positive")
    coef = {k: float(coef[k]) for k in KDV_KEYS}
    check_wave_speed(coef, g)
    phi0 = kdv_guess(coef, c, g) if guess is None else guess
    phi, res = _kdv_solve(coef, c, g, phi0)
    dc = slope_step * c
    n_p = g.norm2(_kdv_solve(coef, c + dc, g, phi)[0])
    n_m = g.norm2(_kdv_solve(coef, c - dc, g, phi)[0])
    return Profile(grid=g, values=phi, model="kdv", params={**coef, "c": c}, residual=res,
                   slope=(n_p - n_m) / (2 * dc), norm2=g.norm2(phi))


def kdv_petviashvili(coef: Dict, c: float, g: Grid1D, iters: int = 2000,
                     tol: float = 1e-13) -> np.ndarray:
    """Independent oracle for ``b2 = b3 = 0``: stabilized fixed-point iteration
    ``phi <- M^2 Lhat^{-1} N(phi)`` with ``M = (L phi, phi) / (N(phi), phi)``."""
    if coef["b2"] != 0 or coef["b3"] != 0:
        raise ValueError("the Petviashvili oracle covers b2 = b3 = 0 only")
    k = 2 * np.pi * np.fft.fftfreq(g.n_points, d=g.h)
    sym = coef["a3"] * k ** 4 + coef["a2"] * k ** 2 + coef["a1"] + c
    phi = kdv_guess(coef, c, g)
    for _ in range(iters):
        N = -1.5 * coef["b1"] * phi ** 2
        Nh = np.fft.fft(N)
        ph = np.fft.fft(phi)
        M = np.real(np.sum(sym * np.abs(ph) ** 2)) / np.real(np.sum(np.conj(ph) * Nh))
        new = np.real(np.fft.ifft(M ** 2 * Nh / sym))
        new = 0.5 * (new + g.reflect(new))
        if np.max(np.abs(new - phi)) < tol * np.max(np.abs(new)):
            return new
        phi = new
    return phi


def zero_mean_basis(g: Grid1D) -> np.ndarray:
    """Orthonormal real Fourier modes ``k = 1 .. n/2 - 1`` (cos then sin); drops the
    mean and the Nyquist mode."""
    n = g.n_points
    j = np.arange(n)
    cols = []
    for k in range(1, n // 2):
        cols.append(np.cos(2 * np.pi * k * j / n))
    for k in range(1, n // 2):
        cols.append(np.sin(2 * np.pi * k * j / n))
    Z = np.column_stack(cols)
    return Z / np.linalg.norm(Z, axis=0)


def kdv_operators(p: Profile) -> OperatorPair:
    """``L-`` and ``L+ = -D L- D`` compressed to zero-mean functions.

    In the returned coordinates the grid reflection is diagonal (``+1`` on
    cosines, ``-1`` on sines), and ``Dz`` is the compressed derivative.
    """
    g = p.grid
    coef = {k: p.params[k] for k in KDV_KEYS}
    c = p.params["c"]
    Lm_full = kdv_Lminus(coef, c, g, p.values)
    D = g.derivative()
    Z = zero_mean_basis(g)
    Lmz = Z.T @ Lm_full @ Z
    Dz = Z.T @ D @ Z
    Lpz = Dz.T @ Lmz @ Dz
    half = Z.shape[1] // 2
    R = np.concatenate([np.ones(half), -np.ones(half)])
    return OperatorPair(Lp=0.5 * (Lpz + Lpz.T), Lm=0.5 * (Lmz + Lmz.T), omega_plus=0.0,
                        omega_minus=c,
                        meta={"model": "kdv", "profile": p, "Z": Z, "Dz": Dz, "D": D,
                              "Lm_full": Lm_full, "reflection": R})


def kdv_orthogonality(ops: OperatorPair, lam: np.ndarray, W: np.ndarray,
                      zero_tol: float = 1e-6, real_tol: float = 1e-8) -> Dict:
    """Largest defect of the reflection/conjugation orthogonality relations.

    For each eigenpair ``Dz L- w = lambda w`` with ``|lambda|^2 > zero_tol``:
    the bilinear form ``w^T L- w`` vanishes; for real ``lambda`` the pair
    ``w +- R w`` satisfies ``(L- w^+-, w^+-) = +-2 rho`` and
    ``(L- w^-+, w^+-) = 0`` with ``rho = (L- R w, w)``; for imaginary
    ``lambda`` the pair ``w +- conj(w)`` satisfies ``(L- w^+-, w^+-) = 2 rho``
    and ``(L- w^-+, w^+-) = 0`` with ``rho = Re (L- w, w)``.  Defects are
    relative to ``|L-| |w|^2``.
    """
    L = ops.Lm
    R = ops.meta["reflection"]
    normL = float(np.max(np.abs(np.linalg.eigvalsh(L))))
    worst = {"bilinear": 0.0, "real_pair": 0.0, "imaginary_pair": 0.0}
    counts = {"real": 0, "imaginary": 0, "complex": 0}

    def herm(a, b):
        return complex(np.vdot(b, L @ a))

    for j in np.nonzero(np.abs(lam) ** 2 > zero_tol)[0]:
        l, w = lam[j], W[:, j]
        w = w / np.linalg.norm(w)
        scale = normL
        worst["bilinear"] = max(worst["bilinear"], abs(w @ (L @ w)) / scale)
        if abs(l.imag) <= real_tol * abs(l):
            counts["real"] += 1
            k = np.argmax(np.abs(w))
            w = np.real(w * np.exp(-1j * np.angle(w[k])))
            w = w / np.linalg.norm(w)
            Rw = R * w
            rho = float(Rw @ (L @ w))
            wp, wm = w + Rw, w - Rw
            d = max(abs(herm(wp, wp) - 2 * rho), abs(herm(wm, wm) + 2 * rho),
                    abs(herm(wm, wp)), abs(herm(wp, wm)))
            worst["real_pair"] = max(worst["real_pair"], d / scale)
        elif abs(l.real) <= real_tol * abs(l):
            counts["imaginary"] += 1
            rho = herm(w, w).real
            wp, wm = w + w.conj(), w - w.conj()
            d = max(abs(herm(wp, wp) - 2 * rho), abs(herm(wm, wm) - 2 * rho),
                    abs(herm(wm, wp)), abs(herm(wp, wm)))
            worst["imaginary_pair"] = max(worst["imaginary_pair"], d / scale)
        else:
            counts["complex"] += 1
    return {"max_defect": max(worst.values()), **{f"max_{k}": v for k, v in worst.items()},
            "counts": counts}


def kdv_lm_forms_defect(ops: OperatorPair, trials: int = 20, seed: int = 0) -> float:
    """``max |(L+ u, u) - (L- u', u')| / |(L- u', u')|`` over random zero-mean ``u``."""
    rng = np.random.default_rng(seed)
    Dz = ops.meta["Dz"]
    U = rng.standard_normal((ops.dim, trials))
    lhs = np.einsum("ij,ij->j", U, ops.Lp @ U)
    DU = Dz @ U
    rhs = np.einsum("ij,ij->j", DU, ops.Lm @ DU)
    return float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))


# ---------------------------------------------------------------------------
# profile I/O

def profile_coordinates(p: Profile) -> np.ndarray:
    if isinstance(p.grid, RadialGrid):
        return p.grid.r
    if isinstance(p.grid, Grid1D):
        return p.grid.x
    return np.arange(p.values.size, dtype=float)


def write_profile_csv(p: Profile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["coordinate", "value"])
        for xv, fv in zip(profile_coordinates(p), p.values):
            w.writerow([repr(float(xv)), repr(float(fv))])


def read_profile_csv(path) -> Tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["coordinate", "value"]:
        raise ValueError("profile CSV needs the header 'coordinate,value'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], data[:, 1]
