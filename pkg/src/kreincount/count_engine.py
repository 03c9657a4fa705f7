"""Counters of the classified spectrum and the integer identities they satisfy."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .pencil_core import Pencil, PencilError, Spectrum, inertia

MODELS = ("nls", "dnls", "vortex", "kdv", "synthetic")

# Each gamma of the stacked vortex pencil and of the KdV pencil stands for
# two lambda-plane objects counted once, hence the multiplicity factor.
_MODEL_FACTOR = {"nls": 1, "dnls": 1, "synthetic": 1, "vortex": 2, "kdv": 2}


class UnclassifiedPointError(PencilError):
    pass


@dataclass(frozen=True)
class CountReport:
    Np_neg: int = 0
    Np_zero: int = 0
    Np_pos: int = 0
    Nn_neg: int = 0
    Nn_zero: int = 0
    Nn_pos: int = 0
    Nc_plus: int = 0
    Nc_minus: int = 0
    dim_HK_neg: int = 0
    dim_HAdK_neg: int = 0
    N_A: int = 0
    N_K: int = 0
    Np_band: int = 0
    Nn_band: int = 0
    N_embedded: int = 0
    N_real: int = 0
    N_comp: int = 0
    N_imag_neg: int = 0
    N_zero_neg: int = 0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"counter {f.name} is negative")
        if self.Nc_plus != self.Nc_minus:
            raise ValueError("Nc_plus != Nc_minus")

    def as_dict(self) -> Dict[str, int]:
        return {k: int(v) for k, v in asdict(self).items()}


def participation_ratio(f: np.ndarray) -> float:
    """``(sum |f|^2)^2 / (n sum |f|^4)``; about 1 for extended vectors, 1/n for a spike."""
    a = np.abs(np.asarray(f)) ** 2
    if a.ndim > 1:
        a = a.sum(axis=1)
    s4 = float(np.sum(a ** 2))
    return float(np.sum(a)) ** 2 / (a.size * s4) if s4 > 0 else 0.0


def mark_embedded(spec: Spectrum, basis: Optional[np.ndarray] = None,
                  threshold: float = 0.2) -> Spectrum:
    """Flag in-band points whose eigenvector is localized as embedded eigenvalues.

    ``basis`` lifts pencil coordinates back to grid values before the
    localization test.  The flag is informational; counters treat every
    in-band point the same way.
    """
    pts = []
    for pt in spec.points:
        pt = replace(pt)
        if pt.in_band:
            f = pt.chain[:, 0]
            if basis is not None:
                f = basis @ f
            pt.is_embedded = participation_ratio(f) < threshold
        pts.append(pt)
    return replace(spec, points=pts)


def tally(spec: Spectrum, p: Pencil, delta: float, zero_tol: float = 0.0,
          inertia_tol: float = 1e-9) -> CountReport:
    """Sort classified points into the sign counters.

    ``Np_pos`` counts isolated points ``0 < gamma < omega+ omega-`` only;
    in-band points go to ``Np_band``.  Negative-signature contributions of
    in-band points are kept in ``Nn_pos`` since the index identities need
    every one of them, and are also reported separately in ``Nn_band``.
    """
    c = dict(Np_neg=0, Np_zero=0, Np_pos=0, Nn_neg=0, Nn_zero=0, Nn_pos=0,
             Nc_plus=0, Nc_minus=0, Np_band=0, Nn_band=0, N_embedded=0)
    for pt in spec.points:
        if not pt.classified:
            raise UnclassifiedPointError(f"point gamma = {pt.gamma} carries no Krein class")
        g = complex(pt.gamma)
        if g.imag > 0:
            c["Nc_plus"] += pt.alg_mult
        elif g.imag < 0:
            c["Nc_minus"] += pt.alg_mult
        elif g.real < -zero_tol:
            c["Np_neg"] += pt.krein_np
            c["Nn_neg"] += pt.krein_nn
        elif g.real <= zero_tol:
            c["Np_zero"] += pt.krein_np
            c["Nn_zero"] += pt.krein_nn
        else:
            c["Nn_pos"] += pt.krein_nn
            if pt.in_band:
                c["Np_band"] += pt.krein_np
                c["Nn_band"] += pt.krein_nn
                c["N_embedded"] += int(pt.is_embedded)
            else:
                c["Np_pos"] += pt.krein_np
    evA = np.linalg.eigvalsh(p.A)
    evK = np.linalg.eigvalsh(p.K)
    c["N_A"] = int(np.sum(evA < p.omega_plus))
    c["N_K"] = int(np.sum((evK <= 0) | (evK > 1.0 / p.omega_minus)))
    c["dim_HK_neg"] = inertia(p.K, inertia_tol)[0]
    c["dim_HAdK_neg"] = inertia(p.A + delta * p.K, inertia_tol)[0]
    return CountReport(**c)


def _identity(name: str, lhs: int, rhs: int, relation: str = "==") -> Dict:
    ok = {"==": lhs == rhs, "<=": lhs <= rhs, ">=": lhs >= rhs}[relation]
    return {"name": name, "lhs": int(lhs), "rhs": int(rhs), "relation": relation, "pass": bool(ok)}


def verify_main(r: CountReport) -> Dict:
    """Both negative-index identities and the closure ``Delta N = 2 Nn+ + 2 Nn0 >= 0``."""
    shared = r.Nn_zero + r.Nn_pos + r.Nc_plus
    checks = [
        _identity("negative_index_A", r.Np_neg + shared, r.dim_HAdK_neg),
        _identity("negative_index_K", r.Nn_neg + shared, r.dim_HK_neg),
    ]
    n_neg = r.dim_HAdK_neg + r.dim_HK_neg
    n_unst = r.Np_neg + r.Nn_neg + 2 * r.Nc_plus
    dN = n_neg - n_unst
    checks.append(_identity("closure_negative_index", dN, 2 * r.Nn_pos + 2 * r.Nn_zero))
    checks.append(_identity("closure_nonnegative", dN, 0, ">="))
    return {"pass": all(c["pass"] for c in checks), "checks": checks}


def verify_upper_bound(r: CountReport, p: Pencil) -> Dict:
    """Upper bound on isolated eigenvalues; not applicable when ``omega+ == 0``."""
    if p.omega_plus <= 0:
        return {"pass": None, "applicable": False, "checks": [],
                "note": "omega_plus = 0; the bound needs a positive continuum edge for A"}
    lhs = r.Np_neg + r.Np_zero + r.Np_pos + r.Nc_plus
    checks = [
        _identity("upper_bound", lhs, r.N_A + r.N_K, "<="),
        _identity("total_number", lhs + r.Nn_neg + r.Nn_zero + (r.Nn_pos - r.Nn_band) + r.Nc_minus,
                  r.N_A + r.N_K + r.dim_HK_neg, "<="),
    ]
    return {"pass": all(c["pass"] for c in checks), "applicable": True, "checks": checks,
            "note": f"{r.N_embedded} embedded eigenvalue(s) reported, not folded into the bound"}


def lambda_counters(spec: Spectrum, model: str, n_zero_neg: int = 0,
                    zero_tol: float = 0.0) -> Dict[str, int]:
    """``gamma = -lambda^2`` counters of unstable and negative-signature modes.

    ``n_zero_neg`` is the negative-signature count at ``gamma = 0`` in pencil
    units; it is divided by the model factor only for the vortex pencil,
    where the two stacked blocks double every kernel contribution.
    """
    if model not in _MODEL_FACTOR:
        raise ValueError(f"unknown model {model!r}")
    f = _MODEL_FACTOR[model]
    real = comp = imag = 0
    for pt in spec.points:
        g = complex(pt.gamma)
        if g.imag > 0:
            comp += pt.alg_mult
        elif g.imag == 0 and g.real < -zero_tol:
            real += pt.alg_mult
        elif g.imag == 0 and g.real > zero_tol:
            imag += pt.krein_nn
    zneg = n_zero_neg // f if model == "vortex" else n_zero_neg
    return {"N_real": real // f, "N_comp": comp // f, "N_imag_neg": imag // f, "N_zero_neg": zneg,
            "raw_real": real, "raw_comp": comp, "raw_imag_neg": imag}


def with_lambda(r: CountReport, lam: Dict[str, int]) -> CountReport:
    return replace(r, N_real=lam["N_real"], N_comp=lam["N_comp"],
                   N_imag_neg=lam["N_imag_neg"], N_zero_neg=lam["N_zero_neg"])


def closure_check(model: str, r: CountReport, n_Lp: int, n_Lm: int,
                  n0: Optional[int] = None, n_minus: Optional[int] = None,
                  n_Hn: Optional[int] = None) -> Dict:
    """Model-specific closure relations evaluated as exact integer identities.

    ``n_Hn`` is the negative index of the single-mode operator for vortices.
    """
    checks: List[Dict] = []
    if model == "nls":
        checks.append(_identity("nls_index", r.Np_neg + r.Nn_zero + r.Nn_pos + r.Nc_plus,
                                n_Lp - (n0 or 0) + (n_minus or 0)))
    elif model == "dnls":
        checks.append(_identity("dnls_plus", r.Np_neg + r.Nn_pos + r.Nc_plus, n_Lp - 1))
        checks.append(_identity("dnls_minus", r.Nn_neg + r.Nn_pos + r.Nc_plus, n_Lm))
    elif model == "vortex":
        if n_Hn is None:
            raise ValueError("vortex closure needs n(H_n)")
        # doubled to keep both sides integer; N_real is even
        checks.append(_identity("closure_relation2", r.N_real + 2 * r.N_comp,
                                2 * n_Hn - 2 * r.N_zero_neg - 2 * r.N_imag_neg))
        checks.append(_identity("n_real_even", r.N_real % 2, 0))
        if n0 is not None and n_minus is not None:
            checks.append(_identity("n0_equals_n_minus", n0, n_minus))
    elif model == "kdv":
        checks.append(_identity("closure_relation1", r.N_real + 2 * r.N_comp + 2 * r.N_imag_neg,
                                n_Lm - r.N_zero_neg))
    elif model == "synthetic":
        pass
    else:
        raise ValueError(f"unknown model {model!r}")
    return {"model": model, "pass": all(c["pass"] for c in checks), "checks": checks}
