"""End-to-end pipelines: model -> operators -> constrained pencil -> counts
and verifications; plus the random-pencil and Sylvester suites."""
from __future__ import annotations

import json
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from . import count_engine as ce
from . import oracle
from .config import ConfigError, RunConfig
from .constrained import (OperatorPair, admissible_deltas, check_shift, project_pencil,
                          proposition1_indices, select_delta, zero_splitting)
from .pencil_core import Pencil, PencilError, Spectrum, classify, inertia
from .pontryagin import pontryagin_checks
from .wave_operators import (Grid1D, ProfileError, RadialGrid, dnls_operators, kdv_lm_forms_defect,
                             kdv_operators, kdv_orthogonality, kdv_profile, nls_grid,
                             nls_operators, nls_soliton, vortex_mode_operators, vortex_profile)

# numerical thresholds of the verification layer
SYMMETRY_TOL = 1e-10
PAIRING_TOL = 1e-8
KDV_ORTH_TOL = 1e-8
KDV_FORMS_TOL = 1e-10
NLS_SLOPE_RTOL = 1e-2

SPECTRA_COLUMNS = ("re_gamma", "im_gamma", "re_lambda", "im_lambda", "alg_mult", "geom_mult",
                   "krein_np", "krein_nn", "embedded_flag")


def _check(name: str, ok: Optional[bool], **data) -> Dict[str, Any]:
    return {"name": name, "pass": None if ok is None else bool(ok), **data}


def _lambda_of(gamma: complex) -> complex:
    """Root of ``gamma = -lambda^2`` with ``Re lambda > 0``, or ``Im lambda >= 0`` on the axis."""
    lam = np.sqrt(-complex(gamma))
    if lam.real < 0 or (lam.real == 0 and lam.imag < 0):
        lam = -lam
    return complex(lam)


def spectrum_rows(spec: Spectrum) -> List[List]:
    rows = []
    for pt in spec.points:
        lam = _lambda_of(pt.gamma)
        rows.append([pt.gamma.real, pt.gamma.imag, lam.real, lam.imag, pt.alg_mult, pt.geom_mult,
                     pt.krein_np, pt.krein_nn, int(bool(pt.is_embedded))])
    return rows


# ---------------------------------------------------------------------------
# model assembly

def build_blocks(cfg: RunConfig) -> Tuple[List[Tuple[str, OperatorPair]], Dict[str, Any]]:
    """Operator pairs to analyse, labelled, with profile diagnostics."""
    P, G = cfg.params, cfg.grid
    if cfg.model == "nls":
        g = nls_grid(P["omega"], G["n_points"], G["L"])
        prof = nls_soliton(P["sigma"], P["omega"], g)
        s, w = P["sigma"], P["omega"]
        # |phi|^2 scales as omega^(1/sigma - 1/2)
        analytic = (1.0 / s - 0.5) * prof.norm2 / w
        info = _profile_info(prof)
        info.update(slope_analytic=analytic,
                    slope_relative_error=abs(prof.slope - analytic) / max(abs(analytic), 1e-300))
        return [("main", nls_operators(prof))], info
    if cfg.model == "dnls":
        ops = dnls_operators(P["eps"], P["pattern"], P["omega"], P["sites"])
        prof = ops.meta["profile"]
        return [("main", ops)], {"residual": prof.residual, "norm2": prof.norm2,
                                 "band": list(ops.meta["band"])}
    if cfg.model == "vortex":
        rg = RadialGrid(G["n_points"], float(G["r_max"]))
        prof = vortex_profile(P["m"], P["omega"], rg)
        return [(f"n={n}", vortex_mode_operators(prof, n)) for n in P["modes"]], _profile_info(prof)
    if cfg.model == "kdv":
        g = Grid1D(G["n_points"], float(G["L"]), kind="periodic")
        coef = {k: P[k] for k in ("a1", "a2", "a3", "b1", "b2", "b3")}
        prof = kdv_profile(coef, P["c"], g)
        return [("main", kdv_operators(prof))], _profile_info(prof)
    if cfg.model == "synthetic":
        return [("main", synthetic_pencil(cfg))], {}
    raise ConfigError(f"unknown model {cfg.model!r}")


def _profile_info(prof) -> Dict[str, Any]:
    v = prof.values
    return {"residual": prof.residual, "slope": prof.slope, "norm2": prof.norm2,
            "max": float(np.max(np.abs(v))),
            "boundary_decay": float(abs(v[-1]) / max(np.max(np.abs(v)), 1e-300))}


def synthetic_pencil(cfg: RunConfig) -> Pencil:
    P = cfg.params
    if P["pencil"] is not None:
        try:
            data = np.load(P["pencil"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read pencil file {P['pencil']}: {exc}")
        if "A" not in data or "K" not in data:
            raise ConfigError("pencil file needs arrays 'A' and 'K'")
        A, K = data["A"], data["K"]
    else:
        A, K = np.asarray(P["A"], float), np.asarray(P["K"], float)
    if np.linalg.norm(A - A.T) > 1e-12 * max(np.linalg.norm(A), 1) or \
            np.linalg.norm(K - K.T) > 1e-12 * max(np.linalg.norm(K), 1):
        raise ConfigError("synthetic A and K must be symmetric")
    try:
        return Pencil(A, K, omega_plus=float(P["omega_plus"]), omega_minus=float(P["omega_minus"]))
    except PencilError as exc:
        raise ConfigError(str(exc))


# ---------------------------------------------------------------------------
# block analysis

def _counters(spec: Spectrum, p: Pencil, delta: float, model: str, zero_tol: float,
              inertia_tol: float) -> ce.CountReport:
    r = ce.tally(spec, p, delta, zero_tol=zero_tol, inertia_tol=inertia_tol)
    lam = ce.lambda_counters(spec, model, n_zero_neg=r.Nn_zero, zero_tol=zero_tol)
    return ce.with_lambda(r, lam)


def counter_block_bytes(r: ce.CountReport) -> bytes:
    return json.dumps(r.as_dict()).encode()


def analyze_pencil(p: Pencil, model: str, tol: Dict[str, float],
                   delta: Optional[float] = None, seed: int = 0,
                   basis: Optional[np.ndarray] = None) -> Dict[str, Any]:
    """Classification, counters and the model-independent verifications.

    ``basis`` lifts pencil vectors to grid values for the embedded-eigenvalue flag.
    """
    spec = classify(p, cluster_tol=tol["cluster"], zero_tol=tol["zero"])
    spec = ce.mark_embedded(spec, basis)
    sigma, auto_delta = select_delta(p, spec, zero_tol=tol["zero"])
    if delta is None:
        delta = auto_delta
    else:
        if sigma is not None and not 0 < delta < abs(sigma):
            raise ConfigError(f"delta = {delta} is not in (0, |sigma_-1|) = (0, {abs(sigma):.6g})")
        check_shift(p, delta)
    r = _counters(spec, p, delta, model, tol["zero"], tol["inertia"])
    checks = []
    vm = ce.verify_main(r)
    checks.extend(_check(c["name"], c["pass"], lhs=c["lhs"], rhs=c["rhs"], relation=c["relation"])
                  for c in vm["checks"])
    ub = ce.verify_upper_bound(r, p)
    if ub["applicable"]:
        checks.extend(_check(c["name"], c["pass"], lhs=c["lhs"], rhs=c["rhs"],
                             relation=c["relation"]) for c in ub["checks"])
    else:
        checks.append(_check("upper_bound", None, note=ub["note"]))
    # delta invariance over two admissible shifts
    d1, d2 = admissible_deltas(sigma, delta)
    blocks = []
    for d in (d1, d2):
        check_shift(p, d)
        blocks.append(counter_block_bytes(_counters(spec, p, d, model, tol["zero"], tol["inertia"])))
    checks.append(_check("delta_invariance", blocks[0] == blocks[1], deltas=[d1, d2]))
    pc = pontryagin_checks(p, spec, delta, seed=seed)
    checks.append(_check("pontryagin", pc["pass"], **{k: v for k, v in pc.items() if k != "pass"}))
    zs = None
    if any(pt.gamma == 0 for pt in spec.points):
        zs = zero_splitting(p, spec, delta, inertia_tol=tol["kernel"])
        checks.append(_check("zero_splitting", zs["pass"] and zs["complete"],
                             **{k: v for k, v in zs.items() if k != "pass"}))
    return {"spec": spec, "report": r, "delta": delta, "sigma_neg1": sigma, "checks": checks,
            "zero_splitting": zs, "pontryagin": pc}


def analyze_block(ops: OperatorPair, model: str, tol: Dict[str, float],
                  delta: Optional[float] = None, seed: int = 0) -> Dict[str, Any]:
    """Full pipeline on one operator pair."""
    checks = []
    defect = ops.symmetry_defect()
    checks.append(_check("operator_symmetry", defect <= SYMMETRY_TOL, defect=defect))
    Sp, Sm = ops.sym("p"), ops.sym("m")
    iLp = inertia(Sp, tol["kernel"])
    iLm = inertia(Sm, tol["kernel"])
    cp = project_pencil(ops, tol["kernel"])
    res = analyze_pencil(cp.pencil, model, tol, delta, seed, basis=cp.basis)
    spec, r = res["spec"], res["report"]
    checks.extend(res["checks"])
    pi = proposition1_indices(ops, cp, tol=tol["kernel"], inertia_tol=tol["inertia"])
    zs = res["zero_splitting"]
    pi.n_minus = zs["n_minus"] if zs else 0
    pi.n_plus = zs["n_plus"] if zs else 0
    pi.delta = res["delta"]
    pi.sigma_neg1 = res["sigma_neg1"]
    checks.append(_check("proposition1", pi.consistent, n_A=pi.nA_direct, n_L_plus=pi.nL_plus,
                         n0=pi.n0))
    # model closure relations
    n_Hn = None
    if model == "vortex" and ops.meta.get("n", 0) >= 1:
        n_Hn = inertia(_weighted_sym(ops.meta["H"], ops.weights[:ops.meta["block"]]),
                       tol["kernel"])[0]
        cl = ce.closure_check("vortex", r, iLp[0], iLm[0], pi.n0, pi.n_minus, n_Hn)
        checks.extend(_check(c["name"], c["pass"], lhs=c["lhs"], rhs=c["rhs"],
                             relation=c["relation"]) for c in cl["checks"])
    elif model in ("nls", "dnls", "kdv") or (model == "vortex"):
        tag = "nls" if model == "vortex" else model
        cl = ce.closure_check(tag, r, iLp[0], iLm[0], pi.n0, pi.n_minus)
        checks.extend(_check(c["name"], c["pass"], lhs=c["lhs"], rhs=c["rhs"],
                             relation=c["relation"]) for c in cl["checks"])
    # direct linearization oracle
    ds = oracle.direct_linearized_spectrum(ops, model)
    dc = oracle.direct_counts(ops, model, ds, zero_tol=tol["zero"], kernel_tol=tol["kernel"])
    diff = oracle.pencil_vs_direct(r, dc)
    checks.append(_check("pencil_vs_direct", not diff,
                         diff={k: list(v) for k, v in diff.items()}))
    sym = oracle.lambda_symmetry_defect(ds.lam)
    checks.append(_check("lambda_symmetry", max(sym.values()) <= PAIRING_TOL, **sym))
    extras: Dict[str, Any] = {}
    if model == "kdv":
        orth = kdv_orthogonality(ops, ds.lam, ds.W, zero_tol=tol["zero"])
        checks.append(_check("kdv_orthogonality", orth["max_defect"] <= KDV_ORTH_TOL, **orth))
        forms = kdv_lm_forms_defect(ops, seed=seed)
        checks.append(_check("kdv_lm_forms", forms <= KDV_FORMS_TOL, defect=forms))
        # omega+ = 0: the positive part of A + delta K must stay at least delta / c from zero
        c_speed = float(ops.meta["profile"].params["c"])
        ev = np.linalg.eigvalsh(cp.pencil.A + res["delta"] * cp.pencil.K)
        gap = float(np.min(ev[ev > 0], initial=np.inf))
        checks.append(_check("kdv_shift_gap", gap >= res["delta"] / c_speed, gap=gap,
                             bound=res["delta"] / c_speed))
    if model == "vortex" and ops.meta.get("n", 0) >= 1:
        extras["n_Hn"] = n_Hn
    return {
        "operator_inertia": {"L_plus": dict(zip("nzp", iLp)), "L_minus": dict(zip("nzp", iLm))},
        "constrained_indices": pi.as_dict(),
        "counters": r.as_dict(),
        "verifications": checks,
        "direct_counters": {k: int(v) for k, v in dc.items()},
        "extras": extras,
        "spec": spec,
        "pass": all(c["pass"] is not False for c in checks),
    }


def _weighted_sym(L: np.ndarray, w: np.ndarray) -> np.ndarray:
    s = np.sqrt(w)
    M = s[:, None] * L / s[None, :]
    return 0.5 * (M + M.T)


def analyze_config(cfg: RunConfig) -> Tuple[Dict[str, Any], Dict[str, List[List]]]:
    """Report document and spectra tables for one configuration."""
    blocks, prof_info = build_blocks(cfg)
    report: Dict[str, Any] = {
        "inputs": cfg.as_dict(),
        "profile": prof_info,
        "operator_inertia": {},
        "constrained_indices": {},
        "counters": {},
        "verifications": {},
        "spectra_files": {},
        "pass": True,
    }
    spectra: Dict[str, List[List]] = {}
    for label, obj in blocks:
        if isinstance(obj, Pencil):
            res = analyze_pencil(obj, cfg.model, cfg.tolerances, cfg.delta, cfg.seed)
            rc = oracle.reduction_route_counts(obj, zero_tol=cfg.tolerances["zero"])
            diff = oracle.pencil_vs_direct(res["report"], rc)
            res["checks"].append(_check("pencil_vs_reduction", not diff,
                                        diff={k: list(v) for k, v in diff.items()}))
            iA, iK = inertia(obj.A, cfg.tolerances["inertia"]), inertia(obj.K, cfg.tolerances["inertia"])
            block = {
                "operator_inertia": {"A": dict(zip("nzp", iA)), "K": dict(zip("nzp", iK))},
                "constrained_indices": {"delta": res["delta"], "sigma_neg1": res["sigma_neg1"]},
                "counters": res["report"].as_dict(),
                "verifications": res["checks"],
                "spec": res["spec"],
                "pass": all(c["pass"] is not False for c in res["checks"]),
            }
        else:
            block = analyze_block(obj, cfg.model, cfg.tolerances, cfg.delta, cfg.seed)
        if cfg.model == "nls":
            ok = (np.sign(prof_info["slope"]) == np.sign(prof_info["slope_analytic"])
                  and prof_info["slope_relative_error"] <= NLS_SLOPE_RTOL)
            block["verifications"].append(_check(
                "nls_slope", ok, numeric=prof_info["slope"], analytic=prof_info["slope_analytic"],
                relative_error=prof_info["slope_relative_error"]))
            block["pass"] = block["pass"] and bool(ok)
        if cfg.model == "kdv":
            # (K phi, phi) = -slope / 2 fixes the negative zero count
            expect = 1 if prof_info["slope"] > 0 else 0
            ok = block["counters"]["N_zero_neg"] == expect
            block["verifications"].append(_check(
                "kdv_zero_count_from_slope", ok, slope=prof_info["slope"],
                N_zero_neg=block["counters"]["N_zero_neg"], expected=expect))
            block["pass"] = block["pass"] and bool(ok)
        for key in ("operator_inertia", "constrained_indices", "counters", "verifications"):
            report[key][label] = block[key]
        spectra[label] = spectrum_rows(block["spec"])
        report["pass"] = report["pass"] and block["pass"]
    return report, spectra


def failed_checks(report: Dict[str, Any]) -> List[str]:
    out = []
    for label, checks in report["verifications"].items():
        out.extend(f"{label}: {c['name']}" for c in checks if c["pass"] is False)
    return out


# ---------------------------------------------------------------------------
# random suites

def trial_seeds(seed: int, trials: int) -> List[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(trials)]


def random_suite(trials: int, dim_range: Tuple[int, int] = (2, 10), seed: int = 7,
                 pontryagin: bool = True) -> Dict[str, Any]:
    """Random pencils through the full chain: identities, both pencil routes,
    and optionally the Pontryagin checks."""
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    lo, hi = dim_range
    if not 2 <= lo <= hi:
        raise ConfigError(f"invalid dimension range {lo}..{hi}")
    kinds = {"generic": 0, "jordan": 0, "complex": 0}
    failures = []
    for i, s in enumerate(trial_seeds(seed, trials)):
        p, info = oracle.random_trial(s, (lo, hi))
        kinds[info["kind"]] += 1
        try:
            spec = classify(p)
            _, delta = select_delta(p, spec)
            r = ce.tally(spec, p, delta)
            reasons = [c["name"] for c in ce.verify_main(r)["checks"] if not c["pass"]]
            diff = oracle.pencil_vs_direct(r, oracle.reduction_route_counts(p))
            if diff:
                reasons.append("route_agreement")
            if r.Nc_plus != r.Nc_minus:
                reasons.append("conjugate_symmetry")
            if pontryagin and not pontryagin_checks(p, spec, delta, seed=s)["pass"]:
                reasons.append("pontryagin")
        except PencilError as exc:
            reasons = [f"{type(exc).__name__}: {exc}"]
        if reasons:
            failures.append({"trial": i, "seed": s, "dim": info["dim"], "kind": info["kind"],
                             "reasons": reasons})
    return {"trials": trials, "dims": [lo, hi], "seed": seed, "kinds": kinds,
            "passed": trials - len(failures), "failed": len(failures), "failures": failures}


def sylvester_suite(trials: int = 100, seed: int = 11, dim_range: Tuple[int, int] = (2, 10)
                    ) -> Dict[str, Any]:
    """Positive definite ``K``: no negative-signature or complex counts, and the
    sign counts of ``gamma`` reproduce ``inertia(A)``."""
    failures = []
    for i, s in enumerate(trial_seeds(seed, trials)):
        rng = np.random.default_rng(s)
        dim = int(rng.integers(dim_range[0], dim_range[1] + 1))
        p = oracle.random_spd_pencil(dim, seed=int(rng.integers(2**31 - 1)))
        spec = classify(p)
        _, delta = select_delta(p, spec)
        r = ce.tally(spec, p, delta)
        iA = inertia(p.A)
        ok = (r.Nn_neg == r.Nn_zero == r.Nn_pos == r.Nc_plus == r.Nc_minus == 0
              and (r.Np_neg, r.Np_zero, r.Np_pos) == iA)
        if not ok:
            failures.append({"trial": i, "seed": s, "counters": r.as_dict(), "inertia_A": list(iA)})
    return {"trials": trials, "passed": trials - len(failures), "failures": failures}
