import numpy as np
import pytest
from hypothesis import given, strategies as st

from kreincount import count_engine as ce
from kreincount.constrained import select_delta
from kreincount.oracle import random_spd_pencil, random_trial, reduction_route_counts
from kreincount.pencil_core import Pencil, classify, inertia


def _run(p):
    spec = classify(p)
    _, delta = select_delta(p, spec)
    return spec, ce.tally(spec, p, delta)


# ---------------------------------------------------------------- tally

def test_tally_diag_example(diag_pencil):
    _, r = _run(diag_pencil)
    d = r.as_dict()
    assert d.pop("Np_neg") == 1 and d.pop("Nn_neg") == 1
    assert d.pop("dim_HK_neg") == 1 and d.pop("dim_HAdK_neg") == 1
    for k in ("Np_zero", "Np_pos", "Nn_zero", "Nn_pos", "Nc_plus", "Nc_minus"):
        assert d[k] == 0


def test_tally_complex_example(complex_pencil):
    _, r = _run(complex_pencil)
    assert r.Nc_plus == r.Nc_minus == 1 and r.dim_HK_neg == 1
    assert r.Np_neg == r.Nn_neg == r.Np_pos == r.Nn_pos == 0


def test_tally_positive_metric():
    p = random_spd_pencil(6, seed=2)
    _, r = _run(p)
    assert r.Nn_neg == r.Nn_zero == r.Nn_pos == r.Nc_plus == 0
    assert (r.Np_neg, r.Np_zero, r.Np_pos) == inertia(p.A)


def test_tally_rejects_unclassified(diag_pencil):
    from kreincount.pencil_core import solve_pencil
    spec = solve_pencil(diag_pencil)
    for pt in spec.points:
        pt.krein_np = None
    with pytest.raises(ce.UnclassifiedPointError):
        ce.tally(spec, diag_pencil, 0.5)


def test_count_report_rejects_negative():
    with pytest.raises(ValueError):
        ce.CountReport(Np_neg=-1)


def test_count_report_rejects_unpaired_complex():
    with pytest.raises(ValueError):
        ce.CountReport(Nc_plus=1)


def test_participation_ratio():
    assert ce.participation_ratio(np.ones(10)) == pytest.approx(1.0)
    e = np.zeros(10)
    e[3] = 1.0
    assert ce.participation_ratio(e) == pytest.approx(0.1)


# ---------------------------------------------------------------- verify_main

def _closure(res):
    return {c["name"]: c for c in res["checks"]}


def test_verify_main_diag(diag_pencil):
    res = ce.verify_main(_run(diag_pencil)[1])
    c = _closure(res)
    assert res["pass"]
    assert (c["negative_index_A"]["lhs"], c["negative_index_A"]["rhs"]) == (1, 1)
    assert (c["negative_index_K"]["lhs"], c["negative_index_K"]["rhs"]) == (1, 1)
    assert c["closure_negative_index"]["lhs"] == 0


def test_verify_main_complex(complex_pencil):
    res = ce.verify_main(_run(complex_pencil)[1])
    c = _closure(res)
    assert res["pass"]
    assert (c["negative_index_A"]["lhs"], c["negative_index_K"]["lhs"]) == (1, 1)
    assert c["closure_negative_index"]["lhs"] == 0


def test_verify_main_jordan(jordan_pencil):
    _, r = _run(jordan_pencil)
    assert r.Nn_zero == 1 and r.dim_HK_neg == 1 and r.dim_HAdK_neg == 1
    assert ce.verify_main(r)["pass"]


def test_verify_main_detects_broken_identity():
    r = ce.CountReport(Np_neg=1, dim_HAdK_neg=0)
    res = ce.verify_main(r)
    assert not res["pass"]
    assert not _closure(res)["negative_index_A"]["pass"]


# ---------------------------------------------------------------- upper bound

def test_upper_bound_not_applicable():
    p = Pencil(np.diag([1.0, 2.0]), np.eye(2), omega_plus=0.0)
    _, r = _run(p)
    ub = ce.verify_upper_bound(r, p)
    assert ub["applicable"] is False and ub["pass"] is None


def test_upper_bound_sylvester_bookkeeping():
    # thresholds above every eigenvalue of A and of K^-1
    p = random_spd_pencil(5, seed=9, omega_minus=1e-3)
    _, r = _run(p)
    assert r.N_A == 5 and r.N_K == 0
    assert ce.verify_upper_bound(r, p)["pass"]


# ---------------------------------------------------------------- lambda counters

def test_lambda_counters_real_pair():
    p = Pencil(np.diag([-2.0, 1.0]), np.eye(2))
    spec = classify(p)
    lam = ce.lambda_counters(spec, "nls")
    assert (lam["N_real"], lam["N_comp"], lam["N_imag_neg"]) == (1, 0, 0)


def test_lambda_counters_vortex_halves(diag_pencil):
    # a double gamma < 0 is one lambda pair in a stacked pencil
    spec = classify(diag_pencil)
    assert ce.lambda_counters(spec, "vortex")["N_real"] == 1
    assert ce.lambda_counters(spec, "nls")["N_real"] == 2


def test_lambda_counters_zero_neg_rule():
    spec = classify(Pencil(np.diag([1.0]), np.eye(1)))
    assert ce.lambda_counters(spec, "vortex", n_zero_neg=2)["N_zero_neg"] == 1
    assert ce.lambda_counters(spec, "kdv", n_zero_neg=1)["N_zero_neg"] == 1


def test_lambda_counters_unknown_model(diag_pencil):
    with pytest.raises(ValueError):
        ce.lambda_counters(classify(diag_pencil), "heat")


# ---------------------------------------------------------------- closure relations

def test_closure_dnls_out_of_phase():
    # out-of-phase pair: n(L+) = 2, n(L-) = 1
    r = ce.CountReport(Nn_pos=1, N_imag_neg=1)
    res = ce.closure_check("dnls", r, n_Lp=2, n_Lm=1)
    assert res["pass"]


def test_closure_kdv_stable():
    # n(L-) = 1 and a positive slope give N_zero_neg = 1 and no unstable modes
    r = ce.CountReport(Nn_zero=1, N_zero_neg=1)
    assert ce.closure_check("kdv", r, n_Lp=0, n_Lm=1)["pass"]


def test_closure_vortex_trivial_block():
    assert ce.closure_check("vortex", ce.CountReport(), 0, 0, n_Hn=0)["pass"]


def test_closure_vortex_needs_index():
    with pytest.raises(ValueError):
        ce.closure_check("vortex", ce.CountReport(), 0, 0)


def test_closure_vortex_odd_real_fails():
    r = ce.CountReport(N_real=1)
    res = ce.closure_check("vortex", r, 0, 0, n_Hn=1)
    names = {c["name"]: c["pass"] for c in res["checks"]}
    assert names["n_real_even"] is False


# ---------------------------------------------------------------- properties

pencils = st.integers(0, 2**31 - 1).map(lambda s: random_trial(s)[0])


@given(pencils)
def test_identities_hold_on_random_pencils(p):
    _, r = _run(p)
    assert ce.verify_main(r)["pass"]


@given(pencils)
def test_closure_is_even_and_nonnegative(p):
    _, r = _run(p)
    dN = r.dim_HAdK_neg + r.dim_HK_neg - (r.Np_neg + r.Nn_neg + 2 * r.Nc_plus)
    assert dN >= 0 and dN % 2 == 0


@given(pencils)
def test_route_agreement(p):
    _, r = _run(p)
    rc = reduction_route_counts(p)
    assert all(r.as_dict()[k] == v for k, v in rc.items())


@given(pencils)
def test_counters_sum_to_dimension(p):
    _, r = _run(p)
    total = (r.Np_neg + r.Nn_neg + r.Np_zero + r.Nn_zero + r.Np_pos + r.Np_band + r.Nn_pos
             + r.Nc_plus + r.Nc_minus)
    assert total == p.dim
