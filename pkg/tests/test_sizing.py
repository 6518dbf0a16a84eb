import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from hdcharge.errors import CapacityBelowPeak, DegeneratePrices, EmptyProfiles, InfeasibleEta
from hdcharge.sizing import (CASE_PRICES, PriceSet, SizingInputs, charger_reactive_capacity,
                             classify_scenario, cost, cost_curve, cost_derivative, dumps_result,
                             fit_alpha_beta, inputs_from_dict, max_charger_size,
                             optimal_charger_size, prices_from_dict, settled_charger_size,
                             size_system, storage_requirements)

CASE2 = CASE_PRICES[2]
CASE1 = CASE_PRICES[1]
prices_st = st.builds(PriceSet, *(st.floats(0, 2e4),) * 4, st.floats(0, 10), st.floats(0, 5))


def test_reactive_capacity_values():
    assert charger_reactive_capacity(3600.0, 3600.0) == 0.0
    assert charger_reactive_capacity(3718.0, 3600.0) == pytest.approx(929.26, abs=0.01)
    assert charger_reactive_capacity(3752.0, 3600.0) == pytest.approx(1057.1, abs=0.05)
    with pytest.raises(CapacityBelowPeak):
        charger_reactive_capacity(3500.0, 3600.0)


def test_case2_price_fold_and_cost():
    assert CASE2.lambda_pv_es == pytest.approx(4489.75, abs=1e-9)
    assert cost(3718.0, 364.0, CASE2) == pytest.approx(68_394_677.0, abs=1e-6)
    assert cost(3718.0, 0.0, CASE2) == 17956.0 * 3718.0
    with pytest.raises(ValueError):
        cost(-1.0, 0.0, CASE2)


@given(prices_st)
def test_price_identity(p):
    assert p.lambda_pv_es == p.lambda_pv + p.alpha * p.lambda_es_e + p.beta * p.lambda_es_p


def test_negative_price_rejected():
    with pytest.raises(ValueError):
        PriceSet(-1.0, 0, 0, 0)


def test_classification():
    lp = CASE2.lambda_pv_es
    base = dict(lambda_pv=1000.0, lambda_es_e=661.0, lambda_es_p=350.0, alpha=4.75, beta=1.0)
    assert classify_scenario(CASE2) == 2
    assert classify_scenario(CASE1) == 2
    assert classify_scenario(PriceSet(lp, **base)) == 3
    assert classify_scenario(PriceSet(0.0, **base)) == 5
    assert classify_scenario(PriceSet(10 * lp, **base)) == 1
    assert classify_scenario(PriceSet(0.5 * lp, **base)) == 4
    assert classify_scenario(PriceSet(0.05 * lp, **base)) == 5
    assert classify_scenario(PriceSet(5.0, 0, 0, 0)) == 1


def test_optimal_sizes():
    assert settled_charger_size(17956.0, 4489.75, 3600.0) == pytest.approx(3718.1, abs=0.1)
    assert round(optimal_charger_size(CASE2, 3600.0, 1294.0)) == 3718
    assert settled_charger_size(5268.0, 4489.0, 3600.0) == pytest.approx(6879, abs=1)
    assert settled_charger_size(5268.0, 4489.75, 3600.0) == pytest.approx(6882, abs=1)
    assert optimal_charger_size(CASE1, 3600.0, 1294.0) == pytest.approx(3825.5, abs=0.05)
    assert settled_charger_size(100.0, 0.0, 3600.0) == 3600.0
    with pytest.raises(DegeneratePrices):
        settled_charger_size(100.0, 100.0, 3600.0)


def test_case2_system():
    res = size_system(SizingInputs(3600.0, 1294.0), CASE2)
    assert res.scenario == 2 and not res.constraint_binding
    assert res.s_charger == pytest.approx(3718.1, abs=0.1)
    assert res.s_pv == pytest.approx(364.3, abs=0.1)
    assert res.p_es == pytest.approx(res.s_pv)
    assert res.e_es == pytest.approx(4.75 * res.s_pv)
    assert res.cost == pytest.approx(17956 * res.s_charger + 4489.75 * res.s_pv)
    rounded_pv = 1294.0 - charger_reactive_capacity(3718.0, 3600.0)
    assert rounded_pv == pytest.approx(364.7, abs=0.05)


def test_no_support_needed():
    res = size_system(SizingInputs(3600.0, 0.0), CASE2)
    assert res.s_charger == pytest.approx(3600.0)
    assert res.s_pv == res.e_es == res.p_es == 0.0


def test_scenario_branches():
    p = 3600.0
    lp = CASE2.lambda_pv_es
    cheap = PriceSet(0.5 * lp, 1000.0, 661.0, 350.0, 4.75, 1.0)
    res = size_system(SizingInputs(p, 1294.0), cheap)
    assert res.scenario == 4
    assert res.s_charger == pytest.approx(max_charger_size(p, 1294.0))
    assert res.s_pv == pytest.approx(0.0, abs=1e-9)
    dear = PriceSet(20 * lp, 1000.0, 661.0, 350.0, 4.75, 1.0)
    res = size_system(SizingInputs(p, 1294.0), dear)
    assert res.scenario == 1 and res.s_charger == p and res.s_pv == pytest.approx(1294.0)


def test_constraint_binding_branch():
    inputs = SizingInputs(3600.0, 1294.0, p_ref=1325.0, eta=0.9, delta=0.2)
    res = size_system(inputs, CASE2)
    assert res.constraint_binding
    assert res.s_pv == pytest.approx(265.0 / math.sqrt(1 - 0.81))
    assert res.p_pv == pytest.approx(265.0)
    assert res.s_charger >= 3600.0
    assert res.s_charger == pytest.approx(math.hypot(1294.0 - 0.9 * res.s_pv, 3600.0))


def test_infeasible_eta():
    with pytest.raises(InfeasibleEta):
        size_system(SizingInputs(3600.0, 1294.0, p_ref=1325.0, eta=1.0, delta=0.2), CASE2)


def test_inputs_validation():
    for kw in (dict(p_c_max=0.0, q_ref=1.0), dict(p_c_max=1.0, q_ref=1.0, eta=0.0),
               dict(p_c_max=1.0, q_ref=1.0, delta=1.5), dict(p_c_max=1.0, q_ref=-1.0)):
        with pytest.raises(ValueError):
            SizingInputs(**kw)


@given(st.floats(100, 1e4), st.floats(0, 5e3), st.floats(0.2, 1.0), st.floats(0, 1),
       st.floats(0, 3e3), prices_st)
def test_var_coverage_invariant(p, q, eta, delta, p_ref, prices):
    inputs = SizingInputs(p, q, p_ref, eta, delta)
    try:
        res = size_system(inputs, prices)
    except InfeasibleEta:
        assert eta == 1.0 and delta * p_ref > 0
        return
    assert res.s_charger >= p - 1e-9
    assert charger_reactive_capacity(res.s_charger, p) + eta * res.s_pv >= q - 1e-6
    assert res.e_es == pytest.approx(prices.alpha * res.s_pv)
    assert res.p_es == pytest.approx(prices.beta * res.s_pv)


@given(st.floats(1.05, 9.5), st.floats(100, 5000), st.floats(200, 5000))
def test_scenario2_unimodal(ratio, p, q):
    lp = 4489.75
    prices = PriceSet(ratio * lp, lp, 0, 0)
    s_set = settled_charger_size(prices.lambda_charger, lp, p)
    s_max = max_charger_size(p, q)
    s = np.linspace(p, s_max, 4001)
    c = cost_curve(s, prices, p, q)
    d = np.diff(c)
    left, right = s[1:] < s_set - 1e-6 * p, s[:-1] > s_set + 1e-6 * p
    assert np.all(d[left] < 0)
    assert np.all(d[right] > 0)


@given(st.floats(0.0, 1.0), st.floats(100, 5000), st.floats(200, 5000))
def test_expensive_pv_cost_always_falls(ratio, p, q):
    lp = 4489.75
    prices = PriceSet(ratio * lp, lp, 0, 0)
    s = np.linspace(p, max_charger_size(p, q), 2001)
    assert np.all(np.diff(cost_curve(s, prices, p, q)) < 0)


@given(st.floats(0.02, 0.98))
def test_derivative_matches_finite_difference(frac):
    p, q = 3600.0, 1294.0
    s = p + frac * (max_charger_size(p, q) - p)
    h = 1e-4 * (s - p)
    fd = (cost_curve(s + h, CASE2, p, q) - cost_curve(s - h, CASE2, p, q)) / (2 * h)
    an = cost_derivative(s, CASE2, p)
    assert an == pytest.approx(fd, rel=1e-6, abs=1e-6 * CASE2.lambda_charger)


def test_storage_requirements():
    pv = np.array([0, 60, 60, 0, 0], dtype=float)
    need = np.array([0, 0, 30, 0, 0], dtype=float)
    e, p = storage_requirements(pv, need)
    assert e == pytest.approx(1.5) and p == pytest.approx(60.0)


def test_fit_trivial_cases():
    day = np.zeros(1440)
    need = np.zeros(1440)
    need[600:900] = 3000.0
    assert fit_alpha_beta([day] * 7, [need] * 7, 1000.0) == (0.0, 0.0)
    pv = need / 3000.0 * 0.001
    assert fit_alpha_beta([pv] * 3, [need] * 3, 1000.0) == (0.0, 0.0)
    with pytest.raises(EmptyProfiles):
        fit_alpha_beta([], [], 1000.0)
    with pytest.raises(ValueError):
        fit_alpha_beta([day], [need[:10]], 1000.0)


def test_fit_pure_surplus_is_exact():
    pv = np.zeros(1440)
    pv[600:660] = 1.0
    alpha, beta = fit_alpha_beta([pv], [np.zeros(1440)], 500.0)
    assert alpha == pytest.approx(1.0) and beta == pytest.approx(1.0)


def test_json_round_trip():
    inputs = SizingInputs(3600.0, 1294.0)
    res = size_system(inputs, CASE2)
    doc = json.loads(dumps_result(inputs, CASE2, res))
    assert inputs_from_dict(doc["inputs"]) == inputs
    assert prices_from_dict(doc["prices"]) == CASE2
    assert doc["result"]["scenario"] == 2
