import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from insider_impact import equilibria as eqm
from insider_impact.equilibria import EquilibriumKind as K
from insider_impact.model_core import MarketParams, ParameterError

import oracles

UNIT = MarketParams(1, 1, 1, 1, 0)
Y_UNIT = oracles.bisect_root(1, 0.5, 1)

params_st = st.builds(
    MarketParams,
    st.floats(0.05, 5),
    st.floats(0.05, 5),
    st.floats(1e-2, 20),
    st.floats(0.05, 5),
    st.floats(-2, 2),
)


def random_params(rng, n):
    for _ in range(n):
        yield MarketParams(
            10 ** rng.uniform(-1.5, 0.7),
            10 ** rng.uniform(-1.5, 0.7),
            10 ** rng.uniform(-2, 1.5),
            10 ** rng.uniform(-1, 1),
            rng.uniform(-2, 2),
        )


def test_pi_unit_case():
    e = eqm.solve_pi(UNIT)
    assert e.y_hat == pytest.approx(Y_UNIT, abs=1e-11)
    assert e.lambda_sig == pytest.approx(1 + Y_UNIT, abs=1e-11)
    assert e.price_slope == pytest.approx(Y_UNIT / (2 * (1 + 2 * Y_UNIT)), rel=1e-12)
    assert e.p_pub == pytest.approx(1 / ((1 + Y_UNIT) ** 2 + 1), rel=1e-12)
    assert e.p_pub == pytest.approx(0.0685, abs=1e-4)
    assert e.impact_V == 0.0


def test_pt_unit_case():
    e = eqm.solve_pt(UNIT)
    assert e.p_pub == 0.5
    assert e.price_slope == pytest.approx(1.5 / 3.5, rel=1e-15)
    # second algebraic form of the slope: p_I (beta + lam) / (1 - lam + (1 + p_I)(beta + lam))
    assert e.price_slope == pytest.approx(1 * 1.5 / (0.5 + 2 * 1.5), rel=1e-15)
    assert e.impact_M == pytest.approx(3.0)


def test_coefficients_against_primitive_oracle():
    rng = np.random.default_rng(3)
    for p in random_params(rng, 30):
        p = MarketParams(p.alpha_I, p.alpha_U, p.p_I, p.p_N)
        for kind in ("PI", "PT"):
            Lam, slope, ins, un, z_coef = oracles.scalar_equilibrium(p.alpha_I, p.alpha_U, p.p_I, p.p_N, kind)
            e = eqm.solve(p, kind)
            assert abs(z_coef) < 1e-10
            assert e.lambda_sig == pytest.approx(Lam, rel=1e-10)
            assert e.price_slope == pytest.approx(slope, rel=1e-10)
            assert e.insider_coeffs[:2] == pytest.approx(ins, rel=1e-10)
            assert e.uninformed_coeffs == pytest.approx(un, rel=1e-10)


def test_no_signal_prices():
    a = 1.0
    p = MarketParams(a, a, 1, 1, 0)
    assert eqm.price(eqm.solve(p, "ns-pt"), a) == pytest.approx(0.5)
    assert eqm.price(eqm.solve(p, "ns-pi"), a) == pytest.approx(2 / 3)


@pytest.mark.parametrize("kind", ["NS_PI", "NS_PT"])
def test_no_signal_zero_noise_is_pareto(kind):
    p = MarketParams(0.7, 1.3, 1, 2, 1.5)
    e = eqm.solve(p, kind)
    Ph = e.derived.Pi_hat
    assert eqm.insider_demand(e, 0.0, 0.0) == Ph
    assert eqm.uninformed_demand(e, 0.0) == Ph
    assert eqm.price(e, 0.0) == e.derived.p_Q0


def test_public_signal():
    assert eqm.public_signal(eqm.solve_pt(UNIT), 0.3, 0.4) == pytest.approx(0.7)
    assert eqm.public_signal(eqm.solve_pi(UNIT), 1, 1) == pytest.approx(1 + 1 + Y_UNIT, abs=1e-11)
    for kind in ("PI", "PT"):
        assert eqm.public_signal(eqm.solve(UNIT, kind), 0.8, 0.0) == 0.8


def test_prices_at_unit_case():
    assert eqm.price(eqm.solve_pi(UNIT), 0.0) == 0.0
    assert eqm.price(eqm.solve_pt(UNIT), 1.0) == pytest.approx(0.4286, abs=1e-4)


def test_demands_vanish_at_origin():
    for kind in ("PI", "PT"):
        e = eqm.solve(UNIT, kind)
        assert eqm.insider_demand(e, 0.0, 0.0) == 0.0
        assert eqm.uninformed_demand(e, 0.0) == 0.0


def test_clearing_unit_point():
    for kind in ("PI", "PT"):
        e = eqm.solve(UNIT, kind)
        h = eqm.public_signal(e, 1.0, 1.0)
        total = eqm.insider_demand(e, 1.0, 1.0) + eqm.uninformed_demand(e, h) + 1.0
        assert abs(total) < 1e-12


def test_pt_insider_demand_rises_with_signal_relative_to_no_signal():
    p = MarketParams(0.6, 1.2, 2.0, 1.5, 0.4)
    pt, ns = eqm.solve_pt(p), eqm.solve(p, "ns-pt")
    z = 0.3
    d = [eqm.insider_demand(pt, g, z) - eqm.insider_demand(ns, g, z) for g in (-1.0, 0.0, 1.0)]
    assert d[0] < d[1] < d[2]


def test_clearing_random():
    rng = np.random.default_rng(4)
    worst = 0.0
    for p in random_params(rng, 100):
        g = rng.normal(size=100)
        z = rng.normal(size=100)
        for kind in K:
            e = eqm.solve(p, kind)
            if kind.has_signal:
                psi_U = eqm.uninformed_demand(e, eqm.public_signal(e, g, z))
            else:
                psi_U = eqm.uninformed_demand(e, z)
            tot = p.alpha_I * eqm.insider_demand(e, g, z) + p.alpha_U * psi_U + z - p.Pi
            worst = max(worst, float(np.max(np.abs(tot))))
    assert worst < 1e-10


@settings(max_examples=300, deadline=None)
@given(params_st)
def test_signal_and_reactivity_orderings(p):
    pi, pt = eqm.solve_pi(p), eqm.solve_pt(p)
    assert pi.p_pub < pt.p_pub
    m_gi, m_g, m_ci, m_c = eqm.slopes(pi, pt)
    assert m_gi < m_g
    assert m_ci < m_c


def test_slopes_unit_case():
    m_gi, m_g, m_ci, m_c = eqm.slopes(eqm.solve_pi(UNIT), eqm.solve_pt(UNIT))
    assert m_gi == pytest.approx(0.2108, abs=1e-4)
    assert m_g == pytest.approx(0.4286, abs=1e-4)
    assert m_ci == pytest.approx(Y_UNIT / 2, abs=1e-11)
    assert m_c == pytest.approx(3.0)


def test_slopes_vanish_without_signal():
    p = MarketParams(1, 1, 1e-8, 1)
    m_gi, m_g, _, _ = eqm.slopes(eqm.solve_pi(p), eqm.solve_pt(p))
    assert 0 < m_gi < 1e-7 and 0 < m_g < 1e-7


def test_slopes_reject_mismatch():
    with pytest.raises(ParameterError):
        eqm.slopes(eqm.solve_pt(UNIT), eqm.solve_pi(UNIT))
    with pytest.raises(ParameterError):
        eqm.slopes(eqm.solve_pi(UNIT), eqm.solve_pt(MarketParams(1, 2, 1, 1)))


@pytest.mark.parametrize("impact", [True, False])
def test_small_precision_matches_no_signal(impact):
    p = MarketParams(0.8, 1.1, 1e-10, 1.3, 0.7)
    full = eqm.solve(p, "PI" if impact else "PT")
    ns = eqm.solve_no_signal(p, impact)
    for z in np.linspace(-2, 2, 9):
        h = eqm.public_signal(full, 0.0, z)
        assert eqm.price(full, h) == pytest.approx(eqm.price(ns, z), abs=1e-6)
        assert eqm.insider_demand(full, 0.0, z) == pytest.approx(eqm.insider_demand(ns, 0.0, z), abs=1e-6)
        assert eqm.uninformed_demand(full, h) == pytest.approx(eqm.uninformed_demand(ns, z), abs=1e-6)


def test_small_precision_price_slope_limit():
    lam, a_I = 0.5, 1.0
    e = eqm.solve_pi(MarketParams(a_I, a_I, 1e-10, 1.0))
    z = 0.7
    h = e.price_intercept + e.lambda_sig * z
    assert e.price_slope * (h - e.price_intercept) == pytest.approx(lam / (1 - lam**2) * z / a_I, rel=1e-6)


def test_perceived_price_no_trade():
    e = eqm.solve_pi(MarketParams(1, 1, 1, 1, 2.0))
    assert eqm.perceived_price(e, e.derived.Pi_hat, None, 0.0) == e.derived.p_Q0


@pytest.mark.parametrize("kind", ["PI", "PT"])
def test_perceived_price_fixed_point(kind):
    rng = np.random.default_rng(5)
    for p in random_params(rng, 10):
        e = eqm.solve(p, kind)
        g = rng.normal(size=1000)
        z = rng.normal(size=1000) * 2
        psi = eqm.insider_demand(e, g, z)
        got = eqm.perceived_price(e, psi, z=z)
        want = eqm.price(e, eqm.public_signal(e, g, z))
        assert np.max(np.abs(got - want)) < 1e-12 * (1 + np.max(np.abs(want))) * 10


def test_perceived_price_rejects_non_pareto():
    e = eqm.solve_pi(UNIT)
    with pytest.raises(ParameterError):
        eqm.perceived_price(e, 0.0, psi_I0=0.5)
    with pytest.raises(ParameterError):
        eqm.perceived_price(eqm.solve(UNIT, "ns-pi"), 0.0)


def test_zero_precision_directs_to_no_signal():
    with pytest.raises(ParameterError, match="ns-pi"):
        eqm.solve(MarketParams(1, 1, 0, 1), "pi")
    e = eqm.solve(MarketParams(1, 1, 0, 1), "ns-pi")
    assert e.kind is K.NS_PI


def test_kind_parsing():
    assert K.parse("ns-pt") is K.NS_PT
    assert K.parse(" pi ") is K.PI
    with pytest.raises(ParameterError):
        K.parse("kyle")


def test_nonfinite_inputs_rejected():
    with pytest.raises(ParameterError):
        eqm.public_signal(eqm.solve_pi(UNIT), np.nan, 0.0)


def test_json_roundtrip():
    e = eqm.solve_pi(UNIT)
    doc = json.loads(e.to_json())
    assert doc["kind"] == "PI"
    assert doc["y_hat"] == e.y_hat
    assert doc["params"]["alpha_I"] == 1


def test_shares():
    e = eqm.solve_pi(MarketParams(2, 3, 1, 1))
    assert eqm.to_shares(e, 1.5, "I") == 3.0
    assert eqm.to_shares(e, 1.5, "U") == 4.5
    with pytest.raises(ParameterError):
        eqm.to_shares(e, 1.0, "N")
