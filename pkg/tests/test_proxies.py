import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lispr import oracle
from lispr.core import SourcePolicy
from lispr.fixtures import bundled_fixtures, goal_chain, random_mdp, slip_chain
from lispr.mdp import Option, TransitionRecord
from lispr.proxies import ProxyKind, continuation_zeta, proxy_reward, proxy_reward_table

G_TABLE = np.array([[0.3, 0.6], [0.8, 0.1], [0.5, 0.5]])
MU = SourcePolicy.from_actions([1, 0, 0], 2)


def rec(s, a, r, cont, s2):
    return TransitionRecord(s, Option.LEARNER, a, r, cont, s2)


def test_zeta():
    assert continuation_zeta(1, True, False, 0.99) == 0.0
    assert continuation_zeta(1, False, True, 0.99) == 0.0
    assert continuation_zeta(1, False, False, 0.99) == 0.99


def test_proxy_values_by_substitution():
    t = rec(0, 1, 0.0, 0.99, 1)
    assert proxy_reward("diff", t, G_TABLE, MU, False, 0.99) == pytest.approx(0.6 - 0.99 * 0.8)
    assert proxy_reward("diff", t, G_TABLE, MU, True, 0.99) == pytest.approx(0.6)
    assert proxy_reward("scaled-g", t, G_TABLE, MU, False, 0.99) == pytest.approx(0.01 * 0.6)
    assert proxy_reward("scaled-next-g", t, G_TABLE, MU, True, 0.99) == pytest.approx(0.8)
    assert proxy_reward("indicator", t, G_TABLE, MU, True, 0.99) == 1.0
    assert proxy_reward("indicator", t, G_TABLE, MU, False, 0.99) == 0.0
    assert proxy_reward("oracle", rec(0, 1, 0.5, 0.99, 1), G_TABLE, MU, True, 0.99) == pytest.approx(0.5 + 0.99 * 0.8)


def test_unknown_proxy_is_rejected():
    with pytest.raises(ValueError):
        proxy_reward("shaped", rec(0, 0, 0.0, 0.9, 1), G_TABLE, MU, False, 0.9)


@given(st.integers(0, 2), st.integers(0, 1), st.integers(0, 2), st.booleans(), st.booleans(),
       st.sampled_from(list(ProxyKind)))
@settings(max_examples=200)
def test_table_form_matches_per_transition_form(s, a, s2, in_L, terminal, kind):
    gamma = 0.95
    r = 0.25
    t = rec(s, a, r, 0.0 if terminal else gamma, s2)
    expected = proxy_reward(kind, t, G_TABLE, MU, in_L, gamma)
    G_s = MU.state_values(G_TABLE)
    got = proxy_reward_table(kind, G_TABLE[s:s + 1, a:a + 1], np.array([[[G_s[s2]]]]), np.array([[[r]]]),
                             np.array([[[in_L]]]), np.array([[[terminal]]]), gamma)
    assert got[0, 0, 0] == pytest.approx(expected, abs=1e-15)


def test_diff_proxy_is_exact_on_every_fixture():
    for fx in bundled_fixtures():
        rep = oracle.check_proxy_bias(fx.mdp, fx.mu, "diff")
        assert rep.passed and rep.max_violation <= 1e-8, fx.name


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_diff_proxy_is_exact_on_random_mdps(seed, episodic):
    fx = random_mdp(seed, episodic=episodic)
    assert oracle.check_proxy_bias(fx.mdp, fx.mu, "diff", gammas=(0.9,)).passed


def test_scaled_next_g_bias_shrinks_with_discount():
    for fx in bundled_fixtures():
        if fx.zero_intermediate:
            rep = oracle.check_proxy_bias(fx.mdp, fx.mu, "scaled-next-g")
            assert rep.passed, (fx.name, rep.details)


def test_scaled_g_bias_shrinks_on_deterministic_fixtures():
    for fx in bundled_fixtures():
        if fx.zero_intermediate and fx.mdp.is_deterministic:
            assert oracle.check_proxy_bias(fx.mdp, fx.mu, "scaled-g").passed, fx.name


def test_scaled_g_bias_persists_on_slippery_chain():
    # G(s, a) averages over slip outcomes but is only paid on the transitions
    # that actually enter L, so the gap does not vanish as the discount grows
    fx = slip_chain()
    rep = oracle.check_proxy_bias(fx.mdp, fx.mu, "scaled-g")
    gaps = rep.details["gaps"]
    assert not rep.passed
    assert gaps[-1] > gaps[0] > 0.05


def test_indicator_prefers_oracle_actions_on_binary_fixtures():
    for fx in bundled_fixtures():
        if fx.binary_terminal:
            assert oracle.check_proxy_bias(fx.mdp, fx.mu, "indicator").passed, fx.name


def test_bias_readings_report_every_reading():
    fx = goal_chain(n=8, right_from=5, gamma=0.9)
    learner = np.tile([0.0, 1.0], (8, 1))
    learner[2:] = [1.0, 0.0]
    out = oracle.bias_readings(fx.mdp, fx.mu, "scaled-next-g", learner)
    assert set(out["summary"]) == {"literal", "shifted", "state_action"}
    assert out["states"]
    for row in out["states"].values():
        assert np.isfinite(row["direct"])


def test_bias_readings_need_deterministic_inputs():
    fx = slip_chain()
    with pytest.raises(ValueError):
        oracle.bias_readings(fx.mdp, fx.mu, "scaled-g", fx.learner)
    with pytest.raises(ValueError):
        oracle.bias_readings(goal_chain().mdp, goal_chain().mu, "diff", goal_chain().learner)
