import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lispr.mdp import TabularMdp, derive_seed, make_rng, sample_initial, step, validate


def two_state(discount=0.9):
    P = np.zeros((2, 2, 2))
    P[0, 0, 1] = 1.0
    P[0, 1, 0] = 1.0
    P[1, :, 1] = 1.0
    R = np.zeros((2, 2, 2))
    R[0, 0, 1] = 1.0
    return TabularMdp.from_dense(P, R, discount, {1})


def test_valid_mdp_has_no_errors():
    assert validate(two_state()) == []


def test_row_not_summing_to_one_is_reported():
    mdp = two_state()
    probs = mdp.probs.copy()
    probs[0, 0, 0] = 0.5
    bad = TabularMdp(mdp.next_states, probs, mdp.rewards, 0.9, mdp.terminal, mdp.initial)
    errors = validate(bad)
    assert any("does not sum to 1 at (s=0, a=0)" in e for e in errors)


def test_non_absorbing_terminal_is_reported():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 0] = 1.0
    mdp = TabularMdp.from_dense(P, 0.0, 0.9, {1}, initial=[1.0, 0.0])
    assert any("terminal not absorbing" in e for e in validate(mdp))


def test_initial_mass_on_terminal_is_reported():
    mdp = two_state()
    bad = TabularMdp(mdp.next_states, mdp.probs, mdp.rewards, 0.9, mdp.terminal, np.array([0.5, 0.5]))
    assert any("terminal states [1]" in e for e in validate(bad))


def test_discount_one_needs_episodic_flag():
    mdp = two_state(1.0)
    assert any("discount" in e for e in validate(mdp))
    ok = TabularMdp(mdp.next_states, mdp.probs, mdp.rewards, 1.0, mdp.terminal, mdp.initial, episodic_proper=True)
    assert validate(ok) == []


def test_dense_views_round_trip():
    mdp = two_state()
    again = TabularMdp.from_dense(mdp.transition, mdp.reward, mdp.discount, mdp.terminal)
    np.testing.assert_array_equal(again.transition, mdp.transition)
    np.testing.assert_array_equal(again.reward, mdp.reward)


def test_step_from_terminal_raises():
    with pytest.raises(ValueError):
        step(make_rng(0), two_state(), 1, 0)


def test_point_mass_step_consumes_no_draw():
    rng = make_rng(3)
    before = rng.getstate()
    s2, r, done = step(rng, two_state(), 0, 0)
    assert (s2, r, done) == (1, 1.0, True)
    assert rng.getstate() == before


def test_point_mass_initial():
    P = np.zeros((3, 1, 3))
    P[:, 0, 2] = 1.0
    mdp = TabularMdp.from_dense(P, 0.0, 0.9, {2}, initial=[1.0, 0.0, 0.0])
    assert all(sample_initial(make_rng(s), mdp) == 0 for s in range(5))


def test_uniform_initial_frequencies():
    k = 5
    P = np.zeros((k + 1, 1, k + 1))
    P[:, 0, k] = 1.0
    mdp = TabularMdp.from_dense(P, 0.0, 0.9, {k})
    rng = make_rng(11)
    counts = np.bincount([sample_initial(rng, mdp) for _ in range(100_000)], minlength=k + 1)
    assert counts[k] == 0
    assert np.all(np.abs(counts[:k] / 100_000 - 1 / k) < 0.02)


def test_stochastic_step_frequencies():
    P = np.zeros((3, 1, 3))
    P[0, 0] = [0.0, 0.3, 0.7]
    P[1:, 0, 1:] = np.eye(2)
    mdp = TabularMdp.from_dense(P, 0.0, 0.9, {1, 2})
    rng = make_rng(5)
    hits = sum(step(rng, mdp, 0, 0)[0] == 1 for _ in range(50_000))
    assert abs(hits / 50_000 - 0.3) < 0.01


def test_make_rng_is_mersenne_twister():
    assert make_rng(7).random() == random.Random(7).random()


@given(st.integers(0, 2**63), st.integers(0, 1000))
@settings(max_examples=50)
def test_derive_seed_is_deterministic_and_key_sensitive(seed, key):
    a = derive_seed(seed, key)
    assert a == derive_seed(seed, key)
    assert 0 <= a < 2**64
    assert a != derive_seed(seed, key + 1)
