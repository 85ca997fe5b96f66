import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magex.assignment import distance_matrix, hungarian
from magex.commander import (
    CommanderPolicy,
    assignment_reward,
    commander_input,
    commander_value,
    decide,
    decode_greedy,
    goal_logits,
    plackett_luce_log_prob,
    sample_assignment,
    score_goals,
    softmax_entropy,
    value_from_input,
)
from magex.nn import ShapeError, Tensor

from gradcheck import TOL, check_param_grad, numeric_grad, rel_error


def pl_probability(p, perm):
    """Oracle: product of sequential without-replacement choice probabilities."""
    p = list(p)
    prob, left = 1.0, set(range(len(p)))
    for g in perm:
        prob *= p[g] / sum(p[j] for j in left)
        left.remove(g)
    return prob


def layout(n, seed, dim=2):
    rng = np.random.default_rng(seed)
    return rng.random((n, dim)) * 4, rng.random((n, dim)) * 4


def test_zero_weights_give_uniform_scores_and_zero_value():
    pol = CommanderPolicy.zeros(4, 2)
    a, g = layout(4, 0)
    np.testing.assert_array_equal(score_goals(pol, a, g, 4.0).data, np.full(4, 0.25))
    assert commander_value(pol, a, g, 4.0).data == 0.0


def test_scores_sum_to_one():
    rng = np.random.default_rng(1)
    for n in range(1, 7):
        pol = CommanderPolicy.init(n, 2, rng)
        for s in range(10):
            a, g = layout(n, s)
            p = score_goals(pol, a * 100, g * 100, 1.0).data
            assert abs(p.sum() - 1.0) <= 1e-12
            assert np.all(p >= 0)


def test_translation_changes_scores():
    rng = np.random.default_rng(2)
    pol = CommanderPolicy.init(3, 2, rng)
    pol.f_sche.weight.data = rng.standard_normal(pol.f_sche.weight.shape)
    a, g = layout(3, 5)
    p0 = score_goals(pol, a, g, 4.0).data
    p1 = score_goals(pol, a + 0.5, g + 0.5, 4.0).data
    assert not np.allclose(p0, p1)


def test_input_layout_agents_then_goals():
    x = commander_input([[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]], map_size=2.0)
    np.testing.assert_array_equal(x, np.arange(1, 9) / 2.0)


def test_count_mismatch_is_shape_error():
    pol = CommanderPolicy.zeros(3, 2)
    with pytest.raises(ShapeError):
        score_goals(pol, np.zeros((3, 2)), np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        score_goals(pol, np.zeros((4, 2)), np.zeros((4, 2)))


def test_decode_examples():
    assert decode_greedy([0.5, 0.3, 0.2]).tolist() == [0, 1, 2]
    assert decode_greedy([0.2, 0.5, 0.3]).tolist() == [1, 2, 0]
    assert decode_greedy(np.full(5, 0.2)).tolist() == [0, 1, 2, 3, 4]
    assert decode_greedy([0.3, 0.2, 0.3, 0.2]).tolist() == [0, 2, 1, 3]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8))
def test_decode_is_permutation_and_costs_at_least_optimum(weights):
    w = np.asarray(weights) + 1e-3
    p = w / w.sum()
    perm = decode_greedy(p)
    assert sorted(perm.tolist()) == list(range(len(p)))
    rng = np.random.default_rng(len(p))
    a, g = rng.random((len(p), 2)), rng.random((len(p), 2))
    c_c, c_h, _ = assignment_reward(a, g, perm)
    assert c_c >= c_h - 1e-12


def test_sample_single_goal():
    perm, lp = sample_assignment([1.0], np.random.default_rng(0))
    assert perm.tolist() == [0] and lp == 0.0


def test_sample_near_deterministic_first_choice():
    eps = 1e-3
    p = np.array([1 - eps, eps / 3, eps / 3, eps / 3])
    rng = np.random.default_rng(0)
    firsts = [sample_assignment(p, rng)[0][0] for _ in range(2000)]
    assert np.mean(np.asarray(firsts) == 0) >= 1 - eps - 3 * np.sqrt(eps / 2000)


def test_sample_uniform_over_permutations():
    rng = np.random.default_rng(12)
    draws = 6000
    counts = {}
    for _ in range(draws):
        perm, lp = sample_assignment(np.full(3, 1 / 3), rng)
        assert lp == pytest.approx(np.log(1 / 6), abs=1e-12)
        counts[tuple(perm)] = counts.get(tuple(perm), 0) + 1
    sigma = np.sqrt(draws * (1 / 6) * (5 / 6))
    assert len(counts) == 6
    assert all(abs(c - draws / 6) < 3 * sigma for c in counts.values())


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_plackett_luce_normalizes_by_enumeration(n):
    rng = np.random.default_rng(n)
    logits = rng.standard_normal(n) * 2
    p = np.exp(logits - logits.max())
    p /= p.sum()
    perms = np.array(list(itertools.permutations(range(n))))
    lp = plackett_luce_log_prob(Tensor(np.tile(logits, (len(perms), 1))), perms).data
    assert abs(np.exp(lp).sum() - 1.0) <= 1e-9
    for perm, v in zip(perms, lp):
        assert np.exp(v) == pytest.approx(pl_probability(p, perm), rel=1e-10)


def test_sampled_log_prob_matches_differentiable_version():
    rng = np.random.default_rng(3)
    logits = rng.standard_normal(5)
    p = np.exp(logits) / np.exp(logits).sum()
    for _ in range(50):
        perm, lp = sample_assignment(p, rng)
        assert plackett_luce_log_prob(Tensor(logits), perm).data[0] == pytest.approx(lp, abs=1e-12)


def test_greedy_is_mode():
    rng = np.random.default_rng(8)
    for _ in range(20):
        logits = rng.standard_normal(4)
        perms = np.array(list(itertools.permutations(range(4))))
        lp = plackett_luce_log_prob(Tensor(np.tile(logits, (24, 1))), perms).data
        best = perms[int(np.argmax(lp))]
        p = np.exp(logits) / np.exp(logits).sum()
        assert decode_greedy(p).tolist() == best.tolist()


def test_plackett_luce_extreme_logits_finite():
    logits = Tensor(np.array([[800.0, 0.0, -800.0]]), requires_grad=True)
    lp = plackett_luce_log_prob(logits, [[2, 1, 0]])
    assert np.isfinite(lp.data).all()
    lp.sum().backward()
    assert np.isfinite(logits.grad).all()


def test_plackett_luce_gradient():
    rng = np.random.default_rng(4)
    logits = Tensor(rng.standard_normal((3, 5)), requires_grad=True)
    perms = np.array([rng.permutation(5) for _ in range(3)])
    plackett_luce_log_prob(logits, perms).sum().backward()
    num = numeric_grad(lambda v: plackett_luce_log_prob(Tensor(v), perms).sum().item(), logits.data)
    assert rel_error(logits.grad, num) < TOL


def test_value_and_policy_gradients():
    rng = np.random.default_rng(5)
    pol = CommanderPolicy.init(3, 2, rng)
    x = commander_input(*layout(3, 1), 4.0)
    for p in pol.value_parameters():
        assert check_param_grad(lambda: value_from_input(pol, x).sum(), p) < TOL
    perm = np.array([2, 0, 1])
    loss = lambda: (plackett_luce_log_prob(goal_logits(pol, x), perm).sum()
                    + 0.1 * softmax_entropy(goal_logits(pol, x)).sum())
    for p in pol.policy_parameters():
        assert check_param_grad(loss, p) < TOL


def test_heads_use_separate_parameters():
    rng = np.random.default_rng(6)
    pol = CommanderPolicy.init(3, 2, rng)
    a, g = layout(3, 2)
    p0 = score_goals(pol, a, g).data.copy()
    for p in pol.value_parameters():
        p.data = p.data + 1.0
    np.testing.assert_array_equal(score_goals(pol, a, g).data, p0)
    v0 = commander_value(pol, a, g).item()
    for p in pol.policy_parameters():
        p.data = p.data + 1.0
    assert commander_value(pol, a, g).item() == v0


def test_value_deterministic():
    pol = CommanderPolicy.init(4, 2, np.random.default_rng(0))
    a, g = layout(4, 9)
    assert commander_value(pol, a, g).item() == commander_value(pol, a, g).item()


def test_reward_zero_when_decode_is_optimal():
    a, g = layout(5, 3)
    perm = hungarian(distance_matrix(a, g)).perm
    assert assignment_reward(a, g, perm)[2] == 0.0


def test_decide_greedy_and_sampled():
    pol = CommanderPolicy.init(4, 2, np.random.default_rng(0))
    a, g = layout(4, 4)
    d = decide(pol, a, g, 4.0)
    assert d.perm.perm.tolist() == decode_greedy(d.p_goal).tolist()
    assert np.isfinite(d.log_prob)
    s1 = decide(pol, a, g, 4.0, rng=np.random.default_rng(1))
    s2 = decide(pol, a, g, 4.0, rng=np.random.default_rng(1))
    assert s1.perm.perm.tolist() == s2.perm.perm.tolist() and s1.log_prob == s2.log_prob
