import numpy as np
import pytest

from magex.executor import (
    WIDTH,
    ExecutorPolicy,
    action_log_prob,
    action_logits,
    act,
    ego_subgraph_gcn,
    encode_observations,
    executor_forward,
    goal_encode,
    goal_input_dim,
    graph_encoder_block,
    state_extract,
    value,
)
from magex.nn import GRUParams, LayerParams, ShapeError, Tensor
from magex.nn.layers import sample_gumbel

from gradcheck import TOL, check_param_grad, check_param_grad_sampled


def make(n, seed=0, n_actions=4, temperature=1.0):
    rng = np.random.default_rng(seed)
    obs_dim = 2 * n
    pol = ExecutorPolicy.init(n, obs_dim, 2, n_actions, rng, temperature=temperature)
    # larger head weights than the 0.01 init so outputs are not nearly constant
    pol.action_head.weight.data = rng.standard_normal(pol.action_head.weight.shape) * 0.5
    return pol


def inputs(pol, batch, seed):
    rng = np.random.default_rng(seed + 100)
    n = pol.n_agents
    obs = rng.standard_normal((batch, n, pol.obs_dim))
    goal = rng.standard_normal((batch, n, goal_input_dim(pol.obs_dim, pol.goal_dim)))
    h = rng.standard_normal((batch, n, WIDTH)) * 0.5
    noise = sample_gumbel((batch, pol.n_blocks, n, n), rng)
    return obs, goal, h, noise


def np_relu(x):
    return np.maximum(x, 0.0)


# -- structure ------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 4])
def test_permutation_equivariance(n):
    pol = make(n, seed=n)
    obs, goal, h, noise = inputs(pol, 3, n)
    rng = np.random.default_rng(7)
    for _ in range(5):
        perm = rng.permutation(n)
        base = executor_forward(pol, obs, goal, h, noise=noise)
        relabel = executor_forward(pol, obs[:, perm], goal[:, perm], h[:, perm],
                                   noise=noise[:, :, perm][:, :, :, perm])
        np.testing.assert_allclose(relabel.logits.data, base.logits.data[:, perm], atol=1e-8, rtol=0)
        np.testing.assert_allclose(relabel.value.data, base.value.data[:, perm], atol=1e-8, rtol=0)
        np.testing.assert_allclose(relabel.h_next.data, base.h_next.data[:, perm], atol=1e-8, rtol=0)
        for tb, tr in zip(base.blocks, relabel.blocks):
            np.testing.assert_array_equal(tr.adjacency.data, tb.adjacency.data[:, perm][:, :, perm])


def test_hard_adjacency_rows_one_hot():
    pol = make(4, seed=1)
    obs, goal, h, _ = inputs(pol, 8, 1)
    out = executor_forward(pol, obs, goal, h, rng=np.random.default_rng(0))
    for trace in out.blocks:
        A = trace.adjacency.data
        assert set(np.unique(A).tolist()) <= {0.0, 1.0}
        np.testing.assert_array_equal(A.sum(axis=-1), 1.0)
        np.testing.assert_allclose(trace.soft.data.sum(axis=-1), 1.0, atol=1e-9)


def reference_block(H, A, W, b):
    """Per-agent ego subgraph, normalised adjacency and GCN written out with plain numpy."""
    B, n, _ = H.shape
    out = np.zeros((B, n, W.shape[1]))
    for s in range(B):
        for k in range(n):
            Ak = np.zeros((n, n))
            Ak[k] = A[s, k]
            Ahat = Ak + np.eye(n)
            d = Ahat.sum(axis=1)
            norm = Ahat / np.sqrt(np.outer(d, d))
            out[s, k] = np_relu(norm @ H[s] @ W + b)[k]
    return out


def test_block_matches_reference():
    pol = make(3, seed=2)
    rng = np.random.default_rng(3)
    H = Tensor(rng.standard_normal((4, 3, WIDTH)))
    noise = sample_gumbel((4, 3, 3), rng)
    out, trace = graph_encoder_block(pol, H, 0, noise=noise)
    blk = pol.blocks[0]
    # neighbour selection re-derived from the logits formula
    logits = (H.data @ blk.f_g.weight.data + blk.f_g.bias.data) @ np.swapaxes(H.data, 1, 2) / np.sqrt(WIDTH)
    onehot = np.eye(3)[np.argmax(logits + noise, axis=-1)]
    np.testing.assert_array_equal(trace.adjacency.data, onehot)
    ref = reference_block(H.data, onehot, blk.gcn.weight.data, blk.gcn.bias.data)
    np.testing.assert_allclose(out.data, ref, atol=1e-10, rtol=0)


def test_soft_block_matches_reference():
    rng = np.random.default_rng(4)
    H = rng.standard_normal((2, 4, WIDTH))
    A = rng.random((2, 4, 4))
    A /= A.sum(-1, keepdims=True)
    layer = LayerParams.init("g", WIDTH, WIDTH, rng)
    out = ego_subgraph_gcn(Tensor(H), Tensor(A), layer)
    ref = reference_block(H, A, layer.weight.data, layer.bias.data)
    np.testing.assert_allclose(out.data, ref, atol=1e-10, rtol=0)


def test_identity_selection_isolates_nodes():
    pol = make(3, seed=5, temperature=1e-3)
    rng = np.random.default_rng(5)
    H = Tensor(np.abs(rng.standard_normal((2, 3, WIDTH))))
    noise = np.broadcast_to(np.eye(3) * 1e6, (2, 3, 3)).copy()
    out, trace = graph_encoder_block(pol, H, 1, noise=noise)
    np.testing.assert_array_equal(trace.adjacency.data, np.broadcast_to(np.eye(3), (2, 3, 3)))
    gcn = pol.blocks[1].gcn
    np.testing.assert_allclose(out.data, np_relu(H.data @ gcn.weight.data + gcn.bias.data), atol=1e-12)


def test_single_agent_observation_encoding():
    pol = make(1, seed=6)
    obs = np.random.default_rng(6).standard_normal((3, 1, pol.obs_dim))
    G = encode_observations(pol, obs).data
    x = np_relu(obs @ pol.f_o.weight.data + pol.f_o.bias.data)
    np.testing.assert_allclose(G, np_relu(x @ pol.obs_gcn.weight.data + pol.obs_gcn.bias.data), atol=1e-12)


def test_encoding_equivariant():
    pol = make(4, seed=7)
    obs = np.random.default_rng(7).standard_normal((2, 4, pol.obs_dim))
    perm = np.array([2, 0, 3, 1])
    np.testing.assert_allclose(encode_observations(pol, obs[:, perm]).data,
                               encode_observations(pol, obs).data[:, perm], atol=1e-12)


def test_shape_errors():
    pol = make(3)
    obs, goal, h, noise = inputs(pol, 2, 0)
    with pytest.raises(ShapeError):
        executor_forward(pol, obs[..., :-1], goal, h)
    with pytest.raises(ShapeError):
        executor_forward(pol, obs, goal[..., :-1], h)
    with pytest.raises(ShapeError):
        executor_forward(pol, obs, goal, h[:, :2])
    with pytest.raises(ShapeError):
        executor_forward(pol, obs, goal, h, noise=noise[:, :1])


def test_composition_equals_manual_stages():
    pol = make(3, seed=8)
    obs, goal, h, noise = inputs(pol, 2, 8)
    out = executor_forward(pol, obs, goal, h, noise=noise)
    H = encode_observations(pol, obs)
    for b in range(pol.n_blocks):
        H, _ = graph_encoder_block(pol, H, b, noise=noise[:, b])
    feat, h_next = state_extract(pol, goal_encode(pol, goal), H, h)
    np.testing.assert_array_equal(out.logits.data, action_logits(pol, feat).data)
    np.testing.assert_array_equal(out.value.data, value(pol, feat).data)
    np.testing.assert_array_equal(out.h_next.data, h_next.data)


def test_forward_deterministic_and_noise_free_mode():
    pol = make(3, seed=9)
    obs, goal, h, _ = inputs(pol, 2, 9)
    a = executor_forward(pol, obs, goal, h)
    b = executor_forward(pol, obs, goal, h)
    assert a.noise is None
    np.testing.assert_array_equal(a.logits.data, b.logits.data)
    c = executor_forward(pol, obs, goal, h, rng=np.random.default_rng(1))
    d = executor_forward(pol, obs, goal, h, noise=c.noise)
    np.testing.assert_array_equal(c.logits.data, d.logits.data)


def test_recurrence_is_live():
    pol = make(3, seed=10)
    obs, goal, h, _ = inputs(pol, 1, 10)
    a = executor_forward(pol, obs, goal, np.zeros_like(h))
    b = executor_forward(pol, obs, goal, h)
    assert not np.allclose(a.logits.data, b.logits.data)
    assert not np.allclose(a.h_next.data, b.h_next.data)


# -- sub-stages -----------------------------------------------------------

def test_goal_encode_zero_weights():
    pol = make(3)
    pol.f_goal = LayerParams.zeros("z", pol.f_goal.in_dim, WIDTH)
    _, goal, _, _ = inputs(pol, 2, 0)
    np.testing.assert_array_equal(goal_encode(pol, goal).data, 0.0)


def test_state_extract_zero():
    pol = make(3)
    pol.f_state = LayerParams.zeros("z", 2 * WIDTH, WIDTH)
    pol.gru = GRUParams.zeros("zg", WIDTH, WIDTH)
    zeros = Tensor(np.zeros((1, 3, WIDTH)))
    feat, h = state_extract(pol, zeros, zeros, np.zeros((1, 3, WIDTH)))
    np.testing.assert_array_equal(feat.data, 0.0)
    np.testing.assert_array_equal(h.data, 0.0)


def test_state_extract_grad_wrt_hidden():
    pol = make(2, seed=11)
    rng = np.random.default_rng(11)
    e_goal, e_graph = Tensor(rng.standard_normal((1, 2, WIDTH))), Tensor(rng.standard_normal((1, 2, WIDTH)))
    h = Tensor(rng.standard_normal((1, 2, WIDTH)), requires_grad=True)
    w = rng.standard_normal(WIDTH)
    assert check_param_grad(lambda: (state_extract(pol, e_goal, e_graph, h)[1] * w).sum(), h) < TOL


def test_goal_encode_gradient():
    pol = make(2, seed=12)
    _, goal, _, _ = inputs(pol, 2, 12)
    w = np.random.default_rng(12).standard_normal(WIDTH)
    for p in pol.f_goal.parameters():
        assert check_param_grad(lambda: (goal_encode(pol, goal) * w).sum(), p) < TOL


def test_observation_gradient():
    pol = make(3, seed=13)
    rng = np.random.default_rng(13)
    obs = Tensor(rng.standard_normal((2, 3, pol.obs_dim)), requires_grad=True)
    w = rng.standard_normal(WIDTH)
    assert check_param_grad(lambda: (encode_observations(pol, obs) * w).sum(), obs) < TOL


# -- action heads ---------------------------------------------------------

def test_uniform_logits_sampling():
    rng = np.random.default_rng(0)
    actions, logp = act(Tensor(np.zeros((10000, 4))), rng)
    counts = np.bincount(actions, minlength=4)
    sigma = np.sqrt(10000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 2500) < 3 * sigma)
    np.testing.assert_allclose(logp, np.log(0.25), atol=1e-12)


def test_argmax_mode_and_normalisation():
    logits = Tensor(np.random.default_rng(1).standard_normal((5, 3, 27)))
    a1, _ = act(logits)
    a2, _ = act(logits)
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(a1, np.argmax(logits.data, axis=-1))
    total = np.zeros((5, 3))
    for k in range(27):
        lp, _ = action_log_prob(logits, np.full((5, 3), k))
        total += np.exp(lp.data)
    np.testing.assert_allclose(total, 1.0, atol=1e-9)


def test_sampled_log_prob_matches_differentiable():
    logits = Tensor(np.random.default_rng(2).standard_normal((4, 3, 4)))
    a, lp = act(logits, np.random.default_rng(3))
    lp2, ent = action_log_prob(logits, a)
    np.testing.assert_allclose(lp, lp2.data, atol=1e-12)
    assert np.all(ent.data > 0)


# -- end-to-end gradients -------------------------------------------------

def e2e_loss(pol, obs, goal, h, noise, hard):
    out = executor_forward(pol, obs, goal, h, noise=noise, hard=hard)
    lp, ent = action_log_prob(out.logits, np.arange(pol.n_agents)[None].repeat(len(obs), 0) % pol.n_actions)
    return lp.sum() + 0.3 * (out.value * out.value).sum() + 0.01 * ent.sum() + (out.h_next * 0.1).sum()


def test_end_to_end_finite_differences():
    """Soft neighbour selection keeps the forward smooth, so every parameter can be probed."""
    pol = make(3, seed=14)
    obs, goal, h, noise = inputs(pol, 2, 14)
    rng = np.random.default_rng(0)
    for name, p in pol.named_parameters().items():
        err = check_param_grad_sampled(lambda: e2e_loss(pol, obs, goal, h, noise, hard=False), p, rng)
        assert err < TOL, name


def test_every_parameter_receives_gradient():
    pol = make(3, seed=15)
    obs, goal, h, noise = inputs(pol, 4, 15)
    for p in pol.parameters():
        p.zero_grad()
    e2e_loss(pol, obs, goal, h, noise, hard=True).backward()
    for name, p in pol.named_parameters().items():
        assert np.any(p.grad != 0), name
