"""Actor/critic network tests, centered on gradient correctness via finite differences."""

import numpy as np
import pytest

from spikenorm.networks import ActorNet, CriticNet
from spikenorm.neurons import NeuronParams
from spikenorm.stats import EstimatorMode


def make_actor(seed=0, relaxed=False, neuron_kind="clif", hidden=8, timesteps=2,
               obs_dim=4, action_dim=2):
    return ActorNet(
        obs_dim=obs_dim,
        action_dim=action_dim,
        action_scale=2.0,
        hidden=hidden,
        timesteps=timesteps,
        neuron_kind=neuron_kind,
        mode=EstimatorMode(kind="ca"),
        rng=np.random.default_rng(seed),
        relaxed=relaxed,
    )


def fd_param_grads(loss_fn, params, h=1e-6):
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            i = it.multi_index
            orig = p[i]
            p[i] = orig + h
            fp = loss_fn()
            p[i] = orig - h
            fm = loss_fn()
            p[i] = orig
            g[i] = (fp - fm) / (2 * h)
            it.iternext()
        grads.append(g)
    return grads


class TestActorForward:
    def test_zero_network_outputs_zero(self):
        actor = make_actor()
        for w in (actor.w1, actor.w2, actor.w3):
            w[:] = 0.0
        obs = np.random.default_rng(1).normal(size=(4, 4))
        act = actor.forward(obs, stats_source="batch")
        np.testing.assert_allclose(act, 0.0, atol=1e-12)

    def test_actions_bounded_by_scale(self):
        rng = np.random.default_rng(2)
        for seed in range(5):
            actor = make_actor(seed=seed)
            obs = rng.normal(0, 5, size=(16, 4))
            act = actor.forward(obs, stats_source="batch")
            assert np.all(np.abs(act) <= actor.action_scale)

    def test_stateless_across_forwards(self):
        actor = make_actor(seed=3)
        obs = np.random.default_rng(3).normal(size=(8, 4))
        a1 = actor.forward(obs, stats_source="batch")
        a2 = actor.forward(obs, stats_source="batch")
        np.testing.assert_array_equal(a1, a2)

    def test_moving_matches_batch_when_moments_match(self):
        actor = make_actor(seed=4, relaxed=True)
        obs = np.random.default_rng(4).normal(size=(64, 4))
        a_batch = actor.forward(obs, stats_source="batch")
        for bn in actor.bn_layers:
            bs = bn.last_batch_stats
            bn.moving.mu_hat = bs.mean.copy()
            bn.moving.var_hat = bs.var.copy()
            bn.moving.initialized = True
        a_moving = actor.forward(obs, stats_source="moving")
        np.testing.assert_allclose(a_batch, a_moving, atol=1e-5)

    def test_moving_uninitialized_rejected(self):
        actor = make_actor(seed=5)
        with pytest.raises(RuntimeError, match="uninitialized"):
            actor.forward(np.zeros((2, 4)), stats_source="moving")

    def test_collect_returns_per_layer_stats_without_side_effects(self):
        actor = make_actor(seed=6)
        obs = np.random.default_rng(6).normal(size=(16, 4))
        _, collected = actor.forward(obs, stats_source="collect")
        assert len(collected) == 3
        assert collected[0].n == 16 * actor.timesteps  # pooled over batch x time
        assert all(bn.last_batch_stats is None for bn in actor.bn_layers)


class TestActorBackward:
    def test_zero_grad_action_gives_zero_grads(self):
        actor = make_actor(seed=7)
        obs = np.random.default_rng(7).normal(size=(6, 4))
        actor.forward(obs, stats_source="batch", cache=True)
        grads = actor.backward(np.zeros((6, 2)))
        for g in grads:
            assert not g.any()

    def test_dead_surrogate_zone_kills_hidden_grads(self):
        actor = make_actor(seed=8, timesteps=1,
                           )
        actor.neuron = NeuronParams(v_th=1e6, surrogate_width=0.5)
        obs = np.random.default_rng(8).normal(size=(6, 4))
        actor.forward(obs, stats_source="batch", cache=True)
        grads = actor.backward(np.ones((6, 2)))
        d_w1, _, d_w2, _, d_w3 = grads[0], grads[1], grads[2], grads[3], grads[4]
        assert not d_w1.any() and not d_w2.any() and not d_w3.any()

    @pytest.mark.parametrize("neuron_kind", ["lif", "clif"])
    def test_matches_finite_differences_on_relaxed_network(self, neuron_kind):
        rng = np.random.default_rng(9)
        actor = make_actor(seed=9, relaxed=True, neuron_kind=neuron_kind)
        obs = rng.normal(size=(6, 4))
        probe = rng.normal(size=(6, 2))

        def loss():
            return float((actor.forward(obs, stats_source="batch") * probe).sum())

        actor.forward(obs, stats_source="batch", cache=True)
        analytic = actor.backward(probe)
        numeric = fd_param_grads(loss, actor.trainable_params(), h=1e-6)
        for a, n in zip(analytic, numeric):
            np.testing.assert_allclose(a, n, rtol=1e-4, atol=1e-7)

    def test_backward_without_cache_rejected(self):
        with pytest.raises(RuntimeError, match="cached"):
            make_actor().backward(np.zeros((2, 2)))


class TestFusedForward:
    def test_fused_equals_moving_inference(self):
        rng = np.random.default_rng(10)
        actor = make_actor(seed=10, hidden=16, timesteps=5)
        # give the moving stats realistic values via a training forward
        obs_fit = rng.normal(size=(64, 4))
        actor.forward(obs_fit, stats_source="batch")
        for bn in actor.bn_layers:
            bn.step_estimator()
        obs = rng.normal(size=(32, 4))
        np.testing.assert_allclose(
            actor.forward_fused(obs),
            actor.forward(obs, stats_source="moving"),
            atol=1e-6,
        )


class TestCritic:
    def test_zero_weights_give_zero_q(self):
        critic = CriticNet(3, 1, hidden=8, rng=np.random.default_rng(11))
        for w in critic.trainable_params():
            w[:] = 0.0
        q = critic.forward(np.ones((5, 3)), np.ones((5, 1)))
        np.testing.assert_array_equal(q, 0.0)

    def test_deterministic(self):
        critic = CriticNet(3, 1, hidden=8, rng=np.random.default_rng(12))
        s = np.random.default_rng(12).normal(size=(7, 3))
        a = np.random.default_rng(13).normal(size=(7, 1))
        q1 = critic.forward(s, a)
        q2 = critic.forward(s, a)
        np.testing.assert_array_equal(q1, q2)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(14)
        critic = CriticNet(3, 2, hidden=8, rng=rng)
        s = rng.normal(size=(6, 3))
        a = rng.normal(size=(6, 2))
        probe = rng.normal(size=6)

        def loss():
            return float((critic.forward(s, a) * probe).sum())

        critic.forward(s, a, cache=True)
        analytic, (d_s, d_a) = critic.backward(probe)
        numeric = fd_param_grads(loss, critic.trainable_params(), h=1e-6)
        for g_a, g_n in zip(analytic, numeric):
            np.testing.assert_allclose(g_a, g_n, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(d_s, fd_param_grads(loss, [s], h=1e-6)[0],
                                   rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(d_a, fd_param_grads(loss, [a], h=1e-6)[0],
                                   rtol=1e-5, atol=1e-8)

    def test_dimension_mismatch_rejected(self):
        critic = CriticNet(3, 1, hidden=8)
        with pytest.raises(ValueError, match="mismatch"):
            critic.forward(np.zeros((4, 2)), np.zeros((4, 1)))


class TestStateDictRoundTrip:
    def test_actor_checkpoint_round_trip(self):
        actor = make_actor(seed=15)
        obs = np.random.default_rng(15).normal(size=(16, 4))
        actor.forward(obs, stats_source="batch")
        for bn in actor.bn_layers:
            bn.step_estimator()
        twin = make_actor(seed=99)
        twin.load_state_dict(actor.state_dict())
        for p, q in zip(actor.trainable_params(), twin.trainable_params()):
            np.testing.assert_array_equal(p, q)
        for a, b in zip(actor.bn_layers, twin.bn_layers):
            np.testing.assert_array_equal(a.moving.mu_hat, b.moving.mu_hat)
            np.testing.assert_array_equal(a.moving.d_sigma, b.moving.d_sigma)
            assert a.estimator_steps == b.estimator_steps

    def test_clone_matches_forward(self):
        actor = make_actor(seed=16)
        obs = np.random.default_rng(16).normal(size=(8, 4))
        a1 = actor.forward(obs, stats_source="batch")
        a2 = actor.clone().forward(obs, stats_source="batch")
        np.testing.assert_array_equal(a1, a2)
