from __future__ import annotations

import math

import numpy as np
import pytest

from uavcoinfer import nn
from uavcoinfer.agent import (ActionSpaceTooLarge, Batch, HdrlAgent, JointInferenceActor,
                              MoEInferenceActor, ReplayBuffer, joint_space_size, moe_output_dim,
                              train, unfiltered_joint_size)
from uavcoinfer.config import SimConfig, TrainConfig
from uavcoinfer.env import UavEdgeEnv
from uavcoinfer.rollout import run_episode


def _fixed_net(in_dim, bias):
    bias = np.asarray(bias, float)
    return nn.DenseNet([np.zeros((in_dim, len(bias)))], [bias.copy()])


def _moe_with_gate(sim, gate_logits, expert_logits=None):
    d = sim.obs_dim
    experts = [_fixed_net(d, expert_logits[k] if expert_logits else np.zeros(m))
               for k, m in enumerate(sim.ratio_counts())]
    return MoEInferenceActor(_fixed_net(d, gate_logits), experts, sim.offload_cap, sim.ratio_set)


def _agent(sim=None, variant="hdrl-moe", seed=0, **train_kw):
    sim = sim or SimConfig()
    kw = dict(hidden=(16, 8), batch_size=2)
    kw.update(train_kw)
    return HdrlAgent(sim, TrainConfig(**kw), variant, seed=seed)


def _batch(agent, env, episodes=2, seed=0):
    traces = [run_episode(env, agent, seed + i, explore=True)[0] for i in range(episodes)]
    return Batch.from_traces(traces)


# ------------------------------------------------------------- inference act

def test_top_u_selection_without_exploration(sim):
    actor = _moe_with_gate(sim, [0.9, 0.1, 0.5, 0.7])
    d = actor.act(np.zeros(sim.obs_dim), False, 0.5, 0.5, None)
    np.testing.assert_array_equal(d.xi, [True, False, False, True])
    assert d.omega[1] == 0.0 and d.omega[2] == 0.0
    np.testing.assert_array_equal(d.rep[sim.gd_count + 4:sim.gd_count + 12], 0.0)


def test_cap_equal_to_count_selects_all(sim):
    sim = sim.replace(offload_cap=4)
    actor = _moe_with_gate(sim, [-5.0, 3.0, 0.0, -1.0])
    assert actor.act(np.zeros(sim.obs_dim), False, 0.5, 0.5, None).xi.all()


def test_cold_exploration_matches_gumbel_max(sim):
    z = np.array([0.2, 0.1, -0.3, 0.4])
    actor = _moe_with_gate(sim, z)
    g = nn.sample_gumbel(np.random.default_rng(7), 4)
    d = actor.act(np.zeros(sim.obs_dim), True, 1e-6, 1e-6, np.random.default_rng(7))
    order = np.argsort(-(z + g), kind="stable")[:2]
    assert set(np.flatnonzero(d.xi)) == set(order)
    assert np.argmax(d.rep[:4]) == np.argmax(z + g)
    assert d.rep[:4].max() == pytest.approx(1.0)


def test_expert_picks_argmax_ratio(sim):
    actor = _moe_with_gate(sim, [1.0, 0.0, 0.0, 2.0],
                           expert_logits=[[0, 0, 5, 0], [0] * 4, [0] * 4, [0, 0, 0, 3]])
    d = actor.act(np.zeros(sim.obs_dim), False, 0.5, 0.5, None)
    np.testing.assert_array_equal(d.omega, [0.4, 0.0, 0.0, 0.55])


# ---------------------------------------------------------------- heading

def test_heading_without_exploration_is_actor_output(sim, task):
    agent = _agent(sim)
    env = UavEdgeEnv(sim, task)
    env.reset(0)
    obs, ctx = np.linspace(0, 1, sim.obs_dim), np.zeros(2 * sim.gd_count)
    assert agent.decide_heading(obs, ctx, env, False) == agent.uav.heading(obs, ctx)


def test_heading_clip_binds(sim, task):
    agent = _agent(sim)
    net = agent.uav.net
    net.weights[-1][...] = 0.0
    net.biases[-1][...] = 50.0   # tanh saturates, heading = pi
    env = UavEdgeEnv(sim, task)
    env.reset(0)
    obs, ctx = np.zeros(sim.obs_dim), np.zeros(2 * sim.gd_count)
    thetas = [agent.decide_heading(obs, ctx, env, True) for _ in range(50)]
    assert max(thetas) == math.pi and min(thetas) >= -math.pi


def test_annealing_schedules_exact():
    agent = _agent()
    agent.episode = 100
    assert agent.heading_noise_var == pytest.approx(0.06057704364907279, rel=1e-12)
    assert agent.tau_gate == 0.995 ** 100 * 0.5
    assert agent.tau_expert == 0.995 ** 100 * 0.5


def test_trace_keeps_chosen_heading_when_override_fires(sim, task):
    agent = _agent(sim)
    agent.uav.net.weights[-1][...] = 0.0
    agent.uav.net.biases[-1][...] = 50.0   # always heads west, away from the end point
    trace, metrics = run_episode(UavEdgeEnv(sim, task), agent, 0, explore=False)
    np.testing.assert_array_equal(trace.heading, math.pi)
    # the executed headings turn back once the remaining slots only just suffice
    assert np.any(metrics.headings[:-1] != math.pi)


# ---------------------------------------------------------- representation

def test_critic_action_dim_small_config():
    sim = SimConfig(gd_count=2, offload_cap=1, gd_positions=((0, 0), (1, 1)))
    agent = _agent(sim)
    assert 1 + agent.rep_dim == 11
    assert agent.critic.in_dim == sim.obs_dim + 11


def test_unselected_expert_block_is_zero(sim, task):
    agent = _agent(sim)
    env = UavEdgeEnv(sim, task)
    trace, _ = run_episode(env, agent, 0, explore=True)
    K = sim.gd_count
    for row, rep in zip(trace.uav_ctx, trace.inf_rep):
        if not rep.any():
            continue
        for k in range(K):
            block = rep[K + 4 * k:K + 4 * (k + 1)]
            if row[k] == 0:
                assert np.all(block == 0.0)
            else:
                assert block.sum() == pytest.approx(1.0)


def test_critic_gradient_wrt_unselected_expert_logits_zero(sim, task):
    agent = _agent(sim)
    batch = _batch(agent, UavEdgeEnv(sim, task), 1)
    noise = agent.inference.sample_noise(np.random.default_rng(0), len(batch))
    rows = np.flatnonzero(batch.dec >= 0)
    dec_rows = np.unique(batch.dec[rows])
    rep, cache = agent.inference.forward_rep(batch.obs[dec_rows], 0.5, 0.5,
                                             noise=type(noise)(noise.gate[dec_rows],
                                                               [e[dec_rows] for e in noise.experts]))
    _, _, ecaches, _, _ = cache
    for k, ec in enumerate(ecaches):
        sel = np.zeros(len(dec_rows), bool)
        if ec is not None:
            sel[ec[0]] = True
        block = rep[:, agent.inference.block(k)]
        assert np.all(block[~sel] == 0.0)


# ----------------------------------------------------------------- updates

def test_critic_loss_zero_at_fixed_point(sim, task):
    agent = _agent(sim.replace(dev_weight=0.0))
    for net in (agent.critic, agent.target_critic):
        net.weights[-1][...] = 0.0
        net.biases[-1][...] = 0.0
    batch = _batch(agent, UavEdgeEnv(agent.sim, task), 1)
    batch.reward[:] = 0.0
    loss, _ = agent.critic_loss_and_grads(batch)
    assert loss == 0.0


def test_single_terminal_transition_loss(sim, task):
    agent = _agent(sim)
    full = _batch(agent, UavEdgeEnv(sim, task), 1)
    one = Batch(full.obs[:1], np.array([1.0]), full.heading[:1], full.inf_rep[:1], full.ctx[:1],
                np.array([-1]), np.array([-1]))
    q = agent.critic(agent.critic_input(one.obs, one.heading, one.inf_rep))[0, 0]
    loss, _ = agent.critic_loss_and_grads(one)
    assert loss == pytest.approx((1.0 - q) ** 2, rel=1e-12)


def test_empty_batch_rejected():
    with pytest.raises(ValueError):
        Batch.from_traces([])


def test_unselected_expert_unchanged_by_actor_update(sim, task):
    agent = _agent(sim)
    batch = _batch(agent, UavEdgeEnv(sim, task), 1)
    noise = agent.inference.sample_noise(agent.rng, len(batch))
    # force expert 3 out of every decision by sinking its gate logit
    agent.inference.gating.biases[-1][3] = -1e3
    before = [p.copy() for p in agent.inference.experts[3].params()]
    _, _, grads = agent.actor_objective_and_grads(batch, noise)
    agent.actor_update(batch, noise)
    for p, q in zip(before, agent.inference.experts[3].params()):
        np.testing.assert_array_equal(p, q)
    n_gate = len(agent.inference.gating.params())
    start = n_gate + 3 * len(agent.inference.experts[0].params())
    assert all(np.all(g == 0) for g in grads[start:])


def test_constant_critic_gives_zero_actor_gradients(sim, task):
    agent = _agent(sim)
    for p in agent.critic.params():
        p[...] = 0.0
    batch = _batch(agent, UavEdgeEnv(sim, task), 1)
    obj, ug, ig = agent.actor_objective_and_grads(batch)
    assert obj == 0.0
    assert all(np.all(g == 0) for g in ug + ig)


def test_small_ascent_step_increases_objective(sim, task):
    agent = _agent(sim)
    full = _batch(agent, UavEdgeEnv(sim, task), 1)
    i = int(np.flatnonzero(full.dec >= 0)[0])
    one = Batch(full.obs[[i]], full.reward[[i]], full.heading[[i]], full.inf_rep[[i]],
                full.ctx[[i]], np.array([0]), np.array([-1]))
    noise = agent.inference.sample_noise(np.random.default_rng(1), 1)
    obj0, ug, ig = agent.actor_objective_and_grads(one, noise)
    step = 1e-4
    for p, g in zip(agent.uav.params() + agent.inference.params(), ug + ig):
        p += step * g
    obj1, _, _ = agent.actor_objective_and_grads(one, noise)
    assert obj1 > obj0


def test_soft_update_contracts_by_factor(sim):
    agent = _agent(sim)
    agent.critic.weights[0] += 1.0
    before = np.linalg.norm(agent.target_critic.weights[0] - agent.critic.weights[0])
    agent.soft_update_targets()
    after = np.linalg.norm(agent.target_critic.weights[0] - agent.critic.weights[0])
    assert after == pytest.approx(0.999 * before, rel=1e-12)


# ------------------------------------------------------------------ replay

def test_replay_fifo_eviction():
    buf = ReplayBuffer(3)
    for i in range(5):
        buf.add(i)
    assert list(buf.episodes) == [2, 3, 4]


def test_replay_sampling_with_replacement():
    buf = ReplayBuffer(10)
    buf.add("only")
    assert buf.sample(4, np.random.default_rng(0)) == ["only"] * 4
    with pytest.raises(ValueError):
        ReplayBuffer(2).sample(1, np.random.default_rng(0))


# ------------------------------------------------------------------ train

def _small_sim():
    return SimConfig(gd_count=2, offload_cap=1, gd_positions=((200, 0), (-200, 0)))


def test_training_is_deterministic(task):
    sim = _small_sim()
    runs = []
    for _ in range(2):
        agent = _agent(sim, seed=4)
        _, rows = train(agent, UavEdgeEnv(sim, task), 4, seed=9)
        runs.append([(r.reward, r.critic_loss, r.actor_objective) for r in rows])
    assert runs[0] == runs[1]


def test_buffer_size_tracks_episodes(task):
    sim = _small_sim()
    agent = _agent(sim, buffer_capacity=3)
    buf, _ = train(agent, UavEdgeEnv(sim, task), 5, seed=0)
    assert len(buf) == 3
    assert agent.episode == 5


def test_frozen_learning_gives_flat_reward(task):
    from scipy import stats
    sim = _small_sim()
    agent = _agent(sim, actor_lr=0.0, critic_lr=0.0, decay=1.0)
    _, rows = train(agent, UavEdgeEnv(sim, task), 80, seed=1)
    r = np.array([row.reward for row in rows])
    assert stats.ttest_ind(r[:40], r[40:]).pvalue > 0.01


# ---------------------------------------------------------------- variants

def test_output_dimension_counts():
    sim = SimConfig()
    assert moe_output_dim(sim) == 20
    assert unfiltered_joint_size(sim) == 256
    assert joint_space_size(sim) == 96


def test_joint_patterns_feasible():
    sim = SimConfig()
    pats = JointInferenceActor.enumerate_patterns(sim, 10 ** 7)
    assert pats.shape == (96, 4)
    assert np.all((pats >= 0).sum(axis=1) == 2)
    assert len({tuple(p) for p in pats}) == 96


def test_joint_space_cap_refusal():
    pos = tuple((float(i), 0.0) for i in range(16))
    sim = SimConfig(gd_count=16, offload_cap=8, gd_positions=pos)
    assert joint_space_size(sim) == 843448320
    with pytest.raises(ActionSpaceTooLarge):
        _agent(sim, variant="hdrl")
    assert _agent(sim).inference.output_dim == 16 + 64


def test_entropy_blind_observation(sim, task):
    agent = _agent(sim, variant="hdrl-ue")
    _, obs = UavEdgeEnv(sim, task).reset(0)
    seen = agent.transform_obs(obs)
    assert seen.shape == (3 + sim.gd_count,)
    np.testing.assert_array_equal(seen[3:], 0.0)
    np.testing.assert_array_equal(seen[:3], obs[:3])


@pytest.mark.parametrize("variant", ["hdrl", "hdrl-ue", "ft", "gi"])
def test_variants_train_and_act(variant, task):
    sim = _small_sim()
    agent = _agent(sim, variant=variant)
    _, rows = train(agent, UavEdgeEnv(sim, task), 2, seed=0)
    assert all(math.isfinite(r.critic_loss) for r in rows)


# -------------------------------------------------------------- checkpoint

def test_checkpoint_round_trip(task):
    sim = _small_sim()
    agent = _agent(sim, seed=2)
    train(agent, UavEdgeEnv(sim, task), 2, seed=0)
    clone = _agent(sim, seed=99)
    clone.load_dict(agent.to_dict())
    for (name, a), b in zip(agent.named_nets().items(), clone.named_nets().values()):
        for p, q in zip(a.params(), b.params()):
            np.testing.assert_array_equal(p, q, err_msg=name)
    assert clone.episode == 2


def test_checkpoint_dimension_mismatch_lists_shapes(task):
    agent = _agent(_small_sim())
    other = _agent(SimConfig())
    with pytest.raises(ValueError, match="expected"):
        other.load_dict(agent.to_dict())
