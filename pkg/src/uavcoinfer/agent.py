"""Hierarchical actor-critic learner with a mixture-of-experts inference actor.

Two actors share one critic:

* the inference actor runs once per synchronization period. A gating net
  scores the GDs, the top-U are selected, and each selected GD's expert
  picks a compression ratio;
* the heading actor runs every slot on the observation plus the current
  period's offloading decision.

The critic scores ``[obs, heading, gate_rep, masked expert reps]`` where the
discrete choices enter as Gumbel-Softmax relaxations. Unselected experts
contribute exact zeros, so they receive no gradient.

Variants:
``hdrl-moe`` the full learner; ``hdrl-ue`` the same with entropies hidden;
``hdrl`` a single joint-action inference actor; ``ft`` learns inference
only and flies the reference path; ``gi`` learns the heading only and uses
the greedy inference heuristic.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import nn
from .baselines import _top_u, ft_heading, gi_decision
from .config import SimConfig, TrainConfig
from .env import UavEdgeEnv
from .rollout import EpisodeTrace, InferenceDecision, run_episode

VARIANTS = ("hdrl-moe", "hdrl", "hdrl-ue", "ft", "gi")


class ActionSpaceTooLarge(ValueError):
    pass


def _top_u_rows(scores: np.ndarray, u: int) -> np.ndarray:
    order = np.argsort(-scores, axis=1, kind="stable")
    mask = np.zeros(scores.shape, bool)
    np.put_along_axis(mask, order[:, :u], True, axis=1)
    return mask


# ------------------------------------------------------------ size counting

def moe_output_dim(cfg: SimConfig) -> int:
    """Gating logits plus every expert's ratio logits: K + sum |Omega_k|."""
    return cfg.gd_count + sum(cfg.ratio_counts())


def joint_space_size(cfg: SimConfig) -> int:
    """Feasible joint actions: exactly U GDs selected, each with a ratio choice.

    Elementary symmetric polynomial of order U over the ratio-set sizes, which
    reduces to C(K, U) * |Omega|^U for equal set sizes.
    """
    e = [1] + [0] * cfg.offload_cap
    for size in cfg.ratio_counts():
        for j in range(cfg.offload_cap, 0, -1):
            e[j] += e[j - 1] * size
    return e[cfg.offload_cap]


def unfiltered_joint_size(cfg: SimConfig) -> int:
    return math.prod(cfg.ratio_counts())


# ------------------------------------------------------------------ actors

@dataclass
class MoENoise:
    gate: np.ndarray
    experts: list


class MoEInferenceActor:
    def __init__(self, gating: nn.DenseNet, experts: list, offload_cap: int, ratio_sets):
        self.gating = gating
        self.experts = experts
        self.offload_cap = offload_cap
        self.ratio_sets = [np.asarray(r) for r in ratio_sets]
        self.sizes = [len(r) for r in ratio_sets]
        self.K = len(experts)
        self.rep_dim = self.K + sum(self.sizes)
        self._offsets = np.cumsum([self.K] + self.sizes)

    @classmethod
    def build(cls, cfg: SimConfig, obs_dim: int, hidden, rng):
        gating = nn.DenseNet.init([obs_dim, *hidden, cfg.gd_count], rng)
        experts = [nn.DenseNet.init([obs_dim, *hidden, m], rng) for m in cfg.ratio_counts()]
        return cls(gating, experts, cfg.offload_cap, cfg.ratio_set)

    @property
    def output_dim(self) -> int:
        return self.rep_dim

    def nets(self) -> list:
        return [self.gating, *self.experts]

    def params(self) -> list:
        return [p for net in self.nets() for p in net.params()]

    def copy(self) -> "MoEInferenceActor":
        return MoEInferenceActor(self.gating.copy(), [e.copy() for e in self.experts],
                                 self.offload_cap, self.ratio_sets)

    def block(self, k: int) -> slice:
        return slice(self._offsets[k], self._offsets[k + 1])

    def sample_noise(self, rng, rows: int) -> MoENoise:
        return MoENoise(nn.sample_gumbel(rng, (rows, self.K)),
                        [nn.sample_gumbel(rng, (rows, m)) for m in self.sizes])

    def act(self, obs, explore: bool, tau_gate: float, tau_expert: float, rng) -> InferenceDecision:
        z = self.gating(obs)
        if explore:
            g = nn.sample_gumbel(rng, z.shape)
            gate = nn.softmax((z + g) / tau_gate)
            xi = _top_u(z + g, self.offload_cap)
        else:
            gate = nn.softmax(z / tau_gate)
            xi = _top_u(z, self.offload_cap)
        rep = np.zeros(self.rep_dim)
        rep[:self.K] = gate
        idx = np.zeros(self.K, int)
        omega = np.zeros(self.K)
        for k in np.flatnonzero(xi):
            zk = self.experts[k](obs)
            if explore:
                gk = nn.sample_gumbel(rng, zk.shape)
                w = nn.softmax((zk + gk) / tau_expert)
                idx[k] = int(np.argmax(zk + gk))
            else:
                w = nn.softmax(zk / tau_expert)
                idx[k] = int(np.argmax(zk))
            rep[self.block(k)] = w
            omega[k] = self.ratio_sets[k][idx[k]]
        return InferenceDecision(xi, idx, omega, rep)

    def forward_rep(self, X, tau_gate, tau_expert, noise: MoENoise | None = None):
        """Batched relaxed representation; returns ``(rep, cache)``."""
        z, gcache = self.gating.forward_cache(X)
        pert = z if noise is None else z + noise.gate
        gate = nn.softmax(pert / tau_gate)
        xi = _top_u_rows(pert, self.offload_cap)
        rep = np.zeros((len(X), self.rep_dim))
        rep[:, :self.K] = gate
        ecaches = []
        for k, expert in enumerate(self.experts):
            rows = np.flatnonzero(xi[:, k])
            if rows.size == 0:
                ecaches.append(None)
                continue
            zk, ec = expert.forward_cache(X[rows])
            if noise is not None:
                zk = zk + noise.experts[k][rows]
            w = nn.softmax(zk / tau_expert)
            rep[rows, self.block(k)] = w
            ecaches.append((rows, w, ec))
        return rep, (gcache, gate, ecaches, tau_gate, tau_expert)

    def backward_rep(self, cache, grad_rep) -> list:
        """Parameter gradients (ordered as ``params()``) of <rep, grad_rep>."""
        gcache, gate, ecaches, tau_gate, tau_expert = cache
        dz = nn.softmax_backward(gate, grad_rep[:, :self.K]) / tau_gate
        grads = self.gating.backward(gcache, dz).params()
        for k, expert in enumerate(self.experts):
            if ecaches[k] is None:
                grads += [np.zeros_like(p) for p in expert.params()]
                continue
            rows, w, ec = ecaches[k]
            dzk = nn.softmax_backward(w, grad_rep[rows, self.block(k)]) / tau_expert
            grads += expert.backward(ec, dzk).params()
        return grads


class JointInferenceActor:
    """Monolithic inference actor: one categorical over all feasible joint actions."""

    def __init__(self, net: nn.DenseNet, patterns: np.ndarray, ratio_sets):
        self.net = net
        self.patterns = patterns  # (J, K) ratio index per GD, -1 when not selected
        self.ratio_sets = [np.asarray(r) for r in ratio_sets]
        self.rep_dim = len(patterns)
        self.K = patterns.shape[1]

    @staticmethod
    def enumerate_patterns(cfg: SimConfig, cap: int) -> np.ndarray:
        size = joint_space_size(cfg)
        if size > cap:
            raise ActionSpaceTooLarge(
                f"joint inference action space has {size:,} actions "
                f"(C({cfg.gd_count},{cfg.offload_cap}) x ratio choices), above the cap of {cap:,}")
        rows = []
        sizes = cfg.ratio_counts()
        for combo in itertools.combinations(range(cfg.gd_count), cfg.offload_cap):
            for choice in itertools.product(*(range(sizes[k]) for k in combo)):
                row = [-1] * cfg.gd_count
                for k, j in zip(combo, choice):
                    row[k] = j
                rows.append(row)
        return np.array(rows, dtype=int)

    @classmethod
    def build(cls, cfg: SimConfig, obs_dim: int, hidden, rng, cap: int):
        patterns = cls.enumerate_patterns(cfg, cap)
        net = nn.DenseNet.init([obs_dim, *hidden, len(patterns)], rng)
        return cls(net, patterns, cfg.ratio_set)

    @property
    def output_dim(self) -> int:
        return self.rep_dim

    def nets(self) -> list:
        return [self.net]

    def params(self) -> list:
        return self.net.params()

    def copy(self) -> "JointInferenceActor":
        return JointInferenceActor(self.net.copy(), self.patterns, self.ratio_sets)

    def sample_noise(self, rng, rows: int) -> np.ndarray:
        return nn.sample_gumbel(rng, (rows, self.rep_dim))

    def decode(self, j: int) -> tuple:
        row = self.patterns[j]
        xi = row >= 0
        idx = np.where(xi, row, 0)
        omega = np.array([self.ratio_sets[k][idx[k]] if xi[k] else 0.0 for k in range(self.K)])
        return xi, idx, omega

    def act(self, obs, explore, tau_gate, tau_expert, rng) -> InferenceDecision:
        z = self.net(obs)
        if explore:
            pert = z + nn.sample_gumbel(rng, z.shape)
        else:
            pert = z
        y = nn.softmax(pert / tau_gate)
        xi, idx, omega = self.decode(int(np.argmax(pert)))
        return InferenceDecision(xi, idx, omega, y)

    def forward_rep(self, X, tau_gate, tau_expert, noise=None):
        z, cache = self.net.forward_cache(X)
        pert = z if noise is None else z + noise
        y = nn.softmax(pert / tau_gate)
        return y, (cache, y, tau_gate)

    def backward_rep(self, cache, grad_rep) -> list:
        c, y, tau = cache
        return self.net.backward(c, nn.softmax_backward(y, grad_rep) / tau).params()


class UavActor:
    """Heading actor: ``pi * tanh(net(obs ++ xi ++ omega))``."""

    def __init__(self, net: nn.DenseNet):
        self.net = net

    @classmethod
    def build(cls, in_dim: int, hidden, rng):
        return cls(nn.DenseNet.init([in_dim, *hidden, 1], rng, output_activation="tanh"))

    def params(self) -> list:
        return self.net.params()

    def copy(self) -> "UavActor":
        return UavActor(self.net.copy())

    def heading(self, obs, ctx) -> float:
        return float(math.pi * self.net(np.concatenate([obs, ctx]))[0])

    def forward(self, X):
        out, cache = self.net.forward_cache(X)
        return math.pi * out[:, 0], cache

    def backward(self, cache, grad_theta) -> list:
        return self.net.backward(cache, math.pi * grad_theta[:, None]).params()


# ------------------------------------------------------------------ replay

class ReplayBuffer:
    """FIFO store of whole episodes."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.episodes: deque = deque(maxlen=capacity)

    def __len__(self):
        return len(self.episodes)

    def add(self, trace: EpisodeTrace) -> None:
        self.episodes.append(trace)

    def sample(self, size: int, rng) -> list:
        if not self.episodes:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(len(self.episodes), size=size)
        return [self.episodes[i] for i in idx]


@dataclass
class Batch:
    obs: np.ndarray
    reward: np.ndarray
    heading: np.ndarray
    inf_rep: np.ndarray
    ctx: np.ndarray
    dec: np.ndarray       # global row of the period's decision observation, -1 in local slots
    nxt: np.ndarray       # global row of the next slot, -1 at the terminal slot

    @classmethod
    def from_traces(cls, traces) -> "Batch":
        if not traces:
            raise ValueError("empty batch")
        N = len(traces[0])
        offsets = np.arange(len(traces)) * N
        dec = np.concatenate([np.where(t.dec_idx >= 0, t.dec_idx + o, -1) for t, o in zip(traces, offsets)])
        local = np.arange(N)
        nxt = np.concatenate([np.where(local < N - 1, local + 1 + o, -1) for o in offsets])
        return cls(
            obs=np.concatenate([t.obs for t in traces]),
            reward=np.concatenate([t.reward for t in traces]),
            heading=np.concatenate([t.heading for t in traces]),
            inf_rep=np.concatenate([t.inf_rep for t in traces]),
            ctx=np.concatenate([t.uav_ctx for t in traces]),
            dec=dec,
            nxt=nxt,
        )

    def __len__(self):
        return len(self.reward)


# ------------------------------------------------------------------- agent

class HdrlAgent:
    def __init__(self, sim: SimConfig, train: TrainConfig, variant: str = "hdrl-moe", seed=0):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        self.sim = sim
        self.tc = train
        self.variant = variant
        ss = np.random.SeedSequence(seed)
        init_ss, explore_ss, sample_ss = ss.spawn(3)
        init_rng = np.random.default_rng(init_ss)
        self.rng = np.random.default_rng(explore_ss)
        self.sample_rng = np.random.default_rng(sample_ss)

        K = sim.gd_count
        obs_dim = sim.obs_dim
        hidden = train.hidden
        self.learn_heading = variant != "ft"
        self.learn_inference = variant != "gi"

        if variant == "hdrl":
            self.inference = JointInferenceActor.build(sim, obs_dim, hidden, init_rng, train.joint_action_cap)
        elif self.learn_inference:
            self.inference = MoEInferenceActor.build(sim, obs_dim, hidden, init_rng)
        else:
            self.inference = None
        self.rep_dim = self.inference.rep_dim if self.inference else moe_output_dim(sim)
        self.uav = UavActor.build(obs_dim + 2 * K, hidden, init_rng) if self.learn_heading else None
        self.critic = nn.DenseNet.init([obs_dim + 1 + self.rep_dim, *hidden, 1], init_rng)

        self.target_inference = self.inference.copy() if self.inference else None
        self.target_uav = self.uav.copy() if self.uav else None
        self.target_critic = self.critic.copy()

        self.critic_opt = nn.AdamState.for_params(self.critic.params(), train.critic_lr)
        self.uav_opt = nn.AdamState.for_params(self.uav.params(), train.actor_lr) if self.uav else None
        self.inference_opt = (nn.AdamState.for_params(self.inference.params(), train.actor_lr)
                              if self.inference else None)
        self.episode = 0  # annealing counter e

    # --------------------------------------------------------- schedules
    @property
    def heading_noise_var(self) -> float:
        return self.tc.decay ** self.episode * self.tc.heading_noise_var

    @property
    def tau_gate(self) -> float:
        return self.tc.decay ** self.episode * self.tc.gating_temp

    @property
    def tau_expert(self) -> float:
        return self.tc.decay ** self.episode * self.tc.expert_temp

    # ------------------------------------------------------------ acting
    def transform_obs(self, obs):
        if self.variant == "hdrl-ue":
            obs = np.array(obs, dtype=float)
            obs[3:] = 0.0
        return obs

    def decide_inference(self, obs, env: UavEdgeEnv, explore: bool) -> InferenceDecision:
        if not self.learn_inference:
            return gi_decision(obs, env)
        return self.inference.act(obs, explore, self.tau_gate, self.tau_expert, self.rng)

    def decide_heading(self, obs, ctx, env: UavEdgeEnv, explore: bool) -> float:
        if not self.learn_heading:
            st = env.state
            return ft_heading(st.uav_pos, st.slot, env.ref)
        theta = self.uav.heading(obs, ctx)
        if explore:
            theta += self.rng.normal(0.0, math.sqrt(self.heading_noise_var))
        return float(np.clip(theta, -math.pi, math.pi))

    def reseed(self, seed) -> None:
        # evaluation is greedy, so reseeding only matters for the fixed-policy parts
        pass

    # ----------------------------------------------------- representations
    def _inference_rep(self, actor, batch: Batch, rows, noise, tau_g, tau_e):
        """Inference representation for ``rows``, computed once per decision row."""
        dec = batch.dec[rows]
        rep = np.zeros((len(rows), self.rep_dim))
        live = dec >= 0
        uniq, inv = np.unique(dec[live], return_inverse=True)
        if uniq.size == 0:
            return rep, None
        nz = None if noise is None else _take_noise(noise, uniq)
        urep, cache = actor.forward_rep(batch.obs[uniq], tau_g, tau_e, nz)
        rep[live] = urep[inv]
        return rep, (cache, live, inv, len(uniq))

    def _target_action(self, batch: Batch, rows, noise=None):
        """Heading and inference parts of the target action at ``rows``."""
        if self.learn_heading:
            x = np.concatenate([batch.obs[rows], batch.ctx[rows]], axis=1)
            theta, _ = self.target_uav.forward(x)
        else:
            theta = batch.heading[rows]
        if self.learn_inference:
            rep, _ = self._inference_rep(self.target_inference, batch, rows, noise,
                                         self.tau_gate, self.tau_expert)
        else:
            rep = batch.inf_rep[rows]
        return theta, rep

    def _online_action(self, batch: Batch, noise=None):
        rows = np.arange(len(batch))
        if self.learn_heading:
            x = np.concatenate([batch.obs, batch.ctx], axis=1)
            theta, ucache = self.uav.forward(x)
        else:
            theta, ucache = batch.heading, None
        if self.learn_inference:
            rep, icache = self._inference_rep(self.inference, batch, rows, noise,
                                              self.tau_gate, self.tau_expert)
        else:
            rep, icache = batch.inf_rep, None
        return theta, rep, ucache, icache

    def critic_input(self, obs, theta, rep):
        return np.concatenate([obs, np.asarray(theta)[:, None], rep], axis=1)

    # ----------------------------------------------------------- updates
    def critic_loss_and_grads(self, batch: Batch, target_noise=None, actor_noise=None):
        M = len(batch)
        y = self.tc.reward_scale * batch.reward
        live = np.flatnonzero(batch.nxt >= 0)
        if live.size and self.tc.discount > 0:
            nrows = batch.nxt[live]
            theta_t, rep_t = self._target_action(batch, nrows, target_noise)
            q_next = self.target_critic(self.critic_input(batch.obs[nrows], theta_t, rep_t))[:, 0]
            y[live] += self.tc.discount * q_next
        if self.tc.critic_input == "actor":
            theta, rep, _, _ = self._online_action(batch, actor_noise)
        else:
            theta, rep = batch.heading, batch.inf_rep
        q, cache = self.critic.forward_cache(self.critic_input(batch.obs, theta, rep))
        err = q[:, 0] - y
        loss = float(np.mean(err ** 2))
        grads = self.critic.backward(cache, (2.0 / M) * err[:, None]).params()
        return loss, grads

    def critic_update(self, traces, target_noise=None) -> float:
        batch = traces if isinstance(traces, Batch) else Batch.from_traces(traces)
        if target_noise is None and self.learn_inference:
            target_noise = self.inference.sample_noise(self.rng, len(batch))
        actor_noise = None
        if self.tc.critic_input == "actor" and self.learn_inference:
            actor_noise = self.inference.sample_noise(self.rng, len(batch))
        loss, grads = self.critic_loss_and_grads(batch, target_noise, actor_noise)
        if not math.isfinite(loss):
            raise FloatingPointError("critic loss is not finite")
        nn.adam_step(self.critic.params(), grads, self.critic_opt)
        return loss

    def actor_objective_and_grads(self, batch: Batch, noise=None):
        """Mean critic value of the actors' own actions and its gradients.

        Returns ``(objective, uav_grads or None, inference_grads or None)``;
        gradients point uphill.
        """
        M = len(batch)
        theta, rep, ucache, icache = self._online_action(batch, noise)
        q, ccache = self.critic.forward_cache(self.critic_input(batch.obs, theta, rep))
        obj = float(q.mean())
        gin = self.critic.backward(ccache, np.full((M, 1), 1.0 / M)).input
        d = batch.obs.shape[1]
        uav_grads = self.uav.backward(ucache, gin[:, d]) if ucache is not None else None
        inf_grads = None
        if self.learn_inference:
            inf_grads = [np.zeros_like(p) for p in self.inference.params()]
            if icache is not None:
                cache, live, inv, n_uniq = icache
                drep = np.zeros((n_uniq, self.rep_dim))
                np.add.at(drep, inv, gin[live, d + 1:])
                inf_grads = self.inference.backward_rep(cache, drep)
        return obj, uav_grads, inf_grads

    def actor_update(self, traces, noise=None) -> float:
        batch = traces if isinstance(traces, Batch) else Batch.from_traces(traces)
        if noise is None and self.learn_inference:
            noise = self.inference.sample_noise(self.rng, len(batch))
        obj, ug, ig = self.actor_objective_and_grads(batch, noise)
        if ug is not None:
            nn.adam_step(self.uav.params(), [-g for g in ug], self.uav_opt)
        if ig is not None:
            nn.adam_step(self.inference.params(), [-g for g in ig], self.inference_opt)
        return obj

    def soft_update_targets(self) -> None:
        nn.soft_update(self.target_critic, self.critic, self.tc.critic_tau)
        if self.uav:
            nn.soft_update(self.target_uav.net, self.uav.net, self.tc.actor_tau)
        if self.inference:
            for t, o in zip(self.target_inference.nets(), self.inference.nets()):
                nn.soft_update(t, o, self.tc.actor_tau)

    def update(self, traces) -> tuple[float, float]:
        batch = Batch.from_traces(traces)
        closs = self.critic_update(batch)
        aobj = self.actor_update(batch)
        self.soft_update_targets()
        return closs, aobj

    # -------------------------------------------------------- checkpoints
    def named_nets(self) -> dict:
        out = {"critic": self.critic, "target_critic": self.target_critic}
        if self.uav:
            out["uav"] = self.uav.net
            out["target_uav"] = self.target_uav.net
        if self.inference:
            for prefix, actor in (("", self.inference), ("target_", self.target_inference)):
                if isinstance(actor, MoEInferenceActor):
                    out[prefix + "gating"] = actor.gating
                    for k, e in enumerate(actor.experts):
                        out[f"{prefix}expert_{k}"] = e
                else:
                    out[prefix + "joint"] = actor.net
        return out

    def named_opts(self) -> dict:
        out = {"critic": self.critic_opt}
        if self.uav_opt:
            out["uav"] = self.uav_opt
        if self.inference_opt:
            out["inference"] = self.inference_opt
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": nn.SCHEMA_VERSION,
            "variant": self.variant,
            "episode": self.episode,
            "networks": {k: nn.net_to_dict(v) for k, v in self.named_nets().items()},
            "optimizers": {k: nn.adam_to_dict(v) for k, v in self.named_opts().items()},
            "rng": {"explore": self.rng.bit_generator.state, "sample": self.sample_rng.bit_generator.state},
        }

    def load_dict(self, d: dict) -> None:
        if d.get("schema_version") != nn.SCHEMA_VERSION:
            raise ValueError(f"checkpoint schema {d.get('schema_version')} != {nn.SCHEMA_VERSION}")
        if d["variant"] != self.variant:
            raise ValueError(f"checkpoint holds variant {d['variant']!r}, config asks for {self.variant!r}")
        mine = self.named_nets()
        problems = []
        for name, net in mine.items():
            stored = d["networks"].get(name)
            if stored is None:
                problems.append(f"{name}: missing")
            elif list(stored["layer_sizes"]) != net.layer_sizes:
                problems.append(f"{name}: expected {net.layer_sizes}, found {list(stored['layer_sizes'])}")
        if problems:
            raise ValueError("checkpoint does not match the configuration: " + "; ".join(problems))
        for name, net in mine.items():
            loaded = nn.net_from_dict(d["networks"][name])
            for p, q in zip(net.params(), loaded.params()):
                p[...] = q
        for name, opt in self.named_opts().items():
            loaded = nn.adam_from_dict(d["optimizers"][name])
            opt.step, opt.lr = loaded.step, loaded.lr
            for a, b in zip(opt.first + opt.second, loaded.first + loaded.second):
                a[...] = b
        self.episode = int(d["episode"])
        self.rng.bit_generator.state = d["rng"]["explore"]
        self.sample_rng.bit_generator.state = d["rng"]["sample"]


def _take_noise(noise, rows):
    if isinstance(noise, MoENoise):
        return MoENoise(noise.gate[rows], [e[rows] for e in noise.experts])
    return noise[rows]


# ---------------------------------------------------------------- training

@dataclass
class TrainRow:
    episode: int
    reward: float
    accuracy: float
    d_dev: float
    offload_ratio: float
    critic_loss: float
    actor_objective: float


def episode_seeds(seed: int, count: int) -> np.ndarray:
    return np.random.SeedSequence([seed, 0x5EED]).generate_state(max(count, 1))[:count]


def train_episode(agent: HdrlAgent, env: UavEdgeEnv, buffer: ReplayBuffer, env_seed: int,
                  index: int) -> TrainRow:
    """Collect one exploring episode, store it, then run the configured updates."""
    trace, m = run_episode(env, agent, int(env_seed), explore=True)
    buffer.add(trace)
    closs = aobj = float("nan")
    for _ in range(agent.tc.updates_per_episode):
        closs, aobj = agent.update(buffer.sample(agent.tc.batch_size, agent.sample_rng))
    agent.episode += 1
    return TrainRow(index, m.total_reward, m.accuracy, m.d_dev, m.offload_ratio, closs, aobj)


def train(agent: HdrlAgent, env: UavEdgeEnv, episodes: int, seed: int = 0,
          buffer: ReplayBuffer | None = None, callback=None) -> tuple[ReplayBuffer, list[TrainRow]]:
    buffer = buffer if buffer is not None else ReplayBuffer(agent.tc.buffer_capacity)
    rows = []
    for i, env_seed in enumerate(episode_seeds(seed, episodes)):
        row = train_episode(agent, env, buffer, env_seed, i)
        rows.append(row)
        if callback is not None:
            callback(row, agent)
    return buffer, rows
