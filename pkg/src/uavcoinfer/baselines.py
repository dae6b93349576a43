"""Non-learning comparison policies: fixed trajectory, greedy inference, random."""

from __future__ import annotations

import math

import numpy as np

from .config import SimConfig
from .env import ReferencePath, UavEdgeEnv, bearing, uplink_rates
from .rollout import InferenceDecision, onehot_rep

POLICY_KINDS = ("FT", "GI", "RANDOM")


def ft_heading(q, n: int, ref: ReferencePath) -> float:
    """Bearing from ``q`` to the next reference checkpoint q_ref[n+1]."""
    nxt = ref[min(n + 1, len(ref))]
    return bearing(q, nxt)


def _top_u(scores, u: int) -> np.ndarray:
    # stable sort on the negated scores keeps the lowest index first among ties
    order = np.argsort(-np.asarray(scores, float), kind="stable")
    xi = np.zeros(len(scores), bool)
    xi[order[:u]] = True
    return xi


def gi_inference(entropies, rates_now, cfg: SimConfig):
    """Top-U GDs by local entropy, each at the largest ratio its current rate
    can carry over the offloading slots left in the period.

    Returns ``(xi, omega, omega_idx)``.
    """
    K = cfg.gd_count
    xi = _top_u(entropies, cfg.offload_cap)
    window = (cfg.sync_period - cfg.local_slots) * cfg.slot_len
    omega = np.zeros(K)
    idx = np.zeros(K, int)
    for k in np.flatnonzero(xi):
        budget = rates_now[k] * window
        payload = cfg.feat_dim[k] * cfg.bits_per_dim[k]
        for j, w in enumerate(cfg.ratio_set[k]):
            if w * payload <= budget:
                omega[k], idx[k] = w, j
    return xi, omega, idx


def random_inference(rng: np.random.Generator, cfg: SimConfig):
    K = cfg.gd_count
    xi = np.zeros(K, bool)
    xi[rng.choice(K, size=cfg.offload_cap, replace=False)] = True
    idx = np.array([rng.integers(len(cfg.ratio_set[k])) if xi[k] else 0 for k in range(K)])
    omega = np.array([cfg.ratio_set[k][idx[k]] for k in range(K)])
    return xi, omega, idx


def random_heading(rng: np.random.Generator) -> float:
    return float(rng.uniform(-math.pi, math.pi))


class RandomPolicy:
    """Uniform floor policy: random heading every slot, random offloading."""

    def __init__(self, cfg: SimConfig, seed=None):
        self.cfg = cfg
        self.rep_dim = cfg.gd_count + sum(cfg.ratio_counts())
        self.rng = np.random.default_rng(seed)

    def reseed(self, seed):
        self.rng = np.random.default_rng(seed)

    def transform_obs(self, obs):
        return obs

    def decide_inference(self, obs, env: UavEdgeEnv, explore: bool) -> InferenceDecision:
        xi, omega, idx = random_inference(self.rng, self.cfg)
        return InferenceDecision(xi, idx, omega, onehot_rep(xi, idx, self.cfg.ratio_counts()))

    def decide_heading(self, obs, ctx, env: UavEdgeEnv, explore: bool) -> float:
        return random_heading(self.rng)


def gi_decision(obs, env: UavEdgeEnv) -> InferenceDecision:
    cfg = env.cfg
    entropies = np.asarray(obs)[3:3 + cfg.gd_count]
    xi, omega, idx = gi_inference(entropies, uplink_rates(env.state.uav_pos, cfg), cfg)
    return InferenceDecision(xi, idx, omega, onehot_rep(xi, idx, cfg.ratio_counts()))
