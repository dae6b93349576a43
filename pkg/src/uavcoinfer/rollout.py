"""Episode rollouts, experience traces and per-episode metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env import Action, UavEdgeEnv, is_decision_slot, period_start


@dataclass
class InferenceDecision:
    xi: np.ndarray         # (K,) bool
    omega_idx: np.ndarray  # (K,) int index into each ratio set, 0 when unselected
    omega: np.ndarray      # (K,) ratios
    rep: np.ndarray        # relaxed representation fed to the critic


def onehot_rep(xi, omega_idx, ratio_counts) -> np.ndarray:
    """Critic representation of a hard decision: flags, then masked one-hot ratios."""
    parts = [np.asarray(xi, float)]
    for k, size in enumerate(ratio_counts):
        block = np.zeros(size)
        if xi[k]:
            block[omega_idx[k]] = 1.0
        parts.append(block)
    return np.concatenate(parts)


@dataclass
class EpisodeTrace:
    """One episode of experience, one row per slot 1..N."""

    obs: np.ndarray       # (N, obs_dim) observations as seen by the agent
    next_obs: np.ndarray  # (N, obs_dim)
    reward: np.ndarray    # (N,)
    heading: np.ndarray   # (N,) heading chosen by the controller at each slot
    inf_rep: np.ndarray   # (N, rep_dim) executed inference representation, zero in local slots
    uav_ctx: np.ndarray   # (N, 2K) offload flags and ratios fed to the heading actor
    dec_idx: np.ndarray   # (N,) row whose observation made this period's decision, -1 if none

    def __len__(self):
        return len(self.reward)


@dataclass
class EpisodeMetrics:
    total_reward: float
    accuracy: float
    d_dev: float
    attempted: np.ndarray   # (K,) offloads attempted (selected with positive ratio)
    succeeded: np.ndarray   # (K,) of which delivered
    selected: np.ndarray    # (K,) periods selected by the gating decision
    periods: int
    final_distance: float
    trajectory: np.ndarray  # (N, 2)
    headings: np.ndarray    # (N,)
    rewards: np.ndarray     # (N,)

    @property
    def success_ratio(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.attempted > 0, self.succeeded / np.maximum(self.attempted, 1), np.nan)

    @property
    def offload_ratio(self) -> float:
        total = self.attempted.sum()
        return float(self.succeeded.sum() / total) if total else float("nan")


def run_episode(env: UavEdgeEnv, controller, seed, explore: bool) -> tuple[EpisodeTrace, EpisodeMetrics]:
    """Roll one episode with ``controller`` and return its trace and metrics.

    ``controller`` supplies ``transform_obs``, ``decide_inference``,
    ``decide_heading`` and ``rep_dim``; see :class:`uavcoinfer.agent.HdrlAgent`.
    """
    cfg = env.cfg
    N, K = cfg.slot_count, cfg.gd_count
    _, raw = env.reset(seed)
    obs = controller.transform_obs(raw)

    obs_rows = np.zeros((N, len(obs)))
    next_rows = np.zeros((N, len(obs)))
    rewards = np.zeros(N)
    headings = np.zeros(N)
    executed = np.zeros(N)
    reps = np.zeros((N, controller.rep_dim))
    ctxs = np.zeros((N, 2 * K))
    dec_idx = np.full(N, -1)

    ctx = np.zeros(2 * K)
    rep = np.zeros(controller.rep_dim)
    decision = None
    dec_row = -1
    correct = total = 0
    attempted = np.zeros(K)
    succeeded = np.zeros(K)
    selected = np.zeros(K)

    for i in range(N):
        n = i + 1
        if n == period_start(n, cfg):
            rep = np.zeros(controller.rep_dim)
            dec_row = -1
            decision = None
        if is_decision_slot(n, cfg):
            decision = controller.decide_inference(obs, env, explore)
            rep = decision.rep
            dec_row = i
            ctx = np.concatenate([decision.xi.astype(float), decision.omega])
        theta = controller.decide_heading(obs, ctx, env, explore)
        act = Action(theta) if decision is None else Action(theta, decision.xi, decision.omega)
        out = env.step(act)

        obs_rows[i] = obs
        rewards[i] = out.reward
        # the straight-flight override belongs to the environment's dynamics, so
        # the trace keeps the heading the controller chose; on overridden slots
        # the critic then sees that the choice has no effect on the return
        headings[i] = float(np.clip(theta, -math.pi, math.pi))
        executed[i] = headings[i] if np.isnan(out.info["heading"]) else out.info["heading"]
        reps[i] = rep
        ctxs[i] = ctx
        dec_idx[i] = dec_row
        nxt = controller.transform_obs(out.observation)
        next_rows[i] = nxt
        obs = nxt

        if "correct" in out.info:
            correct += int(out.info["correct"].sum())
            total += K
            attempted += out.info["attempted"]
            succeeded += out.info["success"]
            selected += out.info["selected"]

    traj = np.array(env.state.traj)
    trace = EpisodeTrace(obs_rows, next_rows, rewards, headings, reps, ctxs, dec_idx)
    metrics = EpisodeMetrics(
        total_reward=float(rewards.sum()),
        accuracy=correct / total if total else float("nan"),
        d_dev=env.trajectory_deviation(),
        attempted=attempted,
        succeeded=succeeded,
        selected=selected,
        periods=total // K if K else 0,
        final_distance=float(np.linalg.norm(traj[-1] - np.array(cfg.end_pos))),
        trajectory=traj,
        headings=executed,
        rewards=rewards,
    )
    return trace, metrics


@dataclass
class EvalReport:
    episodes: int
    accuracy_mean: float
    accuracy_std: float
    d_dev_mean: float
    d_dev_std: float
    reward_mean: float
    success_ratio: np.ndarray   # per GD, pooled over episodes
    offload_share: np.ndarray   # per GD share of all attempted offloads
    selected_share: np.ndarray  # per GD share of gating selections
    first_episode: EpisodeMetrics

    def as_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "d_dev_mean": self.d_dev_mean,
            "d_dev_std": self.d_dev_std,
            "reward_mean": self.reward_mean,
            "success_ratio": [None if np.isnan(x) else float(x) for x in self.success_ratio],
            "success_ratio_mean": _nanmean(self.success_ratio),
            "offload_share": [float(x) for x in self.offload_share],
            "selected_share": [float(x) for x in self.selected_share],
        }


def _nanmean(a) -> float | None:
    a = np.asarray(a, float)
    a = a[~np.isnan(a)]
    return float(a.mean()) if a.size else None


def evaluate(env: UavEdgeEnv, controller, episodes: int, seed: int) -> EvalReport:
    """Greedy (no exploration) rollouts on seeds derived from ``seed``."""
    if hasattr(controller, "reseed"):
        controller.reseed(seed)
    seeds = np.random.SeedSequence(seed).generate_state(episodes)
    results = [run_episode(env, controller, int(s), explore=False)[1] for s in seeds]
    acc = np.array([m.accuracy for m in results])
    dev = np.array([m.d_dev for m in results])
    att = sum(m.attempted for m in results)
    suc = sum(m.succeeded for m in results)
    sel = sum(m.selected for m in results)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(att > 0, suc / np.maximum(att, 1), np.nan)
    return EvalReport(
        episodes=episodes,
        accuracy_mean=float(acc.mean()),
        accuracy_std=float(acc.std()),
        d_dev_mean=float(dev.mean()),
        d_dev_std=float(dev.std()),
        reward_mean=float(np.mean([m.total_reward for m in results])),
        success_ratio=ratio,
        offload_share=att / att.sum() if att.sum() else np.zeros_like(att),
        selected_share=sel / sel.sum() if sel.sum() else np.zeros_like(sel),
        first_episode=results[0],
    )
