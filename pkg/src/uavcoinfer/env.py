"""Episodic UAV cooperative-inference environment.

Slots are 1-based to match the mission timeline: an episode visits slots
1..N and every slot produces one transition. The UAV moves after slots
1..N-1; the step at slot N only collects the final reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import taskmodel
from .config import SimConfig, TaskModelConfig


class EpisodeDone(RuntimeError):
    pass


# ---------------------------------------------------------------- kinematics

def advance_uav(q, theta: float, cfg: SimConfig) -> np.ndarray:
    step = cfg.step_len
    return np.array([q[0] + step * math.cos(theta), q[1] + step * math.sin(theta)])


def bearing(src, dst) -> float:
    dx, dy = dst[0] - src[0], dst[1] - src[1]
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return math.atan2(dy, dx)


def min_slots_to(q, dest, cfg: SimConfig) -> int:
    d = math.dist(q, dest)
    # tolerate rounding so that an exact multiple of v*dt is not bumped up a slot
    return max(0, math.ceil(d / cfg.step_len - 1e-9))


def straight_flight_override(q, n: int, theta_policy: float, cfg: SimConfig) -> float:
    """Heading actually flown at slot ``n``.

    Once the slots left after this move no longer exceed the minimum needed
    from the would-be next position, fly straight at the destination.
    """
    nxt = advance_uav(q, theta_policy, cfg)
    t_min = min_slots_to(nxt, cfg.end_pos, cfg)
    if cfg.slot_count - n - 1 <= t_min:
        return bearing(q, cfg.end_pos)
    return theta_policy


@dataclass(frozen=True)
class ReferencePath:
    checkpoints: np.ndarray  # (N, 2)

    def __len__(self):
        return len(self.checkpoints)

    def __getitem__(self, n: int) -> np.ndarray:
        """1-based checkpoint access."""
        return self.checkpoints[n - 1]


def deviation(traj, ref: ReferencePath) -> float:
    traj = np.asarray(traj, dtype=float)
    if traj.shape != ref.checkpoints.shape:
        raise ValueError(f"trajectory shape {traj.shape} does not match reference {ref.checkpoints.shape}")
    sq = ((traj - ref.checkpoints) ** 2).sum(axis=1)
    return float(math.sqrt(sq.mean()))


def build_reference_path(cfg: SimConfig) -> ReferencePath:
    """Out to the patrol circle, one counter-clockwise lap, back to the end.

    Checkpoints are spaced uniformly in arc length at total_length / N.
    """
    start = np.array(cfg.start_pos)
    end = np.array(cfg.end_pos)
    center = np.array(cfg.ref_center)
    r = cfg.ref_radius

    def nearest_on_circle(p):
        if r == 0.0:
            return center.copy()
        offset = p - center
        norm = np.linalg.norm(offset)
        if norm == 0.0:
            return center + np.array([r, 0.0])
        return center + offset / norm * r

    entry = nearest_on_circle(start)
    exit_ = nearest_on_circle(end)
    a0 = math.atan2(entry[1] - center[1], entry[0] - center[0])
    a1 = math.atan2(exit_[1] - center[1], exit_[0] - center[0])
    # a full lap from the entry point, continuing on to the exit point if they differ
    extra = (a1 - a0) % (2 * math.pi)
    sweep = (2 * math.pi + (extra if extra > 1e-9 else 0.0)) if r > 0 else 0.0

    seg1 = float(np.linalg.norm(entry - start))
    arc = r * sweep
    seg2 = float(np.linalg.norm(end - exit_))
    total = seg1 + arc + seg2
    N = cfg.slot_count
    budget = N * cfg.step_len
    if total > budget + 1e-9:
        raise ValueError(f"reference path of length {total:.2f} m exceeds the flyable {budget:.2f} m")

    def point_at(s):
        if s <= seg1:
            return start + (entry - start) * (s / seg1) if seg1 > 0 else start.copy()
        s -= seg1
        if s <= arc:
            ang = a0 + s / r
            return center + r * np.array([math.cos(ang), math.sin(ang)])
        s -= arc
        return exit_ + (end - exit_) * (s / seg2) if seg2 > 0 else end.copy()

    spacing = total / N
    pts = np.array([point_at(i * spacing) for i in range(N)])
    return ReferencePath(pts)


# ------------------------------------------------------------------- channel

def uplink_rate(uav_pos, gd_index: int, cfg: SimConfig) -> float:
    gx, gy = cfg.gd_positions[gd_index]
    d2 = (uav_pos[0] - gx) ** 2 + (uav_pos[1] - gy) ** 2 + cfg.altitude ** 2
    snr = cfg.ref_gain * cfg.tx_power[gd_index] / (cfg.noise_power * d2)
    return cfg.bandwidth * math.log2(1.0 + snr)


def uplink_rates(uav_pos, cfg: SimConfig) -> np.ndarray:
    return np.array([uplink_rate(uav_pos, k, cfg) for k in range(cfg.gd_count)])


# ------------------------------------------------------------------ POMDP

@dataclass
class Action:
    heading: float
    offload: np.ndarray | None = None  # K booleans, read only at decision slots
    ratios: np.ndarray | None = None   # K ratios, each drawn from its ratio set


@dataclass
class Ledger:
    bits_required: np.ndarray
    bits_accumulated: np.ndarray
    delivered: np.ndarray
    selected: np.ndarray
    ratio: np.ndarray

    @classmethod
    def zeros(cls, K: int) -> "Ledger":
        return cls(np.zeros(K), np.zeros(K), np.zeros(K, bool), np.zeros(K, bool), np.zeros(K))


@dataclass
class EnvState:
    slot: int
    uav_pos: np.ndarray
    samples: list
    ledger: Ledger
    traj: list = field(default_factory=list)
    done: bool = False


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def period_start(n: int, cfg: SimConfig) -> int:
    """Most recent sensing slot m' for slot n (both 1-based)."""
    return cfg.sync_period * ((n - 1) // cfg.sync_period) + 1


def is_decision_slot(n: int, cfg: SimConfig) -> bool:
    m = period_start(n, cfg)
    return n == m + cfg.local_slots and m + cfg.sync_period - 1 <= cfg.slot_count


def is_local_slot(n: int, cfg: SimConfig) -> bool:
    return n < period_start(n, cfg) + cfg.local_slots


def is_period_end(n: int, cfg: SimConfig) -> bool:
    return n == period_start(n, cfg) + cfg.sync_period - 1


class UavEdgeEnv:
    """Single-UAV environment; one instance per rollout stream."""

    def __init__(self, cfg: SimConfig, task_cfg: TaskModelConfig, ref: ReferencePath | None = None):
        self.cfg = cfg
        self.task_cfg = task_cfg
        self.ref = ref if ref is not None else build_reference_path(cfg)
        self._bits_per_ratio = np.array(cfg.feat_dim, float) * np.array(cfg.bits_per_dim, float)
        self.state: EnvState | None = None
        self.rng: np.random.Generator | None = None

    # observation ------------------------------------------------------
    def observe(self, state: EnvState | None = None) -> np.ndarray:
        s = state or self.state
        cfg = self.cfg
        ent = [smp.entropy for smp in s.samples]
        return np.array([s.slot / cfg.slot_count,
                         s.uav_pos[0] / cfg.area_bounds,
                         s.uav_pos[1] / cfg.area_bounds, *ent])

    def _draw_samples(self) -> list:
        K = self.cfg.gd_count
        return [taskmodel.sample(self.rng, k, K, self.task_cfg) for k in range(K)]

    def reset(self, seed=None) -> tuple[EnvState, np.ndarray]:
        self.rng = np.random.default_rng(seed)
        q = np.array(self.cfg.start_pos, dtype=float)
        self.state = EnvState(
            slot=1,
            uav_pos=q,
            samples=self._draw_samples(),
            ledger=Ledger.zeros(self.cfg.gd_count),
            traj=[q.copy()],
        )
        return self.state, self.observe()

    # dynamics ---------------------------------------------------------
    def step(self, action: Action) -> StepOutcome:
        s = self.state
        if s is None or s.done:
            raise EpisodeDone("step() called on a finished episode; call reset() first")
        cfg = self.cfg
        n = s.slot
        led = s.ledger
        K = cfg.gd_count
        info: dict = {"slot": n}

        if is_decision_slot(n, cfg):
            xi = np.zeros(K, bool) if action.offload is None else np.asarray(action.offload, bool)
            omega = np.zeros(K) if action.ratios is None else np.asarray(action.ratios, float)
            if xi.sum() > cfg.offload_cap:
                raise ValueError(f"{int(xi.sum())} GDs selected, cap is {cfg.offload_cap}")
            for k in range(K):
                if omega[k] not in cfg.ratio_set[k]:
                    raise ValueError(f"ratio {omega[k]} not in ratio set of GD {k}")
            omega = np.where(xi, omega, 0.0)
            led.selected = xi.copy()
            led.ratio = omega
            led.bits_required = omega * self._bits_per_ratio
            info["decision"] = True

        # deviation penalty for the position held during slot n
        l_dev = float(((s.uav_pos - self.ref[n]) ** 2).sum())
        reward = -cfg.dev_weight * l_dev
        info["instant_deviation"] = l_dev

        # uplink during offloading slots, rate taken at the start-of-slot position
        if not is_local_slot(n, cfg):
            active = led.selected & (led.ratio > 0) & ~led.delivered
            for k in np.flatnonzero(active):
                led.bits_accumulated[k] += uplink_rate(s.uav_pos, k, cfg) * cfg.slot_len
                if led.bits_accumulated[k] >= led.bits_required[k]:
                    led.delivered[k] = True
        info["delivered"] = led.delivered.copy()

        if is_period_end(n, cfg):
            loss = 0.0
            correct = np.zeros(K, bool)
            for k, smp in enumerate(s.samples):
                dist = taskmodel.remote_distribution(smp, led.ratio[k], bool(led.delivered[k]), self.task_cfg)
                loss += taskmodel.ce_loss(dist, smp.true_class)
                correct[k] = taskmodel.predicted_class(dist) == smp.true_class
            reward -= loss
            info["period_accuracy_loss"] = loss
            info["correct"] = correct
            info["attempted"] = led.selected & (led.ratio > 0)
            info["selected"] = led.selected.copy()
            info["success"] = info["attempted"] & led.delivered

        if n < cfg.slot_count:
            theta = float(np.clip(action.heading, -math.pi, math.pi))
            theta = straight_flight_override(s.uav_pos, n, theta, cfg)
            info["heading"] = theta
            s.uav_pos = advance_uav(s.uav_pos, theta, cfg)
            s.traj.append(s.uav_pos.copy())
            s.slot = n + 1
            if s.slot == period_start(s.slot, cfg):
                s.samples = self._draw_samples()
                s.ledger = Ledger.zeros(K)
            obs = self.observe()
        else:
            info["heading"] = float("nan")
            s.done = True
            obs = self.observe()
            obs[0] = (n + 1) / cfg.slot_count
        return StepOutcome(obs, reward, s.done, info)

    def trajectory_deviation(self) -> float:
        return deviation(np.array(self.state.traj), self.ref)
