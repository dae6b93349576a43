"""Synthetic stand-in for the split classifier running on each ground device.

Each sensed sample gets a scalar difficulty ``u``. The local classifier
returns a two-level class distribution: a peak of mass ``p`` on the
predicted class and ``(1 - p) / (C - 1)`` on every other class, with
``p = clamp(1 - u + noise, mass_floor, mass_ceil)``.

The peak mass is treated as a calibrated confidence: the peak sits on the
true class with probability ``p``. One uniform draw per sample (``hit_draw``)
decides that, and the same draw is reused for the UAV-side prediction, so a
sample that is classified correctly on the device stays correct after
cooperative inference raises its confidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import TaskModelConfig


@dataclass(frozen=True)
class TaskSample:
    difficulty: float
    true_class: int
    local_mass: float
    hit_draw: float
    decoy_class: int
    local_dist: np.ndarray
    entropy: float

    @property
    def local_correct(self) -> bool:
        return predicted_class(self.local_dist) == self.true_class


def two_level(peak_class: int, peak_mass: float, class_count: int) -> np.ndarray:
    rest = (1.0 - peak_mass) / (class_count - 1)
    dist = np.full(class_count, rest)
    dist[peak_class] = peak_mass
    return dist


def entropy(dist: np.ndarray) -> float:
    p = dist[dist > 0]
    return float(-(p * np.log(p)).sum())


def two_level_entropy(peak_mass: float, class_count: int) -> float:
    rest = (1.0 - peak_mass) / (class_count - 1)
    h = -peak_mass * math.log(peak_mass)
    if rest > 0:
        h -= (1.0 - peak_mass) * math.log(rest)
    return h


def _clamp(x: float, cfg: TaskModelConfig) -> float:
    return min(max(x, cfg.mass_floor), cfg.mass_ceil)


def draw_difficulty(rng: np.random.Generator, gd_index: int, gd_count: int, cfg: TaskModelConfig) -> float:
    a, b = cfg.difficulty_params
    if cfg.difficulty_kind == "uniform":
        return float(rng.uniform(a, b))
    if cfg.difficulty_kind == "beta":
        return float(rng.beta(a, b))
    # sorted-shard: GD 0 gets the hardest band of [a, b], GD K-1 the easiest
    width = (b - a) / gd_count
    hi = b - gd_index * width
    return float(rng.uniform(hi - width, hi))


def build_sample(difficulty: float, true_class: int, noise: float, hit_draw: float,
                 decoy_class: int, cfg: TaskModelConfig) -> TaskSample:
    """Deterministic part of :func:`sample`, exposed for tests."""
    mass = _clamp(1.0 - difficulty + noise, cfg)
    peak = true_class if hit_draw < mass else decoy_class
    dist = two_level(peak, mass, cfg.class_count)
    return TaskSample(
        difficulty=difficulty,
        true_class=true_class,
        local_mass=mass,
        hit_draw=hit_draw,
        decoy_class=decoy_class,
        local_dist=dist,
        entropy=entropy(dist),
    )


def sample(rng: np.random.Generator, gd_index: int, gd_count: int, cfg: TaskModelConfig) -> TaskSample:
    C = cfg.class_count
    u = draw_difficulty(rng, gd_index, gd_count, cfg)
    c = int(rng.integers(C))
    eps = float(rng.normal(0.0, cfg.local_noise_std)) if cfg.local_noise_std > 0 else 0.0
    hit = float(rng.random())
    decoy = int(rng.integers(C - 1))
    decoy += decoy >= c
    return build_sample(u, c, eps, hit, decoy, cfg)


def remote_mass(s: TaskSample, omega: float, delivered: bool, cfg: TaskModelConfig) -> float:
    if not delivered or omega <= 0.0:
        return s.local_mass
    return max(_clamp(s.local_mass + cfg.uplift_gain * omega, cfg), s.local_mass)


def remote_distribution(s: TaskSample, omega: float, delivered: bool, cfg: TaskModelConfig) -> np.ndarray:
    """Final class distribution after the period; falls back to the local one."""
    if not delivered or omega <= 0.0:
        return s.local_dist
    mass = remote_mass(s, omega, delivered, cfg)
    peak = s.true_class if s.hit_draw < mass else s.decoy_class
    return two_level(peak, mass, cfg.class_count)


def ce_loss(dist: np.ndarray, true_class: int) -> float:
    p = float(dist[true_class])
    if p <= 0.0:
        raise ValueError("zero probability on the true class")
    return -math.log(p)


def predicted_class(dist: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    return int(np.argmax(dist))
