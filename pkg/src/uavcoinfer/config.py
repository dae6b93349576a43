"""Typed configuration for the simulator, the task surrogate and training.

Every section maps one-to-one onto a dataclass. ``from_dict`` rejects
unknown keys so a typo in an experiment file fails loudly instead of being
silently ignored.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import yaml


class ConfigError(ValueError):
    """Raised for invalid or incomplete configuration."""


def _per_gd(value, count: int, name: str) -> tuple:
    if isinstance(value, (list, tuple)):
        if len(value) == 0:
            raise ConfigError(f"{name}: empty list")
        # a list of lists (ratio sets) or a list of scalars with one entry per GD
        if isinstance(value[0], (list, tuple)) or name != "ratio_set":
            if len(value) != count:
                raise ConfigError(f"{name}: expected {count} entries (one per GD), got {len(value)}")
            return tuple(tuple(v) if isinstance(v, (list, tuple)) else v for v in value)
        return tuple(tuple(value) for _ in range(count))
    return tuple(value for _ in range(count))


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


DEFAULT_GD_POSITIONS = ((350.0, 650.0), (-400.0, 550.0), (-300.0, -250.0), (450.0, 100.0))


@dataclass(frozen=True)
class SimConfig:
    mission_duration: float = 60.0
    slot_count: int = 48
    gd_count: int = 4
    offload_cap: int = 2
    altitude: float = 100.0
    speed: float = 30.0
    area_bounds: float = 1000.0
    start_pos: tuple = (0.0, 0.0)
    end_pos: tuple = (0.0, 0.0)
    gd_positions: tuple = DEFAULT_GD_POSITIONS
    sync_period: int = 4
    local_slots: int = 1
    bandwidth: float = 1e6
    noise_power: float = dbm_to_watts(-110.0)
    tx_power: Any = dbm_to_watts(10.0)
    ref_gain: float = db_to_linear(-50.0)
    feat_dim: Any = 18432
    bits_per_dim: Any = 8
    ratio_set: Any = (0.0, 0.2, 0.4, 0.55)
    dev_weight: float = 1e-4
    dev_threshold: float = 800.0
    ref_center: tuple = (0.0, 300.0)
    ref_radius: float = 150.0

    def __post_init__(self):
        K = self.gd_count
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("start_pos", tuple(float(x) for x in self.start_pos))
        set_("end_pos", tuple(float(x) for x in self.end_pos))
        set_("ref_center", tuple(float(x) for x in self.ref_center))
        set_("gd_positions", tuple(tuple(float(c) for c in p) for p in self.gd_positions))
        set_("tx_power", tuple(float(x) for x in _per_gd(self.tx_power, K, "tx_power")))
        set_("feat_dim", tuple(int(x) for x in _per_gd(self.feat_dim, K, "feat_dim")))
        set_("bits_per_dim", tuple(float(x) for x in _per_gd(self.bits_per_dim, K, "bits_per_dim")))
        set_("ratio_set", tuple(tuple(float(w) for w in r) for r in _per_gd(self.ratio_set, K, "ratio_set")))
        self.validate()

    @property
    def slot_len(self) -> float:
        return self.mission_duration / self.slot_count

    @property
    def step_len(self) -> float:
        """Distance flown per slot, v * dt."""
        return self.speed * self.slot_len

    @property
    def obs_dim(self) -> int:
        return 3 + self.gd_count

    def ratio_counts(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.ratio_set)

    def validate(self) -> None:
        K = self.gd_count
        if self.slot_count < 2:
            raise ConfigError("slot_count must be >= 2")
        if K < 1:
            raise ConfigError("gd_count must be >= 1")
        if not 1 <= self.offload_cap <= K:
            raise ConfigError(f"offload_cap must lie in [1, gd_count={K}], got {self.offload_cap}")
        if len(self.gd_positions) != K or any(len(p) != 2 for p in self.gd_positions):
            raise ConfigError(f"gd_positions: expected {K} two-dimensional positions")
        if not 0 <= self.local_slots < self.sync_period:
            raise ConfigError("local_slots must satisfy 0 <= local_slots < sync_period")
        if self.sync_period > self.slot_count:
            raise ConfigError("sync_period exceeds slot_count")
        for name in ("mission_duration", "altitude", "speed", "area_bounds", "bandwidth",
                     "noise_power", "ref_gain"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.dev_weight < 0:
            raise ConfigError("dev_weight must be non-negative")
        if self.ref_radius < 0:
            raise ConfigError("ref_radius must be non-negative")
        for k, omega in enumerate(self.ratio_set):
            if len(omega) < 2 or omega[0] != 0.0:
                raise ConfigError(f"ratio_set[{k}] must start with 0 and hold at least one positive ratio")
            if any(b <= a for a, b in zip(omega, omega[1:])) or omega[-1] > 1.0:
                raise ConfigError(f"ratio_set[{k}] must be strictly ascending within [0, 1]")
        if any(p < 0 for p in self.tx_power):
            raise ConfigError("tx_power must be non-negative")
        if math.dist(self.start_pos, self.end_pos) > (self.slot_count - 1) * self.step_len:
            raise ConfigError("end_pos is unreachable from start_pos within the mission")

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TaskModelConfig:
    class_count: int = 10
    # kind: uniform | beta | sorted-shard ; params depend on kind
    difficulty_kind: str = "uniform"
    difficulty_params: tuple = (0.0, 0.5)
    uplift_gain: float = 0.6
    local_noise_std: float = 0.05
    mass_floor: float = 0.10
    mass_ceil: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "difficulty_params", tuple(float(x) for x in self.difficulty_params))
        if self.class_count < 2:
            raise ConfigError("class_count must be >= 2")
        if not 0.0 < self.mass_floor < self.mass_ceil < 1.0:
            raise ConfigError("need 0 < mass_floor < mass_ceil < 1")
        if self.uplift_gain < 0 or self.local_noise_std < 0:
            raise ConfigError("uplift_gain and local_noise_std must be non-negative")
        if self.difficulty_kind not in ("uniform", "beta", "sorted-shard"):
            raise ConfigError(f"difficulty_kind: unknown kind {self.difficulty_kind!r}")
        if len(self.difficulty_params) != 2:
            raise ConfigError("difficulty_params must hold two numbers")
        a, b = self.difficulty_params
        if self.difficulty_kind == "beta":
            if a <= 0 or b <= 0:
                raise ConfigError("beta difficulty parameters must be positive")
        elif not 0.0 <= a <= b <= 1.0:
            raise ConfigError("difficulty range must satisfy 0 <= low <= high <= 1")


@dataclass(frozen=True)
class TrainConfig:
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    actor_tau: float = 0.001
    critic_tau: float = 0.001
    gating_temp: float = 0.5
    expert_temp: float = 0.5
    batch_size: int = 64
    heading_noise_var: float = 0.1
    buffer_capacity: int = 1000
    decay: float = 0.995
    episodes: int = 5000
    discount: float = 1.0
    hidden: tuple = (128, 128)
    updates_per_episode: int = 1
    # "executed": critic regresses on the stored executed action representation;
    # "actor": on representations re-derived from the current actors.
    critic_input: str = "executed"
    joint_action_cap: int = 10_000_000
    # constant factor applied to rewards inside the learner only; a positive
    # rescaling leaves the optimal policy unchanged but keeps critic targets
    # within reach of the optimizer's step size
    reward_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for name in ("batch_size", "buffer_capacity", "updates_per_episode", "joint_action_cap"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("actor_lr", "critic_lr", "actor_tau", "critic_tau", "gating_temp",
                     "expert_temp", "heading_noise_var"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not self.reward_scale > 0:
            raise ConfigError("reward_scale must be positive")
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("decay must lie in (0, 1]")
        if not 0.0 <= self.discount <= 1.0:
            raise ConfigError("discount must lie in [0, 1]")
        if self.episodes < 0:
            raise ConfigError("episodes must be >= 0")
        if self.critic_input not in ("executed", "actor"):
            raise ConfigError("critic_input must be 'executed' or 'actor'")


POLICIES = ("hdrl-moe", "hdrl", "hdrl-ue", "ft", "gi", "random")


@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    task: TaskModelConfig = field(default_factory=TaskModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    policy: str = "hdrl-moe"
    seed: int = 0
    output_dir: str = "runs/default"
    eval_episodes: int = 200

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"policy: expected one of {POLICIES}, got {self.policy!r}")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_REQUIRED_SIM_KEYS = ("gd_positions",)


def _camel(name: str) -> str:
    head, *rest = name.split("_")
    return head + "".join(w.title() for w in rest)


def _build(cls, data: Mapping[str, Any] | None, section: str, required=()):
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(unknown)}")
    for key in required:
        if key not in data:
            raise ConfigError(f"[{section}] missing required key: {key} ({_camel(key)})")
    try:
        return cls(**data)
    except TypeError as exc:  # wrong value shapes surface here
        raise ConfigError(f"[{section}] {exc}") from exc


def experiment_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    data = dict(data)
    top = {"sim", "task", "train", "policy", "seed", "output_dir", "eval_episodes"}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    sim = _build(SimConfig, data.pop("sim", None), "sim", _REQUIRED_SIM_KEYS)
    task = _build(TaskModelConfig, data.pop("task", None), "task")
    train = _build(TrainConfig, data.pop("train", None), "train")
    return ExperimentConfig(sim=sim, task=task, train=train, **data)


def experiment_to_dict(cfg: ExperimentConfig) -> dict:
    def plain(obj):
        if isinstance(obj, tuple):
            return [plain(x) for x in obj]
        return obj

    out = {}
    for section in ("sim", "task", "train"):
        sub = getattr(cfg, section)
        out[section] = {f.name: plain(getattr(sub, f.name)) for f in dataclasses.fields(sub)}
    for key in ("policy", "seed", "output_dir", "eval_episodes"):
        out[key] = getattr(cfg, key)
    return out


def load_experiment(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return experiment_from_dict(data)


def dump_experiment(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(experiment_to_dict(cfg), fh, sort_keys=False)
