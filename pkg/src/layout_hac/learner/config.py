"""Training configuration and its JSON form."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields

log = logging.getLogger(__name__)

ALGORITHMS = ("q_learning", "ppo")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    gamma: float = 0.95
    learning_rate: float = 0.001
    episodes_per_stage: int = 1000
    stop_iou: float = 0.9
    algorithm: str = "q_learning"
    ppo_clip: float = 0.2
    ppo_entropy: float = 0.01
    ppo_epochs: int = 4
    batch_size: int = 64
    seed: int = 0
    optimizer: str = "sgd"
    hidden: tuple[int, ...] = (64, 64)
    shared_heads: bool = True
    H: int = 10
    max_high_steps: int = 12
    subgoal_test_rate: float = 0.3
    penalty: float | None = None
    subgoal_threshold: float | None = 0.999
    buffer_capacity: int = 50_000
    updates_per_episode: int = 8
    target_update_interval: int = 100
    double_q: bool = False
    eps_start: float = 0.3
    eps_end: float = 0.05
    eps_decay_episodes: int = 200
    starts_per_stage: int = 200
    teacher_candidates: int = 2
    advance_window: int = 50
    advance_success: float = 0.9
    min_episodes_per_stage: int = 300
    block_overlap: bool = False

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        problems = []
        if not 0.0 <= self.gamma < 1.0:
            problems.append(f"gamma: must lie in [0, 1), got {self.gamma}")
        if not self.learning_rate > 0:
            problems.append(f"learning_rate: must be positive, got {self.learning_rate}")
        if self.algorithm not in ALGORITHMS:
            problems.append(f"algorithm: must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.optimizer not in ("sgd", "adam"):
            problems.append(f"optimizer: must be 'sgd' or 'adam', got {self.optimizer!r}")
        if not 0.0 < self.stop_iou <= 1.0:
            problems.append(f"stop_iou: must lie in (0, 1], got {self.stop_iou}")
        for name in ("episodes_per_stage", "batch_size", "H", "max_high_steps", "buffer_capacity",
                     "target_update_interval", "starts_per_stage", "teacher_candidates",
                     "advance_window", "ppo_epochs"):
            if int(getattr(self, name)) < 1:
                problems.append(f"{name}: must be a positive integer, got {getattr(self, name)}")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def config_from_dict(doc: dict) -> tuple[TrainConfig, dict]:
    """Build a config from a JSON object; unknown keys are rejected, missing ones defaulted.

    The ``schedule`` key (list of stage indices, or an object with ``stages``) is
    returned separately as the second element.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    known = {f.name for f in fields(TrainConfig)}
    extra = {"schedule"}
    unknown = sorted(set(doc) - known - extra)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    missing = sorted(known - set(doc))
    for name in missing:
        log.info("config field %r not given; using default %r", name, getattr(TrainConfig, name, None))
    try:
        cfg = TrainConfig(**{k: v for k, v in doc.items() if k in known})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, {"schedule": doc.get("schedule")}
