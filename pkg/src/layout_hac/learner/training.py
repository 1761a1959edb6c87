"""Curriculum training loop and greedy evaluation."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .. import env, hac, oracle
from ..scene import SceneInstance
from .agent import HACAgent
from .config import TrainConfig
from .curriculum import CurriculumSchedule, random_start, select_initial_states

log = logging.getLogger(__name__)

METRICS_HEADER = ("stage", "episode", "iou_f1", "iou_f2", "steps", "success")


@dataclass(frozen=True)
class EpisodeMetrics:
    stage: int
    episode: int
    iou_f1: float
    iou_f2: float
    steps: int
    success: bool

    def csv_row(self) -> list[str]:
        return [
            str(self.stage),
            str(self.episode),
            f"{self.iou_f1:.6f}",
            f"{self.iou_f2:.6f}",
            str(self.steps),
            str(int(self.success)),
        ]


def metrics_csv(rows: Sequence[EpisodeMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in rows:
        w.writerow(r.csv_row())
    return buf.getvalue()


@dataclass
class TrainResult:
    agent: HACAgent | None
    hierarchy: hac.HierarchyParams
    metrics: list[EpisodeMetrics] = field(default_factory=list)
    completed_stages: list[int] = field(default_factory=list)


def epsilon_at(config: TrainConfig, episode: int) -> float:
    frac = min(1.0, episode / max(1, config.eps_decay_episodes))
    return config.eps_start + (config.eps_end - config.eps_start) * frac


def train(
    scene_pool: Sequence[SceneInstance],
    config: TrainConfig,
    schedule: CurriculumSchedule | None = None,
    hierarchy: hac.HierarchyParams | None = None,
    on_episode: Callable[[EpisodeMetrics], None] | None = None,
    on_stage_end: Callable[[int, HACAgent | None], None] | None = None,
) -> TrainResult:
    """Run the staged curriculum, learning both levels from every episode's transitions.

    Passing ``hierarchy`` runs that fixed hierarchy through the same loop with no
    learning (plumbing checks with scripted policies).
    """
    if not scene_pool:
        raise ValueError("scene pool is empty")
    schedule = CurriculumSchedule.default() if schedule is None else schedule
    rng = np.random.default_rng(config.seed)
    agent = None
    if hierarchy is None:
        agent = HACAgent(config, rng)
        hierarchy = agent.hierarchy
    result = TrainResult(agent, hierarchy)
    prev_threshold = None

    for c, threshold in schedule.stages:
        teacher = None
        if prev_threshold is not None:
            teacher = agent.teacher() if agent is not None else hierarchy
        selection = select_initial_states(
            teacher,
            scene_pool,
            config.starts_per_stage,
            rng,
            threshold=prev_threshold or threshold,
            max_high_steps=config.max_high_steps,
            candidate_factor=config.teacher_candidates,
            stop_iou=config.stop_iou,
        )
        if selection.shortfall:
            log.info("stage %d: teacher solved too few starts, %d filled uniformly", c, selection.shortfall)
        recent: list[bool] = []
        for ep in range(config.episodes_per_stage):
            start = selection.starts[int(rng.integers(len(selection.starts)))]
            if agent is not None and config.algorithm == "q_learning":
                agent.set_epsilon(epsilon_at(config, ep))
            goal = hac.scene_goal(start.scene, threshold)
            res = hac.run_episode(
                hierarchy,
                start,
                goal,
                config.max_high_steps,
                explore=True,
                rng=rng,
                stop_iou=config.stop_iou,
                block_overlap=config.block_overlap,
            )
            if agent is not None:
                if config.algorithm == "q_learning":
                    for t in res.transitions:
                        agent.store(t)
                    agent.learn_q(rng)
                else:
                    agent.learn_ppo(res)
            r = env.reward(res.final_state)
            row = EpisodeMetrics(c, ep, r[0], r[1], res.trajectory.primitive_steps, res.trajectory.success)
            result.metrics.append(row)
            if on_episode is not None:
                on_episode(row)
            recent.append(row.success)
            window = recent[-config.advance_window :]
            if (
                ep + 1 >= config.min_episodes_per_stage
                and len(window) == config.advance_window
                and np.mean(window) >= config.advance_success
            ):
                break
        if agent is not None:
            agent.stage = c
        result.completed_stages.append(c)
        log.info("stage %d (IoU > %.2f) done after %d episodes", c, threshold, ep + 1)
        if on_stage_end is not None:
            on_stage_end(c, agent)
        prev_threshold = threshold
    return result


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    mean_iou: tuple[float, float]
    stderr_iou: tuple[float, float]
    success_rate: float
    median_steps: float
    median_oracle_steps: float
    n: int
    final_iou: np.ndarray
    steps: np.ndarray
    oracle_steps: np.ndarray
    threshold: float

    def as_row(self) -> dict:
        return {
            "n": self.n,
            "iou_f1_mean": self.mean_iou[0],
            "iou_f1_stderr": self.stderr_iou[0],
            "iou_f2_mean": self.mean_iou[1],
            "iou_f2_stderr": self.stderr_iou[1],
            "success_rate": self.success_rate,
            "median_steps": self.median_steps,
            "median_oracle_steps": self.median_oracle_steps,
        }


def evaluate(
    hierarchy: hac.HierarchyParams,
    scenes: Sequence[SceneInstance],
    n_starts: int,
    rng: np.random.Generator,
    threshold: float = 0.9,
    max_high_steps: int = 12,
    block_overlap: bool = False,
) -> EvalReport:
    """Greedy episodes from ``n_starts`` uniform random starts spread round-robin over ``scenes``."""
    if not scenes:
        raise ValueError("no scenes to evaluate on")
    if n_starts < 1:
        raise ValueError("n_starts must be positive")
    ious = np.zeros((n_starts, 2))
    steps = np.zeros(n_starts, dtype=int)
    ostep = np.zeros(n_starts, dtype=int)
    success = np.zeros(n_starts, dtype=bool)
    for j in range(n_starts):
        start = random_start(scenes[j % len(scenes)], rng)
        goal = hac.scene_goal(start.scene, threshold)
        res = hac.run_episode(
            hierarchy, start, goal, max_high_steps, explore=False, rng=rng, block_overlap=block_overlap
        )
        ious[j] = env.reward(res.final_state)
        steps[j] = res.trajectory.primitive_steps
        ostep[j] = oracle.optimal_plan(start.scene, start, block_overlap=block_overlap).length
        success[j] = ious[j, 0] > threshold and ious[j, 1] > threshold
    se = ious.std(axis=0, ddof=1) / np.sqrt(n_starts) if n_starts > 1 else np.zeros(2)
    return EvalReport(
        mean_iou=(float(ious[:, 0].mean()), float(ious[:, 1].mean())),
        stderr_iou=(float(se[0]), float(se[1])),
        success_rate=float(success.mean()),
        median_steps=float(np.median(steps)),
        median_oracle_steps=float(np.median(ostep)),
        n=n_starts,
        final_iou=ious,
        steps=steps,
        oracle_steps=ostep,
        threshold=threshold,
    )
