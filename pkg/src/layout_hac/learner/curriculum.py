"""IoU-threshold curriculum and teacher-guided choice of training starts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import env, hac
from ..env import EnvState
from ..scene import SceneInstance

N_STAGES = 11


def curriculum_threshold(c: int) -> float:
    """IoU goal of stage ``c``: 0.45 at stage 0, +0.05 per stage, 0.95 at stage 10."""
    if int(c) != c or not 0 <= c < N_STAGES:
        raise ValueError(f"curriculum stage must be an integer in [0, {N_STAGES - 1}], got {c}")
    # integer hundredths keep 0.45 + 0.05c exact to the nearest double
    return (45 + 5 * int(c)) / 100


@dataclass(frozen=True)
class CurriculumSchedule:
    stages: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.stages:
            raise ValueError("schedule needs at least one stage")
        thr = [t for _, t in self.stages]
        if any(b <= a for a, b in zip(thr, thr[1:])):
            raise ValueError("stage thresholds must be strictly increasing")

    @classmethod
    def default(cls) -> CurriculumSchedule:
        return cls.from_indices(range(N_STAGES))

    @classmethod
    def from_indices(cls, indices) -> CurriculumSchedule:
        return cls(tuple((int(c), curriculum_threshold(c)) for c in indices))


def random_start(scene: SceneInstance, rng: np.random.Generator) -> EnvState:
    cells = [int(rng.integers(kmin, kmax + 1)) for kmin, kmax in scene.cell_ranges]
    return env.state_from_cells(scene, cells)


@dataclass
class StartSelection:
    starts: list[EnvState]
    shortfall: int = 0
    candidates: int = 0


def select_initial_states(
    teacher: hac.HierarchyParams | None,
    scene_pool: Sequence[SceneInstance],
    n: int,
    rng: np.random.Generator,
    threshold: float = 0.45,
    max_high_steps: int = 12,
    candidate_factor: int = 2,
    stop_iou: float | None = None,
) -> StartSelection:
    """Pick ``n`` training starts the previous-stage teacher can solve, favouring its longer solves.

    Without a teacher (stage 0) starts are uniform. If too few candidates are
    solved, the remainder is filled uniformly and reported as ``shortfall``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not scene_pool:
        raise ValueError("scene pool is empty")

    def uniform() -> EnvState:
        return random_start(scene_pool[int(rng.integers(len(scene_pool)))], rng)

    if teacher is None:
        return StartSelection([uniform() for _ in range(n)])

    n_cand = n * candidate_factor
    solved: list[tuple[int, int, EnvState]] = []
    for j in range(n_cand):
        start = uniform()
        goal = hac.scene_goal(start.scene, threshold)
        res = hac.run_episode(teacher, start, goal, max_high_steps, explore=False, rng=rng, stop_iou=stop_iou)
        if res.trajectory.success:
            solved.append((res.trajectory.primitive_steps, j, start))
    # longest teacher solves first; index breaks ties deterministically
    solved.sort(key=lambda t: (-t[0], t[1]))
    chosen = [s for _, _, s in solved[:n]]
    shortfall = n - len(chosen)
    chosen.extend(uniform() for _ in range(shortfall))
    return StartSelection(chosen, shortfall, n_cand)
