"""Two-level hierarchical actor-critic execution and transition bookkeeping.

Level 1 proposes a subgoal (a target lattice position for each furniture),
level 0 gets at most ``H`` primitive joint moves to reach it. Every episode
yields regular transitions plus the three hindsight/testing kinds used to train
both levels at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, NamedTuple, Protocol, Sequence

import numpy as np

from . import env
from .env import AgentAction, EnvState, JointAction
from .geometry import iou
from .scene import (
    SceneInstance,
    axis_coord,
    axis_extent,
    cell_box,
    cell_center,
    coord_to_cell,
    scene_from_dict,
    scene_to_dict,
)

# offsets beyond this many cells saturate in the observation
OBS_CLIP_CELLS = 10
OBS_FINE_CELLS = 2
OBS_DIM = 11
# columns describing each furniture, and the room-level columns both share
OBS_HEAD_COLS = ((0, 1, 2, 3), (4, 5, 6, 7))
OBS_SHARED_COLS = (8, 9, 10)
MAX_ROOM_SIDE = 6.0


class ContractError(RuntimeError):
    pass


@dataclass(frozen=True)
class Goal:
    """Target along-axis center per furniture plus the IoU level that counts as reached."""

    target_pos: tuple[float, float]
    threshold: float

    def __post_init__(self):
        if not 0.0 <= self.threshold < 1.0:
            raise ValueError(f"goal threshold must lie in [0, 1), got {self.threshold}")


@dataclass(frozen=True)
class Subgoal:
    target_pos: tuple[float, float]


class TransitionKind(str, Enum):
    REGULAR = "regular"
    HINDSIGHT_GOAL = "hindsight_goal"
    HINDSIGHT_ACTION = "hindsight_action"
    SUBGOAL_TEST = "subgoal_test"


@dataclass(frozen=True, eq=False)
class TransitionRecord:
    level: int
    kind: TransitionKind
    state: np.ndarray
    action: JointAction | Subgoal
    reward: tuple[float, float]
    next_state: np.ndarray
    goal: Goal
    done: bool
    cells: tuple[int, int]
    next_cells: tuple[int, int]
    scene: SceneInstance = field(repr=False)


class Segment(NamedTuple):
    """One level-1 decision together with how its low-level attempt went."""

    proposal: TransitionRecord
    steps: int
    lower_explored: bool


class Policy(Protocol):
    def act(self, state: EnvState, goal: Goal, explore: bool, rng: np.random.Generator) -> Any: ...


@dataclass
class HierarchyParams:
    low: Policy
    high: Policy
    H: int = 10
    subgoal_test_rate: float = 0.3
    penalty: float | None = None
    # IoU above which a subgoal counts as reached; None reuses the final goal's
    # threshold. The default only accepts the exact lattice position.
    subgoal_threshold: float | None = 0.999

    def __post_init__(self):
        if int(self.H) != self.H or self.H < 1:
            raise ValueError(f"H must be a positive integer, got {self.H}")
        if not 0.0 <= self.subgoal_test_rate <= 1.0:
            raise ValueError(f"subgoal_test_rate must lie in [0, 1], got {self.subgoal_test_rate}")
        if self.penalty is None:
            self.penalty = -float(self.H)
        if self.penalty >= 0:
            raise ValueError(f"penalty must be negative, got {self.penalty}")
        if self.subgoal_threshold is not None and not 0.0 <= self.subgoal_threshold < 1.0:
            raise ValueError(f"subgoal_threshold must lie in [0, 1), got {self.subgoal_threshold}")

    def subgoal_goal(self, sub: Subgoal, final_goal: Goal) -> Goal:
        thr = final_goal.threshold if self.subgoal_threshold is None else self.subgoal_threshold
        return Goal(sub.target_pos, thr)


@dataclass
class Trajectory:
    states: list[EnvState]
    actions: list[JointAction]
    subgoals: list[Subgoal]
    success: bool

    @property
    def primitive_steps(self) -> int:
        return len(self.actions)

    @property
    def high_steps(self) -> int:
        return len(self.subgoals)


class EpisodeResult(NamedTuple):
    trajectory: Trajectory
    transitions: list[TransitionRecord]
    final_state: EnvState


# ---------------------------------------------------------------------------
# goal helpers


def scene_goal(scene: SceneInstance, threshold: float) -> Goal:
    return Goal(tuple(axis_coord(scene.goal[i], scene.axes[i]) for i in range(2)), threshold)


def target_cells(scene: SceneInstance, target_pos: Sequence[float]) -> tuple[int, int]:
    cells = [coord_to_cell(scene, i, c) for i, c in enumerate(target_pos)]
    if None in cells:
        raise ValueError(f"target {tuple(target_pos)} is off the move grid")
    return cells[0], cells[1]


def cells_to_pos(scene: SceneInstance, cells: Sequence[int]) -> tuple[float, float]:
    return cell_center(scene, 0, cells[0]), cell_center(scene, 1, cells[1])


def goal_rewards(scene: SceneInstance, cells: Sequence[int], goal: Goal | Subgoal) -> tuple[float, float]:
    """Per-furniture IoU between the furniture at ``cells`` and the goal boxes."""
    gc = target_cells(scene, goal.target_pos)
    return (
        iou(cell_box(scene, 0, gc[0]), cell_box(scene, 0, cells[0])),
        iou(cell_box(scene, 1, gc[1]), cell_box(scene, 1, cells[1])),
    )


def goal_hit(scene: SceneInstance, cells: Sequence[int], goal: Goal) -> bool:
    r = goal_rewards(scene, cells, goal)
    return r[0] > goal.threshold and r[1] > goal.threshold


def encode_obs(scene: SceneInstance, cells: Sequence[int], goal: Goal) -> np.ndarray:
    """Normalized observation vector.

    Per furniture: position and goal along its axis scaled to the room extent,
    then the goal offset in cells at a coarse and a fine saturation scale. Then
    room width, room height and the goal's IoU threshold.
    """
    gc = target_cells(scene, goal.target_pos)
    out = np.empty(OBS_DIM)
    for i in range(2):
        lo, hi = axis_extent(scene.boundary, scene.axes[i])
        ext = hi - lo
        d = gc[i] - cells[i]
        out[4 * i] = (cell_center(scene, i, cells[i]) - lo) / ext
        out[4 * i + 1] = (cell_center(scene, i, gc[i]) - lo) / ext
        out[4 * i + 2] = min(max(d, -OBS_CLIP_CELLS), OBS_CLIP_CELLS) / OBS_CLIP_CELLS
        out[4 * i + 3] = min(max(d, -OBS_FINE_CELLS), OBS_FINE_CELLS) / OBS_FINE_CELLS
    out[8] = scene.boundary.size_w / MAX_ROOM_SIDE
    out[9] = scene.boundary.size_h / MAX_ROOM_SIDE
    out[10] = goal.threshold
    return out


# ---------------------------------------------------------------------------
# transition relabeling


def hindsight_action_relabel(segment: Segment, achieved: EnvState) -> TransitionRecord:
    """Replace the proposed subgoal by the position the low level actually reached."""
    p = segment.proposal
    return replace(
        p,
        kind=TransitionKind.HINDSIGHT_ACTION,
        action=Subgoal(cells_to_pos(p.scene, achieved.cells)),
        next_cells=achieved.cells,
    )


def replace_action(record: TransitionRecord, action: JointAction | Subgoal) -> TransitionRecord:
    return replace(record, action=action)


def hindsight_goal_relabel(episode_transitions: Sequence[TransitionRecord], strategy: str = "final") -> list[TransitionRecord]:
    """Duplicate each level's transitions with the goal set to that level's final achieved state."""
    if strategy != "final":
        raise ValueError(f"unsupported hindsight strategy {strategy!r}")
    out: list[TransitionRecord] = []
    for level in sorted({t.level for t in episode_transitions}):
        chain = [
            t
            for t in episode_transitions
            if t.level == level and t.kind is not TransitionKind.SUBGOAL_TEST
        ]
        if not chain:
            continue
        scene = chain[-1].scene
        final_cells = chain[-1].next_cells
        thr = chain[-1].goal.threshold
        new_goal = Goal(cells_to_pos(scene, final_cells), thr)
        for t in chain:
            r = goal_rewards(scene, t.next_cells, new_goal)
            out.append(
                replace(
                    t,
                    kind=TransitionKind.HINDSIGHT_GOAL,
                    state=encode_obs(scene, t.cells, new_goal),
                    next_state=encode_obs(scene, t.next_cells, new_goal),
                    goal=new_goal,
                    reward=r,
                    done=r[0] > thr and r[1] > thr,
                )
            )
    return out


def subgoal_test_transition(
    segment: Segment,
    achieved: EnvState,
    H: int,
    penalty: float | None = None,
    threshold: float | None = None,
) -> TransitionRecord | None:
    """Penalty transition for a tested subgoal the current low level failed to reach in H moves.

    ``threshold`` is the subgoal IoU tolerance (default: the proposal's goal threshold).
    """
    if segment.lower_explored:
        raise ContractError("subgoal testing requires a segment run without low-level exploration")
    p = segment.proposal
    sub_goal = Goal(p.action.target_pos, p.goal.threshold if threshold is None else threshold)
    if segment.steps <= H and goal_hit(p.scene, achieved.cells, sub_goal):
        return None
    pen = -float(H) if penalty is None else float(penalty)
    return replace(p, kind=TransitionKind.SUBGOAL_TEST, reward=(pen, pen), done=True)


# ---------------------------------------------------------------------------
# nested execution


def _final_done(state: EnvState, final_goal: Goal, stop_iou: float | None) -> bool:
    if goal_hit(state.scene, state.cells, final_goal):
        return True
    if stop_iou is not None:
        r = env.reward(state)
        return r[0] > stop_iou and r[1] > stop_iou
    return False


def run_episode(
    hierarchy: HierarchyParams,
    env_state: EnvState,
    final_goal: Goal,
    max_high_steps: int,
    explore: bool,
    rng: np.random.Generator | None = None,
    stop_iou: float | None = None,
    block_overlap: bool = False,
) -> EpisodeResult:
    """Roll out the nested hierarchy once, collecting every transition kind for both levels."""
    if max_high_steps < 1:
        raise ValueError("max_high_steps must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    scene = env_state.scene
    H = hierarchy.H
    state = env_state
    states, actions, subgoals = [state], [], []
    transitions: list[TransitionRecord] = []
    high_chain: list[TransitionRecord] = []
    finished = _final_done(state, final_goal, stop_iou)

    for _ in range(max_high_steps):
        if finished:
            break
        seg_start = state
        obs1 = encode_obs(scene, state.cells, final_goal)
        sub = hierarchy.high.act(state, final_goal, explore, rng)
        subgoals.append(sub)
        testing = explore and rng.random() < hierarchy.subgoal_test_rate
        lower_explore = explore and not testing
        sub_goal = hierarchy.subgoal_goal(sub, final_goal)

        low_chain: list[TransitionRecord] = []
        for _ in range(H):
            if finished or goal_hit(scene, state.cells, sub_goal):
                break
            a = hierarchy.low.act(state, sub_goal, lower_explore, rng)
            res = env.step(state, a, block_overlap=block_overlap)
            nxt = res.next_state
            r = goal_rewards(scene, nxt.cells, sub_goal)
            low_chain.append(
                TransitionRecord(
                    level=0,
                    kind=TransitionKind.REGULAR,
                    state=encode_obs(scene, state.cells, sub_goal),
                    action=a,
                    reward=r,
                    next_state=encode_obs(scene, nxt.cells, sub_goal),
                    goal=sub_goal,
                    done=r[0] > sub_goal.threshold and r[1] > sub_goal.threshold,
                    cells=state.cells,
                    next_cells=nxt.cells,
                    scene=scene,
                )
            )
            state = nxt
            states.append(state)
            actions.append(a)
            finished = _final_done(state, final_goal, stop_iou)
        transitions.extend(low_chain)
        transitions.extend(hindsight_goal_relabel(low_chain))

        r1 = goal_rewards(scene, state.cells, final_goal)
        proposal = TransitionRecord(
            level=1,
            kind=TransitionKind.REGULAR,
            state=obs1,
            action=sub,
            reward=r1,
            next_state=encode_obs(scene, state.cells, final_goal),
            goal=final_goal,
            done=r1[0] > final_goal.threshold and r1[1] > final_goal.threshold,
            cells=seg_start.cells,
            next_cells=state.cells,
            scene=scene,
        )
        segment = Segment(proposal, len(low_chain), lower_explore)
        if target_cells(scene, sub.target_pos) == state.cells:
            high_chain.append(proposal)
        else:
            high_chain.append(hindsight_action_relabel(segment, state))
        # a segment cut short by reaching the final goal is not a failed test
        if testing and not finished:
            penalty = subgoal_test_transition(segment, state, H, hierarchy.penalty, sub_goal.threshold)
            if penalty is not None:
                transitions.append(penalty)

    transitions.extend(high_chain)
    transitions.extend(hindsight_goal_relabel(high_chain))
    traj = Trajectory(states, actions, subgoals, finished)
    return EpisodeResult(traj, transitions, state)


# ---------------------------------------------------------------------------
# replay storage


class ReplayBuffer:
    """Bounded FIFO of transitions; the oldest record is evicted first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._items: list[TransitionRecord] = []
        self._head = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, record: TransitionRecord) -> int:
        """Store a record and return the slot it occupies."""
        if len(self._items) < self.capacity:
            self._items.append(record)
            return len(self._items) - 1
        slot = self._head
        self._items[slot] = record
        self._head = (self._head + 1) % self.capacity
        return slot

    def extend(self, records) -> None:
        for r in records:
            self.add(r)

    def ordered(self) -> list[TransitionRecord]:
        return self._items[self._head:] + self._items[: self._head]

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, len(self._items), size=n)

    def sample(self, n: int, rng: np.random.Generator) -> list[TransitionRecord]:
        return [self._items[j] for j in self.sample_indices(n, rng)]

    def merge(self, other: ReplayBuffer) -> None:
        self.extend(other.ordered())


# ---------------------------------------------------------------------------
# trajectory dump (newline-delimited JSON)


def record_to_dict(t: TransitionRecord) -> dict:
    if isinstance(t.action, Subgoal):
        action: Any = {"target_pos": list(t.action.target_pos)}
    else:
        action = [int(t.action.a1), int(t.action.a2)]
    return {
        "type": "transition",
        "level": t.level,
        "kind": t.kind.value,
        "state": t.state.tolist(),
        "action": action,
        "reward": list(t.reward),
        "next_state": t.next_state.tolist(),
        "goal": {"target_pos": list(t.goal.target_pos), "threshold": t.goal.threshold},
        "done": bool(t.done),
        "cells": list(t.cells),
        "next_cells": list(t.next_cells),
    }


def record_from_dict(doc: dict, scene: SceneInstance) -> TransitionRecord:
    a = doc["action"]
    if isinstance(a, dict):
        action: Any = Subgoal(tuple(a["target_pos"]))
    else:
        action = JointAction(AgentAction(a[0]), AgentAction(a[1]))
    return TransitionRecord(
        level=int(doc["level"]),
        kind=TransitionKind(doc["kind"]),
        state=np.asarray(doc["state"], dtype=float),
        action=action,
        reward=tuple(doc["reward"]),
        next_state=np.asarray(doc["next_state"], dtype=float),
        goal=Goal(tuple(doc["goal"]["target_pos"]), doc["goal"]["threshold"]),
        done=bool(doc["done"]),
        cells=tuple(doc["cells"]),
        next_cells=tuple(doc["next_cells"]),
        scene=scene,
    )


def write_trajectory(path: str | Path, result: EpisodeResult) -> None:
    scene = result.final_state.scene
    start = result.trajectory.states[0]
    lines = [
        json.dumps(
            {
                "type": "header",
                "scene": scene_to_dict(scene),
                "start_cells": list(start.cells),
                "success": result.trajectory.success,
            }
        )
    ]
    lines.extend(json.dumps(record_to_dict(t)) for t in result.transitions)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class TrajectoryFormatError(ValueError):
    pass


def read_trajectory(path: str | Path) -> tuple[SceneInstance, tuple[int, int], list[TransitionRecord]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise TrajectoryFormatError(f"{path}: empty trajectory file")
    docs = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            docs.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise TrajectoryFormatError(f"{path}: line {n}, column {exc.colno}: {exc.msg}") from None
    head = docs[0]
    if head.get("type") != "header" or "scene" not in head:
        raise TrajectoryFormatError(f"{path}: line 1 must be a header record with the scene")
    scene = scene_from_dict(head["scene"])
    records = []
    for n, doc in enumerate(docs[1:], start=2):
        try:
            records.append(record_from_dict(doc, scene))
        except (KeyError, TypeError, ValueError) as exc:
            raise TrajectoryFormatError(f"{path}: line {n}: bad transition record ({exc})") from None
    return scene, tuple(head.get("start_cells", scene.start_cells)), records


def primitive_frames(start_cells: Sequence[int], records: Sequence[TransitionRecord]) -> list[tuple[int, int]]:
    """Furniture lattice positions at the start and after every primitive move."""
    frames = [tuple(start_cells)]
    for t in records:
        if t.level == 0 and t.kind is TransitionKind.REGULAR:
            frames.append(tuple(t.next_cells))
    return frames
