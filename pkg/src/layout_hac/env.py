"""Deterministic layout simulator: translate furniture, drop out-of-room moves, score by IoU."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

from .geometry import AxisBox, contains, intersection_area, iou
from .scene import SceneInstance, cell_box, cell_of


class InvalidStartError(ValueError):
    pass


class AgentAction(IntEnum):
    """Signed move along the furniture's axis (positive is +x / +y)."""

    NEGATIVE = -1
    HOLD = 0
    POSITIVE = 1


@dataclass(frozen=True)
class JointAction:
    a1: AgentAction
    a2: AgentAction

    def __iter__(self):
        return iter((self.a1, self.a2))


@dataclass(frozen=True)
class EnvState:
    """Furniture positions as lattice indices relative to each furniture's goal."""

    scene: SceneInstance
    cells: tuple[int, int]
    step_count: int = 0

    @property
    def furniture_pos(self) -> tuple[AxisBox, AxisBox]:
        return cell_box(self.scene, 0, self.cells[0]), cell_box(self.scene, 1, self.cells[1])


@dataclass(frozen=True)
class StepResult:
    next_state: EnvState
    rewards: tuple[float, float]
    dropped: tuple[bool, bool]


def reset(scene: SceneInstance, start_override: Sequence[AxisBox] | None = None) -> EnvState:
    if start_override is None:
        return EnvState(scene, tuple(scene.start_cells))
    if len(start_override) != 2:
        raise InvalidStartError(f"expected 2 start boxes, got {len(start_override)}")
    cells = []
    for i, box in enumerate(start_override):
        ref = scene.goal[i]
        if (box.size_w, box.size_h) != (ref.size_w, ref.size_h):
            raise InvalidStartError(f"start[{i + 1}]: size differs from the furniture size")
        if not contains(scene.boundary, box):
            raise InvalidStartError(f"start[{i + 1}]: box lies outside the room boundary")
        k = cell_of(scene, i, box)
        if k is None:
            raise InvalidStartError(f"start[{i + 1}]: position is off the move grid")
        cells.append(k)
    return EnvState(scene, tuple(cells))


def state_from_cells(scene: SceneInstance, cells: Sequence[int], step_count: int = 0) -> EnvState:
    for i, k in enumerate(cells):
        kmin, kmax = scene.cell_ranges[i]
        if not kmin <= k <= kmax:
            raise InvalidStartError(f"cell {k} of furniture {i + 1} outside [{kmin}, {kmax}]")
    return EnvState(scene, (int(cells[0]), int(cells[1])), step_count)


def reward(state: EnvState) -> tuple[float, float]:
    pos = state.furniture_pos
    goal = state.scene.goal
    return iou(goal[0], pos[0]), iou(goal[1], pos[1])


def goal_reached(state: EnvState, threshold: float) -> tuple[bool, bool]:
    """Per-furniture success; strictly above the threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    r = reward(state)
    return r[0] > threshold, r[1] > threshold


def step(state: EnvState, action: JointAction, block_overlap: bool = False) -> StepResult:
    """Move both furniture one lattice cell each; moves leaving the room are dropped.

    With ``block_overlap`` a move set that increases furniture-furniture overlap is
    dropped as well (ablation rule, off by default).
    """
    scene = state.scene
    cand = list(state.cells)
    dropped = [False, False]
    for i, a in enumerate(action):
        if a == 0:
            continue
        k = state.cells[i] + int(a)
        kmin, kmax = scene.cell_ranges[i]
        if kmin <= k <= kmax:
            cand[i] = k
        else:
            dropped[i] = True
    if block_overlap and tuple(cand) != state.cells:
        before = intersection_area(*state.furniture_pos)
        after = intersection_area(cell_box(scene, 0, cand[0]), cell_box(scene, 1, cand[1]))
        if after > before:
            for i in range(2):
                if cand[i] != state.cells[i]:
                    cand[i] = state.cells[i]
                    dropped[i] = True
    nxt = EnvState(scene, (cand[0], cand[1]), state.step_count + 1)
    return StepResult(nxt, reward(nxt), (dropped[0], dropped[1]))
