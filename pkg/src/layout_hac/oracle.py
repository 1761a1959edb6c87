"""Brute-force ground truth: optimal move plans, reachable IoU, and perfect policies."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from . import env
from .env import AgentAction, EnvState, JointAction
from .geometry import AxisBox, iou
from .hac import Goal, Subgoal, cells_to_pos, target_cells
from .scene import SceneInstance, cell_box

ALL_JOINT_ACTIONS = tuple(JointAction(a, b) for a, b in product(AgentAction, AgentAction))


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class Plan:
    actions: tuple[JointAction, ...]
    per_step_iou: tuple[tuple[float, float], ...]

    @property
    def length(self) -> int:
        return len(self.actions)


def _sign(x: int) -> AgentAction:
    return AgentAction((x > 0) - (x < 0))


def _start_state(scene: SceneInstance, start: Sequence[AxisBox] | EnvState) -> EnvState:
    if isinstance(start, EnvState):
        return start
    try:
        return env.reset(scene, start)
    except env.InvalidStartError as exc:
        raise OracleError(str(exc)) from None


def greedy_length(cells: Sequence[int]) -> int:
    return max(abs(cells[0]), abs(cells[1]))


def optimal_plan(scene: SceneInstance, start: Sequence[AxisBox] | EnvState, block_overlap: bool = False) -> Plan:
    """Shortest joint-move plan putting both furniture exactly on their goals.

    Axes are independent when overlap is allowed, so stepping each furniture
    straight at its goal is optimal. With overlap blocking the joint lattice is
    searched breadth-first instead.
    """
    state = _start_state(scene, start)
    if block_overlap:
        actions = _bfs_actions(state, block_overlap=True)
        if actions is None:
            raise OracleError("goal is unreachable under overlap blocking")
    else:
        actions = []
        cells = list(state.cells)
        while cells != [0, 0]:
            a = JointAction(_sign(-cells[0]), _sign(-cells[1]))
            cells = [cells[0] + int(a.a1), cells[1] + int(a.a2)]
            actions.append(a)
    per_step = []
    s = state
    for a in actions:
        res = env.step(s, a, block_overlap=block_overlap)
        per_step.append(res.rewards)
        s = res.next_state
    return Plan(tuple(actions), tuple(per_step))


def _bfs_actions(state: EnvState, block_overlap: bool) -> list[JointAction] | None:
    goal = (0, 0)
    if state.cells == goal:
        return []
    parent: dict[tuple[int, int], tuple[tuple[int, int], JointAction]] = {}
    seen = {state.cells}
    queue = deque([state])
    while queue:
        s = queue.popleft()
        for a in ALL_JOINT_ACTIONS:
            nxt = env.step(s, a, block_overlap=block_overlap).next_state
            if nxt.cells in seen:
                continue
            seen.add(nxt.cells)
            parent[nxt.cells] = (s.cells, a)
            if nxt.cells == goal:
                path = []
                c = goal
                while c != state.cells:
                    c, act = parent[c]
                    path.append(act)
                return path[::-1]
            queue.append(EnvState(s.scene, nxt.cells))
    return None


def bfs_plan_length(scene: SceneInstance, start: Sequence[AxisBox] | EnvState, block_overlap: bool = False) -> int | None:
    """Exhaustive breadth-first search over the joint lattice; None when unreachable."""
    actions = _bfs_actions(_start_state(scene, start), block_overlap)
    return None if actions is None else len(actions)


def max_achievable_iou(scene: SceneInstance, start: Sequence[AxisBox] | EnvState, budget: int) -> tuple[float, float]:
    """Best per-furniture IoU reachable in ``budget`` moves, by enumerating each 1-D lattice."""
    if budget < 0:
        raise ValueError("budget must be non-negative")
    state = _start_state(scene, start)
    out = []
    for i in range(2):
        kmin, kmax = scene.cell_ranges[i]
        k0 = state.cells[i]
        lo, hi = max(kmin, k0 - budget), min(kmax, k0 + budget)
        out.append(max(iou(scene.goal[i], cell_box(scene, i, k)) for k in range(lo, hi + 1)))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# perfect policies for injection into the hierarchy


class GreedyLowPolicy:
    """Steps each furniture straight toward its target cell, holding once there."""

    def act(self, state: EnvState, goal: Goal | Subgoal, explore: bool = False, rng=None) -> JointAction:
        gc = target_cells(state.scene, goal.target_pos)
        return JointAction(_sign(gc[0] - state.cells[0]), _sign(gc[1] - state.cells[1]))


class DirectHighPolicy:
    """Proposes the final goal itself, optionally capped to ``max_offset`` cells per furniture."""

    def __init__(self, max_offset: int | None = None):
        self.max_offset = max_offset

    def act(self, state: EnvState, goal: Goal, explore: bool = False, rng=None) -> Subgoal:
        gc = target_cells(state.scene, goal.target_pos)
        if self.max_offset is None:
            return Subgoal(tuple(goal.target_pos))
        m = self.max_offset
        cells = [c + int(np.clip(g - c, -m, m)) for c, g in zip(state.cells, gc)]
        return Subgoal(cells_to_pos(state.scene, cells))


def oracle_hierarchy(H: int = 10, subgoal_test_rate: float = 0.0):
    from .hac import HierarchyParams

    return HierarchyParams(GreedyLowPolicy(), DirectHighPolicy(max_offset=H), H=H, subgoal_test_rate=subgoal_test_rate)
