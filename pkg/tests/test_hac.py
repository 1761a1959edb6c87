import json

import numpy as np
import pytest

from conftest import make_scene
from layout_hac import env, hac, oracle
from layout_hac.env import AgentAction, JointAction
from layout_hac.geometry import iou
from layout_hac.hac import Goal, HierarchyParams, Segment, Subgoal, TransitionKind
from layout_hac.scene import cell_box

K = TransitionKind


def small_furniture_scene():
    # 1x1 furniture: one cell off gives IoU 0.9/1.1, below any threshold used here
    return make_scene(sizes=((1.0, 1.0), (1.0, 1.0)))


class OffsetHigh:
    """Proposes fixed per-furniture cell offsets from the current position."""

    def __init__(self, offsets):
        self.offsets = list(offsets)
        self.j = 0

    def act(self, state, goal, explore, rng):
        off = self.offsets[min(self.j, len(self.offsets) - 1)]
        self.j += 1
        cells = []
        for i in range(2):
            lo, hi = state.scene.cell_ranges[i]
            cells.append(int(np.clip(state.cells[i] + off[i], lo, hi)))
        return Subgoal(hac.cells_to_pos(state.scene, cells))


class RandomHigh:
    def __init__(self, lo, hi):
        self.lo, self.hi = lo, hi

    def act(self, state, goal, explore, rng):
        cells = []
        for i in range(2):
            kmin, kmax = state.scene.cell_ranges[i]
            cells.append(int(rng.integers(max(kmin, self.lo[i]), min(kmax, self.hi[i]) + 1)))
        return Subgoal(hac.cells_to_pos(state.scene, cells))


class RandomLow:
    def act(self, state, goal, explore, rng):
        return JointAction(AgentAction(int(rng.integers(-1, 2))), AgentAction(int(rng.integers(-1, 2))))


class StillLow:
    def act(self, state, goal, explore, rng):
        return JointAction(AgentAction.HOLD, AgentAction.HOLD)


def test_h_must_be_positive():
    with pytest.raises(ValueError):
        HierarchyParams(StillLow(), StillLow(), H=0)
    with pytest.raises(ValueError):
        HierarchyParams(StillLow(), StillLow(), penalty=1.0)
    assert HierarchyParams(StillLow(), StillLow(), H=4).penalty == -4.0


def test_goal_threshold_range():
    with pytest.raises(ValueError):
        Goal((0.0, 0.0), 1.0)


def test_start_at_goal_ends_immediately(square_scene):
    res = hac.run_episode(oracle.oracle_hierarchy(), env.reset(square_scene), hac.scene_goal(square_scene, 0.9), 12, False)
    assert res.trajectory.success and res.trajectory.primitive_steps == 0


def test_oracle_low_with_final_goal_subgoal_matches_oracle_length():
    s = small_furniture_scene()
    rng = np.random.default_rng(0)
    for _ in range(30):
        cells = [int(rng.integers(lo, hi + 1)) for lo, hi in s.cell_ranges]
        st = env.state_from_cells(s, cells)
        n = oracle.optimal_plan(s, st).length
        h = HierarchyParams(oracle.GreedyLowPolicy(), oracle.DirectHighPolicy(), H=max(1, n))
        res = hac.run_episode(h, st, hac.scene_goal(s, 0.95), 1, False)
        assert res.trajectory.success
        assert res.trajectory.primitive_steps == n


def test_budget_enforced_with_random_policies():
    s = small_furniture_scene()
    st = env.state_from_cells(s, (25, -30))
    h = HierarchyParams(RandomLow(), RandomHigh((-40, -60), (40, 20)), H=5, subgoal_test_rate=0.5)
    res = hac.run_episode(h, st, hac.scene_goal(s, 0.9), 2, True, np.random.default_rng(1))
    assert not res.trajectory.success
    assert res.trajectory.primitive_steps <= 10
    assert res.trajectory.high_steps <= 2


def test_h1_is_single_step_execution(square_scene):
    st = env.state_from_cells(square_scene, (4, 0))
    h = HierarchyParams(oracle.GreedyLowPolicy(), oracle.DirectHighPolicy(), H=1)
    res = hac.run_episode(h, st, hac.scene_goal(square_scene, 0.95), 3, False)
    assert res.trajectory.primitive_steps == 3


def _segment(s, start_cells, target_cells, H, explore=False):
    st = env.state_from_cells(s, start_cells)
    goal = hac.scene_goal(s, 0.9)
    sub = Subgoal(hac.cells_to_pos(s, target_cells))
    sub_goal = Goal(sub.target_pos, 0.999)
    low = oracle.GreedyLowPolicy()
    n = 0
    while n < H and not hac.goal_hit(s, st.cells, sub_goal):
        st = env.step(st, low.act(st, sub_goal)).next_state
        n += 1
    r = hac.goal_rewards(s, st.cells, goal)
    proposal = hac.TransitionRecord(
        1, K.REGULAR, hac.encode_obs(s, start_cells, goal), sub, r, hac.encode_obs(s, st.cells, goal), goal, False,
        tuple(start_cells), st.cells, s,
    )
    return Segment(proposal, n, explore), st


def test_hindsight_action_examples():
    s = make_scene()
    seg, achieved = _segment(s, (0, 0), (20, 0), H=13)
    rel = hac.hindsight_action_relabel(seg, achieved)
    assert rel.kind is K.HINDSIGHT_ACTION
    assert rel.action.target_pos[0] - s.goal[0].center_y == pytest.approx(1.3, abs=1e-9)
    assert hac.target_cells(s, rel.action.target_pos) == (13, 0)
    # exact hit is a fixed point
    seg, achieved = _segment(s, (0, 0), (5, -2), H=10)
    assert hac.hindsight_action_relabel(seg, achieved).action == seg.proposal.action
    # stalled at start
    seg, _ = _segment(s, (3, 4), (10, 10), H=0)
    stalled = env.state_from_cells(s, (3, 4))
    assert hac.target_cells(s, hac.hindsight_action_relabel(seg, stalled).action.target_pos) == (3, 4)


def test_subgoal_test_examples():
    s = make_scene()
    seg, achieved = _segment(s, (0, 0), (30, 0), H=10)
    pen = hac.subgoal_test_transition(seg, achieved, 10, threshold=0.999)
    assert pen is not None and pen.kind is K.SUBGOAL_TEST
    assert pen.reward == (-10.0, -10.0) and pen.done
    seg, achieved = _segment(s, (0, 0), (7, -3), H=10)
    assert hac.subgoal_test_transition(seg, achieved, 10, threshold=0.999) is None
    seg, achieved = _segment(s, (0, 0), (7, -3), H=10, explore=True)
    with pytest.raises(hac.ContractError):
        hac.subgoal_test_transition(seg, achieved, 10)


def test_hindsight_goal_examples():
    s = small_furniture_scene()
    st = env.state_from_cells(s, (5, 0))
    h = HierarchyParams(oracle.GreedyLowPolicy(), OffsetHigh([(-1, 0)]), H=1, subgoal_test_rate=0.0)
    res = hac.run_episode(h, st, hac.scene_goal(s, 0.95), 1, False)
    hg = [t for t in res.transitions if t.kind is K.HINDSIGHT_GOAL]
    assert sorted(t.level for t in hg) == [0, 1]
    # five-step monotone rollout: relabeled rewards never decrease
    h = HierarchyParams(oracle.GreedyLowPolicy(), OffsetHigh([(-5, 0)]), H=5, subgoal_test_rate=0.0)
    res = hac.run_episode(h, env.state_from_cells(s, (5, 3)), hac.scene_goal(s, 0.95), 1, False)
    low_hg = [t for t in res.transitions if t.kind is K.HINDSIGHT_GOAL and t.level == 0]
    assert len(low_hg) == 5
    r = [t.reward for t in low_hg]
    assert all(a[0] <= b[0] and a[1] <= b[1] for a, b in zip(r, r[1:]))
    assert r[-1] == (1.0, 1.0) and low_hg[-1].done


def test_relabel_rewards_match_env_recomputation():
    s = small_furniture_scene()
    rng = np.random.default_rng(3)
    h = HierarchyParams(RandomLow(), RandomHigh((-40, -60), (40, 20)), H=4, subgoal_test_rate=0.3)
    for _ in range(20):
        cells = [int(rng.integers(lo, hi + 1)) for lo, hi in s.cell_ranges]
        res = hac.run_episode(h, env.state_from_cells(s, cells), hac.scene_goal(s, 0.9), 4, True, rng)
        for t in res.transitions:
            if t.kind is not K.HINDSIGHT_GOAL:
                continue
            gc = hac.target_cells(s, t.goal.target_pos)
            expect = tuple(iou(cell_box(s, i, gc[i]), env.state_from_cells(s, t.next_cells).furniture_pos[i]) for i in range(2))
            assert t.reward == expect


def scripted_episode(s, rng, H=10):
    """Greedy low level, random subgoals that keep furniture 1 off its goal, every segment tested."""
    lo1, hi1 = s.cell_ranges[0]
    start = (int(rng.integers(1, hi1 + 1)), int(rng.integers(*s.cell_ranges[1])))
    high = RandomHigh((1, -60), (hi1, 20))
    h = HierarchyParams(oracle.GreedyLowPolicy(), high, H=H, subgoal_test_rate=1.0)
    return hac.run_episode(h, env.state_from_cells(s, start), hac.scene_goal(s, 0.95), 6, True, rng)


def test_hindsight_correctness_scripted_episodes():
    s = small_furniture_scene()
    rng = np.random.default_rng(123)
    H = 10
    for _ in range(100):
        res = scripted_episode(s, rng, H)
        tr = res.transitions
        for level in (0, 1):
            hg = [t for t in tr if t.kind is K.HINDSIGHT_GOAL and t.level == level]
            # the last relabeled transition of each relabel chain reaches its own goal
            finals = [t for t in hg if t.next_cells == hac.target_cells(s, t.goal.target_pos)]
            assert finals
            for t in finals:
                assert t.reward == (1.0, 1.0) and t.done
        ends = [st.cells for st in res.trajectory.states]
        for t in tr:
            if t.level == 1 and t.kind in (K.REGULAR, K.HINDSIGHT_ACTION):
                assert hac.target_cells(s, t.action.target_pos) == t.next_cells
                assert t.next_cells in ends
        tests = {(t.cells, hac.target_cells(s, t.action.target_pos)) for t in tr if t.kind is K.SUBGOAL_TEST}
        for t in tr:
            if t.level == 1 and t.kind in (K.REGULAR, K.HINDSIGHT_ACTION):
                pass
        decisions = list(zip([x for x in res.trajectory.subgoals]))
        seg_starts = [t.cells for t in tr if t.level == 1 and t.kind in (K.REGULAR, K.HINDSIGHT_ACTION)]
        for start, sub in zip(seg_starts, res.trajectory.subgoals):
            target = hac.target_cells(s, sub.target_pos)
            dist = oracle.optimal_plan(s, env.state_from_cells(s, start)).length if False else oracle.greedy_length(
                (target[0] - start[0], target[1] - start[1])
            )
            assert ((start, target) in tests) == (dist > H)
        assert len(decisions) == len(seg_starts)


def test_kind_partition_and_test_records_only_for_misses():
    s = small_furniture_scene()
    rng = np.random.default_rng(9)
    for _ in range(10):
        res = scripted_episode(s, rng)
        for t in res.transitions:
            assert isinstance(t.kind, K)
            if t.kind is K.SUBGOAL_TEST:
                assert t.next_cells != hac.target_cells(s, t.action.target_pos)


def test_observation_is_normalized():
    s = make_scene()
    obs = hac.encode_obs(s, (-40, 20), hac.scene_goal(s, 0.7))
    assert obs.shape == (hac.OBS_DIM,)
    assert np.all(obs[[0, 1, 4, 5]] >= 0) and np.all(obs[[0, 1, 4, 5]] <= 1)
    assert np.all(np.abs(obs[[2, 3, 6, 7]]) <= 1)
    assert obs[10] == 0.7


def test_replay_buffer_fifo():
    s = make_scene()
    seg, achieved = _segment(s, (0, 0), (3, 0), H=10)
    buf = hac.ReplayBuffer(3)
    recs = [hac.replace_action(seg.proposal, Subgoal(hac.cells_to_pos(s, (k, 0)))) for k in range(5)]
    buf.extend(recs)
    assert len(buf) == 3
    assert buf.ordered() == recs[2:]
    other = hac.ReplayBuffer(2)
    other.extend(recs[:2])
    buf.merge(other)
    assert buf.ordered() == [recs[4], recs[0], recs[1]]
    with pytest.raises(ValueError):
        hac.ReplayBuffer(0)
    with pytest.raises(ValueError):
        hac.ReplayBuffer(1).sample(1, np.random.default_rng(0))


def test_trajectory_round_trip(tmp_path):
    s = small_furniture_scene()
    st = env.state_from_cells(s, (7, -4))
    res = hac.run_episode(oracle.oracle_hierarchy(), st, hac.scene_goal(s, 0.95), 12, False)
    p = tmp_path / "t.ndjson"
    hac.write_trajectory(p, res)
    scene2, start, records = hac.read_trajectory(p)
    assert scene2 == s and start == (7, -4)
    assert len(records) == len(res.transitions)
    for a, b in zip(records, res.transitions):
        assert (a.level, a.kind, a.action, a.reward, a.done, a.cells, a.next_cells, a.goal) == (
            b.level, b.kind, b.action, b.reward, b.done, b.cells, b.next_cells, b.goal
        )
        assert np.array_equal(a.state, b.state)
    frames = hac.primitive_frames(start, records)
    assert len(frames) == res.trajectory.primitive_steps + 1
    assert frames[-1] == (0, 0)


def test_trajectory_errors_name_line(tmp_path):
    s = small_furniture_scene()
    res = hac.run_episode(oracle.oracle_hierarchy(), env.state_from_cells(s, (2, 0)), hac.scene_goal(s, 0.95), 2, False)
    p = tmp_path / "t.ndjson"
    hac.write_trajectory(p, res)
    lines = p.read_text().splitlines()
    lines[2] = lines[2][:15]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(hac.TrajectoryFormatError, match="line 3"):
        hac.read_trajectory(p)
    p.write_text(json.dumps({"type": "transition"}) + "\n")
    with pytest.raises(hac.TrajectoryFormatError, match="line 1"):
        hac.read_trajectory(p)
