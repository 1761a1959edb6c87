import numpy as np
import pytest

from conftest import make_scene, raster_iou
from layout_hac import env
from layout_hac.env import AgentAction as A
from layout_hac.env import JointAction
from layout_hac.geometry import AxisBox, contains, iou
from layout_hac.scene import RoomType, cell_box, cell_of, generate_scene


def test_reset_default_and_override(square_scene):
    s = square_scene
    st = env.reset(s)
    assert st.furniture_pos == s.start and st.step_count == 0
    at_goal = env.reset(s, s.goal)
    assert env.reward(at_goal) == (1.0, 1.0)


def test_reset_rejects_bad_override(square_scene):
    s = square_scene
    with pytest.raises(env.InvalidStartError, match="outside"):
        env.reset(s, (s.goal[0].moved_to(3.0, 9.5), s.goal[1]))
    with pytest.raises(env.InvalidStartError, match="off the move grid"):
        env.reset(s, (s.goal[0].translated(dy=0.05), s.goal[1]))


def test_step_moves_one_cell():
    s = make_scene(goals=((2.0, 3.0), (7.0, 5.0)))
    st = env.reset(s)
    res = env.step(st, JointAction(A.POSITIVE, A.HOLD))
    p = res.next_state.furniture_pos[0]
    assert p.center_x == 2.0
    assert p.center_y == pytest.approx(3.1, abs=1e-12)
    assert res.next_state.step_count == 1
    assert res.dropped == (False, False)


def test_drop_rule_flush_against_top_wall():
    # furniture 1 (2 m tall, vertical) centered 1 m below the top wall is flush
    s = make_scene(goals=((3.0, 9.0), (7.0, 5.0)))
    st = env.reset(s)
    assert st.furniture_pos[0].y_max == 10.0
    res = env.step(st, JointAction(A.POSITIVE, A.NEGATIVE))
    assert res.next_state.furniture_pos[0] == st.furniture_pos[0]
    assert res.next_state.cells[0] == st.cells[0]
    assert res.dropped == (True, False)
    assert res.next_state.cells[1] == st.cells[1] - 1


def test_goal_reached_is_strict():
    s = make_scene()
    st = env.reset(s)
    assert env.goal_reached(st, 0.9) == (True, True)
    # 2x2 boxes offset 1.0 m along the axis have IoU exactly 1/3
    far = env.state_from_cells(s, (10, 0))
    r = env.reward(far)
    assert r[0] == pytest.approx(1 / 3, abs=1e-12)
    assert raster_iou(far.furniture_pos[0], s.goal[0]) == pytest.approx(1 / 3, abs=1e-3)
    assert env.goal_reached(far, r[0]) == (False, True)


def test_reward_disjoint_component_zero():
    s = make_scene()
    st = env.state_from_cells(s, (30, 0))
    assert env.reward(st)[0] == 0.0


def test_reversibility(square_scene):
    st = env.state_from_cells(square_scene, (3, -4))
    fwd = env.step(st, JointAction(A.POSITIVE, A.NEGATIVE))
    back = env.step(fwd.next_state, JointAction(A.NEGATIVE, A.POSITIVE))
    assert back.next_state.cells == st.cells


def test_contract_suite_random_trials():
    """Determinism, containment, drop rule, grid closure and reward consistency on random rollouts."""
    rng = np.random.default_rng(7)
    scenes = [generate_scene(rt, s) for rt in RoomType for s in range(25)]
    acts = [JointAction(a, b) for a in A for b in A]
    for trial in range(10_000):
        s = scenes[trial % len(scenes)]
        st = env.reset(s)
        for _ in range(5):
            a = acts[rng.integers(len(acts))]
            r1, r2 = env.step(st, a), env.step(st, a)
            assert r1 == r2
            nxt = r1.next_state
            for i in range(2):
                box = nxt.furniture_pos[i]
                assert contains(s.boundary, box)
                assert cell_of(s, i, box) is not None
                assert (box.size_w, box.size_h) == (s.goal[i].size_w, s.goal[i].size_h)
                target = st.cells[i] + int(list(a)[i])
                out = not contains(s.boundary, cell_box(s, i, target))
                assert r1.dropped[i] == out
                assert nxt.cells[i] == (st.cells[i] if out else target)
            assert r1.rewards == tuple(iou(s.goal[i], nxt.furniture_pos[i]) for i in range(2))
            assert nxt.step_count == st.step_count + 1
            st = nxt


def test_block_overlap_drops_overlap_increasing_moves():
    # furniture 2 sits right of furniture 1 on the same row; moving it left would overlap
    s = make_scene(goals=((3.0, 5.0), (5.0, 5.0)))
    st = env.reset(s)
    free = env.step(st, JointAction(A.HOLD, A.NEGATIVE))
    blocked = env.step(st, JointAction(A.HOLD, A.NEGATIVE), block_overlap=True)
    assert free.next_state.cells == (0, -1)
    assert blocked.next_state.cells == (0, 0) and blocked.dropped == (False, True)


def test_fixed_elements_untouched():
    s = generate_scene("bedroom", 3)
    st = env.reset(s)
    env.step(st, JointAction(A.POSITIVE, A.POSITIVE))
    assert st.scene.fixed == s.fixed
