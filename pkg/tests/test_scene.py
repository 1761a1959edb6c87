import json
from dataclasses import replace

import pytest

from conftest import make_scene
from layout_hac import scene as sc
from layout_hac.geometry import contains
from layout_hac.scene import MoveAxis, RoomType


def test_generate_is_deterministic():
    a = sc.generate_scene("tatami", 42)
    b = sc.generate_scene("tatami", 42)
    assert a == b
    assert sc.save(a) == sc.save(b)
    assert sc.generate_scene("tatami", 43) != a


def test_room_types_seed_independent_streams():
    # the same seed must not produce the same room for two room types
    assert sc.generate_scene("tatami", 5).boundary != sc.generate_scene("bedroom", 5).boundary


def test_generator_soundness_10k():
    n = 0
    for seed in range(2500):
        for rt in RoomType:
            s = sc.generate_scene(rt, seed)
            assert sc.validate(s) == [], (rt, seed)
            assert 3.0 <= s.boundary.size_w <= 6.0 and 3.0 <= s.boundary.size_h <= 6.0
            n += 1
    assert n == 10_000


@pytest.mark.parametrize(
    "rt,axes",
    [
        ("tatami", (MoveAxis.VERTICAL, MoveAxis.HORIZONTAL)),
        ("bedroom", (MoveAxis.VERTICAL, MoveAxis.HORIZONTAL)),
        ("bathroom", (MoveAxis.VERTICAL, MoveAxis.HORIZONTAL)),
        ("kitchen", (MoveAxis.HORIZONTAL, MoveAxis.VERTICAL)),
    ],
)
def test_axes_per_room(rt, axes):
    assert sc.generate_scene(rt, 7).axes == axes


def test_goals_do_not_overlap_and_start_on_grid():
    for seed in range(200):
        s = sc.generate_scene("bedroom", seed)
        assert sc.intersection_area(s.goal[0], s.goal[1]) == 0
        for i in range(2):
            assert sc.cell_of(s, i, s.start[i]) is not None
            assert contains(s.boundary, s.start[i])


def test_fixed_elements_present():
    s = sc.generate_scene("kitchen", 3)
    kinds = [e.kind for e in s.fixed]
    assert kinds.count(sc.ElementKind.WALL) == 4
    assert sc.ElementKind.DOOR in kinds and sc.ElementKind.WINDOW in kinds


def test_round_trip():
    for rt in RoomType:
        for seed in range(20):
            s = sc.generate_scene(rt, seed)
            assert sc.load(sc.save(s)) == s


def test_file_round_trip(tmp_path):
    s = sc.generate_scene("bathroom", 11)
    p = tmp_path / "s.json"
    sc.save_file(s, p)
    assert sc.load_file(p) == s


def test_truncated_document_names_offset():
    data = sc.save(sc.generate_scene("tatami", 1))
    cut = data[:120]
    with pytest.raises(sc.SceneFormatError, match=r"byte offset \d+"):
        sc.load(cut)


def test_three_furniture_rejected():
    doc = sc.scene_to_dict(sc.generate_scene("tatami", 1))
    doc["furniture"].append(doc["furniture"][0])
    with pytest.raises(sc.SceneValidationError, match="exactly two furniture required"):
        sc.load(json.dumps(doc).encode())


def test_unknown_version_and_missing_field():
    doc = sc.scene_to_dict(sc.generate_scene("tatami", 1))
    with pytest.raises(sc.SceneFormatError, match="version"):
        sc.load(json.dumps({**doc, "version": 99}).encode())
    del doc["axes"]
    with pytest.raises(sc.SceneFormatError, match="axes"):
        sc.load(json.dumps(doc).encode())


def test_goal_out_of_bounds_violation():
    s = make_scene()
    g = s.goal[0].moved_to(0.5, 5.0)  # 2 m wide box centered 0.5 m from the wall
    bad = replace(s, goal=(g, s.goal[1]))
    assert any("goal[1]: goal out of bounds" in v for v in sc.validate(bad))


def test_goal_off_grid_by_third_of_step():
    s = make_scene()
    g = s.goal[0].translated(dy=s.step_size / 3)
    bad = replace(s, goal=(g, s.goal[1]))
    assert any("goal unreachable on move grid" in v for v in sc.validate(bad))
    # whole steps are fine
    ok = replace(s, goal=(s.goal[0].translated(dy=3 * s.step_size), s.goal[1]))
    assert sc.validate(ok) == []


def test_cell_range_keeps_furniture_inside():
    s = make_scene()
    for i in range(2):
        kmin, kmax = s.cell_ranges[i]
        assert contains(s.boundary, sc.cell_box(s, i, kmin))
        assert contains(s.boundary, sc.cell_box(s, i, kmax))
        assert not contains(s.boundary, sc.cell_box(s, i, kmin - 1))
        assert not contains(s.boundary, sc.cell_box(s, i, kmax + 1))
    # 10 m room, 2 m box with goal at x=7: centers range over [1, 9]
    assert s.cell_ranges[1] == (-60, 20)


def test_invalid_room_type():
    with pytest.raises(ValueError):
        sc.generate_scene("garage", 1)
