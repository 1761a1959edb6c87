import re
import xml.etree.ElementTree as ET

import pytest

from conftest import make_scene
from layout_hac import env, hac, oracle, render
from layout_hac.scene import cell_box

SVG = "{http://www.w3.org/2000/svg}"


def rects(svg):
    root = ET.fromstring(svg.split("\n", 1)[1])
    return {r.get("class"): r for r in root.iter(SVG + "rect") if r.get("class")}


def test_colors_and_dashed_goals(square_scene):
    r = rects(render.render_svg(square_scene))
    assert r["furniture1"].get("fill") == render.FURNITURE_COLORS[0]
    assert r["furniture2"].get("fill") == render.FURNITURE_COLORS[1]
    for g in ("goal1", "goal2"):
        assert r[g].get("fill") == "none" and r[g].get("stroke-dasharray")


def test_furniture_at_goal_coincides_with_goal_outline(square_scene):
    r = rects(render.render_svg(square_scene, cells=(0, 0)))
    for i in (1, 2):
        f, g = r[f"furniture{i}"], r[f"goal{i}"]
        assert all(f.get(k) == g.get(k) for k in ("x", "y", "width", "height"))


def test_y_axis_points_up(square_scene):
    c = render._Canvas(square_scene.boundary)
    top = cell_box(square_scene, 0, 10)
    assert c.y(top.y_max) < c.y(square_scene.goal[0].y_max)


def test_grid_flag_adds_lines(square_scene):
    plain = render.render_svg(square_scene)
    grid = render.render_svg(square_scene, grid=True)
    assert "<line" not in plain and grid.count("<line") > 10


def test_five_step_trajectory_gives_six_frames(tmp_path):
    s = make_scene(sizes=((1.0, 1.0), (1.0, 1.0)))
    res = hac.run_episode(oracle.oracle_hierarchy(), env.state_from_cells(s, (5, -3)), hac.scene_goal(s, 0.999), 12, False)
    assert res.trajectory.primitive_steps == 5
    p = tmp_path / "t.ndjson"
    hac.write_trajectory(p, res)
    sc, start, records = hac.read_trajectory(p)
    paths = render.write_frames(sc, hac.primitive_frames(start, records), tmp_path / "f.svg")
    assert [q.name for q in paths] == [f"f_{j:03d}.svg" for j in range(6)]
    for q in paths:
        ET.fromstring(q.read_text().split("\n", 1)[1])
    assert re.search(r"<title>step 5 of 5</title>", paths[-1].read_text())
