import numpy as np
import pytest

from layout_hac.geometry import AxisBox
from layout_hac.scene import Element, ElementKind, MoveAxis, RoomType, SceneInstance

RES = 0.001


def raster_count(lo: float, hi: float, res: float = RES) -> int:
    """Number of grid cell centers (j + 0.5) * res lying in [lo, hi)."""
    if hi <= lo:
        return 0
    return max(0, int(np.ceil(hi / res - 0.5)) - int(np.ceil(lo / res - 0.5)))


def raster_area(a: AxisBox, res: float = RES) -> int:
    return raster_count(a.x_min, a.x_max, res) * raster_count(a.y_min, a.y_max, res)


def raster_intersection(a: AxisBox, b: AxisBox, res: float = RES) -> int:
    nx = raster_count(max(a.x_min, b.x_min), min(a.x_max, b.x_max), res)
    ny = raster_count(max(a.y_min, b.y_min), min(a.y_max, b.y_max), res)
    return nx * ny


def raster_iou(a: AxisBox, b: AxisBox, res: float = RES) -> float:
    """IoU by counting shared cells of a res-resolution grid (axis counts multiply for boxes)."""
    inter = raster_intersection(a, b, res)
    return inter / (raster_area(a, res) + raster_area(b, res) - inter)


def make_scene(
    room=(10.0, 10.0),
    sizes=((2.0, 2.0), (2.0, 2.0)),
    goals=((3.0, 5.0), (7.0, 5.0)),
    start_cells=(0, 0),
    axes=(MoveAxis.VERTICAL, MoveAxis.HORIZONTAL),
    step=0.1,
    room_type=RoomType.TATAMI,
) -> SceneInstance:
    """Hand-built scene with the room's lower-left corner at the origin."""
    w, h = room
    boundary = AxisBox(w / 2, h / 2, w, h)
    goal = tuple(AxisBox(gx, gy, sw, sh) for (gx, gy), (sw, sh) in zip(goals, sizes))
    start = []
    for i, g in enumerate(goal):
        d = start_cells[i] * step
        start.append(g.translated(dy=d) if axes[i] is MoveAxis.VERTICAL else g.translated(dx=d))
    furniture = tuple(Element(ElementKind.FURNITURE, b, f"f{i + 1}") for i, b in enumerate(start))
    return SceneInstance(room_type, boundary, (), furniture, goal, tuple(start), tuple(axes), step)


@pytest.fixture
def square_scene():
    return make_scene()


@pytest.fixture
def small_scene():
    # 12 x 8 cells of travel for quick exhaustive searches
    return make_scene(room=(3.0, 2.0), sizes=((1.0, 1.0), (1.0, 1.0)), goals=((0.5, 0.5), (2.5, 1.5)))
