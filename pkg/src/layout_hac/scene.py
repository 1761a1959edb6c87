"""Scene data model, seeded procedural room generator, and the JSON scene file format.

Furniture positions live on a per-furniture lattice anchored at the ground-truth
goal: cell ``k`` of furniture ``i`` is the goal box shifted by ``k * step_size``
along that furniture's move axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

from .geometry import AxisBox, contains, intersection_area

FORMAT_VERSION = 1
DEFAULT_STEP = 0.1
ROOM_SIDE_RANGE = (3.0, 6.0)
WALL_THICKNESS = 0.1
MAX_GENERATION_ATTEMPTS = 200
# a lattice offset counts as integral when within this fraction of a cell
GRID_TOL = 1e-6


class ElementKind(str, Enum):
    WALL = "wall"
    DOOR = "door"
    WINDOW = "window"
    FURNITURE = "furniture"


class MoveAxis(str, Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


class RoomType(str, Enum):
    TATAMI = "tatami"
    BEDROOM = "bedroom"
    BATHROOM = "bathroom"
    KITCHEN = "kitchen"


class SceneFormatError(ValueError):
    pass


class SceneValidationError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid scene: " + "; ".join(self.violations))


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Element:
    kind: ElementKind
    box: AxisBox
    label: str = ""


@dataclass(frozen=True)
class SceneInstance:
    """One room with two movable furniture pieces.

    Index 0 and 1 in every per-furniture tuple correspond to furniture 1 and 2
    (agent 1 moves furniture 1, agent 2 moves furniture 2).
    """

    room_type: RoomType
    boundary: AxisBox
    fixed: tuple[Element, ...]
    furniture: tuple[Element, ...]
    goal: tuple[AxisBox, ...]
    start: tuple[AxisBox, ...]
    axes: tuple[MoveAxis, ...]
    step_size: float = DEFAULT_STEP

    @cached_property
    def cell_ranges(self) -> tuple[tuple[int, int], ...]:
        return tuple(cell_range(self, i) for i in range(len(self.goal)))

    @cached_property
    def start_cells(self) -> tuple[int, ...]:
        cells = tuple(cell_of(self, i, self.start[i]) for i in range(len(self.start)))
        if any(c is None for c in cells):
            raise SceneValidationError(["start is off the move grid"])
        return cells


def axis_coord(box: AxisBox, axis: MoveAxis) -> float:
    return box.center_x if axis is MoveAxis.HORIZONTAL else box.center_y


def off_axis_coord(box: AxisBox, axis: MoveAxis) -> float:
    return box.center_y if axis is MoveAxis.HORIZONTAL else box.center_x


def axis_extent(box: AxisBox, axis: MoveAxis) -> tuple[float, float]:
    if axis is MoveAxis.HORIZONTAL:
        return box.x_min, box.x_max
    return box.y_min, box.y_max


def axis_size(box: AxisBox, axis: MoveAxis) -> float:
    return box.size_w if axis is MoveAxis.HORIZONTAL else box.size_h


def cell_center(scene: SceneInstance, i: int, k: int) -> float:
    return axis_coord(scene.goal[i], scene.axes[i]) + k * scene.step_size


def cell_box(scene: SceneInstance, i: int, k: int) -> AxisBox:
    g = scene.goal[i]
    c = axis_coord(g, scene.axes[i]) + k * scene.step_size
    if scene.axes[i] is MoveAxis.HORIZONTAL:
        return AxisBox(c, g.center_y, g.size_w, g.size_h)
    return AxisBox(g.center_x, c, g.size_w, g.size_h)


def coord_to_cell(scene: SceneInstance, i: int, coord: float) -> int | None:
    """Lattice index of an along-axis center coordinate, or None when off-grid."""
    q = (coord - axis_coord(scene.goal[i], scene.axes[i])) / scene.step_size
    k = round(q)
    if abs(q - k) > GRID_TOL:
        return None
    return int(k)


def cell_of(scene: SceneInstance, i: int, box: AxisBox) -> int | None:
    g = scene.goal[i]
    axis = scene.axes[i]
    if abs(off_axis_coord(box, axis) - off_axis_coord(g, axis)) > GRID_TOL * scene.step_size:
        return None
    return coord_to_cell(scene, i, axis_coord(box, axis))


def cell_range(scene: SceneInstance, i: int) -> tuple[int, int]:
    """Smallest and largest lattice index keeping furniture ``i`` inside the room."""
    axis = scene.axes[i]
    lo, hi = axis_extent(scene.boundary, axis)
    half = axis_size(scene.goal[i], axis) / 2
    g = axis_coord(scene.goal[i], axis)
    d = scene.step_size
    kmin = math.ceil((lo + half - g) / d - GRID_TOL)
    kmax = math.floor((hi - half - g) / d + GRID_TOL)
    # settle rounding at the ends against the containment rule itself
    while kmin <= kmax and not contains(scene.boundary, cell_box(scene, i, kmin)):
        kmin += 1
    while kmax >= kmin and not contains(scene.boundary, cell_box(scene, i, kmax)):
        kmax -= 1
    return kmin, kmax


# ---------------------------------------------------------------------------
# validation


def validate(scene: SceneInstance) -> list[str]:
    """Return every broken scene invariant; an empty list means the scene is valid."""
    out: list[str] = []
    if not isinstance(scene.room_type, RoomType):
        out.append(f"room_type: unknown room type {scene.room_type!r}")
    d = scene.step_size
    if not (isinstance(d, (int, float)) and math.isfinite(d) and d > 0):
        out.append(f"step_size: must be positive and finite, got {d!r}")
        return out
    if len(scene.furniture) != 2:
        out.append(f"furniture: exactly two furniture required, got {len(scene.furniture)}")
    for name in ("goal", "start", "axes"):
        n = len(getattr(scene, name))
        if n != 2:
            out.append(f"{name}: exactly two entries required, got {n}")
    if out:
        return out

    for e in scene.fixed:
        if e.kind is ElementKind.FURNITURE:
            out.append(f"fixed: element {e.label!r} has kind furniture")
    for i in range(2):
        n = i + 1
        f = scene.furniture[i]
        if f.kind is not ElementKind.FURNITURE:
            out.append(f"furniture[{n}]: kind must be furniture, got {f.kind}")
        if not isinstance(scene.axes[i], MoveAxis):
            out.append(f"axes[{n}]: unknown axis {scene.axes[i]!r}")
            continue
        g, s = scene.goal[i], scene.start[i]
        if (g.size_w, g.size_h) != (f.box.size_w, f.box.size_h) or (s.size_w, s.size_h) != (
            f.box.size_w,
            f.box.size_h,
        ):
            out.append(f"furniture[{n}]: goal, start and furniture sizes must match")
        if not contains(scene.boundary, g):
            out.append(f"goal[{n}]: goal out of bounds")
        if not contains(scene.boundary, s):
            out.append(f"start[{n}]: start out of bounds")
        if cell_of(scene, i, s) is None:
            out.append(f"goal[{n}]: goal unreachable on move grid from start[{n}]")
    return out


# ---------------------------------------------------------------------------
# generation

_WALL, _CENTER = "wall", "center"

# label, width range, height range, goal placement
_ROOM_FURNITURE = {
    RoomType.TATAMI: (
        ("tatami_bed", (1.8, 2.4), (1.8, 2.4), _CENTER),
        ("custom_cabinet", (0.8, 1.6), (0.4, 0.6), _WALL),
    ),
    RoomType.BEDROOM: (
        ("bed", (1.4, 1.8), (1.9, 2.1), _CENTER),
        ("custom_cabinet", (0.8, 1.6), (0.45, 0.6), _WALL),
    ),
    RoomType.BATHROOM: (
        ("toilet", (0.4, 0.5), (0.6, 0.75), _CENTER),
        ("washer", (0.55, 0.65), (0.55, 0.65), _WALL),
    ),
    RoomType.KITCHEN: (
        ("cooker", (0.6, 0.9), (0.5, 0.65), _WALL),
        ("washer", (0.55, 0.65), (0.55, 0.65), _WALL),
    ),
}

ROOM_AXES = {
    RoomType.TATAMI: (MoveAxis.VERTICAL, MoveAxis.HORIZONTAL),
    RoomType.BEDROOM: (MoveAxis.VERTICAL, MoveAxis.HORIZONTAL),
    RoomType.BATHROOM: (MoveAxis.VERTICAL, MoveAxis.HORIZONTAL),
    RoomType.KITCHEN: (MoveAxis.HORIZONTAL, MoveAxis.VERTICAL),
}

MIN_TRAVEL_CELLS = 4


def _r2(x: float) -> float:
    return round(float(x), 2)


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return _r2(rng.uniform(lo, hi)) if hi > lo else _r2(lo)


def _fixed_elements(rng: np.random.Generator, w: float, h: float) -> tuple[Element, ...]:
    t = WALL_THICKNESS
    walls = (
        Element(ElementKind.WALL, AxisBox(w / 2, -t / 2, w + 2 * t, t), "wall_south"),
        Element(ElementKind.WALL, AxisBox(w / 2, h + t / 2, w + 2 * t, t), "wall_north"),
        Element(ElementKind.WALL, AxisBox(-t / 2, h / 2, t, h), "wall_west"),
        Element(ElementKind.WALL, AxisBox(w + t / 2, h / 2, t, h), "wall_east"),
    )
    sides = [int(s) for s in rng.permutation(4)]

    def opening(side: int, width: float, kind: ElementKind, label: str) -> Element:
        length = w if side < 2 else h
        width = min(width, length - 0.4)
        c = _uniform(rng, 0.2 + width / 2, length - 0.2 - width / 2)
        if side == 0:
            box = AxisBox(c, -t / 2, width, t)
        elif side == 1:
            box = AxisBox(c, h + t / 2, width, t)
        elif side == 2:
            box = AxisBox(-t / 2, c, t, width)
        else:
            box = AxisBox(w + t / 2, c, t, width)
        return Element(kind, box, label)

    door = opening(sides[0], _uniform(rng, 0.8, 0.9), ElementKind.DOOR, "door")
    window = opening(sides[1], _uniform(rng, 0.8, 1.6), ElementKind.WINDOW, "window")
    return walls + (door, window)


def _goal_box(rng, boundary: AxisBox, size: tuple[float, float], axis: MoveAxis, placement: str) -> AxisBox:
    bw, bh = boundary.size_w, boundary.size_h
    fw, fh = size
    if placement == _WALL:
        # flush to a wall parallel to the move axis, free along the axis
        if axis is MoveAxis.HORIZONTAL:
            cy = fh / 2 if rng.random() < 0.5 else bh - fh / 2
            cx = _uniform(rng, fw / 2, bw - fw / 2)
        else:
            cx = fw / 2 if rng.random() < 0.5 else bw - fw / 2
            cy = _uniform(rng, fh / 2, bh - fh / 2)
        return AxisBox(cx, cy, fw, fh)
    clear_x = min(0.3, (bw - fw) / 2)
    clear_y = min(0.3, (bh - fh) / 2)
    cx = _uniform(rng, fw / 2 + clear_x, bw - fw / 2 - clear_x)
    cy = _uniform(rng, fh / 2 + clear_y, bh - fh / 2 - clear_y)
    return AxisBox(cx, cy, fw, fh)


def _seed_sequence(room_type: RoomType, seed: int) -> np.random.SeedSequence:
    index = list(RoomType).index(room_type)
    return np.random.SeedSequence([int(seed) & (2**64 - 1), index])


def generate_scene(room_type: RoomType | str, seed: int, step_size: float = DEFAULT_STEP) -> SceneInstance:
    room_type = RoomType(room_type)
    rng = np.random.default_rng(_seed_sequence(room_type, seed))
    specs = _ROOM_FURNITURE[room_type]
    axes = ROOM_AXES[room_type]
    for _ in range(MAX_GENERATION_ATTEMPTS):
        w = _uniform(rng, *ROOM_SIDE_RANGE)
        h = _uniform(rng, *ROOM_SIDE_RANGE)
        boundary = AxisBox(w / 2, h / 2, w, h)
        sizes = [(_uniform(rng, *wr), _uniform(rng, *hr)) for _, wr, hr, _ in specs]
        if any(fw >= w or fh >= h for fw, fh in sizes):
            continue
        goals = tuple(
            _goal_box(rng, boundary, sizes[i], axes[i], specs[i][3]) for i in range(2)
        )
        if intersection_area(goals[0], goals[1]) > 0:
            continue
        probe = SceneInstance(room_type, boundary, (), (), goals, goals, axes, step_size)
        ranges = [cell_range(probe, i) for i in range(2)]
        if any(kmax - kmin < MIN_TRAVEL_CELLS or not kmin <= 0 <= kmax for kmin, kmax in ranges):
            continue
        fixed = _fixed_elements(rng, w, h)
        cells = [int(rng.integers(kmin, kmax + 1)) for kmin, kmax in ranges]
        start = tuple(cell_box(probe, i, cells[i]) for i in range(2))
        furniture = tuple(
            Element(ElementKind.FURNITURE, start[i], specs[i][0]) for i in range(2)
        )
        scene = SceneInstance(room_type, boundary, fixed, furniture, goals, start, axes, step_size)
        problems = validate(scene)
        if problems:
            raise GenerationError(f"generator produced an invalid scene: {problems}")
        return scene
    raise GenerationError(
        f"no valid {room_type.value} scene after {MAX_GENERATION_ATTEMPTS} attempts (seed={seed})"
    )


def furniture_labels(room_type: RoomType | str) -> tuple[str, str]:
    specs = _ROOM_FURNITURE[RoomType(room_type)]
    return specs[0][0], specs[1][0]


# ---------------------------------------------------------------------------
# file format


def _box_doc(b: AxisBox) -> dict:
    return {"cx": b.center_x, "cy": b.center_y, "w": b.size_w, "h": b.size_h}


def _element_doc(e: Element) -> dict:
    return {"kind": e.kind.value, "label": e.label, "box": _box_doc(e.box)}


def scene_to_dict(scene: SceneInstance) -> dict:
    return {
        "version": FORMAT_VERSION,
        "room_type": scene.room_type.value,
        "boundary": _box_doc(scene.boundary),
        "fixed": [_element_doc(e) for e in scene.fixed],
        "furniture": [_element_doc(e) for e in scene.furniture],
        "goal": [_box_doc(b) for b in scene.goal],
        "start": [_box_doc(b) for b in scene.start],
        "axes": [a.value for a in scene.axes],
        "step_size": scene.step_size,
    }


def save(scene: SceneInstance) -> bytes:
    problems = validate(scene)
    if problems:
        raise SceneValidationError(problems)
    return (json.dumps(scene_to_dict(scene), indent=2) + "\n").encode("utf-8")


_REQUIRED = ("version", "room_type", "boundary", "fixed", "furniture", "goal", "start", "axes", "step_size")


def _parse_box(doc, where: str) -> AxisBox:
    if not isinstance(doc, dict):
        raise SceneFormatError(f"{where}: expected an object with cx, cy, w, h")
    missing = [k for k in ("cx", "cy", "w", "h") if k not in doc]
    if missing:
        raise SceneFormatError(f"{where}: missing field(s) {', '.join(missing)}")
    try:
        return AxisBox(float(doc["cx"]), float(doc["cy"]), float(doc["w"]), float(doc["h"]))
    except (TypeError, ValueError) as exc:
        raise SceneFormatError(f"{where}: {exc}") from None


def _parse_element(doc, where: str) -> Element:
    if not isinstance(doc, dict) or "kind" not in doc or "box" not in doc:
        raise SceneFormatError(f"{where}: expected an object with kind and box")
    try:
        kind = ElementKind(doc["kind"])
    except ValueError:
        raise SceneFormatError(f"{where}: unknown element kind {doc['kind']!r}") from None
    return Element(kind, _parse_box(doc["box"], f"{where}.box"), str(doc.get("label", "")))


def scene_from_dict(doc: dict) -> SceneInstance:
    if not isinstance(doc, dict):
        raise SceneFormatError("top level: expected a JSON object")
    missing = [k for k in _REQUIRED if k not in doc]
    if missing:
        raise SceneFormatError(f"missing field(s): {', '.join(missing)}")
    if doc["version"] != FORMAT_VERSION:
        raise SceneFormatError(f"unsupported scene format version {doc['version']!r}")
    try:
        room_type = RoomType(doc["room_type"])
    except ValueError:
        raise SceneFormatError(f"room_type: unknown room type {doc['room_type']!r}") from None
    for key in ("fixed", "furniture", "goal", "start", "axes"):
        if not isinstance(doc[key], list):
            raise SceneFormatError(f"{key}: expected a list")
    try:
        axes = tuple(MoveAxis(a) for a in doc["axes"])
    except ValueError as exc:
        raise SceneFormatError(f"axes: {exc}") from None
    step = doc["step_size"]
    if isinstance(step, bool) or not isinstance(step, (int, float)):
        raise SceneFormatError("step_size: expected a number")
    scene = SceneInstance(
        room_type=room_type,
        boundary=_parse_box(doc["boundary"], "boundary"),
        fixed=tuple(_parse_element(e, f"fixed[{j}]") for j, e in enumerate(doc["fixed"])),
        furniture=tuple(_parse_element(e, f"furniture[{j}]") for j, e in enumerate(doc["furniture"])),
        goal=tuple(_parse_box(b, f"goal[{j}]") for j, b in enumerate(doc["goal"])),
        start=tuple(_parse_box(b, f"start[{j}]") for j, b in enumerate(doc["start"])),
        axes=axes,
        step_size=float(step),
    )
    problems = validate(scene)
    if problems:
        raise SceneValidationError(problems)
    return scene


def load(data: bytes) -> SceneInstance:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SceneFormatError(f"invalid UTF-8 at byte offset {exc.start}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise SceneFormatError(f"malformed scene document at byte offset {offset}: {exc.msg}") from None
    return scene_from_dict(doc)


def save_file(scene: SceneInstance, path: str | Path) -> None:
    Path(path).write_bytes(save(scene))


def load_file(path: str | Path) -> SceneInstance:
    return load(Path(path).read_bytes())
