"""Flat SVG 1.1 drawings of a room: boundary, walls/doors/windows, both furniture and their goals."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .geometry import AxisBox
from .scene import ElementKind, MoveAxis, SceneInstance, cell_box, cell_range

FURNITURE_COLORS = ("#d62728", "#f2c80f")  # furniture 1 red, furniture 2 yellow
FIXED_STYLE = {
    ElementKind.WALL: 'fill="#555555" stroke="none"',
    ElementKind.DOOR: 'fill="#8c564b" fill-opacity="0.6" stroke="none"',
    ElementKind.WINDOW: 'fill="#1f77b4" fill-opacity="0.6" stroke="none"',
}
PX_PER_M = 100.0
MARGIN_PX = 20.0


class _Canvas:
    """Maps room metres to SVG pixels with y pointing up."""

    def __init__(self, boundary: AxisBox, scale: float = PX_PER_M, margin: float = MARGIN_PX):
        self.b = boundary
        self.scale = scale
        self.margin = margin
        self.width = boundary.size_w * scale + 2 * margin
        self.height = boundary.size_h * scale + 2 * margin

    def x(self, xm: float) -> float:
        return self.margin + (xm - self.b.x_min) * self.scale

    def y(self, ym: float) -> float:
        return self.margin + (self.b.y_max - ym) * self.scale

    def rect(self, box: AxisBox, style: str) -> str:
        return (
            f'<rect x="{self.x(box.x_min):.2f}" y="{self.y(box.y_max):.2f}" '
            f'width="{box.size_w * self.scale:.2f}" height="{box.size_h * self.scale:.2f}" {style}/>'
        )

    def line(self, x0: float, y0: float, x1: float, y1: float, style: str) -> str:
        return (
            f'<line x1="{self.x(x0):.2f}" y1="{self.y(y0):.2f}" '
            f'x2="{self.x(x1):.2f}" y2="{self.y(y1):.2f}" {style}/>'
        )


def _grid_lines(canvas: _Canvas, scene: SceneInstance) -> list[str]:
    """Faint lines at every lattice position of each furniture's leading edge."""
    out = []
    style = 'stroke="#000000" stroke-opacity="0.08" stroke-width="0.5"'
    b = scene.boundary
    for i in range(2):
        kmin, kmax = cell_range(scene, i)
        for k in range(kmin, kmax + 1):
            box = cell_box(scene, i, k)
            if scene.axes[i] is MoveAxis.HORIZONTAL:
                out.append(canvas.line(box.x_min, b.y_min, box.x_min, b.y_max, style))
            else:
                out.append(canvas.line(b.x_min, box.y_min, b.x_max, box.y_min, style))
    return out


def render_svg(scene: SceneInstance, cells: Sequence[int] | None = None, grid: bool = False, title: str = "") -> str:
    """SVG document for the scene with the furniture at ``cells`` (default: the scene's start)."""
    cells = scene.start_cells if cells is None else tuple(cells)
    c = _Canvas(scene.boundary)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{c.width:.0f}" height="{c.height:.0f}" '
        f'viewBox="0 0 {c.width:.2f} {c.height:.2f}">',
    ]
    if title:
        parts.append(f"<title>{escape(title)}</title>")
    parts.append(c.rect(scene.boundary, 'fill="#ffffff" stroke="#000000" stroke-width="2"'))
    if grid:
        parts.extend(_grid_lines(c, scene))
    for e in scene.fixed:
        style = FIXED_STYLE.get(e.kind, 'fill="#999999" stroke="none"')
        parts.append(c.rect(e.box, f'class="{e.kind.value}" {style}'))
    for i in range(2):
        color = FURNITURE_COLORS[i]
        parts.append(
            c.rect(
                cell_box(scene, i, cells[i]),
                f'class="furniture{i + 1}" fill="{color}" fill-opacity="0.85" stroke="#000000" stroke-width="1"',
            )
        )
    for i in range(2):
        parts.append(
            c.rect(
                scene.goal[i],
                f'class="goal{i + 1}" fill="none" stroke="{FURNITURE_COLORS[i]}" '
                'stroke-width="2" stroke-dasharray="6,4"',
            )
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_frames(scene: SceneInstance, frames: Sequence[Sequence[int]], grid: bool = False) -> list[str]:
    """One SVG per lattice configuration (initial state plus one per primitive step)."""
    n = len(frames)
    return [render_svg(scene, f, grid=grid, title=f"step {j} of {n - 1}") for j, f in enumerate(frames)]


def frame_paths(out: str | Path, n: int) -> list[Path]:
    out = Path(out)
    width = max(3, len(str(n - 1)))
    return [out.with_name(f"{out.stem}_{j:0{width}d}{out.suffix or '.svg'}") for j in range(n)]


def write_frames(scene: SceneInstance, frames: Sequence[Sequence[int]], out: str | Path, grid: bool = False) -> list[Path]:
    paths = frame_paths(out, len(frames))
    for p, svg in zip(paths, render_frames(scene, frames, grid)):
        p.write_text(svg, encoding="utf-8")
    return paths
