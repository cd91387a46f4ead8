"""Deterministic SVG rendering of an explored map over its terrain."""

from __future__ import annotations

from xml.sax.saxutils import quoteattr

import numpy as np

from .terrain import FallenTree, Rock, TerrainWorld, Water
from .topomap import EdgeState, NodeKind, TopoMap

SCALE = 20.0  # pixels per meter
MARGIN = 10.0

EDGE_STYLE = {
    EdgeState.TRAVERSABLE: 'stroke="#2b8a3e" stroke-width="1.5"',
    EdgeState.UNTRAVERSABLE: 'stroke="#d62728" stroke-width="1.2" stroke-dasharray="6,3"',
    EdgeState.UNKNOWN: 'stroke="#999999" stroke-width="1" stroke-dasharray="1,3"',
}

# low -> high terrain height
_RAMP = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]],
                 dtype=float)


def height_color(t: float) -> str:
    """Hex color for a normalized height ``t`` in [0, 1]."""
    t = min(max(t, 0.0), 1.0) * (len(_RAMP) - 1)
    i = min(int(t), len(_RAMP) - 2)
    c = _RAMP[i] + (t - i) * (_RAMP[i + 1] - _RAMP[i])
    return "#{:02x}{:02x}{:02x}".format(*(int(round(v)) for v in c))


class _Frame:
    def __init__(self, bounds):
        self.x0, self.y0, self.x1, self.y1 = bounds

    @property
    def size(self) -> tuple[float, float]:
        return ((self.x1 - self.x0) * SCALE + 2 * MARGIN, (self.y1 - self.y0) * SCALE + 2 * MARGIN)

    def px(self, p) -> tuple[str, str]:
        x = (p[0] - self.x0) * SCALE + MARGIN
        y = (self.y1 - p[1]) * SCALE + MARGIN
        return f"{x:.2f}", f"{y:.2f}"


def _terrain_layer(world: TerrainWorld | None, fr: _Frame) -> list[str]:
    w, h = fr.size
    out = ['<g id="terrain">',
           f'<rect x="0" y="0" width="{w:.2f}" height="{h:.2f}" fill="#f4f1e8"/>']
    if world is None:
        out.append("</g>")
        return out
    for ob in world.obstacles:
        if isinstance(ob, Water):
            pts = " ".join(",".join(fr.px(p)) for p in ob.polygon)
            out.append(f'<polygon class="water" points="{pts}" fill="#4a90d9" fill-opacity="0.7"/>')
        elif isinstance(ob, FallenTree):
            (ax, ay), (bx, by) = fr.px(ob.a), fr.px(ob.b)
            out.append(f'<line class="fallen_tree" x1="{ax}" y1="{ay}" x2="{bx}" y2="{by}" '
                       f'stroke="#7a4a1e" stroke-width="{2 * ob.half_width * SCALE:.2f}" '
                       f'stroke-linecap="round"/>')
        elif isinstance(ob, Rock):
            cx, cy = fr.px(ob.center)
            out.append(f'<circle class="rock" cx="{cx}" cy="{cy}" r="{ob.radius * SCALE:.2f}" '
                       f'fill="#8c8c8c"/>')
    out.append("</g>")
    return out


def render_svg(topo: TopoMap, world: TerrainWorld | None = None,
               trajectory: list[list] | None = None, heights: dict[int, float] | None = None,
               bounds: tuple[float, float, float, float] | None = None) -> str:
    """SVG document text.

    ``heights`` maps node id to terrain height (looked up in ``world`` when
    absent). Without a world, ``bounds`` or the node extent sets the frame.
    """
    if bounds is None:
        if world is not None:
            bounds = world.bounds
        else:
            pts = [n.position for n in topo.nodes.values()] + [(0.0, 0.0), (1.0, 1.0)]
            xs, ys = zip(*pts)
            bounds = (min(xs), min(ys), max(xs), max(ys))
    fr = _Frame(bounds)
    w, h = fr.size
    lines = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.2f}" height="{h:.2f}" '
             f'viewBox="0 0 {w:.2f} {h:.2f}">']
    lines += _terrain_layer(world, fr)

    if topo.edges:
        lines.append('<g id="edges" fill="none">')
        for (a, b), e in sorted(topo.edges.items()):
            (x1, y1), (x2, y2) = fr.px(topo.nodes[a].position), fr.px(topo.nodes[b].position)
            lines.append(f'<line class="edge {e.state.value}" data-a="{a}" data-b="{b}" '
                         f'x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" {EDGE_STYLE[e.state]}/>')
        lines.append("</g>")

    if trajectory:
        pts = " ".join(",".join(fr.px((row[1], row[2]))) for row in trajectory)
        lines.append('<g id="path">')
        lines.append(f'<polyline points="{pts}" fill="none" stroke="#111111" stroke-width="1" '
                     f'stroke-opacity="0.6"/>')
        lines.append("</g>")

    if topo.nodes:
        if heights is None:
            heights = {nid: (world.height_at(n.position) if world else 0.0)
                       for nid, n in topo.nodes.items()}
        vals = [heights[nid] for nid in topo.nodes]
        lo, hi = min(vals), max(vals)
        span = hi - lo if hi > lo else 1.0
        lines.append('<g id="nodes">')
        for nid in sorted(topo.nodes):
            n = topo.nodes[nid]
            cx, cy = fr.px(n.position)
            color = height_color((heights[nid] - lo) / span)
            if n.kind is NodeKind.FRONTIER:
                paint = f'fill="none" stroke="{color}" stroke-width="1.5"'
            else:
                paint = f'fill="{color}" stroke="#000000" stroke-width="0.5"'
            lines.append(f'<circle class="node {n.kind.value}" data-id="{nid}" '
                         f'data-height={quoteattr(f"{heights[nid]:.4f}")} '
                         f'cx="{cx}" cy="{cy}" r="4.00" {paint}/>')
        lines.append("</g>")

    lines.append("</svg>")
    return "\n".join(lines) + "\n"
