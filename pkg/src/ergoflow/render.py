"""Deterministic SVG figures of meshes, densities, fields and trajectories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import ValidationError
from .mesh.density import InfoDistribution
from .mesh.geometry import TriMesh

# piecewise-linear colour ramps, (position, (r, g, b))
RAMPS = {
    "viridis": ((0.0, (68, 1, 84)), (0.25, (59, 82, 139)), (0.5, (33, 145, 140)),
                (0.75, (94, 201, 98)), (1.0, (253, 231, 37))),
    "gray": ((0.0, (255, 255, 255)), (1.0, (64, 64, 64))),
    "heat": ((0.0, (255, 255, 255)), (0.5, (253, 174, 97)), (1.0, (165, 0, 38))),
}
AGENT_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


@dataclass(frozen=True)
class RenderSpec:
    """Layer toggles and styling; ``width`` and ``height`` are in pixels."""

    mesh: bool = True
    density: bool = True
    field: bool = True
    trajectories: bool = True
    starts: bool = True
    ramp: str = "viridis"
    width: int = 600
    height: int = 600
    mesh_stroke: float = 0.3
    trajectory_stroke: float = 1.5
    glyph_stroke: float = 0.8
    margin: int = 10

    def validate(self):
        if self.width < 100 or self.height < 100:
            raise ValidationError("canvas must be at least 100 x 100 pixels")
        if not (self.mesh or self.density or self.field or self.trajectories or self.starts):
            raise ValidationError("enable at least one layer")
        if self.ramp not in RAMPS:
            raise ValidationError(f"unknown colour ramp {self.ramp!r}; have {sorted(RAMPS)}")
        return self


def ramp_color(name: str, t: float) -> str:
    stops = RAMPS[name]
    t = min(max(float(t), 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(stops[:-1], stops[1:]):
        if t <= t1:
            s = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            rgb = [round(a + s * (b - a)) for a, b in zip(c0, c1)]
            return "#%02x%02x%02x" % tuple(rgb)
    return "#%02x%02x%02x" % stops[-1][1]


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _states_list(trajectories):
    if trajectories is None:
        return []
    if not isinstance(trajectories, (list, tuple)):
        trajectories = [trajectories]
    out = []
    for tr in trajectories:
        s = np.asarray(getattr(tr, "states", tr), dtype=float)
        out.extend(s if s.ndim == 3 else s[None])
    return out


def render_svg(mesh: TriMesh, density: Optional[InfoDistribution] = None,
               field: Optional[np.ndarray] = None, trajectories=None,
               spec: Optional[RenderSpec] = None, title: str = "") -> str:
    """SVG 1.1 text.

    ``field`` is a per-triangle velocity array (m, 2).  ``trajectories`` is a
    Trajectory, a states array (A, S, 2) or a list of either; every agent
    becomes one polyline.
    """
    values = None if density is None else density.density
    return _render(mesh, values, field, trajectories, spec or RenderSpec(), title)


def render_scalar(mesh: TriMesh, values: Sequence[float], spec: Optional[RenderSpec] = None,
                  title: str = "") -> str:
    """Vertex scalar (e.g. an eigenfunction) drawn as a filled mesh."""
    return _render(mesh, np.asarray(values, dtype=float), None, None,
                   spec or RenderSpec(mesh=False), title)


def _render(mesh, values, field, trajectories, spec, title):
    spec.validate()
    if values is not None and np.shape(values) != (mesh.n_vertices,):
        raise ValidationError("scalar layer needs one value per mesh vertex")
    if field is not None and np.shape(field) != (mesh.n_triangles, 2):
        raise ValidationError("field must have one velocity per mesh triangle")
    paths = _states_list(trajectories)

    x0, y0, x1, y1 = mesh.bbox
    W, H, m = spec.width, spec.height, spec.margin
    scale = min((W - 2 * m) / (x1 - x0), (H - 2 * m) / (y1 - y0))

    def px(p):
        p = np.asarray(p, dtype=float)
        return m + (p[..., 0] - x0) * scale, H - m - (p[..., 1] - y0) * scale

    out = ['<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">']
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(f'<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>')

    draw_tris = spec.mesh or (spec.density and values is not None)
    if draw_tris:
        if spec.density and values is not None:
            v = values[mesh.triangles].mean(axis=1)
            lo, hi = float(v.min()), float(v.max())
            tvals = np.zeros_like(v) if hi <= lo else (v - lo) / (hi - lo)
            fills = [ramp_color(spec.ramp, t) for t in tvals]
        else:
            fills = ["none"] * mesh.n_triangles
        stroke = (f' stroke="#404040" stroke-width="{_fmt(spec.mesh_stroke)}"'
                  if spec.mesh else "")
        X, Y = px(mesh.vertices)
        out.append('<g id="mesh" stroke-linejoin="round">')
        for t, (a, b, c) in enumerate(mesh.triangles):
            d = (f"M{_fmt(X[a])} {_fmt(Y[a])}L{_fmt(X[b])} {_fmt(Y[b])}"
                 f"L{_fmt(X[c])} {_fmt(Y[c])}Z")
            out.append(f'<path d="{d}" fill="{fills[t]}"{stroke}/>')
        out.append("</g>")

    if spec.field and field is not None:
        f = np.asarray(field, dtype=float)
        speed = np.linalg.norm(f, axis=1)
        vmax = float(speed.max())
        glyph = 0.8 * np.sqrt(mesh.area / mesh.n_triangles) * scale
        out.append(f'<g id="field" stroke="#000000" stroke-width="{_fmt(spec.glyph_stroke)}">')
        if vmax > 0:
            cx, cy = px(mesh.centroids)
            for t in range(mesh.n_triangles):
                dx = f[t, 0] / vmax * glyph
                dy = -f[t, 1] / vmax * glyph
                out.append(f'<line x1="{_fmt(cx[t])}" y1="{_fmt(cy[t])}" '
                           f'x2="{_fmt(cx[t] + dx)}" y2="{_fmt(cy[t] + dy)}"/>')
        out.append("</g>")

    if spec.trajectories and paths:
        out.append(f'<g id="trajectories" fill="none" stroke-width="{_fmt(spec.trajectory_stroke)}" '
                   'stroke-linejoin="round">')
        for k, s in enumerate(paths):
            X, Y = px(s)
            pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(X, Y))
            out.append(f'<polyline points="{pts}" stroke="{AGENT_COLORS[k % len(AGENT_COLORS)]}"/>')
        out.append("</g>")

    if spec.starts and paths:
        out.append('<g id="starts" stroke="#000000" stroke-width="0.8">')
        for k, s in enumerate(paths):
            X, Y = px(s[0])
            out.append(f'<circle cx="{_fmt(X)}" cy="{_fmt(Y)}" r="4" '
                       f'fill="{AGENT_COLORS[k % len(AGENT_COLORS)]}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"

