"""Deterministic parametric families of ground-truth wireframe models.

Six families cover every grammar branch: boxes and brackets (lines only),
plates with circular holes (inner loops, seam-split hole walls), seam-split
cylinders (two-entry loops), filleted prisms (mixed line/arc loops) and
freeform plates (complex cubic-profile edges shared between planar caps and
ruled walls).  Every generated model is watertight: each edge geometry is
carried by exactly two faces as per-face traversal-ordered copies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import Config, DEFAULT_CONFIG
from .model import (
    ARC,
    COMPLEX,
    LINE,
    Edge,
    Face,
    Loop,
    ModelError,
    Vertex,
    WireframeModel,
)
from .quantize import arc_from_three_points, sample_edge_points_safe

FAMILIES = ("Box", "LBracket", "PlateWithHoles", "CylinderSegment",
            "PrismFillet", "FreeformPlate")

# loose target echoing production CAD curve-type balance
DEFAULT_MIX = {"FreeformPlate": 35.0, "CylinderSegment": 30.0,
               "PlateWithHoles": 20.0, "PrismFillet": 5.0,
               "Box": 2.5, "LBracket": 2.5}


@dataclass
class FamilySpec:
    family: str
    params: dict
    seed: int = 0


# ---------------------------------------------------------------------------
# model builder
# ---------------------------------------------------------------------------

class _Builder:
    def __init__(self) -> None:
        self._positions: list[np.ndarray] = []
        self._index: dict[tuple, int] = {}
        self.faces: list[Face] = []

    def vertex(self, p) -> int:
        key = tuple(round(float(x), 9) for x in p)
        if key not in self._index:
            self._index[key] = len(self._positions)
            self._positions.append(np.asarray(p, dtype=float))
        return self._index[key]

    def face(self, cycle: list[int], edges: list[tuple], normal_hint,
             primitive: str, inner_loops: list[tuple[list[int], list[tuple]]] = ()):
        loops = [self._loop(cycle, edges, is_outer=True)]
        for icycle, iedges in inner_loops:
            loops.append(self._loop(icycle, iedges, is_outer=False))
        hint = np.asarray(normal_hint, dtype=float)
        self.faces.append(Face(loops=loops, normal_hint=hint / np.linalg.norm(hint),
                               primitive=primitive))

    def _loop(self, cycle: list[int], edges: list[tuple], is_outer: bool) -> Loop:
        if len(edges) != len(cycle):
            raise ValueError("one edge spec per cycle step required")
        entries = []
        for i, spec in enumerate(edges):
            a, b = cycle[i], cycle[(i + 1) % len(cycle)]
            kind = spec[0]
            if kind == LINE:
                edge = Edge(kind=LINE, endpoints=(a, b))
            elif kind == ARC:
                edge = Edge(kind=ARC, endpoints=(a, b),
                            mid=np.asarray(spec[1], dtype=float))
            else:
                edge = Edge(kind=COMPLEX, endpoints=(a, b),
                            samples=np.asarray(spec[1], dtype=float))
            entries.append((a, edge))
        return Loop(entries=entries, is_outer=is_outer)

    def build(self, metadata: dict) -> WireframeModel:
        vertices = [Vertex(position=p, id=i) for i, p in enumerate(self._positions)]
        return WireframeModel(vertices=vertices, faces=self.faces, metadata=metadata)


def _prism(builder: _Builder, profile: list[np.ndarray], edge_specs: list[tuple],
           height: float, wall_primitives: list[str], wall_hints: list[np.ndarray],
           ) -> None:
    """Extrude a closed xy profile along +z into caps plus one wall per step.

    edge_specs describe the profile steps at z=0; arcs get their midpoints
    lifted to each cap, walls reuse the cap edges in traversal order.
    """
    n = len(profile)
    bot = [builder.vertex((p[0], p[1], 0.0)) for p in profile]
    top = [builder.vertex((p[0], p[1], height)) for p in profile]

    def lift(spec: tuple, z: float) -> tuple:
        if spec[0] == ARC:
            m = spec[1]
            return (ARC, (m[0], m[1], z))
        return spec

    builder.face(bot, [lift(s, 0.0) for s in edge_specs], (0, 0, -1), "plane")
    builder.face(top, [lift(s, height) for s in edge_specs], (0, 0, 1), "plane")
    for i in range(n):
        j = (i + 1) % n
        cycle = [bot[i], bot[j], top[j], top[i]]
        # the wall traverses the top cap edge backwards
        edges = [lift(edge_specs[i], 0.0), (LINE,),
                 _reverse_spec(lift(edge_specs[i], height)), (LINE,)]
        builder.face(cycle, edges, wall_hints[i], wall_primitives[i])


def _reverse_spec(spec: tuple) -> tuple:
    if spec[0] == COMPLEX:
        return (COMPLEX, np.asarray(spec[1], dtype=float)[::-1])
    return spec


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

def _gen_box(params: dict, builder: _Builder) -> None:
    w, h, d = params["w"], params["h"], params["d"]
    profile = [np.array(p) for p in ((0, 0), (w, 0), (w, h), (0, h))]
    hints = [(0, -1, 0), (1, 0, 0), (0, 1, 0), (-1, 0, 0)]
    _prism(builder, profile, [(LINE,)] * 4, d, ["plane"] * 4,
           [np.array(v, dtype=float) for v in hints])


def _gen_lbracket(params: dict, builder: _Builder) -> None:
    w, h, w1, h1, t = (params[k] for k in ("w", "h", "w1", "h1", "t"))
    profile = [np.array(p) for p in
               ((0, 0), (w, 0), (w, h1), (w1, h1), (w1, h), (0, h))]
    hints = [(0, -1, 0), (1, 0, 0), (0, 1, 0), (1, 0, 0), (0, 1, 0), (-1, 0, 0)]
    _prism(builder, profile, [(LINE,)] * 6, t, ["plane"] * 6,
           [np.array(v, dtype=float) for v in hints])


def _gen_prism_fillet(params: dict, builder: _Builder) -> None:
    w, h, t, fr = (params[k] for k in ("w", "h", "t", "fr"))
    c = np.array([w - fr, h - fr])
    mid45 = c + fr / np.sqrt(2.0)
    profile = [np.array(p) for p in
               ((0, 0), (w, 0), (w, h - fr), (w - fr, h), (0, h))]
    specs = [(LINE,), (LINE,), (ARC, (mid45[0], mid45[1])), (LINE,), (LINE,)]
    hints = [(0, -1, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (-1, 0, 0)]
    prims = ["plane", "plane", "cylinder", "plane", "plane"]
    _prism(builder, profile, specs, t,
           prims, [np.array(v, dtype=float) for v in hints])


def _gen_cylinder_segment(params: dict, builder: _Builder) -> None:
    r, h = params["r"], params["h"]
    a_b = builder.vertex((r, 0, 0))
    b_b = builder.vertex((-r, 0, 0))
    a_t = builder.vertex((r, 0, h))
    b_t = builder.vertex((-r, 0, h))
    top_up, top_dn = (0, r, h), (0, -r, h)
    bot_up, bot_dn = (0, r, 0), (0, -r, 0)
    builder.face([a_t, b_t], [(ARC, top_up), (ARC, top_dn)], (0, 0, 1), "plane")
    builder.face([a_b, b_b], [(ARC, bot_up), (ARC, bot_dn)], (0, 0, -1), "plane")
    builder.face([a_b, b_b, b_t, a_t],
                 [(ARC, bot_up), (LINE,), (ARC, top_up), (LINE,)],
                 (0, 1, 0), "cylinder")
    builder.face([a_b, b_b, b_t, a_t],
                 [(ARC, bot_dn), (LINE,), (ARC, top_dn), (LINE,)],
                 (0, -1, 0), "cylinder")


def _gen_plate_with_holes(params: dict, builder: _Builder) -> None:
    w, d, t = params["w"], params["d"], params["t"]
    holes = params["holes"]        # list of (cx, cy, r)
    corners = [np.array(p) for p in ((0, 0), (w, 0), (w, d), (0, d))]
    bot = [builder.vertex((p[0], p[1], 0.0)) for p in corners]
    top = [builder.vertex((p[0], p[1], t)) for p in corners]

    def ring(z: float, cx: float, cy: float, r: float):
        p0 = builder.vertex((cx + r, cy, z))
        p1 = builder.vertex((cx - r, cy, z))
        up = (cx, cy + r, z)
        dn = (cx, cy - r, z)
        return p0, p1, up, dn

    top_inner, bot_inner = [], []
    for cx, cy, r in holes:
        t0, t1, t_up, t_dn = ring(t, cx, cy, r)
        b0, b1, b_up, b_dn = ring(0.0, cx, cy, r)
        top_inner.append(([t0, t1], [(ARC, t_up), (ARC, t_dn)]))
        bot_inner.append(([b0, b1], [(ARC, b_up), (ARC, b_dn)]))
        # seam-split hole walls; hints point at the hole axis
        builder.face([t0, t1, b1, b0],
                     [(ARC, t_up), (LINE,), (ARC, b_up), (LINE,)],
                     (0, -1, 0), "cylinder")
        builder.face([t0, t1, b1, b0],
                     [(ARC, t_dn), (LINE,), (ARC, b_dn), (LINE,)],
                     (0, 1, 0), "cylinder")

    builder.face(top, [(LINE,)] * 4, (0, 0, 1), "plane", inner_loops=top_inner)
    builder.face(bot, [(LINE,)] * 4, (0, 0, -1), "plane", inner_loops=bot_inner)
    hints = [(0, -1, 0), (1, 0, 0), (0, 1, 0), (-1, 0, 0)]
    for i in range(4):
        j = (i + 1) % 4
        builder.face([bot[i], bot[j], top[j], top[i]],
                     [(LINE,)] * 4, np.array(hints[i], dtype=float), "plane")


def _wave_samples(w: float, amp: float, a: float, b: float, n: int) -> np.ndarray:
    """Cubic profile y(x) = x (w - x)(a + b x), rescaled to peak amplitude amp."""
    x = np.linspace(0.0, w, n)
    y = x * (w - x) * (a + b * x)
    peak = np.abs(y).max()
    if peak > 0:
        y = y * (amp / peak)
    return np.stack([x, y], axis=1)


def _gen_freeform_plate(params: dict, builder: _Builder) -> None:
    w, d, t = params["w"], params["d"], params["t"]
    n = params.get("samples", 32)
    waves = {}
    for side, span in (("f", w), ("r", d), ("b", w), ("l", d)):
        waves[side] = _wave_samples(span, params[f"amp_{side}"],
                                    params[f"a_{side}"], params[f"b_{side}"], n)

    def xy(side: str, reverse: bool) -> np.ndarray:
        base = waves[side]
        if side == "f":
            pts = np.stack([base[:, 0], base[:, 1]], axis=1)
        elif side == "b":
            pts = np.stack([base[:, 0], d + base[:, 1]], axis=1)
        elif side == "r":
            pts = np.stack([w + base[:, 1], base[:, 0]], axis=1)
        else:
            pts = np.stack([base[:, 1], base[:, 0]], axis=1)
        return pts[::-1] if reverse else pts

    def curve(side: str, z: float, reverse: bool) -> np.ndarray:
        pts = xy(side, reverse)
        return np.column_stack([pts, np.full(len(pts), z)])

    c = {}
    for name, (px, py) in (("00", (0, 0)), ("10", (w, 0)),
                           ("11", (w, d)), ("01", (0, d))):
        c[name + "b"] = builder.vertex((px, py, 0))
        c[name + "t"] = builder.vertex((px, py, t))

    # caps: counter-rotating traversals get fixed by canonical ordering
    cap = [("f", False), ("r", False), ("b", True), ("l", True)]
    for z, suffix, hint in ((t, "t", (0, 0, 1)), (0.0, "b", (0, 0, -1))):
        cycle = [c["00" + suffix], c["10" + suffix],
                 c["11" + suffix], c["01" + suffix]]
        builder.face(cycle, [(COMPLEX, curve(s, z, rev)) for s, rev in cap],
                     hint, "plane")

    # ruled wavy walls share the cap curves (opposite traversal on top)
    walls = (("f", "00", "10", (0, -1, 0)), ("r", "10", "11", (1, 0, 0)),
             ("b", "11", "01", (0, 1, 0)), ("l", "01", "00", (-1, 0, 0)))
    for side, a, b, hint in walls:
        rev = side in ("b", "l")
        cycle = [c[a + "b"], c[b + "b"], c[b + "t"], c[a + "t"]]
        builder.face(cycle,
                     [(COMPLEX, curve(side, 0.0, rev)), (LINE,),
                      (COMPLEX, curve(side, t, not rev)), (LINE,)],
                     hint, "complex")


_GENERATORS = {
    "Box": _gen_box,
    "LBracket": _gen_lbracket,
    "PlateWithHoles": _gen_plate_with_holes,
    "CylinderSegment": _gen_cylinder_segment,
    "PrismFillet": _gen_prism_fillet,
    "FreeformPlate": _gen_freeform_plate,
}


def generate_model(spec: FamilySpec) -> WireframeModel:
    """Build one watertight model; pure in (family, params, seed)."""
    if spec.family not in _GENERATORS:
        raise ModelError(f"unknown family {spec.family!r}")
    builder = _Builder()
    _GENERATORS[spec.family](spec.params, builder)
    metadata = {"family": spec.family, "seed": str(spec.seed),
                "params": json.dumps(spec.params, sort_keys=True)}
    model = builder.build(metadata)
    return model


# ---------------------------------------------------------------------------
# corpus generation
# ---------------------------------------------------------------------------

def _draw_params(family: str, rng: np.random.Generator) -> dict:
    u = rng.uniform
    if family == "Box":
        return {"w": u(0.6, 2.0), "h": u(0.6, 2.0), "d": u(0.6, 2.0)}
    if family == "LBracket":
        w, h = u(1.2, 2.0), u(1.2, 2.0)
        return {"w": w, "h": h, "w1": w * u(0.4, 0.6), "h1": h * u(0.4, 0.6),
                "t": u(0.3, 0.8)}
    if family == "PlateWithHoles":
        w, d, t = u(1.6, 2.6), u(1.2, 1.8), u(0.2, 0.5)
        k = int(rng.integers(1, 4))
        r = min(u(0.12, 0.2), 0.3 * w / (k + 1), 0.3 * d)
        holes = [(w * (i + 1) / (k + 1), d / 2.0, r) for i in range(k)]
        return {"w": w, "d": d, "t": t, "holes": holes}
    if family == "CylinderSegment":
        return {"r": u(0.5, 1.0), "h": u(0.8, 2.0)}
    if family == "PrismFillet":
        w, h = u(1.0, 2.0), u(1.0, 2.0)
        return {"w": w, "h": h, "t": u(0.4, 1.0), "fr": min(w, h) * u(0.25, 0.45)}
    if family == "FreeformPlate":
        w, d = u(1.6, 2.6), u(1.2, 2.0)
        params = {"w": w, "d": d, "t": u(0.3, 0.7)}
        for side, span in (("f", d), ("r", w), ("b", d), ("l", w)):
            params[f"amp_{side}"] = span * u(0.06, 0.15)
            params[f"a_{side}"] = u(-1.0, 1.0)
            params[f"b_{side}"] = u(-1.0, 1.0)
        return params
    raise ModelError(f"unknown family {family!r}")


def generate_corpus(count: int, mix: dict[str, float] | None = None,
                    seed: int = 0) -> list[WireframeModel]:
    """Deterministic corpus with per-model seeded RNG streams."""
    if count < 1:
        raise ModelError("corpus count must be >= 1")
    weights = dict(DEFAULT_MIX if mix is None else mix)
    names = sorted(weights)
    probs = np.array([weights[n] for n in names], dtype=float)
    probs = probs / probs.sum()
    streams = np.random.SeedSequence(seed).spawn(count)
    models = []
    for i, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        family = names[int(rng.choice(len(names), p=probs))]
        params = _draw_params(family, rng)
        spec = FamilySpec(family=family, params=params, seed=seed)
        model = generate_model(spec)
        model.metadata["index"] = str(i)
        models.append(model)
    return models


def perturb_model(model: WireframeModel, sigma: float, seed: int = 0,
                  ) -> WireframeModel:
    """Jitter vertex positions and edge geometry with seeded Gaussian noise."""
    if sigma < 0:
        raise ModelError("sigma must be >= 0")
    out = model.copy()
    if sigma == 0.0:
        return out
    rng = np.random.default_rng(seed)
    for vertex in out.vertices:
        vertex.position = vertex.position + rng.normal(0.0, sigma, 3)
        vertex.qpos = None
    for _, _, _, _, edge in out.iter_loop_entries():
        if edge.mid is not None:
            edge.mid = edge.mid + rng.normal(0.0, sigma, 3)
        if edge.samples is not None:
            edge.samples = edge.samples + rng.normal(0.0, sigma, edge.samples.shape)
    return out


# ---------------------------------------------------------------------------
# ground-truth sampling (prior-fidelity and refiner targets)
# ---------------------------------------------------------------------------

def model_point_cloud(model: WireframeModel, per_edge: int = 32) -> np.ndarray:
    """Wireframe sample cloud: all edge samples plus vertices."""
    chunks = [np.stack([v.position for v in model.vertices])]
    for _, _, _, _, edge in model.iter_loop_entries():
        chunks.append(sample_edge_points_safe(edge, model.vertices, per_edge))
    return np.concatenate(chunks, axis=0)


def _face_arc_cylinder(face: Face, model: WireframeModel):
    for loop in face.loops:
        for _, edge in loop.entries:
            if edge.kind == ARC:
                a = model.vertex(edge.endpoints[0]).position
                b = model.vertex(edge.endpoints[1]).position
                return arc_from_three_points(a, edge.mid, b)
    raise ModelError("cylinder face carries no arc edge")


def _ruled_wall_sheets(face: Face, model: WireframeModel,
                       ) -> tuple[np.ndarray, np.ndarray]:
    curves = [e.samples for _, e in face.outer.entries if e.kind == COMPLEX]
    if len(curves) < 2:
        raise ModelError("ruled wall needs two complex edges")
    a, b = np.asarray(curves[0]), np.asarray(curves[1])
    if np.linalg.norm(b[0] - a[0]) > np.linalg.norm(b[-1] - a[0]):
        b = b[::-1]
    return a, b


def face_truth_points(face: Face, model: WireframeModel, density: int = 48,
                      config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Dense samples of the true underlying surface over the face's domain."""
    from .surface import face_boundary_samples, local_basis

    primitive = face.primitive or "plane"
    if primitive == "plane":
        outer, _ = face_boundary_samples(face, model, config)
        basis = local_basis(outer)
        uv = basis.to_uvw(outer)
        w0 = float(uv[:, 2].mean())
        lo, hi = uv[:, :2].min(axis=0), uv[:, :2].max(axis=0)
        us = np.linspace(lo[0], hi[0], density)
        vs = np.linspace(lo[1], hi[1], density)
        vv, uu = np.meshgrid(vs, us, indexing="ij")
        ww = np.full_like(uu, w0)
        return basis.to_world(np.stack([uu, vv, ww], axis=-1)).reshape(-1, 3)
    if primitive == "cylinder":
        center, radius, axis = _face_arc_cylinder(face, model)
        outer, _ = face_boundary_samples(face, model, config)
        rel = outer - center
        axial = rel @ axis
        in_plane = rel - np.outer(axial, axis)
        e1 = in_plane[int(np.argmax(np.linalg.norm(in_plane, axis=1)))]
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(axis, e1)
        theta = np.unwrap(np.arctan2(in_plane @ e2, in_plane @ e1))
        ts = np.linspace(theta.min(), theta.max(), density)
        ss = np.linspace(axial.min(), axial.max(), density)
        tt, zz = np.meshgrid(ts, ss, indexing="ij")
        pts = (center
               + radius * np.cos(tt)[..., None] * e1
               + radius * np.sin(tt)[..., None] * e2
               + zz[..., None] * axis)
        return pts.reshape(-1, 3)
    # complex: ruled sheet between the two complex edges
    a, b = _ruled_wall_sheets(face, model)
    s = np.linspace(0.0, 1.0, density)[:, None, None]
    sheet = (1.0 - s) * a[None, :, :] + s * b[None, :, :]
    return sheet.reshape(-1, 3)


def project_to_face_truth(face: Face, model: WireframeModel, points: np.ndarray,
                          config: Config = DEFAULT_CONFIG) -> np.ndarray:
    """Project points onto the face's true surface (correspondence-preserving)."""
    from .surface import face_boundary_samples, local_basis

    pts = np.asarray(points, dtype=float)
    primitive = face.primitive or "plane"
    if primitive == "plane":
        outer, _ = face_boundary_samples(face, model, config)
        basis = local_basis(outer)
        w0 = float(basis.to_uvw(outer)[:, 2].mean())
        uvw = basis.to_uvw(pts)
        uvw[:, 2] = w0
        return basis.to_world(uvw)
    if primitive == "cylinder":
        center, radius, axis = _face_arc_cylinder(face, model)
        rel = pts - center
        axial = rel @ axis
        in_plane = rel - np.outer(axial, axis)
        norms = np.linalg.norm(in_plane, axis=1)
        norms[norms <= 1e-12] = 1.0
        return center + np.outer(axial, axis) + in_plane * (radius / norms)[:, None]
    a, b = _ruled_wall_sheets(face, model)
    s = np.linspace(0.0, 1.0, 33)[:, None, None]
    dense = ((1.0 - s) * a[None, :, :] + s * b[None, :, :]).reshape(-1, 3)
    from scipy.spatial import cKDTree

    _, idx = cKDTree(dense).query(pts)
    return dense[idx]
