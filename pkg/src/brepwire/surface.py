"""Face-grid sampling, D4 canonicalization, analytic priors and primitive fitting.

The analytic prior pipeline: Newell normal of the outer loop -> PCA local
basis on the projected boundary -> ridge-regularized quadratic height fit on
all boundary samples -> N x N grid over the outer-loop (u,v) bbox, evaluated
and normalized into [-1,1]^3.  Interior voids are deliberately not excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from .config import Config, DEFAULT_CONFIG
from .model import Face, Transform, WireframeModel
from .quantize import GeometryError, quantize_points, sample_edge_points_safe


@dataclass
class LocalBasis:
    origin: np.ndarray     # centroid of the boundary points
    u: np.ndarray          # leading in-plane principal axis
    v: np.ndarray          # n x u
    n: np.ndarray          # unit Newell normal

    def to_uvw(self, points: np.ndarray) -> np.ndarray:
        d = np.asarray(points, dtype=float) - self.origin
        return np.stack([d @ self.u, d @ self.v, d @ self.n], axis=-1)

    def to_world(self, uvw: np.ndarray) -> np.ndarray:
        uvw = np.asarray(uvw, dtype=float)
        return (self.origin + np.outer(uvw[..., 0].ravel(), self.u)
                + np.outer(uvw[..., 1].ravel(), self.v)
                + np.outer(uvw[..., 2].ravel(), self.n)).reshape(uvw.shape)


@dataclass
class QuadCoeffs:
    """w = a u^2 + b uv + c v^2 + d u + e v + f0 in a local basis."""
    a: float
    b: float
    c: float
    d: float
    e: float
    f0: float
    residual_rms: float = 0.0

    def evaluate(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return (self.a * u * u + self.b * u * v + self.c * v * v
                + self.d * u + self.e * v + self.f0)


@dataclass
class FaceGrid:
    points: np.ndarray          # (N, N, 3), normalized to [-1,1]^3
    transform: Transform        # forward map from model frame into the grid frame
    d4_op: int = 0

    def to_model_frame(self) -> np.ndarray:
        return self.transform.invert(self.points.reshape(-1, 3)).reshape(self.points.shape)

    def to_json(self) -> dict:
        n = self.points.shape[0]
        return {"n": n,
                "points": [[float(x) for x in p] for p in self.points.reshape(-1, 3)],
                "transform": {"scale": float(self.transform.scale),
                              "offset": [float(x) for x in self.transform.offset]},
                "d4": int(self.d4_op)}

    @classmethod
    def from_json(cls, doc: dict) -> "FaceGrid":
        n = int(doc["n"])
        pts = np.asarray(doc["points"], dtype=float).reshape(n, n, 3)
        tr = Transform(scale=float(doc["transform"]["scale"]),
                       offset=np.asarray(doc["transform"]["offset"], dtype=float))
        return cls(points=pts, transform=tr, d4_op=int(doc.get("d4", 0)))


@dataclass
class PrimitiveFit:
    kind: str                  # plane | cylinder | sphere | complex
    rms: float
    residuals: dict[str, float]
    params: dict


@dataclass
class BsplineSurface:
    control: np.ndarray        # (8, 8, 3)
    knots: np.ndarray
    degree: int
    max_error: float


# ---------------------------------------------------------------------------
# Newell normal and local basis
# ---------------------------------------------------------------------------

def newell_normal(points: np.ndarray) -> np.ndarray:
    """Area-weighted polygon normal; magnitude is twice the enclosed area."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise GeometryError("newell normal needs at least 3 points")
    nxt = np.roll(pts, -1, axis=0)
    normal = np.array([
        np.sum((pts[:, 1] - nxt[:, 1]) * (pts[:, 2] + nxt[:, 2])),
        np.sum((pts[:, 2] - nxt[:, 2]) * (pts[:, 0] + nxt[:, 0])),
        np.sum((pts[:, 0] - nxt[:, 0]) * (pts[:, 1] + nxt[:, 1])),
    ])
    if np.linalg.norm(normal) <= 1e-12:
        raise GeometryError("degenerate loop: zero newell normal")
    return normal


def local_basis(points: np.ndarray) -> LocalBasis:
    """Orthonormal right-handed frame aligned with the boundary's principal axes."""
    pts = np.asarray(points, dtype=float)
    n = newell_normal(pts)
    n = n / np.linalg.norm(n)
    origin = pts.mean(axis=0)
    d = pts - origin
    proj = d - np.outer(d @ n, n)
    cov = proj.T @ proj / len(pts)
    eigvals, eigvecs = np.linalg.eigh(cov)
    lead, second = eigvals[-1], eigvals[-2]
    if lead <= 1e-15 or (lead - second) <= 1e-9 * max(lead, 1e-15):
        # isotropic boundary: aim u at the lexicographically-smallest extreme point
        dist = np.linalg.norm(proj, axis=1)
        far = dist.max()
        candidates = np.flatnonzero(dist >= far * (1.0 - 1e-9))
        best = min(candidates, key=lambda i: tuple(pts[i]))
        u = proj[best]
        if np.linalg.norm(u) <= 1e-15:
            raise GeometryError("degenerate boundary: no in-plane extent")
        u = u / np.linalg.norm(u)
    else:
        u = eigvecs[:, -1]
        u = u - (u @ n) * n
        u = u / np.linalg.norm(u)
        scores = proj @ u
        peak = int(np.argmax(np.abs(scores)))
        if scores[peak] < 0.0:
            u = -u
    v = np.cross(n, u)
    return LocalBasis(origin=origin, u=u, v=v, n=n)


def fit_quadratic(points: np.ndarray, basis: LocalBasis,
                  ridge: float = 1e-8) -> QuadCoeffs:
    """Least-squares height-field quadratic with ridge on the quadratic terms.

    Solved as an augmented least-squares system, so rank-deficient inputs
    yield the minimal-norm coefficient vector.
    """
    uvw = basis.to_uvw(points)
    u, v, w = uvw[:, 0], uvw[:, 1], uvw[:, 2]
    a_mat = np.column_stack([u * u, u * v, v * v, u, v, np.ones_like(u)])
    sq = np.sqrt(ridge)
    aug = np.vstack([a_mat, np.hstack([np.eye(3) * sq, np.zeros((3, 3))])])
    rhs = np.concatenate([w, np.zeros(3)])
    coeffs, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
    rms = float(np.sqrt(np.mean((a_mat @ coeffs - w) ** 2)))
    return QuadCoeffs(*[float(c) for c in coeffs], residual_rms=rms)


# ---------------------------------------------------------------------------
# prior grids
# ---------------------------------------------------------------------------

def face_boundary_samples(face: Face, model: WireframeModel,
                          config: Config = DEFAULT_CONFIG,
                          ) -> tuple[np.ndarray, np.ndarray]:
    """(ordered outer-loop points, all boundary points incl. inner loops)."""
    outer_chunks = [sample_edge_points_safe(e, model.vertices, config.grid_points,
                                            config)[:-1]
                    for _, e in face.outer.entries]
    outer = np.concatenate(outer_chunks, axis=0)
    chunks = [outer]
    for loop in face.loops[1:]:
        for _, edge in loop.entries:
            chunks.append(sample_edge_points_safe(edge, model.vertices,
                                                  config.grid_points, config))
    return outer, np.concatenate(chunks, axis=0)


def generate_prior_grid(face: Face, model: WireframeModel,
                        config: Config = DEFAULT_CONFIG) -> FaceGrid:
    """Quadratic boundary prior sampled on an N x N grid over the outer-loop bbox."""
    n = config.grid_points
    outer, boundary = face_boundary_samples(face, model, config)
    basis = local_basis(outer)
    quad = fit_quadratic(boundary, basis)
    outer_uv = basis.to_uvw(outer)[:, :2]
    lo = outer_uv.min(axis=0)
    hi = outer_uv.max(axis=0)
    if np.any(hi - lo <= 1e-12):
        raise GeometryError("degenerate outer loop: zero planar extent")
    # rows top-to-bottom in v, columns left-to-right in u
    us = np.linspace(lo[0], hi[0], n)
    vs = np.linspace(hi[1], lo[1], n)
    vv, uu = np.meshgrid(vs, us, indexing="ij")
    ww = quad.evaluate(uu, vv)
    world = basis.to_world(np.stack([uu, vv, ww], axis=-1))
    flat = world.reshape(-1, 3)
    lo3 = flat.min(axis=0)
    hi3 = flat.max(axis=0)
    extent = float((hi3 - lo3).max())
    if extent <= 0.0:
        raise GeometryError("degenerate face: zero spatial extent")
    scale = 2.0 / extent
    center = (lo3 + hi3) / 2.0
    fwd = Transform(scale=scale, offset=-scale * center)
    return FaceGrid(points=fwd.apply(flat).reshape(n, n, 3), transform=fwd, d4_op=0)


# ---------------------------------------------------------------------------
# D4 canonicalization
# ---------------------------------------------------------------------------

def _d4_apply(grid: np.ndarray, op: int) -> np.ndarray:
    """The 8 square symmetries acting on the first two array axes."""
    g = grid[:, ::-1] if op >= 4 else grid
    return np.rot90(g, k=op % 4, axes=(0, 1))


def _d4_key(qgrid: np.ndarray, config: Config) -> tuple:
    n = qgrid.shape[0]
    h = n // 2
    mag = np.abs(2 * qgrid.astype(np.int64) - config.qmax)   # |coord| * qmax, exact
    quadrants = (qgrid[:h, :h], qgrid[:h, h:], qgrid[h:, :h], qgrid[h:, h:])
    ul_energy = int(mag[:h, :h].sum())
    centroids = []
    count = h * h
    for quad in quadrants:
        sums = quad.reshape(-1, 3).sum(axis=0, dtype=np.int64)
        centroids.append(tuple(int((2 * s + count) // (2 * count)) for s in sums))
    return (-ul_energy, tuple(centroids), qgrid.tobytes())


def canonicalize_d4(grid: FaceGrid, config: Config = DEFAULT_CONFIG) -> FaceGrid:
    """Pick the square symmetry putting maximum L1 energy in the upper-left.

    Ties break on the lexicographic tuple of the quadrants' quantized
    centroids (UL, UR, LL, LR) and finally on the full quantized grid, so all
    eight symmetry images map to one array (bitwise after quantization).
    """
    if grid.points.shape[0] % 2 != 0:
        raise GeometryError("d4 canonicalization requires an even grid size")
    keys = []
    for op in range(8):
        image = _d4_apply(grid.points, op)
        keys.append((_d4_key(quantize_points(image, config), config), op))
    best_op = min(keys)[1]
    return FaceGrid(points=np.ascontiguousarray(_d4_apply(grid.points, best_op)),
                    transform=grid.transform, d4_op=best_op)


# ---------------------------------------------------------------------------
# primitive classification and B-spline fitting
# ---------------------------------------------------------------------------

_RADIUS_CAP = 100.0     # larger fitted radii mean "actually flat"


def _fit_plane_rms(pts: np.ndarray) -> tuple[float, dict]:
    centroid = pts.mean(axis=0)
    d = pts - centroid
    _, _, vt = np.linalg.svd(d, full_matrices=False)
    normal = vt[-1]
    rms = float(np.sqrt(np.mean((d @ normal) ** 2)))
    return rms, {"point": centroid, "normal": normal}


def _fit_sphere_rms(pts: np.ndarray) -> tuple[float, dict]:
    a_mat = np.column_stack([2.0 * pts, np.ones(len(pts))])
    rhs = (pts ** 2).sum(axis=1)
    beta, *_ = np.linalg.lstsq(a_mat, rhs, rcond=None)
    center = beta[:3]
    r2 = float(beta[3] + center @ center)
    if r2 <= 0.0 or np.sqrt(r2) > _RADIUS_CAP:
        return np.inf, {}
    radius = float(np.sqrt(r2))
    rms = float(np.sqrt(np.mean((np.linalg.norm(pts - center, axis=1) - radius) ** 2)))
    return rms, {"center": center, "radius": radius}


def _fit_cylinder_rms(grid: np.ndarray) -> tuple[float, dict]:
    du = np.gradient(grid, axis=0)
    dv = np.gradient(grid, axis=1)
    normals = np.cross(du.reshape(-1, 3), dv.reshape(-1, 3))
    norms = np.linalg.norm(normals, axis=1)
    ok = norms > 1e-12
    if ok.sum() < 8:
        return np.inf, {}
    normals = normals[ok] / norms[ok][:, None]
    scatter = normals.T @ normals
    eigvals, eigvecs = np.linalg.eigh(scatter)
    axis = eigvecs[:, 0]
    pts = grid.reshape(-1, 3)
    centroid = pts.mean(axis=0)
    d = pts - centroid
    in_plane = d - np.outer(d @ axis, axis)
    e1 = in_plane[int(np.argmax(np.linalg.norm(in_plane, axis=1)))]
    if np.linalg.norm(e1) <= 1e-12:
        return np.inf, {}
    e1 = e1 / np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    alpha, beta = in_plane @ e1, in_plane @ e2
    a_mat = np.column_stack([2.0 * alpha, 2.0 * beta, np.ones(len(alpha))])
    rhs = alpha ** 2 + beta ** 2
    gamma, *_ = np.linalg.lstsq(a_mat, rhs, rcond=None)
    c2 = gamma[:2]
    r2 = float(gamma[2] + c2 @ c2)
    if r2 <= 0.0 or np.sqrt(r2) > _RADIUS_CAP:
        return np.inf, {}
    radius = float(np.sqrt(r2))
    radial = np.sqrt((alpha - c2[0]) ** 2 + (beta - c2[1]) ** 2)
    rms = float(np.sqrt(np.mean((radial - radius) ** 2)))
    center = centroid + c2[0] * e1 + c2[1] * e2
    return rms, {"axis": axis, "point": center, "radius": radius}


def classify_primitive(grid: FaceGrid, threshold: float = 0.01) -> PrimitiveFit:
    """Lowest-RMS analytic fit below threshold; simpler types win ties."""
    pts = grid.points.reshape(-1, 3)
    plane_rms, plane_params = _fit_plane_rms(pts)
    cyl_rms, cyl_params = _fit_cylinder_rms(grid.points)
    sph_rms, sph_params = _fit_sphere_rms(pts)
    residuals = {"plane": plane_rms, "cylinder": cyl_rms, "sphere": sph_rms}
    best_kind, best_rms, best_params = "complex", np.inf, {}
    for kind, rms, params in (("plane", plane_rms, plane_params),
                              ("cylinder", cyl_rms, cyl_params),
                              ("sphere", sph_rms, sph_params)):
        if rms < best_rms:
            best_kind, best_rms, best_params = kind, rms, params
    if best_rms > threshold:
        return PrimitiveFit(kind="complex", rms=best_rms, residuals=residuals,
                            params={})
    return PrimitiveFit(kind=best_kind, rms=best_rms, residuals=residuals,
                        params=best_params)


def _bspline_design(n_samples: int, n_ctrl: int, degree: int,
                    ) -> tuple[np.ndarray, np.ndarray]:
    interior = np.linspace(0.0, 1.0, n_ctrl - degree + 1)[1:-1]
    knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
    t = np.linspace(0.0, 1.0, n_samples)
    t[-1] = 1.0 - 1e-12   # keep the last sample inside the half-open last span
    design = BSpline.design_matrix(t, knots, degree).toarray()
    return design, knots


def fit_bspline(grid: FaceGrid, n_ctrl: int = 8, degree: int = 3) -> BsplineSurface:
    """Least-squares clamped tensor-product cubic fit on a uniform control net."""
    pts = grid.points
    n = pts.shape[0]
    design, knots = _bspline_design(n, n_ctrl, degree)
    control = np.empty((n_ctrl, n_ctrl, 3))
    recon = np.empty_like(pts)
    for c in range(3):
        x, *_ = np.linalg.lstsq(design, pts[:, :, c], rcond=None)      # (8, 32)
        y, *_ = np.linalg.lstsq(design, x.T, rcond=None)               # (8, 8)
        control[:, :, c] = y.T
        recon[:, :, c] = design @ control[:, :, c] @ design.T
    max_error = float(np.abs(recon - pts).max())
    return BsplineSurface(control=control, knots=knots, degree=degree,
                          max_error=max_error)
