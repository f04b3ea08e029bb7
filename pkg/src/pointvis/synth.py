"""Synthetic street-canyon scene with analytic rectangle occluders and a
brute-force ray-casting visibility oracle.

World frame: x right, y down, z forward (so an identity pose looks down
the corridor). The camera travels along the z axis at ground height
minus `camera_height`. Surfaces are textured rectangles; point colors
are sampled from the same analytic texture the oracle painter uses, so
a sampled point and the painter agree exactly at the sample position.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError
from .geom import Intrinsics, Pose, project_points
from .ingest import PointCloudMap, Scan, accumulate, write_intrinsics, write_poses, write_scan

SELF_HIT_EPS = 1e-4  # relative slack before the segment endpoint


@dataclass
class Rect3:
    """Textured rectangle: origin + a*edge_u + b*edge_v, (a, b) in [0,1]^2."""

    origin: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    color: np.ndarray  # base RGB in [0, 1]

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.edge_u = np.asarray(self.edge_u, dtype=np.float64).reshape(3)
        self.edge_v = np.asarray(self.edge_v, dtype=np.float64).reshape(3)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(3)
        if np.linalg.norm(np.cross(self.edge_u, self.edge_v)) == 0.0:
            raise DomainError("degenerate rectangle: spanning vectors are parallel")

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.edge_u, self.edge_v)


def texture_color(surface_idx: int, base: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Smooth per-surface texture: base color modulated by a sinusoid of
    world position. Pure function of (surface_idx, base, position)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    rng = np.random.default_rng(7919 + surface_idx)
    waves = rng.normal(size=(3, 3))
    waves /= np.linalg.norm(waves, axis=1, keepdims=True)
    phases = rng.uniform(0, 2 * np.pi, size=3)
    phase_arg = 2 * np.pi * (pts @ waves.T) / 6.0 + phases
    out = base * (0.85 + 0.15 * np.sin(phase_arg))
    return np.clip(out, 0.0, 1.0)


@dataclass
class CanyonParams:
    length: float = 60.0
    wall_gap: float = 8.0
    point_spacing: float = 0.25
    lidar_range: float = 20.0
    frame_step: float = 1.0
    occluders: int = 0
    seed: int = 0
    wall_height: float = 8.0
    camera_height: float = 1.5
    occluder_height: float | None = None  # default 0.75 * wall_height
    occluder_clearance: float = 0.0  # cleared corridor length behind each occluder
    close_end: bool = True
    image_width: int = 256
    image_height: int = 128
    focal: float | None = None  # default image_width / 2


@dataclass
class SyntheticScene:
    surfaces: list[Rect3]
    trajectory: list[Pose]
    scans: list[Scan]
    intrinsics: Intrinsics
    seed: int
    scan_colors: list[np.ndarray] = field(default_factory=list)
    scan_surface_ids: list[np.ndarray] = field(default_factory=list)
    samples: np.ndarray | None = None
    sample_colors: np.ndarray | None = None
    sample_surface: np.ndarray | None = None


_PALETTE = np.array(
    [
        (0.55, 0.55, 0.60),  # ground
        (0.75, 0.45, 0.35),  # left wall
        (0.40, 0.55, 0.75),  # right wall
        (0.60, 0.70, 0.45),  # end cap
        (0.85, 0.30, 0.30),
        (0.30, 0.80, 0.35),
        (0.90, 0.75, 0.25),
        (0.70, 0.35, 0.80),
        (0.30, 0.75, 0.80),
        (0.85, 0.55, 0.70),
    ]
)


def make_canyon(params: CanyonParams) -> SyntheticScene:
    p = params
    for name in ("length", "wall_gap", "point_spacing", "lidar_range", "frame_step"):
        if getattr(p, name) <= 0:
            raise DomainError(f"{name} must be positive")
    if p.occluders < 0 or p.seed < 0:
        raise DomainError("occluders and seed must be non-negative")
    if p.point_spacing > p.wall_gap:
        raise DomainError("degenerate scene: point spacing exceeds the wall gap")
    if p.lidar_range <= p.wall_gap:
        raise DomainError("lidar_range must exceed wall_gap")

    g, L, wh, ch = p.wall_gap, p.length, p.wall_height, p.camera_height
    oh = p.occluder_height if p.occluder_height is not None else 0.75 * wh
    surfaces = [
        Rect3((-g / 2, ch, 0), (g, 0, 0), (0, 0, L), _PALETTE[0]),  # ground
        Rect3((-g / 2, ch, 0), (0, 0, L), (0, -wh, 0), _PALETTE[1]),  # left wall
        Rect3((g / 2, ch, 0), (0, 0, L), (0, -wh, 0), _PALETTE[2]),  # right wall
    ]
    if p.close_end:
        surfaces.append(Rect3((-g / 2, ch, L), (g, 0, 0), (0, -wh, 0), _PALETTE[3]))
    occ_z = []
    for k in range(p.occluders):
        z = L * (k + 1) / (p.occluders + 1)
        occ_z.append(z)
        color = _PALETTE[4 + k % (len(_PALETTE) - 4)]
        surfaces.append(Rect3((-g / 2, ch, z), (g, 0, 0), (0, -oh, 0), color))
    n_static = 3 + (1 if p.close_end else 0)

    rng = np.random.default_rng(p.seed)
    sample_parts, color_parts, surf_parts = [], [], []
    for idx, rect in enumerate(surfaces):
        lu = np.linalg.norm(rect.edge_u)
        lv = np.linalg.norm(rect.edge_v)
        nu = max(1, int(round(lu / p.point_spacing)))
        nv = max(1, int(round(lv / p.point_spacing)))
        ii, jj = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
        a = (ii.reshape(-1) + 0.5 + rng.uniform(-0.45, 0.45, ii.size)) / nu
        b = (jj.reshape(-1) + 0.5 + rng.uniform(-0.45, 0.45, jj.size)) / nv
        pts = rect.origin + a[:, None] * rect.edge_u + b[:, None] * rect.edge_v
        if p.occluder_clearance > 0 and idx < n_static:
            blocked = np.zeros(len(pts), dtype=bool)
            for z in occ_z:
                blocked |= (pts[:, 2] > z) & (pts[:, 2] < z + p.occluder_clearance)
            pts = pts[~blocked]
        if len(pts) == 0:
            continue
        sample_parts.append(pts)
        color_parts.append(texture_color(idx, rect.color, pts))
        surf_parts.append(np.full(len(pts), idx, dtype=np.int64))
    samples = np.concatenate(sample_parts)
    sample_colors = np.concatenate(color_parts)
    sample_surface = np.concatenate(surf_parts)

    n_frames = int(round(L / p.frame_step))
    trajectory, scans, scan_colors, scan_surface = [], [], [], []
    for t in range(n_frames):
        center = np.array([0.0, 0.0, t * p.frame_step])
        pose = Pose(np.eye(3), center, t)
        trajectory.append(pose)
        near = np.linalg.norm(samples - center, axis=1) <= p.lidar_range
        scans.append(Scan(t, samples[near] - center))
        scan_colors.append(sample_colors[near])
        scan_surface.append(sample_surface[near])

    focal = p.focal if p.focal is not None else p.image_width / 2
    K = Intrinsics(focal, focal, p.image_width / 2, p.image_height / 2, p.image_width, p.image_height)
    return SyntheticScene(
        surfaces, trajectory, scans, K, p.seed,
        scan_colors, scan_surface, samples, sample_colors, sample_surface,
    )


def scene_map(scene: SyntheticScene) -> tuple[PointCloudMap, np.ndarray]:
    """Accumulate the scene's scans into a colored world map; also return
    the per-point surface id (for oracle bookkeeping in tests)."""
    cloud = accumulate(scene.scans, scene.trajectory, colors=scene.scan_colors)
    surface_ids = (
        np.concatenate(scene.scan_surface_ids)
        if scene.scan_surface_ids
        else np.zeros(0, dtype=np.int64)
    )
    return cloud, surface_ids


def ray_rect_intersect(origin, direction, rect: Rect3):
    """Smallest t in the open interval (0, 1) where the segment
    origin + t*direction crosses the rectangle, or None."""
    origin = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    if np.linalg.norm(d) == 0.0:
        raise DomainError("direction must be non-zero")
    mat = np.column_stack([rect.edge_u, rect.edge_v, -d])
    det = np.linalg.det(mat)
    scale = np.linalg.norm(rect.edge_u) * np.linalg.norm(rect.edge_v) * np.linalg.norm(d)
    if abs(det) < 1e-12 * scale:
        return None
    a, b, t = np.linalg.solve(mat, origin - rect.origin)
    if 0.0 < t < 1.0 and 0.0 <= a <= 1.0 and 0.0 <= b <= 1.0:
        return float(t)
    return None


def _segment_hits(centers, deltas, rect: Rect3, t_max):
    """Vectorized: does segment i (center + t*delta, t in (0, t_max)) cross rect?"""
    n = rect.normal
    m = rect.origin - centers
    dn = deltas @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (m @ n) / dn
    q = t[:, None] * deltas - m
    g11 = rect.edge_u @ rect.edge_u
    g12 = rect.edge_u @ rect.edge_v
    g22 = rect.edge_v @ rect.edge_v
    det = g11 * g22 - g12 * g12
    qu = q @ rect.edge_u
    qv = q @ rect.edge_v
    a = (qu * g22 - qv * g12) / det
    b = (qv * g11 - qu * g12) / det
    hit = (t > 0.0) & (t < t_max) & (a >= 0.0) & (a <= 1.0) & (b >= 0.0) & (b <= 1.0)
    return np.where(np.isfinite(t), hit, False)


def oracle_occluded_many(
    positions: np.ndarray, pose: Pose, surfaces: list[Rect3], eps: float = SELF_HIT_EPS
) -> np.ndarray:
    """True where some surface blocks the segment camera-center -> point."""
    pts = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    deltas = pts - pose.translation
    centers = np.broadcast_to(pose.translation, pts.shape)
    occluded = np.zeros(len(pts), dtype=bool)
    for rect in surfaces:
        todo = ~occluded
        if not np.any(todo):
            break
        occluded[todo] |= _segment_hits(centers[todo], deltas[todo], rect, 1.0 - eps)
    return occluded


def oracle_visible_many(
    positions: np.ndarray,
    pose: Pose,
    K: Intrinsics,
    surfaces: list[Rect3],
    eps: float = SELF_HIT_EPS,
) -> np.ndarray:
    """Vectorized oracle: positive depth, in-bounds pixel, unobstructed ray."""
    pts = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    u, v, z = project_points(pose, K, pts)
    ahead = z > 0
    ui = np.floor(np.where(ahead, u, -1)).astype(np.int64)
    vi = np.floor(np.where(ahead, v, -1)).astype(np.int64)
    visible = ahead & (ui >= 0) & (ui < K.width) & (vi >= 0) & (vi < K.height)
    if np.any(visible):
        visible[visible] &= ~oracle_occluded_many(pts[visible], pose, surfaces, eps)
    return visible


def oracle_visible(
    cloud: PointCloudMap, index: int, pose: Pose, K: Intrinsics, surfaces: list[Rect3]
) -> bool:
    return bool(oracle_visible_many(cloud.positions[index : index + 1], pose, K, surfaces)[0])


def oracle_paint(
    pose: Pose, K: Intrinsics, surfaces: list[Rect3], background: float = 0.5
) -> np.ndarray:
    """Analytic ground-truth render: nearest surface hit per pixel-center
    ray, textured; background where no surface is hit."""
    us = (np.arange(K.width) + 0.5 - K.cx) / K.fx
    vs = (np.arange(K.height) + 0.5 - K.cy) / K.fy
    uu, vv = np.meshgrid(us, vs)
    dirs_cam = np.stack([uu, vv, np.ones_like(uu)], axis=-1).reshape(-1, 3)
    dirs = dirs_cam @ pose.rotation.T
    centers = np.broadcast_to(pose.translation, dirs.shape)
    best_t = np.full(len(dirs), np.inf)
    best_surf = np.full(len(dirs), -1, dtype=np.int64)
    for idx, rect in enumerate(surfaces):
        n = rect.normal
        m = rect.origin - centers
        dn = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (m @ n) / dn
        q = t[:, None] * dirs - m
        g11 = rect.edge_u @ rect.edge_u
        g12 = rect.edge_u @ rect.edge_v
        g22 = rect.edge_v @ rect.edge_v
        det = g11 * g22 - g12 * g12
        qu = q @ rect.edge_u
        qv = q @ rect.edge_v
        a = (qu * g22 - qv * g12) / det
        b = (qv * g11 - qu * g12) / det
        hit = np.isfinite(t) & (t > 1e-9) & (a >= 0) & (a <= 1) & (b >= 0) & (b <= 1)
        closer = hit & (t < best_t)
        best_t[closer] = t[closer]
        best_surf[closer] = idx
    img = np.full((len(dirs), 3), float(background))
    for idx, rect in enumerate(surfaces):
        sel = best_surf == idx
        if np.any(sel):
            hits = pose.translation + best_t[sel, None] * dirs[sel]
            img[sel] = texture_color(idx, rect.color, hits)
    return img.reshape(K.height, K.width, 3)


def write_scene(out_dir, scene: SyntheticScene, with_images: bool = False) -> None:
    """Dump a scene in the ingest formats: scans/, poses.txt, intrinsics.txt,
    and a surfaces.txt manifest (9 geometry floats + 3 color floats per line).
    """
    os.makedirs(os.path.join(out_dir, "scans"), exist_ok=True)
    for scan in scene.scans:
        write_scan(os.path.join(out_dir, "scans", f"{scan.scan_id:06d}.bin"), scan)
    write_poses(os.path.join(out_dir, "poses.txt"), [(p.frame_id, p) for p in scene.trajectory])
    write_intrinsics(os.path.join(out_dir, "intrinsics.txt"), scene.intrinsics)
    with open(os.path.join(out_dir, "surfaces.txt"), "w", encoding="utf-8") as f:
        for rect in scene.surfaces:
            vals = np.concatenate([rect.origin, rect.edge_u, rect.edge_v, rect.color])
            f.write(" ".join(repr(float(v)) for v in vals) + "\n")
    if with_images:
        from .render import write_ppm

        os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
        for pose in scene.trajectory:
            img = oracle_paint(pose, scene.intrinsics, scene.surfaces)
            write_ppm(os.path.join(out_dir, "images", f"{pose.frame_id:06d}.ppm"), img)


def read_surfaces(path) -> list[Rect3]:
    surfaces = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 12:
                raise FormatError(f"{path}:{lineno}: expected 12 fields, got {len(fields)}")
            try:
                vals = np.array([float(x) for x in fields])
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: non-numeric token ({e})") from e
            surfaces.append(Rect3(vals[0:3], vals[3:6], vals[6:9], vals[9:12]))
    return surfaces
