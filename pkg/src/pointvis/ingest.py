"""KITTI-style sensor ingest: binary LiDAR scans, trajectory files,
intrinsics, map accumulation, train/test splits, and map serialization.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError
from .geom import Intrinsics, Pose

MAP_MAGIC = b"CENPBG-MAP\x00"
MAP_VERSION = 1

NO_COLOR = np.float32(np.nan)  # sentinel for points without a sampled color


@dataclass
class Scan:
    """One LiDAR sweep in its sensor frame."""

    scan_id: int
    points: np.ndarray  # (N, 3) float
    reflectance: np.ndarray | None = None  # (N,) in [0, 1]

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise DomainError(f"scan {self.scan_id} has non-finite coordinates")
        if self.scan_id < 0:
            raise DomainError("scan_id must be non-negative")
        if self.reflectance is not None:
            self.reflectance = np.asarray(self.reflectance, dtype=np.float64).reshape(-1)
            if len(self.reflectance) != len(self.points):
                raise DomainError("reflectance length does not match point count")

    def __len__(self):
        return len(self.points)


@dataclass
class PointCloudMap:
    """Accumulated world-frame point cloud with per-scan index ranges."""

    positions: np.ndarray  # (N, 3) world frame
    scan_ranges: list[tuple[int, int, int]]  # (scan_id, first_index, count)
    colors: np.ndarray | None = None  # (N, 3) in [0, 1], NaN rows = no color
    descriptors: np.ndarray | None = None  # (N, C)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = len(self.positions)
        total = sum(c for _, _, c in self.scan_ranges)
        if total != n:
            raise DomainError(f"scan_ranges cover {total} points, map has {n}")
        cursor = 0
        prev_id = -1
        for scan_id, first, count in self.scan_ranges:
            if first != cursor or count < 0:
                raise DomainError("scan_ranges must be contiguous, ordered, non-overlapping")
            if scan_id <= prev_id:
                raise DomainError("scan_ranges must be sorted by scan_id")
            prev_id = scan_id
            cursor += count
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != n:
                raise DomainError("colors length does not match point count")
        if self.descriptors is not None:
            self.descriptors = np.asarray(self.descriptors, dtype=np.float64)
            if self.descriptors.ndim != 2 or len(self.descriptors) != n:
                raise DomainError("descriptors must be an (N, C) array")

    def __len__(self):
        return len(self.positions)

    @property
    def channel_count(self) -> int | None:
        return None if self.descriptors is None else self.descriptors.shape[1]

    def range_of(self, scan_id: int) -> tuple[int, int]:
        for sid, first, count in self.scan_ranges:
            if sid == scan_id:
                return first, count
        raise DomainError(f"scan {scan_id} not in map")


@dataclass
class Sequence:
    """Posed frames plus the accumulated map they observe."""

    frames: list[tuple[int, Pose]]
    intrinsics: Intrinsics
    map: PointCloudMap

    def __post_init__(self):
        ids = [fid for fid, _ in self.frames]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise DomainError("frame_ids must be strictly increasing")

    def frame_ids(self) -> list[int]:
        return [fid for fid, _ in self.frames]


def read_scan(path, scan_id: int = 0) -> Scan:
    """Parse little-endian float32 (x, y, z, reflectance) quadruples."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) % 16 != 0:
        raise FormatError(
            f"{path}: truncated scan, {len(raw)} bytes is not a multiple of 16 "
            f"(stray data from byte offset {len(raw) - len(raw) % 16})"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    return Scan(scan_id, data[:, :3].astype(np.float64), data[:, 3].astype(np.float64))


def write_scan(path, scan: Scan) -> None:
    """Inverse of read_scan (test helper and scene-dump writer)."""
    refl = scan.reflectance
    if refl is None:
        refl = np.zeros(len(scan))
    data = np.empty((len(scan), 4), dtype="<f4")
    data[:, :3] = scan.points
    data[:, 3] = refl
    with open(path, "wb") as f:
        f.write(data.tobytes())


def read_poses(path) -> list[tuple[int, Pose]]:
    """Parse trajectory lines: frame_id followed by a row-major 3x4
    camera-to-world matrix (13 whitespace-separated fields)."""
    out: list[tuple[int, Pose]] = []
    seen: set[int] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 13:
                raise FormatError(f"{path}:{lineno}: expected 13 fields, got {len(fields)}")
            try:
                frame_id = int(fields[0])
                vals = [float(x) for x in fields[1:]]
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: non-numeric token ({e})") from e
            if frame_id in seen:
                raise FormatError(f"{path}:{lineno}: duplicate frame_id {frame_id}")
            seen.add(frame_id)
            mat = np.array(vals, dtype=np.float64).reshape(3, 4)
            rot, t = mat[:, :3], mat[:, 3]
            err = np.abs(rot.T @ rot - np.eye(3)).max()
            if err > 1e-3 or np.linalg.det(rot) < 0:
                raise FormatError(
                    f"{path}:{lineno}: rotation block is not orthonormal "
                    f"(error {err:.3g}, det {np.linalg.det(rot):.3f})"
                )
            if err > 1e-6:
                rot = _nearest_rotation(rot)
            out.append((frame_id, Pose(rot, t, frame_id)))
    return out


def write_poses(path, frames: list[tuple[int, Pose]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for fid, pose in frames:
            mat = np.hstack([pose.rotation, pose.translation[:, None]])
            f.write(str(fid) + " " + " ".join(repr(float(v)) for v in mat.reshape(-1)) + "\n")


def _nearest_rotation(mat: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(mat)
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        u[:, -1] = -u[:, -1]
        rot = u @ vt
    return rot


def read_intrinsics(path) -> Intrinsics:
    """Parse a single-line 'fx fy cx cy width height' file."""
    with open(path, "r", encoding="utf-8") as f:
        fields = f.read().split()
    if len(fields) != 6:
        raise FormatError(f"{path}: expected 6 fields, got {len(fields)}")
    try:
        fx, fy, cx, cy = (float(x) for x in fields[:4])
        w, h = int(fields[4]), int(fields[5])
    except ValueError as e:
        raise FormatError(f"{path}: non-numeric token ({e})") from e
    return Intrinsics(fx, fy, cx, cy, w, h)


def write_intrinsics(path, K: Intrinsics) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{float(K.fx)!r} {float(K.fy)!r} {float(K.cx)!r} {float(K.cy)!r} {K.width} {K.height}\n")


def accumulate(
    scans: list[Scan],
    sensor_poses: list[Pose],
    colors: list[np.ndarray] | None = None,
    extrinsic: np.ndarray | None = None,
) -> PointCloudMap:
    """Transform each scan to the world frame and concatenate.

    `extrinsic` is an optional 3x4 sensor-to-camera transform applied
    before the pose (identity by default). `colors` is an optional
    per-scan list of (N_i, 3) arrays.
    """
    if len(scans) != len(sensor_poses):
        raise DomainError(f"{len(scans)} scans but {len(sensor_poses)} poses")
    if colors is not None and len(colors) != len(scans):
        raise DomainError("colors list length does not match scans")
    triples = list(zip(scans, sensor_poses, colors if colors is not None else [None] * len(scans)))
    triples.sort(key=lambda t: t[0].scan_id)
    parts = []
    color_parts = []
    ranges = []
    cursor = 0
    for scan, pose, col in triples:
        pts = scan.points
        if extrinsic is not None:
            ext = np.asarray(extrinsic, dtype=np.float64).reshape(3, 4)
            pts = pts @ ext[:, :3].T + ext[:, 3]
        world = pts @ pose.rotation.T + pose.translation
        parts.append(world)
        if col is not None:
            color_parts.append(np.asarray(col, dtype=np.float64).reshape(-1, 3))
        ranges.append((scan.scan_id, cursor, len(scan)))
        cursor += len(scan)
    positions = np.concatenate(parts) if parts else np.zeros((0, 3))
    color_arr = np.concatenate(color_parts) if colors is not None else None
    return PointCloudMap(positions, ranges, colors=color_arr)


def split_train_test(frame_ids: list[int]) -> tuple[list[int], list[int]]:
    """Every 10th frame (0-based position within the list) is a test frame."""
    if not frame_ids:
        raise DomainError("cannot split an empty frame list")
    test = [fid for p, fid in enumerate(frame_ids) if p % 10 == 0]
    train = [fid for p, fid in enumerate(frame_ids) if p % 10 != 0]
    return train, test


def attach_descriptors(cloud: PointCloudMap, channels: int = 8, seed: int = 0) -> PointCloudMap:
    """Attach random per-point descriptors (stand-in for learned ones)."""
    if channels < 1:
        raise DomainError("descriptor channel count must be positive")
    rng = np.random.default_rng(seed)
    desc = rng.standard_normal((len(cloud), channels))
    return PointCloudMap(cloud.positions, list(cloud.scan_ranges), cloud.colors, desc)


def colorize_map(
    cloud: PointCloudMap,
    frames: list[tuple[int, Pose]],
    images: dict[int, np.ndarray],
    K: Intrinsics,
) -> PointCloudMap:
    """Color each point by projecting it into its own scan's reference image
    and sampling the nearest pixel. Out-of-bounds points keep NaN (no color).
    """
    from .geom import project_points

    pose_of = dict(frames)
    colors = np.full((len(cloud), 3), np.nan)
    for scan_id, first, count in cloud.scan_ranges:
        if scan_id not in pose_of or scan_id not in images:
            continue
        img = images[scan_id]
        u, v, z = project_points(pose_of[scan_id], K, cloud.positions[first : first + count])
        ahead = z > 0
        ui = np.floor(np.where(ahead, u, -1)).astype(np.int64)
        vi = np.floor(np.where(ahead, v, -1)).astype(np.int64)
        ok = ahead & (ui >= 0) & (ui < K.width) & (vi >= 0) & (vi < K.height)
        colors[first : first + count][ok] = img[vi[ok], ui[ok]]
    return PointCloudMap(cloud.positions, list(cloud.scan_ranges), colors, cloud.descriptors)


def save_map(path, cloud: PointCloudMap) -> None:
    """Binary map format: magic, version, N, C, flags, range table, arrays."""
    flags = (1 if cloud.colors is not None else 0) | (2 if cloud.descriptors is not None else 0)
    c = cloud.channel_count or 0
    with open(path, "wb") as f:
        f.write(MAP_MAGIC)
        f.write(struct.pack("<HQHB", MAP_VERSION, len(cloud), c, flags))
        f.write(struct.pack("<Q", len(cloud.scan_ranges)))
        for sid, first, count in cloud.scan_ranges:
            f.write(struct.pack("<QQQ", sid, first, count))
        f.write(cloud.positions.astype("<f4").tobytes())
        if cloud.colors is not None:
            f.write(cloud.colors.astype("<f4").tobytes())
        if cloud.descriptors is not None:
            f.write(cloud.descriptors.astype("<f4").tobytes())


def load_map(path) -> PointCloudMap:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[: len(MAP_MAGIC)] != MAP_MAGIC:
        raise FormatError(f"{path}: bad magic, not a map file")
    off = len(MAP_MAGIC)
    try:
        version, n, c, flags = struct.unpack_from("<HQHB", raw, off)
        off += struct.calcsize("<HQHB")
        if version != MAP_VERSION:
            raise FormatError(f"{path}: unsupported map version {version}")
        (nranges,) = struct.unpack_from("<Q", raw, off)
        off += 8
        ranges = []
        for _ in range(nranges):
            sid, first, count = struct.unpack_from("<QQQ", raw, off)
            off += 24
            ranges.append((sid, first, count))

        def take(count):
            nonlocal off
            nbytes = count * 4
            if off + nbytes > len(raw):
                raise FormatError(f"{path}: truncated at byte {off}")
            arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
            off += nbytes
            return arr.astype(np.float64)

        positions = take(n * 3).reshape(n, 3)
        colors = take(n * 3).reshape(n, 3) if flags & 1 else None
        descriptors = take(n * c).reshape(n, c) if flags & 2 else None
    except struct.error as e:
        raise FormatError(f"{path}: truncated header ({e})") from e
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    return PointCloudMap(positions, ranges, colors, descriptors)
