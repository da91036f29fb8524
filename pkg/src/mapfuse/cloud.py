"""Point-cloud frames and LiDAR stream conditioning.

A frame holds the raw per-return attributes of one sweep. The conditioning
steps are a statistical outlier filter (k-NN distance gate), voxel-grid
centroid downsampling, and reconstruction of dropped frames by rigid
interpolation between their neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import PreconditionError, TooFewPoints
from .geom import PoseSE3, quat_slerp, quat_to_rotvec, quat_from_rotvec


@dataclass
class PointCloudFrame:
    """One LiDAR sweep: stamp, xyz, intensity and ring per return."""

    stamp: float
    xyz: np.ndarray                 # (N, 3) float64, meters
    intensity: np.ndarray | None = None
    ring: np.ndarray | None = None
    frame_id: str = "sensor"
    interpolated: bool = False

    def __post_init__(self):
        self.xyz = np.ascontiguousarray(self.xyz, dtype=np.float64)
        if self.xyz.ndim != 2 or self.xyz.shape[1] != 3:
            raise PreconditionError("xyz must be (N,3)")
        if not np.all(np.isfinite(self.xyz)):
            raise PreconditionError("non-finite point coordinates")
        n = len(self.xyz)
        if self.intensity is None:
            self.intensity = np.zeros(n, dtype=np.float64)
        else:
            self.intensity = np.asarray(self.intensity, dtype=np.float64).reshape(n)
        if self.ring is None:
            self.ring = np.zeros(n, dtype=np.uint16)
        else:
            self.ring = np.asarray(self.ring, dtype=np.uint16).reshape(n)

    def __len__(self):
        return len(self.xyz)

    def select(self, mask) -> "PointCloudFrame":
        return replace(
            self, xyz=self.xyz[mask], intensity=self.intensity[mask],
            ring=self.ring[mask],
        )

    def transformed(self, pose: PoseSE3, frame_id: str | None = None):
        out = replace(self, xyz=pose.apply(self.xyz))
        if frame_id is not None:
            out.frame_id = frame_id
        return out


def concatenate_frames(frames, stamp=0.0, frame_id="map") -> PointCloudFrame:
    return PointCloudFrame(
        stamp=stamp,
        xyz=np.concatenate([f.xyz for f in frames]),
        intensity=np.concatenate([f.intensity for f in frames]),
        ring=np.concatenate([f.ring for f in frames]),
        frame_id=frame_id,
    )


def sor_filter(cloud: PointCloudFrame, k: int = 50, z: float = 1.0) -> PointCloudFrame:
    """Statistical outlier removal.

    Keeps points whose mean distance to their k nearest neighbors is at
    most ``global_mean + z * global_std`` of that statistic.
    """
    n = len(cloud)
    if n <= k:
        raise TooFewPoints(f"SOR needs more than k={k} points, got {n}")
    tree = cKDTree(cloud.xyz)
    dist, _ = tree.query(cloud.xyz, k=k + 1, workers=-1)
    mean_knn = dist[:, 1:].mean(axis=1)
    thresh = mean_knn.mean() + z * mean_knn.std()
    return cloud.select(mean_knn <= thresh)


def voxel_downsample(cloud: PointCloudFrame, resolution: float = 0.05) -> PointCloudFrame:
    """Replace the points of each occupied voxel by their centroid.

    Intensity is averaged, ring comes from the voxel's first member in
    input order, and output order is the lexicographic voxel index.
    """
    if resolution <= 0:
        raise PreconditionError("resolution must be positive")
    idx = np.floor(cloud.xyz / resolution).astype(np.int64)
    # lexicographic (ix, iy, iz) order, first occurrence kept for ring
    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
    idx_sorted = idx[order]
    boundaries = np.any(np.diff(idx_sorted, axis=0) != 0, axis=1)
    group_id = np.concatenate([[0], np.cumsum(boundaries)])
    n_groups = group_id[-1] + 1 if len(group_id) else 0
    counts = np.bincount(group_id, minlength=n_groups).astype(float)

    xyz_sorted = cloud.xyz[order]
    cx = np.bincount(group_id, weights=xyz_sorted[:, 0]) / counts
    cy = np.bincount(group_id, weights=xyz_sorted[:, 1]) / counts
    cz = np.bincount(group_id, weights=xyz_sorted[:, 2]) / counts
    inten = np.bincount(group_id, weights=cloud.intensity[order]) / counts

    first_of_group = np.concatenate([[0], np.flatnonzero(boundaries) + 1])
    rings = cloud.ring[order][first_of_group]

    return replace(
        cloud,
        xyz=np.column_stack([cx, cy, cz]),
        intensity=inten,
        ring=rings,
    )


def interpolate_missing_frames(
    frames: list[PointCloudFrame],
    nominal_rate: float = 10.0,
    gap_factor: float = 1.5,
) -> list[PointCloudFrame]:
    """Fill timeline gaps with rigidly shifted copies of the earlier frame.

    A gap wider than ``gap_factor / nominal_rate`` is filled at the nominal
    period. The relative motion across the gap comes from ICP between the
    bracketing frames (on voxel-thinned copies); synthetic frames carry the
    ``interpolated`` flag so mapping can skip them for keyframes.
    """
    from .registration import trimmed_icp  # local import avoids a cycle

    if len(frames) < 2:
        raise PreconditionError("need at least 2 frames")
    dt_nominal = 1.0 / nominal_rate
    out: list[PointCloudFrame] = []
    for a, b in zip(frames[:-1], frames[1:]):
        out.append(a)
        gap = b.stamp - a.stamp
        n_missing = int(round(gap / dt_nominal)) - 1
        if gap <= gap_factor * dt_nominal or n_missing < 1:
            continue
        thin_a = voxel_downsample(a, 0.3)
        thin_b = voxel_downsample(b, 0.3)
        # motion of frame b's sensor expressed in frame a's sensor frame
        rel = trimmed_icp(thin_b.xyz, thin_a.xyz, trim_fraction=0.0).transform
        rv = quat_to_rotvec(rel.q)
        for j in range(1, n_missing + 1):
            u = j / (n_missing + 1)
            pose_u = PoseSE3(quat_from_rotvec(u * rv), u * rel.t)
            # points of the earlier frame moved backward into the synthetic
            # frame's own sensor coordinates
            synth = a.transformed(pose_u.inverse())
            synth.stamp = a.stamp + j * dt_nominal
            synth.interpolated = True
            out.append(synth)
    out.append(frames[-1])
    return out
