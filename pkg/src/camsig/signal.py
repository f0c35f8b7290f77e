"""Control-signal construction: trajectory channels, motion strength, packing.

The dense control signal is the projected trajectory of the first frame's
points rigidly transported by each frame's motion (two absolute-pixel
channels) plus a per-frame scalar motion strength tiled to a third channel.
Training-side signals come from trajectory fields; inference-side signals
come from a first-frame depth map, a user camera path, and a user strength.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from camsig.campath import CameraPath
from camsig.geometry import Intrinsics, RigidMotion, Z_MIN, unproject
from camsig.trajfield import ResidualField, TrajectoryField, _check_motions, grid_sample_uv


@dataclass(eq=False)
class TrajectoryChannels:
    """(T, 2, H, W) projected point positions, channel 0 = u, channel 1 = v.

    Entries whose transported point leaves the view frustum hold the last
    valid frame's value and are flagged invalid in `valid` (T, H, W).
    """

    channels: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.channels.ndim != 4 or self.channels.shape[1] != 2:
            raise ValueError("channels must have shape (T, 2, H, W)")
        t, _, h, w = self.channels.shape
        if self.valid.shape != (t, h, w):
            raise ValueError("validity shape does not match channels")


@dataclass(eq=False)
class MotionStrengthSeries:
    """Per-frame mean residual speed; m[0] is exactly zero.

    `no_overlap` flags frames where no point was valid at both the frame and
    its predecessor; the strength is forced to zero there.
    """

    m: np.ndarray
    no_overlap: np.ndarray

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.no_overlap = np.asarray(self.no_overlap, dtype=bool)
        if self.m.ndim != 1 or self.no_overlap.shape != self.m.shape:
            raise ValueError("strength series must be 1-D with matching flags")
        if self.m[0] != 0.0:
            raise ValueError("frame-0 motion strength must be zero")
        if np.any(self.m < 0.0):
            raise ValueError("motion strength must be non-negative")


@dataclass(eq=False)
class ControlTensor:
    """(T, 3, H, W) packed control signal: u, v, tiled motion strength.

    `last_frame_valid` carries the frustum mask of the final frame's
    channels, matching what the binary format stores.
    """

    data: np.ndarray
    last_frame_valid: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.last_frame_valid = np.asarray(self.last_frame_valid, dtype=bool)
        if self.data.ndim != 4 or self.data.shape[1] != 3:
            raise ValueError("control tensor must have shape (T, 3, H, W)")
        if self.last_frame_valid.shape != self.data.shape[2:]:
            raise ValueError("validity mask shape does not match tensor")

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]


def _transport_channels(p0, motions, k: Intrinsics, grid_h, grid_w) -> TrajectoryChannels:
    """Project rigid transports of the frame-0 points for every frame."""
    t = len(motions)
    rot = np.stack([m.rotation for m in motions])
    tr = np.stack([m.translation for m in motions])
    q = np.einsum("tij,nj->tni", rot, p0) + tr[:, None, :]
    z = q[..., 2]
    front = z >= Z_MIN
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * q[..., 0] / z + k.cx
        v = k.fy * q[..., 1] / z + k.cy
    # Frustum: in front of the camera and inside the image footprint (pixel
    # areas extend half a pixel beyond the centers).
    valid = (
        front
        & (u >= -0.5)
        & (u <= k.width - 0.5)
        & (v >= -0.5)
        & (v <= k.height - 0.5)
    )
    uv = np.stack([u, v], axis=-1)  # (T, N, 2)
    # Hold the last valid value for out-of-frustum entries.
    last = uv[0].copy()
    for lam in range(t):
        bad = ~valid[lam]
        uv[lam][bad] = last[bad]
        if lam > 0:
            ok = valid[lam]
            last[ok] = uv[lam][ok]
    channels = uv.transpose(0, 2, 1).reshape(t, 2, grid_h, grid_w)
    return TrajectoryChannels(channels, valid.reshape(t, grid_h, grid_w))


def point_trajectory(field: TrajectoryField, motions: Sequence[RigidMotion]) -> TrajectoryChannels:
    """Trajectory channels of the field's frame-0 grid under the motions."""
    _check_motions(motions, field.num_frames)
    return _transport_channels(
        field.positions[0], list(motions), field.intrinsics, field.grid_h, field.grid_w
    )


def motion_strength(g: ResidualField) -> MotionStrengthSeries:
    """Mean residual speed per frame: adjacent-frame residual differences.

    Frame 0 is zero by definition; each later frame averages the residual
    step length over points valid at both the frame and its predecessor.
    """
    t = g.num_frames
    m = np.zeros(t)
    no_overlap = np.zeros(t, dtype=bool)
    for lam in range(1, t):
        both = g.valid[lam] & g.valid[lam - 1]
        if not both.any():
            no_overlap[lam] = True
            continue
        step = g.g[lam][both] - g.g[lam - 1][both]
        m[lam] = float(np.linalg.norm(step, axis=1).mean())
    return MotionStrengthSeries(m, no_overlap)


def pack_tensor(traj: TrajectoryChannels, m: MotionStrengthSeries) -> ControlTensor:
    """Concatenate trajectory channels with the tiled strength channel."""
    t = traj.channels.shape[0]
    if m.m.shape[0] != t:
        raise ValueError("frame count mismatch between channels and strength")
    data = np.empty((t, 3) + traj.channels.shape[2:])
    data[:, :2] = traj.channels
    data[:, 2] = m.m[:, None, None]
    return ControlTensor(data, traj.valid[-1].copy())


def unpack_tensor(ct: ControlTensor) -> tuple[np.ndarray, np.ndarray]:
    """Split a packed tensor back into (T, 2, H, W) channels and (T,) strength."""
    strength_channel = ct.data[:, 2]
    m = strength_channel[:, 0, 0].copy()
    if np.any(strength_channel != m[:, None, None]):
        raise ValueError("strength channel is not constant per frame")
    return ct.data[:, :2].copy(), m


def build_inference_signal(
    depth0: np.ndarray, k: Intrinsics, path: CameraPath, m_user: float
) -> ControlTensor:
    """Inference-side control tensor from a depth map, path, and strength.

    The point set is every pixel center of depth0 lifted at its depth; the
    user strength is applied uniformly to frames 1..T-1 with frame 0 zero.
    """
    depth = np.asarray(depth0, dtype=float)
    if depth.ndim != 2:
        raise ValueError("depth map must be 2-D")
    h, w = depth.shape
    if (h, w) != (k.height, k.width):
        raise ValueError("depth map dimensions do not match intrinsics")
    bad = np.argwhere(depth <= 0.0)
    if bad.size:
        i, j = bad[0]
        raise ValueError(f"non-positive depth at pixel (row {i}, col {j})")
    if m_user < 0.0:
        raise ValueError("motion strength must be non-negative")

    uv = grid_sample_uv(h, w, k)
    p0 = unproject(uv, depth.ravel(), k)
    traj = _transport_channels(p0, path.motions, k, h, w)
    m = np.full(len(path), float(m_user))
    m[0] = 0.0
    return pack_tensor(traj, MotionStrengthSeries(m, np.zeros(len(path), dtype=bool)))


def normalize_tensor(ct: ControlTensor, k: Intrinsics) -> ControlTensor:
    """Map the pixel-coordinate channels to [-1, 1]; presentation only."""
    data = ct.data.copy()
    data[:, 0] = 2.0 * data[:, 0] / (k.width - 1.0) - 1.0
    data[:, 1] = 2.0 * data[:, 1] / (k.height - 1.0) - 1.0
    return ControlTensor(data, ct.last_frame_valid.copy())
