"""Synthetic loop sequences with known revisits and known two-view geometry.

Global descriptors follow a slowly drifting latent (an AR(1) walk), so
neighbouring frames look alike and distant ones do not. A revisit frame
copies the latent of its source frame plus noise, and re-observes the
source's 3D points through a second camera, so geometric verification has a
true fundamental matrix to find. Every other frame sees a fresh point cloud.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..formats import write_container, write_ground_truth
from ..frame_store import RawFrame
from ..geometry import fundamental_from_cameras


@dataclass
class SyntheticConfig:
    n_frames: int = 2000
    # (start, length, offset): frames start..start+length-1 revisit frame - offset
    revisits: Sequence[Tuple[int, int, int]] = ((1000, 800, 1000),)
    fps: float = 10.0
    psi: float = 40.0
    global_dim: int = 1280
    local_dim: int = 128
    latent_correlation: float = 0.9
    global_noise: float = 0.02
    locals_per_frame: int = 150
    overlap: float = 0.8
    bit_flip_rate: float = 0.05
    keypoint_noise: float = 0.5
    image_size: Tuple[int, int] = (640, 480)
    focal: float = 500.0
    depth_range: Tuple[float, float] = (4.0, 12.0)
    baseline_range: Tuple[float, float] = (0.3, 1.0)
    max_rotation_deg: float = 8.0
    descriptor_offset: float = 0.5
    gt_halfwidth: int = 0
    seed: int = 0

    @property
    def window(self) -> int:
        return math.ceil(self.psi * self.fps - 1e-9)

    def validate(self) -> None:
        if self.n_frames < 1:
            raise ValueError("n_frames must be positive")
        covered = set()
        for start, length, offset in self.revisits:
            if offset < self.window:
                raise ValueError(
                    f"revisit offset {offset} must be at least the exclusion window {self.window}"
                )
            if start - offset < 0 or start + length > self.n_frames or length < 1:
                raise ValueError(f"revisit segment {(start, length, offset)} does not fit the sequence")
            span = set(range(start, start + length))
            if span & covered:
                raise ValueError("revisit segments overlap")
            covered |= span
        if self.baseline_range[0] <= 0 or self.baseline_range[1] < self.baseline_range[0]:
            raise ValueError("invalid geometry: cameras would coincide (baseline must be positive)")
        if not 0 <= self.overlap <= 1 or not 0 <= self.bit_flip_rate < 0.5:
            raise ValueError("overlap must be in [0, 1] and bit_flip_rate in [0, 0.5)")


@dataclass
class SyntheticDataset:
    config: SyntheticConfig
    records: List[RawFrame]
    ground_truth: List[Tuple[int, int, int]]
    sources: Dict[int, int]  # revisit frame -> source frame
    # revisit frame t -> true F with x_t^T F x_source = 0
    fundamentals: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def fps(self) -> float:
        return self.config.fps

    def save(self, directory) -> Tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        data = directory / "descriptors.fild"
        gt = directory / "ground_truth.txt"
        write_container(data, self.records, self.config.global_dim, self.config.local_dim)
        write_ground_truth(gt, self.ground_truth)
        return data, gt


def _rotation(rng: np.random.Generator, max_deg: float) -> np.ndarray:
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = math.radians(max_deg) * rng.uniform(-1.0, 1.0)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * K @ K


class _Scene:
    def __init__(self, cfg: SyntheticConfig) -> None:
        w, h = cfg.image_size
        self.cfg = cfg
        self.K = np.array([[cfg.focal, 0, w / 2], [0, cfg.focal, h / 2], [0, 0, 1.0]])
        self.w, self.h = w, h

    def project(self, X: np.ndarray) -> np.ndarray:
        x = X @ self.K.T
        return x[:, :2] / x[:, 2:3]

    def inside(self, uv: np.ndarray, X: np.ndarray) -> np.ndarray:
        return (X[:, 2] > 0.5) & (uv[:, 0] >= 0) & (uv[:, 0] < self.w) & (uv[:, 1] >= 0) & (uv[:, 1] < self.h)

    def fresh_points(self, rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
        uv = np.column_stack([rng.uniform(0, self.w, n), rng.uniform(0, self.h, n)])
        depth = rng.uniform(*self.cfg.depth_range, n)
        rays = np.column_stack([uv, np.ones(n)]) @ np.linalg.inv(self.K).T
        return uv, rays * depth[:, None]


def generate_synthetic(config: Optional[SyntheticConfig] = None) -> SyntheticDataset:
    """Build a planted-loop sequence; see :class:`SyntheticConfig`."""
    cfg = config or SyntheticConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    scene = _Scene(cfg)
    D, d = cfg.global_dim, cfg.local_dim
    source_of: Dict[int, int] = {}
    for start, length, offset in cfg.revisits:
        for t in range(start, start + length):
            source_of[t] = t - offset

    desc_mean = cfg.descriptor_offset * np.abs(rng.standard_normal(d))
    noise_scale = math.tan(math.pi * cfg.bit_flip_rate)
    rho = cfg.latent_correlation

    latents: List[np.ndarray] = []
    points: List[np.ndarray] = []  # per frame, 3D points in that frame's camera
    appearance: List[np.ndarray] = []  # per frame, centred local descriptors
    records: List[RawFrame] = []
    fundamentals: Dict[int, np.ndarray] = {}
    walk = rng.standard_normal(D)

    for t in range(cfg.n_frames):
        src = source_of.get(t)
        walk = rho * walk + math.sqrt(1 - rho * rho) * rng.standard_normal(D)
        if src is None:
            g = walk.copy()
            uv, X = scene.fresh_points(rng, cfg.locals_per_frame)
            app = rng.standard_normal((cfg.locals_per_frame, d))
        else:
            base = latents[src]
            g = base + cfg.global_noise * np.linalg.norm(base) / math.sqrt(D) * rng.standard_normal(D)
            R = _rotation(rng, cfg.max_rotation_deg)
            direction = rng.standard_normal(3)
            direction[2] *= 0.3
            direction /= np.linalg.norm(direction)
            tvec = direction * rng.uniform(*cfg.baseline_range)
            Xs = points[src]
            keep = rng.random(Xs.shape[0]) < cfg.overlap
            Xt = Xs[keep] @ R.T + tvec
            uv_t = scene.project(Xt)
            vis = scene.inside(uv_t, Xt)
            src_app = appearance[src][keep][vis]
            norms = np.linalg.norm(src_app, axis=1, keepdims=True)
            noisy = src_app + noise_scale * norms / math.sqrt(d) * rng.standard_normal(src_app.shape)
            n_clutter = max(0, cfg.locals_per_frame - noisy.shape[0])
            uv_c, X_c = scene.fresh_points(rng, n_clutter)
            uv = np.vstack([uv_t[vis], uv_c])
            X = np.vstack([Xt[vis], X_c])
            app = np.vstack([noisy, rng.standard_normal((n_clutter, d))])
            order = rng.permutation(uv.shape[0])
            uv, X, app = uv[order], X[order], app[order]
            fundamentals[t] = fundamental_from_cameras(
                scene.K, np.eye(3), np.zeros(3), scene.K, R, tvec
            )
        latents.append(g)
        points.append(X)
        appearance.append(app)
        kp = uv + cfg.keypoint_noise * rng.standard_normal(uv.shape)
        kp = np.clip(kp, 0.0, [scene.w - 1e-3, scene.h - 1e-3])
        records.append(
            RawFrame(
                timestamp=t / cfg.fps,
                global_values=g.astype(np.float32),
                keypoints=kp.astype(np.float32),
                locals=(app + desc_mean).astype(np.float32),
            )
        )

    gt = []
    for t in sorted(source_of):
        s = source_of[t]
        gt.append((t, max(0, s - cfg.gt_halfwidth), s + cfg.gt_halfwidth))
    return SyntheticDataset(cfg, records, gt, source_of, fundamentals)
