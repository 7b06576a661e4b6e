import numpy as np
import pytest

from lcdstream.geometry import fundamental_from_cameras


def rotation(rng, max_deg=10.0):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    ang = np.deg2rad(rng.uniform(-max_deg, max_deg))
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(ang) * K + (1 - np.cos(ang)) * K @ K


class TwoView:
    """Two pinhole cameras looking at a random 3D point cloud."""

    def __init__(self, seed=0, n=100, planar=False):
        rng = np.random.default_rng(seed)
        self.K = np.array([[500.0, 0, 320], [0, 500.0, 240], [0, 0, 1]])
        self.R1, self.t1 = np.eye(3), np.zeros(3)
        self.R2 = rotation(rng)
        self.t2 = rng.uniform(-1, 1, 3) * np.array([1.0, 0.3, 0.3])
        xy = rng.uniform(-3, 3, (n, 2))
        z = np.full(n, 8.0) if planar else rng.uniform(4, 12, n)
        self.X = np.column_stack([xy, z])
        self.x1 = self.project(self.R1, self.t1)
        self.x2 = self.project(self.R2, self.t2)
        self.F = fundamental_from_cameras(self.K, self.R1, self.t1, self.K, self.R2, self.t2)

    def project(self, R, t):
        P = (self.X @ R.T + t) @ self.K.T
        return P[:, :2] / P[:, 2:]


@pytest.fixture
def two_view():
    return TwoView


def epipolar_residual(F, x1, x2):
    h1 = np.column_stack([x1, np.ones(len(x1))])
    h2 = np.column_stack([x2, np.ones(len(x2))])
    return np.einsum("ni,ij,nj->n", h2, F, h1)
