"""Cheap adversarial streams for exclusion-window fuzzing.

Frames are views of a small set of "places". The place sequence mixes fresh
places, stationary repeats (lag 1) and returns to earlier places at any lag,
so many true loops sit inside the exclusion window.
"""

import numpy as np

from lcdstream.frame_store import RawFrame

from conftest import rotation


class PlaceStream:
    def __init__(self, seed, n_frames=10_000, D=16, d=8, K=16, p_stay=0.3, p_return=0.3):
        self.rng = np.random.default_rng(seed)
        self.n_frames, self.D, self.d, self.K = n_frames, D, d, K
        self.p_stay, self.p_return = p_stay, p_return
        self.Kmat = np.array([[400.0, 0, 320], [0, 400.0, 240], [0, 0, 1]])
        self.places = []

    def _new_place(self):
        rng = self.rng
        X = np.column_stack([rng.uniform(-1.5, 1.5, (self.K, 2)), rng.uniform(5, 8, self.K)])
        self.places.append((rng.standard_normal(self.D), rng.standard_normal((self.K, self.d)), X))
        return len(self.places) - 1

    def place_sequence(self):
        seq = [self._new_place()]
        for _ in range(self.n_frames - 1):
            u = self.rng.random()
            if u < self.p_stay:
                seq.append(seq[-1])
            elif u < self.p_stay + self.p_return:
                seq.append(seq[int(self.rng.integers(0, len(seq)))])
            else:
                seq.append(self._new_place())
        return seq

    def view(self, p, t):
        rng = self.rng
        g, L, X = self.places[p]
        R = rotation(rng, 3.0)
        tr = rng.uniform(-0.3, 0.3, 3)
        P = (X @ R.T + tr) @ self.Kmat.T
        kp = np.clip(P[:, :2] / P[:, 2:] + rng.normal(0, 0.3, (self.K, 2)), 0.0, None)
        return RawFrame(
            float(t), g + 0.01 * rng.standard_normal(self.D), kp, L + 0.05 * rng.standard_normal(L.shape)
        )

    def __iter__(self):
        for t, p in enumerate(self.place_sequence()):
            yield self.view(p, t)
