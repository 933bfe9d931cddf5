"""Frozen orthonormal patch codec between pixel space and the latent grid.

Non-overlapping p x p patches of each frame are flattened (channel, dy, dx)
and rotated by a seeded orthonormal matrix, one latent channel per basis
vector.  The map is an isometry, so decode(encode(x)) == x up to float64
rounding and squared pixel distances equal squared latent distances.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .params import make_rng


@dataclass(frozen=True)
class LatentCodec:
    patch: int
    c_img: int
    matrix: np.ndarray  # (c_lat, c_lat), orthonormal rows

    @classmethod
    def from_seed(cls, patch, c_img, seed):
        if patch < 1 or c_img < 1:
            raise ShapeError(f"patch {patch} and c_img {c_img} must be positive")
        n = patch * patch * c_img
        rng = make_rng("latent-codec", seed)
        q, r = np.linalg.qr(rng.standard_normal((n, n)))
        q = q * np.sign(np.diag(r))  # unique orientation
        q.flags.writeable = False
        return cls(patch=patch, c_img=c_img, matrix=q)

    @property
    def c_lat(self):
        return self.patch * self.patch * self.c_img

    def encode(self, x):
        """(c_img, H, W) -> (c_lat, h, w) or (c_img, t, H, W) -> (c_lat, t, h, w)."""
        squeeze = x.ndim == 3
        clip = x[:, None] if squeeze else x
        if clip.ndim != 4 or clip.shape[0] != self.c_img:
            raise ShapeError(f"codec expects {self.c_img} image channels, got shape {x.shape}")
        c, t, hh, ww = clip.shape
        p = self.patch
        if hh % p or ww % p:
            raise ShapeError(f"extents {hh}x{ww} not divisible by patch {p}")
        h, w = hh // p, ww // p
        # (c, t, h, p, w, p) -> (t, h, w, c*p*p) patch vectors.
        vecs = clip.reshape(c, t, h, p, w, p).transpose(1, 2, 4, 0, 3, 5).reshape(t, h, w, c * p * p)
        z = np.tensordot(vecs, self.matrix, axes=([3], [1])).transpose(3, 0, 1, 2)
        return z[:, 0] if squeeze else z

    def decode(self, z):
        """Inverse of encode; the transpose undoes the orthonormal rotation."""
        squeeze = z.ndim == 3
        lat = z[:, None] if squeeze else z
        if lat.ndim != 4 or lat.shape[0] != self.c_lat:
            raise ShapeError(f"codec expects {self.c_lat} latent channels, got shape {z.shape}")
        _, t, h, w = lat.shape
        p = self.patch
        vecs = np.tensordot(lat.transpose(1, 2, 3, 0), self.matrix, axes=([3], [0]))
        clip = (
            vecs.reshape(t, h, w, self.c_img, p, p)
            .transpose(3, 0, 1, 4, 2, 5)
            .reshape(self.c_img, t, h * p, w * p)
        )
        return clip[:, 0] if squeeze else clip
