"""Deterministic synthetic clips: two moving hand blobs and an oscillating face box.

Every draw comes from the spec seed, so a bundle is a pure function of its
spec.  Blob trajectories are validated to stay inside the frame with a
3-sigma margin.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .model import ModalityBundle
from .params import make_rng

BLOB_COLORS = ((0.80, 0.35, 0.20), (0.20, 0.40, 0.80))


@dataclass(frozen=True)
class SyntheticClipSpec:
    size: int = 32
    frames: int = 8
    seed: int = 0
    blob_sigma: float = 2.5
    osc_amp: float = 0.2  # face-region oscillation amplitude
    background: float = 0.15

    def __post_init__(self):
        if self.frames < 1:
            raise DataError(f"frames must be >= 1, got {self.frames}")
        if not 0.0 <= self.osc_amp <= 0.5:
            raise DataError(f"osc_amp must lie in [0, 0.5], got {self.osc_amp}")
        if not 0.0 <= self.background <= 1.0:
            raise DataError(f"background must lie in [0, 1], got {self.background}")


@dataclass(frozen=True)
class BlobTrack:
    base_y: float
    base_x: float
    amp_y: float
    amp_x: float
    freq: float
    phase_y: float
    phase_x: float

    def center(self, k, frames):
        ang = 2.0 * math.pi * self.freq * k / frames
        return (
            self.base_y + self.amp_y * math.sin(ang + self.phase_y),
            self.base_x + self.amp_x * math.cos(ang + self.phase_x),
        )


@dataclass(frozen=True)
class ClipLayout:
    blobs: tuple
    face_box: tuple  # (y0, y1, x0, x1), half-open
    face_phase: float
    wavelength: float
    dot_sigma: float


def clip_layout(spec):
    """Draw all trajectory and pattern parameters for a spec."""
    rng = make_rng("synthetic-clip", spec.seed)
    margin = 3.0 * spec.blob_sigma
    blobs = []
    for _ in range(2):
        amp_y = rng.uniform(2.0, 6.0)
        amp_x = rng.uniform(2.0, 6.0)
        lo_y, hi_y = margin + amp_y, spec.size - 1 - margin - amp_y
        lo_x, hi_x = margin + amp_x, spec.size - 1 - margin - amp_x
        if lo_y > hi_y or lo_x > hi_x:
            raise DataError(
                f"frame size {spec.size} too small for blob sigma {spec.blob_sigma}: "
                "trajectory would exit the frame"
            )
        blobs.append(
            BlobTrack(
                base_y=rng.uniform(lo_y, hi_y),
                base_x=rng.uniform(lo_x, hi_x),
                amp_y=amp_y,
                amp_x=amp_x,
                freq=rng.uniform(0.5, 1.5),
                phase_y=rng.uniform(0.0, 2.0 * math.pi),
                phase_x=rng.uniform(0.0, 2.0 * math.pi),
            )
        )
    face_box = (spec.size // 4, spec.size // 2, spec.size // 4, (3 * spec.size) // 4)
    layout = ClipLayout(
        blobs=tuple(blobs),
        face_box=face_box,
        face_phase=rng.uniform(0.0, 2.0 * math.pi),
        wavelength=8.0,
        dot_sigma=1.2,
    )
    _validate_layout(layout, spec)
    return layout


def _validate_layout(layout, spec):
    margin = 3.0 * spec.blob_sigma
    for blob in layout.blobs:
        for k in range(spec.frames):
            cy, cx = blob.center(k, spec.frames)
            if not (margin <= cy <= spec.size - 1 - margin and margin <= cx <= spec.size - 1 - margin):
                raise DataError(f"blob trajectory exits the frame at frame {k}: center ({cy}, {cx})")


def face_pattern(layout, spec, k, yy, xx):
    """Oscillating stripe pattern inside the face box, in [0.5 - amp, 0.5 + amp]."""
    y0, _, x0, _ = layout.face_box
    phase = (
        2.0 * math.pi * ((yy - y0) + (xx - x0)) / layout.wavelength
        + 2.0 * math.pi * k / spec.frames
        + layout.face_phase
    )
    return 0.5 + spec.osc_amp * np.sin(phase)


def generate_synthetic_bundle(spec):
    layout = clip_layout(spec)
    n, size = spec.frames, spec.size
    yy, xx = np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing="ij")

    target = np.full((3, n, size, size), spec.background)
    pose = np.zeros((3, n, size, size))
    hand = np.zeros((3, n, size, size))
    face = np.zeros((3, n, size, size))

    y0, y1, x0, x1 = layout.face_box
    for k in range(n):
        pattern = face_pattern(layout, spec, k, yy[y0:y1, x0:x1], xx[y0:y1, x0:x1])
        target[:, k, y0:y1, x0:x1] = pattern
        # The face modality is the bare masked pattern: blobs sweeping close
        # to the box leave their paint in the target but not in this cue.
        face[:, k, y0:y1, x0:x1] = pattern

        for blob, color in zip(layout.blobs, BLOB_COLORS):
            cy, cx = blob.center(k, n)
            r2 = (yy - cy) ** 2 + (xx - cx) ** 2
            bump = np.exp(-r2 / (2.0 * spec.blob_sigma**2))
            for ch in range(3):
                target[ch, k] += color[ch] * bump

        for i, blob in enumerate(layout.blobs):
            cy, cx = blob.center(k, n)
            r2 = (yy - cy) ** 2 + (xx - cx) ** 2
            pose[i, k] = np.exp(-r2 / (2.0 * layout.dot_sigma**2))
            hand[i, k] = (r2 < (2.0 * spec.blob_sigma) ** 2).astype(np.float64)

        fy, fx = (y0 + y1 - 1) / 2.0, (x0 + x1 - 1) / 2.0
        r2 = (yy - fy) ** 2 + (xx - fx) ** 2
        pose[2, k] = np.exp(-r2 / (2.0 * layout.dot_sigma**2))

    np.clip(target, 0.0, 1.0, out=target)

    return ModalityBundle(
        pose_map=pose,
        hand_map=hand,
        face_map=face,
        reference_image=target[:, 0].copy(),
        target_clip=target,
    ).validate()


class SyntheticDataset:
    """Indexable dataset of per-index bundles derived from one base spec."""

    def __init__(self, spec, count):
        if count < 1:
            raise DataError(f"count must be >= 1, got {count}")
        self.spec = spec
        self.count = count
        self._cache = {}

    def __len__(self):
        return self.count

    def __getitem__(self, i):
        if not 0 <= i < self.count:
            raise IndexError(i)
        if i not in self._cache:
            item_spec = SyntheticClipSpec(
                size=self.spec.size,
                frames=self.spec.frames,
                seed=self.spec.seed * 100003 + i,
                blob_sigma=self.spec.blob_sigma,
                osc_amp=self.spec.osc_amp,
                background=self.spec.background,
            )
            self._cache[i] = generate_synthetic_bundle(item_spec)
        return self._cache[i]
