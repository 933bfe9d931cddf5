"""Clip preprocessing: frame subsampling, per-crop PCA, and face-region masking.

Pixel data here is channel-last float64 in [0, 1] (the PNG layout); the
pipeline converts to channel-first modality bundles at the end.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .model import ModalityBundle, save_bundle
from .params import make_rng

DEFAULT_SUBSAMPLE = 120


def subsample_frames(clip, n=DEFAULT_SUBSAMPLE, seed=0):
    """Uniform draw without replacement of at most n frame indices, sorted.

    ``clip`` may be an array with time as the leading axis or any sized
    sequence of frames.
    """
    total = len(clip)
    if total < 1:
        raise DataError("cannot subsample an empty clip")
    take = min(n, total)
    rng = make_rng("frame-subsample", seed)
    idx = rng.choice(total, size=take, replace=False)
    return sorted(int(i) for i in idx)


@dataclass(frozen=True)
class PcaBasis:
    mean: np.ndarray  # (c,)
    component: np.ndarray  # (c,), unit norm
    eigenvalue: float
    degenerate: bool


def pca_hand_reduce(crop):
    """Project a (h, w, c) crop onto the top eigenvector of its pixel covariance.

    Returns (projection (h, w, 1), PcaBasis).  The component sign is fixed
    by making its largest-magnitude entry positive; a constant crop yields
    a zero projection with the degenerate flag set.
    """
    if crop.ndim != 3:
        raise ShapeError(f"crop must be (h, w, c), got {crop.shape}")
    h, w, c = crop.shape
    pixels = crop.reshape(-1, c).astype(np.float64)
    mean = pixels.mean(axis=0)
    centered = pixels - mean
    cov = centered.T @ centered / pixels.shape[0]
    if np.trace(cov) <= 1e-24:
        basis = PcaBasis(mean=mean, component=np.zeros(c), eigenvalue=0.0, degenerate=True)
        return np.zeros((h, w, 1)), basis
    eigvals, eigvecs = np.linalg.eigh(cov)
    component = eigvecs[:, -1]
    pivot = int(np.argmax(np.abs(component)))
    if component[pivot] < 0.0:
        component = -component
    projection = centered @ component
    basis = PcaBasis(mean=mean, component=component, eigenvalue=float(eigvals[-1]), degenerate=False)
    return projection.reshape(h, w, 1), basis


@dataclass(frozen=True)
class FaceBoxes:
    """Half-open pixel boxes (x0, y0, x1, y1); x indexes columns, y rows."""

    left_eye: tuple
    right_eye: tuple
    mouth: tuple

    def all_boxes(self):
        return (self.left_eye, self.right_eye, self.mouth)

    def validate(self, height, width):
        for name, box in zip(("left_eye", "right_eye", "mouth"), self.all_boxes()):
            x0, y0, x1, y1 = box
            if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
                raise DataError(f"{name} box {box} out of bounds for {width}x{height}")
        return self

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                left_eye=tuple(int(v) for v in d["left_eye"]),
                right_eye=tuple(int(v) for v in d["right_eye"]),
                mouth=tuple(int(v) for v in d["mouth"]),
            )
        except KeyError as exc:
            raise DataError(f"face_boxes missing key {exc}") from exc

    def scaled(self, factor):
        def s(box):
            return tuple(v // factor for v in box)

        return FaceBoxes(left_eye=s(self.left_eye), right_eye=s(self.right_eye), mouth=s(self.mouth))


def face_region_mask(frame, boxes):
    """Zero a (h, w, c) frame outside the union of the eye and mouth boxes."""
    if frame.ndim != 3:
        raise ShapeError(f"frame must be (h, w, c), got {frame.shape}")
    h, w, _ = frame.shape
    boxes.validate(h, w)
    out = np.zeros_like(frame)
    for x0, y0, x1, y1 in boxes.all_boxes():
        out[y0:y1, x0:x1] = frame[y0:y1, x0:x1]
    return out


def block_mean_resize(frame, size):
    """Integer-factor area downscale of a (h, w, c) frame."""
    h, w, c = frame.shape
    th, tw = size
    if th < 1 or tw < 1 or h % th or w % tw:
        raise DataError(f"cannot resize {h}x{w} to {th}x{tw}: non-integer factor")
    fh, fw = h // th, w // tw
    return frame.reshape(th, fh, tw, fw, c).mean(axis=(1, 3))


def _load_png(path):
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def _load_mask_png(path):
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return arr


def load_clip_manifest(clip_dir):
    path = os.path.join(clip_dir, "manifest.json")
    if not os.path.exists(path):
        raise DataError(f"no manifest.json in {clip_dir}")
    with open(path) as fh:
        manifest = json.load(fh)
    if "frames" not in manifest or not manifest["frames"]:
        raise DataError(f"{path}: manifest must list frames")
    if "face_boxes" not in manifest:
        raise DataError(f"{path}: manifest must provide face_boxes")
    return manifest


def preprocess_clip(clip_dir, out_dir, n_frames=DEFAULT_SUBSAMPLE, seed=0, size=None):
    """Turn a directory of PNG frames plus manifest into a modality bundle.

    Writes SGT1 tensors and a JSON sidecar recording the seed, kept frame
    indices, and per-crop PCA bases.  Returns the sidecar dict.
    """
    manifest = load_clip_manifest(clip_dir)
    frame_files = manifest["frames"]
    indices = subsample_frames(frame_files, n_frames, seed)

    factor = 1
    frames = []
    for i in indices:
        frame = _load_png(os.path.join(clip_dir, frame_files[i]))
        if size is not None:
            factor = frame.shape[0] // size[0]
            frame = block_mean_resize(frame, size)
        frames.append(frame)
    frames = np.stack(frames)  # (t, h, w, c)
    t, h, w, c = frames.shape

    mask_files = manifest.get("person_masks")
    if mask_files:
        if len(mask_files) != len(frame_files):
            raise DataError("person_masks length does not match frames")
        masks = []
        for i in indices:
            m = _load_mask_png(os.path.join(clip_dir, mask_files[i]))
            if size is not None:
                m = block_mean_resize(m[..., None], size)[..., 0]
            masks.append(m)
        masks = np.stack(masks)
        frames = frames * masks[..., None]
    else:
        masks = None

    face_boxes = FaceBoxes.from_dict(manifest["face_boxes"])
    if factor > 1:
        face_boxes = face_boxes.scaled(factor)
    face = np.stack([face_region_mask(frames[k], face_boxes) for k in range(t)])

    hand = np.zeros_like(frames)
    pca_records = []
    hand_boxes = manifest.get("hand_boxes")
    if hand_boxes is not None:
        if len(hand_boxes) != len(frame_files):
            raise DataError("hand_boxes length does not match frames")
        for k, i in enumerate(indices):
            for hand_idx, box in enumerate(hand_boxes[i]):
                if hand_idx > 2:
                    raise DataError("at most 3 hand boxes per frame are supported")
                x0, y0, x1, y1 = (v // factor for v in box)
                if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
                    raise DataError(f"hand box {box} out of bounds at frame {i}")
                proj, basis = pca_hand_reduce(frames[k, y0:y1, x0:x1])
                lo, hi = float(proj.min()), float(proj.max())
                scaled = np.zeros_like(proj) if hi <= lo else (proj - lo) / (hi - lo)
                hand[k, y0:y1, x0:x1, hand_idx] = scaled[..., 0]
                pca_records.append(
                    {
                        "frame": int(i),
                        "hand": hand_idx,
                        "mean": basis.mean.tolist(),
                        "component": basis.component.tolist(),
                        "eigenvalue": basis.eigenvalue,
                        "degenerate": basis.degenerate,
                        "lo": lo,
                        "hi": hi,
                    }
                )

    pose_files = manifest.get("pose_maps")
    if pose_files:
        if len(pose_files) != len(frame_files):
            raise DataError("pose_maps length does not match frames")
        pose = []
        for i in indices:
            p = _load_png(os.path.join(clip_dir, pose_files[i]))
            if size is not None:
                p = block_mean_resize(p, size)
            pose.append(p)
        pose = np.stack(pose)
        pose_source = "pose_maps"
    elif masks is not None:
        pose = np.repeat(masks[..., None], 3, axis=3)
        pose_source = "person_masks"
    else:
        pose = np.zeros_like(frames)
        pose_source = "none"

    ref_file = manifest.get("reference")
    if ref_file:
        reference = _load_png(os.path.join(clip_dir, ref_file))
        if size is not None:
            reference = block_mean_resize(reference, size)
    else:
        reference = frames[0]

    def to_cf(x):  # (t, h, w, c) -> (c, t, h, w)
        return np.ascontiguousarray(x.transpose(3, 0, 1, 2))

    bundle = ModalityBundle(
        pose_map=np.clip(to_cf(pose), 0.0, 1.0),
        hand_map=np.clip(to_cf(hand), 0.0, 1.0),
        face_map=np.clip(to_cf(face), 0.0, 1.0),
        reference_image=np.clip(np.ascontiguousarray(reference.transpose(2, 0, 1)), 0.0, 1.0),
        target_clip=np.clip(to_cf(frames), 0.0, 1.0),
    ).validate()
    save_bundle(out_dir, bundle)

    sidecar = {
        "seed": seed,
        "subsample": n_frames,
        "frame_indices": indices,
        "pose_source": pose_source,
        "pca": pca_records,
        "size": list(size) if size is not None else None,
    }
    with open(os.path.join(out_dir, "sidecar.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    return sidecar
