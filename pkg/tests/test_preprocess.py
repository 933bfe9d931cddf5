import json
import os

import numpy as np
import pytest

from signsynth.errors import DataError, ShapeError
from signsynth.model import load_bundle
from signsynth.preprocess import (
    DEFAULT_SUBSAMPLE,
    FaceBoxes,
    block_mean_resize,
    face_region_mask,
    pca_hand_reduce,
    preprocess_clip,
    subsample_frames,
)
from tests.oracles import box_union_area, pca_top_component

BOXES = FaceBoxes(left_eye=(2, 2, 6, 5), right_eye=(10, 2, 14, 5), mouth=(5, 8, 11, 12))


def test_subsample_deterministic_sorted_capped():
    clip = list(range(500))
    a = subsample_frames(clip, seed=3)
    b = subsample_frames(clip, seed=3)
    assert a == b
    assert a == sorted(a)
    assert len(a) == DEFAULT_SUBSAMPLE
    assert len(set(a)) == len(a)
    assert subsample_frames(clip, seed=4) != a
    short = subsample_frames(list(range(7)), seed=0)
    assert short == [0, 1, 2, 3, 4, 5, 6]
    with pytest.raises(DataError):
        subsample_frames([], seed=0)


def test_pca_matches_svd_oracle(rng):
    crop = rng.uniform(size=(6, 5, 3))
    proj, basis = pca_hand_reduce(crop)
    mean, comp, eig = pca_top_component(crop.reshape(-1, 3))
    assert np.allclose(basis.component, comp, atol=1e-10)
    assert abs(basis.eigenvalue - eig) < 1e-10
    assert np.allclose(basis.mean, mean, atol=1e-12)
    assert proj.shape == (6, 5, 1)
    # projection variance equals the top eigenvalue
    assert abs(proj.var() - basis.eigenvalue) < 1e-10


def test_pca_rank_one_exact_reconstruction(rng):
    direction = np.array([0.6, 0.0, 0.8])
    coeff = rng.standard_normal((8, 4, 1))
    crop = 0.5 + coeff * direction
    proj, basis = pca_hand_reduce(crop)
    assert not basis.degenerate
    rebuilt = basis.mean + proj * basis.component
    assert np.allclose(rebuilt, crop, atol=1e-10)


def test_pca_sign_convention(rng):
    crop = rng.uniform(size=(4, 4, 3))
    _, basis = pca_hand_reduce(crop)
    pivot = int(np.argmax(np.abs(basis.component)))
    assert basis.component[pivot] > 0.0
    assert abs(np.linalg.norm(basis.component) - 1.0) < 1e-12


def test_pca_degenerate_constant_crop():
    proj, basis = pca_hand_reduce(np.full((3, 3, 3), 0.25))
    assert basis.degenerate
    assert basis.eigenvalue == 0.0
    assert np.all(proj == 0.0)
    with pytest.raises(ShapeError):
        pca_hand_reduce(np.zeros((3, 3)))


def test_pca_row_permutation_invariance(rng):
    crop = rng.uniform(size=(6, 6, 3))
    _, a = pca_hand_reduce(crop)
    _, b = pca_hand_reduce(crop[::-1].copy())
    assert np.allclose(a.component, b.component, atol=1e-12)
    assert abs(a.eigenvalue - b.eigenvalue) < 1e-12


def test_face_mask_and_union_area(rng):
    frame = rng.uniform(0.1, 1.0, size=(16, 16, 3))
    out = face_region_mask(frame, BOXES)
    kept = int(np.count_nonzero(out[:, :, 0]))
    assert kept == box_union_area(BOXES.all_boxes())
    # idempotent
    assert np.array_equal(face_region_mask(out, BOXES), out)
    inside = out[2:5, 2:6]
    assert np.array_equal(inside, frame[2:5, 2:6])
    with pytest.raises(DataError):
        face_region_mask(frame, FaceBoxes(left_eye=(0, 0, 20, 2), right_eye=(0, 0, 1, 1), mouth=(0, 0, 1, 1)))


def test_face_boxes_parsing():
    d = {"left_eye": [2, 2, 6, 5], "right_eye": [10, 2, 14, 5], "mouth": [5, 8, 11, 12]}
    assert FaceBoxes.from_dict(d) == BOXES
    with pytest.raises(DataError):
        FaceBoxes.from_dict({"left_eye": [0, 0, 1, 1]})
    assert BOXES.scaled(2).mouth == (2, 4, 5, 6)


def test_block_mean_resize():
    frame = np.arange(16, dtype=np.float64).reshape(4, 4, 1)
    out = block_mean_resize(frame, (2, 2))
    assert out.shape == (2, 2, 1)
    assert out[0, 0, 0] == np.mean([0, 1, 4, 5])
    assert out[1, 1, 0] == np.mean([10, 11, 14, 15])
    with pytest.raises(DataError):
        block_mean_resize(frame, (3, 2))


def _write_png(path, arr):
    from PIL import Image

    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8)).save(path)


def _make_clip_dir(root, n=6, size=16):
    rng = np.random.default_rng(77)
    os.makedirs(root, exist_ok=True)
    names = []
    for k in range(n):
        name = f"frame_{k:03d}.png"
        _write_png(os.path.join(root, name), rng.uniform(size=(size, size, 3)))
        names.append(name)
    manifest = {
        "frames": names,
        "face_boxes": {"left_eye": [2, 2, 6, 5], "right_eye": [10, 2, 14, 5], "mouth": [5, 8, 11, 12]},
        "hand_boxes": [[[0, 8, 6, 14], [9, 9, 15, 15]] for _ in range(n)],
    }
    with open(os.path.join(root, "manifest.json"), "w") as fh:
        json.dump(manifest, fh)
    return manifest


def test_preprocess_clip_end_to_end(tmp_path):
    clip_dir = tmp_path / "clip"
    out_dir = tmp_path / "out"
    _make_clip_dir(str(clip_dir))
    sidecar = preprocess_clip(str(clip_dir), str(out_dir), n_frames=4, seed=5)
    assert len(sidecar["frame_indices"]) == 4
    assert sidecar["frame_indices"] == sorted(sidecar["frame_indices"])
    assert len(sidecar["pca"]) == 8  # 2 hands x 4 frames
    bundle = load_bundle(out_dir)
    assert bundle.target_clip.shape == (3, 4, 16, 16)
    assert bundle.hand_map[2].max() == 0.0  # only two hand channels used
    # face channel is zero outside the boxes
    mask = np.zeros((16, 16), dtype=bool)
    for x0, y0, x1, y1 in BOXES.all_boxes():
        mask[y0:y1, x0:x1] = True
    assert np.all(bundle.face_map[:, :, ~mask] == 0.0)
    # deterministic
    sidecar2 = preprocess_clip(str(clip_dir), str(tmp_path / "out2"), n_frames=4, seed=5)
    assert sidecar2["frame_indices"] == sidecar["frame_indices"]
    b2 = load_bundle(tmp_path / "out2")
    assert np.array_equal(b2.target_clip, bundle.target_clip)


def test_preprocess_clip_missing_manifest(tmp_path):
    with pytest.raises(DataError):
        preprocess_clip(str(tmp_path), str(tmp_path / "o"))


def test_preprocess_clip_resize(tmp_path):
    clip_dir = tmp_path / "clip"
    _make_clip_dir(str(clip_dir), n=3, size=32)
    sidecar = preprocess_clip(str(clip_dir), str(tmp_path / "out"), n_frames=3, seed=0, size=(16, 16))
    bundle = load_bundle(tmp_path / "out")
    assert bundle.target_clip.shape == (3, 3, 16, 16)
    assert sidecar["size"] == [16, 16]
