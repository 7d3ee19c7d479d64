import json
from collections import Counter

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import ndimage

from app.core.errors import ImageIOError, InvalidArgumentError
from app.models.blur_map import FGBG_LEVELS, NUM_BLUR_LEVELS, radius_class
from app.models.edge_map import EdgeMap
from app.schemas.dataset import FgBgRecipe, ManifestRecord
from app.services.datagen_service import (
    alpha_contour,
    augment_rotate,
    build_blur_dataset,
    build_fgbg_dataset,
    build_manifest,
    build_pattern_dataset,
    edge_class_labels,
    enumerate_fgbg_pairs,
    load_patch_dataset,
    read_manifest,
    synth_fgbg,
    synth_pattern_field,
    synth_uniform,
)
from app.services.image_service import disk_kernel
from app.services.io_service import read_bmap
from conftest import SQUARE, fgbg_recipe, stripes


def smooth_image(h: int = 64, w: int = 64) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return 0.5 + 0.25 * np.sin(0.15 * yy) * np.cos(0.1 * xx)


def test_uniform_levels(rng):
    sharp = rng.uniform(size=(20, 20, 3))
    blurry, gt = synth_uniform(sharp, 1)
    assert blurry.shape == sharp.shape and np.all(gt == 0.5)
    _, gt = synth_uniform(sharp, NUM_BLUR_LEVELS)
    assert np.all(gt == 6.0)
    flat = np.full((20, 20, 3), 0.4)
    assert np.allclose(synth_uniform(flat, 11)[0], flat)


def test_uniform_top_level_matches_direct_disk_sum():
    sharp = np.full((40, 40, 1), 0.2)
    sharp[:, 20:] = 0.8
    blurry, gt = synth_uniform(sharp, NUM_BLUR_LEVELS)
    assert np.all(gt == 6.0)

    kernel = disk_kernel(6.0)
    half = kernel.shape[0] // 2
    padded = np.pad(sharp[:, :, 0], half, mode="symmetric")
    row = 20
    for x in range(40):
        window = padded[row:row + 2 * half + 1, x:x + 2 * half + 1]
        expected = float(np.sum(kernel[::-1, ::-1] * window))
        assert abs(blurry[row, x, 0] - expected) < 1e-12
    assert np.allclose(blurry[:, :13, 0], 0.2) and np.allclose(blurry[:, 27:, 0], 0.8)
    assert np.all(np.diff(blurry[row, :, 0]) >= -1e-12)


@pytest.mark.parametrize("level", [0, 24, 1.5])
def test_uniform_rejects_bad_levels(level):
    with pytest.raises(InvalidArgumentError):
        synth_uniform(np.zeros((20, 20)), level)


def test_fgbg_ground_truth(fgbg_scene):
    inner = slice(SQUARE.start + 2, SQUARE.stop - 2)
    assert np.allclose(fgbg_scene.gt[inner, inner], 1.0)
    assert np.allclose(fgbg_scene.gt[:SQUARE.start - 2], 5.0)
    assert np.all((fgbg_scene.gt >= 1.0 - 1e-12) & (fgbg_scene.gt <= 5.0 + 1e-12))
    assert 0.0 <= fgbg_scene.composite.min() and fgbg_scene.composite.max() <= 1.0


def test_fgbg_depth_contour_traces_the_mask(fgbg_scene):
    depth = fgbg_scene.depth_gt.edges
    ys, xs = np.nonzero(depth)
    assert ys.min() == SQUARE.start and ys.max() == SQUARE.stop - 1
    assert xs.min() == SQUARE.start and xs.max() == SQUARE.stop - 1
    assert not depth[SQUARE.start + 1:SQUARE.stop - 1, SQUARE.start + 1:SQUARE.stop - 1].any()


def test_sharp_foreground_is_pasted_unchanged():
    recipe = fgbg_recipe(k1=0, k2=2)
    result = synth_fgbg(recipe)
    assert np.array_equal(result.composite[SQUARE, SQUARE], recipe.salient[SQUARE, SQUARE])
    assert np.array_equal(result.alpha, recipe.mask.astype(np.float64))


def test_fgbg_composite_blends_blurred_layers_by_alpha():
    size = 40
    mask = np.zeros((size, size), dtype=bool)
    mask[10:30, 10:30] = True
    recipe = FgBgRecipe(salient=np.full((size, size, 1), 0.9), mask=mask,
                        background=np.full((size, size, 1), 0.1), k1=1, k2=3)
    result = synth_fgbg(recipe)

    r1, r2 = recipe.radii
    m = mask.astype(np.float64)
    alpha = ndimage.convolve(m, disk_kernel(r1), mode="reflect")
    spread = ndimage.convolve(0.9 * m, disk_kernel(r1), mode="reflect")
    back = ndimage.convolve(np.full((size, size), 0.1), disk_kernel(r2), mode="reflect")
    expected = np.clip(alpha * spread + (1.0 - alpha) * back, 0.0, 1.0)

    boundary = (alpha > 0.05) & (alpha < 0.95)
    assert boundary.any()
    assert np.allclose(result.composite[:, :, 0], expected, atol=1e-12)
    assert np.allclose(result.composite[15:25, 15:25, 0], 0.9)
    assert np.allclose(result.composite[:5, :5, 0], 0.1)


def test_recipe_validation():
    recipe = fgbg_recipe()
    with pytest.raises(ValidationError):
        FgBgRecipe(salient=recipe.salient, mask=recipe.mask, background=recipe.background, k1=2, k2=1)
    with pytest.raises(ValidationError):
        FgBgRecipe(salient=recipe.salient, mask=np.full(recipe.mask.shape, 0.5),
                   background=recipe.background, k1=0, k2=1)


def test_six_fgbg_pairs():
    pairs = enumerate_fgbg_pairs()
    assert len(pairs) == 6
    assert all(FGBG_LEVELS[a] < FGBG_LEVELS[b] for a, b in pairs)


def test_alpha_contour_is_inner_boundary():
    alpha = np.zeros((7, 7))
    alpha[2:5, 2:5] = 1.0
    contour = alpha_contour(alpha)
    assert contour.sum() == 8 and not contour[3, 3]


def test_gradual_field_increases_left_to_right(rng):
    blurry, gt = synth_pattern_field(rng.uniform(size=(16, 24, 3)), "gradual")
    assert gt[0, 0] == 0.5 and gt[0, -1] == 6.0
    assert np.all(np.diff(gt[0]) > 0) and np.all(gt == gt[0])
    assert blurry.shape == (16, 24, 3)


def test_stepwise_field_has_four_bands(rng):
    _, gt = synth_pattern_field(rng.uniform(size=(8, 20)), "stepwise", level=3)
    assert sorted(np.unique(gt).tolist()) == [1.0, 1.25, 1.5, 1.75]
    assert np.all(np.diff(gt[0]) >= 0)
    with pytest.raises(InvalidArgumentError):
        synth_pattern_field(rng.uniform(size=(8, 3)), "stepwise")
    with pytest.raises(InvalidArgumentError):
        synth_pattern_field(rng.uniform(size=(8, 20)), "stepwise", level=21)


def test_right_angle_rotations_are_permutations(rng):
    img = rng.uniform(size=(9, 9, 3))
    assert np.array_equal(augment_rotate(img, 180), img[::-1, ::-1])
    assert np.allclose(augment_rotate(img, -90), ndimage.rotate(img, -90, reshape=False, order=1), atol=1e-12)
    labels = rng.integers(0, 3, size=(9, 9)).astype(np.uint8)
    assert np.array_equal(np.sort(augment_rotate(labels, -90).ravel()), np.sort(labels.ravel()))


def test_clockwise_quarter_turn_of_a_two_by_three_raster():
    img = np.arange(6).reshape(2, 3)
    out = augment_rotate(img, -90)
    assert out.tolist() == [[3, 0], [4, 1], [5, 2]]
    h = img.shape[0]
    for r in range(3):
        for c in range(2):
            assert out[r, c] == img[h - 1 - c, r]


def test_oblique_rotation_follows_the_analytic_map():
    img = smooth_image()
    out = augment_rotate(img, 60)
    theta = np.deg2rad(60)
    center = (np.array(img.shape) - 1) / 2
    rr, cc = np.mgrid[0:64, 0:64].astype(np.float64)
    dr, dc = rr - center[0], cc - center[1]
    src_r = center[0] + np.cos(theta) * dr + np.sin(theta) * dc
    src_c = center[1] - np.sin(theta) * dr + np.cos(theta) * dc
    expected = 0.5 + 0.25 * np.sin(0.15 * src_r) * np.cos(0.1 * src_c)
    disk = dr ** 2 + dc ** 2 <= (0.35 * 64) ** 2
    assert np.mean(np.abs(out - expected)[disk]) < 2 / 255


def test_rotation_keeps_label_values(rng):
    labels = rng.integers(0, 4, size=(32, 32)).astype(np.uint8)
    assert set(np.unique(augment_rotate(labels, 135, order=0))) <= {0, 1, 2, 3}
    with pytest.raises(InvalidArgumentError):
        augment_rotate(labels, 45)


def test_edge_class_labels_use_reach():
    edges = np.zeros((9, 9), dtype=bool)
    edges[4, [0, 2, 4, 6, 8]] = True
    depth = np.zeros((9, 9), dtype=bool)
    depth[4, 4] = True
    classes = edge_class_labels(EdgeMap.from_binary(edges), EdgeMap.from_depth_mask(depth))
    assert classes[4].tolist() == [0, 0, 1, 0, 1, 0, 1, 0, 0]


def test_manifest_is_balanced_and_sorted(tmp_path):
    records = [ManifestRecord(image="images/a.png", x=i, y=0, label=i % 2 if i < 6 else 0, recipe=f"r{9 - i}")
               for i in range(10)]
    path = tmp_path / "manifest.jsonl"
    kept = build_manifest(records, path, seed=1)
    assert sum(r.label == 0 for r in kept) == sum(r.label == 1 for r in kept) == 3
    assert [r.recipe for r in kept] == sorted(r.recipe for r in kept)
    assert read_manifest(path) == kept
    assert json.loads(path.read_text().splitlines()[0])["image"] == "images/a.png"


def test_malformed_manifest(tmp_path):
    path = tmp_path / "manifest.jsonl"
    path.write_text('{"image": "a.png", "x": -1, "y": 0, "label": 0, "recipe": "r"}\n')
    with pytest.raises(ImageIOError):
        read_manifest(path)
    with pytest.raises(ImageIOError):
        read_manifest(tmp_path / "absent.jsonl")


def test_blur_dataset_covers_every_level(tmp_path):
    source = stripes(48, 48, 16, (0.1, 0.1, 0.1), (0.9, 0.9, 0.9))
    records = build_blur_dataset([source], tmp_path, count=5, seed=2, progress=False)
    assert len(records) == NUM_BLUR_LEVELS * 5
    assert {r.label for r in records} == set(range(NUM_BLUR_LEVELS))
    assert len(list((tmp_path / "images").glob("*.png"))) == NUM_BLUR_LEVELS
    assert (tmp_path / "gt" / "src0000_L23.bmap").exists()
    data = load_patch_dataset(tmp_path / "manifest.jsonl")
    assert len(data) == len(records)
    assert data.feeds["p41"].shape == (len(records), 41, 41, 3)
    assert data.feeds["p41"].dtype == np.float32


def test_pattern_dataset_labels_follow_the_blur_field(tmp_path):
    source = stripes(64, 64, 8, (0.1, 0.1, 0.1), (0.9, 0.9, 0.9))
    records = build_pattern_dataset([source], tmp_path, count=40, seed=4, progress=False)
    assert records
    assert {r.recipe for r in records} <= {"src0000_gradual", "src0000_stepwise"}
    assert (tmp_path / "images" / "src0000_gradual.png").exists()
    assert (tmp_path / "images" / "src0000_stepwise.png").exists()

    counts = Counter(r.label for r in records)
    assert len(counts) >= 3
    assert len(set(counts.values())) == 1
    for rec in records:
        gt = read_bmap(tmp_path / "gt" / f"{rec.recipe}.bmap")
        assert rec.label == int(radius_class(gt[rec.y, rec.x]))


def test_fgbg_dataset_yields_both_edge_classes(tmp_path):
    recipe = fgbg_recipe()
    records = build_fgbg_dataset([recipe.salient], [recipe.background], tmp_path,
                                 masks=[recipe.mask.astype(np.float64)], count=20, progress=False)
    labels = [r.label for r in records]
    assert set(labels) == {0, 1}
    assert labels.count(0) == labels.count(1)
    assert all(r.kind == "edge" for r in records)
    assert len(list((tmp_path / "edges").glob("*_depth.pgm"))) == 6
    with pytest.raises(InvalidArgumentError):
        build_fgbg_dataset([recipe.salient], [], tmp_path, progress=False)
