from pathlib import Path

import numpy as np
import pytest

from depthguard.data import (
    Box,
    Dataset,
    SampleRecord,
    SceneSpec,
    center_crop,
    dataset_from_bytes,
    dataset_to_bytes,
    dump_diff,
    dump_image,
    dump_map,
    generate_record,
    ingest,
    load_dataset,
    parse_dims,
    preprocess,
    rasterize_depth,
    render_scene,
    resize_bilinear,
    sample_scene,
    save_dataset,
    split,
    synth_generate,
)
from depthguard.data.dump import normalize_map
from depthguard.exceptions import ChecksumMismatch, DatasetError, FormatError, PreprocessError, TruncatedFile
from depthguard.tensor import Tensor

DIMS = (32, 16)


def test_synth_is_deterministic():
    first = synth_generate(seed=3, n=4, dims=DIMS)
    second = synth_generate(seed=3, n=4, dims=DIMS)
    assert dataset_to_bytes(first) == dataset_to_bytes(second)
    other = synth_generate(seed=4, n=4, dims=DIMS)
    assert dataset_to_bytes(other) != dataset_to_bytes(first)
    assert first.provenance["seed"] == 3


def test_synth_records_are_valid():
    dataset = synth_generate(seed=0, n=8, dims=DIMS)
    assert len(dataset) == 8
    assert dataset.dims == DIMS
    for record in dataset:
        assert record.image.shape == (3, 32, 16)
        assert record.depth.shape == (1, 16, 8)
        assert 0.0 <= record.image.data.min() and record.image.data.max() <= 1.0
        assert 0.5 <= record.depth.data.min() and record.depth.data.max() <= 10.0
    assert len({record.scene_seed for record in dataset}) == 8


def test_record_regenerates_from_its_seed():
    record = synth_generate(seed=9, n=2, dims=DIMS)[1]
    again = generate_record(record.scene_seed, DIMS)
    assert again.image.data.tobytes() == record.image.data.tobytes()
    assert again.depth.data.tobytes() == record.depth.data.tobytes()


def test_empty_scene_has_constant_depth():
    scene = SceneSpec(room_depth=5.0)
    image, depth = render_scene(scene, DIMS, np.random.default_rng(0))
    assert (depth == 5.0).all()
    assert image.shape == (3, 32, 16)


@pytest.mark.parametrize("seed", range(10))
def test_rasterizer_matches_per_pixel_oracle(seed: int):
    """Every depth pixel sees the nearest box covering it, or the wall"""
    scene = sample_scene(np.random.default_rng(seed), DIMS)
    depth, _ = rasterize_depth(scene, DIMS)
    rows, cols = DIMS[0] // 2, DIMS[1] // 2
    for r in range(rows):
        for c in range(cols):
            covering = [b.depth for b in scene.boxes if b.top <= r < b.bottom and b.left <= c < b.right]
            assert depth[r, c] == min(covering, default=scene.room_depth)


@pytest.mark.parametrize("height", [2, 3, 4])
def test_boxes_of_any_height_are_painted(height: int):
    """A box's albedo fills its whole footprint whatever its height"""
    box = Box(1, 2, 1 + height, 5, 2.0, albedo=(0.1, 0.2, 0.3))
    scene = SceneSpec(room_depth=5.0, boxes=(box,))
    depth, albedo = rasterize_depth(scene, DIMS)
    assert (depth[1 : 1 + height, 2:5] == 2.0).all()
    expected = np.array([0.1, 0.2, 0.3])[:, None, None] * np.ones((1, height, 3))
    np.testing.assert_array_equal(albedo[:, 1 : 1 + height, 2:5], expected)
    assert (albedo[:, 0] == 0.6).all()


def test_scene_validation():
    with pytest.raises(DatasetError):
        SceneSpec(room_depth=12.0).validate(DIMS)
    with pytest.raises(DatasetError):
        SceneSpec(room_depth=5.0, boxes=(Box(0, 0, 17, 2, 2.0),)).validate(DIMS)
    with pytest.raises(DatasetError):
        SceneSpec(room_depth=5.0, boxes=(Box(0, 0, 2, 2, 0.1),)).validate(DIMS)


def test_synth_errors():
    with pytest.raises(DatasetError):
        synth_generate(seed=0, n=0, dims=DIMS)
    with pytest.raises(DatasetError):
        synth_generate(seed=-1, n=1, dims=DIMS)
    with pytest.raises(DatasetError):
        synth_generate(seed=0, n=1, dims=(20, 16))


def test_parse_dims():
    assert parse_dims("64x48") == (64, 48)
    with pytest.raises(DatasetError):
        parse_dims("64")


def test_record_validation():
    with pytest.raises(DatasetError):
        SampleRecord(Tensor(np.zeros((3, 4, 4))), Tensor(np.zeros((1, 4, 4))))
    with pytest.raises(DatasetError):
        Dataset([generate_record(0, (16, 16)), generate_record(1, DIMS)])


def test_dataset_file_round_trip(tmp_path: Path):
    dataset = synth_generate(seed=1, n=3, dims=DIMS)
    path = tmp_path / "data.dgd"
    save_dataset(path, dataset)
    loaded = load_dataset(path, expected_dims=DIMS)
    assert loaded.provenance == dataset.provenance
    assert dataset_to_bytes(loaded) == path.read_bytes()
    with pytest.raises(DatasetError):
        load_dataset(path, expected_dims=(16, 16))


def test_empty_dataset_round_trip():
    loaded = dataset_from_bytes(dataset_to_bytes(Dataset()))
    assert len(loaded) == 0
    assert loaded.provenance is None


def test_corrupted_dataset_fails_loudly():
    encoded = bytearray(dataset_to_bytes(synth_generate(seed=2, n=2, dims=DIMS)))
    # the last bytes belong to the final record body
    encoded[-12] ^= 0xFF
    with pytest.raises(ChecksumMismatch):
        dataset_from_bytes(bytes(encoded))


def test_truncated_dataset_and_bad_magic():
    encoded = dataset_to_bytes(synth_generate(seed=2, n=2, dims=DIMS))
    for cut in (5, len(encoded) // 2, len(encoded) - 1):
        with pytest.raises(TruncatedFile):
            dataset_from_bytes(encoded[:cut])
    with pytest.raises(FormatError):
        dataset_from_bytes(b"DGX1" + encoded[4:])
    with pytest.raises(FormatError):
        dataset_from_bytes(encoded + b"\x00\x00")


def test_preprocess_passes_matching_records_through():
    record = generate_record(7, DIMS)
    out = preprocess(record.image, record.depth, DIMS, scene_seed=record.scene_seed)
    assert out.image.data.tobytes() == record.image.data.tobytes()
    assert out.depth.data.tobytes() == record.depth.data.tobytes()
    assert out.scene_seed == record.scene_seed


def test_center_crop_keeps_the_middle():
    array = np.arange(36, dtype=np.float64).reshape(1, 6, 6)
    cropped = center_crop(array, (4, 4))
    np.testing.assert_array_equal(cropped[0], array[0, 1:5, 1:5])
    with pytest.raises(PreprocessError):
        center_crop(array, (7, 4))


def test_resize_keeps_constants():
    resized = resize_bilinear(np.full((3, 20, 30), 0.25), (12, 18))
    assert resized.shape == (3, 12, 18)
    np.testing.assert_allclose(resized, 0.25)


def test_preprocess_resizes_then_crops():
    image = Tensor(np.full((3, 40, 36), 0.5))
    depth = Tensor(np.full((1, 40, 36), 3.0))
    record = preprocess(image, depth, (32, 16))
    assert record.image.shape == (3, 32, 16)
    assert record.depth.shape == (1, 16, 8)
    np.testing.assert_allclose(record.depth.data, 3.0, rtol=1e-6)
    with pytest.raises(PreprocessError):
        preprocess(image, depth, (48, 16))
    with pytest.raises(PreprocessError):
        preprocess(image, depth, (31, 16))


def test_split_is_disjoint_and_ordered():
    dataset = synth_generate(seed=0, n=10, dims=(16, 16))
    train, test = split(dataset, 0.8, seed=1)
    assert (len(train), len(test)) == (8, 2)
    train_seeds = [r.scene_seed for r in train]
    test_seeds = [r.scene_seed for r in test]
    all_seeds = [r.scene_seed for r in dataset]
    assert set(train_seeds).isdisjoint(test_seeds)
    assert sorted(train_seeds + test_seeds) == sorted(all_seeds)
    assert train_seeds == [s for s in all_seeds if s in train_seeds]
    again, _ = split(dataset, 0.8, seed=1)
    assert [r.scene_seed for r in again] == train_seeds
    for fraction in (0.0, 1.0):
        with pytest.raises(DatasetError):
            split(dataset, fraction, seed=1)


def test_ingest_preprocesses_external_records(tmp_path: Path):
    path = tmp_path / "external.dgd"
    save_dataset(path, synth_generate(seed=3, n=2, dims=(32, 32)))
    dataset = ingest(path, (16, 16))
    assert dataset.dims == (16, 16)
    assert dataset.provenance["ingested"]["dims"] == [16, 16]
    assert dataset.provenance["source"] == "synth"

    bad = SampleRecord(Tensor(np.full((3, 32, 32), 1.5)), Tensor(np.ones((1, 16, 16))))
    save_dataset(path, Dataset([bad]))
    with pytest.raises(DatasetError):
        ingest(path, (16, 16))


def test_dumps(tmp_path: Path):
    record = generate_record(0, DIMS)
    depth_path = dump_map(tmp_path / "depth", record.depth)
    assert depth_path.read_bytes().startswith(b"P5")
    sidecar = depth_path.with_suffix(".txt").read_text().splitlines()
    assert sidecar[0] == f"min={record.depth.data.min():.6f}"
    assert sidecar[1] == f"max={record.depth.data.max():.6f}"

    assert dump_image(tmp_path / "image", record.image).read_bytes().startswith(b"P6")
    diff_path = dump_diff(tmp_path / "diff", record.image, record.image)
    assert diff_path.with_suffix(".txt").read_text() == "min=0.000000\nmax=0.000000\n"


def test_normalize_map():
    pixels, lo, hi = normalize_map(np.array([[1.0, 3.0], [2.0, 3.0]]))
    assert (lo, hi) == (1.0, 3.0)
    np.testing.assert_array_equal(pixels, [[0, 255], [128, 255]])
    assert not normalize_map(np.full((2, 2), 4.0))[0].any()
