import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecat.data import (
    DataError,
    augment_batch,
    ingest,
    read_ppm,
    synthetic_shapes,
    write_dataset,
    write_ppm,
)
from ecat.metrics import MetricRecord, PSNR_CAP_DB, bpp, emit_curves, psnr, to_uint8


# -- PPM -------------------------------------------------------------------


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (48, 64, 3), dtype=np.uint8)
    path = tmp_path / "x.ppm"
    write_ppm(path, img)
    np.testing.assert_array_equal(read_ppm(path), img)


def test_ppm_comments_and_whitespace(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
    path = tmp_path / "c.ppm"
    raw = b"P6 # magic\n# full comment line\n 2\t2 \n255\n" + img.tobytes()
    path.write_bytes(raw)
    np.testing.assert_array_equal(read_ppm(path), img)


def test_ppm_rejects_16bit_maxval(tmp_path):
    path = tmp_path / "wide.ppm"
    path.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
    with pytest.raises(DataError):
        read_ppm(path)


def test_ppm_rejects_wrong_magic_and_truncation(tmp_path):
    p1 = tmp_path / "p5.ppm"
    p1.write_bytes(b"P5\n1 1\n255\n\x00")
    with pytest.raises(DataError):
        read_ppm(p1)
    p2 = tmp_path / "short.ppm"
    p2.write_bytes(b"P6\n4 4\n255\n\x00\x00")
    with pytest.raises(DataError):
        read_ppm(p2)


# -- ingest ------------------------------------------------------------------


def test_ingest_two_image_manifest(tmp_path):
    ds = synthetic_shapes(2, seed=5)
    manifest = write_dataset(ds, tmp_path)
    loaded = ingest(tmp_path, manifest, expect_hw=(64, 64), num_classes=10)
    assert len(loaded) == 2
    np.testing.assert_array_equal(loaded.labels, ds.labels)
    np.testing.assert_array_equal(loaded.images, ds.images)


def test_ingest_row_count_matches_dataset_size(tmp_path):
    ds = synthetic_shapes(7, seed=6)
    manifest = write_dataset(ds, tmp_path)
    rows = [r for r in csv.reader(open(manifest)) if r]
    assert len(rows) == len(ingest(tmp_path, manifest))


def test_ingest_rejects_label_out_of_range(tmp_path):
    ds = synthetic_shapes(2, seed=7)
    manifest = write_dataset(ds, tmp_path)
    lines = manifest.read_text().splitlines()
    lines[0] = lines[0].rsplit(",", 1)[0] + ",12"
    manifest.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError):
        ingest(tmp_path, manifest, num_classes=10)


def test_ingest_rejects_size_mismatch(tmp_path):
    ds = synthetic_shapes(2, seed=8)
    manifest = write_dataset(ds, tmp_path)
    with pytest.raises(DataError):
        ingest(tmp_path, manifest, expect_hw=(32, 32))


# -- synthetic corpus -----------------------------------------------------------


def test_synthetic_deterministic_and_balanced():
    a = synthetic_shapes(20, seed=9)
    b = synthetic_shapes(20, seed=9)
    np.testing.assert_array_equal(a.images, b.images)
    np.testing.assert_array_equal(a.labels, np.arange(20) % 10)
    c = synthetic_shapes(20, seed=10)
    assert not np.array_equal(a.images, c.images)


def test_synthetic_prefix_stability():
    # image i depends only on (seed, i), not on the corpus size
    a = synthetic_shapes(6, seed=11)
    b = synthetic_shapes(12, seed=11)
    np.testing.assert_array_equal(a.images, b.images[:6])


def test_augment_shapes_and_determinism(tiny_ds):
    x01, _ = tiny_ds.batch01(np.arange(8))
    a = augment_batch(x01, np.random.default_rng(3))
    b = augment_batch(x01, np.random.default_rng(3))
    assert a.shape == x01.shape
    np.testing.assert_array_equal(a, b)


# -- metrics -----------------------------------------------------------------------


def test_psnr_identical_images_capped():
    img = np.full((8, 8, 3), 100, dtype=np.uint8)
    assert psnr(img, img) == PSNR_CAP_DB


def test_psnr_uniform_16_level_error_closed_form():
    a = np.zeros((16, 16, 3), dtype=np.uint8)
    b = np.full((16, 16, 3), 16, dtype=np.uint8)
    expected = 10 * np.log10(255**2 / 256)  # = 24.0484 dB
    assert psnr(a, b) == pytest.approx(expected, abs=1e-9)
    assert psnr(a, b) == pytest.approx(24.0484, abs=1e-3)


def test_psnr_symmetric_and_type_checked():
    rng = np.random.default_rng(4)
    a = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
    b = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(ValueError):
        psnr(a.astype(np.float32), b.astype(np.float32))


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 1.5))
def test_to_uint8_clamps(v):
    out = to_uint8(np.full((2, 2, 3), v))
    assert out.dtype == np.uint8
    assert 0 <= out.min() and out.max() <= 255


# -- curves -------------------------------------------------------------------------


def _records():
    return [
        MetricRecord(bpp=0.8, psnr=27.0, top1=0.9, alpha=0.6, beta=0.006, seed=0),
        MetricRecord(bpp=0.2, psnr=23.0, top1=0.7, alpha=0.1, beta=0.001, seed=0),
        MetricRecord(bpp=0.5, psnr=25.0, top1=0.8, alpha=0.3, beta=0.003, seed=0),
    ]


def test_curves_sorted_by_bpp_with_stable_header(tmp_path):
    rd, ra = emit_curves(_records(), tmp_path)
    for path in (rd, ra):
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["bpp", "psnr", "top1", "alpha", "beta", "seed"]
        bpps = [float(r[0]) for r in rows[1:]]
        assert bpps == sorted(bpps)
        assert len(rows) == 4


def test_curves_single_record(tmp_path):
    rd, _ = emit_curves(_records()[:1], tmp_path)
    rows = list(csv.reader(open(rd)))
    assert len(rows) == 2


def test_curves_rerun_byte_identical(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    emit_curves(_records(), d1)
    emit_curves(_records(), d2)
    for name in ("rate_distortion.csv", "rate_accuracy.csv"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_curves_empty_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_curves([], tmp_path)
