"""Container invariants and dataset ingestion contracts."""

import numpy as np
import pytest

from hotspotter.data import ThermalImage, load_dataset, read_manifest, write_dataset
from hotspotter.errors import IngestionError, ValidationError


def make_image(value=0.5, label=None, mask=None, img_id="img"):
    return ThermalImage(
        pixels=np.full((8, 10, 3), value, dtype=np.float32), label=label, mask=mask, id=img_id
    )


def test_pixels_must_be_unit_interval():
    with pytest.raises(ValidationError):
        ThermalImage(pixels=np.full((4, 4, 3), 1.5))
    with pytest.raises(ValidationError):
        ThermalImage(pixels=np.full((4, 4, 3), -0.1))


def test_pixels_must_be_hw3():
    with pytest.raises(ValidationError):
        ThermalImage(pixels=np.zeros((4, 4)))


def test_mask_shape_must_match():
    with pytest.raises(ValidationError):
        make_image(mask=np.zeros((3, 3), bool))


def test_normal_label_forbids_nonempty_mask():
    mask = np.zeros((8, 10), bool)
    mask[2, 2] = True
    with pytest.raises(ValidationError):
        make_image(label=0, mask=mask)
    make_image(label=0, mask=np.zeros((8, 10), bool))  # all-zero mask is fine


def test_label_domain():
    with pytest.raises(ValidationError):
        make_image(label=2)


def test_write_load_round_trip(tmp_path):
    mask = np.zeros((8, 10), bool)
    mask[1:3, 2:5] = True
    images = [
        make_image(0.2, label=0, img_id="a"),
        make_image(0.7, label=1, mask=mask, img_id="b"),
        make_image(0.4, label=1, mask=mask, img_id="c"),
    ]
    write_dataset(images, tmp_path)
    loaded = load_dataset(tmp_path)
    assert [img.id for img in loaded] == ["a", "b", "c"]
    assert [img.label for img in loaded] == [0, 1, 1]
    assert loaded[1].mask is not None and np.array_equal(loaded[1].mask, mask)
    # 8-bit quantization round-trips exactly for n/255 values
    assert np.allclose(loaded[0].pixels, 0.2, atol=1 / 255)


def test_unlabeled_manifest(tmp_path):
    images = [make_image(0.5, img_id="u1"), make_image(0.6, img_id="u2")]
    write_dataset(images, tmp_path)
    loaded = load_dataset(tmp_path)
    assert [img.label for img in loaded] == [None, None]


def test_missing_file_names_the_path(tmp_path):
    write_dataset([make_image(img_id="real")], tmp_path)
    manifest = tmp_path / "manifest.csv"
    manifest.write_text("path,label\nimages/ghost.png,1\n")
    with pytest.raises(IngestionError, match="ghost.png"):
        load_dataset(tmp_path)


def test_malformed_label_rejected(tmp_path):
    write_dataset([make_image(img_id="x")], tmp_path)
    (tmp_path / "manifest.csv").write_text("path,label\nimages/x.png,2\n")
    with pytest.raises(ValidationError):
        load_dataset(tmp_path)
    (tmp_path / "manifest.csv").write_text("path,label\nimages/x.png,anomalous\n")
    with pytest.raises(ValidationError):
        load_dataset(tmp_path)


def test_manifest_header_required(tmp_path):
    (tmp_path / "manifest.csv").write_text("file,class\nx.png,1\n")
    with pytest.raises(ValidationError):
        read_manifest(tmp_path / "manifest.csv")


def test_missing_manifest(tmp_path):
    with pytest.raises(IngestionError):
        load_dataset(tmp_path)
