import numpy as np
import pytest

from ral.imageio import ImageFormatError, load_image, save_image, save_ralt


def test_ralt_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    t = rng.standard_normal((3, 5, 2)).astype(np.float32)
    path = save_ralt(tmp_path / "t.ralt", t)
    back = load_image(path)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, t)


def test_pgm_known_bytes(tmp_path):
    # hand-written 2x2 grayscale fixture: values 0, 51, 102, 255
    path = tmp_path / "tiny.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 51, 102, 255]))
    img = load_image(path)
    assert img.shape == (2, 2, 1)
    np.testing.assert_allclose(img[:, :, 0],
                               np.array([[0, 51], [102, 255]]) / 255.0, atol=1e-7)


def test_ppm_round_trip_on_quantized_values(tmp_path):
    rng = np.random.default_rng(1)
    img = np.rint(rng.random((4, 6, 3)) * 255) / 255.0
    path = save_image(tmp_path / "img.ppm", img.astype(np.float32))
    back = load_image(path)
    np.testing.assert_allclose(back, img, atol=1e-7)


def test_header_comments_allowed(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n2 1\n255\n" + bytes([7, 9]))
    img = load_image(path)
    assert img.shape == (1, 2, 1)


def test_truncated_pixmap_names_missing_bytes(tmp_path):
    path = tmp_path / "trunc.ppm"
    path.write_bytes(b"P6\n2 2\n255\n" + bytes(5))  # needs 12 pixel bytes
    with pytest.raises(ImageFormatError, match="need 7 more pixel bytes"):
        load_image(path)


def test_truncated_ralt_names_missing_bytes(tmp_path):
    t = np.ones((2, 2), dtype=np.float32)
    path = save_ralt(tmp_path / "t.ralt", t)
    blob = path.read_bytes()
    path.write_bytes(blob[:-6])
    with pytest.raises(ImageFormatError, match="more bytes"):
        load_image(path)


def test_unknown_magic_rejected_with_offset(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"XYZ!whatever")
    with pytest.raises(ImageFormatError, match="byte 0"):
        load_image(path)


def test_bad_maxval_rejected(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(ImageFormatError, match="maxval"):
        load_image(path)
