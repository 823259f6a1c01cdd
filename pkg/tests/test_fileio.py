import numpy as np
import pytest
from PIL import Image

from fdmnet.fileio import (
    BandIndexError, FormatError, HeaderError, PayloadLengthError, export_falsecolor, load_hsic,
    load_mosa, save_hsic, save_mosa, to_uint8,
)
from fdmnet.msfa import MsfaPattern, mosaic


def test_hsic_round_trip_bit_exact(tmp_path, rng):
    cube = rng.uniform(size=(8, 12, 5)).astype(np.float32).astype(np.float64)
    path = tmp_path / "c.hsic"
    save_hsic(path, cube)
    assert np.array_equal(load_hsic(path), cube)
    raw = path.read_bytes()
    assert raw.startswith(b"HSIC 1 8 12 5\n")
    assert len(raw) == len(b"HSIC 1 8 12 5\n") + 4 * 8 * 12 * 5
    # band-major: the first payload float is band 0 at (0, 0), the second is band 0 at (0, 1)
    body = np.frombuffer(raw[len(b"HSIC 1 8 12 5\n"):], "<f4")
    assert body[1] == np.float32(cube[0, 1, 0])
    save_hsic(tmp_path / "d.hsic", load_hsic(path))
    assert (tmp_path / "d.hsic").read_bytes() == raw


def test_mosa_round_trip(tmp_path, rng):
    pat = MsfaPattern(rng.permutation(16).reshape(4, 4))
    cube = rng.uniform(size=(8, 8, 16)).astype(np.float32).astype(np.float64)
    mos = mosaic(cube, pat)
    save_mosa(tmp_path / "m.mosa", mos)
    back = load_mosa(tmp_path / "m.mosa")
    assert back.pattern == pat
    assert np.array_equal(back.data, mos.data)


def test_hsic_errors(tmp_path):
    p = tmp_path / "x.hsic"
    save_hsic(p, np.zeros((2, 2, 2)))
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(PayloadLengthError):
        load_hsic(p)
    p.write_bytes(b"HSIC 1 2 2 0\n")
    with pytest.raises(HeaderError):
        load_hsic(p)
    p.write_bytes(b"HSIX 1 2 2 2\n" + bytes(32))
    with pytest.raises(HeaderError):
        load_hsic(p)
    p.write_bytes(b"HSIC 1 2 2")
    with pytest.raises(HeaderError):
        load_hsic(p)


def test_mosa_errors(tmp_path):
    p = tmp_path / "x.mosa"
    p.write_bytes(b"MOSA 1 2 2 2\n0 1 2 7\n" + bytes(16))
    with pytest.raises(BandIndexError):
        load_mosa(p)
    p.write_bytes(b"MOSA 1 2 2 2\n0 1 2\n" + bytes(16))
    with pytest.raises(HeaderError):
        load_mosa(p)
    p.write_bytes(b"MOSA 1 2 2 2\n0 1 2 3\n" + bytes(12))
    with pytest.raises(PayloadLengthError):
        load_mosa(p)
    assert issubclass(PayloadLengthError, FormatError)


def test_to_uint8_rounding():
    v = to_uint8(np.array([0.0, 1.0, 0.5 / 255, 1.5 / 255, -1.0, 2.0]))
    assert v.tolist() == [0, 255, 1, 2, 0, 255]


@pytest.mark.parametrize("ext", ["png", "ppm"])
def test_falsecolor_export(tmp_path, rng, ext):
    cube = rng.uniform(size=(6, 7, 16))
    path = tmp_path / f"fc.{ext}"
    rgb = export_falsecolor(cube, path)
    img = np.asarray(Image.open(path))
    assert img.shape == (6, 7, 3)
    assert np.array_equal(img, rgb)
    assert np.array_equal(img[..., 0], to_uint8(cube[:, :, 1]))
    assert np.array_equal(img[..., 2], to_uint8(cube[:, :, 15]))


def test_falsecolor_errors(tmp_path):
    with pytest.raises(BandIndexError):
        export_falsecolor(np.zeros((2, 2, 16)), tmp_path / "a.png", (0, 1, 2))
    with pytest.raises(FormatError):
        export_falsecolor(np.zeros((2, 2, 16)), tmp_path / "a.jpg")
    black = export_falsecolor(np.zeros((2, 2, 16)), tmp_path / "b.png")
    assert not black.any()
