import numpy as np
import pytest

from bsrkit import fileio


class TestBinaryContainer:
    @pytest.mark.parametrize("shape", [(5,), (3, 4), (2, 3, 4)])
    def test_roundtrip(self, tmp_path, shape):
        rng = np.random.default_rng(0)
        arr = rng.standard_normal(shape)
        path = tmp_path / "a.bsr"
        fileio.write_array(path, arr)
        back = fileio.read_array(path)
        assert back.shape == arr.shape
        assert np.array_equal(back, arr)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "h.bsr"
        fileio.write_array(path, np.array([[1.0, 2.0]]))
        raw = path.read_bytes()
        assert raw[:4] == b"BSR1"
        assert raw[4] == 0          # f64 dtype code
        assert raw[5] == 2          # ndim
        assert raw[6:14] == (1).to_bytes(8, "little")
        assert raw[14:22] == (2).to_bytes(8, "little")
        assert len(raw) == 22 + 16

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bsr"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(fileio.DataFormatError, match="BSR1"):
            fileio.read_array(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.bsr"
        fileio.write_array(path, np.zeros(4))
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(fileio.DataFormatError, match="truncated"):
            fileio.read_array(path)

    def test_unknown_dtype(self, tmp_path):
        path = tmp_path / "d.bsr"
        fileio.write_array(path, np.zeros(2))
        data = bytearray(path.read_bytes())
        data[4] = 9
        path.write_bytes(bytes(data))
        with pytest.raises(fileio.DataFormatError, match="dtype"):
            fileio.read_array(path)


class TestCsvMirror:
    def test_roundtrip_2d(self, tmp_path):
        arr = np.array([[1.5, -2.0, 3.25], [0.0, 1e-17, 7.0]])
        path = tmp_path / "m.csv"
        fileio.write_csv(path, arr)
        assert np.array_equal(fileio.read_csv(path), arr)

    def test_roundtrip_1d(self, tmp_path):
        arr = np.array([1.0, 2.0, 3.0])
        path = tmp_path / "v.csv"
        fileio.write_csv(path, arr)
        back = fileio.read_csv(path)
        assert np.array_equal(back.reshape(-1), arr)

    def test_rejects_3d(self, tmp_path):
        with pytest.raises(fileio.DataFormatError):
            fileio.write_csv(tmp_path / "x.csv", np.zeros((2, 2, 2)))

    def test_load_matrix_dispatch(self, tmp_path):
        arr = np.array([[2.0, 1.0]])
        fileio.write_csv(tmp_path / "a.csv", arr)
        fileio.write_array(tmp_path / "a.bsr", arr)
        assert np.array_equal(fileio.load_matrix(tmp_path / "a.csv"), arr)
        assert np.array_equal(fileio.load_matrix(tmp_path / "a.bsr"), arr)


class TestJson:
    def test_roundtrip_and_stable_layout(self, tmp_path):
        doc = {"b": 1, "a": [1.5, None, "x"]}
        p1 = tmp_path / "1.json"
        p2 = tmp_path / "2.json"
        fileio.write_json(p1, doc)
        fileio.write_json(p2, {"a": [1.5, None, "x"], "b": 1})
        assert p1.read_bytes() == p2.read_bytes()  # sorted keys
        assert fileio.read_json(p1) == doc
