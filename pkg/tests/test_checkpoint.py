import numpy as np
import pytest

from pour.checkpoint import MAGIC, dumps, load_checkpoint, loads, save_checkpoint
from pour.errors import CheckpointError, ChecksumError, ShapeMismatchError
from pour.geometry import EtfFrame, gram_residual, make_etf
from pour.synthetic import FeatureMatrix, NcGenConfig, sample_nc_features
from pour.toy_model import ToyModel, init_model
from pour.unlearn import UnlearnConfig, pour_p


def _assert_models_equal(a: ToyModel, b: ToyModel):
    for p, q in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(p, q)
    assert [l.activation for l in a.layers] == [l.activation for l in b.layers]
    assert a.masked_class == b.masked_class
    assert (a.projection is None) == (b.projection is None)
    if a.projection is not None:
        np.testing.assert_array_equal(a.projection.matrix, b.projection.matrix)


class TestRoundTrip:
    def test_frame(self, tmp_path):
        frame = make_etf(6, 9, 2)
        back = load_checkpoint(save_checkpoint(frame, tmp_path / "f.pour1"))
        np.testing.assert_array_equal(back.directions, frame.directions)
        assert gram_residual(back) == gram_residual(frame)

    def test_features(self, tmp_path):
        fm = sample_nc_features(NcGenConfig(make_etf(3, 4), 0.3, 5, 1))
        back = load_checkpoint(save_checkpoint(fm, tmp_path / "x.pour1"))
        np.testing.assert_array_equal(back.rows, fm.rows)
        np.testing.assert_array_equal(back.labels, fm.labels)
        assert back.class_count == 3

    def test_empty_features(self):
        fm = FeatureMatrix(np.zeros((0, 2)), [], 4)
        back = loads(dumps(fm))
        assert back.is_empty and back.dim == 2

    def test_model(self):
        model = init_model(5, 4, 7, seed=3)
        _assert_models_equal(model, loads(dumps(model)))

    def test_projected_model(self):
        model, _ = pour_p(init_model(5, 4, 7, seed=3), UnlearnConfig(1))
        _assert_models_equal(model, loads(dumps(model)))

    def test_bytes_are_deterministic(self):
        assert dumps(make_etf(5, 5, 1)) == dumps(make_etf(5, 5, 1))

    def test_layout(self):
        blob = dumps(EtfFrame(np.array([[1.0], [-1.0]])))
        assert blob.startswith(MAGIC + bytes([3]) + b"etf")
        assert np.frombuffer(blob[-24:-8], "<f8").tolist() == [1.0, -1.0]


class TestErrors:
    def test_truncated(self, tmp_path):
        path = save_checkpoint(make_etf(4, 3), tmp_path / "f.pour1")
        data = path.read_bytes()
        for cut in (1, 8, len(data) // 2):
            path.write_bytes(data[:-cut])
            with pytest.raises(ChecksumError):
                load_checkpoint(path)

    def test_corrupted_byte(self, tmp_path):
        data = bytearray(dumps(make_etf(4, 3)))
        data[20] ^= 0xFF
        with pytest.raises(ChecksumError):
            loads(bytes(data))

    def test_bad_magic(self):
        with pytest.raises(CheckpointError):
            loads(b"NOPE1" + dumps(make_etf(3, 2))[5:])

    def test_class_count_mismatch(self, tmp_path):
        path = save_checkpoint(make_etf(4, 3), tmp_path / "f.pour1")
        with pytest.raises(ShapeMismatchError):
            load_checkpoint(path, class_count=5)

    def test_dim_and_type_mismatch(self, tmp_path):
        path = save_checkpoint(init_model(6, 3, 4), tmp_path / "m.pour1")
        with pytest.raises(ShapeMismatchError):
            load_checkpoint(path, dim=5)
        with pytest.raises(ShapeMismatchError):
            load_checkpoint(path, expected_type=EtfFrame)
        assert isinstance(load_checkpoint(path, ToyModel, 3, 6), ToyModel)

    def test_missing_file_is_os_error(self, tmp_path):
        with pytest.raises(OSError):
            load_checkpoint(tmp_path / "absent.pour1")

    def test_unsupported_object(self):
        with pytest.raises(TypeError):
            dumps(np.zeros(3))
