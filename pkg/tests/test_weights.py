import struct

import numpy as np
import pytest

from ccsmlp import model as M
from ccsmlp import weights as W


@pytest.fixture
def params():
    cfg = M.MixerConfig(tokens=4, depth=1, hidden=4, ratio=2, patch=1, groups=2, height=2, width=2, num_classes=3)
    p = M.init_params(cfg, 0)
    # include awkward values: subnormal, huge, negative zero
    p["head.bias"][:] = [5e-324, 1e300, -0.0]
    return p


def test_roundtrip_is_bitwise(params, tmp_path):
    path = tmp_path / "w.ccsw"
    W.save_weights(params, path)
    loaded = W.load_weights(path)
    assert loaded.config == params.config
    for k in params:
        assert loaded[k].tobytes() == params[k].tobytes()


def test_header_layout(params):
    data = W.dumps(params)
    assert data[:4] == b"CCSW"
    version, flags, cfg_len = struct.unpack("<III", data[4:16])
    assert (version, flags) == (1, 0)
    assert data[16 + cfg_len : 20 + cfg_len] == struct.pack("<I", len(params))


def test_width4_is_lossy_and_bounded(params):
    params["head.bias"][1] = 1e30  # keep within binary32 range
    loaded, lossy = W.loads(W.dumps(params, width=4))
    assert lossy
    for k in params:
        # oracle: per-element binary32 rounding
        expect = params[k].astype(np.float32).astype(np.float64)
        np.testing.assert_array_equal(loaded[k], expect)


def test_bad_magic(params):
    data = b"XXXX" + W.dumps(params)[4:]
    with pytest.raises(W.BadMagicError, match="bad magic"):
        W.loads(data)


def test_version_mismatch(params):
    data = bytearray(W.dumps(params))
    data[4:8] = struct.pack("<I", 99)
    with pytest.raises(W.VersionMismatchError):
        W.loads(bytes(data))


def test_every_truncation_is_detected(params):
    data = W.dumps(params)
    for cut in range(4, len(data), 7):
        with pytest.raises(W.TruncatedFileError):
            W.loads(data[:cut])


def test_trailing_bytes_rejected(params):
    with pytest.raises(W.WeightFileError):
        W.loads(W.dumps(params) + b"\0")


def test_bad_width(params):
    with pytest.raises(ValueError):
        W.dumps(params, width=2)
