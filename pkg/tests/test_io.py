import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthdistill import io as dio
from depthdistill.camera import IntrinsicsRange
from depthdistill.core import DepthMap
from depthdistill.errors import (
    AllInvalidError,
    CodecMismatchError,
    ConfigError,
    DepthIOError,
    DepthRangeError,
    TruncatedFileError,
)
from depthdistill.lidar import DepthKind, ScanConfig
from depthdistill.losses import LossConfig, LossWeights
from depthdistill.meshing import MeshingConfig

from conftest import random_depth

DOCS = __import__("pathlib").Path(__file__).parent.parent / "docs"


def quantized(rng, h, w):
    raw = rng.integers(1, 65536, (h, w))
    ok = rng.random((h, w)) < 0.3
    ok.flat[0] = True
    return DepthMap(np.where(ok, raw / 256.0, 0.0), ok)


# -- png16 ---------------------------------------------------------------------


def test_raw_5120_is_20m(tmp_path):
    write = tmp_path / "d.png"
    from PIL import Image

    Image.fromarray(np.array([[5120, 0]], dtype=np.uint16)).save(write)
    d = dio.read_depth(write)
    assert d.values[0, 0] == 20.0
    assert not d.valid[0, 1]


def test_20m_is_raw_5120(tmp_path):
    dio.write_depth(DepthMap(np.array([[20.0]])), tmp_path / "d.png")
    assert dio.decode_png16((tmp_path / "d.png").read_bytes())[0, 0] == 5120


def test_out_of_range(tmp_path):
    with pytest.raises(DepthRangeError):
        dio.write_depth(DepthMap(np.array([[300.0]])), tmp_path / "d.png")
    assert not (tmp_path / "d.png").exists()


def test_tiny_depth_stays_valid(tmp_path):
    dio.write_depth(DepthMap(np.array([[0.001, 1.0]])), tmp_path / "d.png")
    d = dio.read_depth(tmp_path / "d.png")
    assert d.valid.all() and d.values[0, 0] == 1 / 256


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_png16_round_trip(seed):
    d = quantized(np.random.default_rng(seed), 13, 17)
    raw = dio.decode_png16(dio.encode_png16(d))
    assert np.array_equal(raw / 256.0, d.values)


def test_png16_file_round_trip(tmp_path, rng):
    d = quantized(rng, 20, 30)
    dio.write_depth(d, tmp_path / "x.png")
    assert dio.read_depth(tmp_path / "x.png") == d


# -- float_map -------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_float_map_lossless(seed):
    d = random_depth(np.random.default_rng(seed), 11, 9, 1e-3, 1e4, 0.7)
    vals, nodata = dio.decode_float_map(dio.encode_float_map(d.values, d.valid))
    assert nodata == 0.0
    assert np.array_equal(vals, d.values)


def test_float_grid_keeps_negatives_and_nan(tmp_path):
    g = np.array([[-1.5, 0.0], [np.nan, 3e-300]])
    dio.write_float_grid(g, tmp_path / "g.dmap")
    assert np.array_equal(dio.read_float_grid(tmp_path / "g.dmap"), g, equal_nan=True)


def test_inverse_depth_space(tmp_path):
    dio.atomic_write_bytes(tmp_path / "m.dmap", dio.encode_float_map(np.array([[0.5, 0.0, 4.0]])))
    d = dio.read_depth(tmp_path / "m.dmap", mono_space="inverse_depth")
    assert d.values.tolist() == [[2.0, 0.0, 0.25]]
    assert d.valid.tolist() == [[True, False, True]]


# -- errors ----------------------------------------------------------------------


def test_magic_mismatch(tmp_path):
    dio.atomic_write_bytes(tmp_path / "a.png", dio.encode_float_map(np.ones((2, 2))))
    with pytest.raises(CodecMismatchError):
        dio.read_depth(tmp_path / "a.png")
    dio.write_depth(DepthMap(np.ones((2, 2))), tmp_path / "b.png")
    with pytest.raises(CodecMismatchError):
        dio.read_depth(tmp_path / "b.png", codec="float_map")


def test_rgb_png_rejected(tmp_path):
    from PIL import Image

    Image.new("RGB", (3, 3)).save(tmp_path / "rgb.png")
    with pytest.raises(CodecMismatchError):
        dio.read_depth(tmp_path / "rgb.png")


@pytest.mark.parametrize("name", ["t.dmap", "t.png"])
def test_truncated(tmp_path, name):
    dio.write_depth(DepthMap(np.ones((8, 8))), tmp_path / name)
    data = (tmp_path / name).read_bytes()
    (tmp_path / name).write_bytes(data[: len(data) // 2])
    with pytest.raises(TruncatedFileError):
        dio.read_depth(tmp_path / name)


def test_all_invalid(tmp_path):
    dio.atomic_write_bytes(tmp_path / "z.dmap", dio.encode_float_map(np.zeros((3, 3))))
    with pytest.raises(AllInvalidError):
        dio.read_depth(tmp_path / "z.dmap")


def test_missing_file(tmp_path):
    with pytest.raises(DepthIOError) as e:
        dio.read_depth(tmp_path / "nope.png")
    assert e.value.exit_code == 3


def test_error_codes_distinct():
    # distinct classes; I/O problems exit 3, content problems exit 4
    assert len({CodecMismatchError, TruncatedFileError, AllInvalidError}) == 3
    assert CodecMismatchError("x").exit_code == TruncatedFileError("x").exit_code == 3
    assert AllInvalidError("x").exit_code == 4


# -- config ----------------------------------------------------------------------


def test_empty_config_is_default():
    assert dio.parse_config_text("") == dio.PipelineConfig()
    cfg = dio.parse_config_text("")
    assert cfg.scan.n_beams == 64 and cfg.weights == LossWeights(1.0, 1.0, 0.5)
    assert cfg.loss.levels == 4 and cfg.depth_kind is DepthKind.Z_DEPTH


def test_fx_range_order_names_key():
    with pytest.raises(ConfigError) as e:
        dio.parse_config_text("fx_range = [800.0, 400.0]")
    assert e.value.key == "fx_range" and "fx_range" in str(e.value)


@pytest.mark.parametrize(
    "text,key",
    [
        ("bogus = 1", "bogus"),
        ('n_beams = "64"', "n_beams"),
        ("n_beams = 0", "n_beams"),
        ("lock_aspect = 1", "lock_aspect"),
        ("dropout = true", "dropout"),
        ("vertical_fov = [1.0]", "vertical_fov"),
        ('solver = "adam"', "solver"),
        ('depth_kind = "disparity"', "depth_kind"),
        ("w_sup = -1.0", "w_sup"),
        ("workers = 0", "workers"),
    ],
)
def test_config_errors_name_key(text, key):
    with pytest.raises(ConfigError) as e:
        dio.parse_config_text(text)
    assert e.value.key == key and e.value.exit_code == 2


def test_sample_config_golden():
    cfg = dio.parse_config(DOCS / "sample_config.toml")
    expect = dio.PipelineConfig(
        seed=17,
        intrinsics=IntrinsicsRange((500.0, 700.0), (480.0, 720.0), 0.02, False),
        scan=ScanConfig(32, (-20.0, 3.0), 0.25, "beams", 0.1, 0.04),
        meshing=MeshingConfig(0.08, 1e-10),
        weights=LossWeights(1.0, 0.5, 0.25),
        loss=LossConfig("lad", "detached", 3, "raw"),
        depth_kind=DepthKind.RANGE,
        leaf_size=8,
        mono_space=dio.MonoSpace.DEPTH,
        export_mesh=True,
        workers=2,
    )
    assert cfg == expect


def test_config_mapping_round_trip():
    cfg = dio.parse_config(DOCS / "sample_config.toml")
    assert dio.config_from_mapping(dio.config_to_mapping(cfg)) == cfg


def test_same_bytes_same_config(tmp_path):
    text = (DOCS / "sample_config.toml").read_text()
    assert dio.parse_config_text(text) == dio.parse_config_text(text)
