import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsi import checkpoint, pipeline
from tsi.config import ETTH_HORIZONS, ETTM_HORIZONS, RunConfig, dump_config, load_config, parse_config
from tsi.errors import CompatibilityError, ConfigError


# config

def test_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert (cfg.window, cfg.d_trend, cfg.d_seasonal, cfg.depth) == (128, 64, 64, 5)
    assert (cfg.temperature, cfg.momentum, cfg.queue_size, cfg.batch_size) == (0.07, 0.999, 256, 8)
    assert cfg.horizon_list == ETTH_HORIZONS


def test_minute_dataset_horizons():
    assert parse_config("dataset_name = ETTm1").horizon_list == (24, 48, 96, 288, 672)
    assert parse_config("dataset = data/ETTm2.csv").horizon_list == ETTM_HORIZONS


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="'windw'"):
        parse_config("windw = 3")


def test_comments_and_values():
    cfg = parse_config("# a comment\nwindow = 32  # trailing\nhorizons = 4, 8\nautoencoder = no\nlr = 1e-2\n")
    assert cfg.window == 32 and cfg.horizons == (4, 8) and cfg.autoencoder is False and cfg.lr == 0.01


@pytest.mark.parametrize("text", ["window", "window = abc", "autoencoder = maybe", "window = 0",
                                  "temperature = 0", "split = 0.5,0.5", "momentum = 2",
                                  "steps = 2\nbatch_size = 2\nqueue_size = 5"])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.cfg")


def test_dump_roundtrip():
    cfg = parse_config("window = 32\nhorizons = 4,8\nautoencoder = false\nseed = 7")
    assert parse_config(dump_config(cfg)) == cfg


def test_overrides_win():
    assert parse_config("seed = 3", {"seed": 9}).seed == 9


# checkpoint container

@settings(deadline=None, max_examples=30)
@given(st.integers(0, 3), st.integers(1, 4), st.booleans(), st.integers(0, 2**32 - 1))
def test_checkpoint_roundtrip(rank, count, complex_, seed):
    rng = np.random.default_rng(seed)
    arrays = {}
    for i in range(count):
        shape = tuple(rng.integers(1, 4, size=rank))
        a = rng.normal(size=shape)
        if complex_ and i == 0:
            a = a + 1j * rng.normal(size=shape)
        arrays[f"a{i}"] = a
    again = checkpoint.merge_complex(checkpoint.decode(checkpoint.encode(arrays)))
    assert set(again) == set(arrays)
    for k, v in arrays.items():
        assert again[k].shape == np.shape(v) and np.array_equal(again[k], v)


def test_complex_stored_as_two_records():
    raw = checkpoint.decode(checkpoint.encode({"p": np.array([1 + 2j, 3 - 4j])}))
    assert set(raw) == {"p.re", "p.im"}
    assert raw["p.re"].tolist() == [1.0, 3.0] and raw["p.im"].tolist() == [2.0, -4.0]


def test_layout_bytes():
    blob = checkpoint.encode({"x": np.array([[1.5]])})
    assert blob[:4] == b"TSI1"
    assert blob[4:12] == (1).to_bytes(8, "little") and blob[12:13] == b"x"
    assert blob[13:21] == (2).to_bytes(8, "little")
    assert blob[21:37] == (1).to_bytes(8, "little") * 2
    assert np.frombuffer(blob[37:], "<f8").tolist() == [1.5]


def test_encoding_ignores_insertion_order():
    a = {"b": np.ones(2), "a": np.zeros(3)}
    assert checkpoint.encode(a) == checkpoint.encode(dict(reversed(list(a.items()))))


@pytest.mark.parametrize("blob", [b"", b"NOPE", b"TSI1\x05", b"TSI1" + (1).to_bytes(8, "little") + b"x"
                                  + (1).to_bytes(8, "little") + (4).to_bytes(8, "little") + b"\0" * 8])
def test_corrupt_blobs(blob):
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.decode(blob)


# model checkpoints

def test_model_resave_is_byte_identical(tiny_run, tmp_path):
    model = tiny_run[2]
    checkpoint.save(tmp_path / "a.tsi", pipeline.model_to_arrays(model))
    again = pipeline.model_from_arrays(checkpoint.load(tmp_path / "a.tsi"))
    checkpoint.save(tmp_path / "b.tsi", pipeline.model_to_arrays(again))
    assert (tmp_path / "a.tsi").read_bytes() == (tmp_path / "b.tsi").read_bytes()


def test_reloaded_model_gives_same_features(tiny_run, tmp_path):
    _, splits, model, _ = tiny_run
    checkpoint.save(tmp_path / "m.tsi", pipeline.model_to_arrays(model))
    again = pipeline.model_from_arrays(checkpoint.load(tmp_path / "m.tsi"))
    assert np.array_equal(pipeline.last_step_features(model, splits.test),
                          pipeline.last_step_features(again, splits.test))


def test_missing_array_is_incompatible(tiny_run):
    arrays = pipeline.model_to_arrays(tiny_run[2])
    del arrays["ica.W"]
    with pytest.raises(CompatibilityError, match="ica.W"):
        pipeline.model_from_arrays(arrays)


def test_shape_mismatch_is_incompatible(tiny_run, tiny_cfg):
    model = tiny_run[2]
    pipeline.check_compatible(model, tiny_cfg, 6)
    with pytest.raises(CompatibilityError, match="d_trend"):
        pipeline.check_compatible(model, dataclasses.replace(tiny_cfg, d_trend=5), 6)
    with pytest.raises(CompatibilityError, match="n_features"):
        pipeline.check_compatible(model, tiny_cfg, 3)

