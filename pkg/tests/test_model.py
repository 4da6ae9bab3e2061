import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaf_attn.errors import CheckpointError, ConfigError, ShapeError
from gaf_attn.gaf import GadfImage
from gaf_attn.model import (
    AttnCnnConfig,
    build_model,
    count_params,
    load_checkpoint,
    save_checkpoint,
)
from gaf_attn.nn import Dense, grad_check

# Worked by hand from the default config:
#   conv  14->32: 14*9*32 + 32   =   4064
#   conv  32->64: 32*9*64 + 64   =  18496
#   conv 64->128: 64*9*128 + 128 =  73856
#   conv 128->128: 128*9*128+128 = 147584
#   dense 2048->128              = 262272
#   dense 128->16                =   2064
#   dense 16->1                  =     17
DEFAULT_PARAM_COUNT = 508353


def param_count_by_arithmetic(filters, in_ch=14, grid=4, k=3):
    total, prev = 0, in_ch
    for f in filters:
        total += prev * k * k * f + f
        prev = f
    flat = filters[-1] * grid * grid
    for a, b in [(flat, 128), (128, 16), (16, 1)]:
        total += a * b + b
    return total


def image(k, seed=0, channels=14):
    return GadfImage(np.random.default_rng(seed).uniform(-1, 1, size=(channels, k, k)))


class TestConfig:
    def test_three_filters_rejected(self):
        with pytest.raises(ConfigError):
            build_model(AttnCnnConfig(conv_filters=(32, 64, 128)))

    def test_decreasing_filters_rejected(self):
        with pytest.raises(ConfigError):
            build_model(AttnCnnConfig(conv_filters=(64, 32, 128, 128)))

    def test_fc_sizes_fixed(self):
        with pytest.raises(ConfigError):
            build_model(AttnCnnConfig(fc_sizes=(64, 16, 1)))

    def test_round_trip_dict(self):
        cfg = AttnCnnConfig(seed=4, dropout_rate=0.3)
        assert AttnCnnConfig.from_dict(cfg.to_dict()) == cfg


class TestBuild:
    def test_deterministic(self):
        a, b = build_model(AttnCnnConfig(seed=3)), build_model(AttnCnnConfig(seed=3))
        for p, q in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(p.data, q.data)

    def test_flatten_and_first_dense(self):
        model = build_model()
        assert model.config.flatten_size == 2048
        dense = [layer for layer in model.layers if isinstance(layer, Dense)]
        assert dense[0].weight.shape == (128, 2048)
        assert [d.out_features for d in dense] == [128, 16, 1]

    def test_layer_order(self):
        names = [type(layer).__name__ for layer in build_model().layers]
        assert names == (
            ["Conv2d", "ReLU", "MaxPool2d"] * 3
            + ["Conv2d", "ReLU", "AdaptiveMaxPool2d", "Flatten"]
            + ["Dense", "ReLU", "Dropout", "Dense", "ReLU", "Dense"]
        )

    def test_param_count(self):
        assert count_params(build_model()) == DEFAULT_PARAM_COUNT
        assert param_count_by_arithmetic((32, 64, 128, 128)) == DEFAULT_PARAM_COUNT

    def test_last_dense_contributes_17(self):
        last = build_model().layers[-1]
        assert sum(p.size for p in last.parameters()) == 17

    def test_more_filters_more_params(self):
        assert count_params(build_model(AttnCnnConfig(conv_filters=(64, 64, 128, 128)))) > DEFAULT_PARAM_COUNT

    @pytest.mark.parametrize("filters", [(8, 8, 16, 16), (16, 32, 32, 64)])
    def test_param_count_other_configs(self, filters):
        assert count_params(build_model(AttnCnnConfig(conv_filters=filters))) == param_count_by_arithmetic(filters)


class TestForward:
    def test_variable_sizes(self):
        model = build_model()
        for k in (64, 128):
            out = model.forward(image(k))
            assert out.shape == (1,) and np.isfinite(out[0])

    @settings(max_examples=8, deadline=None)
    @given(st.integers(16, 256))
    def test_any_size_gives_scalar(self, k):
        model = build_model(AttnCnnConfig(conv_filters=(4, 4, 8, 8)))
        assert model.forward(image(k)).shape == (1,)

    def test_zero_weights_output_bias(self):
        model = build_model()
        for p in model.parameters():
            p.data[:] = 0.0
        model.layers[-1].bias.data[:] = 42.5
        assert model.predict(image(16)) == 42.5

    def test_eval_repeatable(self):
        model = build_model()
        x = image(32)
        assert model.forward(x)[0] == model.forward(x)[0]

    def test_train_mode_uses_dropout(self):
        model = build_model()
        x = image(32)
        rng = np.random.default_rng(0)
        outs = {float(model.forward(x, train=True, rng=rng)[0]) for _ in range(5)}
        assert len(outs) > 1

    def test_wrong_channels(self):
        with pytest.raises(ShapeError):
            build_model().forward(image(16, channels=13))

    def test_collapse(self):
        with pytest.raises(ShapeError):
            build_model().forward(image(4))

    def test_small_image_accepted(self):
        assert build_model().forward(image(8)).shape == (1,)

    def test_zero_channels_permutation(self):
        model = build_model()
        model.layers[0].weight.data[:] = 0.0
        x = image(16).data
        x[2] = 0.0
        x[5] = 0.0
        swapped = x.copy()
        swapped[[2, 5]] = swapped[[5, 2]]
        assert model.predict(x) == model.predict(swapped)


class TestGradient:
    def test_full_model(self):
        model = build_model(AttnCnnConfig(precision="float64", seed=1))
        x = np.random.default_rng(2).uniform(-1, 1, size=(14, 8, 8))
        assert grad_check(model.net, x, h=1e-3, max_per_param=25) < 1e-3


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = build_model(AttnCnnConfig(seed=9, conv_filters=(4, 8, 8, 8)))
        path = save_checkpoint(model, tmp_path / "m.gafm", extra={"paa_target": 64})
        loaded, extra = load_checkpoint(path)
        assert extra == {"paa_target": 64}
        assert loaded.config == model.config
        x = image(16)
        assert loaded.predict(x) == model.predict(x)

    def test_shape_validation(self, tmp_path):
        from gaf_attn.nn import load_params, save_params

        model = build_model(AttnCnnConfig(conv_filters=(4, 8, 8, 8)))
        path = save_checkpoint(model, tmp_path / "m.gafm")
        config, arrays = load_params(path)
        arrays[0] = arrays[0][:2]
        save_params(path, config, arrays)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        (tmp_path / "x").write_bytes(b"hello world, not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "x")
