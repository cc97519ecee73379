import numpy as np
import pytest

import convmt.tensor as T
from convmt.errors import ConfigError, DataError, ShapeError
from convmt.model import (ModelConfig, decode_forward, encode,
                          forward_logits, glu, init_parameters,
                          receptive_field)
from convmt.subword import BOS_ID, PAD_ID


def tiny_config(**overrides):
    base = dict(source_vocab=11, target_vocab=9, embed_dim=8, hidden_dim=8,
                kernel_width=3, layers=2, dropout=0.0, max_positions=32,
                dtype="float64")
    base.update(overrides)
    return ModelConfig(**base)


class TestModelConfig:
    def test_round_trip_through_dict(self):
        cfg = tiny_config()
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("bad", [
        dict(kernel_width=2), dict(kernel_width=0), dict(layers=0),
        dict(dropout=1.0), dict(dropout=-0.1), dict(dtype="float16"),
        dict(embed_dim=0), dict(source_vocab=0),
    ])
    def test_invalid_values_rejected(self, bad):
        with pytest.raises(ConfigError):
            tiny_config(**bad)


class TestInitParameters:
    def test_expected_parameter_names(self):
        params = init_parameters(tiny_config(layers=2), seed=0)
        names = set(params)
        assert {"src_embed", "tgt_embed", "src_pos", "tgt_pos",
                "out_proj", "out_bias"} <= names
        for i in range(2):
            assert f"enc.{i}.conv" in names
            assert f"dec.{i}.attn_q" in names
        assert "enc_in_proj" not in names  # embed_dim == hidden_dim

    def test_projection_added_when_dims_differ(self):
        params = init_parameters(tiny_config(embed_dim=4, hidden_dim=8))
        assert params["enc_in_proj"].shape == (4, 8)
        assert params["dec_in_proj"].shape == (4, 8)

    def test_biases_start_at_zero(self):
        params = init_parameters(tiny_config())
        np.testing.assert_array_equal(params["out_bias"].data, 0.0)
        np.testing.assert_array_equal(params["enc.0.bias"].data, 0.0)

    def test_seed_determines_values(self):
        a = init_parameters(tiny_config(), seed=3)
        b = init_parameters(tiny_config(), seed=3)
        c = init_parameters(tiny_config(), seed=4)
        np.testing.assert_array_equal(a["src_embed"].data, b["src_embed"].data)
        assert not np.array_equal(a["src_embed"].data, c["src_embed"].data)

    def test_attention_only_on_last_layer_when_disabled(self):
        params = init_parameters(
            tiny_config(layers=3, attention_every_layer=False))
        assert "dec.2.attn_q" in params
        assert "dec.0.attn_q" not in params


def test_glu_matches_definition():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    out = glu(T.constant(a), T.constant(b))
    np.testing.assert_allclose(out.data, a / (1 + np.exp(-b)))
    with pytest.raises(ShapeError):
        glu(T.constant(a), T.constant(b[:, :2]))


class TestReceptiveField:
    @pytest.mark.parametrize("w,k,want", [(3, 1, 3), (3, 20, 41), (5, 4, 17),
                                          (1, 7, 1)])
    def test_values(self, w, k, want):
        assert receptive_field(w, k) == want

    def test_invalid(self):
        with pytest.raises(ShapeError):
            receptive_field(0, 3)


@pytest.fixture(scope="module")
def setup():
    cfg = tiny_config()
    return cfg, init_parameters(cfg, seed=1)


class TestForward:
    def test_logit_shape(self, setup):
        cfg, params = setup
        src = np.array([[4, 5, 6, 2]])
        prefix = np.array([[BOS_ID, 4, 5]])
        logits = forward_logits(params, cfg, src, prefix)
        assert logits.shape == (1, 3, cfg.target_vocab)

    def test_prefix_must_start_with_bos(self, setup):
        cfg, params = setup
        enc = encode(params, cfg, np.array([[4, 5]]))
        with pytest.raises(DataError, match="bos"):
            decode_forward(params, cfg, enc, np.array([[4, 5]]))

    def test_out_of_range_ids_rejected(self, setup):
        cfg, params = setup
        with pytest.raises(DataError):
            encode(params, cfg, np.array([[cfg.source_vocab]]))

    def test_too_long_input_rejected(self, setup):
        cfg, params = setup
        with pytest.raises(ShapeError):
            encode(params, cfg, np.ones((1, cfg.max_positions + 1), dtype=int))

    def test_decoder_is_causal(self, setup):
        # changing a later prefix token never changes earlier logits
        cfg, params = setup
        src = np.array([[4, 5, 6, 2]])
        enc = encode(params, cfg, src)
        prefix = np.array([[BOS_ID, 4, 5, 6]])
        ref = decode_forward(params, cfg, enc, prefix).data
        for t in range(1, 4):
            changed = prefix.copy()
            changed[0, t:] = 7
            out = decode_forward(params, cfg, enc, changed).data
            np.testing.assert_allclose(out[0, :t], ref[0, :t],
                                       rtol=0, atol=1e-12)

    def test_padded_batch_matches_per_sentence_forward(self, setup):
        cfg, params = setup
        sources = [np.array([[4, 5, 6, 2]]), np.array([[7, 8, 2]])]
        prefixes = [np.array([[BOS_ID, 3, 4, 5]]), np.array([[BOS_ID, 6]])]
        singles = [forward_logits(params, cfg, s, p).data[0]
                   for s, p in zip(sources, prefixes)]

        src = np.full((2, 4), PAD_ID)
        src[0] = sources[0][0]
        src[1, :3] = sources[1][0]
        smask = np.array([[1, 1, 1, 1], [1, 1, 1, 0]], dtype=float)
        pre = np.full((2, 4), PAD_ID)
        pre[0] = prefixes[0][0]
        pre[1, :2] = prefixes[1][0]
        pre[1, 0] = BOS_ID
        tmask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=float)
        batched = forward_logits(params, cfg, src, pre, smask, tmask).data

        np.testing.assert_allclose(batched[0], singles[0], atol=1e-10)
        np.testing.assert_allclose(batched[1, :2], singles[1], atol=1e-10)

    def test_attention_ignores_pad_positions(self, setup):
        cfg, params = setup
        src = np.array([[4, 5, PAD_ID, PAD_ID]])
        smask = np.array([[1, 1, 0, 0]], dtype=float)
        enc = encode(params, cfg, src, smask)
        _, maps = decode_forward(params, cfg, enc, np.array([[BOS_ID, 4]]),
                                 return_attention=True)
        assert len(maps) == cfg.layers
        for weights in maps:
            np.testing.assert_allclose(weights[0, :, 2:], 0.0, atol=1e-12)
            np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-9)

    def test_dropout_train_only(self, setup):
        cfg64 = tiny_config(dropout=0.5)
        params = init_parameters(cfg64, seed=2)
        src = np.array([[4, 5, 6]])
        pre = np.array([[BOS_ID, 4]])
        eval_a = forward_logits(params, cfg64, src, pre).data
        eval_b = forward_logits(params, cfg64, src, pre).data
        np.testing.assert_array_equal(eval_a, eval_b)
        train_a = forward_logits(params, cfg64, src, pre, train=True,
                                 rng=np.random.default_rng(0)).data
        train_b = forward_logits(params, cfg64, src, pre, train=True,
                                 rng=np.random.default_rng(0)).data
        train_c = forward_logits(params, cfg64, src, pre, train=True,
                                 rng=np.random.default_rng(1)).data
        np.testing.assert_array_equal(train_a, train_b)
        assert not np.array_equal(train_a, train_c)

    def test_residual_scaling_flag(self):
        cfg_on = tiny_config(layers=1)
        cfg_off = tiny_config(layers=1, residual_scaling=False)
        params = init_parameters(cfg_on, seed=5)
        src = np.array([[4, 5]])
        a = encode(params, cfg_on, src).keys.data
        b = encode(params, cfg_off, src).keys.data
        assert not np.allclose(a, b)


def test_full_model_gradients_match_finite_differences(setup):
    cfg, params = setup
    src = np.array([[4, 5, 6, 2]])
    prefix = np.array([[BOS_ID, 3, 4]])
    targets = np.array([[3, 4, 2]])

    for name in ("src_embed", "dec.1.conv", "dec.0.attn_q", "out_proj"):
        base = params[name].data.copy()

        def f(p):
            trial = dict(params)
            trial[name] = p
            logits = forward_logits(trial, cfg, src, prefix)
            lp = T.log_softmax(logits)
            picked = T.take_last_axis(lp, targets)
            return T.neg(T.mean_all(picked))

        err = T.finite_difference_check(f, base, eps=1e-5)
        assert err < 1e-4, f"{name}: {err:.3e}"
