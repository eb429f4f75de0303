"""Encoder/decoder forward contracts: masking, causality, hand-computed
attention, loss formula, and a sampled end-to-end gradient check."""

import numpy as np
import pytest

from seqforge.model import (
    BOS_ID,
    EOS_ID,
    LN_EPS,
    ModelConfig,
    Seq2SeqModel,
    base_config,
    decoder_block_names,
    encoder_layer_names,
    parameter_shape,
)
from conftest import max_rel_err

TINY = ModelConfig(vocab_size=11, hidden=8, ffn_dim=12, heads=2,
                   encoder_layers=2, decoder_blocks=1, max_positions=16)


@pytest.fixture(scope="module")
def tiny_model():
    return Seq2SeqModel.random_init(TINY, seed=1, dtype=np.float64)


def test_base_preset_dimensions():
    cfg = base_config(vocab_size=1000)
    assert (cfg.hidden, cfg.ffn_dim, cfg.heads) == (768, 3072, 12)
    assert (cfg.encoder_layers, cfg.decoder_blocks) == (12, 6)


def test_config_validation():
    with pytest.raises(ValueError, match="divisible"):
        ModelConfig(vocab_size=4, hidden=6, ffn_dim=8, heads=4,
                    encoder_layers=2, decoder_blocks=1, max_positions=8)
    with pytest.raises(ValueError, match="positive"):
        ModelConfig(vocab_size=0, hidden=4, ffn_dim=8, heads=2,
                    encoder_layers=2, decoder_blocks=1, max_positions=8)


class TestEncode:
    def test_output_shape(self, tiny_model):
        out = tiny_model.encode([3, 4, 5])
        assert out.shape == (3, TINY.hidden)

    def test_padding_token_identity_is_invisible(self, tiny_model):
        ids_a = np.array([3, 4, 5, 9])
        ids_b = np.array([3, 4, 5, 7])  # only the masked position differs
        mask = np.array([True, True, True, False])
        out_a = tiny_model.encode(ids_a, source_mask=mask)
        out_b = tiny_model.encode(ids_b, source_mask=mask)
        assert np.array_equal(out_a[:3], out_b[:3])

    def test_overlong_input_raises(self, tiny_model):
        with pytest.raises(ValueError, match="max_positions"):
            tiny_model.encode(np.ones(TINY.max_positions + 1, dtype=int))

    def test_bad_token_id_named(self, tiny_model):
        with pytest.raises(IndexError, match="id 11"):
            tiny_model.encode([3, 11])

    def test_single_layer_single_head_matches_hand_computation(self):
        cfg = ModelConfig(vocab_size=5, hidden=2, ffn_dim=3, heads=1,
                          encoder_layers=1, decoder_blocks=1, max_positions=4)
        model = Seq2SeqModel.random_init(cfg, seed=7, dtype=np.float64)
        p = model.params
        ids = [2, 4]
        got = model.encode(ids)

        # independent straight-line recomputation of the layer
        def ln(x, gain, bias):
            mu = x.mean(-1, keepdims=True)
            var = ((x - mu) ** 2).mean(-1, keepdims=True)
            return (x - mu) / np.sqrt(var + LN_EPS) * gain + bias

        x = p["embed.token"][ids] + p["embed.position"][:2]
        x = ln(x, p["encoder.embed_norm.gain"], p["encoder.embed_norm.bias"])
        q = x @ p["encoder.layer.1.attn.wq"] + p["encoder.layer.1.attn.bq"]
        k = x @ p["encoder.layer.1.attn.wk"] + p["encoder.layer.1.attn.bk"]
        v = x @ p["encoder.layer.1.attn.wv"] + p["encoder.layer.1.attn.bv"]
        scores = q @ k.T / np.sqrt(2.0)
        probs = np.exp(scores - scores.max(-1, keepdims=True))
        probs /= probs.sum(-1, keepdims=True)
        attn = probs @ v @ p["encoder.layer.1.attn.wo"] + p["encoder.layer.1.attn.bo"]
        x = ln(x + attn, p["encoder.layer.1.attn_norm.gain"], p["encoder.layer.1.attn_norm.bias"])
        h = x @ p["encoder.layer.1.ffn.w1"] + p["encoder.layer.1.ffn.b1"]
        h = 0.5 * h * (1 + np.tanh(np.sqrt(2 / np.pi) * (h + 0.044715 * h**3)))
        f = h @ p["encoder.layer.1.ffn.w2"] + p["encoder.layer.1.ffn.b2"]
        want = ln(x + f, p["encoder.layer.1.ffn_norm.gain"], p["encoder.layer.1.ffn_norm.bias"])

        np.testing.assert_allclose(got, want, atol=1e-12)


class TestDecode:
    def test_logits_shape(self, tiny_model):
        enc = tiny_model.encode([3, 4])
        logits = tiny_model.decode([BOS_ID, 5, 6], enc)
        assert logits.shape == (3, TINY.vocab_size)

    def test_causal_mask_blocks_future_tokens(self, tiny_model):
        enc = tiny_model.encode([3, 4, 5])
        a = tiny_model.decode([BOS_ID, 5, 6, 7], enc)
        b = tiny_model.decode([BOS_ID, 5, 9, 10], enc)  # positions >= 2 perturbed
        assert np.array_equal(a[:2], b[:2])
        assert not np.array_equal(a[2:], b[2:])

    def test_zeroed_cross_output_projection_ignores_encoder(self, tiny_model):
        m = tiny_model.clone()
        m.params["decoder.block.1.cross_attn.wo"][:] = 0.0
        enc = m.encode([3, 4, 5])
        a = m.decode([BOS_ID, 5, 6], enc)
        b = m.decode([BOS_ID, 5, 6], np.zeros_like(enc))
        assert np.array_equal(a, b)

    def test_encoder_state_width_validated(self, tiny_model):
        with pytest.raises(ValueError, match="hidden"):
            tiny_model.decode([BOS_ID, 3], np.zeros((2, TINY.hidden + 1)))


class TestParameterStructure:
    def test_decoder_block_matches_two_encoder_layers(self):
        for cfg in (TINY, ModelConfig(vocab_size=7, hidden=12, ffn_dim=20, heads=3,
                                      encoder_layers=4, decoder_blocks=2, max_positions=8)):
            block = sum(int(np.prod(parameter_shape(n, cfg))) for n in decoder_block_names(1))
            two_layers = sum(int(np.prod(parameter_shape(n, cfg)))
                             for n in encoder_layer_names(1) + encoder_layer_names(2))
            assert block == two_layers

    def test_missing_parameter_named(self):
        params = Seq2SeqModel.random_init(TINY, seed=0).params.copy()
        del params["decoder.block.1.top_ffn.w2"]
        with pytest.raises(ValueError, match="decoder.block.1.top_ffn.w2"):
            Seq2SeqModel(TINY, params)


class TestForwardLoss:
    def test_uniform_logits_give_log_vocab(self):
        m = Seq2SeqModel.random_init(TINY, seed=3, dtype=np.float64)
        m.params["embed.token"][:] = 0.0  # ties the output projection to zero
        loss = m.forward_loss([([3, 4], [5, 6, 7])], smoothing=0.0)
        assert abs(loss - np.log(TINY.vocab_size)) < 1e-9

    def test_smoothed_loss_matches_closed_form(self):
        cfg = ModelConfig(vocab_size=3, hidden=4, ffn_dim=6, heads=2,
                          encoder_layers=2, decoder_blocks=1, max_positions=8)
        m = Seq2SeqModel.random_init(cfg, seed=5, dtype=np.float64)
        src, tgt = [1, 2], [2, 0]
        eps = 0.1

        enc = m.encode(src)
        logits = m.decode([BOS_ID] + tgt, enc)
        labels = tgt + [EOS_ID]
        lp = logits - logits.max(-1, keepdims=True)
        lp = lp - np.log(np.exp(lp).sum(-1, keepdims=True))
        per_tok = [-(1 - eps) * lp[i, y] - eps / cfg.vocab_size * lp[i].sum()
                   for i, y in enumerate(labels)]
        want = float(np.mean(per_tok))

        got = m.forward_loss([(src, tgt)], smoothing=eps)
        assert abs(got - want) < 1e-12

        # smoothing=0 reduces exactly to cross-entropy
        ce = float(np.mean([-lp[i, y] for i, y in enumerate(labels)]))
        assert abs(m.forward_loss([(src, tgt)], smoothing=0.0) - ce) < 1e-12

        # the formula itself is invariant to shifting a position's logits
        shifted = lp.copy()
        raw = logits.copy()
        raw[1] += 17.0
        lp2 = raw - raw.max(-1, keepdims=True)
        lp2 = lp2 - np.log(np.exp(lp2).sum(-1, keepdims=True))
        np.testing.assert_allclose(lp2, shifted, atol=1e-12)

    def test_empty_batch_rejected(self, tiny_model):
        with pytest.raises(ValueError, match="empty batch"):
            tiny_model.forward_loss([])
        with pytest.raises(ValueError, match="length >= 1"):
            tiny_model.forward_loss([([3, 4], [])])

    def test_batch_loss_is_token_weighted_mean(self, tiny_model):
        b1, b2 = ([3, 4], [5]), ([6], [7, 8, 9])
        joint = tiny_model.forward_loss([b1, b2])
        l1 = tiny_model.forward_loss([b1])
        l2 = tiny_model.forward_loss([b2])
        # lengths +1 for the EOS label
        want = (l1 * 2 + l2 * 4) / 6
        assert abs(joint - want) < 1e-12


class TestGradients:
    def test_sampled_parameter_gradients_match_finite_differences(self):
        model = Seq2SeqModel.random_init(TINY, seed=11, dtype=np.float64)
        batch = [([3, 4, 5], [6, 7]), ([8, 9], [10, 3, 4])]
        _, grads, _ = model.forward_backward(batch, smoothing=0.1)

        rng = np.random.default_rng(0)
        for name in ["embed.token", "encoder.layer.1.attn.wq", "encoder.layer.2.ffn.w1",
                     "decoder.block.1.cross_attn.wv", "decoder.block.1.top_ffn_norm.gain",
                     "decoder.block.1.self_attn.bo", "embed.position"]:
            arr = model.params[name]
            flat = arr.reshape(-1)
            idx = rng.choice(flat.size, size=min(6, flat.size), replace=False)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + 1e-5
                fp = model.forward_loss(batch, smoothing=0.1)
                flat[i] = orig - 1e-5
                fm = model.forward_loss(batch, smoothing=0.1)
                flat[i] = orig
                num = (fp - fm) / 2e-5
                ana = grads[name].reshape(-1)[i]
                assert max_rel_err(np.array([ana]), np.array([num])) < 1e-3, name

    def test_gradients_deterministic(self, tiny_model):
        batch = [([3, 4], [5, 6])]
        _, g1, _ = tiny_model.forward_backward(batch)
        _, g2, _ = tiny_model.forward_backward(batch)
        assert all(np.array_equal(g1[n], g2[n]) for n in g1)


class TestPreNormVariant:
    CFG = ModelConfig(vocab_size=11, hidden=8, ffn_dim=12, heads=2,
                      encoder_layers=2, decoder_blocks=1, max_positions=16,
                      pre_norm=True)

    def test_differs_from_post_norm(self):
        pre = Seq2SeqModel(self.CFG, Seq2SeqModel.random_init(TINY, seed=4,
                                                              dtype=np.float64).params)
        post = Seq2SeqModel.random_init(TINY, seed=4, dtype=np.float64)
        assert not np.allclose(pre.encode([3, 4, 5]), post.encode([3, 4, 5]))

    def test_causality_still_holds(self):
        model = Seq2SeqModel.random_init(self.CFG, seed=4, dtype=np.float64)
        enc = model.encode([3, 4, 5])
        a = model.decode([BOS_ID, 5, 6, 7], enc)
        b = model.decode([BOS_ID, 5, 9, 10], enc)
        assert np.array_equal(a[:2], b[:2])

    def test_gradients_match_finite_differences(self):
        model = Seq2SeqModel.random_init(self.CFG, seed=4, dtype=np.float64)
        batch = [([3, 4, 5], [6, 7])]
        _, grads, _ = model.forward_backward(batch, smoothing=0.0)
        for name in ("encoder.embed_norm.gain", "decoder.block.1.cross_attn.wq"):
            arr = model.params[name]
            flat = arr.reshape(-1)
            for i in (0, flat.size // 2):
                orig = flat[i]
                flat[i] = orig + 1e-5
                fp = model.forward_loss(batch)
                flat[i] = orig - 1e-5
                fm = model.forward_loss(batch)
                flat[i] = orig
                num = (fp - fm) / 2e-5
                ana = grads[name].reshape(-1)[i]
                assert max_rel_err(np.array([ana]), np.array([num])) < 1e-3, name
