"""Prompter family: token/spatial attention, fovea, MVIP/IMVIP composition,
zero-at-init guarantees, and parameter accounting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mplt import prompter as prm
from mplt.tensor import Tensor, grad_check


def make_prompter(n, r, branches, seed=0, randomize=True):
    rng = np.random.default_rng(seed)
    pp = prm.init_prompter("t", n, r, branches, rng)
    if randomize:
        for br in pp.branches:
            br.g_s2_w.value.data[:] = rng.normal(0, 0.3,
                                                 br.g_s2_w.data.shape)
            br.g_s2_b.value.data[:] = rng.normal(0, 0.3,
                                                 br.g_s2_b.data.shape)
            br.g_t_w.value.data[:] = rng.normal(0, 0.3, br.g_t_w.data.shape)
            br.g_t_b.value.data[:] = rng.normal(0, 0.3, br.g_t_b.data.shape)
    return pp


def rnd(seed, *shape):
    return Tensor(np.random.default_rng(seed).normal(size=shape),
                  requires_grad=True)


class TestTokenAttention:
    def test_zero_projection_gives_zero(self):
        # zeroing the output projection makes the stage a hard zero for any h
        pp = make_prompter(6, 2, 1, randomize=False)
        pp.branches[0].g_s2_w.value.data[:] = 0.0
        h = rnd(1, 6, 8)
        out = prm.token_attention(h, pp.branches[0])
        assert np.all(out.data == 0.0)

    def test_constant_input_per_token_broadcast(self):
        # per-token weights broadcast over D: each output row of a constant
        # input stays constant across the feature axis
        pp = make_prompter(6, 2, 1, seed=2)
        h = Tensor(np.full((6, 8), 3.0))
        out = prm.token_attention(h, pp.branches[0])
        assert np.allclose(out.data, out.data[:, :1])

    def test_default_shapes(self):
        pp = make_prompter(320, 16, 1, seed=3)
        h = rnd(4, 320, 768)
        out = prm.token_attention(h, pp.branches[0])
        assert out.shape == (320, 768)

    def test_zero_input_gives_zero(self):
        # output multiplies h, so h = 0 yields 0 for any parameters
        pp = make_prompter(6, 2, 1, seed=5)
        out = prm.token_attention(Tensor(np.zeros((6, 8))), pp.branches[0])
        assert np.all(out.data == 0.0)


class TestSpatialAttention:
    def test_zero_init_gives_zero(self):
        pp = make_prompter(6, 2, 1, randomize=False)
        out = prm.spatial_attention(rnd(6, 6, 16), pp.branches[0])
        assert np.all(out.data == 0.0)

    def test_weight_shape_broadcast(self):
        pp = make_prompter(320, 16, 1, seed=7)
        h = rnd(8, 320, 768)
        out = prm.spatial_attention(h, pp.branches[0])
        assert out.shape == (320, 768)
        # weight is shared over tokens: equal token rows scale identically
        h2 = Tensor(np.tile(h.data[:1], (320, 1)))
        out2 = prm.spatial_attention(h2, pp.branches[0])
        assert np.allclose(out2.data, out2.data[:1])

    def test_gradcheck_n6_d16(self):
        pp = make_prompter(6, 2, 1, seed=9)
        h = rnd(10, 6, 16)
        leaves = [h] + [p.value for p in pp.branches[0].parameters()]
        err = grad_check(
            lambda: prm.spatial_attention(h, pp.branches[0])
            .power(2.0).sum(), leaves)
        assert err < 1e-4


class TestAttentionStack:
    def test_both_flags_off_identity(self):
        pp = make_prompter(6, 2, 1, seed=11)
        h = rnd(12, 6, 8)
        out = prm.attention_stack(h, pp.branches[0], use_token_attn=False,
                                  use_spatial_attn=False)
        np.testing.assert_array_equal(out.data, h.data)

    def test_zero_init_composition(self):
        pp = make_prompter(6, 2, 1, randomize=False)
        out = prm.attention_stack(rnd(13, 6, 8), pp.branches[0])
        assert np.all(out.data == 0.0)

    def test_gradcheck(self):
        pp = make_prompter(6, 2, 1, seed=14)
        h = rnd(15, 6, 8)
        leaves = [h] + [p.value for p in pp.branches[0].parameters()]
        err = grad_check(
            lambda: prm.attention_stack(h, pp.branches[0])
            .power(2.0).sum(), leaves)
        assert err < 1e-4


class TestFovea:
    def test_columns_sum_to_one(self):
        h = rnd(16, 10, 6)
        lam = Tensor(np.array([10.0]))
        mask = (prm.fovea(h, lam).data / h.data)
        np.testing.assert_allclose(mask.sum(axis=0), 1.0, atol=1e-9)

    def test_lambda_to_zero_limit(self):
        h = rnd(17, 8, 4)
        out = prm.fovea(h, Tensor(np.array([1e-8])))
        np.testing.assert_allclose(out.data, h.data / 8.0, atol=1e-6)

    def test_dominant_entry_concentrates(self):
        col = np.zeros((5, 1))
        col[2, 0] = 100.0
        out = prm.fovea(Tensor(col), Tensor(np.array([1.0])))
        mask = np.exp(col) / np.exp(col).sum(axis=0)
        assert mask[2, 0] > 0.99
        np.testing.assert_allclose(out.data, mask * col, atol=1e-12)

    @given(st.floats(0.1, 5.0), st.floats(1.01, 4.0))
    @settings(max_examples=40, deadline=None)
    def test_monotone_concentration(self, lam, factor):
        h = Tensor(np.random.default_rng(18).normal(size=(7, 3)))
        m1 = prm.fovea(h, Tensor(np.array([lam]))).data / h.data
        m2 = prm.fovea(h, Tensor(np.array([lam * factor]))).data / h.data
        for d in range(3):
            amax = int(np.argmax(h.data[:, d]))
            assert m2[amax, d] >= m1[amax, d] - 1e-12


class TestMvip:
    def test_zero_init_exact_zero(self):
        pp = make_prompter(6, 2, 3, randomize=False)
        out = prm.mvip(rnd(19, 6, 8), rnd(20, 6, 8), rnd(21, 6, 8), pp)
        assert np.all(out.data == 0.0)

    def test_shape_preserved(self):
        pp = make_prompter(12, 4, 3, seed=22)
        out = prm.mvip(rnd(23, 12, 16), rnd(24, 12, 16), rnd(25, 12, 16), pp)
        assert out.shape == (12, 16)

    def test_gradcheck_n6_d8(self):
        pp = make_prompter(6, 2, 3, seed=26)
        h_cur, p_prev, h_other = rnd(27, 6, 8), rnd(28, 6, 8), rnd(29, 6, 8)
        leaves = [h_cur, p_prev, h_other] + \
            [p.value for p in pp.parameters()]
        err = grad_check(
            lambda: prm.mvip(h_cur, p_prev, h_other, pp).power(2.0).sum(),
            leaves)
        assert err < 1e-4

    def test_flag_algebra_reduces_to_plain_sum(self):
        pp = make_prompter(6, 2, 3, seed=30)
        h_cur, p_prev, h_other = rnd(31, 6, 8), rnd(32, 6, 8), rnd(33, 6, 8)
        out = prm.mvip(h_cur, p_prev, h_other, pp, use_token_attn=False,
                       use_spatial_attn=False)
        expected = prm.fovea(h_cur, pp.lam.value).data + h_other.data \
            + p_prev.data
        np.testing.assert_array_equal(out.data, expected)

    def test_zero_other_removes_cross_modal_term(self):
        pp = make_prompter(6, 2, 3, seed=34)
        h_cur, p_prev = rnd(35, 6, 8), rnd(36, 6, 8)
        zero = Tensor(np.zeros((6, 8)))
        with_other = prm.mvip(h_cur, p_prev, zero, pp)
        without = prm.fovea(
            prm.attention_stack(h_cur, pp.branches[prm.BRANCH_CURRENT]),
            pp.lam.value).data + \
            prm.attention_stack(p_prev, pp.branches[prm.BRANCH_PREV]).data
        np.testing.assert_allclose(with_other.data, without, atol=1e-12)


class TestImvip:
    def test_zero_init_exact_zero(self):
        pp = make_prompter(6, 2, 2, randomize=False)
        out = prm.imvip(rnd(37, 6, 8), rnd(38, 6, 8), pp)
        assert np.all(out.data == 0.0)

    def test_shape_preserved(self):
        pp = make_prompter(12, 4, 2, seed=39)
        assert prm.imvip(rnd(40, 12, 16), rnd(41, 12, 16), pp).shape \
            == (12, 16)

    def test_equals_mvip_without_prev_branch(self):
        # same first-two-branch parameters; the prev branch gets zero input
        pp3 = make_prompter(6, 2, 3, seed=42)
        pp2 = prm.PrompterParams(branches=pp3.branches[:2], lam=pp3.lam)
        h_cur, h_other = rnd(43, 6, 8), rnd(44, 6, 8)
        via_imvip = prm.imvip(h_cur, h_other, pp2)
        via_mvip = prm.mvip(h_cur, Tensor(np.zeros((6, 8))), h_other, pp3)
        np.testing.assert_allclose(via_imvip.data, via_mvip.data, atol=1e-12)


class TestParamCount:
    def test_single_branch_closed_form(self):
        # N=320, r=16: g_s1 = 320*20+20, g_s2 = 20*320+320, g_t = 2*7+1
        assert prm.branch_param_count(320, 16) == 13155
        assert prm.branch_param_count(320, 16) + 1 == 13156

    def test_mvip_total(self):
        assert prm.prompter_param_count(320, 16, 3) == 3 * 13155 + 1 == 39466

    def test_count_matches_instantiated_tensors(self):
        pp = make_prompter(320, 16, 3, randomize=False)
        actual = sum(p.data.size for p in pp.parameters())
        assert actual == prm.prompter_param_count(320, 16, 3)

    def test_lightweight_vs_encoder_layer(self):
        from mplt.accounting import encoder_layer_param_count
        per_layer_two_directions = 2 * prm.prompter_param_count(320, 16, 3)
        encoder_layer = encoder_layer_param_count(768, 3072)
        assert per_layer_two_directions / encoder_layer < 0.02

    def test_indivisible_ratio_rejected(self):
        with pytest.raises(ValueError):
            prm.init_branch("x", 10, 3, np.random.default_rng(0))
