import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit, softmax

from slicehin.context import ContextSubgraph
from slicehin.model import (SliceModel, attention, encode, forward, link_probability,
                            masked_node_logits, similarity, translate_layer)

from oracles import naive_attention, naive_forward, naive_translate


def small_model(seed=0, n=8, d=8, k=2, h=2, activation="gelu", scale=1.0):
    rng = np.random.default_rng(seed)
    m = SliceModel(n, d, k, h, rng=rng, activation=activation)
    for name in m.params:
        m.params[name] = m.params[name] * scale
    m.params["embed"] = rng.normal(size=m.params["embed"].shape)
    return m


def test_encode_rows():
    m = small_model()
    assert np.array_equal(encode(ContextSubgraph((3,)), m), m.params["embed"][[3]])
    masked = ContextSubgraph((1, m.mask_id, 4), mask_pos=1)
    assert np.array_equal(encode(masked, m)[1], m.params["embed"][m.mask_id])
    perm = [2, 0, 1]
    assert np.array_equal(encode(masked.permuted(perm), m), encode(masked, m)[perm])


def test_encode_rejects_bad_ids():
    m = small_model()
    with pytest.raises(IndexError):
        encode(ContextSubgraph((m.num_nodes + 1,)), m)


def test_zero_attention_weights_are_uniform():
    m = small_model()
    m.params["layer0.W1"][:] = 0
    m.params["layer0.W2"][:] = 0
    H = encode(ContextSubgraph((0, 1, 2, 3, 4)), m)
    assert np.allclose(attention(H, m, 0), 1 / 5, atol=0, rtol=1e-15)


def test_single_node_attention():
    m = small_model()
    H = encode(ContextSubgraph((2,)), m)
    assert np.array_equal(attention(H, m, 1, head=0), [[1.0]])


def test_attention_matches_oracle():
    m = small_model(3)
    H = encode(ContextSubgraph((0, 5, 2, 7)), m)
    A = attention(H, m, 0)
    assert np.max(np.abs(A - naive_attention(H, m.params["layer0.W1"], m.params["layer0.W2"]))) < 1e-12
    assert np.array_equal(attention(H, m, 0, head=1), A[1])


def test_translate_identity_hook_doubles():
    m = small_model(activation="identity")
    m.params["layer0.Ws"] = np.eye(m.dim)
    H = encode(ContextSubgraph((1, 2, 3)), m)
    eye = np.stack([np.eye(3)] * m.num_heads)
    assert np.allclose(translate_layer(H, eye, m, 0), 2 * H, rtol=0, atol=1e-15)


def test_translate_zero_state():
    m = small_model()
    A = np.full((m.num_heads, 3, 3), 1 / 3)
    out = translate_layer(np.zeros((3, m.dim)), A, m, 0)
    assert np.array_equal(out, np.zeros((3, m.dim)))


def test_translate_matches_oracle(rng):
    m = small_model(4)
    H = rng.normal(size=(5, m.dim))
    A = softmax(rng.normal(size=(m.num_heads, 5, 5)), axis=-1)
    out = translate_layer(H, A, m, 1)
    assert np.max(np.abs(out - naive_translate(H, A, m.params["layer1.Ws"]))) < 1e-12


def test_translate_checks_shapes():
    m = small_model()
    with pytest.raises(ValueError):
        translate_layer(np.zeros((3, m.dim)), np.zeros((1, 3, 3)), m, 0)


def test_single_layer_final_is_layer_output():
    m = small_model(k=1)
    res = forward(ContextSubgraph((0, 1, 2)), m)
    assert np.array_equal(res.final, res.layer_outputs[0])


def test_default_width():
    m = SliceModel(10, rng=np.random.default_rng(0))
    assert m.d_cat == 512
    assert forward(ContextSubgraph((0, 1)), m).final.shape == (2, 512)


def test_forward_matches_oracle():
    m = small_model(5)
    nodes = (1, 6, 0, m.mask_id)
    res = forward(nodes, m)
    layers, final, assoc = naive_forward(nodes, m.params, m.num_layers)
    assert np.max(np.abs(res.final - final)) < 1e-12
    assert np.max(np.abs(res.assoc - assoc)) < 1e-12
    assert res.assoc.shape == (2, 2, 4, 4)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 6))
def test_permutation_equivariance(seed, n):
    rng = np.random.default_rng(seed)
    m = small_model(seed % 97)
    nodes = tuple(int(x) for x in rng.choice(m.num_nodes, size=n, replace=False))
    ctx = ContextSubgraph(nodes)
    perm = rng.permutation(n)
    a, b = forward(ctx, m), forward(ctx.permuted(perm), m)
    assert np.max(np.abs(b.final - a.final[perm])) < 1e-12
    assert np.max(np.abs(b.assoc - a.assoc[:, :, perm][:, :, :, perm])) < 1e-12


def test_masked_logits_shape_and_uniform():
    m = small_model()
    res = forward(ContextSubgraph((0, m.mask_id), mask_pos=1), m)
    logits = masked_node_logits(res.final, 1, m)
    assert logits.shape == (m.num_nodes + 1,)
    m.params["mask_head.W"][:] = 0
    p = softmax(masked_node_logits(res.final, 1, m))
    assert np.allclose(p, 1 / (m.num_nodes + 1), rtol=1e-15, atol=0)


def test_link_probability():
    m = small_model()
    res = forward(ContextSubgraph((0, 1, 2)), m)
    p = link_probability(res.final, 0, 2, m)
    assert 0 < p < 1
    z = np.concatenate([res.final[0], res.final[2]]) @ m.params["link_head.W"] + m.params["link_head.b"]
    assert p == pytest.approx(softmax(z)[1], rel=1e-12)
    m.params["link_head.W"][:] = 0
    assert link_probability(res.final, 0, 2, m) == 0.5


def test_similarity_cases():
    assert similarity([1.0, 0.0], [0.0, 1.0]) == 0.5
    h = np.array([1.0, 3.0])
    assert similarity(h, h) == pytest.approx(expit(10.0), rel=1e-15)
    assert similarity(h, h) == pytest.approx(0.99995, abs=1e-5)
    u = np.array([0.6, 0.8]) * 5
    assert similarity(u, -u) == pytest.approx(1.3887943864964021e-11, rel=1e-9)
    with pytest.raises(ValueError):
        similarity([1.0], [1.0, 2.0])


def test_constructor_validation():
    with pytest.raises(ValueError):
        SliceModel(5, 10, 2, 4)
    with pytest.raises(ValueError):
        SliceModel(5, 8, 2, 2, embeddings=np.zeros((5, 8)))


def test_mask_row_zero_when_random():
    m = SliceModel(5, 8, 2, 2, rng=np.random.default_rng(0))
    assert np.all(m.params["embed"][5] == 0)


def test_checkpoint_round_trip(tmp_path):
    m = small_model(7)
    m.save(tmp_path / "ck.json")
    back = SliceModel.load(tmp_path / "ck.json")
    assert back.hyperparameters() == m.hyperparameters()
    for name in m.params:
        assert np.array_equal(back.params[name], m.params[name])


def test_checkpoint_version_checked(tmp_path):
    (tmp_path / "ck.json").write_text('{"version": 99}')
    with pytest.raises(ValueError, match="version"):
        SliceModel.load(tmp_path / "ck.json")


def test_nonfinite_scores_raise():
    m = small_model()
    m.params["layer0.W1"][:] = 1e300
    m.params["layer0.W2"][:] = 1e300
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(FloatingPointError):
        forward(ContextSubgraph((0, 1)), m)
