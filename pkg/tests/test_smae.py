from dataclasses import replace

import numpy as np
import pytest

from deduce.errors import ConfigError, DataError
from deduce.losses import LossConfig, total_loss
from deduce.nn_core import ParamStore, grad_check
from deduce.smae import (
    SmaeConfig,
    backward_pair,
    cluster_project,
    cluster_project_backward,
    embed,
    encode,
    encode_backward,
    forward_pair,
    init_params,
    instance_project,
    instance_project_backward,
    load_checkpoint,
    multi_head_attention,
    multi_head_attention_backward,
    position_encode,
    position_encode_backward,
    save_checkpoint,
)

GRAD_TOL = 1e-3


def _generic(params, rng):
    """Random biases: zero biases plus dead ReLUs can put a row exactly on the zero-norm guard."""
    for name in params:
        if name.endswith(".b") and not name.startswith("norm"):
            params[name][:] = rng.normal(scale=0.1, size=params[name].shape)
    return params


def _x(rng, cfg, n=4):
    return rng.normal(size=(n, sum(cfg.block_dims)))


def test_param_shapes(tiny_cfg):
    p = init_params(tiny_cfg, seed=0)
    assert p["pe0.W"].shape == (3, 8)
    assert p["pe2.b"].shape == (1, 8)
    assert p["attn.q.W"].shape == (8, 8) and "attn.q.b" not in p
    assert p["ffn.1.W"].shape == (8, 6) and p["ffn.2.W"].shape == (6, 8)
    assert p["inst.3.W"].shape == (6, 3) and p["clus.3.W"].shape == (6, 3)
    assert not p["pe1.b"].any()
    limit = np.sqrt(6 / (8 + 8))
    assert np.abs(p["attn.k.W"]).max() <= limit


def test_config_validation():
    with pytest.raises(ConfigError):
        SmaeConfig(block_dims=[3], d_model=10, n_heads=3).validate()
    with pytest.raises(ConfigError):
        SmaeConfig(block_dims=[3], n_clusters=1).validate()
    with pytest.raises(ConfigError):
        SmaeConfig(block_dims=[]).validate()


def test_position_encode_identity():
    cfg = SmaeConfig(block_dims=[4], d_model=4, n_heads=1, embed_dim=2, n_clusters=2, mlp_hidden=4)
    p = init_params(cfg)
    p["pe0.W"][:] = np.eye(4)
    x = np.arange(8.0).reshape(2, 4)
    tokens, _ = position_encode(x, p, cfg)
    assert tokens.shape == (2, 1, 4)
    np.testing.assert_array_equal(tokens[:, 0, :], x)


def test_position_encode_zero(tiny_cfg):
    tokens, _ = position_encode(np.zeros((3, 9)), init_params(tiny_cfg), tiny_cfg)
    assert tokens.shape == (3, 3, 8) and not tokens.any()


def test_position_encode_shape_mismatch(tiny_cfg):
    with pytest.raises(DataError):
        position_encode(np.zeros((3, 8)), init_params(tiny_cfg), tiny_cfg)


def test_single_token_attention_is_one():
    cfg = SmaeConfig(block_dims=[5], d_model=8, n_heads=2, dropout_rate=0.0, embed_dim=2, n_clusters=2, mlp_hidden=4)
    p = init_params(cfg, seed=3)
    tokens = np.random.default_rng(0).normal(size=(4, 1, 8))
    _, cache = multi_head_attention(tokens, p, cfg)
    np.testing.assert_array_equal(cache["attn"], np.ones((4, 2, 1, 1)))


def test_identical_tokens_identical_outputs(tiny_cfg, rng):
    p = init_params(tiny_cfg, seed=1)
    tok = rng.normal(size=(2, 1, 8))
    out, _ = multi_head_attention(np.repeat(tok, 3, axis=1), p, tiny_cfg)
    np.testing.assert_allclose(out[:, 0], out[:, 1], atol=1e-12)
    np.testing.assert_allclose(out[:, 1], out[:, 2], atol=1e-12)


def test_attention_rows_sum_to_one(tiny_cfg, rng):
    _, cache = multi_head_attention(rng.normal(size=(5, 3, 8)) * 3, init_params(tiny_cfg, 2), tiny_cfg)
    np.testing.assert_allclose(cache["attn"].sum(-1), 1.0, atol=1e-9)


def test_eval_encode_pure(tiny_cfg, rng):
    cfg = replace(tiny_cfg, dropout_rate=0.3)
    p = init_params(cfg, seed=0)
    x = _x(rng, cfg)
    a, _ = encode(x, p, cfg, training=False)
    b, _ = encode(x, p, cfg, training=False)
    np.testing.assert_array_equal(a, b)
    c, _ = encode(x, p, cfg, training=True, rng=np.random.default_rng(0))
    assert not np.array_equal(a, c)


def test_row_permutation_equivariance(tiny_cfg, rng):
    p = init_params(tiny_cfg, seed=0)
    x = _x(rng, tiny_cfg, n=6)
    perm = rng.permutation(6)
    a, _ = encode(x, p, tiny_cfg)
    b, _ = encode(x[perm], p, tiny_cfg)
    np.testing.assert_allclose(b, a[perm], atol=1e-12)


def test_weight_sharing(tiny_cfg, rng):
    p = init_params(tiny_cfg, seed=0)
    x = _x(rng, tiny_cfg)
    pair = forward_pair(x, x.copy(), p, tiny_cfg, training=False)
    np.testing.assert_array_equal(pair.features1, pair.features2)
    np.testing.assert_array_equal(pair.inst1, pair.inst2)
    p["attn.v.W"][0, 0] += 0.5
    moved = forward_pair(x, x.copy(), p, tiny_cfg, training=False)
    assert not np.allclose(moved.features1, pair.features1)
    assert not np.allclose(moved.features2, pair.features2)


def test_block_permutation_property(rng):
    cfg = SmaeConfig(block_dims=[3, 2, 4], d_model=8, n_heads=2, dropout_rate=0.0, embed_dim=3, n_clusters=3, mlp_hidden=6)
    p = init_params(cfg, seed=0)
    for m in range(3):
        p[f"pe{m}.b"][:] = rng.normal(size=(1, 8))
    x = _x(rng, cfg)
    order = [2, 0, 1]
    slices = [x[:, s : s + w] for s, w in cfg.offsets]
    x_perm = np.hstack([slices[m] for m in order])
    cfg_perm = replace(cfg, block_dims=[cfg.block_dims[m] for m in order])
    p_perm = ParamStore()
    for name in p:
        if name.startswith("pe"):
            m_new = int(name[2])
            p_perm.add(name, p[f"pe{order[m_new]}" + name[3:]])
        else:
            p_perm.add(name, p[name])
    np.testing.assert_allclose(encode(x_perm, p_perm, cfg_perm)[0], encode(x, p, cfg)[0], atol=1e-12)

    # equal widths: reordering raw blocks under the original params changes the output
    eq = replace(cfg, block_dims=[3, 3, 3])
    pe = init_params(eq, seed=0)
    for m in range(3):
        pe[f"pe{m}.b"][:] = rng.normal(size=(1, 8))
    x = _x(rng, eq)
    swapped = np.hstack([x[:, 6:9], x[:, 0:3], x[:, 3:6]])
    assert not np.allclose(encode(swapped, pe, eq)[0], encode(x, pe, eq)[0])


def test_instance_head_contract(tiny_cfg, rng):
    p = init_params(tiny_cfg, seed=0)
    feats = rng.normal(size=(5, 8))
    feats[3] = feats[1]
    u, _ = instance_project(feats, p)
    np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0, atol=1e-6)
    np.testing.assert_array_equal(u[3], u[1])


def test_instance_head_zero_row_guard(tiny_cfg):
    p = init_params(tiny_cfg, seed=0)
    p["inst.3.W"][:] = 0.0
    u, cache = instance_project(np.ones((2, 8)), p)
    np.testing.assert_array_equal(u, [[1.0, 0.0, 0.0]] * 2)
    assert not instance_project_backward(np.ones_like(u), cache, p).any()


def test_cluster_head_contract(tiny_cfg, rng):
    p = init_params(tiny_cfg, seed=0)
    probs, _ = cluster_project(rng.normal(size=(5, 8)) * 4, p)
    assert (probs >= 0).all()
    np.testing.assert_allclose(probs.sum(1), 1.0, atol=1e-6)
    p["clus.3.W"][:] = 0.0
    probs, _ = cluster_project(rng.normal(size=(5, 8)), p)
    np.testing.assert_allclose(probs, 1 / 3, atol=1e-15)


def test_checkpoint_roundtrip(tmp_path, tiny_cfg, rng):
    p = init_params(tiny_cfg, seed=7)
    save_checkpoint(tmp_path / "ck.npz", p, tiny_cfg)
    back, cfg = load_checkpoint(tmp_path / "ck.npz")
    assert cfg == tiny_cfg
    for name in p:
        np.testing.assert_array_equal(back[name], p[name])
    x = _x(rng, tiny_cfg)
    np.testing.assert_array_equal(embed(x, back, cfg)[0], embed(x, p, tiny_cfg)[0])
    assert [f.name for f in tmp_path.iterdir()] == ["ck.npz"]


def test_checkpoint_bad_file(tmp_path):
    (tmp_path / "bad.npz").write_text("nope")
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "bad.npz")


def test_embed_batches_consistent(tiny_cfg, rng):
    p = init_params(tiny_cfg, seed=0)
    x = _x(rng, tiny_cfg, n=7)
    a = embed(x, p, tiny_cfg, batch_size=3)
    b = embed(x, p, tiny_cfg, batch_size=100)
    np.testing.assert_allclose(a[0], b[0], atol=1e-12)
    np.testing.assert_allclose(a[1], b[1], atol=1e-12)


# gradient checks: each stage with a random linear readout


def _readout_check(rng, params, forward, backward, wrt_input=None):
    probe = {}

    def fn(ps):
        out, cache = forward(ps)
        if "p" not in probe:
            probe["p"] = rng.normal(size=out.shape)
        dx = backward(probe["p"], cache, ps)
        if wrt_input is not None:
            ps.accumulate("__input__", dx)
        return float((out * probe["p"]).sum())

    return grad_check(fn, params)


def _with_input(params, x):
    params.add("__input__", x)
    return params


def test_grad_position_encode(tiny_cfg, rng):
    p = _with_input(init_params(tiny_cfg, 0), _x(rng, tiny_cfg))
    err = _readout_check(
        rng, p,
        lambda ps: position_encode(ps["__input__"], ps, tiny_cfg),
        lambda d, c, ps: position_encode_backward(d, c, ps, tiny_cfg),
        wrt_input=True,
    )
    assert err <= GRAD_TOL


def test_grad_attention(rng):
    cfg = SmaeConfig(block_dims=[2, 2, 2], d_model=8, n_heads=2, dropout_rate=0.0, embed_dim=2, n_clusters=2, mlp_hidden=6)
    p = _with_input(init_params(cfg, 0), rng.normal(size=(2, 3, 8)))
    err = _readout_check(
        rng, p,
        lambda ps: multi_head_attention(ps["__input__"], ps, cfg),
        lambda d, c, ps: multi_head_attention_backward(d, c, ps, cfg),
        wrt_input=True,
    )
    assert err <= GRAD_TOL


def test_grad_attention_with_fixed_dropout_mask(rng):
    cfg = SmaeConfig(block_dims=[2, 2], d_model=8, n_heads=4, dropout_rate=0.3, embed_dim=2, n_clusters=2, mlp_hidden=6)
    p = init_params(cfg, 0)
    tokens = rng.normal(size=(3, 2, 8))
    err = _readout_check(
        rng, p,
        lambda ps: multi_head_attention(tokens, ps, cfg, training=True, rng=np.random.default_rng(5)),
        lambda d, c, ps: multi_head_attention_backward(d, c, ps, cfg),
    )
    assert err <= GRAD_TOL


def test_grad_encode(tiny_cfg, rng):
    p = _with_input(init_params(tiny_cfg, 0), _x(rng, tiny_cfg))
    err = _readout_check(
        rng, p,
        lambda ps: encode(ps["__input__"], ps, tiny_cfg),
        lambda d, c, ps: encode_backward(d, c, ps, tiny_cfg),
        wrt_input=True,
    )
    assert err <= GRAD_TOL


def test_grad_instance_head(tiny_cfg, rng):
    p = _with_input(_generic(init_params(tiny_cfg, 0), rng), rng.normal(size=(4, 8)))
    err = _readout_check(
        rng, p,
        lambda ps: instance_project(ps["__input__"], ps),
        lambda d, c, ps: instance_project_backward(d, c, ps),
        wrt_input=True,
    )
    assert err <= GRAD_TOL


def test_grad_cluster_head(tiny_cfg, rng):
    p = _with_input(_generic(init_params(tiny_cfg, 0), rng), rng.normal(size=(4, 8)))
    err = _readout_check(
        rng, p,
        lambda ps: cluster_project(ps["__input__"], ps),
        lambda d, c, ps: cluster_project_backward(d, c, ps),
        wrt_input=True,
    )
    assert err <= GRAD_TOL


@pytest.mark.parametrize("kind", ["dcl", "infonce"])
def test_grad_total_loss_all_params(tiny_cfg, rng, kind):
    cfg = replace(tiny_cfg, n_clusters=4)
    p = _generic(init_params(cfg, seed=1), rng)
    v1, v2 = _x(rng, cfg, n=6), _x(rng, cfg, n=6)
    lcfg = LossConfig(instance_kind=kind)

    def fn(ps):
        pair = forward_pair(v1, v2, ps, cfg)
        bd, grads = total_loss(pair.inst1, pair.inst2, pair.clus1, pair.clus2, lcfg)
        backward_pair(pair, grads, ps, cfg)
        return bd.total

    assert grad_check(fn, p) <= GRAD_TOL
