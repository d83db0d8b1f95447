import numpy as np
import pytest

from conftest import small_model
from gradutil import gradcheck
from kae import ndiff as nd
from kae.losses import LossConfig, total_loss
from kae.model import LatentCode, ModelConfig, add_noise


def batch(rng, b=3, m=7, vocab=9):
    ids = rng.integers(0, vocab - 3, size=(b, m))
    ids[:, 0] = vocab - 3
    mask = np.zeros((b, m), dtype=bool)
    ids[0, 5] = vocab - 2
    ids[0, 6:] = vocab - 1
    mask[0, 6:] = True
    return ids, mask


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=9, max_len=7, embedding_size=10, heads=4)
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=9, max_len=4, latent_positions=4)
    with pytest.raises(ValueError):
        ModelConfig(vocab_size=9, max_len=7, latent_positions=2, dtype="float16")
    assert ModelConfig(vocab_size=9, max_len=7, latent_positions=2, embedding_size=8, heads=2).ff_width == 32
    full = ModelConfig.full_preset(40, 120)
    assert (full.embedding_size, full.encoder_layers, full.latent_positions, full.latent_dim) == (128, 6, 10, 1280)


def test_shapes(rng):
    m = small_model()
    ids, mask = batch(rng)
    z = m.encode(ids, mask)
    assert z.values.shape == (3, 2, 8) and not z.noisy
    mem = m.expand(z)
    assert mem.shape == (3, 7, 8)
    probs = m.decode_logits(mem, ids[:, :-1])
    assert probs.shape == (3, 6, 9)
    np.testing.assert_allclose(probs.sum(-1), 1.0, rtol=1e-10)
    lpn, lpc, lat, lv = m.forward_train(ids, mask, rng=rng)
    assert lpn.shape == lpc.shape == (3, 6, 9) and lat.shape == (3, 16) and lv is None


def test_rejects_wrong_width_and_ids(rng):
    m = small_model()
    ids, mask = batch(rng)
    with pytest.raises(ValueError, match="max_len"):
        m.encode(ids[:, :5], mask[:, :5])
    bad = ids.copy()
    bad[1, 2] = 9
    with pytest.raises(ValueError):
        m.encode(bad, mask)


def test_condition_rules(rng):
    ids, mask = batch(rng)
    cm = small_model(conditional=True)
    with pytest.raises(ValueError):
        cm.encode(ids, mask)
    with pytest.raises(ValueError):
        cm.encode(ids, mask, condition=[1.0, 2.0])
    with pytest.raises(ValueError):
        cm.encode(ids, mask, condition=[1.0, np.nan, 2.0])
    um = small_model()
    with pytest.raises(ValueError):
        um.encode(ids, mask, condition=[1.0, 0.0, 0.0])
    np.testing.assert_array_equal(um.encode(ids, mask, condition=[0, 0, 0]).values, um.encode(ids, mask).values)


def test_condition_changes_output(rng):
    cm = small_model(conditional=True)
    ids, mask = batch(rng)
    z = cm.encode(ids, mask, condition=[1.0, 1.0, 1.0])
    a = cm.expand(z, [0.0, 0.0, 0.0])
    b = cm.expand(z, [3.0, 3.0, 3.0])
    assert not np.allclose(a, b)


def test_pads_do_not_leak_into_latent(rng):
    m = small_model()
    ids, mask = batch(rng)
    z1 = m.encode(ids, mask).values[0]
    ids2 = ids.copy()
    ids2[0, 6] = 2  # a non-pad token under a pad mask
    z2 = m.encode(ids2, mask).values[0]
    np.testing.assert_allclose(z1, z2, rtol=1e-12)


def test_incremental_decode_matches_full_pass(rng):
    m = small_model(dtype="float64")
    ids, mask = batch(rng, b=4)
    ids[0, 6] = 3
    mem = m.expand(m.encode(ids, mask))
    full = np.log(m.decode_logits(mem, ids))
    cache = m.decoder_cache(mem)
    for t in range(7):
        step = cache.step(ids[:, t])
        np.testing.assert_allclose(step, full[:, t], rtol=1e-9, atol=1e-9)
    with pytest.raises(ValueError):
        cache.step(ids[:, 0])


def test_cache_reorder_follows_rows(rng):
    m = small_model()
    ids, mask = batch(rng, b=3)
    mem = m.expand(m.encode(ids, mask))
    cache = m.decoder_cache(mem)
    cache.step(ids[:, 0])
    cache.reorder(np.array([2, 2, 0]))
    out = cache.step(ids[[2, 2, 0], 1])
    ref = np.log(m.decode_logits(mem[[2, 2, 0]], ids[[2, 2, 0], :2]))[:, 1]
    np.testing.assert_allclose(out, ref, rtol=1e-9, atol=1e-9)


def test_add_noise_refuses_double_noise(rng):
    z = LatentCode(np.zeros((2, 2, 8)))
    n = add_noise(z, rng)
    assert n.noisy and n.values.std() > 0
    with pytest.raises(ValueError):
        add_noise(n, rng)


def test_kl_variant_encode(rng):
    m = small_model(kl=True)
    ids, mask = batch(rng)
    mean, sigma = m.kl_variant_encode(ids, mask)
    assert mean.shape == sigma.shape == (3, 2, 8) and np.all(sigma > 0)
    with pytest.raises(ValueError):
        small_model().kl_variant_encode(ids, mask)


def test_dropout_off_at_inference(rng):
    m = small_model()
    m2 = m.with_config(dropout=0.5)
    ids, mask = batch(rng)
    np.testing.assert_array_equal(m.encode(ids, mask).values, m2.encode(ids, mask).values)


def test_same_seed_same_parameters():
    a, b = small_model(seed=3), small_model(seed=3)
    assert all(np.array_equal(a.params[k].data, b.params[k].data) for k in a.params)
    c = small_model(seed=4)
    assert any(not np.array_equal(a.params[k].data, c.params[k].data) for k in a.params)


@pytest.mark.parametrize("conditional,objective", [(False, "m-mmd"), (True, "s-mmd"), (False, "kl")])
def test_end_to_end_gradient(conditional, objective, rng):
    m = small_model(conditional=conditional, kl=objective == "kl")
    ids, mask = batch(rng)
    cond = np.array([0.5, -1.0, 2.0]) if conditional else None
    cfg = LossConfig(lam=3.5, delta=1.0, objective=objective)
    gauss = rng.standard_normal((6, 16))
    names = sorted(m.params)

    def fn(*arrays):
        for k, a in zip(names, arrays):
            m.params[k] = a
        lpn, lpc, lat, lv = m.forward_train(ids, mask, cond, rng=np.random.default_rng(5), training=False)
        loss, _ = total_loss(lpn, lpc, ids[:, 1:], mask[:, 1:], cfg, lat, nd.constant(gauss), lat, lv)
        return loss

    saved = dict(m.params)
    try:
        arrays = [saved[k].data.copy() for k in names]
        err = gradcheck(fn, arrays, coords=4, rng=np.random.default_rng(0), joint=True)
    finally:
        m.params.update(saved)
    assert err < 1e-5
