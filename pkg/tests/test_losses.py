import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kae import ndiff as nd
from kae.losses import (
    LossConfig, cel, cel_from_probs, kernel_matrix, kl_loss, kl_loss_logvar, m_mmd, rbf_kernel,
    s_mmd, total_loss, two_sigma_sq_si, wcel,
)


def log_probs(rng, b=3, s=5, t=6):
    x = rng.standard_normal((b, s, t))
    return x - np.log(np.exp(x).sum(-1, keepdims=True))


def labels_and_mask(rng, b=3, s=5, t=6):
    labels = rng.integers(0, t, size=(b, s))
    mask = np.zeros((b, s), dtype=bool)
    mask[0, 3:] = True
    return labels, mask


def cel_loop(lp, labels, mask):
    total = 0.0
    for i in range(lp.shape[0]):
        for j in range(lp.shape[1]):
            if not mask[i, j]:
                total -= lp[i, j, labels[i, j]]
    return total / lp.shape[0]


def test_cel_matches_loop(rng):
    lp = log_probs(rng)
    labels, mask = labels_and_mask(rng)
    got = float(cel(nd.constant(lp), labels, mask).data)
    assert got == pytest.approx(cel_loop(lp, labels, mask), rel=1e-12)


def test_cel_trivial_cases():
    t, s = 4, 3
    uniform = np.full((1, s, t), -math.log(t))
    labels = np.zeros((1, s), dtype=int)
    no_pad = np.zeros((1, s), dtype=bool)
    assert float(cel(nd.constant(uniform), labels, no_pad).data) == pytest.approx(s * math.log(t))
    perfect = np.full((1, s, t), -np.inf)
    perfect[..., 0] = 0.0
    assert float(cel(nd.constant(np.where(np.isinf(perfect), -50.0, perfect)), labels, no_pad).data) == 0.0


def test_cel_from_probs_clamps_zero(caplog):
    probs = np.array([[[0.0, 1.0]]])
    out = float(cel_from_probs(nd.constant(probs), np.array([[0]]), np.zeros((1, 1), bool)).data)
    assert out == pytest.approx(-math.log(1e-12))
    assert any("clamp" in r.message or "floor" in r.message for r in caplog.records)


def test_wcel_special_cases(rng):
    lpn, lpc = nd.constant(log_probs(rng)), nd.constant(log_probs(rng))
    labels, mask = labels_and_mask(rng)
    cn = float(cel(lpn, labels, mask).data)
    cc = float(cel(lpc, labels, mask).data)
    assert float(wcel(lpn, lpc, labels, mask, 1.0, -1.0).data) == cn
    assert float(wcel(lpn, lpc, labels, mask, 0.0, 1.0).data) == pytest.approx((cn + cc) / 2, rel=1e-14)
    with pytest.raises(ValueError):
        wcel(lpn, lpc, labels, mask, 1.0, -2.0)


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(lam=1.0, delta=-2.0)
    with pytest.raises(ValueError):
        LossConfig(two_sigma_sq=0.0)
    with pytest.raises(ValueError):
        LossConfig(gaussian_samples=0)
    with pytest.raises(ValueError):
        LossConfig(objective="vae")
    assert two_sigma_sq_si(128) == pytest.approx(0.064)


def test_kernel_hand_example():
    assert rbf_kernel([1.0, 0.0], [0.0, 1.0], 0.64) == pytest.approx(math.exp(-1.5625), rel=1e-15)
    with pytest.raises(ValueError):
        rbf_kernel([1.0], [1.0, 2.0])


def mmd_loops(x, y, lam, tss):
    nx, ny = len(x), len(y)
    kxx = sum(rbf_kernel(x[i], x[j], tss) for i in range(nx) for j in range(nx)) / nx**2
    kxy = sum(rbf_kernel(x[i], y[j], tss) for i in range(nx) for j in range(ny)) / (nx * ny)
    return lam * (kxx - 2 * kxy), lam * (1 - kxy)


def test_mmd_match_loops(rng):
    x, y = rng.standard_normal((7, 5)), rng.standard_normal((9, 5))
    s_ref, m_ref = mmd_loops(x, y, 2.5, 0.64)
    assert float(s_mmd(nd.constant(x), nd.constant(y), 2.5, 0.64).data) == pytest.approx(s_ref, rel=1e-12)
    assert float(m_mmd(nd.constant(x), nd.constant(y), 2.5, 0.64).data) == pytest.approx(m_ref, rel=1e-12)


def test_mmd_trivial_cases():
    x = nd.constant(np.array([[0.3, -1.0]]))
    assert float(s_mmd(x, x, 2.0).data) == pytest.approx(-2.0)
    assert float(m_mmd(x, x, 2.0).data) == pytest.approx(0.0, abs=1e-15)
    far = nd.constant(np.array([[100.0, 100.0]]))
    assert float(m_mmd(far, x, 3.0).data) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        m_mmd(nd.constant(np.zeros((0, 2))), x, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 5), st.floats(0.1, 5.0), st.integers(0, 2**31 - 1))
def test_mmd_ranges_and_permutation_symmetry(nx, ny, d, lam, seed):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal((nx, d)), r.standard_normal((ny, d))
    m = float(m_mmd(nd.constant(x), nd.constant(y), lam).data)
    s = float(s_mmd(nd.constant(x), nd.constant(y), lam).data)
    assert 0.0 <= m <= lam
    assert -2 * lam - 1e-12 <= s <= lam + 1e-12
    px, py = r.permutation(nx), r.permutation(ny)
    assert float(m_mmd(nd.constant(x[px]), nd.constant(y[py]), lam).data) == pytest.approx(m, rel=1e-12, abs=1e-15)
    assert float(s_mmd(nd.constant(x[px]), nd.constant(y[py]), lam).data) == pytest.approx(s, rel=1e-12, abs=1e-15)


def test_kernel_matrix_diagonal_and_symmetry(rng):
    x = nd.constant(rng.standard_normal((6, 4)))
    k = kernel_matrix(x, x, 0.64).data
    np.testing.assert_allclose(np.diag(k), 1.0, rtol=0, atol=1e-12)
    np.testing.assert_allclose(k, k.T, rtol=0, atol=1e-15)


def test_m_mmd_prefers_centred_latents():
    r = np.random.default_rng(7)
    wins = 0
    for _ in range(100):
        g = nd.constant(r.standard_normal((64, 8)))
        centred = nd.constant(r.standard_normal((32, 8)))
        shifted = nd.constant(r.standard_normal((32, 8)) + 3.0)
        wins += float(m_mmd(centred, g, 1.0, 2.0).data) < float(m_mmd(shifted, g, 1.0, 2.0).data)
    assert wins == 100


def test_kl_examples(rng):
    assert float(kl_loss(nd.constant(np.zeros((2, 3))), nd.constant(np.ones((2, 3)))).data) == 0.0
    assert float(kl_loss(nd.constant(np.ones((1, 1))), nd.constant(np.ones((1, 1)))).data) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        kl_loss(nd.constant(np.zeros((1, 1))), nd.constant(np.zeros((1, 1))))
    mean, sigma = rng.standard_normal((4, 3)), np.abs(rng.standard_normal((4, 3))) + 0.1
    a = float(kl_loss(nd.constant(mean), nd.constant(sigma)).data)
    b = float(kl_loss_logvar(nd.constant(mean), nd.constant(2 * np.log(sigma))).data)
    assert a == pytest.approx(b, rel=1e-12) and a >= 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_kl_nonnegative(seed):
    r = np.random.default_rng(seed)
    mean, logvar = r.standard_normal((3, 4)) * 2, r.standard_normal((3, 4)) * 2
    assert float(kl_loss_logvar(nd.constant(mean), nd.constant(logvar)).data) >= 0


@pytest.mark.parametrize("objective", ["m-mmd", "s-mmd", "kl"])
def test_total_loss_report_sums(objective, rng):
    lpn, lpc = nd.constant(log_probs(rng)), nd.constant(log_probs(rng))
    labels, mask = labels_and_mask(rng)
    cfg = LossConfig(lam=3.5, delta=1.0, objective=objective)
    lat, g = nd.constant(rng.standard_normal((3, 4))), nd.constant(rng.standard_normal((10, 4)))
    logvar = nd.constant(rng.standard_normal((3, 4)) * 0.1)
    loss, rep = total_loss(lpn, lpc, labels, mask, cfg, lat, g, lat, logvar)
    assert rep.total == rep.wcel + rep.regularizer
    assert float(loss.data) == pytest.approx(rep.total, rel=1e-14)
    if objective == "kl":
        assert rep.regularizer == pytest.approx(3.5 * float(kl_loss_logvar(lat, logvar).data))


def test_total_loss_plain_special_case(rng):
    lpn, lpc = nd.constant(log_probs(rng)), nd.constant(log_probs(rng))
    labels, mask = labels_and_mask(rng)
    lat, g = nd.constant(rng.standard_normal((3, 4))), nd.constant(rng.standard_normal((10, 4)))
    _, rep = total_loss(lpn, lpc, labels, mask, LossConfig(), lat, g)
    assert rep.wcel == rep.cel_noisy
    assert rep.regularizer == pytest.approx(float(m_mmd(lat, g, 1.0).data))
