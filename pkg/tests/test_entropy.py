import math

import numpy as np
import pytest
from scipy import integrate, stats

from ecat import desk_config, paper_config
from ecat.codec.bitstream import LatentPack
from ecat.codec.hyperprior import (
    LIKELIHOOD_FLOOR,
    SIGMA_MIN,
    FactorizedPrior,
    HyperDecoder,
    HyperEncoder,
    factorized_bin_likelihood,
    gaussian_bin_likelihood,
    gaussian_bin_prob_np,
    logistic_bin_prob_np,
    rate_bits,
    rate_estimate,
)
from ecat.nn import Tensor, check_scalar_fn, functional as F


# -- hyper network shapes ------------------------------------------------------


def test_hyper_encode_shape_desk(fresh_model):
    z = Tensor(np.zeros((1, 4, 4, 48), dtype=np.float32))
    assert fresh_model.hyper_enc(z).shape == (1, 1, 1, 32)


def test_hyper_encode_shape_paper_with_odd_extents():
    cfg = paper_config(num_classes=10)
    enc = HyperEncoder(cfg, np.random.default_rng(0))
    h = enc(Tensor(np.zeros((14, 14, 192), dtype=np.float32)))
    assert h.shape == (4, 4, 128)


def test_hyper_encode_zero_input_zero_bias():
    cfg = desk_config()
    enc = HyperEncoder(cfg, np.random.default_rng(1))
    for conv in (enc.c0, enc.c1, enc.c2):
        conv.b.data[:] = 0.0
    out = enc(Tensor(np.zeros((4, 4, 48), dtype=np.float32)))
    np.testing.assert_allclose(out.data, 0.0)


def test_hyper_decode_shapes_and_sigma_floor(fresh_model):
    mu, sigma = fresh_model.hyper_dec(Tensor(np.zeros((1, 1, 1, 32), dtype=np.float32)))
    assert mu.shape == (1, 4, 4, 48)
    assert sigma.shape == (1, 4, 4, 48)
    assert sigma.data.min() >= SIGMA_MIN


def test_hyper_decode_paper_crops_back_to_latent_grid():
    cfg = paper_config(num_classes=10)
    dec = HyperDecoder(cfg, np.random.default_rng(2))
    mu, sigma = dec(Tensor(np.zeros((4, 4, 128), dtype=np.float32)))
    assert mu.shape == (14, 14, 192)


def test_hyper_decode_zero_weights_closed_form():
    # zero weights: mu = 0, sigma = softplus(0) + 1e-6 = ln 2 + 1e-6
    cfg = desk_config()
    dec = HyperDecoder(cfg, np.random.default_rng(3))
    for layer in (dec.d0, dec.d1, dec.c2):
        layer.w.data[:] = 0.0
        layer.b.data[:] = 0.0
    mu, sigma = dec(Tensor(np.zeros((1, 1, 32), dtype=np.float32)))
    np.testing.assert_allclose(mu.data, 0.0)
    np.testing.assert_allclose(sigma.data, math.log(2.0) + SIGMA_MIN, rtol=1e-6)


# -- gaussian bin likelihood ---------------------------------------------------


def test_gaussian_bin_matches_quadrature_oracle():
    # integral of N(0,1) over [-1/2, 1/2], computed independently
    oracle, _ = integrate.quad(lambda t: stats.norm.pdf(t), -0.5, 0.5)
    p = gaussian_bin_likelihood(
        Tensor(np.array([0.0])), Tensor(np.array([0.0])), Tensor(np.array([1.0]))
    )
    assert float(p.data) == pytest.approx(oracle, abs=1e-9)
    assert float(p.data) == pytest.approx(0.382925, abs=1e-6)
    assert -math.log2(float(p.data)) == pytest.approx(1.3849, abs=1e-4)


def test_gaussian_bin_point_mass_when_sigma_shrinks():
    p = gaussian_bin_likelihood(
        Tensor(np.array([0.0])), Tensor(np.array([0.0])), Tensor(np.array([1e-6]))
    )
    assert float(p.data) == pytest.approx(1.0, abs=1e-9)


def test_gaussian_bin_clamps_far_tail():
    p = gaussian_bin_likelihood(
        Tensor(np.array([100.0])), Tensor(np.array([0.0])), Tensor(np.array([0.5]))
    )
    assert float(p.data) == LIKELIHOOD_FLOOR
    assert -math.log2(float(p.data)) == pytest.approx(29.897, abs=1e-2)


def test_gaussian_bin_monotone_in_sigma_at_center():
    sigmas = np.array([0.3, 0.7, 1.5, 4.0, 10.0])
    p = gaussian_bin_prob_np(np.zeros(5), np.zeros(5), sigmas)
    assert (np.diff(p) < 0).all()


# -- factorized (logistic) likelihood ---------------------------------------------


def test_logistic_bin_closed_form_center():
    p = factorized_bin_likelihood(
        Tensor(np.array([0.0])), Tensor(np.array([0.0])), Tensor(np.array([1.0]))
    )
    expected = 2.0 / (1.0 + math.exp(-0.5)) - 1.0  # 2*sigmoid(1/2) - 1
    assert float(p.data) == pytest.approx(expected, abs=1e-9)
    assert float(p.data) == pytest.approx(0.244919, abs=1e-6)


def test_logistic_bin_symmetry():
    ks = np.arange(-5, 6).astype(np.float64)
    p_pos = logistic_bin_prob_np(ks, np.full_like(ks, 1.5), np.full_like(ks, 0.8))
    p_neg = logistic_bin_prob_np(-ks, np.full_like(ks, -1.5), np.full_like(ks, 0.8))
    np.testing.assert_allclose(p_pos, p_neg, rtol=1e-12)


def test_logistic_bin_sums_to_one():
    # unclamped bin masses over [-1000, 1000] cover the whole distribution
    ks = np.arange(-1000, 1001).astype(np.float64)
    p = F.logistic_bin_prob(Tensor(ks), Tensor(np.ones_like(ks)))
    assert float(p.data.sum()) == pytest.approx(1.0, abs=1e-6)


# -- rate estimate ------------------------------------------------------------------


def test_rate_bits_zero_when_likelihood_one():
    p = Tensor(np.ones((3, 3)))
    assert float(rate_bits(p).data) == pytest.approx(0.0, abs=1e-9)


def test_rate_bits_single_half_probability_is_one_bit():
    p = Tensor(np.array([0.5, 1.0, 1.0, 1.0]))
    assert float(rate_bits(p).data) == pytest.approx(1.0, abs=1e-9)


def test_rate_estimate_matches_naive_loop_oracle(warm_model):
    rng = np.random.default_rng(11)
    x = rng.uniform(0, 1, (64, 64, 3)).astype(np.float32)
    pack = warm_model.make_pack(x)
    mu, sigma = warm_model.mu_sigma_arrays(pack.hyper)
    est = rate_estimate(pack, mu, sigma, warm_model.prior)

    # independent elementwise summation using scipy's normal/logistic CDFs
    total = 0.0
    muf, sf = mu.reshape(-1), sigma.reshape(-1)
    for v, m, s in zip(pack.latent.reshape(-1), muf, sf):
        p = stats.norm.cdf(v + 0.5, m, s) - stats.norm.cdf(v - 0.5, m, s)
        total += -math.log2(max(p, LIKELIHOOD_FLOOR))
    loc, scale = warm_model.prior.arrays()
    for idx, v in enumerate(pack.hyper.reshape(-1)):
        c = idx % len(loc)
        p = stats.logistic.cdf(v + 0.5, loc[c], scale[c]) - stats.logistic.cdf(
            v - 0.5, loc[c], scale[c]
        )
        total += -math.log2(max(p, LIKELIHOOD_FLOOR))
    assert est == pytest.approx(total, rel=1e-6)


def test_rate_terms_differentiable(warm_model):
    report = check_scalar_fn(
        lambda d, s: F.sum(F.log(F.lower_bound(F.gaussian_bin_prob(d, s), LIKELIHOOD_FLOOR))),
        {
            "d": np.random.default_rng(5).normal(0, 2, 16),
            "s": np.random.default_rng(6).uniform(0.3, 3.0, 16),
        },
        tol=1e-6,
    )
    assert report.passed, str(report)


def test_prior_scale_positive():
    prior = FactorizedPrior(8)
    prior.scale_raw.data[:] = -50.0  # softplus underflows to ~0
    loc, scale = prior.arrays()
    assert (scale >= SIGMA_MIN).all()
