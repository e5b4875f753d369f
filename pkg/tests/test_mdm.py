import itertools

import numpy as np
import pytest

from layoutdiff import mdm
from layoutdiff.denoise import OracleDenoiser
from layoutdiff.layout import one_hot
from layoutdiff.schedules import NoiseSchedule, cosine_schedule


def transition(beta, K):
    return (1 - beta) * np.eye(K) + beta / K


def bayes_posterior(ct, c0_hat, t, betas, K):
    """q(c_{t-1}=j | c_t, c0_hat) by enumerating both c_0 and c_{t-1}."""
    Q = [transition(b, K) for b in betas]
    Qbar = np.eye(K)
    for q in Q[: t - 1]:
        Qbar = Qbar @ q
    mass = np.zeros(K)
    for j in range(K):
        for i in range(K):
            mass[j] += c0_hat[i] * Qbar[i, j] * Q[t - 1][j, ct]
    return mass / mass.sum()


def test_forward_step_examples():
    theta = np.array([0.1, 0.6, 0.3])
    assert np.array_equal(mdm.forward_step_kernel(theta, 0.0), theta)
    np.testing.assert_allclose(mdm.forward_step_kernel(theta, 1.0), np.full(3, 1 / 3))
    np.testing.assert_allclose(mdm.forward_step_kernel([1.0, 0.0], 0.5), [0.75, 0.25])


def test_forward_marginal_matches_matrix_product(rng):
    for _ in range(50):
        T = int(rng.integers(1, 6))
        K = int(rng.integers(2, 5))
        s = NoiseSchedule(rng.uniform(0.01, 0.9, T))
        c0 = one_hot(rng.integers(K), K)
        M = np.eye(K)
        for t in range(1, T + 1):
            M = M @ transition(s.betas[t - 1], K)
            np.testing.assert_allclose(mdm.forward_marginal(c0, t, s), c0 @ M, atol=1e-12, rtol=0)
    assert np.array_equal(mdm.forward_marginal(c0, 0, s), c0)


def test_forward_marginal_limit():
    s = NoiseSchedule(np.full(3, 1.0 - 1e-9))
    np.testing.assert_allclose(mdm.forward_marginal(np.eye(4)[2], 3, s), np.full(4, 0.25), atol=1e-8)


def test_posterior_matches_enumeration(rng):
    for _ in range(300):
        K = int(rng.integers(2, 5))
        T = int(rng.integers(1, 6))
        betas = rng.uniform(0.01, 0.99, T)
        s = NoiseSchedule(betas)
        t = int(rng.integers(1, T + 1))
        ct = int(rng.integers(K))
        c0_hat = rng.dirichlet(np.ones(K))
        got = mdm.posterior(one_hot(ct, K), c0_hat, t, s)
        np.testing.assert_allclose(got, bayes_posterior(ct, c0_hat, t, betas, K), atol=1e-12, rtol=0)


def test_posterior_deterministic_chain():
    s = NoiseSchedule(np.array([0.3, 1e-300]))
    post = mdm.posterior(np.eye(3)[1], np.eye(3)[1], 2, s)
    np.testing.assert_allclose(post, np.eye(3)[1], atol=1e-12)


def test_posterior_sums_to_one(rng):
    s = cosine_schedule(30)
    ct = one_hot(rng.integers(0, 4, 10_000), 4)
    c0 = rng.dirichlet(np.ones(4), 10_000)
    t = rng.integers(1, 31, 10_000)
    post = mdm.posterior(ct, c0, t, s)
    assert np.all(post >= 0)
    np.testing.assert_allclose(post.sum(-1), 1.0, atol=1e-12)


def test_masked_kernel_examples(rng):
    theta = np.array([0.2, 0.3, 0.5])
    assert np.array_equal(mdm.masked_kernel(theta, np.ones(3)), theta)
    np.testing.assert_allclose(mdm.masked_kernel(theta, [1, 0, 1]), [2 / 7, 0, 5 / 7])
    assert np.array_equal(mdm.masked_kernel(theta, np.eye(3)[1]), np.eye(3)[1])
    draws = mdm.masked_reverse_step(np.broadcast_to(theta, (500, 3)), np.eye(3)[1], rng)
    assert np.all(draws == 1)


def test_masked_kernel_errors():
    with pytest.raises(mdm.MaskKernelError):
        mdm.masked_kernel([0.0, 1.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        mdm.masked_kernel([0.5, 0.5], [-1.0, 1.0])


def test_categorical_draw_frequencies(rng):
    p = np.array([0.1, 0.0, 0.6, 0.3])
    draws = mdm.categorical_draw(np.broadcast_to(p, (40_000, 4)), rng.random(40_000))
    freq = np.bincount(draws, minlength=4) / 40_000
    assert freq[1] == 0
    np.testing.assert_allclose(freq, p, atol=0.01)


def test_categorical_draw_edges():
    p = np.array([[0.0, 1.0, 0.0]])
    assert mdm.categorical_draw(p, np.array([0.0]))[0] == 1
    assert mdm.categorical_draw(p, np.array([1.0 - 1e-17]))[0] == 1


def test_oracle_sampling_accuracy():
    s = cosine_schedule(20)
    rng = np.random.default_rng(0)
    truth = rng.integers(0, 4, (12, 12))
    oracle = OracleDenoiser(truth, s, "mdm", K=4)
    out = mdm.sample(oracle, s, 4, K=4, H=12, W=12, seed=3)
    assert np.mean(out == truth) >= 0.99


def test_full_mask_returns_observation(rng):
    s = cosine_schedule(10)
    obs = rng.integers(0, 4, (8, 8))
    oracle = OracleDenoiser(rng.integers(0, 4, (8, 8)), s, "mdm", K=4)
    out = mdm.sample(oracle, s, 3, K=4, H=8, W=8, mask=np.ones((8, 8), bool), observed=obs, seed=1)
    assert np.all(out == obs)


def test_freeze_holds_every_step(rng):
    s = cosine_schedule(15)
    obs = rng.integers(0, 4, (8, 8))
    mask = rng.random((8, 8)) < 0.4
    oracle = OracleDenoiser(rng.integers(0, 4, (8, 8)), s, "mdm", K=4)
    seen = []

    def check(t, start, labels):
        seen.append(t)
        assert np.all(labels[:, mask] == obs[mask])

    mdm.sample(oracle, s, 5, K=4, H=8, W=8, mask=mask, observed=obs, seed=2, callback=check)
    assert seen == list(range(15, -1, -1))


class ConditionProbe:
    """Logits that depend on the condition and the null flag, so branches differ."""

    engine, prediction = "mdm", "logits"

    def __call__(self, x, t, cond, dropped):
        B = x.shape[0]
        base = np.zeros(x.shape)
        c = np.zeros((B, 2)) if cond is None else np.asarray(cond)
        scale = np.where(np.asarray(dropped), 0.3, 1.0 + c.sum(1))
        base[..., 1] = scale[:, None, None] * (x[..., 2] + 0.5)
        return base


def test_guidance_w1_equals_conditional():
    s = cosine_schedule(8)
    probe = ConditionProbe()
    cond = [(6, 5)] * 4
    plain = mdm.sample(probe, s, 4, K=3, H=6, W=6, condition=cond, seed=9)
    w1 = mdm.sample(probe, s, 4, K=3, H=6, W=6, condition=cond, guidance_w=1.0, seed=9)
    assert np.array_equal(plain, w1)


def test_guided_logits_algebra(rng):
    probe = ConditionProbe()
    x = one_hot(rng.integers(0, 3, (2, 4, 4)), 3)
    cond = np.array([[0.5, 0.4], [0.2, 0.9]])
    u = probe(x, None, cond, np.ones(2, bool))
    c = probe(x, None, cond, np.zeros(2, bool))
    np.testing.assert_allclose(mdm.guided_logits(probe, x, 3, cond, 4.0), u + 4 * (c - u))
    np.testing.assert_array_equal(mdm.guided_logits(probe, x, 3, cond, 0.0), u)


def test_serial_equals_parallel(rng):
    s = cosine_schedule(6)
    oracle = OracleDenoiser(rng.integers(0, 3, (6, 6)), s, "mdm", K=3, margin=1.0)
    a = mdm.sample(oracle, s, 10, K=3, H=6, W=6, seed=4, chunk_size=3, workers=1)
    b = mdm.sample(oracle, s, 10, K=3, H=6, W=6, seed=4, chunk_size=3, workers=3)
    assert np.array_equal(a, b)


def test_sample_prefix_stable(rng):
    s = cosine_schedule(6)
    oracle = OracleDenoiser(rng.integers(0, 3, (6, 6)), s, "mdm", K=3, margin=1.0)
    a = mdm.sample(oracle, s, 4, K=3, H=6, W=6, seed=4, chunk_size=4)
    b = mdm.sample(oracle, s, 8, K=3, H=6, W=6, seed=4, chunk_size=4)
    assert np.array_equal(a, b[:4])


def test_mask_without_observation_rejected():
    s = cosine_schedule(4)
    with pytest.raises(ValueError):
        mdm.sample(None, s, 1, K=3, H=4, W=4, mask=np.ones((4, 4), bool))


def test_normalize_conditions():
    from layoutdiff.layout import DimSpec
    out = mdm.normalize_conditions([DimSpec(16, 8), (32, 32)], 2, H=32, W=64)
    np.testing.assert_allclose(out, [[0.25, 0.25], [0.5, 1.0]])
    with pytest.raises(ValueError):
        mdm.normalize_conditions([(1, 2)], 3, 8, 8)


def test_small_enumeration_of_kernel(rng):
    for K in (2, 3, 4):
        for r in itertools.product((0.0, 1.0), repeat=K):
            if not any(r):
                continue
            theta = rng.dirichlet(np.ones(K))
            out = mdm.masked_kernel(theta, r)
            expect = np.array(r) * theta / np.dot(r, theta)
            np.testing.assert_allclose(out, expect, atol=1e-15)


def test_forward_posterior_consistency(rng):
    """Marginal at t-1 equals the posterior averaged over c_t drawn from the marginal at t (1x1 grid)."""
    for K in (2, 3, 4):
        s = NoiseSchedule(rng.uniform(0.05, 0.9, 5))
        c0 = np.eye(K)[rng.integers(K)]
        for t in range(1, 6):
            q_t = mdm.forward_marginal(c0, t, s)
            mix = sum(q_t[k] * mdm.posterior(np.eye(K)[k], c0, t, s) for k in range(K))
            np.testing.assert_allclose(mix, mdm.forward_marginal(c0, t - 1, s), atol=1e-9)
