from __future__ import annotations

import itertools
from math import factorial

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from fragflow.bag import (
    BagConfig,
    PositiveNotInBag,
    TooManyPositives,
    bag_log_weights,
    conditional_reweight,
    gumbel_top_k,
    inclusion_probabilities,
    infonce_loss,
    infonce_posterior,
    posterior_from_logits,
    sample_bag_inference,
    sample_bag_train,
    tempered_log_marginal,
)

# Synthetic 4-category model: marginal p1 and a likelihood for one observation.
P1 = np.array([0.4, 0.3, 0.2, 0.1])
LIK = np.array([0.1, 0.5, 0.9, 2.0])
EXACT = P1 * LIK / (P1 * LIK).sum()
RATIO = EXACT / P1


def expected_snis_posterior(n: int) -> np.ndarray:
    """Average in-bag posterior over every multiset of n i.i.d. draws from P1."""
    est = np.zeros(4)
    for counts in itertools.product(range(n + 1), repeat=4):
        if sum(counts) != n:
            continue
        c = np.array(counts)
        prob = factorial(n) / np.prod([factorial(k) for k in counts]) * np.prod(P1**c)
        est += prob * infonce_posterior(RATIO, c)
    return est


def tv(p, q) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def test_full_vocab_posterior_is_exact():
    assert np.abs(infonce_posterior(RATIO, P1) - EXACT).max() <= 1e-12


def test_tv_decreases_with_bag_size():
    errors = [tv(expected_snis_posterior(n), EXACT) for n in (2, 4, 8, 16)]
    errors.append(tv(infonce_posterior(RATIO, P1), EXACT))
    assert all(a > b for a, b in zip(errors, errors[1:])), errors
    assert errors[-1] <= 1e-12


def test_snis_enumeration_matches_monte_carlo():
    rng = np.random.default_rng(0)
    n, reps = 4, 40000
    est = np.zeros(4)
    for _ in range(reps):
        est += infonce_posterior(RATIO, np.bincount(rng.choice(4, n, p=P1), minlength=4))
    assert np.abs(est / reps - expected_snis_posterior(n)).max() < 0.01


def test_set_bag_full_vocab_posterior_is_exact():
    post = posterior_from_logits(np.log(RATIO), 1.0, None, bag_log_weights(np.log(P1), 4))
    assert np.abs(post - EXACT).max() <= 1e-12


def test_set_bag_tv_decreases_with_bag_size():
    # Set-valued bags drawn without replacement, weighted by p_bag / π.
    rng = np.random.default_rng(0)
    v = 32
    p1 = rng.dirichlet(np.full(v, 0.7))
    q = p1 * np.exp(-2 * (rng.standard_normal(v) - 0.5) ** 2)
    q /= q.sum()
    log_ratio = np.log(q / p1)
    errors = []
    for n in (2, 4, 8, 16, v):
        offset = bag_log_weights(np.log(p1), n)
        est = np.zeros(v)
        reps = 4000 if n < v else 1
        for _ in range(reps):
            mask = np.zeros(v, dtype=bool)
            mask[sample_bag_inference(p1, n, 1.0, rng)] = True
            est += posterior_from_logits(log_ratio, 1.0, mask, offset)
        errors.append(tv(est / reps, q))
    assert all(a > b for a, b in zip(errors, errors[1:])), errors
    assert errors[-1] <= 1e-12


def test_inclusion_probabilities_match_monte_carlo():
    rng = np.random.default_rng(0)
    p = rng.dirichlet(np.ones(20))
    pi = inclusion_probabilities(np.log(p), 5)
    assert pi.sum() == pytest.approx(5.0, abs=1e-9)
    counts = np.zeros(20)
    for _ in range(20000):
        counts[sample_bag_inference(p, 5, 1.0, rng)] += 1
    assert np.abs(counts / 20000 - pi).max() < 0.02


def test_inclusion_probabilities_edge_cases():
    logw = np.log(np.array([0.5, 0.3, 0.2]))
    assert inclusion_probabilities(logw, 3).tolist() == [1.0, 1.0, 1.0]
    zero = np.array([0.0, -np.inf, 0.0])
    assert inclusion_probabilities(zero, 2).tolist() == [1.0, 0.0, 1.0]
    assert bag_log_weights(zero, 1)[1] == -np.inf


def test_posterior_rejects_nonpositive_scores():
    with pytest.raises(ValueError):
        infonce_posterior([1.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=50))
def test_posterior_normalized(scores):
    assert abs(infonce_posterior(scores).sum() - 1.0) <= 1e-12


# bag sampling


def test_negative_frequencies_match_marginal():
    rng = np.random.default_rng(0)
    marginal = rng.dirichlet(np.ones(10))
    counts = np.zeros(10)
    reps = 100_000
    for _ in range(reps):
        bag = sample_bag_train([0], marginal, 2, rng)
        counts[bag[bag != 0]] += 1
    # one negative per bag, drawn from p1 with the positive rejected
    expected = marginal / (1 - marginal[0])
    expected[0] = 0
    assert np.abs(counts / reps - expected).max() < 0.01


def test_bag_trivial_cases():
    rng = np.random.default_rng(0)
    m = np.full(5, 0.2)
    assert sample_bag_train([0, 1, 2], m, 3, rng).tolist() == [0, 1, 2]
    assert sample_bag_train([4], m, 5, rng).tolist() == [0, 1, 2, 3, 4]
    assert sample_bag_inference(m, 5, 1.0, rng).tolist() == [0, 1, 2, 3, 4]
    with pytest.raises(TooManyPositives):
        sample_bag_train([0, 1, 2], m, 2, rng)
    with pytest.raises(ValueError):
        sample_bag_inference(m, 6, 1.0, rng)


def test_bag_contains_positives_without_duplicates():
    rng = np.random.default_rng(1)
    m = rng.dirichlet(np.ones(30))
    for _ in range(200):
        pos = rng.choice(30, 4, replace=False)
        bag = sample_bag_train(pos, m, 12, rng)
        assert len(bag) == 12 == len(set(bag.tolist()))
        assert set(pos.tolist()) <= set(bag.tolist())


def test_gumbel_top_k_skips_zero_weight():
    rng = np.random.default_rng(0)
    logw = np.log(np.array([0.5, 0.0, 0.5]) + 0.0, where=np.array([True, False, True]), out=np.full(3, -np.inf))
    assert gumbel_top_k(logw, 3, rng).tolist() == [0, 2]


def test_high_temperature_is_uniform():
    marginal = np.array([0.9, 0.05, 0.03, 0.02])
    logits = tempered_log_marginal(marginal, 1e9)
    assert np.ptp(logits) < 1e-8
    rng = np.random.default_rng(0)
    counts = np.zeros(4)
    for _ in range(20000):
        counts[sample_bag_inference(marginal, 1 + 1, 1e9, rng)] += 1
    assert np.abs(counts / 20000 - 0.5).max() < 0.02


def test_temperature_flattens_inclusion():
    marginal = np.array([0.7, 0.2, 0.07, 0.03])
    rng = np.random.default_rng(0)

    def rare_rate(t_bag):
        return np.mean([3 in sample_bag_inference(marginal, 2, t_bag, rng) for _ in range(5000)])

    assert rare_rate(1.5) > rare_rate(1.0)


def test_bag_config_validation():
    with pytest.raises(ValueError):
        BagConfig(n_train=1)
    with pytest.raises(ValueError):
        BagConfig(t_bag=0)
    with pytest.raises(ValueError):
        BagConfig(lambda_bag=-1)


# posterior and loss


def test_uniform_logits_loss_is_log_n():
    for n in (2, 7, 128):
        loss = infonce_loss(torch.zeros(3, n), torch.tensor([0, 1, n - 1]))
        assert float(loss) == pytest.approx(np.log(n), abs=1e-6)


def test_loss_rejects_missing_positive():
    with pytest.raises(PositiveNotInBag):
        infonce_loss(torch.zeros(1, 4), torch.tensor([-1]))


def test_posterior_shift_invariance():
    x = np.random.default_rng(0).standard_normal((3, 9))
    assert np.allclose(posterior_from_logits(x + 17.0), posterior_from_logits(x), atol=1e-14)


def test_posterior_numpy_matches_torch_and_masks():
    x = np.random.default_rng(0).standard_normal((2, 6))
    mask = np.array([[1, 1, 0, 1, 0, 1], [0, 1, 1, 1, 1, 1]], dtype=bool)
    a = posterior_from_logits(x, 0.7, mask)
    b = posterior_from_logits(torch.tensor(x), 0.7, torch.tensor(mask)).numpy()
    assert np.allclose(a, b, atol=1e-12)
    assert (a[~mask] == 0).all()
    assert np.allclose(a.sum(-1), 1.0)


def test_low_prediction_temperature_sharpens():
    x = np.array([1.0, 0.5, 0.0])
    assert posterior_from_logits(x, 0.5)[0] > posterior_from_logits(x, 1.0)[0]


def test_infonce_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    x = torch.tensor(rng.standard_normal((4, 6)), dtype=torch.float64, requires_grad=True)
    pos = torch.tensor([0, 3, 5, 2])
    infonce_loss(x, pos).backward()
    h = 1e-6
    num = np.zeros((4, 6))
    base = x.detach().clone()
    for i in range(4):
        for j in range(6):
            up, down = base.clone(), base.clone()
            up[i, j] += h
            down[i, j] -= h
            num[i, j] = (float(infonce_loss(up, pos)) - float(infonce_loss(down, pos))) / (2 * h)
    assert np.abs(num - x.grad.numpy()).max() < 1e-8


# conditional reweighting


def test_conditional_reweight_hand_computed():
    p = np.array([0.1, 0.2, 0.3, 0.25, 0.15])
    mu = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    w = np.array([0.1 * np.exp(-4), 0.2 * np.exp(-1), 0.3, 0.25 * np.exp(-1), 0.15 * np.exp(-4)])
    assert np.allclose(conditional_reweight(p, mu, 2.0, 1.0), w / w.sum(), atol=1e-15)


def test_conditional_reweight_limits():
    p = np.array([0.1, 0.2, 0.3, 0.25, 0.15])
    mu = np.array([0.0, 1.0, 2.1, 3.0, 4.0])
    assert np.array_equal(conditional_reweight(p, mu, 2.0, 0.0), p)
    sharp = conditional_reweight(p, mu, 2.0, 1e6)
    assert sharp[2] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        conditional_reweight(p, mu, 2.0, -0.1)


def test_conditional_reweight_keeps_zero_mass_at_zero():
    p = np.array([0.0, 0.5, 0.5])
    out = conditional_reweight(p, np.array([2.0, 0.0, 5.0]), 2.0, 10.0)
    assert out[0] == 0.0 and abs(out.sum() - 1) < 1e-12
