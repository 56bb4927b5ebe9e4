from __future__ import annotations

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fragflow.guidance import (
    DegenerateRow,
    GuidanceConfig,
    conditioned_kernel,
    guidance_factors,
    tilt_kernel,
)


def linear_predictor(weights, latent_weight=0.0):
    """μ = Σ_i ⟨w, onehot_i⟩ + c · Σ z, ignoring edges and time."""
    w = torch.as_tensor(weights, dtype=torch.float64)

    def predict(nodes, edges, mask, t, z):
        return (nodes * w).sum((-1, -2)) + latent_weight * z.sum(-1)

    return predict


def one_hot_state(index, size, n=1):
    x = np.zeros((1, n, size))
    x[0, :, index] = 1.0
    return x


def test_lambda_zero_gives_unit_multipliers():
    cfg = GuidanceConfig(lambda_x=0.0, target=3.0)
    node_log, edge_log, shift = guidance_factors(
        linear_predictor([1.0, 2.0, 0.0]), one_hot_state(2, 3, 2), np.zeros((1, 2, 2, 2)), np.ones((1, 2), bool), 0.5, np.zeros((1, 4)), cfg
    )
    rows = np.array([[0.2, 0.3, 0.5], [0.0, 0.4, 0.6]])
    assert (node_log == 0).all()
    assert np.allclose(tilt_kernel(rows, node_log[0]), rows, atol=1e-15)
    assert (edge_log == 0).all() and (shift == 0).all()


def test_tilt_example():
    out = conditioned_kernel(np.array([[0.5, 0.5]]), np.array([[np.e, 1.0]]))
    assert np.allclose(out, [[np.e / (np.e + 1), 1 / (np.e + 1)]], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(1e-3, 1.0)), st.floats(1e-3, 1e3))
def test_constant_multipliers_leave_kernel_unchanged(raw, c):
    rows = raw / raw.sum(-1, keepdims=True)
    out = conditioned_kernel(rows, np.full_like(rows, c))
    assert np.allclose(out, rows, atol=1e-12)
    assert np.allclose(out.sum(-1), 1.0, atol=1e-12)


def test_degenerate_row_raises():
    with pytest.raises(DegenerateRow):
        conditioned_kernel(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(1e-3, 1.0)), arrays(np.float64, (3, 5), elements=st.floats(-20, 20)))
def test_log_tilt_matches_linear_tilt(raw, log_mult):
    rows = raw / raw.sum(-1, keepdims=True)
    assert np.allclose(tilt_kernel(rows, log_mult), conditioned_kernel(rows, np.exp(log_mult)), atol=1e-12)


def test_log_tilt_survives_pull_onto_zero_mass_entry():
    # The largest multiplier sits where the kernel has no mass; exponentiating
    # after a plain row-max shift underflows the supported entries.
    rows = np.array([[0.0, 0.3, 0.7]])
    log_mult = np.array([[0.0, -80.0, -81.0]])
    with pytest.raises(DegenerateRow):
        conditioned_kernel(rows, np.exp(log_mult - log_mult.max()))
    w = np.array([0.0, 0.3, 0.7 * np.exp(-1)])
    assert np.allclose(tilt_kernel(rows, log_mult), [w / w.sum()], atol=1e-15)


def test_log_tilt_empty_row_raises():
    with pytest.raises(DegenerateRow):
        tilt_kernel(np.array([[0.0, 0.0]]), np.array([[0.0, 1.0]]))


def test_two_state_linear_toy_hand_computed():
    # States (A, MASK) with predictor weights (a_A, a_M); the node is masked.
    a = np.array([3.0, 1.0])
    target, lam, sigma2 = 2.0, 0.5, 0.25
    cfg = GuidanceConfig(target=target, lambda_x=lam, sigma2=sigma2)
    node_log, _, _ = guidance_factors(
        linear_predictor(a), one_hot_state(1, 2), np.zeros((1, 1, 1, 2)), np.ones((1, 1), bool), 0.3, np.zeros((1, 2)), cfg
    )
    mu = a[1]
    grad = 2 * (mu - target) * a
    expected = -(lam / sigma2) * (grad - grad[1])
    assert np.allclose(node_log[0, 0], expected, atol=1e-12)
    # moving to A raises μ from 1 toward 2: favored
    assert node_log[0, 0, 0] > 0 == node_log[0, 0, 1]
    rows = np.array([[0.5, 0.5]])
    tilted = conditioned_kernel(rows, np.exp(node_log[0]))
    assert tilted[0, 0] == pytest.approx(np.exp(expected[0]) / (np.exp(expected[0]) + 1), abs=1e-12)


def test_latent_shift_descends_error():
    cfg = GuidanceConfig(target=0.0, lambda_x=1.0, sigma2=2.0)
    z = np.array([[0.5, 0.25]])
    _, _, shift = guidance_factors(
        linear_predictor([0.0, 0.0], latent_weight=1.0), one_hot_state(1, 2), np.zeros((1, 1, 1, 2)), np.ones((1, 1), bool), 0.3, z, cfg
    )
    # d/dz (Σz)^2 = 2 Σz per dim; scaled by -λ/σ²
    assert np.allclose(shift, -(1.0 / 2.0) * 2 * 0.75, atol=1e-12)


def test_edge_multipliers_are_symmetric():
    def predict(nodes, edges, mask, t, z):
        w = torch.tensor([[0.0, 1.0, 2.0], [0.5, 0.0, 0.0], [0.0, 3.0, 0.0]], dtype=torch.float64)
        return (edges[..., 1] * w).sum((-1, -2))

    edges = np.zeros((1, 3, 3, 2))
    edges[..., 0] = 1.0
    _, edge_log, _ = guidance_factors(predict, one_hot_state(0, 2, 3), edges, np.ones((1, 3), bool), 0.5, np.zeros((1, 1)),
                                      GuidanceConfig(target=5.0, lambda_x=1.0))
    assert np.allclose(edge_log, edge_log.transpose(0, 2, 1, 3))


def test_config_validation():
    with pytest.raises(ValueError):
        GuidanceConfig(lambda_x=-1)
    with pytest.raises(ValueError):
        GuidanceConfig(sigma2=0)
