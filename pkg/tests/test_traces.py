"""Eligibility trace decay, accumulation, and reset semantics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamrl.traces import TraceSet


def test_first_accumulation_equals_gradient():
    t = TraceSet(4, gamma=0.99, lam=0.8)
    g = np.array([1.0, -2.0, 0.5, 0.0])
    t.accumulate(g)
    assert np.array_equal(t.z, g)


def test_hand_arithmetic():
    t = TraceSet(2, gamma=0.99, lam=0.8)
    t.accumulate(np.array([1.0, 0.0]))
    t.accumulate(np.array([0.0, 1.0]))
    assert np.allclose(t.z, [0.792, 1.0])


def test_lambda_zero_keeps_only_latest_gradient():
    t = TraceSet(3, gamma=0.99, lam=0.0)
    rng = np.random.default_rng(0)
    for _ in range(10):
        g = rng.standard_normal(3)
        t.accumulate(g)
        assert np.array_equal(t.z, g)


def test_reset_zeroes_and_is_idempotent():
    t = TraceSet(5, gamma=1.0, lam=1.0)
    t.accumulate(np.ones(5))
    t.reset()
    assert np.all(t.z == 0.0)
    t.reset()
    assert np.all(t.z == 0.0)


def test_shape_mismatch_rejected():
    t = TraceSet(3, gamma=0.9, lam=0.5)
    with pytest.raises(ValueError):
        t.accumulate(np.ones(4))


@given(st.integers(1, 30),
       st.floats(0.0, 1.0), st.floats(0.0, 1.0),
       st.floats(-10.0, 10.0))
@settings(max_examples=60)
def test_geometric_identity_for_constant_gradient(k, gamma, lam, gval):
    # k accumulations of a constant g give g * sum_{j<k} (gamma*lam)^j
    t = TraceSet(1, gamma=gamma, lam=lam)
    g = np.array([gval])
    for _ in range(k):
        t.accumulate(g)
    factor = sum((gamma * lam) ** j for j in range(k))
    assert np.allclose(t.z, g * factor, rtol=1e-10, atol=1e-12)


def test_l1_norm_finite_under_bounded_gradients():
    t = TraceSet(8, gamma=0.99, lam=0.95)
    rng = np.random.default_rng(4)
    for _ in range(10_000):
        t.accumulate(rng.uniform(-1.0, 1.0, size=8))
    assert np.isfinite(t.l1_norm())
    # geometric bound: ||z||_1 <= max|g| * dim / (1 - gamma*lam)
    assert t.l1_norm() <= 8.0 / (1.0 - 0.99 * 0.95) + 1e-9
