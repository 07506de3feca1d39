# -*- coding: utf-8 -*-
"""

Quantizer tests.

"""

import pytest
import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from spikeutils.envutils import NumericalError
from spikeutils.neuron import gif_encode, gif_decode
from spikeutils.quant import (
    ChannelPlan,
    QuantizedTensor,
    UNSTRUCTURED,
    uniform_quantize,
    mixed_step_quantize,
    mixed_step_dequantize,
    quantize_weights,
    quantize_ternary_weights,
    gptq_quantize,
    AffineGroupQuantizer,
)
from spikeutils.saliency import hessian, select_salient


def _outlier_tokens(seed, tokens=32, channels=64, outlier=5, scale=10.0):
    rs = np.random.RandomState(seed)
    x = rs.randn(tokens, channels)
    x[:, outlier] *= scale
    return x


def test_uniform_quantize_examples():
    q = uniform_quantize([[0.0, 1.0]], bits=2)
    assert_allclose(q.scale, [[1 / 3.0]])
    assert_array_equal(q.codes, [[0, 3]])
    q = uniform_quantize([[0.2, 0.9, 0.45]], bits=2, rounding='floor')
    assert_array_equal(q.codes, [[0, 3, 1]])
    assert_allclose(q.scale, [[0.7 / 3]])
    # constant input
    x = np.full((2, 3), 0.75)
    q = uniform_quantize(x, bits=4)
    assert_array_equal(q.codes, 0)
    assert_allclose(q.dequantize(), x)


def test_uniform_quantize_modes():
    rs = np.random.RandomState(0)
    x = rs.randn(8, 5)
    q = uniform_quantize(x, bits=3, mode='per-channel', rounding='nearest')
    assert q.scale.shape == (1, 5)
    assert q.codes.min() >= 0 and q.codes.max() <= 7
    assert np.all(np.abs(q.dequantize() - x) <= q.scale / 2 * (1 + 1e-9))
    q = uniform_quantize(x, bits=3)
    assert q.scale.shape == (8, 1)
    assert np.all(np.abs(q.dequantize() - x) <= q.scale * (1 + 1e-9))
    with pytest.raises(ValueError):
        uniform_quantize(x, bits=0)
    with pytest.raises(ValueError):
        uniform_quantize(x, bits=9)
    with pytest.raises(ValueError):
        uniform_quantize(x, bits=4, mode='per-group')
    with pytest.raises(ValueError):
        uniform_quantize(x, bits=4, rounding='ceil')


def test_uniform_quantize_symmetric():
    rs = np.random.RandomState(1)
    x = rs.randn(6, 10)
    q = uniform_quantize(x, bits=4, symmetric=True)
    assert q.kind == 'symmetric'
    assert q.codes.min() >= -8 and q.codes.max() <= 7
    assert_array_equal(q.zero_point, 0)
    assert np.all(np.abs(q.dequantize() - x) <= q.scale / 2 * (1 + 1e-9))
    with pytest.raises(ValueError):
        uniform_quantize(x, bits=1, symmetric=True)


def test_uniform_config_rounding():
    """Activation rounding defaults to floor"""
    x = np.array([[0.0, 0.9, 1.0]])
    assert_array_equal(uniform_quantize(x, bits=1).codes, [[0, 0, 1]])
    assert_array_equal(uniform_quantize(x, bits=1, rounding='nearest').codes, [[0, 1, 1]])


def test_channel_plan():
    plan = ChannelPlan(10, salient_set=[3, 7], salient_steps=4, levels=16)
    assert plan.ratio == 0.2
    assert_array_equal(plan.channel_steps, [1, 1, 1, 4, 1, 1, 1, 4, 1, 1])
    assert plan.weight_steps(3).shape == (3, 10)
    with pytest.raises(ValueError):
        ChannelPlan(4, salient_set=[1, 1])
    with pytest.raises(ValueError):
        ChannelPlan(4, salient_set=[4])
    with pytest.raises(ValueError):
        ChannelPlan(4, salient_steps=0)
    with pytest.raises(ValueError):
        ChannelPlan(4, levels=1)
    with pytest.raises(ValueError):
        ChannelPlan(4, granularity=UNSTRUCTURED)
    steps = np.ones((2, 4), dtype=int)
    steps[0, 1] = 4
    plan = ChannelPlan(4, granularity=UNSTRUCTURED, element_steps=steps, levels=2)
    assert plan.ratio == 1 / 8.0
    assert_array_equal(plan.weight_steps(2), steps)
    with pytest.raises(ValueError):
        plan.weight_steps(3)


def test_channel_plan_constructors():
    report = select_salient([0.5, 3.0, 1.0, 2.0], 0.5)
    plan = ChannelPlan.from_report(report, 2, 16)
    assert plan.salient_set == (1, 3)
    plan = ChannelPlan.from_steps([1, 2, 1, 2], 16)
    assert plan.salient_set == (1, 3)
    assert plan.salient_steps == 2 and plan.base_steps == 1
    # uniform steps: no salient channels
    plan = ChannelPlan.from_steps([2, 2, 2], 4)
    assert plan.salient_set == ()
    assert_array_equal(plan.channel_steps, [2, 2, 2])
    with pytest.raises(ValueError):
        ChannelPlan.from_steps([1, 2, 4], 16)


def test_mixed_step_collapse_uniform():
    """No salient channels: exactly the floor uniform quantizer"""
    rs = np.random.RandomState(2)
    for k in range(20):
        x = rs.randn(16, 32) * rs.uniform(0.1, 5)
        plan = ChannelPlan(32, levels=16)
        s = mixed_step_quantize(x, plan)
        q = uniform_quantize(x, bits=4, rounding='floor')
        assert_array_equal(s.codes[:, :, 0], q.codes)
        assert_array_equal(mixed_step_dequantize(s, plan), q.dequantize())


def test_mixed_step_collapse_gif():
    """All channels salient: exactly the GIF encoder"""
    rs = np.random.RandomState(3)
    x = rs.randn(16, 32)
    plan = ChannelPlan(32, salient_set=range(32), salient_steps=2, levels=16)
    s = mixed_step_quantize(x, plan)
    g = gif_encode(x, 2, 16)
    assert_array_equal(s.codes, g.codes)
    assert_array_equal(mixed_step_dequantize(s, plan), gif_decode(g))


def test_mixed_step_outlier():
    """A salient outlier channel gets half the step of one-step encoding"""
    x = _outlier_tokens(4)
    u = x - x.min(axis=1, keepdims=True)
    salient = ChannelPlan(64, salient_set=[5], salient_steps=2, levels=16)
    onestep = ChannelPlan(64, salient_set=[5], salient_steps=1, levels=16)
    err2 = np.abs(x - mixed_step_dequantize(mixed_step_quantize(x, salient), salient))
    err1 = np.abs(x - mixed_step_dequantize(mixed_step_quantize(x, onestep), onestep))
    rng5 = u[:, 5]
    assert np.all(err2[:, 5] <= rng5 / 30 * (1 + 1e-9) + 1e-12)
    assert np.all(err1[:, 5] <= rng5 / 15 * (1 + 1e-9) + 1e-12)
    # more steps never increase the error of a salient element
    assert np.all(err2[:, 5] <= err1[:, 5] + 1e-12)
    # the base class range excludes the outlier
    s = mixed_step_quantize(x, salient)
    base = np.delete(np.arange(64), 5)
    assert_allclose(s.delta[:, 0], u[:, base].max(axis=1) / 15)


def test_mixed_step_properties():
    for seed in range(100):
        rs = np.random.RandomState(seed)
        x = rs.randn(32, 64)
        sel = rs.permutation(64)[:6]
        plan = ChannelPlan(64, salient_set=sel, salient_steps=2, levels=16)
        s = mixed_step_quantize(x, plan)
        xq = mixed_step_dequantize(s, plan)
        assert s.codes.max() <= 15
        assert_array_equal(s.codes[:, plan.channel_steps == 1, 1], 0)
        assert np.max(np.abs(x - xq)) <= s.delta.max() * (1 + 1e-9)
    # per-token affinity
    s2 = mixed_step_quantize(2.5 * x - 1.0, plan)
    assert_array_equal(s2.codes, s.codes)
    assert_allclose(mixed_step_dequantize(s2, plan), 2.5 * xq - 1.0, atol=1e-12)


def test_mixed_step_errors():
    x = np.zeros((2, 4))
    with pytest.raises(ValueError):
        mixed_step_quantize(x, ChannelPlan(5))
    plan = ChannelPlan(4, salient_set=[0], salient_steps=2)
    s = mixed_step_quantize(x, plan)
    with pytest.raises(ValueError):
        mixed_step_dequantize(s, ChannelPlan(4, salient_set=[1], salient_steps=2))
    with pytest.raises(ValueError):
        mixed_step_dequantize(s, ChannelPlan(3))


def test_quantized_tensor_groups():
    codes = np.array([[0, 1, 2, 3, 3]])
    q = QuantizedTensor(codes, [[1.0, 2.0, 1.0]], [[0.0, -1.0, 0.0]], 2, group_size=2)
    assert_allclose(q.dequantize(), [[0, 1, 3, 5, 3]])
    q = QuantizedTensor(codes, [[1.0, 2.0]], [[0.0, 0.0]], 2, group_size=3,
                        steps=[[1, 2, 2, 1, 2]])
    assert_allclose(q.element_scale, [[1, 0.5, 0.5, 2, 1]])
    # one scale and zero point per group of each row
    with pytest.raises(ValueError):
        QuantizedTensor(codes, [[1.0, 2.0]], [[0.0, -1.0]], 2, group_size=2)
    with pytest.raises(ValueError):
        QuantizedTensor(codes, [[1.0, 2.0, 1.0]], [[0.0, 0.0]], 2, group_size=2)
    with pytest.raises(ValueError):
        QuantizedTensor(codes, [1.0, 2.0, 1.0], [0.0, 0.0, 0.0], 2, group_size=2)


def test_quantize_weights_rtn():
    rs = np.random.RandomState(5)
    W = rs.randn(8, 300)
    q = quantize_weights(W, bits=4, group_size=128)
    assert q.shape == (8, 300)
    assert q.scale.shape == (8, 3)
    assert q.codes.min() >= 0 and q.codes.max() <= 15
    err = np.abs(q.dequantize() - W)
    assert np.all(err <= q.element_scale / 2 * (1 + 1e-9))
    # group limits are represented exactly
    assert_allclose(q.dequantize()[:, :128].max(axis=1), W[:, :128].max(axis=1))
    with pytest.raises(ValueError):
        quantize_weights(W[0])
    with pytest.raises(ValueError):
        quantize_weights(W, method='magic')
    with pytest.raises(ValueError):
        quantize_weights(W, method='gptq')


def test_quantize_weights_plan():
    rs = np.random.RandomState(6)
    W = rs.randn(16, 64)
    plan = ChannelPlan(64, salient_set=[3, 9], salient_steps=2, levels=4)
    q = quantize_weights(W, plan)
    assert q.bits == 2
    assert q.codes[:, [3, 9]].max() <= 6
    assert np.delete(q.codes, [3, 9], axis=1).max() <= 3
    q1 = quantize_weights(W, bits=2)
    err2 = np.abs(q.dequantize() - W)[:, [3, 9]]
    err1 = np.abs(q1.dequantize() - W)[:, [3, 9]]
    assert np.all(err2 <= q1.element_scale[:, [3, 9]] / 4 * (1 + 1e-9))
    assert err2.sum() <= err1.sum()
    with pytest.raises(ValueError):
        quantize_weights(W, ChannelPlan(32))


def test_gptq_beats_rtn():
    errs_rtn, errs_gptq = list(), list()
    for seed in range(50):
        rs = np.random.RandomState(seed)
        W = rs.randn(64, 64)
        X = rs.randn(64, 128)
        H = hessian(X)
        rtn = quantize_weights(W, bits=3, method='rtn').dequantize()
        gptq = quantize_weights(W, bits=3, method='gptq', H=H).dequantize()
        errs_rtn.append(np.sum((np.dot(W - rtn, X)) ** 2))
        errs_gptq.append(np.sum((np.dot(W - gptq, X)) ** 2))
    assert np.median(errs_gptq) <= np.median(errs_rtn)


def test_gptq_identity_hessian():
    """With H = I there is nothing to compensate: GPTQ equals RTN"""
    rs = np.random.RandomState(7)
    W = rs.randn(8, 16)
    quantizer = AffineGroupQuantizer(16, np.ones(W.shape, dtype=int))
    q = gptq_quantize(W, np.eye(16), quantizer, 4, group_size=8)
    r = quantize_weights(W, bits=4, group_size=8)
    assert_array_equal(q.codes, r.codes)
    assert_allclose(q.scale, r.scale)


def test_gptq_dead_channel():
    rs = np.random.RandomState(8)
    X = rs.randn(12, 64)
    X[4] = 0
    H = 2 * np.dot(X, X.T)
    W = rs.randn(6, 12)
    q = quantize_weights(W, bits=4, method='gptq', H=H)
    assert np.all(np.isfinite(q.dequantize()))


def test_gptq_not_positive_definite():
    W = np.ones((2, 2))
    quantizer = AffineGroupQuantizer(16, np.ones((2, 2), dtype=int))
    with pytest.raises(NumericalError):
        gptq_quantize(W, np.array([[1.0, 2.0], [2.0, 1.0]]), quantizer, 4)
    with pytest.raises(ValueError):
        gptq_quantize(W, np.eye(3), quantizer, 4)


def test_ternary_weights():
    rs = np.random.RandomState(9)
    W = rs.randn(8, 256)
    q1 = quantize_ternary_weights(W, 1, group_size=128)
    assert q1.kind == 'ternary'
    assert set(np.unique(q1.codes)) <= {-1, 0, 1}
    assert_array_equal(q1.zero_point, 0)
    q4 = quantize_ternary_weights(W, 4, group_size=128)
    assert q4.codes.min() >= -4 and q4.codes.max() <= 4
    # absmax is represented exactly
    absmax = np.abs(W[:, :128]).max(axis=1)
    assert_allclose(np.abs(q4.dequantize()[:, :128]).max(axis=1), absmax)
    # nested grids: more steps never increase an element's error
    e1 = np.abs(q1.dequantize() - W)
    e4 = np.abs(q4.dequantize() - W)
    assert np.all(e4 <= e1 + 1e-12)
    with pytest.raises(ValueError):
        quantize_ternary_weights(W, 3)


def test_ternary_weights_gptq():
    rs = np.random.RandomState(10)
    W = rs.randn(16, 32)
    X = rs.randn(32, 96)
    steps = rs.choice([1, 2, 4], size=W.shape)
    q = quantize_ternary_weights(W, steps, method='gptq', H=hessian(X))
    assert np.all(np.abs(q.codes) <= steps)
    assert_array_equal(q.steps, steps)
