# -*- coding: utf-8 -*-
"""

Experiment pipeline tests on small synthetic layers.

"""

import pytest
import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from spikeutils.neuron import gif_encode, gif_decode
from spikeutils.harness import (
    SyntheticSpec,
    DEMO_COLUMNS,
    ATTENTION_COLUMNS,
    synth_activations,
    synth_weights,
    outlier_channels,
    layerwise_error,
    run_activation_pipeline,
    run_weight_pipeline,
    run_ternary_pipeline,
    ternary_steps,
    attention,
    attention_demo,
    gif_error,
    demo_seed,
    seed_sweep,
    summary_row,
)

from utils import naive_matmul

TERNARY_MIXES = [
    (1.0, 0.0, 0.0),
    (0.90, 0.05, 0.05),
    (0.85, 0.10, 0.05),
    (0.80, 0.15, 0.05),
    (0.70, 0.25, 0.05),
]


def _small_spec(seed=0):
    return SyntheticSpec(
        tokens=64,
        channels=40,
        out_features=16,
        outlier_ratio=0.1,
        outlier_scale=10.0,
        seed=seed,
    )


def test_synth_spec_defaults():
    spec = SyntheticSpec()
    assert spec.tokens == 512 and spec.channels == 256
    assert spec.outlier_scale == 10.0
    assert spec.with_seed(5).seed == 5
    assert spec.with_seed(5).channels == spec.channels
    with pytest.raises(ValueError):
        SyntheticSpec(outlier_ratio=1.5)
    with pytest.raises(ValueError):
        SyntheticSpec(outlier_scale=0.5)
    with pytest.raises(ValueError):
        SyntheticSpec(tokens=0)
    with pytest.raises(ValueError):
        SyntheticSpec(seed=-1)


def test_synth_activations():
    spec = SyntheticSpec(
        tokens=2000, channels=40, out_features=8, outlier_ratio=0.1,
        outlier_scale=10.0, seed=0,
    )
    X = synth_activations(spec)
    assert X.shape == (2000, 40)
    idx = outlier_channels(spec)
    assert len(idx) == 4
    assert_array_equal(idx, np.sort(idx))
    normal = np.setdiff1d(np.arange(40), idx)
    assert abs(X[:, normal].std() - 1) < 0.05
    assert abs(X[:, idx].std() - 10) < 0.5
    # deterministic in the seed
    assert_array_equal(synth_activations(spec), X)
    assert not np.array_equal(synth_activations(spec.with_seed(1)), X)


def test_synth_weights():
    spec = _small_spec()
    W = synth_weights(spec)
    assert W.shape == (16, 40)
    assert_array_equal(synth_weights(spec), W)
    # weights use their own stream
    assert not np.allclose(W * np.sqrt(40), synth_activations(spec)[:16])


def test_layerwise_error():
    rs = np.random.RandomState(0)
    W, X = rs.randn(5, 8), rs.randn(8, 12)
    assert layerwise_error(W, X, W, X) == 0
    Wq, Xq = W + 0.01 * rs.randn(5, 8), X + 0.01 * rs.randn(8, 12)
    d = naive_matmul(W, X) - naive_matmul(Wq, Xq)
    assert_allclose(layerwise_error(W, X, Wq, Xq), np.sum(d ** 2), rtol=1e-10)
    with pytest.raises(ValueError):
        layerwise_error(W, X, Wq[:4], Xq)
    with pytest.raises(ValueError):
        layerwise_error(W, X.T, W, X.T)


def test_activation_pipeline():
    spec = _small_spec()
    X, W = synth_activations(spec), synth_weights(spec)
    res = run_activation_pipeline(W, X, 0.1, 2, 16)
    assert res.plan.channels == 40
    assert len(res.plan.salient_set) == 4
    # saliency picks the outlier channels
    assert sorted(res.plan.salient_set) == outlier_channels(spec).tolist()
    assert res.quantized.steps.max() == 2
    assert_allclose(res.ops.bits_act, 4.4)
    assert res.ops.bits_weight == 4
    assert res.ops.ace_ratio_vs_fp16 == 0.06875
    assert 0 <= res.ops.sparsity <= 1
    assert res.ops.macs == 64 * 40 * 16
    with pytest.raises(ValueError):
        run_activation_pipeline(W, X[:, :30])
    with pytest.raises(ValueError):
        run_activation_pipeline(W, X, selector='greedy')


def test_zero_ratio_selectors_agree():
    spec = _small_spec(3)
    X, W = synth_activations(spec), synth_weights(spec)
    a = run_activation_pipeline(W, X, 0.0, 2, 16, 'obspiking')
    b = run_activation_pipeline(W, X, 0.0, 2, 16, 'random', seed=11)
    assert a.layerwise_error == b.layerwise_error
    assert a.plan.salient_set == b.plan.salient_set == ()
    # no salient channels equals plain single step encoding
    assert_allclose(a.layerwise_error, gif_error(W, X, 1, 16))
    a = run_weight_pipeline(W, X, 0.0, 2, 4, 'obspiking')
    b = run_weight_pipeline(W, X, 0.0, 2, 4, 'random', seed=11)
    assert a.layerwise_error == b.layerwise_error


def test_obspiking_beats_random():
    act = {'obspiking': [], 'random': []}
    weight = {'obspiking': [], 'random': []}
    for seed in range(7):
        spec = _small_spec(seed)
        X, W = synth_activations(spec), synth_weights(spec)
        for selector in act:
            act[selector].append(
                run_activation_pipeline(W, X, 0.1, 2, 16, selector, seed=seed)
                .layerwise_error
            )
            weight[selector].append(
                run_weight_pipeline(W, X, 0.1, 2, 4, selector, seed=seed)
                .layerwise_error
            )
    assert np.median(act['obspiking']) < np.median(act['random'])
    assert np.median(weight['obspiking']) < np.median(weight['random'])


def test_obspiking_beats_random_full_size():
    """256 channels, 512 tokens, 10% outliers at 10x, 20 paired seeds"""
    act = {'obspiking': [], 'random': []}
    weight = {'obspiking': [], 'random': []}
    for seed in range(20):
        spec = SyntheticSpec(seed=seed)
        X, W = synth_activations(spec), synth_weights(spec)
        for selector in act:
            act[selector].append(
                run_activation_pipeline(W, X, 0.1, 2, 16, selector, seed=seed)
                .layerwise_error
            )
            weight[selector].append(
                run_weight_pipeline(W, X, 0.1, 2, 16, selector, seed=seed)
                .layerwise_error
            )
    assert np.median(act['obspiking']) < np.median(act['random'])
    assert np.median(weight['obspiking']) < np.median(weight['random'])


def test_more_steps_less_error():
    rs = np.random.RandomState(4)
    X = rs.randn(32, 24)
    W = np.eye(24)
    assert gif_error(W, X, 4, 16) < gif_error(W, X, 1, 16)
    # all channels salient equals GIF everywhere
    res = run_activation_pipeline(W, X, 1.0, 2, 16)
    assert_allclose(res.layerwise_error, gif_error(W, X, 2, 16))
    assert_array_equal(gif_decode(res.quantized), gif_decode(gif_encode(X, 2, 16)))


def test_weight_pipeline_gptq():
    rtn, gptq = list(), list()
    for seed in range(10):
        spec = _small_spec(seed)
        X, W = synth_activations(spec), synth_weights(spec)
        rtn.append(run_weight_pipeline(W, X, 0.1, 2, 4, method='rtn').layerwise_error)
        res = run_weight_pipeline(W, X, 0.1, 2, 4, method='gptq')
        gptq.append(res.layerwise_error)
    assert np.median(gptq) <= np.median(rtn)
    assert res.quantized.kind == 'asymmetric'
    assert_allclose(res.ops.bits_weight, 2.2)
    assert res.ops.bits_act == 16


def test_weight_pipeline_gptq_64x64():
    """50 layers of 64 x 64 weights calibrated on 128 tokens"""
    rtn, gptq = list(), list()
    for seed in range(50):
        spec = SyntheticSpec(tokens=128, channels=64, out_features=64, seed=seed)
        X, W = synth_activations(spec), synth_weights(spec)
        rtn.append(run_weight_pipeline(W, X, 0.1, 2, 4, method='rtn').layerwise_error)
        gptq.append(run_weight_pipeline(W, X, 0.1, 2, 4, method='gptq').layerwise_error)
    assert np.median(gptq) <= np.median(rtn)


def test_ternary_steps():
    S = np.array([[5.0, 1.0, 3.0, 2.0], [4.0, 0.0, 6.0, 7.0]])
    steps = ternary_steps(S, (0.5, 0.25, 0.25))
    assert_array_equal(steps, [[2, 1, 1, 1], [2, 1, 4, 4]])
    assert_array_equal(ternary_steps(S, (1.0, 0.0, 0.0)), 1)


def test_ternary_pipeline_monotone():
    """More steps never hurt when the error is the plain weight error"""
    for seed in range(5):
        rs = np.random.RandomState(seed)
        W = rs.randn(16, 40)
        X = np.eye(40)
        errors = [run_ternary_pipeline(W, X, mix).layerwise_error for mix in TERNARY_MIXES]
        assert np.all(np.diff(errors) <= 1e-12)


def test_ternary_pipeline_synthetic():
    errors = {mix: [] for mix in (TERNARY_MIXES[0], TERNARY_MIXES[-1])}
    for seed in range(10):
        spec = _small_spec(seed)
        X, W = synth_activations(spec), synth_weights(spec)
        for mix in errors:
            res = run_ternary_pipeline(W, X, mix)
            errors[mix].append(res.layerwise_error)
    assert np.median(errors[TERNARY_MIXES[-1]]) < np.median(errors[TERNARY_MIXES[0]])
    assert_allclose(res.ops.equal_steps, 1.4)
    assert res.plan.granularity == 'unstructured'
    assert res.quantized.kind == 'ternary'
    with pytest.raises(ValueError):
        run_ternary_pipeline(W, X, (0.5, 0.5, 0.5))


def test_ternary_pipeline_all_mixes():
    """Median error over 20 seeds never grows with the equal steps of the mix"""
    errors = {mix: [] for mix in TERNARY_MIXES}
    for seed in range(20):
        spec = SyntheticSpec(seed=seed)
        X, W = synth_activations(spec), synth_weights(spec)
        for mix in TERNARY_MIXES:
            errors[mix].append(run_ternary_pipeline(W, X, mix).layerwise_error)
    medians = [np.median(errors[mix]) for mix in TERNARY_MIXES]
    assert np.all(np.diff(medians) <= 0)


def test_attention():
    rs = np.random.RandomState(5)
    Q, K, V = rs.randn(3, 4), rs.randn(6, 4), rs.randn(6, 2)
    scores = naive_matmul(Q, K.T) / 2.0
    p = np.exp(scores - scores.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    assert_allclose(attention(Q, K, V), naive_matmul(p, V), rtol=1e-10)
    with pytest.raises(ValueError):
        attention(Q, K[:, :3], V)


def test_attention_demo():
    rs = np.random.RandomState(6)
    Q = rs.randn(16, 8)
    K = rs.randn(32, 8)
    V = rs.randn(32, 8)
    K[:, 3] *= 50
    V[:, 5] *= 50
    ref = attention(Q, K, V)
    uniform = np.sum((attention_demo(Q, K, V, 0.0, 4, 16) - ref) ** 2)
    spiking = np.sum((attention_demo(Q, K, V, 0.125, 4, 16) - ref) ** 2)
    assert spiking < uniform
    # fine encodings approach exact attention
    K, V = rs.randn(32, 8), rs.randn(32, 8)
    fine = attention_demo(Q, K, V, 1.0, 64, 256)
    assert_allclose(fine, attention(Q, K, V), atol=1e-2)


def test_demo_seed():
    row = demo_seed(_small_spec(), 2, ratio=0.1, t_prime=2, levels=16)
    assert list(row.keys()) == DEMO_COLUMNS
    assert row['seed'] == 2
    assert all(row[col] >= 0 for col in DEMO_COLUMNS[1:])
    row = demo_seed(_small_spec(), 2, with_attention=True)
    assert list(row.keys()) == DEMO_COLUMNS + ATTENTION_COLUMNS


def test_seed_sweep_jobs():
    spec = _small_spec(10)
    rows1 = seed_sweep(spec, 4, 1)
    rows3 = seed_sweep(spec, 4, 3)
    assert [row['seed'] for row in rows1] == [10, 11, 12, 13]
    assert rows1 == rows3
    with pytest.raises(ValueError):
        seed_sweep(spec, 0, 1)
    with pytest.raises(ValueError):
        seed_sweep(spec, 2, 0)


def test_summary_row():
    rows = [
        dict(seed=0, a=1.0, b=4.0),
        dict(seed=1, a=3.0, b=2.0),
        dict(seed=2, a=2.0, b=9.0),
    ]
    summary = summary_row(rows)
    assert summary['seed'] == 'median'
    assert summary['a'] == 2.0 and summary['b'] == 4.0
