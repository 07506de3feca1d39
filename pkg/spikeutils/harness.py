# -*- coding: utf-8 -*-
"""
Desk-scale experiment pipelines.

Synthetic outlier-heavy activations stand in for calibration data. Each
pipeline selects channels (saliency or random), quantizes and reports the
layerwise error ||W X - Q(W) Q(X)||_F**2 together with operation metrics.

Pipeline inputs: W is out x channels, activations X are tokens x channels.

"""

import logging
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
import numpy as np
from scipy.special import softmax

from . import cfg
from .numutils import Rng, rng_normal
from .neuron import gif_encode, gif_decode
from .quant import (
    ChannelPlan,
    UNSTRUCTURED,
    mixed_step_quantize,
    mixed_step_dequantize,
    quantize_weights,
    quantize_ternary_weights,
)
from .saliency import (
    ACTIVATION,
    WEIGHT,
    activation_saliency,
    hessian,
    weight_saliency,
    aggregate_per_channel,
    select_salient,
    random_plan,
)
from .kernels import reference_gemm
from .accounting import ops_report, average_bits, equal_steps

logger = logging.getLogger(__name__)

OBSPIKING = 'obspiking'
RANDOM = 'random'
SELECTORS = (OBSPIKING, RANDOM)
# stream offsets so that weights and attention inputs do not reuse the
# activation stream of the same seed
_WEIGHT_STREAM = 0x5EED0001
_QUERY_STREAM = 0x5EED0002
_VALUE_STREAM = 0x5EED0003
_SELECT_STREAM = 0x5EED0004


def _hcfg(name, val, conv='as_int'):
    return getattr(cfg['harness'], conv)(name) if val is None else val


def _n_of(n, frac):
    return int(np.floor(frac * n + 0.5))


class SyntheticSpec(object):
    """Synthetic calibration data: Gaussian activations where a random
    outlier_ratio fraction of channels is scaled by outlier_scale"""

    def __init__(
        self,
        tokens=None,
        channels=None,
        outlier_ratio=None,
        outlier_scale=None,
        seed=None,
        out_features=None,
    ):
        self.tokens = _hcfg('tokens', tokens)
        self.channels = _hcfg('channels', channels)
        self.out_features = _hcfg('out_features', out_features)
        self.outlier_ratio = _hcfg('outlier_ratio', outlier_ratio, 'as_float')
        self.outlier_scale = _hcfg('outlier_scale', outlier_scale, 'as_float')
        self.seed = _hcfg('seed', seed)
        if not 0 <= self.outlier_ratio <= 1:
            raise ValueError('outlier_ratio must be in [0, 1]')
        if self.outlier_scale < 1:
            raise ValueError('outlier_scale must be at least 1')
        if min(self.tokens, self.channels, self.out_features) < 1:
            raise ValueError('sizes must be positive')
        if self.seed < 0:
            raise ValueError('seed must be nonnegative')

    def __repr__(self):
        return '<SyntheticSpec | %d x %d, outliers %g at %gx, seed %d>' % (
            self.tokens,
            self.channels,
            self.outlier_ratio,
            self.outlier_scale,
            self.seed,
        )

    def with_seed(self, seed):
        return SyntheticSpec(
            self.tokens,
            self.channels,
            self.outlier_ratio,
            self.outlier_scale,
            seed,
            self.out_features,
        )


class PipelineResult(object):
    """Outcome of one quantization pipeline"""

    def __init__(self, layerwise_error, ops, plan, saliency, quantized=None):
        self.layerwise_error = layerwise_error
        self.ops = ops
        self.plan = plan
        self.saliency = saliency
        # the SpikeTrain or QuantizedTensor produced
        self.quantized = quantized

    def __repr__(self):
        return '<PipelineResult | error %g, %s>' % (self.layerwise_error, self.plan)


def _synth(spec):
    rng = Rng(spec.seed)
    x = rng_normal(rng, spec.tokens, spec.channels).data
    idx = np.sort(rng.permutation(spec.channels)[: _n_of(spec.channels, spec.outlier_ratio)])
    x[:, idx] *= spec.outlier_scale
    return x, idx


def synth_activations(spec):
    """Synthetic tokens x channels activations"""
    x, idx = _synth(spec)
    logger.debug('synthesized %s, outlier channels %s' % (spec, idx.tolist()))
    return x


def outlier_channels(spec):
    """Indices of the scaled channels of synth_activations(spec)"""
    return _synth(spec)[1]


def synth_weights(spec):
    """Gaussian out_features x channels weights with unit-variance outputs"""
    rng = Rng(spec.seed ^ _WEIGHT_STREAM)
    w = rng_normal(rng, spec.out_features, spec.channels).data
    return w / np.sqrt(spec.channels)


def layerwise_error(W, X, Wq, Xq):
    """||W X - Wq Xq||_F**2 for X, Xq of shape channels x tokens"""
    W, X, Wq, Xq = (np.asarray(m, dtype=np.float64) for m in (W, X, Wq, Xq))
    if W.shape != Wq.shape or X.shape != Xq.shape:
        raise ValueError('quantized shapes do not match')
    if W.ndim != 2 or X.ndim != 2 or W.shape[1] != X.shape[0]:
        raise ValueError('weights %s do not match activations %s' % (W.shape, X.shape))
    d = reference_gemm(W, X) - reference_gemm(Wq, Xq)
    return float(np.sum(d ** 2))


def _select(selector, scores_fn, channels, ratio, seed, metric):
    if selector == OBSPIKING:
        return select_salient(scores_fn(), ratio, metric=metric)
    elif selector == RANDOM:
        return random_plan(channels, ratio, Rng(seed))
    raise ValueError('unknown selector %s' % selector)


def run_activation_pipeline(
    W,
    X,
    ratio=None,
    t_prime=None,
    levels=None,
    selector=OBSPIKING,
    seed=0,
    weight_bits=None,
    fp_bits=None,
):
    """Mixed-step activation spiking with saliency or random selection.

    Channels are ranked by per-channel activation saliency (or chosen at
    random), X is quantized with the resulting plan and W by round-to-
    nearest with weight_bits bits.

    Parameters
    ----------
    W : array_like
        Weights, out x channels.
    X : array_like
        Activations, tokens x channels.
    ratio, t_prime, levels : float, int, int
        Salient fraction, salient steps and levels per step; defaults from
        cfg.saliency.ratio, cfg.harness.t_prime and cfg.harness.levels.
    selector : str
        'obspiking' or 'random'.
    seed : int
        Seed of the random selector.

    Returns
    -------
    PipelineResult
    """
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if W.ndim != 2 or X.ndim != 2 or W.shape[1] != X.shape[1]:
        raise ValueError('weights %s do not match activations %s' % (W.shape, X.shape))
    ratio = cfg['saliency'].as_float('ratio') if ratio is None else ratio
    t_prime = _hcfg('t_prime', t_prime)
    levels = _hcfg('levels', levels)
    weight_bits = _hcfg('weight_bits', weight_bits)
    ntok, nch = X.shape
    nout = W.shape[0]

    report = _select(
        selector,
        lambda: aggregate_per_channel(activation_saliency(X.T, W), axis=0),
        nch,
        ratio,
        seed,
        ACTIVATION,
    )
    plan = ChannelPlan.from_report(report, t_prime, levels)
    s = mixed_step_quantize(X, plan)
    Xq = mixed_step_dequantize(s, plan)
    Wq = quantize_weights(W, bits=weight_bits, rounding='nearest').dequantize()
    err = layerwise_error(W, X.T, Wq, Xq.T)

    bits_act = average_bits(plan, np.log2(levels))
    ops = ops_report(
        ntok * nch * nout,
        weight_bits,
        bits_act,
        fp_bits=fp_bits,
        train=s,
        output_width=nout,
        code_bits_total=ntok * nch * bits_act,
    )
    logger.info(
        'activation pipeline (%s, ratio %g, T\'=%d, L=%d): error %g'
        % (selector, ratio, t_prime, levels, err)
    )
    return PipelineResult(err, ops, plan, report, quantized=s)


def run_weight_pipeline(
    W,
    X_calib,
    ratio=None,
    t_prime=None,
    levels=None,
    selector=OBSPIKING,
    method='rtn',
    seed=0,
    damping_frac=None,
    act_bits=None,
    group_size=None,
):
    """Mixed-step weight spiking with Hessian saliency or random selection.

    Input channels are ranked by per-channel weight saliency computed from
    the damped Hessian of X_calib; weights are quantized per group with
    log2(levels) bits per step, by round-to-nearest ('rtn') or greedy
    error compensation ('gptq'). The error is measured with full
    precision activations.
    """
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X_calib, dtype=np.float64)
    if W.ndim != 2 or X.ndim != 2 or W.shape[1] != X.shape[1]:
        raise ValueError('weights %s do not match activations %s' % (W.shape, X.shape))
    ratio = cfg['saliency'].as_float('ratio') if ratio is None else ratio
    t_prime = _hcfg('t_prime', t_prime)
    levels = _hcfg('levels', levels)
    act_bits = cfg['accounting'].as_float('fp_bits') if act_bits is None else act_bits
    ntok, nch = X.shape
    nout = W.shape[0]

    H = hessian(X.T, damping_frac)
    report = _select(
        selector,
        lambda: aggregate_per_channel(weight_saliency(W, H), axis=1),
        nch,
        ratio,
        seed,
        WEIGHT,
    )
    plan = ChannelPlan.from_report(report, t_prime, levels)
    wq = quantize_weights(W, plan, group_size=group_size, method=method, H=H)
    err = layerwise_error(W, X.T, wq.dequantize(), X.T)

    bits_weight = average_bits(plan, np.log2(levels))
    ops = ops_report(
        ntok * nch * nout,
        bits_weight,
        act_bits,
        code_bits_total=nout * nch * bits_weight,
    )
    logger.info(
        'weight pipeline (%s, %s, ratio %g, T\'=%d, L=%d): error %g'
        % (selector, method, ratio, t_prime, levels, err)
    )
    return PipelineResult(err, ops, plan, report, quantized=wq)


def ternary_steps(S, mix):
    """Per-element steps from elementwise saliency S.

    The top mix[2] fraction of elements gets 4 steps, the next mix[1]
    fraction 2 steps and the rest 1 step; ties by ascending flat index.
    """
    S = np.asarray(S)
    n = S.size
    n4 = _n_of(n, mix[2])
    n2 = _n_of(n, mix[1])
    order = np.argsort(-S.ravel(), kind='stable')
    steps = np.ones(n, dtype=np.int64)
    steps[order[:n4]] = 4
    steps[order[n4 : n4 + n2]] = 2
    return steps.reshape(S.shape)


def run_ternary_pipeline(
    W, X_calib, mix, method='rtn', damping_frac=None, act_bits=None, group_size=None
):
    """Ternary spike weights with unstructured 1/2/4 step allocation.

    Parameters
    ----------
    W : array_like
        Weights, out x channels.
    X_calib : array_like
        Calibration activations, tokens x channels.
    mix : sequence
        Fractions of weights with 1, 2 and 4 steps; must sum to 1.
    method : str
        'rtn' or 'gptq'.
    """
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X_calib, dtype=np.float64)
    if W.ndim != 2 or X.ndim != 2 or W.shape[1] != X.shape[1]:
        raise ValueError('weights %s do not match activations %s' % (W.shape, X.shape))
    eq = equal_steps(mix)
    act_bits = cfg['accounting'].as_float('fp_bits') if act_bits is None else act_bits
    ntok, nch = X.shape
    nout = W.shape[0]

    H = hessian(X.T, damping_frac)
    S = weight_saliency(W, H)
    steps = ternary_steps(S, mix)
    report = select_salient(
        aggregate_per_channel(S, axis=1), mix[1] + mix[2], metric=WEIGHT
    )
    plan = ChannelPlan(
        nch,
        salient_steps=4,
        levels=2,
        granularity=UNSTRUCTURED,
        element_steps=steps,
    )
    wq = quantize_ternary_weights(W, steps, group_size=group_size, method=method, H=H)
    err = layerwise_error(W, X.T, wq.dequantize(), X.T)

    # one ternary spike per step
    ops = ops_report(
        ntok * nch * nout,
        float(steps.mean()),
        act_bits,
        equal_steps=eq,
        code_bits_total=float(steps.sum()),
    )
    logger.info('ternary pipeline (%s, mix %s): error %g' % (method, list(mix), err))
    return PipelineResult(err, ops, plan, report, quantized=wq)


def attention(Q, K, V):
    """softmax(Q K^T / sqrt(d)) V"""
    Q, K, V = (np.asarray(m, dtype=np.float64) for m in (Q, K, V))
    if Q.shape[1] != K.shape[1] or K.shape[0] != V.shape[0]:
        raise ValueError('inconsistent attention shapes %s, %s, %s' % (
            Q.shape, K.shape, V.shape))
    scores = reference_gemm(Q, K.T) / np.sqrt(Q.shape[1])
    return reference_gemm(softmax(scores, axis=1), V)


def _spike_kv(M, calib, ratio, t_prime, levels):
    """Mixed-step quantized copy of a K or V cache (tokens x dim)"""
    # no downstream weight: saliency with identity weights, i.e. X o X
    scores = aggregate_per_channel(activation_saliency(calib.T, np.eye(calib.shape[1])))
    plan = ChannelPlan.from_report(select_salient(scores, ratio), t_prime, levels)
    return mixed_step_dequantize(mixed_step_quantize(M, plan), plan)


def attention_demo(
    Q, K, V, ratio=None, t_prime=None, levels=None, K_calib=None, V_calib=None
):
    """Attention with mixed-step spiking K and V caches.

    Salient channels of K and V are chosen from calibration statistics
    (K and V themselves unless K_calib, V_calib are given) and encoded with
    t_prime steps, the others with one step.

    Returns
    -------
    ndarray
        softmax(Q K_hat^T / sqrt(d)) V_hat, queries x value dim.
    """
    Q, K, V = (np.asarray(m, dtype=np.float64) for m in (Q, K, V))
    if Q.ndim != 2 or Q.shape[1] != K.shape[1] or K.shape[0] != V.shape[0]:
        raise ValueError('inconsistent attention shapes %s, %s, %s' % (
            Q.shape, K.shape, V.shape))
    ratio = cfg['saliency'].as_float('ratio') if ratio is None else ratio
    t_prime = _hcfg('t_prime', t_prime)
    levels = _hcfg('levels', levels)
    K_calib = K if K_calib is None else np.asarray(K_calib, dtype=np.float64)
    V_calib = V if V_calib is None else np.asarray(V_calib, dtype=np.float64)
    Kq = _spike_kv(K, K_calib, ratio, t_prime, levels)
    Vq = _spike_kv(V, V_calib, ratio, t_prime, levels)
    return attention(Q, Kq, Vq)


def gif_error(W, X, t_prime, levels, weight_bits=None):
    """Layerwise error when every activation channel uses t_prime steps"""
    X = np.asarray(X, dtype=np.float64)
    weight_bits = _hcfg('weight_bits', weight_bits)
    Xq = gif_decode(gif_encode(X, t_prime, levels))
    Wq = quantize_weights(W, bits=weight_bits, rounding='nearest').dequantize()
    return layerwise_error(W, X.T, Wq, Xq.T)


DEMO_COLUMNS = [
    'seed',
    'obspiking_act_error',
    'random_act_error',
    'obspiking_weight_error',
    'random_weight_error',
]
ATTENTION_COLUMNS = ['attn_uniform_error', 'attn_spiking_error']


def demo_seed(
    spec, seed, ratio=None, t_prime=None, levels=None, weight_bits=None,
    with_attention=False,
):
    """One paired saliency vs random selection comparison on synthetic data"""
    sp = spec.with_seed(seed)
    X = synth_activations(sp)
    W = synth_weights(sp)
    row = OrderedDict(seed=seed)
    for selector in SELECTORS:
        res = run_activation_pipeline(
            W, X, ratio, t_prime, levels, selector,
            seed=seed ^ _SELECT_STREAM, weight_bits=weight_bits,
        )
        row['%s_act_error' % selector] = res.layerwise_error
    for selector in SELECTORS:
        res = run_weight_pipeline(
            W, X, ratio, t_prime, levels, selector, seed=seed ^ _SELECT_STREAM
        )
        row['%s_weight_error' % selector] = res.layerwise_error
    if with_attention:
        Q = rng_normal(Rng(seed ^ _QUERY_STREAM), spec.tokens, spec.channels).data
        V = rng_normal(Rng(seed ^ _VALUE_STREAM), spec.tokens, spec.channels).data
        ref = attention(Q, X, V)
        for col, r in zip(ATTENTION_COLUMNS, (0.0, ratio)):
            out = attention_demo(Q, X, V, r, t_prime, levels)
            row[col] = float(np.sum((out - ref) ** 2))
    return row


def seed_sweep(spec, nseeds=None, jobs=None, **kwargs):
    """Run demo_seed for nseeds consecutive seeds starting at spec.seed.

    Seeds may run in parallel threads; rows are returned in seed order and
    do not depend on the number of jobs.
    """
    nseeds = _hcfg('seeds', nseeds)
    jobs = cfg['cli'].as_int('jobs') if jobs is None else jobs
    if nseeds < 1 or jobs < 1:
        raise ValueError('need at least one seed and one job')
    seeds = [spec.seed + k for k in range(nseeds)]
    logger.info('running %d seeds with %d jobs' % (nseeds, jobs))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(lambda s: demo_seed(spec, s, **kwargs), seeds))
    return [demo_seed(spec, s, **kwargs) for s in seeds]


def summary_row(rows):
    """Column medians of demo rows, labeled 'median'"""
    summary = OrderedDict(seed='median')
    for col in rows[0]:
        if col != 'seed':
            summary[col] = float(np.median([row[col] for row in rows]))
    return summary
