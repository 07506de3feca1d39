# -*- coding: utf-8 -*-
"""

Console scripts. These are used as setuptools entry points.

All scripts take --config FILE (overrides for the packaged defaults) and
--verbose. Exit codes: 0 on success, 2 on usage or input errors and 3 if a
numerical procedure fails (e.g. an undamped Hessian).

"""

import argparse
import functools
import logging
import sys
from collections import OrderedDict
import numpy as np

from .config import load_config
from .envutils import SpikeDataError, NumericalError, PlanConfigError
from .tensor import tensor_read, tensor_write
from .neuron import MERGED, expand, gif_decode
from .quant import ChannelPlan, STRUCTURED, quantize_weights
from .saliency import (
    ACTIVATION,
    WEIGHT,
    activation_saliency,
    hessian,
    weight_saliency,
    aggregate_per_channel,
    select_salient,
    write_saliency_csv,
)
from .kernels import mixed_step_gemm, event_driven_gemm, reference_gemm
from .accounting import ops_report
from .presets import preset_from_name, ACTIVATIONS, WEIGHTS
from .harness import (
    SyntheticSpec,
    run_activation_pipeline,
    run_weight_pipeline,
    run_ternary_pipeline,
    seed_sweep,
    summary_row,
)
from .fileio import (
    PlanConfig,
    load_plan_config,
    load_synth_spec,
    save_json,
    write_rows_csv,
    write_spike_train,
    read_spike_train,
    write_quantized_tensor,
    read_quantized_tensor,
    has_quantized_sidecar,
)

logger = logging.getLogger(__name__)

EXIT_INPUT = 2
EXIT_NUMERICAL = 3

BITSERIAL = 'bitserial'
EVENT = 'event'
REFERENCE = 'reference'
BACKENDS = (BITSERIAL, EVENT, REFERENCE)


def _console_init(verbose=False):
    """Set up logging for console scripts"""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO)


def _parser(desc):
    parser = argparse.ArgumentParser(description=desc)
    parser.add_argument('--config', type=str, help='config file overriding defaults')
    parser.add_argument('--verbose', action='store_true', help='debug output')
    return parser


def _parse(parser, argv):
    args = parser.parse_args(argv)
    _console_init(args.verbose)
    if args.config:
        load_config(args.config)
    return args


def _errmsg(e):
    # KeyError quotes its message
    if isinstance(e, KeyError) and e.args:
        return str(e.args[0])
    return str(e)


def _exit_codes(fun):
    """Report errors of a console script and exit with the matching code"""

    @functools.wraps(fun)
    def wrapper(argv=None):
        try:
            fun(argv)
        except NumericalError as e:
            logger.error('numerical failure: %s' % e)
            sys.exit(EXIT_NUMERICAL)
        except (SpikeDataError, ValueError, KeyError, IOError) as e:
            logger.error(_errmsg(e))
            sys.exit(EXIT_INPUT)

    return wrapper


def _saliency_report(W, X, mode, damping_frac=None, ratio=None):
    """Saliency report of a layer; X is tokens x channels"""
    X = np.asarray(X, dtype=np.float64)
    if mode == 'activation':
        S = activation_saliency(X.T, W)
        return select_salient(aggregate_per_channel(S, axis=0), ratio, ACTIVATION)
    H = hessian(X.T, damping_frac)
    S = weight_saliency(W, H)
    return select_salient(aggregate_per_channel(S, axis=1), ratio, WEIGHT)


@_exit_codes
def spike_saliency(argv=None):
    """Write the per-channel saliency table of a layer"""
    parser = _parser('Per-channel saliency of a layer')
    parser.add_argument('--weights', required=True, help='weights, out x channels')
    parser.add_argument('--acts', required=True, help='activations, tokens x channels')
    parser.add_argument('--mode', choices=['activation', 'weight'], default='activation')
    parser.add_argument('--damping', type=float, help='Hessian damping fraction')
    parser.add_argument('--ratio', type=float, help='fraction of selected channels')
    parser.add_argument('--out', required=True, help='output CSV')
    args = _parse(parser, argv)
    W = tensor_read(args.weights)
    X = tensor_read(args.acts)
    report = _saliency_report(W, X, args.mode, args.damping, args.ratio)
    write_saliency_csv(report, args.out)
    logger.info('%s: selected channels %s' % (args.out, list(report.selected)))


def _quantize_activations(X, W, pc, weight_bits):
    if pc.granularity != STRUCTURED:
        raise PlanConfigError('/granularity', 'activation plans must be structured')
    if W is None:
        # no downstream layer given: identity weights
        W = np.eye(X.shape[1])
    return run_activation_pipeline(
        W,
        X,
        pc.ratio,
        pc.t_prime,
        pc.levels,
        pc.selector,
        seed=pc.seed,
        weight_bits=weight_bits,
    )


def _quantize_weights(W, X, pc, method):
    if pc.ternary_mix is not None:
        return run_ternary_pipeline(W, X, pc.ternary_mix, method=method)
    return run_weight_pipeline(
        W,
        X,
        pc.ratio,
        pc.t_prime,
        pc.levels,
        pc.selector,
        method=method,
        seed=pc.seed,
    )


@_exit_codes
def spike_quantize(argv=None):
    """Quantize activations into a mixed-step spike train, or weights into
    spiking weight codes"""
    parser = _parser('Saliency-aware mixed-step spiking quantization')
    parser.add_argument(
        '--acts',
        required=True,
        help='activations (calibration data for weights), tokens x channels',
    )
    plan_src = parser.add_mutually_exclusive_group(required=True)
    plan_src.add_argument('--plan', help='plan config JSON')
    plan_src.add_argument('--preset', help='named spiking configuration')
    parser.add_argument('--weights', help='layer weights, out x channels')
    parser.add_argument('--target', choices=[ACTIVATIONS, WEIGHTS])
    parser.add_argument('--weight-bits', type=int, help='bits of non-spiking weights')
    parser.add_argument('--method', choices=['rtn', 'gptq'], default='rtn')
    parser.add_argument('--out', required=True, help='output codes (SPKT)')
    parser.add_argument('--report', required=True, help='output report JSON')
    args = _parse(parser, argv)

    if args.plan:
        pc = load_plan_config(args.plan)
        default_target = WEIGHTS if pc.ternary_mix is not None else ACTIVATIONS
    else:
        preset = preset_from_name(args.preset)
        pc = PlanConfig.from_preset(preset)
        default_target = ACTIVATIONS if preset.target == ACTIVATIONS else WEIGHTS
    target = args.target or default_target
    X = tensor_read(args.acts).data
    W = tensor_read(args.weights).data if args.weights else None

    if target == ACTIVATIONS:
        res = _quantize_activations(X, W, pc, args.weight_bits)
        write_spike_train(res.quantized, args.out)
    else:
        if W is None:
            raise ValueError('quantizing weights needs --weights')
        res = _quantize_weights(W, X, pc, args.method)
        write_quantized_tensor(res.quantized, args.out)

    report = OrderedDict()
    report['target'] = target
    report['plan'] = pc.to_dict()
    report['selected'] = list(res.saliency.selected)
    report['layerwise_error'] = res.layerwise_error
    report['ops'] = res.ops.to_dict()
    save_json(report, args.report)
    logger.info('%s: %s' % (args.out, res.ops))


def _read_weights(fn, weight_bits):
    """Quantized weights from codes with a sidecar, or real weights
    quantized by round-to-nearest"""
    if has_quantized_sidecar(fn):
        return read_quantized_tensor(fn)
    W = tensor_read(fn)
    return quantize_weights(W, bits=weight_bits, rounding='nearest')


def spike_gemm(s, wq, backend):
    """Y = X_hat W_hat^T of a spike train and quantized weights.

    Returns the tokens x out result and the number of accumulated events
    (None unless backend is 'event').
    """
    if wq.shape[1] != s.channels:
        raise ValueError(
            'weights have %d input channels, spike train %d' % (wq.shape[1], s.channels)
        )
    if backend == BITSERIAL:
        if s.form != MERGED:
            raise ValueError('backend %s needs a merged train, got %s' % (backend, s.form))
        plan = ChannelPlan.from_steps(s.steps, s.levels)
        return mixed_step_gemm(s, wq, plan, int_gemm='bitserial'), None
    elif backend == EVENT:
        res = event_driven_gemm(s if s.is_expanded else expand(s), wq)
        return res.values, res.accumulated_events
    elif backend == REFERENCE:
        return reference_gemm(gif_decode(s), wq.dequantize().T), None
    raise ValueError('unknown backend %s' % backend)


@_exit_codes
def spike_matmul(argv=None):
    """Multiply a spike train by (quantized) weights"""
    parser = _parser('GEMM of spiking activations and quantized weights')
    parser.add_argument('--x', required=True, help='spike train codes with sidecar')
    parser.add_argument(
        '--w', required=True, help='weights (real, or quantized codes with sidecar)'
    )
    parser.add_argument('--backend', choices=BACKENDS, default=REFERENCE)
    parser.add_argument('--weight-bits', type=int, help='bits for real weights')
    parser.add_argument('--out', required=True, help='output tokens x out (SPKT)')
    parser.add_argument('--ops', required=True, help='output operation report JSON')
    args = _parse(parser, argv)

    s = read_spike_train(args.x)
    wq = _read_weights(args.w, args.weight_bits)
    Y, events = spike_gemm(s, wq, args.backend)
    tensor_write(Y, args.out)

    nout = wq.shape[0]
    bits_per_step = 1.0 if s.is_expanded else np.log2(s.levels)
    ops = ops_report(
        s.tokens * s.channels * nout,
        wq.bits,
        bits_per_step * s.steps.mean(),
        train=s,
        output_width=nout,
    )
    report = OrderedDict()
    report['backend'] = args.backend
    report['accumulated_events'] = events
    report.update(ops.to_dict())
    save_json(report, args.ops)
    logger.info('%s: %s backend, %s' % (args.out, args.backend, ops))


@_exit_codes
def spike_demo(argv=None):
    """Paired saliency vs random selection experiment on synthetic data"""
    parser = _parser('Saliency vs random channel selection on synthetic outlier data')
    parser.add_argument('--spec', help='synthetic data spec JSON')
    parser.add_argument('--seeds', type=int, help='number of paired seeds')
    parser.add_argument('--jobs', type=int, help='worker threads')
    parser.add_argument(
        '--attention', action='store_true', help='add the KV cache attention columns'
    )
    parser.add_argument('--out', required=True, help='output CSV')
    args = _parse(parser, argv)

    spec = load_synth_spec(args.spec) if args.spec else SyntheticSpec()
    rows = seed_sweep(spec, args.seeds, args.jobs, with_attention=args.attention)
    summary = summary_row(rows)
    write_rows_csv(rows + [summary], args.out)
    logger.info(
        'median activation error: obspiking %g, random %g'
        % (summary['obspiking_act_error'], summary['random_act_error'])
    )
    logger.info(
        'median weight error: obspiking %g, random %g'
        % (summary['obspiking_weight_error'], summary['random_weight_error'])
    )
