# -*- coding: utf-8 -*-
"""
Uniform quantizers, the saliency-aware mixed-step quantizer and weight
group quantization (round-to-nearest and greedy Hessian-compensated).

Activations are quantized per token, weights per (output row, group of
input columns).

"""

import logging
import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, LinAlgError

from . import cfg
from .envutils import NumericalError
from .neuron import (
    SpikeTrain,
    MERGED,
    code_units,
    gif_step_codes,
    gif_decode,
    ternary_codes,
    _as_tokens,
    _floor_eps,
)

logger = logging.getLogger(__name__)

STRUCTURED = 'structured'
UNSTRUCTURED = 'unstructured'


class ChannelPlan(object):
    """Spiking step allocation over input channels.

    Channels in salient_set get salient_steps merged steps, the rest get
    base_steps. For unstructured weight plans, element_steps gives the step
    count of every weight (out x in) and salient_set is ignored.
    """

    def __init__(
        self,
        channels,
        salient_set=(),
        salient_steps=2,
        levels=16,
        base_steps=1,
        granularity=STRUCTURED,
        element_steps=None,
    ):
        salient_set = tuple(int(c) for c in salient_set)
        if len(set(salient_set)) != len(salient_set):
            raise ValueError('salient channel indices must be unique')
        if any(c < 0 or c >= channels for c in salient_set):
            raise ValueError('salient channel index out of range')
        if salient_steps < 1 or base_steps < 1:
            raise ValueError('step counts must be positive')
        if levels < 2:
            raise ValueError('need at least 2 levels per step')
        if granularity not in (STRUCTURED, UNSTRUCTURED):
            raise ValueError('unknown granularity %s' % granularity)
        if granularity == UNSTRUCTURED:
            if element_steps is None:
                raise ValueError('unstructured plans need element_steps')
            element_steps = np.asarray(element_steps, dtype=np.int64)
            if element_steps.ndim != 2 or element_steps.shape[1] != channels:
                raise ValueError('element_steps must be out x channels')
            if np.any(element_steps < 1):
                raise ValueError('step counts must be positive')
        self.channels = channels
        self.salient_set = salient_set
        self.salient_steps = salient_steps
        self.base_steps = base_steps
        self.levels = levels
        self.granularity = granularity
        self.element_steps = element_steps

    def __repr__(self):
        return '<ChannelPlan | %s, %d channels, %d salient, T\'=%d, L=%d>' % (
            self.granularity,
            self.channels,
            len(self.salient_set),
            self.salient_steps,
            self.levels,
        )

    @classmethod
    def from_report(cls, report, salient_steps, levels, base_steps=1):
        """Structured plan from the selected channels of a SaliencyReport"""
        return cls(
            len(report.per_channel),
            salient_set=report.selected,
            salient_steps=salient_steps,
            levels=levels,
            base_steps=base_steps,
        )

    @classmethod
    def from_steps(cls, steps, levels):
        """Structured plan from per-channel step counts (at most two
        distinct values); channels above the minimum count are salient"""
        steps = np.asarray(steps, dtype=np.int64)
        counts = np.unique(steps)
        if steps.ndim != 1 or steps.size == 0 or len(counts) > 2:
            raise ValueError('need a nonempty vector of at most two step counts')
        base = int(counts[0])
        return cls(
            len(steps),
            salient_set=np.flatnonzero(steps > base),
            salient_steps=int(counts[-1]),
            levels=levels,
            base_steps=base,
        )

    @property
    def ratio(self):
        """Fraction of salient channels (or elements)"""
        if self.granularity == UNSTRUCTURED:
            return float(np.mean(self.element_steps > self.base_steps))
        return len(self.salient_set) / self.channels if self.channels else 0.0

    @property
    def salient_mask(self):
        mask = np.zeros(self.channels, dtype=bool)
        mask[list(self.salient_set)] = True
        return mask

    @property
    def channel_steps(self):
        """Step count of each input channel"""
        return np.where(self.salient_mask, self.salient_steps, self.base_steps)

    def weight_steps(self, rows):
        """Step count of each weight of a rows x channels matrix"""
        if self.granularity == UNSTRUCTURED:
            if self.element_steps.shape[0] != rows:
                raise ValueError('plan has %d rows, weights %d' % (
                    self.element_steps.shape[0], rows))
            return self.element_steps
        return np.broadcast_to(self.channel_steps, (rows, self.channels))


class QuantizedTensor(object):
    """Integer codes with their dequantization parameters.

    x_hat = scale / steps * code + zero_point, where scale and zero_point
    are per token (shape tokens x 1), per channel (1 x channels) or per
    weight group (rows x groups, with group_size set), and steps is the
    per-element step count (None for single-step codes).

    kind is 'asymmetric' (codes >= 0), 'symmetric' or 'ternary' (signed
    spike totals).
    """

    def __init__(
        self,
        codes,
        scale,
        zero_point,
        bits,
        kind='asymmetric',
        group_size=None,
        steps=None,
    ):
        self.codes = np.asarray(codes, dtype=np.int64)
        self.scale = np.asarray(scale, dtype=np.float64)
        self.zero_point = np.asarray(zero_point, dtype=np.float64)
        self.bits = bits
        self.kind = kind
        self.group_size = group_size
        self.steps = None if steps is None else np.asarray(steps, dtype=np.int64)
        if group_size:
            rows, cols = self.codes.shape
            groups = -(-cols // group_size)
            for name, p in (('scale', self.scale), ('zero_point', self.zero_point)):
                if p.shape != (rows, groups):
                    raise ValueError(
                        '%s has shape %s, expected %d x %d for group size %d'
                        % (name, p.shape, rows, groups, group_size)
                    )

    def __repr__(self):
        return '<QuantizedTensor | %s, %d x %d, %s bits%s>' % (
            self.kind,
            self.codes.shape[0],
            self.codes.shape[1],
            self.bits,
            ', group %d' % self.group_size if self.group_size else '',
        )

    @property
    def shape(self):
        return self.codes.shape

    def _per_element(self, p):
        if self.group_size:
            return np.repeat(p, self.group_size, axis=1)[:, : self.codes.shape[1]]
        return np.broadcast_to(p, self.codes.shape)

    @property
    def element_scale(self):
        """Value of one code unit of each element"""
        sc = self._per_element(self.scale)
        return sc if self.steps is None else sc / self.steps

    @property
    def element_zero(self):
        return self._per_element(self.zero_point)

    def dequantize(self):
        return self.element_scale * self.codes + self.element_zero


def _round(a, rounding, eps):
    if rounding == 'floor':
        return np.floor(a + eps)
    elif rounding == 'nearest':
        return np.floor(a + 0.5)
    else:
        raise ValueError('unknown rounding mode %s' % rounding)


def uniform_quantize(
    x,
    bits=None,
    mode='per-token',
    rounding=None,
    symmetric=False,
    levels=None,
    eps=None,
):
    """Asymmetric (or symmetric) uniform quantization.

    Parameters
    ----------
    x : array_like
        Input, tokens x channels.
    bits : int
        Code width, 1..8. Ignored if levels is given.
    mode : str
        'per-token' (statistics over each row) or 'per-channel' (each
        column).
    rounding : str
        'floor' or 'nearest'; default from cfg.quant.act_rounding.
    symmetric : bool
        Signed codes around zero, scale absmax / (2**(bits-1) - 1).
    levels : int | None
        Number of asymmetric code levels, overriding bits. Allows level
        counts that are not powers of two.

    Returns
    -------
    QuantizedTensor
    """
    x = _as_tokens(x)
    rounding = rounding or cfg['quant']['act_rounding']
    eps = _floor_eps(eps)
    if levels is None:
        if bits is None or bits < 1 or bits > 8:
            raise ValueError('bits must be in 1..8')
        levels = 2 ** bits
    elif levels < 2:
        raise ValueError('need at least 2 levels')
    else:
        bits = int(np.ceil(np.log2(levels)))
    if mode == 'per-token':
        axis = 1
    elif mode == 'per-channel':
        axis = 0
    else:
        raise ValueError('unknown quantization mode %s' % mode)

    if symmetric:
        if bits < 2:
            raise ValueError('symmetric quantization needs at least 2 bits')
        qmax = 2 ** (bits - 1) - 1
        scale = np.abs(x).max(axis=axis, keepdims=True) / qmax
        codes = np.rint(code_units(x, scale))
        codes = np.clip(codes, -qmax - 1, qmax)
        return QuantizedTensor(
            codes, scale, np.zeros_like(scale), bits, kind='symmetric'
        )

    zero = x.min(axis=axis, keepdims=True)
    scale = (x.max(axis=axis, keepdims=True) - zero) / (levels - 1)
    codes = _round(code_units(x - zero, scale), rounding, eps)
    codes = np.clip(codes, 0, levels - 1)
    return QuantizedTensor(codes, scale, zero, bits)


def mixed_step_quantize(x, plan, eps=None):
    """Saliency-aware mixed-step spiking quantization of activations.

    Each token has one zero point (its minimum). Salient channels are
    encoded by GIF neurons with plan.salient_steps steps and base channels
    with plan.base_steps steps; each class uses the range of its own
    channels, giving delta = range / (steps * (L - 1)) per class.

    Returns
    -------
    SpikeTrain
        Merged train with per-channel step counts.
    """
    x = _as_tokens(x)
    if plan.channels != x.shape[1]:
        raise ValueError(
            'plan has %d channels, input %d' % (plan.channels, x.shape[1])
        )
    if plan.granularity != STRUCTURED:
        raise ValueError('activation plans must be structured')
    ntok, nch = x.shape
    L = plan.levels
    zero = x.min(axis=1)
    u = x - zero[:, None]
    salient = plan.salient_mask
    codes = np.zeros((ntok, nch, plan.channel_steps.max()), np.int64)
    delta = np.zeros((ntok, nch))
    for mask, steps in ((salient, plan.salient_steps), (~salient, plan.base_steps)):
        if not mask.any():
            continue
        d = u[:, mask].max(axis=1) / (steps * (L - 1))
        a = code_units(u[:, mask], d[:, None])
        codes[:, mask, :steps] = gif_step_codes(a, steps, L, eps=eps)
        delta[:, mask] = d[:, None]
    logger.debug(
        'mixed-step quantized %d x %d, %d salient channels'
        % (ntok, nch, salient.sum())
    )
    return SpikeTrain(codes, MERGED, L, plan.channel_steps, delta, zero)


def mixed_step_dequantize(s, plan):
    """Reconstruct activations from a mixed-step train"""
    if s.channels != plan.channels:
        raise ValueError('plan has %d channels, train %d' % (plan.channels, s.channels))
    if s.form != MERGED or np.any(s.steps != plan.channel_steps):
        raise ValueError('spike train does not match the plan')
    return gif_decode(s)


class AffineGroupQuantizer(object):
    """Asymmetric per-group weight quantizer with per-element step counts.

    A group of a row shares min and max; an element with T steps has
    T * (levels - 1) codes over the range.
    """

    kind = 'asymmetric'

    def __init__(self, levels, steps, rounding='nearest'):
        self.levels = levels
        self.steps = steps
        self.rounding = rounding

    def fit(self, wg):
        zero = wg.min(axis=1)
        scale = (wg.max(axis=1) - zero) / (self.levels - 1)
        return scale, zero

    def quantize(self, w, params, cols):
        scale, zero = params
        steps = self.steps[:, cols]
        delta = scale[:, None] / steps
        codes = _round(code_units(w - zero[:, None], delta), self.rounding, 0.0)
        codes = np.clip(codes, 0, steps * (self.levels - 1))
        return codes.astype(np.int64), delta * codes + zero[:, None]


class TernaryGroupQuantizer(object):
    """Ternary spike weight quantizer: delta = group absmax / steps"""

    kind = 'ternary'

    def __init__(self, steps):
        self.steps = steps

    def fit(self, wg):
        absmax = np.abs(wg).max(axis=1)
        return absmax, np.zeros_like(absmax)

    def quantize(self, w, params, cols):
        absmax, zero = params
        n, delta = ternary_codes(w, self.steps[:, cols], absmax[:, None])
        return n, delta * n


def _group_size(group_size):
    return cfg['quant'].as_int('group_size') if group_size is None else group_size


def _result(codes, scales, zeros, quantizer, bits, group_size):
    return QuantizedTensor(
        codes,
        np.stack(scales, axis=1),
        np.stack(zeros, axis=1),
        bits,
        kind=quantizer.kind,
        group_size=group_size,
        steps=quantizer.steps,
    )


def rtn_quantize(W, quantizer, bits, group_size=None):
    """Round-to-nearest quantization of each weight group"""
    W = np.asarray(W, dtype=np.float64)
    group_size = _group_size(group_size)
    codes = np.zeros(W.shape, dtype=np.int64)
    scales, zeros = list(), list()
    for g0 in range(0, W.shape[1], group_size):
        cols = slice(g0, g0 + group_size)
        params = quantizer.fit(W[:, cols])
        codes[:, cols], _ = quantizer.quantize(W[:, cols], params, cols)
        scales.append(params[0])
        zeros.append(params[1])
    return _result(codes, scales, zeros, quantizer, bits, group_size)


def _inverse_hessian_factor(H):
    """Upper Cholesky factor of the inverse of H"""
    try:
        c = cho_factor(H)
        Hinv = cho_solve(c, np.eye(H.shape[0]))
        return cholesky(Hinv, lower=False)
    except LinAlgError:
        raise NumericalError('Hessian is not positive definite; increase damping')


def gptq_quantize(W, H, quantizer, bits, group_size=None):
    """Greedy column-wise quantization with Hessian error compensation.

    Columns are quantized in natural order. The error of each column is
    spread over the remaining columns using the Cholesky factor of the
    inverse Hessian; group parameters are fitted from the compensated
    weights when a group starts.

    Parameters
    ----------
    W : array_like
        Weights, out x in.
    H : array_like | HessianMatrix
        Damped Hessian of the layer inputs, in x in.
    quantizer : AffineGroupQuantizer | TernaryGroupQuantizer
        The group quantizer.
    bits : int
        Reported code width.
    group_size : int | None
        Columns per group; default from cfg.quant.group_size.
    """
    W = np.array(W, dtype=np.float64)
    H = np.array(getattr(H, 'values', H), dtype=np.float64)
    if H.shape != (W.shape[1], W.shape[1]):
        raise ValueError('Hessian shape %s does not match weights' % (H.shape,))
    group_size = _group_size(group_size)
    dead = np.diag(H) == 0
    if dead.any():
        logger.debug('%d dead input channels' % dead.sum())
        H[dead, dead] = 1
        W[:, dead] = 0
    U = _inverse_hessian_factor(H)
    ncols = W.shape[1]
    codes = np.zeros(W.shape, dtype=np.int64)
    scales, zeros = list(), list()
    for j in range(ncols):
        if j % group_size == 0:
            params = quantizer.fit(W[:, j : j + group_size])
            scales.append(params[0])
            zeros.append(params[1])
        cols = slice(j, j + 1)
        c, wq = quantizer.quantize(W[:, cols], params, cols)
        codes[:, j] = c[:, 0]
        err = (W[:, j] - wq[:, 0]) / U[j, j]
        W[:, j + 1 :] -= np.outer(err, U[j, j + 1 :])
    return _result(codes, scales, zeros, quantizer, bits, group_size)


def _weight_levels(plan, bits):
    if bits is None:
        if plan is not None:
            return plan.levels, int(np.log2(plan.levels))
        bits = cfg['quant'].as_int('weight_bits')
    return 2 ** bits, bits


def quantize_weights(
    W, plan=None, bits=None, group_size=None, rounding=None, method='rtn', H=None
):
    """Per-group asymmetric weight quantization with optional spiking steps.

    Parameters
    ----------
    W : array_like
        Weights, out x in.
    plan : ChannelPlan | None
        Step allocation; structured plans give every weight of a salient
        input channel plan.salient_steps steps, unstructured plans give
        per-element steps. None quantizes with one step everywhere.
    bits : int | None
        Bits per step; default log2(plan.levels) or cfg.quant.weight_bits.
    group_size : int | None
        Input columns per group; default cfg.quant.group_size.
    rounding : str | None
        Default cfg.quant.weight_rounding.
    method : str
        'rtn' or 'gptq' (needs H).
    H : array_like | HessianMatrix
        Damped input Hessian for 'gptq'.

    Returns
    -------
    QuantizedTensor
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError('weights must be 2-d')
    if plan is not None and plan.channels != W.shape[1]:
        raise ValueError('plan has %d channels, weights %d' % (plan.channels, W.shape[1]))
    levels, bits = _weight_levels(plan, bits)
    rounding = rounding or cfg['quant']['weight_rounding']
    if plan is None:
        steps = np.ones(W.shape, dtype=np.int64)
    else:
        steps = np.array(plan.weight_steps(W.shape[0]), dtype=np.int64)
    quantizer = AffineGroupQuantizer(levels, steps, rounding=rounding)
    if method == 'rtn':
        return rtn_quantize(W, quantizer, bits, group_size=group_size)
    elif method == 'gptq':
        if H is None:
            raise ValueError('gptq needs the Hessian')
        return gptq_quantize(W, H, quantizer, bits, group_size=group_size)
    else:
        raise ValueError('unknown weight quantization method %s' % method)


def quantize_ternary_weights(W, steps, group_size=None, method='rtn', H=None):
    """Ternary spike weights with per-element steps (1, 2 or 4)"""
    W = np.asarray(W, dtype=np.float64)
    steps = np.broadcast_to(np.asarray(steps, dtype=np.int64), W.shape).copy()
    if not set(np.unique(steps)) <= {1, 2, 4}:
        raise ValueError('step counts must be 1, 2 or 4')
    quantizer = TernaryGroupQuantizer(steps)
    if method == 'rtn':
        return rtn_quantize(W, quantizer, 2, group_size=group_size)
    elif method == 'gptq':
        if H is None:
            raise ValueError('gptq needs the Hessian')
        return gptq_quantize(W, H, quantizer, 2, group_size=group_size)
    else:
        raise ValueError('unknown weight quantization method %s' % method)
