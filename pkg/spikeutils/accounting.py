# -*- coding: utf-8 -*-
"""
Operation cost accounting.

ACE (arithmetic computation effort) = MACs x weight bits x activation bits.
Sparse ACE scales the ACE of the expanded 1-bit spike form by its fraction
of nonzero spikes.

"""

import logging
import numpy as np

from . import cfg
from .numutils import round_sig

logger = logging.getLogger(__name__)

# significant figures of reported ACE ratios
RATIO_DIGITS = 4


class OpsReport(object):
    """Operation metrics of a quantized or spiking layer.

    sparsity is the fraction of nonzero spikes in the expanded form (None
    when no spike train is involved, as is sparse_ace).
    """

    def __init__(
        self,
        macs,
        bits_weight,
        bits_act,
        ace,
        ace_ratio_vs_fp16,
        sparse_ace=None,
        sparsity=None,
        equal_steps=None,
        code_bits_total=None,
    ):
        self.macs = macs
        self.bits_weight = bits_weight
        self.bits_act = bits_act
        self.ace = ace
        self.ace_ratio_vs_fp16 = ace_ratio_vs_fp16
        self.sparse_ace = sparse_ace
        self.sparsity = sparsity
        self.equal_steps = equal_steps
        self.code_bits_total = code_bits_total

    def __repr__(self):
        return '<OpsReport | MACs %d, W%gA%g, ACE ratio %g>' % (
            self.macs,
            self.bits_weight,
            self.bits_act,
            self.ace_ratio_vs_fp16,
        )

    def to_dict(self):
        return {
            'macs': int(self.macs),
            'bits_weight': float(self.bits_weight),
            'bits_act': float(self.bits_act),
            'ace': float(self.ace),
            'ace_ratio_vs_fp16': float(self.ace_ratio_vs_fp16),
            'sparse_ace': None if self.sparse_ace is None else float(self.sparse_ace),
            'sparsity': None if self.sparsity is None else float(self.sparsity),
            'equal_steps': None if self.equal_steps is None else float(self.equal_steps),
            'code_bits_total': (
                None if self.code_bits_total is None else float(self.code_bits_total)
            ),
        }


def _fp_bits(fp_bits):
    return cfg['accounting'].as_float('fp_bits') if fp_bits is None else fp_bits


def ace(macs, bw, ba):
    """ACE = macs * bw * ba"""
    if macs < 0 or bw < 0 or ba < 0:
        raise ValueError('ACE arguments must be nonnegative')
    return macs * bw * ba


def ace_ratio(bw, ba, fp_bits=None):
    """ACE relative to a full precision (fp_bits x fp_bits) MAC"""
    fp_bits = _fp_bits(fp_bits)
    return ace(1, bw, ba) / fp_bits ** 2


def average_bits(plan, bits_per_step):
    """Average bits per value on the side encoded with plan"""
    r = plan.ratio
    return bits_per_step * ((1 - r) * plan.base_steps + r * plan.salient_steps)


def mixed_ace_ratio(plan, bits_per_step, other_side_bits, fp_bits=None):
    """ACE ratio of a mixed-step plan against full precision.

    With base_steps=1 the planned side averages
    bits_per_step * (1 + ratio * (T' - 1)) bits.
    """
    return ace_ratio(average_bits(plan, bits_per_step), other_side_bits, fp_bits)


def _expanded_counts(train):
    """Nonzero spikes and used slots of the expanded form of train.

    A merged train is counted as its expansion without building it: a code
    k becomes k ones in levels - 1 slots.
    """
    if train.is_expanded:
        return np.count_nonzero(train.codes), train.tokens * train.steps.sum()
    return (
        int(train.codes.sum()),
        train.tokens * train.steps.sum() * (train.levels - 1),
    )


def spike_sparsity(train):
    """Fraction of nonzero spikes over the used slots of the expanded form"""
    nonzero, slots = _expanded_counts(train)
    return nonzero / slots if slots else 0.0


def _sparse_ace(train, weight_bits, output_width):
    nonzero, slots = _expanded_counts(train)
    if not slots:
        return 0.0
    return (nonzero / slots) * ace(slots * output_width, weight_bits, 1)


def sparse_ace(expanded, weight_bits, output_width):
    """Sparsity x ACE of the expanded 1-bit form.

    The dense expanded MAC count is tokens x used slots x output_width,
    each MAC costing weight_bits x 1.
    """
    if not expanded.is_expanded:
        raise ValueError('need an expanded train, got %s' % expanded.form)
    return _sparse_ace(expanded, weight_bits, output_width)


def equal_steps(fractions, steps=(1, 2, 4)):
    """Average spiking steps sum(f_i * steps_i); fractions must sum to 1"""
    fractions = np.asarray(fractions, dtype=np.float64)
    steps = np.asarray(steps, dtype=np.float64)
    if fractions.shape != steps.shape:
        raise ValueError('need one fraction per step count')
    if np.any(fractions < 0) or abs(fractions.sum() - 1) > 1e-9:
        raise ValueError('fractions must be nonnegative and sum to 1')
    return float(np.dot(fractions, steps))


def code_length(scheme, T, L=None, ratio=0.0, convention='nominal'):
    """Code length in bits of a T-step spike (or T-level) representation.

    Parameters
    ----------
    scheme : str
        'if' (T binary steps), 'gif' (T/L merged steps of log2 L bits),
        'quant' (log2 T bits) or 'mixed' (GIF where a ratio of channels
        gets T' = T/L steps and the rest one step).
    T : int
        Total steps (or levels for 'quant').
    L : int
        Levels per merged step, for 'gif' and 'mixed'.
    convention : str
        'nominal' counts T/L merged steps; 'levels' counts T/(L-1), matching
        merged codes in [0, L-1], so that 'gif' equals 'if' at L=2.
    """
    if scheme == 'if':
        return float(T)
    elif scheme == 'quant':
        return float(np.log2(T))
    if L is None or L < 2:
        raise ValueError('scheme %s needs L >= 2' % scheme)
    if convention == 'nominal':
        merged = T / L
    elif convention == 'levels':
        merged = T / (L - 1)
    else:
        raise ValueError('unknown code length convention %s' % convention)
    if scheme == 'gif':
        return merged * np.log2(L)
    elif scheme == 'mixed':
        return np.log2(L) * (1 + ratio * (merged - 1))
    raise ValueError('unknown scheme %s' % scheme)


def ops_report(
    macs,
    bits_weight,
    bits_act,
    fp_bits=None,
    train=None,
    output_width=None,
    weight_bits_sparse=None,
    equal_steps=None,
    code_bits_total=None,
):
    """Assemble an OpsReport.

    If a spike train (merged or expanded) is given, sparsity and sparse ACE
    are computed on its expanded form (weight_bits_sparse defaults to
    bits_weight). The ACE ratio is rounded to 4 significant figures.
    """
    ace_ = ace(macs, bits_weight, bits_act)
    ratio = round_sig(ace_ratio(bits_weight, bits_act, fp_bits), RATIO_DIGITS)
    sparsity = sace = None
    if train is not None:
        if output_width is None:
            raise ValueError('sparse ACE needs the output width')
        wb = bits_weight if weight_bits_sparse is None else weight_bits_sparse
        sparsity = spike_sparsity(train)
        sace = _sparse_ace(train, wb, output_width)
    return OpsReport(
        macs,
        bits_weight,
        bits_act,
        ace_,
        ratio,
        sparse_ace=sace,
        sparsity=sparsity,
        equal_steps=equal_steps,
        code_bits_total=code_bits_total,
    )
