# -*- coding: utf-8 -*-
"""
Matrix multiplication backends for quantized and spiking operands.

All GEMMs compute tokens x out results from tokens x channels activations
and out x channels weights.

bitserial_gemm works on bit-planes: codes are split into binary planes
packed 64 columns per uint64 word (LSB-first, zero padded) and

    a . w = sum_i sum_j 2**(i + j) popcount(AND(a_i, w_j))

mixed_step_gemm evaluates a mixed-step spike train by duplicating each
salient channel once per step, so that the integer GEMM runs on codes of
a single precision. event_driven_gemm accumulates weight columns for each
nonzero spike of an expanded train.

"""

import logging
import numpy as np

from .neuron import MERGED, EXPANDED_BINARY, EXPANDED_TERNARY

logger = logging.getLogger(__name__)

WORD_BITS = 64
# int64 accumulators cannot overflow below this many bits of dynamic range
_MAX_ACC_BITS = 62
# events processed at once in the accumulate-only kernel
_EVENT_CHUNK = 4096
# table of popcounts of all bytes
_POPCOUNT8 = np.array([bin(i).count('1') for i in range(256)], dtype=np.int64)


class BitPlanes(object):
    """Bit-plane decomposition of a nonnegative integer matrix.

    planes has shape (bits, rows, words); bit c of plane i word w is bit i
    of the code at column 64 * w + c.
    """

    def __init__(self, planes, rows, cols, bits):
        self.planes = planes
        self.rows = rows
        self.cols = cols
        self.bits = bits

    def __repr__(self):
        return '<BitPlanes | %d x %d, %d bits>' % (self.rows, self.cols, self.bits)

    @property
    def words(self):
        return self.planes.shape[2]


class GemmResult(object):
    """GEMM values and the number of nonzero accumulations performed"""

    def __init__(self, values, accumulated_events):
        self.values = values
        self.accumulated_events = int(accumulated_events)

    def __repr__(self):
        return '<GemmResult | %d x %d, %d events>' % (
            self.values.shape[0],
            self.values.shape[1],
            self.accumulated_events,
        )


def _nwords(cols):
    return max(1, -(-cols // WORD_BITS))


def popcount(words):
    """Number of set bits in each uint64 word"""
    words = np.ascontiguousarray(words, dtype=np.uint64)
    counts = _POPCOUNT8[words.view(np.uint8)]
    return counts.reshape(words.shape + (8,)).sum(axis=-1)


def _pack_bits(bits01, nwords):
    """Pack a rows x cols 0/1 matrix into rows x nwords uint64 words"""
    rows, cols = bits01.shape
    padded = np.zeros((rows, nwords * WORD_BITS), dtype=np.uint8)
    padded[:, :cols] = bits01
    packed = np.packbits(padded, axis=1, bitorder='little')
    return np.ascontiguousarray(packed).view('<u8').astype(np.uint64)


def pack_bitplanes(codes, bits):
    """Split integer codes in [0, 2**bits - 1] into packed bit-planes"""
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise ValueError('codes must be 2-d')
    if codes.dtype.kind not in 'iub':
        raise ValueError('codes must be integers')
    if bits < 1:
        raise ValueError('need at least one bit')
    codes = codes.astype(np.int64)
    if codes.size and (codes.min() < 0 or codes.max() > 2 ** bits - 1):
        raise ValueError('codes out of range for %d bits' % bits)
    rows, cols = codes.shape
    nwords = _nwords(cols)
    planes = np.stack(
        [_pack_bits((codes >> i) & 1, nwords) for i in range(bits)]
    )
    return BitPlanes(planes, rows, cols, bits)


def unpack_bitplanes(bp):
    """Reconstruct the integer codes of a BitPlanes"""
    codes = np.zeros((bp.rows, bp.cols), dtype=np.int64)
    for i in range(bp.bits):
        bytes_ = np.ascontiguousarray(bp.planes[i].astype('<u8')).view(np.uint8)
        bits01 = np.unpackbits(bytes_, axis=1, bitorder='little')[:, : bp.cols]
        codes += bits01.astype(np.int64) << i
    return codes


def _nonzero_plane(bp):
    """Word-wise OR of all planes: marks nonzero codes"""
    return np.bitwise_or.reduce(bp.planes, axis=0)


def bitserial_gemm(a, w, row_chunk=64):
    """Exact integer GEMM a . w^T via AND and popcount of bit-planes.

    Parameters
    ----------
    a : BitPlanes
        Activation codes, tokens x channels.
    w : BitPlanes
        Weight codes, out x channels.
    row_chunk : int
        Tokens processed at once; does not affect the result.

    Returns
    -------
    GemmResult
        int64 values (tokens x out); accumulated_events counts the
        (token, out, channel) triples with a nonzero product.
    """
    if a.cols != w.cols:
        raise ValueError('inner dimensions differ: %d vs %d' % (a.cols, w.cols))
    inner_bits = int(np.ceil(np.log2(max(a.cols, 2))))
    if a.bits + w.bits + inner_bits > _MAX_ACC_BITS:
        raise ValueError('GEMM may overflow int64 accumulators')
    values = np.zeros((a.rows, w.rows), dtype=np.int64)
    events = 0
    nz_w = _nonzero_plane(w)
    for r0 in range(0, a.rows, row_chunk):
        rows = slice(r0, r0 + row_chunk)
        for i in range(a.bits):
            ai = a.planes[i, rows][:, None, :]
            for j in range(w.bits):
                hits = popcount(ai & w.planes[j][None, :, :]).sum(axis=2)
                values[rows] += hits << (i + j)
        nz_a = _nonzero_plane(a)[rows][:, None, :]
        events += popcount(nz_a & nz_w[None, :, :]).sum()
    return GemmResult(values, events)


def naive_int_gemm(a_codes, w_codes):
    """Integer GEMM a . w^T with numpy int64 arithmetic"""
    a_codes = np.asarray(a_codes, dtype=np.int64)
    w_codes = np.asarray(w_codes, dtype=np.int64)
    if a_codes.shape[1] != w_codes.shape[1]:
        raise ValueError('inner dimensions differ')
    return np.dot(a_codes, w_codes.T)


def expand_channels(x):
    """Duplicate each channel of a merged train once per used step.

    Returns the tokens x sum(steps) code matrix and, for each of its
    columns, the source channel.
    """
    if x.form != MERGED:
        raise ValueError('need a merged train, got %s' % x.form)
    src = np.repeat(np.arange(x.channels), x.steps)
    step = np.concatenate([np.arange(s) for s in x.steps]) if x.channels else src
    return x.codes[:, src, step], src


def _bits_for(maxcode):
    return max(1, int(maxcode).bit_length())


def mixed_step_gemm(x, wq, plan, int_gemm='bitserial'):
    """Real GEMM of a mixed-step activation train and quantized weights.

    Salient channels are expanded into one column per step (each code at
    most L - 1) with matching duplicated weight columns, and integer GEMMs
    run per (weight group, step class). With dequantized weights
    W = s * c + m per group, the result is

        Y[t] = sum_{g,k} delta_k[t] (s_g I_gk[t] + m_g N_gk[t])
               + zero[t] * rowsum(W)

    where I_gk is the integer GEMM over the group's class-k columns and
    N_gk the code sum of those columns.

    Parameters
    ----------
    x : SpikeTrain
        Merged mixed-step train (tokens x channels).
    wq : QuantizedTensor
        Per-group asymmetric weights with single-step codes (out x
        channels).
    plan : ChannelPlan
        The plan x was quantized with.
    int_gemm : str
        'bitserial' or 'numpy' integer backend.

    Returns
    -------
    ndarray
        tokens x out.
    """
    if x.form != MERGED:
        raise ValueError('need a merged train, got %s' % x.form)
    if plan.channels != x.channels or np.any(plan.channel_steps != x.steps):
        raise ValueError('plan does not match the spike train')
    if wq.codes.shape[1] != x.channels:
        raise ValueError('weights have %d inputs, train %d' % (wq.codes.shape[1], x.channels))
    if wq.kind != 'asymmetric' or (wq.steps is not None and np.any(wq.steps != 1)):
        raise ValueError('mixed_step_gemm needs single-step asymmetric weights')
    if int_gemm not in ('bitserial', 'numpy'):
        raise ValueError('unknown integer backend %s' % int_gemm)
    x_exp, src = expand_channels(x)
    nout = wq.codes.shape[0]
    group_size = wq.group_size or x.channels
    scale = wq.scale if wq.group_size else np.broadcast_to(wq.scale, (nout, 1))
    zero = wq.zero_point if wq.group_size else np.broadcast_to(wq.zero_point, (nout, 1))
    salient = plan.salient_mask
    x_bits = _bits_for(x.levels - 1)
    w_bits = _bits_for(wq.codes.max() if wq.codes.size else 0)
    Y = np.zeros((x.tokens, nout))
    for g, g0 in enumerate(range(0, x.channels, group_size)):
        in_group = (src >= g0) & (src < g0 + group_size)
        for cls in (salient, ~salient):
            cols = in_group & cls[src]
            if not cols.any():
                continue
            # one delta per token and step class
            delta_k = x.delta[:, src[cols][0]]
            a = x_exp[:, cols]
            wc = wq.codes[:, src[cols]]
            if int_gemm == 'bitserial':
                I = bitserial_gemm(
                    pack_bitplanes(a, x_bits), pack_bitplanes(wc, w_bits)
                ).values
            else:
                I = naive_int_gemm(a, wc)
            N = a.sum(axis=1)
            Y += delta_k[:, None] * (
                scale[:, g][None, :] * I + zero[:, g][None, :] * N[:, None]
            )
    Y += x.zero_point[:, None] * wq.dequantize().sum(axis=1)[None, :]
    return Y


def event_driven_gemm(x, w):
    """Accumulate-only GEMM of an expanded spike train.

    Every nonzero spike at (token, channel) adds (or, for a -1 spike,
    subtracts) delta[token, channel] * w[:, channel] into the token's
    output; zero spikes do no work. The per-token zero point contributes
    zero[t] * rowsum(w).

    Parameters
    ----------
    x : SpikeTrain
        Expanded binary or ternary train.
    w : array_like | QuantizedTensor
        Weights, out x channels (dequantized if a QuantizedTensor).

    Returns
    -------
    GemmResult
        accumulated_events = nonzero spikes x output width.
    """
    if x.form not in (EXPANDED_BINARY, EXPANDED_TERNARY):
        raise ValueError('need an expanded train, got %s' % x.form)
    if hasattr(w, 'dequantize'):
        w = w.dequantize()
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != x.channels:
        raise ValueError('weights %s do not match %d channels' % (w.shape, x.channels))
    nout = w.shape[0]
    acc = np.zeros((x.tokens, nout))
    t_idx, c_idx, s_idx = np.nonzero(x.codes)
    nspikes = len(t_idx)
    for e0 in range(0, nspikes, _EVENT_CHUNK):
        ev = slice(e0, e0 + _EVENT_CHUNK)
        t, c = t_idx[ev], c_idx[ev]
        amp = x.codes[t, c, s_idx[ev]] * x.delta[t, c]
        np.add.at(acc, t, amp[:, None] * w[:, c].T)
    acc += x.zero_point[:, None] * w.sum(axis=1)[None, :]
    logger.debug('event-driven GEMM: %d spikes' % nspikes)
    return GemmResult(acc, nspikes * nout)


def reference_gemm(a, b):
    """Real GEMM a . b with a fixed accumulation order.

    The inner index k is accumulated in ascending order for every output
    element, independent of array sizes or threading.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError('cannot multiply %s by %s' % (a.shape, b.shape))
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    return out
