# -*- coding: utf-8 -*-
"""
Channel saliency for spiking step allocation.

First-order activation saliency X o (W^T W X) and second-order weight
saliency W**2 / [H^-1]_ii**2 with H = 2 X X^T, aggregated into per-channel
scores and ranked. A random selector serves as the ablation baseline.

Layouts: X is channels x tokens, W is out x channels.

"""

import csv
import io
import logging
import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from . import cfg
from .envutils import NumericalError

logger = logging.getLogger(__name__)

ACTIVATION = 'activation-gradient'
WEIGHT = 'weight-hessian'
RANDOM = 'random'


class SaliencyReport(object):
    """Per-channel saliency scores, ranking and the selected channels.

    rank lists channel indices by descending score (ties by ascending
    index); selected holds the first round(ratio * channels) of them, in
    rank order.
    """

    def __init__(self, metric, per_channel, rank, selected, ratio):
        self.metric = metric
        self.per_channel = np.asarray(per_channel, dtype=np.float64)
        self.rank = np.asarray(rank, dtype=np.int64)
        self.selected = tuple(int(c) for c in selected)
        self.ratio = ratio

    def __repr__(self):
        return '<SaliencyReport | %s, %d channels, %d selected>' % (
            self.metric,
            len(self.per_channel),
            len(self.selected),
        )

    @property
    def channel_rank(self):
        """Rank position of each channel"""
        pos = np.empty_like(self.rank)
        pos[self.rank] = np.arange(len(self.rank))
        return pos


class HessianMatrix(object):
    """Damped layer Hessian 2 X X^T + damping * I"""

    def __init__(self, values, damping=0.0):
        self.values = np.asarray(values, dtype=np.float64)
        self.damping = damping

    def __repr__(self):
        return '<HessianMatrix | dim %d, damping %g>' % (self.dim, self.damping)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def dim(self):
        return self.values.shape[0]

    def inverse(self):
        """Inverse via Cholesky factorization"""
        try:
            c = cho_factor(self.values)
        except LinAlgError:
            raise NumericalError(
                'Cholesky factorization of the Hessian failed; increase damping'
            )
        return cho_solve(c, np.eye(self.dim))


def _n_selected(n, ratio):
    if not 0 <= ratio <= 1:
        raise ValueError('ratio must be in [0, 1]')
    # round half up
    return int(np.floor(ratio * n + 0.5))


def activation_saliency(X, W):
    """Activation saliency X o (W^T (W X)) (channels x tokens)"""
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.ndim != 2 or W.ndim != 2 or W.shape[1] != X.shape[0]:
        raise ValueError(
            'weights %s do not match activations %s' % (W.shape, X.shape)
        )
    return X * np.dot(W.T, np.dot(W, X))


def hessian(X, damping_frac=None):
    """Layer Hessian H = 2 X X^T + lambda I.

    lambda is damping_frac times the mean diagonal of 2 X X^T; default
    fraction from cfg.saliency.damping_frac.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise ValueError('need nonempty 2-d input (channels x tokens)')
    if damping_frac is None:
        damping_frac = cfg['saliency'].as_float('damping_frac')
    H = 2 * np.dot(X, X.T)
    H = (H + H.T) / 2
    lam = damping_frac * np.mean(np.diag(H))
    logger.debug('Hessian dim %d, damping %g' % (H.shape[0], lam))
    return HessianMatrix(H + lam * np.eye(H.shape[0]), damping=lam)


def weight_saliency(W, H):
    """Weight saliency W_ij**2 / [H^-1]_jj**2 (out x in).

    H may be a HessianMatrix or a plain matrix. Raises NumericalError if
    H cannot be factorized.
    """
    W = np.asarray(W, dtype=np.float64)
    if not isinstance(H, HessianMatrix):
        H = HessianMatrix(H)
    if W.ndim != 2 or H.dim != W.shape[1]:
        raise ValueError('Hessian dim %d does not match weights %s' % (H.dim, W.shape))
    hinv_diag = np.diag(H.inverse())
    return W ** 2 / hinv_diag[None, :] ** 2


def aggregate_per_channel(S, axis=0):
    """Mean |S| per channel; axis is the channel axis of S"""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or axis not in (0, 1):
        raise ValueError('need a 2-d saliency matrix and axis 0 or 1')
    return np.abs(S).mean(axis=1 - axis)


def select_salient(scores, ratio=None, metric=ACTIVATION):
    """Select the top round(ratio * n) channels by score.

    Ties are broken by ascending channel index; default ratio from
    cfg.saliency.ratio.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if ratio is None:
        ratio = cfg['saliency'].as_float('ratio')
    k = _n_selected(len(scores), ratio)
    rank = np.argsort(-scores, kind='stable')
    return SaliencyReport(metric, scores, rank, rank[:k], ratio)


def random_plan(channels, ratio, rng):
    """Random baseline: a uniformly random subset of channels.

    The per-channel scores are the uniform keys that order the subset, so
    the report is consistent with select_salient.
    """
    _n_selected(channels, ratio)
    keys = rng.uniform(channels)
    return select_salient(keys, ratio, metric=RANDOM)


def saliency_csv(report):
    """Per-channel saliency table as CSV text"""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(['channel', 'score', 'rank', 'selected'])
    selected = set(report.selected)
    for ch, (score, pos) in enumerate(zip(report.per_channel, report.channel_rank)):
        writer.writerow([ch, '%.10g' % score, pos, int(ch in selected)])
    return buf.getvalue()


def write_saliency_csv(report, fn):
    """Write the per-channel saliency table"""
    logger.debug('writing saliency table into %s' % fn)
    with io.open(fn, 'w', encoding='utf-8', newline='') as f:
        f.write(saliency_csv(report))
