# -*- coding: utf-8 -*-
"""
Spiking neuron encoders and decoders.

Values are encoded per token: the token minimum is the zero point and the
shifted input u = x - zero is represented by spike counts in units of the
step value delta. A GIF (generalized integrate-and-fire) neuron runs for
`steps` merged time steps and emits a code in [0, levels - 1] per step; an
IF neuron is the special case levels=2. Merged trains can be expanded into
binary trains of steps * (levels - 1) slots and merged back.

Code arrays have shape (tokens, channels, steps). Channels may have
different step counts (mixed-step trains); unused trailing slots are zero.

"""

import logging
import numpy as np

from . import cfg

logger = logging.getLogger(__name__)

MERGED = 'merged'
EXPANDED_BINARY = 'expanded-binary'
EXPANDED_TERNARY = 'expanded-ternary'
FORMS = (MERGED, EXPANDED_BINARY, EXPANDED_TERNARY)


class TokenQuantParams(object):
    """Per-token quantization parameters of a spiking encoder.

    v_th_unit is the firing threshold of one merged step, step_delta the
    value of a single spike unit and zero_point the token minimum.
    """

    def __init__(self, v_th_unit, zero_point, step_delta, levels_per_step, steps):
        self.v_th_unit = v_th_unit
        self.zero_point = zero_point
        self.step_delta = step_delta
        self.levels_per_step = levels_per_step
        self.steps = steps

    def __repr__(self):
        return '<TokenQuantParams | zero: %g, delta: %g, theta: %g, T\'=%d, L=%d>' % (
            self.zero_point,
            self.step_delta,
            self.v_th_unit,
            self.steps,
            self.levels_per_step,
        )

    @property
    def full_scale(self):
        """Largest total code"""
        return self.steps * (self.levels_per_step - 1)


class SpikeTrain(object):
    """Spike codes with the metadata needed to decode them.

    Attributes
    ----------
    codes : ndarray
        Integer codes, shape (tokens, channels, max steps).
    form : str
        One of 'merged', 'expanded-binary', 'expanded-ternary'.
    levels : int
        Levels per merged step (L). For expanded trains this is the L of the
        merged train they came from.
    steps : ndarray
        Number of used time steps for each channel.
    delta : ndarray
        Value of one spike unit, shape (tokens, channels).
    zero_point : ndarray
        Per-token zero point, shape (tokens,).
    """

    def __init__(self, codes, form, levels, steps, delta, zero_point):
        codes = np.asarray(codes, dtype=np.int64)
        if codes.ndim != 3:
            raise ValueError('codes must be 3-d (tokens, channels, steps)')
        if form not in FORMS:
            raise ValueError('unknown spike train form %s' % form)
        ntok, nch, nsteps = codes.shape
        steps = np.broadcast_to(np.asarray(steps, dtype=np.int64), (nch,)).copy()
        if steps.size and steps.max() > nsteps:
            raise ValueError('step counts exceed the code array')
        self.codes = codes
        self.form = form
        self.levels = int(levels)
        self.steps = steps
        self.delta = np.broadcast_to(
            np.asarray(delta, dtype=np.float64), (ntok, nch)
        ).copy()
        self.zero_point = np.broadcast_to(
            np.asarray(zero_point, dtype=np.float64), (ntok,)
        ).copy()

    def __repr__(self):
        return '<SpikeTrain | %s, %d tokens x %d channels, steps %s, L=%d>' % (
            self.form,
            self.tokens,
            self.channels,
            np.unique(self.steps).tolist(),
            self.levels,
        )

    @property
    def tokens(self):
        return self.codes.shape[0]

    @property
    def channels(self):
        return self.codes.shape[1]

    @property
    def n_steps(self):
        """Length of the code array along the time axis"""
        return self.codes.shape[2]

    @property
    def totals(self):
        """Summed code per (token, channel)"""
        return self.codes.sum(axis=2)

    @property
    def is_expanded(self):
        return self.form != MERGED

    def params(self, channel=0):
        """TokenQuantParams of each token for the step class of channel"""
        steps = int(self.steps[channel])
        if self.form == MERGED:
            merged_steps, levels = steps, self.levels
        else:
            # expanded trains are parametrized by their binary slots
            merged_steps, levels = steps, 2
        return [
            TokenQuantParams(
                self.delta[t, channel] * merged_steps,
                self.zero_point[t],
                self.delta[t, channel],
                levels,
                merged_steps,
            )
            for t in range(self.tokens)
        ]


def _check_steps_levels(steps, levels):
    if steps < 1:
        raise ValueError('need at least one step')
    if levels < 2:
        raise ValueError('need at least 2 levels per step')


def _as_tokens(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError('input must be 2-d (tokens x channels)')
    if x.shape[1] == 0:
        raise ValueError('empty token vector')
    if not np.all(np.isfinite(x)):
        raise ValueError('input must be finite')
    return x


def _floor_eps(eps):
    return cfg['neuron'].as_float('floor_eps') if eps is None else eps


def code_units(u, delta):
    """Shifted input u in units of delta; zero where delta is zero"""
    safe = np.where(delta > 0, delta, 1.0)
    return np.where(delta > 0, u / safe, 0.0)


def gif_step_codes(a, steps, levels, eps=None):
    """Per-step GIF codes for inputs a given in delta units.

    The neuron integrates a each merged step and fires with threshold
    steps (in delta units), emitting floor(v / steps) capped at levels - 1,
    then resets by subtraction. Cumulatively, after step t the emitted total
    is floor(t * a / steps), so the final total is floor(a) clipped to
    [0, steps * (levels - 1)].

    Returns an integer array with a trailing step axis.
    """
    eps = _floor_eps(eps)
    full = steps * (levels - 1)
    a = np.asarray(a, dtype=np.float64)
    t = np.arange(1, steps + 1, dtype=np.float64)
    cum = np.floor(a[..., None] * t / steps + eps)
    # last step integrates exactly a
    cum[..., -1] = np.floor(a + eps)
    cum = np.clip(cum, 0, full)
    k = np.diff(cum, axis=-1, prepend=0.0)
    return np.clip(k, 0, levels - 1).astype(np.int64)


def compute_params(x_token, steps, levels):
    """Quantization parameters of a single token.

    Parameters
    ----------
    x_token : array_like
        The token (1-d).
    steps : int
        Merged time steps T'.
    levels : int
        Levels per step L.

    Returns
    -------
    TokenQuantParams
        zero_point = min(x), delta = range / (T' (L - 1)), threshold
        delta * T'. The maximum maps to the full-scale code.
    """
    _check_steps_levels(steps, levels)
    x_token = np.asarray(x_token, dtype=np.float64).ravel()
    if x_token.size == 0:
        raise ValueError('empty token vector')
    if not np.all(np.isfinite(x_token)):
        raise ValueError('input must be finite')
    zero = x_token.min()
    delta = (x_token.max() - zero) / (steps * (levels - 1))
    return TokenQuantParams(delta * steps, zero, delta, levels, steps)


def gif_encode(x, steps, levels, eps=None):
    """Encode tokens x channels input with GIF neurons.

    Parameters
    ----------
    x : array_like
        Input, tokens x channels.
    steps : int
        Merged time steps T'.
    levels : int
        Levels per step L; L=2 gives an IF neuron.
    eps : float | None
        Floor guard in code units; default from cfg.neuron.floor_eps.

    Returns
    -------
    SpikeTrain
        Merged train with codes in [0, L - 1].
    """
    _check_steps_levels(steps, levels)
    x = _as_tokens(x)
    zero = x.min(axis=1)
    delta = (x.max(axis=1) - zero) / (steps * (levels - 1))
    ndegen = np.count_nonzero(delta == 0)
    if ndegen:
        logger.warning('%d constant tokens encode to zero codes' % ndegen)
    a = code_units(x - zero[:, None], delta[:, None])
    codes = gif_step_codes(a, steps, levels, eps=eps)
    return SpikeTrain(codes, MERGED, levels, steps, delta[:, None], zero)


def gif_membrane(x, steps, levels, eps=None):
    """Membrane potential after each merged step, in threshold units.

    Returns array (tokens, channels, steps). After the last step the
    potential is the fractional part of the input in delta units, for any
    split of the same total budget into steps and levels.
    """
    x = _as_tokens(x)
    s = gif_encode(x, steps, levels, eps=eps)
    a = code_units(x - s.zero_point[:, None], s.delta)
    t = np.arange(1, steps + 1, dtype=np.float64)
    # integrated input minus fired spikes, divided by the threshold T'
    return a[..., None] * t / steps - np.cumsum(s.codes, axis=2)


def if_encode(x, steps, eps=None):
    """Encode with binary integrate-and-fire neurons over `steps` steps.

    Equivalent to GIF with two levels; returns an expanded-binary train
    whose spike counts equal Clip(floor(T u / range), 0, T).
    """
    s = gif_encode(x, steps, 2, eps=eps)
    s.form = EXPANDED_BINARY
    return s


def gif_decode(s):
    """Decode a spike train: delta * sum of codes + zero point"""
    return s.delta * s.totals + s.zero_point[:, None]


def expand(s):
    """Expand a merged train into binary spikes.

    Each merged step with code k becomes levels - 1 binary slots holding k
    ones in the earliest slots.
    """
    if s.form != MERGED:
        raise ValueError('can only expand a merged train, got %s' % s.form)
    sub = s.levels - 1
    slots = np.arange(sub)
    ones = (slots < s.codes[..., None]).astype(np.int64)
    codes = ones.reshape(s.tokens, s.channels, s.n_steps * sub)
    return SpikeTrain(
        codes, EXPANDED_BINARY, s.levels, s.steps * sub, s.delta, s.zero_point
    )


def merge(s, levels):
    """Merge an expanded binary train by summing groups of levels - 1 slots"""
    if s.form != EXPANDED_BINARY:
        raise ValueError('can only merge an expanded binary train, got %s' % s.form)
    if levels < 2:
        raise ValueError('need at least 2 levels per step')
    sub = levels - 1
    if s.n_steps % sub or np.any(s.steps % sub):
        raise ValueError(
            'step count %d is not divisible by levels - 1 = %d' % (s.n_steps, sub)
        )
    codes = s.codes.reshape(s.tokens, s.channels, s.n_steps // sub, sub).sum(axis=3)
    return SpikeTrain(codes, MERGED, levels, s.steps // sub, s.delta, s.zero_point)


def ternary_codes(w, steps, absmax):
    """Signed spike totals of weights w with per-element step counts.

    All arguments broadcast together. delta = absmax / steps and the total
    is round(w / delta) clipped to [-steps, steps].
    """
    w = np.asarray(w, dtype=np.float64)
    steps = np.asarray(steps, dtype=np.int64)
    absmax = np.asarray(absmax, dtype=np.float64)
    if np.any(steps < 1):
        raise ValueError('need at least one step per element')
    if np.any((absmax == 0) & (w != 0)):
        raise ValueError('zero group absmax with nonzero weights')
    delta = absmax / steps
    n = np.rint(code_units(w, delta))
    n = np.clip(n, -steps, steps).astype(np.int64)
    return n, np.broadcast_to(delta, n.shape)


def ternary_encode(w, steps_per_element, group_absmax):
    """Encode a weight vector into ternary spikes.

    Parameters
    ----------
    w : array_like
        Weights (1-d).
    steps_per_element : array_like
        Step count of each weight, each 1, 2 or 4.
    group_absmax : float
        Scale of the group, at least max |w|.

    Returns
    -------
    train : SpikeTrain
        Expanded ternary train of one token; element i holds |n_i| spikes
        of sign(n_i) in its earliest slots.
    delta : ndarray
        Value of one spike of each element.
    """
    w = np.asarray(w, dtype=np.float64).ravel()
    steps = np.asarray(steps_per_element, dtype=np.int64).ravel()
    if steps.shape != w.shape:
        raise ValueError('need one step count per weight')
    if not set(np.unique(steps)) <= {1, 2, 4}:
        raise ValueError('step counts must be 1, 2 or 4')
    if w.size and np.abs(w).max() > group_absmax:
        raise ValueError('group absmax is smaller than max |w|')
    n, delta = ternary_codes(w, steps, group_absmax)
    nslots = steps.max() if steps.size else 1
    slots = np.arange(nslots)
    codes = np.sign(n)[:, None] * (slots < np.abs(n)[:, None])
    train = SpikeTrain(
        codes[None, ...], EXPANDED_TERNARY, 2, steps, delta[None, :], 0.0
    )
    return train, np.array(delta)
