# -*- coding: utf-8 -*-
"""
File I/O for the console scripts: plan configs, synthetic data specs,
spike trains and quantized tensors with JSON sidecars, JSON reports and
CSV tables.

Spike trains and quantized weights are stored as an int32 SPKT file of
codes plus a sidecar <file>.json holding the decoding parameters.

"""

import csv
import io
import json
import logging
import os.path as op
import numpy as np

from .envutils import SpikeDataError, PlanConfigError
from .neuron import SpikeTrain, FORMS
from .quant import QuantizedTensor, STRUCTURED, UNSTRUCTURED
from .tensor import tensor_read, tensor_write, DTYPE_INT32
from .harness import SyntheticSpec, OBSPIKING, SELECTORS

logger = logging.getLogger(__name__)

# per-seed CSV and report numbers are written with this format
FLOAT_FORMAT = '%.10g'


def _pointer(*parts):
    """JSON pointer (RFC 6901) from path components"""
    return ''.join(
        '/' + str(p).replace('~', '~0').replace('/', '~1') for p in parts
    )


def _is_integer(val):
    return isinstance(val, int) and not isinstance(val, bool)


def _is_number(val):
    return (
        isinstance(val, (int, float))
        and not isinstance(val, bool)
        and np.isfinite(val)
    )


_TYPE_CHECKS = {
    'integer': _is_integer,
    'number': _is_number,
    'string': lambda val: isinstance(val, str),
}


def _validate(di, schema, required=()):
    """Check a JSON object against schema.

    schema maps key -> (type name, predicate, message). Raises
    PlanConfigError pointing at the first offending item.
    """
    if not isinstance(di, dict):
        raise PlanConfigError('', 'expected a JSON object')
    for key in di:
        if key not in schema:
            raise PlanConfigError(_pointer(key), 'unknown key')
    for key in required:
        if key not in di:
            raise PlanConfigError(_pointer(key), 'required key is missing')
    for key, (typename, check, msg) in schema.items():
        if key not in di or typename is None:
            continue
        val = di[key]
        if not _TYPE_CHECKS[typename](val):
            raise PlanConfigError(_pointer(key), 'expected %s' % typename)
        if not check(val):
            raise PlanConfigError(_pointer(key), msg)


def _load_json(fn):
    """Load a JSON file; parse errors become PlanConfigError"""
    logger.debug('reading %s' % fn)
    with io.open(fn, 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except (UnicodeDecodeError, ValueError) as e:
            raise PlanConfigError('', '%s: invalid JSON (%s)' % (fn, e))


class PlanConfig(object):
    """A validated spiking plan configuration.

    JSON schema (unknown keys are rejected):

        ratio        number in [0, 1], required
        t_prime      integer >= 1, required
        levels       integer >= 2, required
        selector     "obspiking" | "random", default "obspiking"
        seed         integer >= 0, default 0
        granularity  "structured" | "unstructured", default "structured"
        ternary_mix  [f1, f2, f4], fractions of 1, 2 and 4 step weights;
                     required for (and only allowed with) unstructured plans
    """

    schema = {
        'ratio': ('number', lambda v: 0 <= v <= 1, 'must be in [0, 1]'),
        't_prime': ('integer', lambda v: v >= 1, 'must be at least 1'),
        'levels': ('integer', lambda v: v >= 2, 'must be at least 2'),
        'selector': (
            'string',
            lambda v: v in SELECTORS,
            'must be one of %s' % ', '.join(SELECTORS),
        ),
        'seed': ('integer', lambda v: 0 <= v < 2 ** 64, 'must be a 64-bit unsigned'),
        'granularity': (
            'string',
            lambda v: v in (STRUCTURED, UNSTRUCTURED),
            'must be structured or unstructured',
        ),
        # checked separately
        'ternary_mix': (None, None, None),
    }
    required = ('ratio', 't_prime', 'levels')

    def __init__(
        self,
        ratio,
        t_prime,
        levels,
        selector=OBSPIKING,
        seed=0,
        granularity=STRUCTURED,
        ternary_mix=None,
    ):
        self.ratio = ratio
        self.t_prime = t_prime
        self.levels = levels
        self.selector = selector
        self.seed = seed
        self.granularity = granularity
        self.ternary_mix = None if ternary_mix is None else tuple(ternary_mix)

    def __repr__(self):
        return '<PlanConfig | %s, ratio %g, T\'=%d, L=%d, %s>' % (
            self.granularity,
            self.ratio,
            self.t_prime,
            self.levels,
            self.selector,
        )

    @classmethod
    def from_dict(cls, di):
        """Validate a plan config dict and return a PlanConfig"""
        _validate(di, cls.schema, cls.required)
        mix = di.get('ternary_mix')
        granularity = di.get('granularity', STRUCTURED)
        if mix is not None:
            if not isinstance(mix, list) or len(mix) != 3:
                raise PlanConfigError(
                    _pointer('ternary_mix'), 'expected an array of 3 fractions'
                )
            for k, f in enumerate(mix):
                if not _is_number(f) or f < 0:
                    raise PlanConfigError(
                        _pointer('ternary_mix', k), 'expected a nonnegative number'
                    )
            if abs(sum(mix) - 1) > 1e-9:
                raise PlanConfigError(_pointer('ternary_mix'), 'fractions must sum to 1')
            if granularity != UNSTRUCTURED:
                raise PlanConfigError(
                    _pointer('granularity'), 'ternary_mix needs an unstructured plan'
                )
        elif granularity == UNSTRUCTURED:
            raise PlanConfigError(
                _pointer('ternary_mix'), 'required for unstructured plans'
            )
        return cls(
            di['ratio'],
            di['t_prime'],
            di['levels'],
            selector=di.get('selector', OBSPIKING),
            seed=di.get('seed', 0),
            granularity=granularity,
            ternary_mix=mix,
        )

    @classmethod
    def from_preset(cls, preset, selector=OBSPIKING, seed=0):
        """PlanConfig of a presets.SpikingConfig"""
        return cls.from_dict(preset.plan_config(selector=selector, seed=seed))

    def to_dict(self):
        di = {
            'ratio': self.ratio,
            't_prime': self.t_prime,
            'levels': self.levels,
            'selector': self.selector,
            'seed': self.seed,
            'granularity': self.granularity,
        }
        if self.ternary_mix is not None:
            di['ternary_mix'] = list(self.ternary_mix)
        return di


def load_plan_config(fn):
    """Load and validate a plan config JSON file"""
    pc = PlanConfig.from_dict(_load_json(fn))
    logger.debug('loaded %s from %s' % (pc, fn))
    return pc


_SYNTH_SCHEMA = {
    'tokens': ('integer', lambda v: v >= 1, 'must be positive'),
    'channels': ('integer', lambda v: v >= 1, 'must be positive'),
    'out_features': ('integer', lambda v: v >= 1, 'must be positive'),
    'outlier_ratio': ('number', lambda v: 0 <= v <= 1, 'must be in [0, 1]'),
    'outlier_scale': ('number', lambda v: v >= 1, 'must be at least 1'),
    'seed': ('integer', lambda v: v >= 0, 'must be nonnegative'),
}


def load_synth_spec(fn):
    """Load a synthetic data spec; missing keys take cfg.harness defaults"""
    di = _load_json(fn)
    _validate(di, _SYNTH_SCHEMA)
    return SyntheticSpec(**di)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    elif isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError('cannot serialize %s' % type(obj))


def save_json(obj, fn):
    """Write obj as indented JSON with keys in insertion order"""
    logger.debug('writing %s' % fn)
    with io.open(fn, 'w', encoding='utf-8', newline='') as f:
        f.write(json.dumps(obj, indent=2, default=_json_default))
        f.write(u'\n')


def _format_cell(val):
    if isinstance(val, (float, np.floating)):
        return FLOAT_FORMAT % val
    return val


def write_rows_csv(rows, fn):
    """Write a list of OrderedDicts as CSV; the header is taken from the
    first row"""
    if not rows:
        raise ValueError('no rows to write')
    logger.debug('writing %d rows into %s' % (len(rows), fn))
    with io.open(fn, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(list(rows[0].keys()))
        for row in rows:
            writer.writerow([_format_cell(val) for val in row.values()])


def sidecar_fn(fn):
    """Name of the JSON parameter sidecar of a codes file"""
    return fn + '.json'


def _load_sidecar(fn):
    sfn = sidecar_fn(fn)
    if not op.isfile(sfn):
        raise SpikeDataError('%s: missing parameter sidecar %s' % (fn, sfn))
    with io.open(sfn, 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except (UnicodeDecodeError, ValueError):
            raise SpikeDataError('Error loading sidecar file %s' % sfn)


def write_spike_train(s, fn):
    """Write SpikeTrain s as int32 codes (tokens x channels * n_steps) with
    a JSON sidecar"""
    codes = s.codes.reshape(s.tokens, s.channels * s.n_steps)
    tensor_write(codes, fn, dtype=DTYPE_INT32)
    params = {
        'form': s.form,
        'levels': s.levels,
        'n_steps': s.n_steps,
        'steps': s.steps,
        'delta': s.delta,
        'zero_point': s.zero_point,
    }
    save_json(params, sidecar_fn(fn))


def read_spike_train(fn):
    """Read a SpikeTrain written by write_spike_train"""
    t = tensor_read(fn)
    params = _load_sidecar(fn)
    try:
        form = params['form']
        n_steps = int(params['n_steps'])
        if form not in FORMS:
            raise ValueError('unknown form %s' % form)
        if not t.is_integer:
            raise ValueError('codes must be int32')
        if n_steps < 1 or t.cols % n_steps:
            raise ValueError('%d columns do not split into %d steps' % (t.cols, n_steps))
        codes = t.data.reshape(t.rows, t.cols // n_steps, n_steps)
        delta = np.asarray(params['delta'], dtype=np.float64)
        zero = np.asarray(params['zero_point'], dtype=np.float64)
        if delta.shape != codes.shape[:2] or zero.shape != (t.rows,):
            raise ValueError('parameter shapes do not match the codes')
        s = SpikeTrain(codes, form, params['levels'], params['steps'], delta, zero)
    except (KeyError, TypeError, ValueError) as e:
        raise SpikeDataError('%s: invalid spike train (%s)' % (fn, e))
    logger.debug('read %s from %s' % (s, fn))
    return s


def write_quantized_tensor(q, fn):
    """Write a QuantizedTensor as int32 codes with a JSON sidecar"""
    tensor_write(q.codes, fn, dtype=DTYPE_INT32)
    params = {
        'kind': q.kind,
        'bits': q.bits,
        'group_size': q.group_size,
        'scale': q.scale,
        'zero_point': q.zero_point,
        'steps': q.steps,
    }
    save_json(params, sidecar_fn(fn))


def has_quantized_sidecar(fn):
    """True if fn has a sidecar describing a QuantizedTensor"""
    sfn = sidecar_fn(fn)
    if not op.isfile(sfn):
        return False
    return 'kind' in _load_sidecar(fn)


def read_quantized_tensor(fn):
    """Read a QuantizedTensor written by write_quantized_tensor"""
    t = tensor_read(fn)
    params = _load_sidecar(fn)
    try:
        if not t.is_integer:
            raise ValueError('codes must be int32')
        steps = params['steps']
        q = QuantizedTensor(
            t.data,
            params['scale'],
            params['zero_point'],
            params['bits'],
            kind=params['kind'],
            group_size=params['group_size'],
            steps=steps,
        )
        if q.steps is not None and q.steps.shape != q.shape:
            raise ValueError('steps do not match the codes')
        q.dequantize()
    except (KeyError, TypeError, ValueError) as e:
        raise SpikeDataError('%s: invalid quantized tensor (%s)' % (fn, e))
    return q
