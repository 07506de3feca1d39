# -*- coding: utf-8 -*-
"""

Named spiking configurations.

To create a new configuration, create a SpikingConfig() instance, fill in
the data and append to presets_all.

"""

ACTIVATIONS = 'activations'
WEIGHTS = 'weights'
TERNARY = 'ternary'

presets_all = list()


def preset_from_name(name):
    """Return the SpikingConfig with the given name"""
    for preset in presets_all:
        if preset.name == name:
            return preset
    raise KeyError(
        'Unknown preset %s (available: %s)'
        % (name, ', '.join(p.name for p in presets_all))
    )


class SpikingConfig(object):
    """A spiking quantization configuration. The data is intended to be
    non-mutable."""

    def __init__(self, name, desc, target, **kwargs):
        self.name = name
        self.desc = desc
        self.target = target  # which side is spiking
        self.ratio = kwargs.get('ratio', 0.0)  # salient fraction
        self.t_prime = kwargs.get('t_prime', 1)
        self.levels = kwargs.get('levels', 2)
        # bits of the non-spiking side
        self.other_side_bits = kwargs.get('other_side_bits')
        # fractions of 1, 2 and 4 step weights
        self.ternary_mix = kwargs.get('ternary_mix')
        # published reference values, for comparison only
        self.published_ace_ratio = kwargs.get('published_ace_ratio')
        self.published_equal_steps = kwargs.get('published_equal_steps')

    def __repr__(self):
        return '<SpikingConfig | %s: %s>' % (self.name, self.desc)

    def plan_config(self, selector='obspiking', seed=0):
        """Equivalent plan config dict"""
        di = {
            'ratio': self.ratio,
            't_prime': self.t_prime,
            'levels': self.levels,
            'selector': selector,
            'seed': seed,
            'granularity': 'unstructured' if self.target == TERNARY else 'structured',
        }
        if self.ternary_mix is not None:
            di['ternary_mix'] = list(self.ternary_mix)
        return di


""" Create presets """

#
# 4-bit activation (and KV cache) spiking
#
w4a4_t2 = SpikingConfig(
    'w4a4_t2',
    'W4A4, 10% activation channels with 2 steps of 16 levels',
    ACTIVATIONS,
    ratio=0.1,
    t_prime=2,
    levels=16,
    other_side_bits=4,
    published_ace_ratio=0.0688,
)
presets_all.append(w4a4_t2)

w4a4_t4 = SpikingConfig(
    'w4a4_t4',
    'W4A4, 5% activation channels with 4 steps of 16 levels',
    ACTIVATIONS,
    ratio=0.05,
    t_prime=4,
    levels=16,
    other_side_bits=4,
)
presets_all.append(w4a4_t4)

#
# 2-bit weight spiking
#
w2a16_t2 = SpikingConfig(
    'w2a16_t2',
    'W2A16, 10% weight input channels with 2 steps of 4 levels',
    WEIGHTS,
    ratio=0.1,
    t_prime=2,
    levels=4,
    other_side_bits=16,
    published_ace_ratio=0.138,
)
presets_all.append(w2a16_t2)

w2a8_t4 = SpikingConfig(
    'w2a8_t4',
    'W2A8, 5% weight input channels with 4 steps of 4 levels',
    WEIGHTS,
    ratio=0.05,
    t_prime=4,
    levels=4,
    other_side_bits=8,
    published_ace_ratio=0.075,
)
presets_all.append(w2a8_t4)

#
# ternary spike weights, unstructured 1/2/4 step mixes
#
for _mix, _steps in [
    ((0.70, 0.25, 0.05), 1.4),
    ((0.80, 0.15, 0.05), 1.3),
    ((0.85, 0.10, 0.05), 1.25),
    ((0.90, 0.05, 0.05), 1.2),
]:
    _pct = [int(round(100 * f)) for f in _mix]
    presets_all.append(
        SpikingConfig(
            'ternary_%d_%d_%d' % tuple(_pct),
            'Ternary weights, %d:%d:%d%% with 1:2:4 steps' % tuple(_pct),
            TERNARY,
            ratio=_mix[1] + _mix[2],
            t_prime=4,
            levels=2,
            other_side_bits=16,
            ternary_mix=_mix,
            published_equal_steps=_steps,
        )
    )
