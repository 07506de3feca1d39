# -*- coding: utf-8 -*-
"""
Setup script for spikeutils.
"""

from setuptools import setup, find_packages

# entry points for console scripts
console_entries = [
    'spike_saliency=spikeutils.console:spike_saliency',
    'spike_quantize=spikeutils.console:spike_quantize',
    'spike_matmul=spikeutils.console:spike_matmul',
    'spike_demo=spikeutils.console:spike_demo',
]

setup(
    name='spikeutils',
    version='0.1.0',
    description='Saliency-aware spiking quantization: GIF neurons, channel saliency, '
    'bit-serial kernels and operation accounting',
    license='GPLv3',
    packages=find_packages(exclude=['tests']),
    install_requires=['numpy', 'scipy', 'configobj'],
    entry_points={'console_scripts': console_entries},
    include_package_data=True,
    package_data={'spikeutils': ['data/*.cfg']},
)
