# -*- coding: utf-8 -*-
"""
Exceptions used across spikeutils.

"""


class SpikeDataError(Exception):
    pass


class SpikeFormatError(SpikeDataError):
    """Tensor file does not conform to the SPKT format"""

    pass


class BadMagicError(SpikeFormatError):
    pass


class UnsupportedVersionError(SpikeFormatError):
    pass


class UnsupportedDtypeError(SpikeFormatError):
    pass


class TruncatedPayloadError(SpikeFormatError):
    pass


class DimensionOverflowError(SpikeFormatError):
    pass


class PlanConfigError(SpikeDataError):
    """Invalid plan config. path is a JSON pointer to the offending item"""

    def __init__(self, path, msg):
        self.path = path
        super(PlanConfigError, self).__init__('%s: %s' % (path or '/', msg))


class NumericalError(SpikeDataError):
    """A numerical procedure failed (e.g. Cholesky of an undamped Hessian)"""

    pass
