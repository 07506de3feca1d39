import logging

from .envutils import SpikeDataError

# the main purpose of adding the null handler is to disable the
# default stderr logging for levels >= warning, which may be
# annoying when the package is used as a library
logging.getLogger('spikeutils').addHandler(logging.NullHandler())


# config must be importable by all the other modules, so delay the import
# until this point
from .config import cfg
