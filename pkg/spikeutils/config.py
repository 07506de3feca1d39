# -*- coding: utf-8 -*-
"""
Handles spikeutils config files.

The defaults are read from the packaged default.cfg. Console scripts may
override them with an explicit --config file; there is no implicit user
config, so that runs are reproducible from their flags alone.

"""
import os.path as op
import logging

from configobj import ConfigObj, ParseError

from .envutils import SpikeDataError

# logging handlers might not be installed at this point, so config related
# messages may not be seen at all
logger = logging.getLogger(__name__)


def _update_config(cfg, cfg_new, source):
    """Update existing items of cfg from cfg_new. New sections or items
    are not created"""
    for secname, sec in cfg_new.items():
        if secname not in cfg:
            logger.warning('%s: ignoring unknown section [%s]' % (source, secname))
            continue
        if not isinstance(sec, dict):
            logger.warning('%s: ignoring top level item %s' % (source, secname))
            continue
        for item, val in sec.items():
            if item not in cfg[secname]:
                logger.warning(
                    '%s: ignoring unknown item %s in [%s]' % (source, item, secname)
                )
                continue
            cfg[secname][item] = val


def load_config(filename):
    """Override the global config with values from filename"""
    if not op.isfile(filename):
        raise SpikeDataError('No such config file %s' % filename)
    logger.debug('reading config overrides from %s' % filename)
    try:
        cfg_user = ConfigObj(filename, encoding='utf8', file_error=True)
    except ParseError:
        raise SpikeDataError('Cannot parse config file %s' % filename)
    _update_config(cfg, cfg_user, filename)
    return cfg


def reset_config():
    """Restore the packaged defaults"""
    cfg.reload()
    return cfg


# default config
cfg_template_fn = op.join(op.dirname(op.abspath(__file__)), 'data', 'default.cfg')

# provide the global cfg instance
cfg = ConfigObj(cfg_template_fn, encoding='utf8')
