# -*- coding: utf-8 -*-
"""
Tensor2D container and the SPKT tensor file format.

SPKT layout (all little-endian, no alignment padding):

    magic    4 bytes  b'SPKT'
    version  u32      1
    dtype    u8       0 = real32, 1 = int32
    ndim     u8       must be 2
    padding  2 bytes  zero
    dims     ndim x u64
    payload  row-major values

Internal arithmetic is done in float64; values are rounded to float32 only
when written.

"""

import io
import logging
import struct
import numpy as np

from .envutils import (
    SpikeFormatError,
    BadMagicError,
    UnsupportedVersionError,
    UnsupportedDtypeError,
    TruncatedPayloadError,
    DimensionOverflowError,
)

logger = logging.getLogger(__name__)

SPKT_MAGIC = b'SPKT'
SPKT_VERSION = 1
DTYPE_REAL32 = 0
DTYPE_INT32 = 1
_HEADER = struct.Struct('<4sIBBxx')
_DIMS = struct.Struct('<2Q')
_PAYLOAD_DTYPES = {DTYPE_REAL32: np.dtype('<f4'), DTYPE_INT32: np.dtype('<i4')}
# payloads larger than this cannot be addressed on any supported platform
_MAX_PAYLOAD_BYTES = 2 ** 62
_MAX_DIM = np.iinfo(np.intp).max


class Tensor2D(object):
    """A finite-valued 2-d matrix (tokens x channels or out x in).

    The data is held as a numpy array; real data is float64, integer data
    (spike codes) is int64. Instances can be passed to numpy functions
    directly.
    """

    def __init__(self, data):
        arr = np.array(data)
        if arr.ndim != 2:
            raise ValueError('Tensor2D needs 2-d data, got %d-d' % arr.ndim)
        if arr.dtype.kind in 'iub':
            arr = arr.astype(np.int64)
        elif arr.dtype.kind == 'f':
            arr = arr.astype(np.float64)
        else:
            raise ValueError('Unsupported data type %s' % arr.dtype)
        if not np.all(np.isfinite(arr)):
            raise ValueError('Tensor2D data must be finite')
        self.data = arr

    def __repr__(self):
        return '<Tensor2D | %d x %d, %s>' % (self.rows, self.cols, self.data.dtype)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.data
        return self.data.astype(dtype)

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_integer(self):
        return self.data.dtype.kind == 'i'


def _encode(t, dtype=None):
    """Return the SPKT bytes for tensor t"""
    if dtype is None:
        dtype = DTYPE_INT32 if t.is_integer else DTYPE_REAL32
    if dtype not in _PAYLOAD_DTYPES:
        raise ValueError('Unknown SPKT dtype %s' % dtype)
    if dtype == DTYPE_INT32 and t.is_integer:
        info = np.iinfo(np.int32)
        if t.data.size and (t.data.min() < info.min or t.data.max() > info.max):
            raise ValueError('Integer data does not fit in int32')
    payload = np.ascontiguousarray(t.data, dtype=_PAYLOAD_DTYPES[dtype])
    head = _HEADER.pack(SPKT_MAGIC, SPKT_VERSION, dtype, 2)
    return head + _DIMS.pack(t.rows, t.cols) + payload.tobytes()


def _decode(buf, source):
    """Parse SPKT bytes. source is used in error messages"""
    if len(buf) < 4 or buf[:4] != SPKT_MAGIC:
        raise BadMagicError('%s: not a SPKT file (bad magic)' % source)
    if len(buf) < _HEADER.size:
        raise TruncatedPayloadError('%s: truncated header' % source)
    magic, version, dtype, ndim = _HEADER.unpack_from(buf, 0)
    if version != SPKT_VERSION:
        raise UnsupportedVersionError(
            '%s: unsupported SPKT version %d' % (source, version)
        )
    if dtype not in _PAYLOAD_DTYPES:
        raise UnsupportedDtypeError('%s: unsupported dtype code %d' % (source, dtype))
    if ndim != 2:
        raise UnsupportedDtypeError(
            '%s: only 2-d tensors are supported (ndim=%d)' % (source, ndim)
        )
    if buf[10:12] != b'\x00\x00':
        raise SpikeFormatError('%s: nonzero header padding' % source)
    if len(buf) < _HEADER.size + _DIMS.size:
        raise TruncatedPayloadError('%s: truncated dimensions' % source)
    rows, cols = _DIMS.unpack_from(buf, _HEADER.size)
    pdtype = _PAYLOAD_DTYPES[dtype]
    nbytes = rows * cols * pdtype.itemsize
    if max(rows, cols) > _MAX_DIM or nbytes > _MAX_PAYLOAD_BYTES:
        raise DimensionOverflowError(
            '%s: dimensions %d x %d overflow the payload size' % (source, rows, cols)
        )
    start = _HEADER.size + _DIMS.size
    avail = len(buf) - start
    if avail < nbytes:
        raise TruncatedPayloadError(
            '%s: payload has %d bytes, expected %d' % (source, avail, nbytes)
        )
    if avail > nbytes:
        raise SpikeFormatError(
            '%s: %d trailing bytes after payload' % (source, avail - nbytes)
        )
    if nbytes:
        data = np.frombuffer(buf, dtype=pdtype, count=rows * cols, offset=start)
        data = data.reshape((rows, cols))
    else:
        data = np.zeros((rows, cols), dtype=pdtype)
    try:
        return Tensor2D(data)
    except ValueError:
        raise SpikeFormatError('%s: payload contains non-finite values' % source)


def tensor_read(path):
    """Read a Tensor2D from a SPKT file.

    Parameters
    ----------
    path : str
        The file name.

    Returns
    -------
    Tensor2D
        Real files give float64 data, int32 files give int64 data.
    """
    logger.debug('reading %s' % path)
    with io.open(path, 'rb') as f:
        buf = f.read()
    t = _decode(buf, path)
    logger.debug('read %s from %s' % (t, path))
    return t


def tensor_write(t, path, dtype=None):
    """Write tensor t into a SPKT file.

    Integer tensors are written as int32 and real tensors as real32, unless
    dtype (DTYPE_REAL32 or DTYPE_INT32) is given.
    """
    if not isinstance(t, Tensor2D):
        t = Tensor2D(t)
    buf = _encode(t, dtype=dtype)
    logger.debug('writing %s into %s' % (t, path))
    with io.open(path, 'wb') as f:
        f.write(buf)
