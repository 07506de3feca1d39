# -*- coding: utf-8 -*-
"""

Utils for unit tests: independent oracles and fixture paths.

"""

import os.path as op
import numpy as np

from spikeutils.tensor import tensor_write

# where test data is held
testdata_root = op.join(op.dirname(op.abspath(__file__)), 'data')


def _file_path(filename):
    """Path for files directly under testdata dir"""
    return op.abspath(op.join(testdata_root, filename))


def naive_matmul(A, B):
    """Triple loop matrix product"""
    A = np.asarray(A)
    B = np.asarray(B)
    n, m = A.shape
    m2, p = B.shape
    assert m == m2
    C = np.zeros((n, p), dtype=np.result_type(A, B))
    for i in range(n):
        for j in range(p):
            acc = 0
            for k in range(m):
                acc += A[i, k] * B[k, j]
            C[i, j] = acc
    return C


def gauss_jordan_inverse(M):
    """Matrix inverse by Gauss-Jordan elimination with partial pivoting"""
    M = np.array(M, dtype=np.float64)
    n = M.shape[0]
    aug = np.hstack([M, np.eye(n)])
    for col in range(n):
        piv = col + np.argmax(np.abs(aug[col:, col]))
        aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


def naive_activation_saliency(X, W):
    """X o (W^T W X) with loops"""
    WX = naive_matmul(W, X)
    WtWX = naive_matmul(np.asarray(W).T, WX)
    return np.asarray(X) * WtWX


def random_train_codes(rng, tokens, channels, steps, levels):
    """Random merged codes in [0, levels - 1]"""
    return rng.randint(0, levels, size=(tokens, channels, steps))


def write_tensor(path, data):
    """Write data into path (a pathlib path) and return it as str"""
    fn = str(path)
    tensor_write(np.asarray(data), fn)
    return fn
