# cython: language_level=3
"""Compiled hot loops: uniform random walks and skip-gram SGD updates.

Both functions mirror ``_pykernels`` operation for operation; random draws
are supplied by the caller so the two backends consume identical streams.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs

cnp.import_array()


cdef inline double _softplus(double x) nogil:
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(-fabs(x)))


def uniform_walks(const cnp.int64_t[:] indptr,
                  const cnp.int64_t[:] indices,
                  const cnp.int64_t[:] starts,
                  Py_ssize_t walk_length,
                  const double[:, :] uniforms):
    cdef Py_ssize_t n = starts.shape[0]
    out = np.full((n, walk_length), -1, dtype=np.int64)
    cdef cnp.int64_t[:, :] walks = out
    cdef Py_ssize_t i, step, deg, pick
    cdef cnp.int64_t cur
    with nogil:
        for i in range(n):
            cur = starts[i]
            walks[i, 0] = cur
            for step in range(1, walk_length):
                deg = indptr[cur + 1] - indptr[cur]
                if deg == 0:
                    break
                pick = <Py_ssize_t>(uniforms[i, step - 1] * deg)
                if pick >= deg:
                    pick = deg - 1
                cur = indices[indptr[cur] + pick]
                walks[i, step] = cur
    return out


def sgns_block(double[:, :] w_in,
               double[:, :] w_out,
               const cnp.int64_t[:] centers,
               const cnp.int64_t[:] contexts,
               const cnp.int64_t[:, :] negatives,
               double lr):
    cdef Py_ssize_t m = centers.shape[0]
    cdef Py_ssize_t k = negatives.shape[1]
    cdef Py_ssize_t d = w_in.shape[1]
    cdef Py_ssize_t i, j, t
    cdef cnp.int64_t c, target
    cdef double f, s, g, label, total = 0.0
    cdef double[::1] neu1e = np.zeros(d, dtype=np.float64)
    with nogil:
        for i in range(m):
            c = centers[i]
            for t in range(d):
                neu1e[t] = 0.0
            for j in range(k + 1):
                if j == 0:
                    target = contexts[i]
                    label = 1.0
                else:
                    target = negatives[i, j - 1]
                    if target == contexts[i]:
                        continue
                    label = 0.0
                f = 0.0
                for t in range(d):
                    f = f + w_in[c, t] * w_out[target, t]
                if label > 0.5:
                    total = total + _softplus(-f)
                else:
                    total = total + _softplus(f)
                s = 1.0 / (1.0 + exp(-f))
                g = (label - s) * lr
                for t in range(d):
                    neu1e[t] = neu1e[t] + g * w_out[target, t]
                for t in range(d):
                    w_out[target, t] = w_out[target, t] + g * w_in[c, t]
            for t in range(d):
                w_in[c, t] = w_in[c, t] + neu1e[t]
    return total
