"""Pure-Python twins of the compiled kernels in ``_ckernels.pyx``."""
import math

import numpy as np


def _softplus(x):
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(-abs(x)))


def _sigmoid(x):
    # libm returns inf on overflow where math.exp raises; keep the two kernels in step
    try:
        return 1.0 / (1.0 + math.exp(-x))
    except OverflowError:
        return 0.0


def uniform_walks(indptr, indices, starts, walk_length, uniforms):
    n = len(starts)
    out = np.full((n, walk_length), -1, dtype=np.int64)
    for i in range(n):
        cur = int(starts[i])
        out[i, 0] = cur
        for step in range(1, walk_length):
            deg = int(indptr[cur + 1] - indptr[cur])
            if deg == 0:
                break
            pick = min(int(uniforms[i, step - 1] * deg), deg - 1)
            cur = int(indices[indptr[cur] + pick])
            out[i, step] = cur
    return out


def sgns_block(w_in, w_out, centers, contexts, negatives, lr):
    total = 0.0
    k = negatives.shape[1]
    for i in range(len(centers)):
        c = centers[i]
        o = contexts[i]
        neu1e = np.zeros(w_in.shape[1])
        for j in range(k + 1):
            if j == 0:
                target, label = o, 1.0
            else:
                target = negatives[i, j - 1]
                if target == o:
                    continue
                label = 0.0
            f = float(np.dot(w_in[c], w_out[target]))
            total += _softplus(-f) if label > 0.5 else _softplus(f)
            g = (label - _sigmoid(f)) * lr
            neu1e += g * w_out[target]
            w_out[target] += g * w_in[c]
        w_in[c] += neu1e
    return total
