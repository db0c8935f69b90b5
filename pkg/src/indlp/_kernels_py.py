"""Pure-Python reference kernels. Same signatures and semantics as ``_kernels.pyx``.

All randomness is passed in as arrays so both implementations consume
identical streams.
"""

import math

import numpy as np

IMPLEMENTATION = "python"


def _has_edge(indptr, targets, src, dst):
    lo, hi = indptr[src], indptr[src + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if targets[mid] < dst:
            lo = mid + 1
        else:
            hi = mid
    return lo < indptr[src + 1] and targets[lo] == dst


def walk_kernel(indptr, targets, weights, starts, uniforms, walk_length, p, q, out):
    """Fill ``out[i]`` with a biased walk from ``starts[i]``; returns lengths.

    ``uniforms[i, s]`` drives step ``s + 1`` of walk ``i``. Unused cells of
    ``out`` are left at -1.
    """
    n_walks = len(starts)
    lengths = np.zeros(n_walks, dtype=np.int64)
    inv_p, inv_q = 1.0 / p, 1.0 / q
    indptr = indptr.tolist()
    targets_l = targets.tolist()
    weights_l = weights.tolist()
    for i in range(n_walks):
        cur = int(starts[i])
        out[i, 0] = cur
        n = 1
        prev = -1
        while n < walk_length:
            lo, hi = indptr[cur], indptr[cur + 1]
            if lo == hi:
                break
            total = 0.0
            probs = []
            for k in range(lo, hi):
                u = targets_l[k]
                w = weights_l[k]
                if prev >= 0:
                    if u == prev:
                        w = w * inv_p
                    elif not _has_edge(indptr, targets_l, prev, u):
                        w = w * inv_q
                probs.append(w)
                total += w
            threshold = uniforms[i, n - 1] * total
            acc = 0.0
            choice = hi - 1
            for k in range(lo, hi):
                acc += probs[k - lo]
                if threshold < acc:
                    choice = k
                    break
            prev = cur
            cur = targets_l[choice]
            out[i, n] = cur
            n += 1
        lengths[i] = n
    return lengths


def _log_sigmoid(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def sgns_kernel(flat, offsets, walk_lo, walk_hi, window, center, context,
                negatives, neg_start, n_neg, lrs):
    """Skip-gram negative-sampling SGD over walks ``walk_lo:walk_hi``.

    ``negatives[neg_start[w]:]`` supplies ``n_neg`` noise nodes per
    (center, context) pair of walk ``w``, consumed in pair order. ``lrs[w]``
    is the step size for walk ``w``. Updates ``center``/``context`` in place
    and returns the summed loss and pair count.
    """
    dim = center.shape[1]
    loss = 0.0
    pairs = 0
    for w in range(walk_lo, walk_hi):
        a, b = offsets[w], offsets[w + 1]
        walk = flat[a:b].tolist()
        length = b - a
        lr = lrs[w]
        ni = neg_start[w]
        for i in range(length):
            u = walk[i]
            zu = center[u]
            for j in range(max(0, i - window), min(length, i + window + 1)):
                if j == i:
                    continue
                v = walk[j]
                grad_u = np.zeros(dim)
                for k in range(n_neg + 1):
                    if k == 0:
                        target, label = v, 1.0
                    else:
                        target, label = int(negatives[ni]), 0.0
                        ni += 1
                        if target == v:
                            continue
                    zc = context[target]
                    f = 0.0
                    for c in range(dim):
                        f += zu[c] * zc[c]
                    if label > 0:
                        loss -= _log_sigmoid(f)
                    else:
                        loss -= _log_sigmoid(-f)
                    g = (label - _sigmoid(f)) * lr
                    grad_u += g * zc
                    zc += g * zu
                zu += grad_u
                pairs += 1
    return loss, pairs
