"""Compiled inner loops for tree growing and ensemble prediction.

Both kernels run sequentially in a fixed order, so results are bitwise
reproducible across runs and worker counts.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _leaf_value(targets, rows):
    vals = np.sort(targets[rows])
    acc = 0.0
    for v in vals:
        acc += v
    return acc / vals.size


@njit(cache=True)
def _best_split(xt, targets, buf, start, stop, min_leaf, rel_floor):
    """Best (feature, last-left position, gain) over the segment, or feature -1.

    Scans features in index order and positions in threshold order, keeping
    only strict improvements, so ties go to the lowest feature and threshold.
    """
    d = xt.shape[0]
    n = stop - start
    if n < 2 * min_leaf:
        return -1, -1, 0.0
    mean = 0.0
    for i in range(start, stop):
        mean += targets[buf[0, i]]
    mean /= n
    sse = 0.0
    for i in range(start, stop):
        c = targets[buf[0, i]] - mean
        sse += c * c

    best_j, best_pos, best_score, best_total = -1, -1, -np.inf, 0.0
    for j in range(d):
        total = 0.0
        for i in range(start, stop):
            total += targets[buf[j, i]] - mean
        left = 0.0
        for k in range(n - 1):
            row = buf[j, start + k]
            left += targets[row] - mean
            nl = k + 1
            if nl < min_leaf or n - nl < min_leaf:
                continue
            if not xt[j, row] < xt[j, buf[j, start + k + 1]]:
                continue
            right = total - left
            score = left * left / nl + right * right / (n - nl)
            if score > best_score:
                best_j, best_pos, best_score, best_total = j, k, score, total
    if best_j < 0:
        return -1, -1, 0.0
    gain = best_score - best_total * best_total / n
    if not gain > 0 or gain <= rel_floor * sse:
        return -1, -1, 0.0
    return best_j, best_pos, gain


@njit(cache=True)
def grow(xt, order, targets, max_depth, min_leaf, rel_floor, max_nodes):
    """Grow one tree depth first; nodes are numbered in preorder.

    ``xt`` is ``(d, N)`` feature-major data and ``order`` the matching
    per-feature sorted row indices.  Each node owns the same contiguous
    segment of every row of the working copy of ``order``.
    """
    d, n_rows = xt.shape
    buf = order.copy()
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)
    goes_left = np.zeros(n_rows, dtype=np.bool_)
    tmp = np.empty(n_rows, dtype=order.dtype)

    st_node = np.empty(max_nodes, dtype=np.int64)
    st_start = np.empty(max_nodes, dtype=np.int64)
    st_stop = np.empty(max_nodes, dtype=np.int64)
    st_depth = np.empty(max_nodes, dtype=np.int64)
    top = 0
    st_node[0], st_start[0], st_stop[0], st_depth[0] = 0, 0, n_rows, 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node, s, e, depth = st_node[top], st_start[top], st_stop[top], st_depth[top]
        j = -1
        pos = -1
        if depth < max_depth:
            lo_t = np.inf
            hi_t = -np.inf
            for i in range(s, e):
                t = targets[buf[0, i]]
                lo_t = min(lo_t, t)
                hi_t = max(hi_t, t)
            if lo_t < hi_t:
                j, pos, _ = _best_split(xt, targets, buf, s, e, min_leaf, rel_floor)
        if j < 0:
            value[node] = _leaf_value(targets, buf[0, s:e])
            continue

        lo = xt[j, buf[j, s + pos]]
        hi = xt[j, buf[j, s + pos + 1]]
        thr = (lo + hi) / 2
        if not (lo <= thr and thr < hi):
            thr = lo
        n_left = pos + 1
        for i in range(s, e):
            goes_left[buf[j, i]] = i < s + n_left
        for f in range(d):
            a = 0
            b = n_left
            for i in range(s, e):
                row = buf[f, i]
                if goes_left[row]:
                    tmp[a] = row
                    a += 1
                else:
                    tmp[b] = row
                    b += 1
            for i in range(e - s):
                buf[f, s + i] = tmp[i]

        feature[node] = j
        threshold[node] = thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        st_node[top], st_start[top], st_stop[top], st_depth[top] = rc, s + n_left, e, depth + 1
        top += 1
        st_node[top], st_start[top], st_stop[top], st_depth[top] = lc, s, s + n_left, depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True)
def predict_one(x, feature, threshold, left, right, value):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        node = 0
        while feature[node] >= 0:
            if x[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def predict_sum(x, f0, feature, threshold, left, right, value, roots, scales):
    """``f0 + sum_t scales[t] * tree_t(x)``, accumulated tree by tree.

    The per-row accumulation order matches adding one stage at a time.
    """
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        acc = f0
        for t in range(roots.size):
            node = roots[t]
            while feature[node] >= 0:
                if x[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc = acc + scales[t] * value[node]
        out[i] = acc
    return out
