"""Compiled inner loops: tree growing, routing and leaf-set reductions.

Everything here works on plain arrays so the Python layer owns all
bookkeeping and random number generation.
"""

import numpy as np
from numba import njit

_TIE_TOL = 1e-12


@njit(cache=True, nogil=True)
def _weighted_gini(c0, c1):
    n = c0 + c1
    if n == 0:
        return 0.0
    return n - (c0 * c0 + c1 * c1) / n


@njit(cache=True, nogil=True)
def _draw_candidates(weights, mtry, uniforms, ptr, out):
    """Sequential weighted draws without replacement; returns (count, ptr)."""
    p = weights.shape[0]
    remaining = weights.copy()
    k = 0
    while k < mtry:
        total = 0.0
        for j in range(p):
            total += remaining[j]
        if total <= 0.0:
            break
        u = uniforms[ptr] * total
        ptr += 1
        pick = -1
        acc = 0.0
        for j in range(p):
            if remaining[j] > 0.0:
                acc += remaining[j]
                pick = j
                if u < acc:
                    break
        out[k] = pick
        remaining[pick] = 0.0
        k += 1
    out[:k].sort()
    return k, ptr


@njit(cache=True, nogil=True)
def grow_tree(X, y, sample, weights, mtry, min_leaf, max_depth, uniforms):
    """Grow one classification tree on the rows listed in ``sample``.

    Returns node arrays (feature, threshold, left, right, counts, decrease)
    trimmed to the number of nodes. Leaves have feature == -1. ``decrease``
    holds the count-weighted Gini decrease of each split.
    """
    m = sample.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    counts = np.zeros((cap, 2), dtype=np.int64)
    decrease = np.zeros(cap, dtype=np.float64)

    idx = sample.copy()
    cands = np.empty(mtry, dtype=np.int64)
    vals = np.empty(m, dtype=np.float64)
    labels = np.empty(m, dtype=np.int64)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    ptr = 0

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        size = end - start
        c1 = 0
        for i in range(start, end):
            c1 += y[idx[i]]
        c0 = size - c1
        counts[node, 0] = c0
        counts[node, 1] = c1
        if c0 == 0 or c1 == 0 or size < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        k, ptr = _draw_candidates(weights, mtry, uniforms, ptr, cands)
        parent_imp = _weighted_gini(float(c0), float(c1))
        best_dec = -1.0
        best_f = -1
        best_t = 0.0
        for ci in range(k):
            f = cands[ci]
            for i in range(size):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:size], kind="mergesort")
            l0 = 0
            l1 = 0
            for i in range(size - 1):
                r = idx[start + order[i]]
                if y[r] == 1:
                    l1 += 1
                else:
                    l0 += 1
                a = vals[order[i]]
                b = vals[order[i + 1]]
                if not a < b:
                    continue
                nl = i + 1
                if nl < min_leaf or size - nl < min_leaf:
                    continue
                dec = (parent_imp - _weighted_gini(float(l0), float(l1))
                       - _weighted_gini(float(c0 - l0), float(c1 - l1)))
                if dec > best_dec + 1e-12:
                    best_dec = dec
                    best_f = f
                    t = 0.5 * (a + b)
                    if t <= a:
                        t = b
                    best_t = t
        if best_f < 0:
            continue

        # stable in-place partition: x < t left, x >= t right
        n_left = 0
        for i in range(start, end):
            r = idx[i]
            if X[r, best_f] < best_t:
                labels[n_left] = r
                n_left += 1
        n_right = 0
        for i in range(start, end):
            r = idx[i]
            if not X[r, best_f] < best_t:
                labels[n_left + n_right] = r
                n_right += 1
        for i in range(size):
            idx[start + i] = labels[i]

        feature[node] = best_f
        threshold[node] = best_t
        decrease[node] = best_dec
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is expanded first
        st_node[top] = rc
        st_start[top] = start + n_left
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lc
        st_start[top] = start
        st_end[top] = start + n_left
        st_depth[top] = depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy(), decrease[:n_nodes].copy())


@njit(cache=True, nogil=True)
def apply_tree(feature, threshold, left, right, X):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def first_splits(feature, threshold, left, right, p):
    """Per node, the sign (+1/-1/0) and threshold of the first split on each
    feature along the root-to-node path. Children always have larger ids
    than their parent, so a forward sweep suffices."""
    n_nodes = feature.shape[0]
    sign = np.zeros((n_nodes, p), dtype=np.int8)
    thr = np.full((n_nodes, p), np.nan)
    for node in range(n_nodes):
        f = feature[node]
        if f < 0:
            continue
        for c in (left[node], right[node]):
            sign[c, :] = sign[node, :]
            thr[c, :] = thr[node, :]
        if sign[node, f] == 0:
            sign[left[node], f] = -1
            sign[right[node], f] = 1
            thr[left[node], f] = threshold[node]
            thr[right[node], f] = threshold[node]
    return sign, thr


@njit(cache=True, nogil=True)
def set_tree_sums(member_cols, member_len, leaf_bits, leaf_tree, n_trees, leaf_weights):
    """For each query set q and tree t, sum leaf_weights[l, :] over leaves l of
    tree t whose boolean column row contains every column of q.

    member_cols: (Q, kmax) padded column indices; member_len: (Q,)
    leaf_bits: (L, ncols) uint8; leaf_weights: (L, W)
    returns (Q, n_trees, W)
    """
    Q = member_cols.shape[0]
    L = leaf_bits.shape[0]
    W = leaf_weights.shape[1]
    out = np.zeros((Q, n_trees, W))
    for q in range(Q):
        k = member_len[q]
        for l in range(L):
            ok = True
            for a in range(k):
                if leaf_bits[l, member_cols[q, a]] == 0:
                    ok = False
                    break
            if ok:
                t = leaf_tree[l]
                for w in range(W):
                    out[q, t, w] += leaf_weights[l, w]
    return out
