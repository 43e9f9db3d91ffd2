"""Compiled inner loops for tree growth, tree traversal and network training.

All kernels are ``nogil`` so forest trees can be grown from a thread pool, and
none of them touch global random state: feature sampling uses a splitmix64
generator whose state is passed in explicitly.
"""

import math

import numpy as np
from numba import njit

LEAF = -1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True)
def _splitmix64(state):
    state[0] = state[0] + _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _randbelow(state, m):
    u = (_splitmix64(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    k = int(u * m)
    return k if k < m else m - 1


@njit(cache=True, nogil=True)
def grow_tree(X, y, sample, max_depth, min_split, min_leaf, mtry, rng_seed):
    """Greedy SSE-reduction tree on rows ``sample`` (repeats allowed).

    max_depth < 0 means unlimited. A node is split only when it holds at least
    ``min_split`` rows, is below ``max_depth`` and has positive SSE. When
    ``mtry < p`` a fresh random subset of ``mtry`` features is drawn at every
    node. Candidates are scanned in (feature index, threshold) order and only
    a strictly larger gain replaces the incumbent.

    Returns (feature, threshold, left, right, value, count, sse, depth)
    trimmed to the number of nodes.
    """
    n = sample.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    sse = np.zeros(cap)
    depth = np.zeros(cap, dtype=np.int64)

    idx = sample.copy()
    buf = np.empty(n, dtype=np.int64)
    vals = np.empty(n)
    ys = np.empty(n)
    feats = np.arange(p)
    cand = np.empty(p, dtype=np.int64)
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(rng_seed)

    # stack of (node id, start, end)
    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        m = end - start

        total = 0.0
        for i in range(start, end):
            total += y[idx[i]]
        mean = total / m
        s = 0.0
        for i in range(start, end):
            d = y[idx[i]] - mean
            s += d * d
        value[node] = mean
        count[node] = m
        sse[node] = s

        if m < min_split or m < 2 or s <= 0.0:
            continue
        if max_depth >= 0 and depth[node] >= max_depth:
            continue

        if mtry >= p:
            n_cand = p
            for j in range(p):
                cand[j] = j
        else:
            for j in range(p):
                feats[j] = j
            for j in range(mtry):
                r = j + _randbelow(state, p - j)
                t = feats[j]
                feats[j] = feats[r]
                feats[r] = t
            n_cand = mtry
            for j in range(mtry):
                cand[j] = feats[j]
            cand[:mtry] = np.sort(cand[:mtry])

        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        for c in range(n_cand):
            f = cand[c]
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:m], kind="mergesort")
            for i in range(m):
                ys[i] = y[idx[start + order[i]]] - mean
            tot_c = 0.0
            for i in range(m):
                tot_c += ys[i]
            sl = 0.0
            for k in range(m - 1):
                sl += ys[k]
                nl = k + 1
                nr = m - nl
                if nl < min_leaf:
                    continue
                if nr < min_leaf:
                    break
                v0 = vals[order[k]]
                v1 = vals[order[k + 1]]
                if not v0 < v1:
                    continue
                sr = tot_c - sl
                gain = sl * sl / nl + sr * sr / nr - tot_c * tot_c / m
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    thr = 0.5 * (v0 + v1)
                    if not (thr >= v0 and thr < v1):
                        thr = v0
                    best_thr = thr

        if best_f < 0 or best_gain <= 1e-12 * s:
            continue

        # stable partition: x <= thr to the left
        nl = 0
        for i in range(start, end):
            r = idx[i]
            if X[r, best_f] <= best_thr:
                idx[start + nl] = r
                nl += 1
            else:
                buf[i - start - nl] = r
        for i in range(m - nl):
            idx[start + nl + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        depth[lc] = depth[node] + 1
        depth[rc] = depth[node] + 1
        # push right first so the left subtree is processed first
        st_node[top] = rc
        st_start[top] = start + nl
        st_end[top] = end
        top += 1
        st_node[top] = lc
        st_start[top] = start
        st_end[top] = start + nl
        top += 1

    k = n_nodes
    return (
        feature[:k].copy(),
        threshold[:k].copy(),
        left[:k].copy(),
        right[:k].copy(),
        value[:k].copy(),
        count[:k].copy(),
        sse[:k].copy(),
        depth[:k].copy(),
    )


@njit(cache=True, nogil=True)
def predict_tree(X, feature, threshold, left, right, value, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right, out):
    """Leaf id reached by every row."""
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node


# --- multilayer perceptron -------------------------------------------------
#
# Weights are one flat vector. Layer l owns the block
#   w[offsets[l] : offsets[l] + (sizes[l] + 1) * sizes[l + 1]]
# read row-major as an (n_in + 1) x n_out matrix whose first row is the bias.
# Hidden units are logistic, the output unit is the identity. Everything is
# matrix-at-a-time so the exponentials vectorize.


@njit(cache=True, nogil=True)
def _layer(w, sizes, offsets, l):
    nin = sizes[l]
    nout = sizes[l + 1]
    o = offsets[l]
    bias = w[o : o + nout]
    W = w[o + nout : o + (nin + 1) * nout].reshape((nin, nout))
    return bias, W


@njit(cache=True, nogil=True)
def mlp_forward(w, sizes, offsets, X, out):
    n_layers = sizes.shape[0] - 1
    A = X
    for l in range(n_layers):
        bias, W = _layer(w, sizes, offsets, l)
        Z = A @ W + bias
        if l < n_layers - 1:
            A = 1.0 / (1.0 + np.exp(-Z))
        else:
            A = Z
    out[:] = A[:, 0]


@njit(cache=True, nogil=True)
def mlp_loss_grad(w, sizes, offsets, X, y, grad):
    """Half sum of squared errors; its gradient is written into ``grad``."""
    n_layers = sizes.shape[0] - 1
    acts = [X]
    for l in range(n_layers):
        bias, W = _layer(w, sizes, offsets, l)
        Z = acts[l] @ W + bias
        if l < n_layers - 1:
            acts.append(1.0 / (1.0 + np.exp(-Z)))
        else:
            acts.append(Z)
    err = acts[n_layers][:, 0] - y
    loss = 0.5 * np.dot(err, err)
    D = err.reshape((-1, 1)).copy()
    for l in range(n_layers - 1, -1, -1):
        nin = sizes[l]
        nout = sizes[l + 1]
        o = offsets[l]
        A = acts[l]
        grad[o : o + nout] = D.sum(axis=0)
        grad[o + nout : o + (nin + 1) * nout] = (A.T @ D).ravel()
        if l > 0:
            bias, W = _layer(w, sizes, offsets, l)
            D = (D @ W.T) * A * (1.0 - A)
    return loss


@njit(cache=True, nogil=True)
def rprop_plus(
    w, sizes, offsets, X, y, threshold, max_epochs, eta_plus, eta_minus, delta0, delta_max, delta_min
):
    """RPROP with weight backtracking, full batch; updates ``w`` in place.

    Stops as soon as max |dLoss/dw| < threshold. Returns
    (epochs run, final loss, final max |gradient|, converged).
    """
    nw = w.shape[0]
    grad = np.empty(nw)
    prev = np.zeros(nw)
    step = np.full(nw, delta0)
    dw = np.zeros(nw)
    epoch = 0
    while True:
        loss = mlp_loss_grad(w, sizes, offsets, X, y, grad)
        gmax = np.max(np.abs(grad))
        if gmax < threshold:
            return epoch, loss, gmax, True
        if epoch >= max_epochs:
            return epoch, loss, gmax, False
        for q in range(nw):
            g = grad[q]
            c = prev[q] * g
            if c > 0.0:
                step[q] = min(step[q] * eta_plus, delta_max)
                dw[q] = -np.sign(g) * step[q]
                w[q] += dw[q]
                prev[q] = g
            elif c < 0.0:
                # gradient changed sign: shrink the step and undo the last move
                step[q] = max(step[q] * eta_minus, delta_min)
                w[q] -= dw[q]
                dw[q] = 0.0
                prev[q] = 0.0
            else:
                dw[q] = -np.sign(g) * step[q]
                w[q] += dw[q]
                prev[q] = g
        epoch += 1
