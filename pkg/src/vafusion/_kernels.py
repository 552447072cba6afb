"""Compiled inner loops for paragraph-vector SGD.

The update order is fully specified (documents in corpus order, target
positions left to right, gradients computed against the pre-update
parameters of each position) so training is bit-reproducible for a fixed
seed. All randomness (negative-sample draws) is generated by the caller.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MODE_DBOW = 0
MODE_DM_CONCAT = 1
MODE_DM_AVERAGE = 2


@njit(cache=True)
def pairwise_sqdist(X):
    """Squared Euclidean distances via the explicit difference formula.

    Sequential accumulation over the feature axis keeps exact coordinate
    ties exactly tied, and mirroring makes the matrix exactly symmetric.
    """
    n, d = X.shape
    out = np.empty((n, n))
    for i in range(n):
        out[i, i] = 0.0
        for j in range(i + 1, n):
            s = 0.0
            for k in range(d):
                diff = X[i, k] - X[j, k]
                s += diff * diff
            out[i, j] = s
            out[j, i] = s
    return out


@njit(cache=True)
def _build_hidden(tokens, start, t, tag, W, P, window, mode, h):
    """Fill h with the input-layer activation for target position t.

    Returns the number of context words actually present; absent slots at
    the document start contribute zeros (truncated window, no padding).
    """
    dim = W.shape[1]
    n_ctx = min(window, t)
    if mode == MODE_DBOW:
        for j in range(dim):
            h[j] = P[tag, j]
        return n_ctx
    if mode == MODE_DM_CONCAT:
        for j in range(dim):
            h[j] = P[tag, j]
        for slot in range(1, window + 1):
            base = slot * dim
            src = t - slot
            if src >= 0:
                w = tokens[start + src]
                for j in range(dim):
                    h[base + j] = W[w, j]
            else:
                for j in range(dim):
                    h[base + j] = 0.0
        return n_ctx
    # MODE_DM_AVERAGE: mean of paragraph vector and present context words
    scale = 1.0 / (1.0 + n_ctx)
    for j in range(dim):
        h[j] = P[tag, j]
    for slot in range(1, n_ctx + 1):
        w = tokens[start + t - slot]
        for j in range(dim):
            h[j] += W[w, j]
    for j in range(dim):
        h[j] *= scale
    return n_ctx


@njit(cache=True)
def _apply_input_grad(tokens, start, t, tag, W, P, window, mode, n_ctx, dh, lr, update_words):
    """Distribute -lr * dh onto the paragraph vector and context words."""
    dim = W.shape[1]
    if mode == MODE_DBOW:
        for j in range(dim):
            P[tag, j] -= lr * dh[j]
        return
    if mode == MODE_DM_CONCAT:
        for j in range(dim):
            P[tag, j] -= lr * dh[j]
        if update_words:
            for slot in range(1, n_ctx + 1):
                base = slot * dim
                w = tokens[start + t - slot]
                for j in range(dim):
                    W[w, j] -= lr * dh[base + j]
        return
    scale = 1.0 / (1.0 + n_ctx)
    for j in range(dim):
        P[tag, j] -= lr * scale * dh[j]
    if update_words:
        for slot in range(1, n_ctx + 1):
            w = tokens[start + t - slot]
            for j in range(dim):
                W[w, j] -= lr * scale * dh[j]


@njit(cache=True)
def sgd_epoch(
    tokens,
    offsets,
    tags,
    W,
    P,
    U,
    b,
    window,
    mode,
    lr,
    negatives,
    use_negative,
    update_words,
    update_output,
):
    """One SGD pass over every target position; returns the summed loss.

    With use_negative the loss is the negative-sampling objective over the
    pre-drawn rows in `negatives` (one row per position); otherwise it is
    the exact softmax negative log likelihood.
    """
    n_docs = offsets.shape[0] - 1
    V = U.shape[0]
    H = U.shape[1]
    h = np.empty(H, dtype=np.float64)
    dh = np.empty(H, dtype=np.float64)
    scores = np.empty(V, dtype=np.float64)
    k = negatives.shape[1]
    total_loss = 0.0
    pos_id = 0

    for d in range(n_docs):
        start = offsets[d]
        T = offsets[d + 1] - start
        tag = tags[d]
        for t in range(T):
            target = tokens[start + t]
            n_ctx = _build_hidden(tokens, start, t, tag, W, P, window, mode, h)
            for j in range(H):
                dh[j] = 0.0

            if use_negative:
                for r in range(k + 1):
                    if r == 0:
                        row = target
                        label = 1.0
                    else:
                        row = negatives[pos_id, r - 1]
                        if row == target:
                            continue
                        label = 0.0
                    s = b[row]
                    for j in range(H):
                        s += U[row, j] * h[j]
                    if s > 35.0:
                        p = 1.0
                    elif s < -35.0:
                        p = 0.0
                    else:
                        p = 1.0 / (1.0 + np.exp(-s))
                    coef = p - label
                    if label == 1.0:
                        total_loss -= np.log(max(p, 1e-12))
                    else:
                        total_loss -= np.log(max(1.0 - p, 1e-12))
                    for j in range(H):
                        dh[j] += coef * U[row, j]
                    if update_output:
                        for j in range(H):
                            U[row, j] -= lr * coef * h[j]
                        b[row] -= lr * coef
            else:
                m = -1.0e308
                for v in range(V):
                    s = b[v]
                    for j in range(H):
                        s += U[v, j] * h[j]
                    scores[v] = s
                    if s > m:
                        m = s
                z = 0.0
                for v in range(V):
                    scores[v] = np.exp(scores[v] - m)
                    z += scores[v]
                total_loss -= np.log(max(scores[target] / z, 1e-300))
                for v in range(V):
                    coef = scores[v] / z
                    if v == target:
                        coef -= 1.0
                    for j in range(H):
                        dh[j] += coef * U[v, j]
                    if update_output:
                        for j in range(H):
                            U[v, j] -= lr * coef * h[j]
                        b[v] -= lr * coef

            _apply_input_grad(tokens, start, t, tag, W, P, window, mode, n_ctx, dh, lr, update_words)
            pos_id += 1

    return total_loss
