"""Central finite differences for every CNN parameter, vectorized.

A single weight W[f, c, o, d] of bank m only moves the responses of map f,
and moves the response at window p by exactly delta * X[c, p + o, d]. So
the perturbed pooled feature is ``relu(max_p(pre[f, p] + delta * X[c, p+o, d]))``
and the perturbed loss follows from the head. That evaluates the loss at
theta +/- eps for all ~675k parameters without a full forward per
parameter, starting from the naive (loop) pre-activations in ``oracles``.

A parameter is flagged as a kink crossing when the winning window or the
ReLU state of its pooled feature differs between theta - eps, theta and
theta + eps for any sample; there the central difference does not estimate
the (sub)gradient and the comparison is skipped.
"""

from __future__ import annotations

import numpy as np

from oracles import naive_preactivations


def _ce_rows(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Cross-entropy per column: logits (2, ...) and labels broadcastable."""
    z = logits - logits.max(axis=0, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=0))
    picked = np.where(labels == 1, z[1], z[0])
    return lse - picked


def finite_difference(model, batch, eps: float = 1e-3):
    """(fd_grads, kink_masks) in ``model.parameters()`` order."""
    images = [np.asarray(img, dtype=np.float64) for img, _ in batch]
    labels = np.array([int(y) for _, y in batch])
    B = len(batch)
    F = model.n_maps
    pres = [naive_preactivations(model.filters, model.biases, X) for X in images]
    pooled = [np.concatenate([np.maximum(p.max(axis=1), 0.0) for p in pre]) for pre in pres]
    logits = [model.fc_weights @ pl + model.fc_bias for pl in pooled]

    fd, kinks = [], []
    for b, m in enumerate(model.heights):
        g = np.zeros((F, 3, m, model.dim))
        kink = np.zeros(g.shape, dtype=bool)
        gb = np.zeros(F)
        kinkb = np.zeros(F, dtype=bool)
        for i in range(B):
            X = images[i]
            pre = pres[i][b]
            P = pre.shape[1]
            for f in range(F):
                k = b * F + f
                base = pre[f]
                head = model.fc_weights[:, k]
                old = pooled[i][k]
                arg0 = int(np.argmax(base))
                top0 = base[arg0]
                for o in range(m):
                    window = X[:, o:o + P, :].transpose(1, 0, 2)  # (P, 3, dim)
                    losses = []
                    for sign in (1.0, -1.0):
                        moved = base[:, None, None] + sign * eps * window
                        arg = moved.argmax(axis=0)
                        top = np.take_along_axis(moved, arg[None], axis=0)[0]
                        new = np.maximum(top, 0.0)
                        kink[f, :, o, :] |= (arg != arg0) | ((top > 0) != (top0 > 0))
                        lg = logits[i][:, None, None] + head[:, None, None] * (new - old)[None]
                        losses.append(_ce_rows(lg, labels[i]))
                    g[f, :, o, :] += (losses[0] - losses[1]) / (2 * eps * B)
                bias_losses = []
                for sign in (1.0, -1.0):
                    top = top0 + sign * eps
                    kinkb[f] |= (top > 0) != (top0 > 0)
                    lg = logits[i] + head * (max(top, 0.0) - old)
                    bias_losses.append(_ce_rows(lg[:, None], labels[i])[0])
                gb[f] += (bias_losses[0] - bias_losses[1]) / (2 * eps * B)
        fd.extend([g, gb])
        kinks.extend([kink, kinkb])

    gw = np.zeros_like(model.fc_weights)
    gc = np.zeros_like(model.fc_bias)
    for i in range(B):
        for c in range(2):
            for sign in (1.0, -1.0):
                lw = np.repeat(logits[i][:, None], len(pooled[i]), axis=1)
                lw[c] += sign * eps * pooled[i]
                gw[c] += sign * _ce_rows(lw, labels[i]) / (2 * eps * B)
                lc = logits[i].copy()
                lc[c] += sign * eps
                gc[c] += sign * _ce_rows(lc[:, None], labels[i])[0] / (2 * eps * B)
    fd.extend([gw, gc])
    kinks.extend([np.zeros(gw.shape, dtype=bool), np.zeros(gc.shape, dtype=bool)])
    return fd, kinks


def relative_errors(analytic, numeric, floor: float):
    """|a - n| / max(|a|, |n|, floor) elementwise, per parameter tensor."""
    return [np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor) for a, n in zip(analytic, numeric)]
