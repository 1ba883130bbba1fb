"""Independent reference implementations used to check the package.

Nothing here imports package internals beyond plain data access, so a bug in
the package cannot hide behind the same bug in its oracle.
"""

import math

import numpy as np


# -- geometry -------------------------------------------------------------------

def winding_number(poly, p):
    """Sunday's winding number of closed polygon ``poly`` around point ``p``."""
    wn = 0
    n = len(poly)
    for k in range(n):
        (x0, y0), (x1, y1) = poly[k], poly[(k + 1) % n]
        cross = (x1 - x0) * (p[1] - y0) - (p[0] - x0) * (y1 - y0)
        if y0 <= p[1]:
            if y1 > p[1] and cross > 0:
                wn += 1
        elif y1 <= p[1] and cross < 0:
            wn -= 1
    return wn


def inside_half_planes(poly, p, tol=0.0):
    """True when ``p`` is on the left of (or on) every edge of CCW ``poly``."""
    n = len(poly)
    for k in range(n):
        (x0, y0), (x1, y1) = poly[k], poly[(k + 1) % n]
        if (x1 - x0) * (p[1] - y0) - (y1 - y0) * (p[0] - x0) < -tol:
            return False
    return True


def edge_distance(poly, p):
    """Distance from ``p`` to the polygon boundary."""
    best = math.inf
    n = len(poly)
    for k in range(n):
        a, b = np.asarray(poly[k]), np.asarray(poly[(k + 1) % n])
        ab = b - a
        s = np.clip(np.dot(np.asarray(p) - a, ab) / np.dot(ab, ab), 0.0, 1.0)
        best = min(best, float(np.hypot(*(a + s * ab - p))))
    return best


# -- metrics ----------------------------------------------------------------------

def f1_from_lists(truth, pred, n_classes=3):
    """Per-class F1 straight from label lists, 0/0 treated as 0."""
    out = []
    for c in range(n_classes):
        tp = sum(1 for t, p in zip(truth, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(truth, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(truth, pred) if t == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        out.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return out


# -- fused network, vectorised over parameter copies ----------------------------------

def _sig(z):
    return 1.0 / (1.0 + np.exp(-z))


def fused_loss_many(P, rec, label, weight, draws, widths):
    """Weighted CE of one record under a stack of parameter sets.

    ``P`` maps parameter names to arrays with a leading copy axis. ``draws``
    holds the pinned noise and dropout mask. Written from the model
    description, not from the package code.
    """
    H = P["lstm_Wh"].shape[1]
    K = P["lstm_Wh"].shape[0]
    h = np.zeros((K, H))
    c = np.zeros((K, H))
    for x in rec["sequence"]:
        z = np.einsum("c,kcg->kg", x, P["lstm_Wx"]) + np.einsum("kh,khg->kg", h, P["lstm_Wh"]) + P["lstm_b"]
        i, f, o = _sig(z[:, :H]), _sig(z[:, H:2 * H]), _sig(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
    parts = [h]
    inputs = {
        "personality": np.clip(rec["personality"] + draws.get("personality_noise", 0.0), 0, 1),
        "stimulus": rec["stimulus"],
        "environment": rec["environment"] + draws.get("environment_noise", 0.0),
    }
    for name in widths:
        a = np.einsum("i,kiw->kw", inputs[name], P[f"{name}_W"]) + P[f"{name}_b"]
        parts.append(np.maximum(a, 0.0))
    u = np.concatenate(parts, axis=1)
    u = np.maximum(np.einsum("ki,kiw->kw", u, P["fuse_W"]) + P["fuse_b"], 0.0)
    u = u * draws.get("dropout_mask", 1.0)
    logits = np.einsum("ki,kiw->kw", u, P["out_W"]) + P["out_b"]
    logits = logits - logits.max(axis=1, keepdims=True)
    logp = logits[:, label] - np.log(np.exp(logits).sum(axis=1))
    return -weight * logp


def numeric_gradient(params, rec, label, weight, draws, widths, eps=1e-5, chunk=256):
    """Central differences for every parameter entry, evaluated in batched chunks."""
    names = sorted(params)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    for name in names:
        flat_idx = np.arange(params[name].size)
        for start in range(0, len(flat_idx), chunk):
            idx = flat_idx[start:start + chunk]
            m = len(idx)
            stack = {k: np.broadcast_to(v, (2 * m,) + v.shape).copy() for k, v in params.items()}
            target = stack[name].reshape(2 * m, -1)
            target[np.arange(m), idx] += eps
            target[m + np.arange(m), idx] -= eps
            loss = fused_loss_many(stack, rec, label, weight, draws, widths)
            grads[name].reshape(-1)[idx] = (loss[:m] - loss[m:]) / (2 * eps)
    return grads
