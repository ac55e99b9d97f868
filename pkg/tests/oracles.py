"""Independent reference implementations used by the tests."""

import numpy as np


def naive_cnn_forward(model, x):
    """Direct-summation convolution, pooling and dense layer for one input row."""
    filters, k = model.conv_w.shape
    width = len(x) - k + 1
    regions = model.dense_w.shape[0] // filters
    block = width // regions
    pooled = []
    for r in range(regions):
        for f in range(filters):
            best = 0.0
            for t in range(r * block, (r + 1) * block):
                acc = model.conv_b[f]
                for j in range(k):
                    acc += model.conv_w[f, j] * x[t + j]
                best = max(best, acc)
            pooled.append(best)
    logits = []
    for c in range(model.dense_w.shape[1]):
        acc = model.dense_b[c]
        for i, h in enumerate(pooled):
            acc += h * model.dense_w[i, c]
        logits.append(acc)
    m = max(logits)
    e = [np.exp(v - m) for v in logits]
    return np.array(e) / sum(e)


def finite_difference_check(model, x, y, h=1e-5):
    """Worst per-parameter error ratio against the 1e-4 relative / 1e-7 absolute bound."""
    _, grads = model.gradients(x, y)
    worst = 0.0
    for p, g in zip(model.params(), grads):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = model.gradients(x, y)[0]
            p[idx] = orig - h
            down = model.gradients(x, y)[0]
            p[idx] = orig
            fd = (up - down) / (2 * h)
            err = abs(fd - g[idx])
            rel = err / max(abs(fd), abs(g[idx]), 1e-300)
            worst = max(worst, min(rel / 1e-4, err / 1e-7))
    return worst


def brute_mode(labels, confidences=None):
    """Mode with ties to the higher mean confidence, then the lower class index."""
    confidences = confidences or [1.0] * len(labels)
    best = None
    for lab in set(labels):
        n = sum(1 for v in labels if v is lab)
        mean = sum(c for v, c in zip(labels, confidences) if v is lab) / n
        key = (n, mean, -lab.index)
        if best is None or key > best[0]:
            best = (key, lab)
    return best[1]


def separable_set(n_per_class=30, seed=0):
    """Six pulse families with fixed shapes, small jitter: separable by construction."""
    rng = np.random.default_rng(seed)
    u = (np.arange(50) + 0.5) / 50
    shapes = [
        np.sin(np.pi * u),
        -np.sin(np.pi * u),
        np.sin(0.5 * np.pi * np.minimum(1, np.minimum(u, 1 - u) / 0.3)) * 0.6,
        -np.sin(0.5 * np.pi * np.minimum(1, np.minimum(u, 1 - u) / 0.3)) * 0.6,
        np.sin(2 * np.pi * u) * 0.4,
        -np.sin(2 * np.pi * u) * 0.4,
    ]
    x, y = [], []
    for c, s in enumerate(shapes):
        for _ in range(n_per_class):
            x.append(s * rng.uniform(0.8, 1.2) + rng.normal(0, 0.01, 50))
            y.append(c)
    return np.array(x), np.array(y)
