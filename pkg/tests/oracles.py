"""Independent reference implementations used as test oracles."""

import numpy as np


def dft_power(frame):
    """|X[k]|^2 by the direct O(N^2) sum, k = 0..N/2."""
    n = len(frame)
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    X = (frame[None, :] * np.exp(-2j * np.pi * k * t / n)).sum(axis=1)
    return np.abs(X) ** 2


def conv_same_loops(x, w, b):
    B, C, L = x.shape
    O, _, K = w.shape
    pad = (K - 1) // 2
    y = np.zeros((B, O, L))
    for n in range(B):
        for o in range(O):
            for t in range(L):
                acc = b[o]
                for c in range(C):
                    for k in range(K):
                        s = t + k - pad
                        if 0 <= s < L:
                            acc += w[o, c, k] * x[n, c, s]
                y[n, o, t] = acc
    return y


def maxpool_loops(x, window):
    B, C, L = x.shape
    pad = (window - 1) // 2
    y = np.empty_like(x)
    for n in range(B):
        for c in range(C):
            for t in range(L):
                y[n, c, t] = max(x[n, c, s] for s in range(t - pad, t + pad + 1) if 0 <= s < L)
    return y


def _sig(z):
    return 1.0 / (1.0 + np.exp(-z))


def channel_attention_loops(x, w0, w1):
    B, C, L = x.shape
    M = np.zeros((B, C))
    for n in range(B):
        avg = np.array([sum(x[n, c]) / L for c in range(C)])
        mx = np.array([max(x[n, c]) for c in range(C)])
        ha = np.maximum(w0 @ avg, 0)
        hm = np.maximum(w0 @ mx, 0)
        M[n] = _sig(w1 @ ha + w1 @ hm)
    return M


def spatial_attention_loops(x, w, b):
    B, C, L = x.shape
    pooled = np.stack([x.mean(axis=1), x.max(axis=1)], axis=1)
    return _sig(conv_same_loops(pooled, w, b))[:, 0, :]


def rel_err(a, n):
    """Elementwise |a - n| / max(|a|, |n|, 1e-8), worst case."""
    a, n = np.asarray(a, float), np.asarray(n, float)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)))


def numeric_grad(f, arr, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arr`` (modified in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def check_layer(layer, x, training=True, seed=987654):
    """Worst relative error over input and parameter gradients of ``sum(r * layer(x))``.

    ``r`` must not be drawn like ``x``: with ``r == x`` batch norm's input gradient vanishes.
    """
    r = np.random.default_rng(seed).standard_normal(layer.forward(x.copy(), training).shape)

    def f():
        return float((layer.forward(x, training) * r).sum())

    layer.forward(x, training)
    for t in layer.params().values():
        t.zero_grad()
    dx = layer.backward(r)
    errs = {"input": rel_err(dx, numeric_grad(f, x))}
    for name, t in layer.params().items():
        analytic = t.grad.copy()
        errs[name] = rel_err(analytic, numeric_grad(f, t.data))
    return errs
