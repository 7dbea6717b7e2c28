"""Pure numpy implementations of the MLP kernels.

Same contract as the compiled module ``felsim._kernels._core``; used as a
fallback when the extension is unavailable (or forced via FELSIM_KERNELS).
The two backends agree up to floating-point accumulation order.

Parameter vectors are flat float64 arrays in the documented order:
layer-major, weights before biases, weight matrices row-major (out x in).
"""

from __future__ import annotations

import numpy as np

LOSS_CLAMP = 1e-12


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # piecewise form, overflow-safe for large |z|
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _layer_views(dims, params):
    off = 0
    for l in range(len(dims) - 1):
        din, dout = int(dims[l]), int(dims[l + 1])
        w = params[off:off + din * dout].reshape(dout, din)
        off += din * dout
        b = params[off:off + dout]
        off += dout
        yield w, b


def forward_trace(dims, params, x):
    """Run one example through the net; returns all post-activations flat."""
    acts = np.empty(int(np.sum(dims)), dtype=np.float64)
    a = np.asarray(x, dtype=np.float64)
    acts[: a.size] = a
    off = a.size
    n_layers = len(dims) - 1
    for l, (w, b) in enumerate(_layer_views(dims, params)):
        z = w @ a + b
        a = _sigmoid(z) if l == n_layers - 1 else np.maximum(z, 0.0)
        acts[off:off + a.size] = a
        off += a.size
    return acts


def predict_batch(dims, params, X):
    """Forward a batch; returns (predictions, last-hidden activations)."""
    a = np.ascontiguousarray(X, dtype=np.float64)
    n_layers = len(dims) - 1
    last_hidden = a
    preds = None
    for l, (w, b) in enumerate(_layer_views(dims, params)):
        z = a @ w.T + b
        if l == n_layers - 1:
            preds = _sigmoid(z[:, 0])
        else:
            a = np.maximum(z, 0.0)
            last_hidden = a
    return preds, last_hidden.copy()


def batch_grad(dims, params, X, y):
    """Gradient of mean BCE loss over the batch; returns (grad, mean_loss)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    n_layers = len(dims) - 1
    layers = list(_layer_views(dims, params))
    acts = [X]
    a = X
    for l, (w, b) in enumerate(layers):
        z = a @ w.T + b
        a = _sigmoid(z) if l == n_layers - 1 else np.maximum(z, 0.0)
        acts.append(a)
    p = np.clip(acts[-1][:, 0], LOSS_CLAMP, 1.0 - LOSS_CLAMP)
    loss = float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))

    grad = np.zeros_like(params)
    delta = acts[-1] - y[:, None]  # dL/dz at the sigmoid output, per example
    off = params.size
    for l in range(n_layers - 1, -1, -1):
        w, b = layers[l]
        off -= b.size
        grad[off:off + b.size] = delta.sum(axis=0)
        off -= w.size
        grad[off:off + w.size] = (delta.T @ acts[l]).ravel()
        if l > 0:
            delta = (delta @ w) * (acts[l] > 0.0)
    grad /= float(n)
    return grad, loss


def grad_with_input(dims, params, x, y):
    """Single-example gradient plus the loss gradient w.r.t. the input."""
    x = np.asarray(x, dtype=np.float64)
    n_layers = len(dims) - 1
    layers = list(_layer_views(dims, params))
    acts = [x]
    a = x
    for l, (w, b) in enumerate(layers):
        z = w @ a + b
        a = _sigmoid(z) if l == n_layers - 1 else np.maximum(z, 0.0)
        acts.append(a)
    p = min(max(float(a[0]), LOSS_CLAMP), 1.0 - LOSS_CLAMP)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))

    grad = np.zeros_like(params)
    delta = acts[-1] - y
    off = params.size
    dx = None
    for l in range(n_layers - 1, -1, -1):
        w, b = layers[l]
        off -= b.size
        grad[off:off + b.size] = delta
        off -= w.size
        grad[off:off + w.size] = np.outer(delta, acts[l]).ravel()
        back = delta @ w
        if l > 0:
            delta = back * (acts[l] > 0.0)
        else:
            dx = back
    return grad, dx, float(loss)


def train_sgd(dims, params, X, y, orders, batch_size, lr):
    """In-place minibatch SGD over precomputed per-epoch shuffles.

    ``orders`` has shape (epochs, n); each row is a permutation of range(n).
    Returns the mean of per-batch mean losses across all steps.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    total = 0.0
    steps = 0
    for e in range(orders.shape[0]):
        order = orders[e]
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            g, loss = batch_grad(dims, params, X[idx], y[idx])
            params -= lr * g
            total += loss
            steps += 1
    return total / steps if steps else float("nan")
