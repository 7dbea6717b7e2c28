# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled MLP kernels: the simulator's hot inner loops.

Per-example forward passes, hand-derived backprop, and the local SGD loop
executed by every simulated client. Contract identical to the numpy
fallback in felsim._kernels._pure.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log
from libc.string cimport memset

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.float64_t f64

cdef double CLAMP = 1e-12


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline double _bce(double p, double y) noexcept nogil:
    if p < CLAMP:
        p = CLAMP
    elif p > 1.0 - CLAMP:
        p = 1.0 - CLAMP
    return -(y * log(p) + (1.0 - y) * log(1.0 - p))


cdef double _forward(const i64* dims, Py_ssize_t n_layers, const f64* params,
                     const i64* w_offs, const i64* a_offs,
                     const f64* x, f64* acts) noexcept nogil:
    cdef Py_ssize_t l, i, j, din, dout
    cdef const f64* w
    cdef const f64* b
    cdef const f64* ain
    cdef f64* aout
    cdef double z
    for i in range(dims[0]):
        acts[i] = x[i]
    for l in range(n_layers):
        din = dims[l]
        dout = dims[l + 1]
        w = params + w_offs[l]
        b = w + din * dout
        ain = acts + a_offs[l]
        aout = acts + a_offs[l + 1]
        for j in range(dout):
            z = b[j]
            for i in range(din):
                z += w[j * din + i] * ain[i]
            if l == n_layers - 1:
                aout[j] = _sigmoid(z)
            else:
                aout[j] = z if z > 0.0 else 0.0
    return acts[a_offs[n_layers]]


cdef double _backward_acc(const i64* dims, Py_ssize_t n_layers, const f64* params,
                          const i64* w_offs, const i64* a_offs,
                          const f64* x, double y,
                          f64* acts, f64* dcur, f64* dprev, f64* gacc,
                          bint want_dx, f64* dx) noexcept nogil:
    # forward, then accumulate this example's raw gradient into gacc
    cdef double p = _forward(dims, n_layers, params, w_offs, a_offs, x, acts)
    cdef double loss = _bce(p, y)
    cdef Py_ssize_t l, i, j, din, dout
    cdef const f64* w
    cdef const f64* ain
    cdef f64* gw
    cdef f64* gb
    cdef f64* tmp
    cdef double d, s
    dcur[0] = p - y
    for l in range(n_layers - 1, -1, -1):
        din = dims[l]
        dout = dims[l + 1]
        w = params + w_offs[l]
        ain = acts + a_offs[l]
        gw = gacc + w_offs[l]
        gb = gw + din * dout
        for j in range(dout):
            d = dcur[j]
            gb[j] += d
            for i in range(din):
                gw[j * din + i] += d * ain[i]
        if l > 0:
            for i in range(din):
                s = 0.0
                for j in range(dout):
                    s += w[j * din + i] * dcur[j]
                dprev[i] = s if ain[i] > 0.0 else 0.0
            tmp = dcur
            dcur = dprev
            dprev = tmp
        elif want_dx:
            for i in range(din):
                s = 0.0
                for j in range(dout):
                    s += w[j * din + i] * dcur[j]
                dx[i] = s
    return loss


cdef void _offsets(const i64[::1] dims, i64[::1] w_offs, i64[::1] a_offs):
    cdef Py_ssize_t l
    w_offs[0] = 0
    a_offs[0] = 0
    for l in range(dims.shape[0] - 1):
        w_offs[l + 1] = w_offs[l] + dims[l] * dims[l + 1] + dims[l + 1]
        a_offs[l + 1] = a_offs[l] + dims[l]


def forward_trace(i64[::1] dims, f64[::1] params, f64[::1] x):
    """Run one example through the net; returns all post-activations flat."""
    cdef Py_ssize_t n_layers = dims.shape[0] - 1
    w_offs_arr = np.empty(dims.shape[0], dtype=np.int64)
    a_offs_arr = np.empty(dims.shape[0], dtype=np.int64)
    cdef i64[::1] w_offs = w_offs_arr
    cdef i64[::1] a_offs = a_offs_arr
    _offsets(dims, w_offs, a_offs)
    acts_arr = np.empty(int(a_offs[n_layers]) + int(dims[n_layers]), dtype=np.float64)
    cdef f64[::1] acts = acts_arr
    _forward(&dims[0], n_layers, &params[0], &w_offs[0], &a_offs[0], &x[0], &acts[0])
    return acts_arr


def predict_batch(i64[::1] dims, f64[::1] params, f64[:, ::1] X):
    """Forward a batch; returns (predictions, last-hidden activations)."""
    cdef Py_ssize_t n_layers = dims.shape[0] - 1
    cdef Py_ssize_t n = X.shape[0]
    w_offs_arr = np.empty(dims.shape[0], dtype=np.int64)
    a_offs_arr = np.empty(dims.shape[0], dtype=np.int64)
    cdef i64[::1] w_offs = w_offs_arr
    cdef i64[::1] a_offs = a_offs_arr
    _offsets(dims, w_offs, a_offs)
    cdef Py_ssize_t total_a = a_offs[n_layers] + dims[n_layers]
    cdef Py_ssize_t h_off = a_offs[n_layers - 1]
    cdef Py_ssize_t h_dim = dims[n_layers - 1]
    acts_arr = np.empty(total_a, dtype=np.float64)
    preds_arr = np.empty(n, dtype=np.float64)
    hidden_arr = np.empty((n, h_dim), dtype=np.float64)
    cdef f64[::1] acts = acts_arr
    cdef f64[::1] preds = preds_arr
    cdef f64[:, ::1] hidden = hidden_arr
    cdef Py_ssize_t k, i
    with nogil:
        for k in range(n):
            preds[k] = _forward(&dims[0], n_layers, &params[0], &w_offs[0],
                                &a_offs[0], &X[k, 0], &acts[0])
            for i in range(h_dim):
                hidden[k, i] = acts[h_off + i]
    return preds_arr, hidden_arr


def batch_grad(i64[::1] dims, f64[::1] params, f64[:, ::1] X, f64[::1] y):
    """Gradient of mean BCE loss over the batch; returns (grad, mean_loss)."""
    cdef Py_ssize_t n_layers = dims.shape[0] - 1
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t psize = params.shape[0]
    w_offs_arr = np.empty(dims.shape[0], dtype=np.int64)
    a_offs_arr = np.empty(dims.shape[0], dtype=np.int64)
    cdef i64[::1] w_offs = w_offs_arr
    cdef i64[::1] a_offs = a_offs_arr
    _offsets(dims, w_offs, a_offs)
    cdef Py_ssize_t total_a = a_offs[n_layers] + dims[n_layers]
    cdef Py_ssize_t wmax = 0
    cdef Py_ssize_t l
    for l in range(dims.shape[0]):
        if dims[l] > wmax:
            wmax = dims[l]
    acts_arr = np.empty(total_a, dtype=np.float64)
    d1_arr = np.empty(wmax, dtype=np.float64)
    d2_arr = np.empty(wmax, dtype=np.float64)
    grad_arr = np.zeros(psize, dtype=np.float64)
    cdef f64[::1] acts = acts_arr
    cdef f64[::1] d1 = d1_arr
    cdef f64[::1] d2 = d2_arr
    cdef f64[::1] grad = grad_arr
    cdef double loss_sum = 0.0
    cdef Py_ssize_t k, i
    with nogil:
        for k in range(n):
            loss_sum += _backward_acc(&dims[0], n_layers, &params[0], &w_offs[0],
                                      &a_offs[0], &X[k, 0], y[k],
                                      &acts[0], &d1[0], &d2[0], &grad[0],
                                      0, NULL)
        for i in range(psize):
            grad[i] /= <double> n
    return grad_arr, loss_sum / <double> n


def grad_with_input(i64[::1] dims, f64[::1] params, f64[::1] x, double y):
    """Single-example gradient plus the loss gradient w.r.t. the input."""
    cdef Py_ssize_t n_layers = dims.shape[0] - 1
    cdef Py_ssize_t psize = params.shape[0]
    w_offs_arr = np.empty(dims.shape[0], dtype=np.int64)
    a_offs_arr = np.empty(dims.shape[0], dtype=np.int64)
    cdef i64[::1] w_offs = w_offs_arr
    cdef i64[::1] a_offs = a_offs_arr
    _offsets(dims, w_offs, a_offs)
    cdef Py_ssize_t total_a = a_offs[n_layers] + dims[n_layers]
    cdef Py_ssize_t wmax = 0
    cdef Py_ssize_t l
    for l in range(dims.shape[0]):
        if dims[l] > wmax:
            wmax = dims[l]
    acts_arr = np.empty(total_a, dtype=np.float64)
    d1_arr = np.empty(wmax, dtype=np.float64)
    d2_arr = np.empty(wmax, dtype=np.float64)
    grad_arr = np.zeros(psize, dtype=np.float64)
    dx_arr = np.empty(int(dims[0]), dtype=np.float64)
    cdef f64[::1] acts = acts_arr
    cdef f64[::1] d1 = d1_arr
    cdef f64[::1] d2 = d2_arr
    cdef f64[::1] grad = grad_arr
    cdef f64[::1] dx = dx_arr
    cdef double loss
    loss = _backward_acc(&dims[0], n_layers, &params[0], &w_offs[0], &a_offs[0],
                         &x[0], y, &acts[0], &d1[0], &d2[0], &grad[0],
                         1, &dx[0])
    return grad_arr, dx_arr, loss


def train_sgd(i64[::1] dims, f64[::1] params, f64[:, ::1] X, f64[::1] y,
              i64[:, ::1] orders, Py_ssize_t batch_size, double lr):
    """In-place minibatch SGD over precomputed per-epoch shuffles.

    ``orders`` has shape (epochs, n); each row is a permutation of range(n).
    Returns the mean of per-batch mean losses across all steps.
    """
    cdef Py_ssize_t n_layers = dims.shape[0] - 1
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t psize = params.shape[0]
    cdef Py_ssize_t epochs = orders.shape[0]
    if epochs == 0 or n == 0:
        return float("nan")
    w_offs_arr = np.empty(dims.shape[0], dtype=np.int64)
    a_offs_arr = np.empty(dims.shape[0], dtype=np.int64)
    cdef i64[::1] w_offs = w_offs_arr
    cdef i64[::1] a_offs = a_offs_arr
    _offsets(dims, w_offs, a_offs)
    cdef Py_ssize_t total_a = a_offs[n_layers] + dims[n_layers]
    cdef Py_ssize_t wmax = 0
    cdef Py_ssize_t l
    for l in range(dims.shape[0]):
        if dims[l] > wmax:
            wmax = dims[l]
    acts_arr = np.empty(total_a, dtype=np.float64)
    d1_arr = np.empty(wmax, dtype=np.float64)
    d2_arr = np.empty(wmax, dtype=np.float64)
    gacc_arr = np.zeros(psize, dtype=np.float64)
    cdef f64[::1] acts = acts_arr
    cdef f64[::1] d1 = d1_arr
    cdef f64[::1] d2 = d2_arr
    cdef f64[::1] gacc = gacc_arr
    cdef double total = 0.0, batch_loss, g
    cdef Py_ssize_t steps = 0, e, s, t, bs, k, i
    with nogil:
        for e in range(epochs):
            s = 0
            while s < n:
                bs = batch_size if s + batch_size <= n else n - s
                memset(&gacc[0], 0, psize * sizeof(double))
                batch_loss = 0.0
                for t in range(bs):
                    k = orders[e, s + t]
                    batch_loss += _backward_acc(&dims[0], n_layers, &params[0],
                                                &w_offs[0], &a_offs[0],
                                                &X[k, 0], y[k],
                                                &acts[0], &d1[0], &d2[0], &gacc[0],
                                                0, NULL)
                for i in range(psize):
                    g = gacc[i] / <double> bs
                    params[i] -= lr * g
                total += batch_loss / <double> bs
                steps += 1
                s += bs
    return total / <double> steps
