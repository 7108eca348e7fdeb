"""Minimal reverse-mode autodiff over float64 numpy arrays.

A :class:`Tensor` records its parents and a closure that scatters the incoming
gradient; ``backward`` walks the tape in reverse topological order. Sequential
hot paths (LSTM recurrence, dilated causal convolution) are fused single-node
ops backed by numba kernels with vectorized numpy fallbacks.
"""

import numpy as np

from .._accel import NUMBA_ENABLED, jit_kernel


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward_fn")

    def __init__(self, data, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return Tensor(a.data + b.data, (a, b), bwd)


def neg(a) -> Tensor:
    a = _wrap(a)

    def bwd(g):
        _accum(a, -g)

    return Tensor(-a.data, (a,), bwd)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(a.data * b.data, (a, b), bwd)


def matmul(a, b) -> Tensor:
    """a: (..., m, k) @ b: (k, n); covers dense layers and time-distributed maps."""
    a, b = _wrap(a), _wrap(b)
    if b.data.ndim != 2:
        raise ValueError("matmul right operand must be 2-D")

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.reshape(-1, a.data.shape[-1]).T @ g.reshape(-1, g.shape[-1]))

    return Tensor(a.data @ b.data, (a, b), bwd)


def relu(a) -> Tensor:
    a = _wrap(a)
    pos = a.data > 0

    def bwd(g):
        _accum(a, g * pos)

    return Tensor(np.where(pos, a.data, 0.0), (a,), bwd)


def tanh(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.data)

    def bwd(g):
        _accum(a, g * (1.0 - out * out))

    return Tensor(out, (a,), bwd)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        _accum(a, g * out * (1.0 - out))

    return Tensor(out, (a,), bwd)


def log(a) -> Tensor:
    a = _wrap(a)

    def bwd(g):
        _accum(a, g / a.data)

    return Tensor(np.log(a.data), (a,), bwd)


def pow_const(a, exponent: float) -> Tensor:
    """a ** p for constant p; gradient at a == 0 is defined as 0 (covers the
    (1 - p)^gamma factor of the focal loss at confident predictions)."""
    a = _wrap(a)

    def bwd(g):
        base = np.where(a.data == 0.0, 0.0, exponent * np.power(np.where(a.data == 0.0, 1.0, a.data), exponent - 1.0))
        _accum(a, g * base)

    return Tensor(np.power(a.data, exponent), (a,), bwd)


def clip_low(a, lo: float) -> Tensor:
    """max(a, lo); gradient passes only where a > lo."""
    a = _wrap(a)
    keep = a.data > lo

    def bwd(g):
        _accum(a, g * keep)

    return Tensor(np.where(keep, a.data, lo), (a,), bwd)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gg, a.data.shape).copy())

    return Tensor(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    count = a.data.size if axis is None else a.data.shape[axis]

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g / count, a.data.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gg / count, a.data.shape).copy())

    return Tensor(a.data.mean(axis=axis, keepdims=keepdims), (a,), bwd)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accum(t, piece)

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd)


def softmax(a, axis=-1) -> Tensor:
    a = _wrap(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        _accum(a, out * (g - dot))

    return Tensor(out, (a,), bwd)


def dropout(a, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout with a mask drawn from ``rng``; identity when rate == 0."""
    a = _wrap(a)
    if rate <= 0.0:
        return a
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)

    def bwd(g):
        _accum(a, g * mask)

    return Tensor(a.data * mask, (a,), bwd)


def last_step(a) -> Tensor:
    """Select the final time step of a (B, T, C) sequence."""
    a = _wrap(a)

    def bwd(g):
        full = np.zeros_like(a.data)
        full[:, -1, :] = g
        _accum(a, full)

    return Tensor(a.data[:, -1, :].copy(), (a,), bwd)


# ---------------------------------------------------------------------------
# Fused causal dilated conv1d
# ---------------------------------------------------------------------------


def _conv1d_fwd_numpy(x, w, b, dilation):
    bsz, t, _ = x.shape
    k, _, co = w.shape
    y = np.broadcast_to(b, (bsz, t, co)).copy()
    for tap in range(k):
        s = dilation * tap
        if s < t:
            y[:, s:, :] += x[:, : t - s, :] @ w[tap]
    return y


def _conv1d_bwd_numpy(g, x, w, dilation):
    bsz, t, ci = x.shape
    k, _, co = w.shape
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for tap in range(k):
        s = dilation * tap
        if s < t:
            dx[:, : t - s, :] += g[:, s:, :] @ w[tap].T
            dw[tap] = np.einsum("btc,bto->co", x[:, : t - s, :], g[:, s:, :])
    db = g.sum(axis=(0, 1))
    return dx, dw, db


def _conv1d_fwd_loop(x, w, b, dilation):
    bsz, t, ci = x.shape
    k, _, co = w.shape
    y = np.empty((bsz, t, co))
    for n in range(bsz):
        for i in range(t):
            for o in range(co):
                acc = b[o]
                for tap in range(k):
                    j = i - dilation * tap
                    if j >= 0:
                        for c in range(ci):
                            acc += x[n, j, c] * w[tap, c, o]
                y[n, i, o] = acc
    return y


def _conv1d_bwd_loop(g, x, w, dilation):
    bsz, t, ci = x.shape
    k, _, co = w.shape
    dx = np.zeros((bsz, t, ci))
    dw = np.zeros((k, ci, co))
    db = np.zeros(co)
    for n in range(bsz):
        for i in range(t):
            for o in range(co):
                go = g[n, i, o]
                db[o] += go
                for tap in range(k):
                    j = i - dilation * tap
                    if j >= 0:
                        for c in range(ci):
                            dx[n, j, c] += go * w[tap, c, o]
                            dw[tap, c, o] += go * x[n, j, c]
    return dx, dw, db


_conv1d_fwd_kernel = jit_kernel(_conv1d_fwd_loop)
_conv1d_bwd_kernel = jit_kernel(_conv1d_bwd_loop)


def conv1d_causal(x, w, b, dilation: int = 1) -> Tensor:
    """Causal dilated convolution: y_t = b + sum_k x_{t - d k} @ w[k]."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(w.data)
    if NUMBA_ENABLED:
        out = _conv1d_fwd_kernel(xd, wd, b.data, dilation)
    else:
        out = _conv1d_fwd_numpy(xd, wd, b.data, dilation)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if NUMBA_ENABLED:
            dx, dw, db = _conv1d_bwd_kernel(g, xd, wd, dilation)
        else:
            dx, dw, db = _conv1d_bwd_numpy(g, xd, wd, dilation)
        _accum(x, dx)
        _accum(w, dw)
        _accum(b, db)

    return Tensor(out, (x, w, b), bwd)


# ---------------------------------------------------------------------------
# Fused LSTM (full sequence, BPTT in one node)
# ---------------------------------------------------------------------------


def _lstm_fwd_py(x, wx, wh, b):
    bsz, t, _ = x.shape
    hdim = wh.shape[0]
    hs = np.zeros((bsz, t, hdim))
    gi = np.zeros((bsz, t, hdim))
    gf = np.zeros((bsz, t, hdim))
    gg = np.zeros((bsz, t, hdim))
    go = np.zeros((bsz, t, hdim))
    cs = np.zeros((bsz, t, hdim))
    h = np.zeros((bsz, hdim))
    c = np.zeros((bsz, hdim))
    for step in range(t):
        z = x[:, step, :] @ wx + h @ wh + b
        i = 1.0 / (1.0 + np.exp(-z[:, :hdim]))
        f = 1.0 / (1.0 + np.exp(-z[:, hdim : 2 * hdim]))
        g = np.tanh(z[:, 2 * hdim : 3 * hdim])
        o = 1.0 / (1.0 + np.exp(-z[:, 3 * hdim :]))
        c = f * c + i * g
        h = o * np.tanh(c)
        gi[:, step, :] = i
        gf[:, step, :] = f
        gg[:, step, :] = g
        go[:, step, :] = o
        cs[:, step, :] = c
        hs[:, step, :] = h
    return hs, gi, gf, gg, go, cs


def _lstm_bwd_py(grad_hs, x, wx, wh, gi, gf, gg, go, cs):
    bsz, t, _ = x.shape
    hdim = wh.shape[0]
    dx = np.zeros_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * hdim)
    dh_carry = np.zeros((bsz, hdim))
    dc_carry = np.zeros((bsz, hdim))
    dz = np.zeros((bsz, 4 * hdim))
    for step in range(t - 1, -1, -1):
        dh = grad_hs[:, step, :] + dh_carry
        i = gi[:, step, :]
        f = gf[:, step, :]
        g = gg[:, step, :]
        o = go[:, step, :]
        tc = np.tanh(cs[:, step, :])
        dc = dh * o * (1.0 - tc * tc) + dc_carry
        c_prev = cs[:, step - 1, :] if step > 0 else np.zeros((bsz, hdim))
        dz[:, :hdim] = dc * g * i * (1.0 - i)
        dz[:, hdim : 2 * hdim] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * hdim : 3 * hdim] = dc * i * (1.0 - g * g)
        dz[:, 3 * hdim :] = dh * tc * o * (1.0 - o)
        dwx += x[:, step, :].T @ dz
        if step > 0:
            dwh += _lstm_hprev(step, cs, go, bsz, hdim).T @ dz
        db += dz.sum(axis=0)
        dx[:, step, :] = dz @ wx.T
        dh_carry = dz @ wh.T
        dc_carry = dc * f
    return dx, dwx, dwh, db


def _lstm_hprev(step, cs, go, bsz, hdim):
    return go[:, step - 1, :] * np.tanh(cs[:, step - 1, :])


def _lstm_fwd_loop(x, wx, wh, b):
    bsz, t, cin = x.shape
    hdim = wh.shape[0]
    hs = np.zeros((bsz, t, hdim))
    gi = np.zeros((bsz, t, hdim))
    gf = np.zeros((bsz, t, hdim))
    gg = np.zeros((bsz, t, hdim))
    go = np.zeros((bsz, t, hdim))
    cs = np.zeros((bsz, t, hdim))
    h = np.zeros((bsz, hdim))
    c = np.zeros((bsz, hdim))
    for step in range(t):
        z = np.dot(x[:, step, :].copy(), wx) + np.dot(h, wh)
        for n in range(bsz):
            for j in range(4 * hdim):
                z[n, j] += b[j]
        for n in range(bsz):
            for j in range(hdim):
                i = 1.0 / (1.0 + np.exp(-z[n, j]))
                f = 1.0 / (1.0 + np.exp(-z[n, hdim + j]))
                g = np.tanh(z[n, 2 * hdim + j])
                o = 1.0 / (1.0 + np.exp(-z[n, 3 * hdim + j]))
                cval = f * c[n, j] + i * g
                hval = o * np.tanh(cval)
                c[n, j] = cval
                h[n, j] = hval
                gi[n, step, j] = i
                gf[n, step, j] = f
                gg[n, step, j] = g
                go[n, step, j] = o
                cs[n, step, j] = cval
                hs[n, step, j] = hval
    return hs, gi, gf, gg, go, cs


def _lstm_bwd_loop(grad_hs, x, wx, wh, gi, gf, gg, go, cs):
    bsz, t, cin = x.shape
    hdim = wh.shape[0]
    dx = np.zeros((bsz, t, cin))
    dwx = np.zeros((cin, 4 * hdim))
    dwh = np.zeros((hdim, 4 * hdim))
    db = np.zeros(4 * hdim)
    dh_carry = np.zeros((bsz, hdim))
    dc_carry = np.zeros((bsz, hdim))
    dz = np.zeros((bsz, 4 * hdim))
    hprev = np.zeros((bsz, hdim))
    for step in range(t - 1, -1, -1):
        for n in range(bsz):
            for j in range(hdim):
                i = gi[n, step, j]
                f = gf[n, step, j]
                g = gg[n, step, j]
                o = go[n, step, j]
                tc = np.tanh(cs[n, step, j])
                dh = grad_hs[n, step, j] + dh_carry[n, j]
                dc = dh * o * (1.0 - tc * tc) + dc_carry[n, j]
                c_prev = cs[n, step - 1, j] if step > 0 else 0.0
                dz[n, j] = dc * g * i * (1.0 - i)
                dz[n, hdim + j] = dc * c_prev * f * (1.0 - f)
                dz[n, 2 * hdim + j] = dc * i * (1.0 - g * g)
                dz[n, 3 * hdim + j] = dh * tc * o * (1.0 - o)
                dc_carry[n, j] = dc * f
        dwx += np.dot(x[:, step, :].copy().T, dz)
        if step > 0:
            for n in range(bsz):
                for j in range(hdim):
                    hprev[n, j] = go[n, step - 1, j] * np.tanh(cs[n, step - 1, j])
            dwh += np.dot(hprev.T.copy(), dz)
        for n in range(bsz):
            for j in range(4 * hdim):
                db[j] += dz[n, j]
        dx[:, step, :] = np.dot(dz, wx.T.copy())
        dh_carry = np.dot(dz, wh.T.copy())
    return dx, dwx, dwh, db


_lstm_fwd_kernel = jit_kernel(_lstm_fwd_loop)
_lstm_bwd_kernel = jit_kernel(_lstm_bwd_loop)


def lstm(x, wx, wh, b) -> Tensor:
    """Full LSTM pass over (B, T, C) input; returns the (B, T, H) hidden
    sequence. Gates are cached inside the node for one-shot BPTT."""
    x, wx, wh, b = _wrap(x), _wrap(wx), _wrap(wh), _wrap(b)
    xd = np.ascontiguousarray(x.data)
    wxd = np.ascontiguousarray(wx.data)
    whd = np.ascontiguousarray(wh.data)
    if NUMBA_ENABLED:
        hs, gi, gf, gg, go, cs = _lstm_fwd_kernel(xd, wxd, whd, b.data)
    else:
        hs, gi, gf, gg, go, cs = _lstm_fwd_py(xd, wxd, whd, b.data)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if NUMBA_ENABLED:
            dx, dwx, dwh, db = _lstm_bwd_kernel(g, xd, wxd, whd, gi, gf, gg, go, cs)
        else:
            dx, dwx, dwh, db = _lstm_bwd_py(g, xd, wxd, whd, gi, gf, gg, go, cs)
        _accum(x, dx)
        _accum(wx, dwx)
        _accum(wh, dwh)
        _accum(b, db)

    return Tensor(hs, (x, wx, wh, b), bwd)
