"""Minimal dense-tensor library with reverse-mode automatic differentiation.

Backed by float64 numpy arrays. Every operation records itself on an implicit
tape (a monotonically increasing sequence number per node); backward() replays
the tape in exact reverse execution order, accumulating gradients additively.
"""

import itertools

import numpy as np

_seq_counter = itertools.count()

# When grad recording is disabled, ops produce detached tensors. Used by
# evaluation loops to avoid building throwaway graphs.
_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _unbroadcast(g, shape):
    """Sum gradient `g` down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_seq")

    def __init__(self, data, requires_grad=False, _parents=(), _backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        if not _grad_enabled:
            _parents, _backward_fn = (), None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents = tuple(_parents)
        self._backward_fn = _backward_fn
        self._seq = next(_seq_counter)

    # ------------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    def backward(self):
        """Populate .grad for every requires_grad node reachable from self.

        self must be scalar. Visits nodes in exact reverse of forward
        execution order; gradient accumulation is additive.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        nodes = []
        seen = set()
        stack = [self]
        while stack:
            t = stack.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            nodes.append(t)
            stack.extend(t._parents)
        nodes.sort(key=lambda t: t._seq, reverse=True)
        self.grad += 1.0
        for t in nodes:
            if t.requires_grad and t._backward_fn is not None:
                t._backward_fn(t.grad)

    # ------------------------------------------------------------------
    # arithmetic
    def __add__(self, other):
        other = _as_tensor(other)
        out_data = self.data + other.data

        def bwd(g):
            _accum(self, _unbroadcast(g, self.data.shape))
            _accum(other, _unbroadcast(g, other.data.shape))

        return Tensor(out_data, _parents=(self, other), _backward_fn=bwd)

    __radd__ = __add__

    def __neg__(self):
        def bwd(g):
            _accum(self, -g)

        return Tensor(-self.data, _parents=(self,), _backward_fn=bwd)

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return _as_tensor(other) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other)
        out_data = self.data * other.data

        def bwd(g):
            _accum(self, _unbroadcast(g * other.data, self.data.shape))
            _accum(other, _unbroadcast(g * self.data, other.data.shape))

        return Tensor(out_data, _parents=(self, other), _backward_fn=bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        out_data = self.data / other.data

        def bwd(g):
            _accum(self, _unbroadcast(g / other.data, self.data.shape))
            _accum(other, _unbroadcast(-g * self.data / other.data**2, other.data.shape))

        return Tensor(out_data, _parents=(self, other), _backward_fn=bwd)

    def __getitem__(self, idx):
        out_data = self.data[idx]

        def bwd(g):
            if self.requires_grad:
                np.add.at(self.grad, idx, g)

        return Tensor(out_data, _parents=(self,), _backward_fn=bwd)

    # ------------------------------------------------------------------
    def sum(self, axis=None):
        out_data = self.data.sum(axis=axis)

        def bwd(g):
            if axis is None:
                _accum(self, np.broadcast_to(g, self.data.shape))
            else:
                _accum(self, np.broadcast_to(np.expand_dims(g, axis), self.data.shape))

        return Tensor(out_data, _parents=(self,), _backward_fn=bwd)

    def mean(self):
        return self.sum() * (1.0 / self.data.size)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)

        def bwd(g):
            _accum(self, g.reshape(self.data.shape))

        return Tensor(out_data, _parents=(self,), _backward_fn=bwd)

    def transpose(self):
        def bwd(g):
            _accum(self, g.T)

        return Tensor(self.data.T, _parents=(self,), _backward_fn=bwd)

    @property
    def T(self):
        return self.transpose()


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t, g):
    if t.requires_grad:
        t.grad += g


# ----------------------------------------------------------------------
# free-function ops


def matmul(a, b):
    """Real matrix product with the standard GEMM backward rules."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.data.shape} x {b.data.shape}")
    out_data = a.data @ b.data

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return Tensor(out_data, _parents=(a, b), _backward_fn=bwd)


def relu(x):
    x = _as_tensor(x)
    mask = x.data > 0

    def bwd(g):
        _accum(x, g * mask)

    return Tensor(np.maximum(x.data, 0.0), _parents=(x,), _backward_fn=bwd)


def tanh(x):
    x = _as_tensor(x)
    out_data = np.tanh(x.data)

    def bwd(g):
        _accum(x, g * (1.0 - out_data**2))

    return Tensor(out_data, _parents=(x,), _backward_fn=bwd)


def clip01(x):
    """Clip to [0, 1]; gradient is zero outside the open interval."""
    x = _as_tensor(x)
    mask = (x.data > 0.0) & (x.data < 1.0)

    def bwd(g):
        _accum(x, g * mask)

    return Tensor(np.clip(x.data, 0.0, 1.0), _parents=(x,), _backward_fn=bwd)


def _pad_hw(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _im2col(xp, kh, kw, stride):
    """(n, cin, H, W) padded input -> (n*ho*wo, cin*kh*kw) patch matrix."""
    n, cin, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sn, sc, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, ho, wo, cin, kh, kw),
        strides=(sn, sh * stride, sw * stride, sc, sh, sw),
        writeable=False,
    )
    return view.reshape(n * ho * wo, cin * kh * kw), ho, wo


def conv2d(x, w, stride=1, padding=0):
    """Cross-correlation with zero padding, implemented as im2col + matmul."""
    x, w = _as_tensor(x), _as_tensor(w)
    n, cin, h, wdt = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ValueError(f"conv2d channel mismatch: input {cin} vs kernel {cin_w}")
    if kh > h + 2 * padding or kw > wdt + 2 * padding:
        raise ValueError(
            f"conv2d kernel ({kh}x{kw}) larger than padded input "
            f"({h + 2 * padding}x{wdt + 2 * padding})"
        )
    xp = _pad_hw(x.data, padding)
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    wmat = w.data.reshape(cout, -1)
    out2d = cols @ wmat.T  # (n*ho*wo, cout)
    out_data = out2d.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)

    def bwd(g):
        g2d = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        if w.requires_grad:
            w.grad += (g2d.T @ cols).reshape(w.data.shape)
        if x.requires_grad:
            dcols = g2d @ wmat  # (n*ho*wo, cin*kh*kw)
            dcols = dcols.reshape(n, ho, wo, cin, kh, kw)
            dxp = np.zeros((n, cin, h + 2 * padding, wdt + 2 * padding))
            for ih in range(kh):
                for iw in range(kw):
                    dxp[:, :, ih : ih + stride * ho : stride, iw : iw + stride * wo : stride] += (
                        dcols[:, :, :, :, ih, iw].transpose(0, 3, 1, 2)
                    )
            if padding:
                dxp = dxp[:, :, padding:-padding, padding:-padding]
            x.grad += dxp

    return Tensor(out_data, _parents=(x, w), _backward_fn=bwd)


def maxpool2(x):
    """2x2 max pooling with stride 2; spatial dims must be even."""
    x = _as_tensor(x)
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 requires even spatial dims, got {h}x{w}")
    windows = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = windows.reshape(n, c, h // 2, w // 2, 4)
    arg = windows.argmax(axis=-1)
    out_data = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def bwd(g):
        if not x.requires_grad:
            return
        dwin = np.zeros_like(windows)
        np.put_along_axis(dwin, arg[..., None], g[..., None], axis=-1)
        dx = dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        x.grad += dx.reshape(n, c, h, w)

    return Tensor(out_data, _parents=(x,), _backward_fn=bwd)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy between softmax(logits) and integer labels."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.data.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = (lse - z[np.arange(n), labels]).mean()
    probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)

    def bwd(g):
        if logits.requires_grad:
            d = probs.copy()
            d[np.arange(n), labels] -= 1.0
            logits.grad += (float(g) / n) * d

    return Tensor(loss, _parents=(logits,), _backward_fn=bwd)
