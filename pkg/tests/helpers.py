"""Shared test oracles."""

import numpy as np


def numerical_grad(f, x, h=1e-5):
    """Central finite differences of scalar f() w.r.t. the array x (in place)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a, b):
    """Relative error between gradient arrays, norm-based."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(b), 1e-8)
    return np.linalg.norm(a - b) / denom


def conv2d_loop_oracle(x, w, stride=1, padding=0):
    """Direct 6-loop cross-correlation; the independent oracle for conv2d."""
    n, cin, h, wdt = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wdt + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for b in range(n):
        for co in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += (xp[b, ci, i * stride + u, j * stride + v]
                                        * w[co, ci, u, v])
                    out[b, co, i, j] = acc
    return out


def build_toy_model(seed=0, budget=4, tau=5.0):
    """Tiny 2-layer quantized model (conv + dense) with a learned allocator."""
    from stochprec.allocator import GumbelAllocator
    from stochprec.network import Model, QuantLayer
    from stochprec.tensor import Tensor

    rng = np.random.default_rng(seed)
    conv = QuantLayer(
        "conv",
        Tensor(rng.standard_normal((2, 1, 3, 3)) * 0.5, requires_grad=True),
        Tensor(np.full((2, 1, 1), 0.8), requires_grad=True),
        Tensor(rng.standard_normal((2, 1, 1)) * 0.1, requires_grad=True),
        bit_index=0, padding=1,
    )
    dense = QuantLayer(
        "dense",
        Tensor(rng.standard_normal((3, 8)) * 0.5, requires_grad=True),
        Tensor(np.full(3, 1.2), requires_grad=True),
        Tensor(np.zeros(3), requires_grad=True),
        bit_index=1,
    )
    alloc = GumbelAllocator(2, budget, temperature=tau, seed=seed + 100)
    model = Model([conv, dense], pool_after={0}, allocator=alloc,
                  schedule=None, mode="learned", fixed_bits=None)
    x = rng.random((4, 1, 4, 4))
    y = rng.integers(0, 3, 4)
    return model, x, y


def surrogate_logit_grad(model, x, y, noise, h=1e-4):
    """Central-difference logit gradient of the smooth STE surrogate loss.

    Re-implements the quantized forward in plain numpy with every round
    replaced by its local straight-through surrogate r + (q0 - u0)/(2^k - 1),
    where q0, u0 and the clip masks are frozen at the base point. This is the
    function whose exact gradient the autodiff backward is defined to return,
    so finite differences apply even though the true forward is discrete.
    """
    from stochprec.allocator import gumbel_softmax_sample

    conv, dense = model.layers
    tau = model.allocator.temperature
    base_logits = model.allocator.logits.data.copy()

    def surrogate_quantize(r, k, frozen):
        denom = 2.0**k - 1.0
        if frozen is None:
            u0 = denom * r
            q0 = np.floor(u0 + 0.5)
            mask = q0 / denom > 1.0
            frozen_out = (u0, q0, mask)
        else:
            u0, q0, mask = frozen
            frozen_out = frozen
        out = np.where(mask, 1.0, r + (q0 - u0) / denom)
        return out, frozen_out

    def forward(logits, frozen):
        new_frozen = []
        draws = gumbel_softmax_sample(logits, tau, noise)
        bits = draws.sum(axis=0)
        h_act = x
        for li, layer in enumerate([conv, dense]):
            k = bits[li]
            t = np.tanh(layer.weights.data)
            xw = t / (2.0 * np.abs(t).max()) + 0.5
            fz = frozen[2 * li] if frozen else None
            qw, fz_out = surrogate_quantize(xw, k, fz)
            new_frozen.append(fz_out)
            w = 2.0 * qw - 1.0
            if layer.kind == "conv":
                z = conv2d_loop_oracle(h_act, w, padding=layer.padding)
                z = z * layer.scale.data + layer.bias.data
                n, c, hh, ww = z.shape
                z = z.reshape(n, c, hh // 2, 2, ww // 2, 2).max(axis=(3, 5))
                r = np.clip(z, 0.0, 1.0)
                fz = frozen[2 * li + 1] if frozen else None
                h_act, fz_out = surrogate_quantize(r, k, fz)
                new_frozen.append(fz_out)
            else:
                h2 = h_act.reshape(h_act.shape[0], -1)
                z = h2 @ w.T * layer.scale.data + layer.bias.data
                new_frozen.append(None)
                s = z - z.max(axis=1, keepdims=True)
                lse = np.log(np.exp(s).sum(axis=1))
                return float((lse - s[np.arange(len(y)), y]).mean()), new_frozen

    _, frozen = forward(base_logits, None)
    grad = np.zeros_like(base_logits)
    for j in range(len(base_logits)):
        e = np.zeros_like(base_logits)
        e[j] = h
        lp, _ = forward(base_logits + e, frozen)
        lm, _ = forward(base_logits - e, frozen)
        grad[j] = (lp - lm) / (2.0 * h)
    return grad
