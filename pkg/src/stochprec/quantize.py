"""Fractional-bit quantizer with straight-through gradients.

The forward maps [0,1] onto the level grid {i/(2^k - 1)}, clipped at 1. The
bit-width k may be any positive real: non-integer k yields a level count
strictly between the neighbouring powers of two. Gradients pass straight
through to the input (zeroed where the output clipped), and reach k by
treating only the round operator as identity-like.
"""

import math

import numpy as np

from .tensor import Tensor, _accum, _as_tensor, tanh

LN2 = math.log(2.0)

# Bit-widths at or above this value bypass quantization entirely.
FULL_PRECISION_BITS = 32.0


def _check_unit_interval(r):
    r = np.asarray(r, dtype=np.float64)
    if r.size and (r.min() < -1e-9 or r.max() > 1 + 1e-9):
        raise ValueError(
            f"quantize input must lie in [0,1], got range [{r.min()}, {r.max()}]"
        )
    return np.clip(r, 0.0, 1.0)


def _check_k(k):
    k = float(k)
    if k <= 0:
        raise ValueError(f"bit-width must be positive, got {k}")
    return k


def _round_half_away(u):
    # inputs are non-negative, so half-away-from-zero == floor(u + 0.5)
    return np.floor(u + 0.5)


def quantize_forward(r, k):
    """min(1, round((2^k - 1) r) / (2^k - 1)), elementwise."""
    r = _check_unit_interval(r)
    k = _check_k(k)
    denom = 2.0**k - 1.0
    out = np.minimum(1.0, _round_half_away(denom * r) / denom)
    return out if out.ndim else float(out)


def quantize_backward_input(upstream, r, k):
    """Straight-through input gradient: identity where unclipped, 0 at the clip."""
    r = _check_unit_interval(r)
    k = _check_k(k)
    denom = 2.0**k - 1.0
    clipped = _round_half_away(denom * r) / denom > 1.0
    out = np.where(clipped, 0.0, np.asarray(upstream, dtype=np.float64))
    return out if out.ndim else float(out)


def quantize_backward_k(upstream, r, k):
    """Gradient w.r.t. the bit-width, with straight-through applied to round only.

    d r_o / d k = ln(2) 2^k (u - round(u)) / (2^k - 1)^2 where u = (2^k - 1) r;
    zero where the forward output clipped at 1.
    """
    r = _check_unit_interval(r)
    k = _check_k(k)
    denom = 2.0**k - 1.0
    u = denom * r
    q = _round_half_away(u)
    clipped = q / denom > 1.0
    factor = LN2 * 2.0**k * (u - q) / denom**2
    out = np.where(clipped, 0.0, np.asarray(upstream, dtype=np.float64) * factor)
    return out if out.ndim else float(out)


def levels(k):
    """Sorted list of representable output values for bit-width k."""
    k = _check_k(k)
    denom = 2.0**k - 1.0
    vals = sorted({min(1.0, i / denom) for i in range(int(math.ceil(denom)) + 1)})
    return vals


# ----------------------------------------------------------------------
# autodiff ops


def quantize_ste(x, k):
    """Quantize a Tensor in [0,1]; k may be a float or a scalar Tensor.

    The backward passes upstream gradients straight through to x (zeroed on
    the clipped region) and, when k is a Tensor, routes the bit-width
    gradient onto it.
    """
    x = _as_tensor(x)
    k_is_tensor = isinstance(k, Tensor)
    k_val = _check_k(k.item() if k_is_tensor else k)
    if k_val >= FULL_PRECISION_BITS:
        return x
    r = _check_unit_interval(x.data)
    denom = 2.0**k_val - 1.0
    u = denom * r
    q = _round_half_away(u)
    levelled = q / denom
    clipped = levelled > 1.0
    out_data = np.minimum(1.0, levelled)

    parents = (x, k) if k_is_tensor else (x,)

    def bwd(g):
        unclipped = ~clipped
        _accum(x, np.where(unclipped, g, 0.0))
        if k_is_tensor:
            dk = (g * (LN2 * 2.0**k_val * (u - q) / denom**2))[unclipped].sum()
            _accum(k, np.full_like(k.data, dk))

    return Tensor(out_data, _parents=parents, _backward_fn=bwd)


def quantize_weights(w, k, eps=1e-12):
    """Quantize a weight Tensor onto [-1, 1] using tanh normalization.

    q = quantize(tanh(w) / (2 max|tanh(w)|) + 1/2, k), returned as 2q - 1.
    The normalizing max is treated as a constant in the backward pass; an
    all-zero tensor maps to zeros via the eps guard.
    """
    w = _as_tensor(w)
    k_is_tensor = isinstance(k, Tensor)
    k_val = k.item() if k_is_tensor else float(k)
    if k_val >= FULL_PRECISION_BITS:
        return w
    t = tanh(w)
    tmax = float(np.abs(t.data).max())
    if tmax < eps:
        # degenerate all-zero tensor: midpoint would round up to +1, so short
        # circuit to the symmetric answer
        return w * 0.0
    scale = max(tmax, eps)
    x = t * (0.5 / scale) + 0.5
    return quantize_ste(x, k) * 2.0 - 1.0


def quantize_activations(a, k):
    """Clip a Tensor to [0,1] (zero gradient outside) and quantize."""
    from .tensor import clip01

    a = _as_tensor(a)
    k_is_tensor = isinstance(k, Tensor)
    k_val = k.item() if k_is_tensor else float(k)
    if k_val >= FULL_PRECISION_BITS:
        return clip01(a)
    return quantize_ste(clip01(a), k)
