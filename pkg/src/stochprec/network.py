"""Quantized CNN, the precision layer wired into its forward pass, and training.

The model is a five-layer LeNet-style net: four convolutions and a final
dense layer, all five carrying quantized weights and (for the four hidden
layers) quantized activations. Per minibatch the bit-width vector either
comes from a fixed manual allocation or is sampled from the Gumbel-Softmax
allocator; once the temperature anneals below the hard threshold the
learned allocation is frozen to integers for the rest of training.
"""

import csv
import math
import os

import numpy as np

from . import mnist
from .allocator import GumbelAllocator, LayerPrecision, TemperatureSchedule
from .optim import Adam
from .quantize import quantize_activations, quantize_weights
from .tensor import Tensor, clip01, conv2d, matmul, maxpool2, no_grad, softmax_cross_entropy

NUM_QUANT_LAYERS = 5

FULL_PRECISION_SENTINEL = 32.0


class QuantLayer:
    """One parameterized layer (conv or dense) with a precision slot.

    Quantized convolutions produce pre-activations on a weight grid of unit
    scale, so each layer carries a learnable per-channel scale (initialized
    to 1/sqrt(fan_in)) and bias to keep pre-activations inside the bounded
    nonlinearity's useful range.
    """

    def __init__(self, kind, weights, scale, bias, bit_index,
                 stride=1, padding=0, q_weights=True, q_acts=True):
        self.kind = kind  # "conv" | "dense"
        self.weights = weights
        self.scale = scale
        self.bias = bias
        self.bit_index = bit_index
        self.stride = stride
        self.padding = padding
        self.q_weights = q_weights
        self.q_acts = q_acts

    def params(self):
        return [self.weights, self.scale, self.bias]


class Model:
    def __init__(self, layers, pool_after, allocator, schedule, mode, fixed_bits):
        self.layers = layers
        self.pool_after = pool_after  # set of layer indices followed by maxpool2
        self.allocator = allocator
        self.schedule = schedule
        self.mode = mode  # "uniform-manual" | "learned"
        self.fixed_bits = fixed_bits

    @property
    def num_quant_layers(self):
        return len(self.layers)

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def param_count(self):
        return sum(p.size for p in self.params())


def _conv_layer(rng, cout, cin, ksize, bit_index, padding):
    fan_in = cin * ksize * ksize
    w = Tensor(rng.normal(0.0, math.sqrt(2.0 / fan_in), (cout, cin, ksize, ksize)),
               requires_grad=True)
    s = Tensor(np.full((cout, 1, 1), 1.0 / math.sqrt(fan_in)), requires_grad=True)
    b = Tensor(np.zeros((cout, 1, 1)), requires_grad=True)
    return QuantLayer("conv", w, s, b, bit_index, padding=padding)


def build_mnist_model(mode="learned", budget=None, fixed_bits=None, seed=0,
                      schedule=None, init_rng=None, gumbel_rng=None):
    """conv16@5 -> pool -> conv32@5 -> pool -> conv32@3 -> conv64@3 -> dense10.

    All five parameterized layers are quantized (weights and activations).
    """
    if mode not in ("learned", "uniform-manual"):
        raise ValueError(f"unknown model mode {mode!r}")
    init_rng = init_rng if init_rng is not None else np.random.default_rng(seed)
    layers = [
        _conv_layer(init_rng, 16, 1, 5, 0, padding=0),   # 28 -> 24, pool -> 12
        _conv_layer(init_rng, 32, 16, 5, 1, padding=0),  # 12 -> 8, pool -> 4
        _conv_layer(init_rng, 32, 32, 3, 2, padding=1),  # 4 -> 4
        _conv_layer(init_rng, 64, 32, 3, 3, padding=1),  # 4 -> 4
    ]
    dense_in = 64 * 4 * 4
    w = Tensor(init_rng.normal(0.0, math.sqrt(2.0 / dense_in), (10, dense_in)),
               requires_grad=True)
    s = Tensor(np.full((10,), 1.0 / math.sqrt(dense_in)), requires_grad=True)
    b = Tensor(np.zeros((10,)), requires_grad=True)
    layers.append(QuantLayer("dense", w, s, b, 4))

    if mode == "learned":
        if budget is None:
            raise ValueError("learned mode requires a budget")
        if budget < NUM_QUANT_LAYERS:
            raise ValueError(
                f"budget {budget} < {NUM_QUANT_LAYERS} layers; hard assignment "
                "could not give every layer a bit"
            )
        schedule = schedule if schedule is not None else TemperatureSchedule()
        allocator = GumbelAllocator(NUM_QUANT_LAYERS, budget,
                                    temperature=schedule.tau0, rng=gumbel_rng, seed=seed)
        fixed = None
    else:
        if fixed_bits is None:
            raise ValueError("uniform-manual mode requires fixed_bits")
        fixed = np.asarray(fixed_bits, dtype=np.float64)
        if len(fixed) != NUM_QUANT_LAYERS:
            raise ValueError(f"expected {NUM_QUANT_LAYERS} bit entries, got {len(fixed)}")
        allocator = None
    return Model(layers, pool_after={0, 1}, allocator=allocator,
                 schedule=schedule, mode=mode, fixed_bits=fixed)


def calibrate_model(model, batch, bits, act_mean=0.4, act_std=0.35, eps=1e-8):
    """Set each layer's scale/bias so pre-activations cover the clip range.

    Forwards a calibration batch once with quantized weights and rescales
    per channel to the target mean/std (the bounded nonlinearity clips to
    [0,1], so untuned scales starve deep layers of signal). The dense layer
    gets a scalar scale targeting unit logit spread.
    """
    ks = _layer_bits(bits)
    with no_grad():
        h = batch if isinstance(batch, Tensor) else Tensor(batch)
        for i, layer in enumerate(model.layers):
            k = ks[i]
            w = quantize_weights(layer.weights, k) if layer.q_weights else layer.weights
            if layer.kind == "conv":
                raw = conv2d(h, w, stride=layer.stride, padding=layer.padding)
                mean = raw.data.mean(axis=(0, 2, 3))[:, None, None]
                std = raw.data.std(axis=(0, 2, 3))[:, None, None]
                layer.scale.data[...] = act_std / (std + eps)
                layer.bias.data[...] = act_mean - mean * layer.scale.data
                h = raw * layer.scale + layer.bias
                if i in model.pool_after:
                    h = maxpool2(h)
                h = quantize_activations(h, k) if layer.q_acts else clip01(h)
            else:
                h = h.reshape(h.shape[0], -1)
                raw = matmul(h, w.T)
                layer.scale.data[...] = 1.0 / (raw.data.std() + eps)
                layer.bias.data[...] = 0.0


def _layer_bits(bits):
    """Normalize a bits argument to a list of per-layer scalars (float or Tensor)."""
    if isinstance(bits, LayerPrecision):
        if bits.mode == "exploring":
            return [bits.bits[i] for i in range(bits.bits.size)]
        return [float(b) for b in bits.bits.data]
    return [b if isinstance(b, Tensor) else float(b) for b in bits]


def forward_quantized(model, batch, bits):
    """Quantized forward pass; returns the logits Tensor.

    Each layer i computes with quantize_weights(w, bits[i]) and feeds its
    pooled pre-activation through the clip-bounded nonlinearity quantized at
    bits[i]. A bit value >= 32 bypasses quantization for that layer.
    """
    ks = _layer_bits(bits)
    if len(ks) != len(model.layers):
        raise ValueError(f"expected {len(model.layers)} bit entries, got {len(ks)}")
    for k in ks:
        kv = k.item() if isinstance(k, Tensor) else k
        if kv <= 0:
            raise ValueError(f"non-positive bit allocation {kv}")
    h = batch if isinstance(batch, Tensor) else Tensor(batch)
    for i, layer in enumerate(model.layers):
        k = ks[i]
        w = quantize_weights(layer.weights, k) if layer.q_weights else layer.weights
        if layer.kind == "conv":
            h = conv2d(h, w, stride=layer.stride, padding=layer.padding)
            h = h * layer.scale + layer.bias
            if i in model.pool_after:
                h = maxpool2(h)
            h = quantize_activations(h, k) if layer.q_acts else clip01(h)
        else:
            h = h.reshape(h.shape[0], -1)
            h = matmul(h, w.T) * layer.scale + layer.bias
    return h


def evaluate(model, dataset, bits, batch_size=500):
    """Top-1 error rate over the full dataset at a fixed allocation."""
    if len(dataset) == 0:
        raise ValueError("evaluate called on an empty dataset")
    err, _ = _eval_error_loss(model, dataset, bits, batch_size)
    return err


def _eval_error_loss(model, dataset, bits, batch_size=500):
    wrong = 0
    loss_sum = 0.0
    with no_grad():
        for lo in range(0, len(dataset), batch_size):
            xb = dataset.images[lo : lo + batch_size]
            yb = dataset.labels[lo : lo + batch_size]
            logits = forward_quantized(model, xb, bits)
            loss_sum += softmax_cross_entropy(logits, yb).item() * len(yb)
            wrong += int((logits.data.argmax(axis=1) != yb).sum())
    return wrong / len(dataset), loss_sum / len(dataset)


# ----------------------------------------------------------------------
# training

METRIC_FIXED_COLS = ["epoch", "split", "error", "loss", "tau"]


def metrics_header(num_layers=NUM_QUANT_LAYERS):
    return (METRIC_FIXED_COLS
            + [f"bits_{i}" for i in range(num_layers)]
            + [f"logit_{i}" for i in range(num_layers)])


def train(cfg, train_set=None, test_set=None):
    """Run one experiment arm; returns (model, history rows, final allocation).

    Per epoch the temperature advances; per minibatch a fresh allocation is
    sampled (learned, exploring) or the fixed vector is used. At the first
    epoch where tau drops below the hard threshold, the allocation freezes
    to integers. Metrics rows (train and val splits) are appended per epoch
    and written to <output_dir>/metrics_seed<seed>.csv.
    """
    root = np.random.SeedSequence(cfg.seed)
    init_ss, shuffle_ss, gumbel_ss = root.spawn(3)
    init_rng = np.random.default_rng(init_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    gumbel_rng = np.random.default_rng(gumbel_ss)

    if train_set is None:
        train_set = mnist.load_dir(cfg.dataset_dir, "train")
    if test_set is None:
        test_set = mnist.load_dir(cfg.dataset_dir, "test")
    if cfg.train_limit and cfg.train_limit < len(train_set):
        train_set = mnist.MnistSet(train_set.images[: cfg.train_limit],
                                   train_set.labels[: cfg.train_limit])

    # default anneal reaches tau_min exactly at the last epoch (the published
    # trajectory: tau 50.0 at epoch 0, 0.01 at epoch 50), so the 3.0 crossing
    # lands at about a third of the run regardless of epoch count
    decay = cfg.decay_rate or np.log(cfg.tau0 / cfg.tau_min) / cfg.epochs
    schedule = TemperatureSchedule(tau0=cfg.tau0, tau_min=cfg.tau_min,
                                   decay_rate=decay, hard_threshold=cfg.hard_threshold)

    if cfg.arm == "learned":
        model = build_mnist_model("learned", budget=cfg.budget, schedule=schedule,
                                  init_rng=init_rng, gumbel_rng=gumbel_rng)
    else:
        model = build_mnist_model("uniform-manual", fixed_bits=cfg.fixed_allocation(),
                                  schedule=schedule, init_rng=init_rng)

    calib_bits = (model.fixed_bits if model.mode == "uniform-manual"
                  else np.full(NUM_QUANT_LAYERS, cfg.budget / NUM_QUANT_LAYERS))
    calibrate_model(model, train_set.images[: min(256, len(train_set))], calib_bits)

    opt = Adam(model.params(), lr=cfg.lr)
    logit_opt = Adam([model.allocator.logits], lr=cfg.logit_lr) if model.allocator else None

    n = len(train_set)
    num_layers = model.num_quant_layers
    hard_alloc = None
    history = []
    for epoch in range(cfg.epochs):
        tau = schedule.tau(epoch)
        exploring = (model.mode == "learned"
                     and model.allocator.mode == "exploring")
        if exploring and tau < schedule.hard_threshold:
            model.allocator.temperature = tau
            hard_alloc = model.allocator.hard_assign(cfg.hard_trials,
                                                     schedule.hard_threshold)
            exploring = False
        if exploring:
            model.allocator.temperature = tau

        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        wrong = 0
        bits_sum = np.zeros(num_layers)
        batches = 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb, yb = train_set.images[idx], train_set.labels[idx]
            if model.mode == "learned":
                if model.allocator.mode == "exploring":
                    alloc = model.allocator.sample_allocation()
                else:
                    alloc = hard_alloc
            else:
                alloc = model.fixed_bits
            logits = forward_quantized(model, xb, alloc)
            loss = softmax_cross_entropy(logits, yb)
            if not np.isfinite(loss.item()):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} (tau={tau:.4f})")
            opt.zero_grad()
            if logit_opt is not None:
                logit_opt.zero_grad()
            loss.backward()
            opt.step()
            if logit_opt is not None and model.allocator.mode == "exploring":
                logit_opt.step()
            loss_sum += loss.item() * len(yb)
            wrong += int((logits.data.argmax(axis=1) != yb).sum())
            bits_sum += (alloc.bits.data if isinstance(alloc, LayerPrecision)
                         else np.asarray(alloc, dtype=np.float64))
            batches += 1

        bits_mean = bits_sum / batches
        logit_vals = (model.allocator.logits.data.copy() if model.allocator
                      else np.zeros(num_layers))
        eval_bits = (hard_alloc if hard_alloc is not None
                     else model.fixed_bits if model.mode == "uniform-manual"
                     else largest_fractional_eval_bits(model))
        val_err, val_loss = _eval_error_loss(model, test_set, eval_bits)
        history.append([epoch, "train", wrong / n, loss_sum / n, tau,
                        *bits_mean, *logit_vals])
        history.append([epoch, "val", val_err, val_loss, tau,
                        *bits_mean, *logit_vals])

    final_alloc = (hard_alloc.bits.data if hard_alloc is not None
                   else model.fixed_bits)
    if final_alloc is None:  # learned run that never crossed the threshold
        final_alloc = model.allocator.logits.data * 0 + cfg.budget / num_layers
    final_err = history[-1][2]

    os.makedirs(cfg.output_dir, exist_ok=True)
    metrics_path = os.path.join(cfg.output_dir, f"metrics_seed{cfg.seed}.csv")
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(metrics_header(num_layers))
        for row in history:
            writer.writerow([_fmt(v) for v in row])
    from .config import write_summary

    summary_path = os.path.join(cfg.output_dir, f"summary_seed{cfg.seed}.csv")
    write_summary(summary_path, cfg.name, cfg.budget, final_err,
                  [int(round(b)) for b in np.asarray(final_alloc)])
    return model, history, np.asarray(final_alloc)


def largest_fractional_eval_bits(model):
    """Expected allocation B * softmax(logits), for mid-exploration eval."""
    z = model.allocator.logits.data
    p = np.exp(z - z.max())
    p /= p.sum()
    return model.allocator.budget * p


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"
