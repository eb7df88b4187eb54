"""Budgeted stochastic precision allocation over network layers.

A Gumbel-Softmax distribution with one class per layer is sampled once per
bit in the budget; summing the simplex samples yields per-layer (fractional)
bit allocations that always conserve the budget. The temperature anneals
from a near-uniform continuous regime down to near-discrete samples, and the
allocation is frozen to integers once the temperature drops below the hard
assignment threshold.
"""

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _accum

GUMBEL_EPS = 1e-20

HARD_THRESHOLD_DEFAULT = 3.0


# ----------------------------------------------------------------------
@dataclass
class TemperatureSchedule:
    """Exponential decay tau(t) = max(tau_min, tau0 * exp(-decay_rate * t))."""

    tau0: float = 50.0
    tau_min: float = 0.01
    decay_rate: float = 0.1
    hard_threshold: float = HARD_THRESHOLD_DEFAULT

    def tau(self, epoch):
        if epoch < 0:
            raise ValueError(f"epoch must be >= 0, got {epoch}")
        return max(self.tau_min, self.tau0 * math.exp(-self.decay_rate * epoch))


def advance_temperature(sched, epoch):
    return sched.tau(epoch)


def decay_rate_for_crossing(total_epochs, tau0=50.0, threshold=HARD_THRESHOLD_DEFAULT,
                            fraction=0.4):
    """Decay rate such that tau crosses `threshold` at fraction*total_epochs."""
    t_cross = fraction * total_epochs
    if t_cross <= 0:
        raise ValueError("crossing epoch must be positive")
    return math.log(tau0 / threshold) / t_cross


# ----------------------------------------------------------------------
def gumbel_noise(rng, shape):
    u = rng.random(shape)
    return -np.log(-np.log(u + GUMBEL_EPS) + GUMBEL_EPS)


def gumbel_softmax_sample(logits, tau, noise):
    """One simplex sample: softmax((logits + noise) / tau) along the last axis."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = (np.asarray(logits, dtype=np.float64) + noise) / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def allocator_backward(upstream, draws, tau):
    """Chain an upstream bits-gradient through saved softmax draws to the logits.

    draws: (num_draws, L) simplex samples; returns the (L,) logits gradient
    summed over draws, using dy_i/dpi_j = y_i (delta_ij - y_j) / tau per draw.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    draws = np.atleast_2d(np.asarray(draws, dtype=np.float64))
    dots = draws @ upstream  # (num_draws,)
    return (draws * (upstream[None, :] - dots[:, None])).sum(axis=0) / tau


@dataclass
class LayerPrecision:
    """Per-layer bit-width vector; fractional while exploring, integer when hard."""

    bits: Tensor
    mode: str  # "exploring" | "hard"

    def as_array(self):
        return self.bits.data.copy()

    def as_ints(self):
        if self.mode != "hard":
            raise ValueError("integer allocation only available in hard mode")
        return [int(round(b)) for b in self.bits.data]


class GumbelAllocator:
    """Learnable logits over L layers plus a budget of B precision bits."""

    def __init__(self, num_layers, budget, temperature=50.0, seed=0, rng=None):
        if num_layers < 1:
            raise ValueError("need at least one layer")
        if budget < 1:
            raise ValueError("budget must be a positive integer")
        self.num_layers = num_layers
        self.budget = int(budget)
        self.temperature = float(temperature)
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.logits = Tensor(np.zeros(num_layers), requires_grad=True)
        self.mode = "exploring"
        self.hard_bits = None

    # ------------------------------------------------------------------
    def sample_allocation(self):
        """Sum B Gumbel-Softmax draws into a fractional allocation.

        Returns an exploring LayerPrecision whose bits Tensor routes gradients
        back to the logits through every saved draw.
        """
        if self.mode != "exploring":
            raise ValueError("sample_allocation requires exploring mode")
        tau = self.temperature
        noise = gumbel_noise(self.rng, (self.budget, self.num_layers))
        draws = gumbel_softmax_sample(self.logits.data, tau, noise)
        bits_data = draws.sum(axis=0)
        logits = self.logits

        def bwd(g):
            _accum(logits, allocator_backward(g, draws, tau))

        bits = Tensor(bits_data, _parents=(logits,), _backward_fn=bwd)
        return LayerPrecision(bits=bits, mode="exploring")

    # ------------------------------------------------------------------
    def hard_assign(self, num_trials=10_000, hard_threshold=HARD_THRESHOLD_DEFAULT):
        """Freeze the allocation to integers summing exactly to the budget.

        Averages `num_trials` full allocations, rounds by largest remainder,
        and raises any zero layer to one bit by taking from the largest layer.
        The allocator flips to hard mode; further sampling is an error.
        """
        if num_trials < 1:
            raise ValueError(f"num_trials must be >= 1, got {num_trials}")
        if self.budget < self.num_layers:
            raise ValueError(
                f"budget {self.budget} cannot give {self.num_layers} layers >= 1 bit each"
            )
        if self.temperature >= hard_threshold:
            raise ValueError(
                f"hard_assign requires temperature < {hard_threshold}, "
                f"got {self.temperature}"
            )
        noise = gumbel_noise(self.rng, (num_trials * self.budget, self.num_layers))
        draws = gumbel_softmax_sample(self.logits.data, self.temperature, noise)
        expected = draws.sum(axis=0) / num_trials  # sums to B
        ints = largest_remainder_round(expected, self.budget)
        # zero-bit protection: a 0-bit layer would collapse to a constant
        while min(ints) < 1:
            ints[int(np.argmax(ints))] -= 1
            ints[int(np.argmin(ints))] += 1
        self.mode = "hard"
        self.hard_bits = ints
        return LayerPrecision(bits=Tensor(np.asarray(ints, dtype=np.float64)), mode="hard")


def largest_remainder_round(values, total):
    """Round non-negative reals to ints preserving their (integer) sum."""
    values = np.asarray(values, dtype=np.float64)
    floors = np.floor(values).astype(np.int64)
    leftover = int(total) - int(floors.sum())
    if leftover < 0 or leftover > len(values):
        raise ValueError(f"values sum {values.sum()} incompatible with total {total}")
    order = np.argsort(-(values - floors), kind="stable")
    out = floors.copy()
    out[order[:leftover]] += 1
    return out.tolist()
