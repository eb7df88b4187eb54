"""stochprec: learned precision allocation for low-bit neural networks.

Core pieces:
  tensor     - float64 reverse-mode autodiff on numpy arrays
  quantize   - fractional-bit straight-through quantizer
  allocator  - budgeted Gumbel-Softmax precision allocation
  bitgemm    - bit-plane AND+popcount integer GEMM and benchmark
  network    - quantized LeNet-style model, training and evaluation
  mnist      - IDX ingestion plus a rendered-digit stand-in dataset
  config     - experiment configs and summaries
"""

from .tensor import Tensor, no_grad
from .quantize import levels, quantize_forward
from .allocator import GumbelAllocator, TemperatureSchedule

__all__ = [
    "Tensor",
    "no_grad",
    "levels",
    "quantize_forward",
    "GumbelAllocator",
    "TemperatureSchedule",
]

__version__ = "0.1.0"
