"""Bit-plane packed fixed-point GEMM via AND + popcount.

An M-bit integer matrix is stored as M planes of 64-bit words, plane m
holding bit m of every element. The dot product of an M-bit row with a
K-bit row is then

    sum_{m,k} 2^(m+k) * popcount(and(plane_m(x), plane_k(y)))

which costs O(M*K) word operations per output element. The benchmark
harness times this kernel against a 32-bit float kernel with the identical
loop structure, so the total-bits-vs-runtime relationship is visible on CPU.
"""

import csv
import time
import statistics

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

WORD_BITS = 64
MAX_BITS = 8


class BitMatrix:
    """rows x cols matrix of nbits-bit integers, stored as bit planes.

    planes has shape (nbits, rows, words) with words = ceil(cols/64); all
    padding bits beyond cols are zero.
    """

    def __init__(self, rows, cols, nbits, planes):
        self.rows = rows
        self.cols = cols
        self.nbits = nbits
        self.planes = planes

    @property
    def words(self):
        return self.planes.shape[2]

    def __repr__(self):
        return f"BitMatrix({self.rows}x{self.cols}, {self.nbits} bits)"


def pack(ints, nbits):
    """Decompose an integer matrix into a BitMatrix of `nbits` planes."""
    if not 1 <= nbits <= MAX_BITS:
        raise ValueError(f"nbits must be in [1, {MAX_BITS}], got {nbits}")
    ints = np.asarray(ints)
    if ints.ndim == 1:
        ints = ints[None, :]
    if ints.ndim != 2:
        raise ValueError(f"pack expects a matrix, got ndim={ints.ndim}")
    if not np.issubdtype(ints.dtype, np.integer):
        ints = ints.astype(np.int64)
    bad = (ints < 0) | (ints >= (1 << nbits))
    if bad.any():
        idx = tuple(int(v) for v in np.argwhere(bad)[0])
        raise ValueError(
            f"element {ints[idx]} at index {idx} out of range [0, 2^{nbits})"
        )
    rows, cols = ints.shape
    words = -(-cols // WORD_BITS)
    planes = np.zeros((nbits, rows, words), dtype=np.uint64)
    for m in range(nbits):
        bits = ((ints >> m) & 1).astype(np.uint8)
        padded = np.zeros((rows, words * WORD_BITS), dtype=np.uint8)
        padded[:, :cols] = bits
        packed = np.packbits(padded, axis=1, bitorder="little")
        planes[m] = np.ascontiguousarray(packed).view(np.uint64)
    return BitMatrix(rows, cols, nbits, planes)


def unpack(bm):
    """Reconstruct the original integer matrix from a BitMatrix."""
    out = np.zeros((bm.rows, bm.cols), dtype=np.int64)
    for m in range(bm.nbits):
        raw = np.ascontiguousarray(bm.planes[m]).view(np.uint8)
        bits = np.unpackbits(raw.reshape(bm.rows, -1), axis=1, bitorder="little")
        out += bits[:, : bm.cols].astype(np.int64) << m
    return out


# ----------------------------------------------------------------------
# kernels

if _HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _popcount64(x):
        # SWAR popcount; LLVM lowers this to the hardware instruction when able
        x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
        x = (x & np.uint64(0x3333333333333333)) + (
            (x >> np.uint64(2)) & np.uint64(0x3333333333333333)
        )
        x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
        return np.int64((x * np.uint64(0x0101010101010101)) >> np.uint64(56))

    @njit(cache=True)
    def _bit_gemm_kernel(a_planes, bt_planes, out):
        mbits, m, nwords = a_planes.shape
        kbits, n, _ = bt_planes.shape
        for mi in range(mbits):
            for ki in range(kbits):
                weight = np.int64(1) << np.int64(mi + ki)
                for i in range(m):
                    for j in range(n):
                        acc = np.int64(0)
                        for w in range(nwords):
                            acc += _popcount64(a_planes[mi, i, w] & bt_planes[ki, j, w])
                        out[i, j] += weight * acc

    @njit(cache=True)
    def _fp32_gemm_kernel(a, b_t, out):
        m, p = a.shape
        n = b_t.shape[0]
        for i in range(m):
            for j in range(n):
                acc = np.float32(0.0)
                for w in range(p):
                    acc += a[i, w] * b_t[j, w]
                out[i, j] = acc

else:

    def _bit_gemm_kernel(a_planes, bt_planes, out):
        mbits = a_planes.shape[0]
        kbits = bt_planes.shape[0]
        for mi in range(mbits):
            for ki in range(kbits):
                weight = np.int64(1) << np.int64(mi + ki)
                anded = a_planes[mi][:, None, :] & bt_planes[ki][None, :, :]
                out += weight * np.bitwise_count(anded).sum(axis=2, dtype=np.int64)

    def _fp32_gemm_kernel(a, b_t, out):
        for i in range(a.shape[0]):
            out[i] = (a[i][None, :] * b_t).sum(axis=1, dtype=np.float32)


def bit_dot(x, y):
    """Integer dot product of two packed rows (1 x n BitMatrix operands)."""
    if x.rows != 1 or y.rows != 1:
        raise ValueError("bit_dot operates on single-row BitMatrix operands")
    if x.cols != y.cols:
        raise ValueError(f"bit_dot length mismatch: {x.cols} vs {y.cols}")
    total = 0
    for m in range(x.nbits):
        for k in range(y.nbits):
            cnt = int(np.bitwise_count(x.planes[m, 0] & y.planes[k, 0]).sum())
            total += (1 << (m + k)) * cnt
    return total


def bit_gemm(a, b_t):
    """C[i, j] = bit_dot(row_i(A), row_j(B^T)); exact 64-bit integer result.

    The right operand is stored pre-transposed so both kernels stream
    contiguous words.
    """
    if a.cols != b_t.cols:
        raise ValueError(
            f"bit_gemm inner dimension mismatch: {a.rows}x{a.cols} vs "
            f"(transposed) {b_t.rows}x{b_t.cols}"
        )
    out = np.zeros((a.rows, b_t.rows), dtype=np.int64)
    _bit_gemm_kernel(a.planes, b_t.planes, out)
    return out


def fp32_gemm(a, b_t):
    """Reference float32 GEMM with the same loop blocking as bit_gemm."""
    a = np.ascontiguousarray(a, dtype=np.float32)
    b_t = np.ascontiguousarray(b_t, dtype=np.float32)
    if a.shape[1] != b_t.shape[1]:
        raise ValueError(f"fp32_gemm inner dimension mismatch: {a.shape} vs {b_t.shape}")
    out = np.zeros((a.shape[0], b_t.shape[0]), dtype=np.float32)
    _fp32_gemm_kernel(a, b_t, out)
    return out


def dequantize_product(c, m_bits, k_bits):
    """Map integer products back to the real [0,1]-level grid product."""
    scale = float((2**m_bits - 1) * (2**k_bits - 1))
    return np.asarray(c, dtype=np.float64) / scale


def signed_weight_gemm(q, a_t):
    """Real GEMM of signed weights (2q - 1) against activations, via bit_gemm.

    q holds the weight levels on [0,1] (M bits); a_t holds the activation
    levels pre-transposed (K bits). Uses 2 * deq(QA) - colsum(A) exactly.
    """
    c = bit_gemm(q, a_t)
    deq = dequantize_product(c, q.nbits, a_t.nbits)
    colsum = unpack(a_t).sum(axis=1) / float(2**a_t.nbits - 1)  # (n,)
    return 2.0 * deq - colsum[None, :]


# ----------------------------------------------------------------------
# benchmark harness

BENCH_CSV_HEADER = ["size", "m_bits", "k_bits", "total_bits", "median_ns", "fp32_ns", "speedup"]


def _time_ns(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return int(statistics.median(times))


def bench_gemm(sizes, bit_pairs, repeats=3, rng=None):
    """Time bit_gemm against the same-blocking fp32 kernel.

    Returns one row dict per (size, M, K): keys as in BENCH_CSV_HEADER.
    """
    if repeats < 3:
        raise ValueError(f"repeats must be >= 3, got {repeats}")
    for s in sizes:
        if s < 64:
            raise ValueError(f"benchmark sizes must be >= 64, got {s}")
    rng = rng if rng is not None else np.random.default_rng(0)
    # trigger JIT compilation outside the timed region
    warm = pack(rng.integers(0, 2, size=(64, 64)), 1)
    bit_gemm(warm, warm)
    fp32_gemm(np.ones((64, 64), np.float32), np.ones((64, 64), np.float32))

    rows = []
    for size in sizes:
        af = rng.random((size, size), dtype=np.float32)
        bf = rng.random((size, size), dtype=np.float32)
        fp32_ns = _time_ns(lambda: fp32_gemm(af, bf), repeats)
        for m_bits, k_bits in bit_pairs:
            a = pack(rng.integers(0, 1 << m_bits, size=(size, size)), m_bits)
            b_t = pack(rng.integers(0, 1 << k_bits, size=(size, size)), k_bits)
            median_ns = _time_ns(lambda: bit_gemm(a, b_t), repeats)
            rows.append(
                {
                    "size": size,
                    "m_bits": m_bits,
                    "k_bits": k_bits,
                    "total_bits": m_bits * k_bits,
                    "median_ns": median_ns,
                    "fp32_ns": fp32_ns,
                    "speedup": fp32_ns / median_ns,
                }
            )
    return rows


def write_bench_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_CSV_HEADER)
        writer.writeheader()
        writer.writerows(rows)
