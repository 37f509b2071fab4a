"""Fixed-width vector lanes with reference semantics for every kernel primitive.

Everything here is a pure function over numpy arrays of one lane count (vs):
predicated loads, compaction, expansion, multiply-add, and the reductions.
Inactive lanes are always zero-filled, never undefined, so every operation is
testable and accumulation through inactive lanes is harmless.

Pinned numeric conventions for this build:

* ``fma`` is unfused (multiply rounds, then the add rounds).
* ``hsum`` reduces by a balanced adjacent-pair tree:
  ``((l0+l1)+(l2+l3)) + ...``.
* ``multi_reduce`` follows the odd/even de-interleave recurrence, which sums
  each input vector by the same adjacent-pair tree as ``hsum``; lanes at and
  beyond the input count are deterministic but carry no contract.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = [
    "filter_vector",
    "mask_to_predicate",
    "first_n_predicate",
    "masked_load",
    "compact",
    "expand",
    "fma",
    "hsum",
    "multi_reduce",
]


def filter_vector(vs: int) -> np.ndarray:
    """Lane i holds 1 << i; the bit-test companion of a lane mask."""
    return (np.uint32(1) << np.arange(vs, dtype=np.uint32)).astype(np.uint32)


def mask_to_predicate(mask: int, filt: np.ndarray) -> np.ndarray:
    """Boolean lane vector: lane i active iff bit i of mask is set."""
    if mask >> len(filt):
        raise ValueError(f"mask {mask:#x} has bits beyond {len(filt)} lanes")
    return (filt & np.uint32(mask)) != 0


def first_n_predicate(n: int, vs: int) -> np.ndarray:
    """Predicate with lanes 0..n-1 active."""
    if not 0 <= n <= vs:
        raise ValueError(f"n={n} out of range for {vs} lanes")
    pred = np.zeros(vs, dtype=bool)
    pred[:n] = True
    return pred


def masked_load(src: np.ndarray, offset: int, pred: np.ndarray) -> np.ndarray:
    """Load src[offset+i] into lane i where active; inactive lanes are 0.

    Every active lane must be in range; an out-of-bounds active lane is a
    contract violation and raises.
    """
    vs = len(pred)
    out = np.zeros(vs, dtype=src.dtype)
    avail = len(src) - offset
    if offset < 0 or avail < vs:
        if offset < 0 or np.any(pred[max(avail, 0):]):
            raise IndexError(
                f"masked_load: active lane past end of source "
                f"(offset {offset}, {len(src)} elements, {vs} lanes)")
        head = pred[:avail]
        out[:avail][head] = src[offset:offset + avail][head]
        return out
    chunk = src[offset:offset + vs]
    out[pred] = chunk[pred]
    return out


def compact(v: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Move the active lanes of v to the front, in lane order; rest 0."""
    out = np.zeros_like(v)
    taken = v[pred]
    out[:len(taken)] = taken
    return out


def expand(contiguous: np.ndarray, offset: int, mask: int, vs: int) -> np.ndarray:
    """Scatter popcount(mask) elements from contiguous[offset:] to the set-bit lanes.

    The inverse of :func:`compact` on active lanes; inactive lanes are 0.
    """
    n = mask.bit_count()
    if offset < 0 or offset + n > len(contiguous):
        raise ValueError(
            f"expand: needs {n} elements at offset {offset}, "
            f"only {len(contiguous)} available")
    out = np.zeros(vs, dtype=contiguous.dtype)
    if n:
        out[mask_to_predicate(mask, filter_vector(vs))] = contiguous[offset:offset + n]
    return out


def fma(acc: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Lane-wise acc + a*b with separate multiply and add roundings."""
    return acc + a * b


def hsum(v: np.ndarray):
    """Sum of lanes by the balanced adjacent-pair tree; returns a dtype scalar."""
    work = np.asarray(v)
    n = len(work)
    if n & (n - 1):
        padded = np.zeros(1 << n.bit_length(), dtype=work.dtype)
        padded[:n] = work
        work = padded
    while len(work) > 1:
        work = work[0::2] + work[1::2]
    return work[0]


def _uzp_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # De-interleave both vectors into even and odd lanes and add the halves:
    # the front half holds adjacent-pair sums of a, the back half of b.
    even = np.concatenate([a[0::2], b[0::2]])
    odd = np.concatenate([a[1::2], b[1::2]])
    return even + odd


def multi_reduce(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Reduce r lane vectors at once; output lane i (i < r) is the total of input i.

    Runs log2(vs) de-interleave steps: vectors are combined pairwise until one
    remains, then that vector folds onto itself. Lanes >= r are deterministic
    byproducts of the recurrence with no other guarantee.
    """
    r = len(vectors)
    if r == 0:
        raise ValueError("multi_reduce needs at least one vector")
    vs = len(vectors[0])
    if r > vs:
        raise ValueError(f"cannot reduce {r} vectors of {vs} lanes")
    if vs & (vs - 1):
        raise ValueError(f"lane count {vs} must be a power of two")
    work = [np.asarray(v) for v in vectors]
    zero = np.zeros(vs, dtype=work[0].dtype)
    while len(work) & (len(work) - 1):
        work.append(zero)
    for _ in range(vs.bit_length() - 1):
        if len(work) > 1:
            work = [_uzp_add(work[i], work[i + 1]) for i in range(0, len(work), 2)]
        else:
            work = [_uzp_add(work[0], work[0])]
    return work[0]
