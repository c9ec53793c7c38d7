"""Deterministic per-bond randomness.

Every bond status is a pure keyed hash of (seed, sample_id, bond key), so the
infinite-lattice exploration can reveal bonds lazily in any order, repeated
queries agree bit-for-bit, and thresholding the same uniforms at different p
gives a monotone common-random-numbers coupling.

The hash is a splitmix64 finalizer chain over the bond's canonical encoding
(coordinate count, then the coordinates of both endpoints, then an optional
re-randomization tag). The scalar and numpy paths implement the identical
function; tests assert bit equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_AUX_DOMAIN = 0xD6E8FEB86659FD93  # separates auxiliary draws from bond draws

# Purpose codes for auxiliary uniforms (point draws, edge-skip streams).
PURPOSE_POINT = 1
PURPOSE_ER = 2
PURPOSE_ER_NAIVE = 3

_INV53 = 2.0**-53


def mix64(x: int) -> int:
    """splitmix64 finalizer on a 64-bit word."""
    x &= MASK64
    x ^= x >> 30
    x = (x * _M1) & MASK64
    x ^= x >> 27
    x = (x * _M2) & MASK64
    x ^= x >> 31
    return x


def stream_key(seed: int, sample_id: int) -> int:
    """64-bit key of one Monte Carlo replicate."""
    return mix64((mix64(seed & MASK64) + ((sample_id & MASK64) * GOLDEN & MASK64)) & MASK64)


@dataclass(frozen=True)
class RandomStream:
    """One replicate's bond-uniform family, addressed by (seed, sample_id)."""

    seed: int
    sample_id: int
    key: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "key", stream_key(self.seed, self.sample_id))


def bond_fold(coords: tuple[int, ...], tag: int = 0) -> int:
    """Fold a bond's flattened endpoint coordinates into one 64-bit word.

    The fold starts from the coordinate count, so keys of different arity
    never collide structurally; tag != 0 derives an independent family for
    the same bond (used when a bond is re-randomized in stage two of the
    coupled exploration). Coordinates enter as 64-bit two's complement;
    explorations keep coordinates many orders of magnitude below 2**63.
    """
    f = mix64(GOLDEN ^ len(coords))
    for c in coords:
        f = mix64(f ^ (c & MASK64))
    if tag:
        f = mix64(f ^ ((tag * GOLDEN) & MASK64))
    return f


def bond_uniform(stream: RandomStream, bond, tag: int = 0) -> float:
    """Uniform in [0,1) with 53-bit resolution, pure in (stream, bond, tag)."""
    return (mix64(stream.key ^ bond_fold(bond[0] + bond[1], tag)) >> 11) * _INV53


def is_occupied(stream: RandomStream, bond, p: float, tag: int = 0) -> bool:
    """Whether the bond is occupied at parameter p; monotone in p per bond."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0,1], got {p}")
    return bond_uniform(stream, bond, tag) < p


def aux_uniform(stream: RandomStream, purpose: int, *parts: int) -> float:
    """Uniform for non-bond draws (vertex picks, edge-skip jumps).

    Lives in a key space disjoint from bond uniforms so that experiment
    plumbing never consumes a bond's randomness.
    """
    f = mix64(_AUX_DOMAIN ^ purpose)
    for c in parts:
        f = mix64(f ^ (c & MASK64))
    return (mix64(stream.key ^ f) >> 11) * _INV53


def uniform_vertex_index(stream: RandomStream, volume: int, slot: int) -> int:
    """Index of a uniformly chosen domain vertex; slot separates draws within
    one replicate."""
    return int(aux_uniform(stream, PURPOSE_POINT, slot) * volume)


# ---------------------------------------------------------------------------
# Vectorized twins of the scalar path (bit-identical results).

_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_M1_NP = np.uint64(_M1)
_M2_NP = np.uint64(_M2)


def mix64_np(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer over a uint64 array (in place, returns x)."""
    x ^= x >> _U30
    x *= _M1_NP
    x ^= x >> _U27
    x *= _M2_NP
    x ^= x >> _U31
    return x


def stream_keys_np(seed: int, sample_ids: np.ndarray) -> np.ndarray:
    s0 = np.uint64(mix64(seed & MASK64))
    k = sample_ids.astype(np.uint64) * np.uint64(GOLDEN)
    k += s0
    return mix64_np(k)


def bond_folds_np(coord_matrix: np.ndarray, tag: int = 0) -> np.ndarray:
    """Fold a (n_bonds, n_coords) integer matrix column by column.

    Matches bond_fold applied row-wise.
    """
    n, width = coord_matrix.shape
    f = np.full(n, mix64(GOLDEN ^ width), dtype=np.uint64)
    for j in range(width):
        f ^= coord_matrix[:, j].astype(np.int64).view(np.uint64)
        mix64_np(f)
    if tag:
        f ^= np.uint64((tag * GOLDEN) & MASK64)
        mix64_np(f)
    return f


def uniforms_np(keys, folds) -> np.ndarray:
    """Uniforms for key/fold arrays (either may be scalar, numpy broadcasting)."""
    h = np.bitwise_xor(keys, folds).astype(np.uint64, copy=True)
    return (mix64_np(h) >> _U11) * _INV53


def aux_uniforms_np(stream: RandomStream, purpose: int, counters: np.ndarray) -> np.ndarray:
    """Vectorized aux_uniform over a counter array (bit-identical)."""
    f = counters.astype(np.uint64) ^ np.uint64(mix64(_AUX_DOMAIN ^ purpose))
    mix64_np(f)
    f ^= np.uint64(stream.key)
    return (mix64_np(f) >> _U11) * _INV53
