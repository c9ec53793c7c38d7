"""Torus and integer-lattice geometry.

The torus is the centered box {-floor(r/2), ..., ceil(r/2)-1}^d with periodic
adjacency; the same box embeds in Z^d, where vertices and bonds that differ by
a vector in r*Z^d are called r-equivalent. Vertices are plain coordinate
tuples so they can key sets and dicts directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

from .errors import InvalidSpec

Vertex = tuple[int, ...]
Bond = tuple[Vertex, Vertex]

NEAREST_NEIGHBOR = "nn"
SPREAD_OUT = "spread"


@dataclass(frozen=True)
class TorusSpec:
    """Dimension d, side length r, and adjacency model of one torus.

    model "nn" joins vertices differing by 1 (mod r) in one coordinate;
    model "spread" joins vertices at sup-norm distance 1..L (mod r).
    Side-length preconditions (r >= 3 nearest-neighbor, r >= 2L+1 spread-out)
    keep the torus degree equal to the Z^d degree and are enforced here.
    """

    d: int
    r: int
    model: str = NEAREST_NEIGHBOR
    L: int | None = None

    def __post_init__(self):
        if not isinstance(self.d, int) or self.d < 1:
            raise InvalidSpec(f"d must be a positive integer, got {self.d!r}")
        if not isinstance(self.r, int) or self.r < 1:
            raise InvalidSpec(f"r must be a positive integer, got {self.r!r}")
        if self.model == NEAREST_NEIGHBOR:
            if self.L is not None:
                raise InvalidSpec("L is only meaningful for the spread-out model")
            if self.r < 3:
                raise InvalidSpec(f"nearest-neighbor model requires r >= 3, got r={self.r}")
        elif self.model == SPREAD_OUT:
            if not isinstance(self.L, int) or self.L < 1:
                raise InvalidSpec(f"spread-out model requires integer L >= 1, got {self.L!r}")
            if self.r < 2 * self.L + 1:
                raise InvalidSpec(
                    f"spread-out model requires r >= 2L+1 = {2 * self.L + 1}, got r={self.r}"
                )
        else:
            raise InvalidSpec(f"unknown model {self.model!r}")

    @property
    def degree(self) -> int:
        if self.model == NEAREST_NEIGHBOR:
            return 2 * self.d
        return (2 * self.L + 1) ** self.d - 1

    @property
    def volume(self) -> int:
        return self.r**self.d

    @property
    def lo(self) -> int:
        """Smallest coordinate of the fundamental domain."""
        return -(self.r // 2)

    @property
    def hi(self) -> int:
        """Largest coordinate of the fundamental domain."""
        return self.lo + self.r - 1

    def in_domain(self, x: Vertex) -> bool:
        lo, hi = self.lo, self.hi
        return len(x) == self.d and all(lo <= c <= hi for c in x)

    def to_dict(self) -> dict:
        out = {"d": self.d, "r": self.r, "model": self.model}
        if self.L is not None:
            out["L"] = self.L
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TorusSpec":
        return cls(d=data["d"], r=data["r"], model=data.get("model", NEAREST_NEIGHBOR),
                   L=data.get("L"))


@lru_cache(maxsize=None)
def neighbor_offsets(spec: TorusSpec) -> tuple[Vertex, ...]:
    """All degree-many displacement vectors, in lexicographic order."""
    if spec.model == NEAREST_NEIGHBOR:
        offs = []
        for i in range(spec.d):
            for s in (-1, 1):
                off = [0] * spec.d
                off[i] = s
                offs.append(tuple(off))
    else:
        L = spec.L
        offs = [off for off in product(range(-L, L + 1), repeat=spec.d) if any(off)]
    return tuple(sorted(offs))


@lru_cache(maxsize=None)
def positive_offsets(spec: TorusSpec) -> tuple[Vertex, ...]:
    """Lexicographically positive half of the offsets; each undirected bond
    of the torus arises from exactly one (vertex, positive offset) pair."""
    return tuple(off for off in neighbor_offsets(spec) if off > (0,) * spec.d)


def canonical_class(x: Vertex, spec: TorusSpec) -> Vertex:
    """Representative of x's residue class mod r inside the fundamental domain."""
    lo, r = spec.lo, spec.r
    return tuple((c - lo) % r + lo for c in x)


def torus_neighbors(x: Vertex, spec: TorusSpec) -> list[Vertex]:
    """The degree-many torus neighbors of x, in a fixed deterministic order."""
    if not spec.in_domain(x):
        raise InvalidSpec(f"{x} is not in the fundamental domain of {spec}")
    lo, r = spec.lo, spec.r
    out = []
    for off in neighbor_offsets(spec):
        out.append(tuple((c + o - lo) % r + lo for c, o in zip(x, off)))
    return out


def zd_neighbors(x: Vertex, spec: TorusSpec) -> list[Vertex]:
    """The degree-many Z^d neighbors of x (no wrap-around)."""
    if len(x) != spec.d:
        raise InvalidSpec(f"vertex arity {len(x)} != d={spec.d}")
    return [tuple(c + o for c, o in zip(x, off)) for off in neighbor_offsets(spec)]


def normalize_bond(a: Vertex, b: Vertex) -> Bond:
    """Order the endpoints so the lexicographically smaller one comes first."""
    if a == b:
        raise InvalidSpec(f"bond endpoints must be distinct, got {a} twice")
    return (a, b) if a < b else (b, a)


def bond_equiv(b1: Bond, b2: Bond, spec: TorusSpec) -> bool:
    """True iff the two bonds differ by a single shift in r*Z^d."""
    r = spec.r
    (x1, y1), (x2, y2) = normalize_bond(*b1), normalize_bond(*b2)
    shift = tuple(a - b for a, b in zip(x1, x2))
    if any(s % r for s in shift):
        return False
    return tuple(a - b for a, b in zip(y1, y2)) == shift


def bond_canonical(b: Bond, spec: TorusSpec) -> Bond:
    """Class representative: shift so the first endpoint lies in the domain.

    Equivalent bonds map to the same key, and the map is idempotent. The
    second endpoint may lie outside the domain (wrap-around bonds).
    """
    e0, e1 = normalize_bond(*b)
    c0 = canonical_class(e0, spec)
    if c0 == e0:
        return (e0, e1)
    shift = tuple(a - b for a, b in zip(c0, e0))
    return (c0, tuple(c + s for c, s in zip(e1, shift)))


@lru_cache(maxsize=None)
def domain_vertices(spec: TorusSpec) -> tuple[Vertex, ...]:
    """All V vertices of the fundamental domain in lexicographic order."""
    return tuple(product(range(spec.lo, spec.hi + 1), repeat=spec.d))


@lru_cache(maxsize=None)
def vertex_index(spec: TorusSpec) -> dict[Vertex, int]:
    return {v: i for i, v in enumerate(domain_vertices(spec))}


@lru_cache(maxsize=None)
def torus_bonds(spec: TorusSpec) -> tuple[Bond, ...]:
    """Canonical keys of all V*degree/2 torus bonds.

    Enumerated per positive offset then per domain vertex; each r-equivalence
    class appears exactly once and each key is already canonical.
    """
    verts = domain_vertices(spec)
    bonds = []
    for off in positive_offsets(spec):
        for v in verts:
            bonds.append((v, tuple(c + o for c, o in zip(v, off))))
    return tuple(bonds)
