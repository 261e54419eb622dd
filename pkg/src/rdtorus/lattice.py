"""Torus geometry, occupancy configurations, centered monomials, sparse partitions.

Sites of the d-dimensional discrete torus (side n) are indexed in row-major
order: the flat index of coordinates (x_0, ..., x_{d-1}) is
``((x_0 * n + x_1) * n + ...)``.  All site arithmetic wraps mod n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

__all__ = [
    "TorusGeometry",
    "Configuration",
    "OffsetSet",
    "SparsePartition",
    "build_torus",
    "swap_sites",
    "flip_site",
    "centered_monomial",
    "sparse_partition",
]


@dataclass(frozen=True)
class TorusGeometry:
    """Discrete torus (Z/nZ)^d with canonical row-major site ordering."""

    d: int
    n: int

    @property
    def size(self) -> int:
        return self.n**self.d

    def coords(self, site: int) -> tuple[int, ...]:
        out = []
        for _ in range(self.d):
            out.append(site % self.n)
            site //= self.n
        return tuple(reversed(out))

    def index(self, coords) -> int:
        site = 0
        for c in coords:
            site = site * self.n + (c % self.n)
        return site

    def shift(self, site: int, offset) -> int:
        """Site at position coords(site) + offset, wrapped mod n."""
        c = self.coords(site)
        return self.index(tuple(ci + oi for ci, oi in zip(c, offset)))

    def neighbor(self, site: int, axis: int, step: int = 1) -> int:
        off = [0] * self.d
        off[axis] = step
        return self.shift(site, off)

    def neighbors(self, site: int) -> list[int]:
        """The 2d nearest neighbors (with multiplicity when n = 2)."""
        out = []
        for j in range(self.d):
            out.append(self.neighbor(site, j, +1))
            out.append(self.neighbor(site, j, -1))
        return out

    def neighbor_table(self) -> np.ndarray:
        """(size, 2d) int32 table, columns ordered +e_1, -e_1, +e_2, -e_2, ..."""
        tab = np.empty((self.size, 2 * self.d), dtype=np.int32)
        for x in range(self.size):
            tab[x, :] = self.neighbors(x)
        return tab

    def wrap_distance(self, x: int, y: int) -> int:
        """L-infinity distance on the torus (coordinate-wise wrap-around)."""
        cx, cy = self.coords(x), self.coords(y)
        best = 0
        for a, b in zip(cx, cy):
            delta = abs(a - b)
            best = max(best, min(delta, self.n - delta))
        return best


def build_torus(d: int, n: int, state_space_cap: int | None = None) -> TorusGeometry:
    """Validated torus constructor.

    state_space_cap, when given, rejects geometries whose 2^(n^d)
    configuration space exceeds the cap (guards exact-enumeration use).
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if n < 2:
        raise ValueError(f"side length must be >= 2, got {n}")
    g = TorusGeometry(d=d, n=n)
    if state_space_cap is not None and g.size > state_space_cap.bit_length() - 1:
        raise ValueError(
            f"state space 2^{g.size} exceeds configured cap {state_space_cap}"
        )
    return g


class Configuration:
    """Occupancy bits, one per site.  Mutating operations return new values."""

    __slots__ = ("geometry", "occupancy")

    def __init__(self, geometry: TorusGeometry, occupancy) -> None:
        occ = np.asarray(occupancy, dtype=np.uint8)
        if occ.shape != (geometry.size,):
            raise ValueError(
                f"occupancy must have one bit per site ({geometry.size}), got shape {occ.shape}"
            )
        if np.any(occ > 1):
            raise ValueError("occupancy entries must be 0 or 1")
        self.geometry = geometry
        self.occupancy = occ

    @classmethod
    def empty(cls, geometry: TorusGeometry) -> "Configuration":
        return cls(geometry, np.zeros(geometry.size, dtype=np.uint8))

    @classmethod
    def full(cls, geometry: TorusGeometry) -> "Configuration":
        return cls(geometry, np.ones(geometry.size, dtype=np.uint8))

    @classmethod
    def from_key(cls, geometry: TorusGeometry, key: int) -> "Configuration":
        occ = np.fromiter(
            ((key >> i) & 1 for i in range(geometry.size)), dtype=np.uint8
        )
        return cls(geometry, occ)

    def state_key(self) -> int:
        """Full-state integer hash: bit i is the occupancy of site i."""
        key = 0
        for i, b in enumerate(self.occupancy):
            key |= int(b) << i
        return key

    def particle_count(self) -> int:
        return int(self.occupancy.sum())

    def copy(self) -> "Configuration":
        return Configuration(self.geometry, self.occupancy.copy())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Configuration)
            and self.geometry == other.geometry
            and bool(np.array_equal(self.occupancy, other.occupancy))
        )

    def __repr__(self) -> str:
        bits = "".join(str(int(b)) for b in self.occupancy)
        return f"Configuration(d={self.geometry.d}, n={self.geometry.n}, {bits})"


def swap_sites(c: Configuration, x: int, y: int) -> Configuration:
    """The configuration with the values at sites x and y exchanged."""
    if x == y:
        return c
    out = c.copy()
    out.occupancy[x], out.occupancy[y] = c.occupancy[y], c.occupancy[x]
    return out


def flip_site(c: Configuration, x: int) -> Configuration:
    """The configuration with the value at site x replaced by 1 - value."""
    out = c.copy()
    out.occupancy[x] ^= 1
    return out


@dataclass(frozen=True)
class OffsetSet:
    """Finite set of relative site offsets (d-vectors of integers)."""

    offsets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen = set(self.offsets)
        if len(seen) != len(self.offsets):
            raise ValueError("offsets must be distinct")

    @classmethod
    def make(cls, offsets, d: int | None = None) -> "OffsetSet":
        """Build from an iterable of offset vectors (plain ints allowed when d=1)."""
        norm = []
        for o in offsets:
            if isinstance(o, int):
                norm.append((o,))
            else:
                norm.append(tuple(int(v) for v in o))
        if d is not None:
            for o in norm:
                if len(o) != d:
                    raise ValueError(f"offset {o} does not match dimension {d}")
        return cls(tuple(sorted(norm)))

    def __len__(self) -> int:
        return len(self.offsets)

    def strictly_negative(self) -> bool:
        """All coordinates strictly negative (the Boltzmann-Gibbs hypothesis)."""
        return all(all(v < 0 for v in o) for o in self.offsets)


def centered_monomial(c: Configuration, offsets, x: int, rho) -> float:
    """Product of (eta_{x+a} - rho) over offsets a; the empty product is 1.

    rho may be a float or an exact rational (the arithmetic follows the
    operand types, so exact inputs give exact results).
    """
    if not (0 < rho < 1):
        raise ValueError(f"density must lie in (0,1), got {rho}")
    if isinstance(offsets, OffsetSet):
        offsets = offsets.offsets
    g = c.geometry
    result = 1
    for a in offsets:
        if isinstance(a, int):
            a = (a,)
        site = g.shift(x, a)
        result = result * (int(c.occupancy[site]) - rho)
    return result


@dataclass
class SparsePartition:
    """Partition of the torus into classes with pairwise wrap L-infinity distance >= k."""

    geometry: TorusGeometry
    k: int
    classes: list[frozenset[int]] = field(default_factory=list)

    def class_count(self) -> int:
        return len(self.classes)


def _sparse_classes_1d(n: int, k: int) -> list[list[int]]:
    # n = m*k + r: k arithmetic-progression classes of size m, plus r singletons.
    m, r = divmod(n, k)
    classes = [[j + i * k for i in range(m)] for j in range(k)]
    classes += [[m * k + i] for i in range(r)]
    return classes


def sparse_partition(g: TorusGeometry, k: int) -> SparsePartition:
    """k-sparse partition of the torus, by the inductive product construction.

    Base case (d=1) writes n = m*k + r and uses the k progressions
    {j, j+k, ..., j+(m-1)k} plus r singletons; higher d takes products of
    lower-dimensional classes.  Class count is at most (2k-1)^d.
    """
    if not (1 <= k <= g.n):
        raise ValueError(f"sparseness radius must satisfy 1 <= k <= n, got k={k}, n={g.n}")
    axis_classes = _sparse_classes_1d(g.n, k)
    classes = []
    for combo in product(axis_classes, repeat=g.d):
        members = frozenset(g.index(coords) for coords in product(*combo))
        classes.append(members)
    return SparsePartition(geometry=g, k=k, classes=classes)
