"""Constructive discrete mass flows on boxes of Z^d, in exact rational arithmetic.

A flow assigns a weight to each oriented nearest-neighbor edge (x, x + e_j);
the weight of the reverse edge is its negative.  The divergence at a site is
the net inflow, so a flow "connecting mu to nu" has divergence nu - mu at
every site.  All boxes are zero-based: Lambda_l = {0, ..., l-1}^d.

Weights are exact rationals (gmpy2.mpq when available, fractions.Fraction
otherwise) so divergence identities can be asserted exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product
from typing import Iterator

try:
    from gmpy2 import mpq as _RAT
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    _RAT = Fraction

__all__ = [
    "RAT",
    "exact_rational",
    "Kernel",
    "Flow",
    "FlowCost",
    "flow_1d",
    "shell_flow",
    "box_flow",
    "uniform_kernel",
    "pyramid_kernel",
    "pyramid_flow",
    "flow_cost",
    "telescope_check",
    "box_flow_cost_table",
    "g_d",
]


def RAT(num, den=1):
    """Exact rational from integers."""
    return _RAT(num, den)


def exact_rational(x):
    """Exact rational from an int, Fraction, mpq, or float (floats are dyadic)."""
    if isinstance(x, float):
        f = Fraction(x)
        return _RAT(f.numerator, f.denominator)
    if isinstance(x, Fraction):
        return _RAT(x.numerator, x.denominator)
    return _RAT(x)


def g_d(d: int, ell: int) -> float:
    """Scaling profile of the box-flow cost: ell, log(ell), or 1 by dimension."""
    if d == 1:
        return float(ell)
    if d == 2:
        return math.log(ell) if ell > 1 else 1.0
    return 1.0


@dataclass(frozen=True)
class Kernel:
    """Probability kernel on Z^d with finite support and exact weights."""

    d: int
    weights: dict  # coords tuple -> rational

    def total_mass(self):
        return sum(self.weights.values(), RAT(0))

    def support(self):
        return set(self.weights)

    def __post_init__(self):
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("kernel weights must be nonnegative")
        if self.total_mass() != 1:
            raise ValueError("kernel weights must sum to 1 exactly")


class Flow:
    """Antisymmetric edge weights, stored on positive orientations (x, x + e_j).

    Sites live in the box {0, ..., box-1}^d; edges are keyed internally by
    flat index for compactness.
    """

    __slots__ = ("d", "box", "_w")

    def __init__(self, d: int, box: int):
        self.d = d
        self.box = box  # sites have coordinates in [0, box)
        self._w = {}  # (flat(x) * d + axis) -> rational weight of (x, x+e_axis)

    # -- indexing helpers ------------------------------------------------
    def _flat(self, coords) -> int:
        s = 0
        for c in coords:
            if not (0 <= c < self.box):
                raise ValueError(f"site {coords} outside box of side {self.box}")
            s = s * self.box + c
        return s

    def _coords(self, flat: int) -> tuple[int, ...]:
        out = []
        for _ in range(self.d):
            out.append(flat % self.box)
            flat //= self.box
        return tuple(reversed(out))

    # -- mutation ----------------------------------------------------------
    def add(self, coords, axis: int, value) -> None:
        key = self._flat(coords) * self.d + axis
        w = self._w.get(key)
        w = value if w is None else w + value
        if w == 0:
            self._w.pop(key, None)
        else:
            self._w[key] = w

    def add_scaled(self, other: "Flow", factor, offset=None) -> None:
        """In-place self += factor * (other translated by offset)."""
        off = tuple(offset) if offset is not None else (0,) * self.d
        for coords, axis, w in other.edges():
            shifted = tuple(c + o for c, o in zip(coords, off))
            self.add(shifted, axis, factor * w)

    def negated(self) -> "Flow":
        out = Flow(self.d, self.box)
        out._w = {k: -w for k, w in self._w.items()}
        return out

    # -- queries -----------------------------------------------------------
    def weight(self, coords, axis: int):
        """Weight of the oriented edge (coords, coords + e_axis)."""
        return self._w.get(self._flat(coords) * self.d + axis, RAT(0))

    def edges(self) -> Iterator[tuple[tuple[int, ...], int, object]]:
        for key, w in self._w.items():
            yield self._coords(key // self.d), key % self.d, w

    def edge_count(self) -> int:
        return len(self._w)

    def divergence(self) -> dict:
        """Net inflow per site: sum of phi(y, x) over neighbors y of x."""
        div = {}
        for key, w in self._w.items():
            flat, axis = divmod(key, self.d)
            u = self._coords(flat)
            v = list(u)
            v[axis] += 1
            v = tuple(v)
            div[u] = div.get(u, RAT(0)) - w
            div[v] = div.get(v, RAT(0)) + w
        return {s: w for s, w in div.items() if w != 0}

    def support_box_max(self) -> int:
        """Largest coordinate appearing among edge endpoints."""
        best = 0
        for coords, axis, _ in self.edges():
            best = max(best, max(coords) , coords[axis] + 1)
        return best

    def cost_exact(self):
        """Single-orientation cost: sum of w^2 over stored edges, exact."""
        return sum((w * w for w in self._w.values()), RAT(0))

    def max_abs_weight(self):
        return max((abs(w) for w in self._w.values()), default=RAT(0))


@dataclass(frozen=True)
class FlowCost:
    """Both cost readings: over stored orientations and over ordered pairs."""

    single: object  # rational
    double: object  # rational, = 2 * single

    def single_float(self) -> float:
        return float(self.single)

    def double_float(self) -> float:
        return float(self.double)


def flow_cost(f: Flow) -> FlowCost:
    s = f.cost_exact()
    return FlowCost(single=s, double=2 * s)


def flow_1d(ell: int) -> Flow:
    """1-d flux from a point mass at 0 to the uniform distribution on {1,...,ell}.

    Edge (k, k+1) carries weight (ell - k)/ell for 0 <= k < ell.
    """
    if ell < 1:
        raise ValueError("box size must be >= 1")
    f = Flow(1, ell + 1)
    for k in range(ell):
        f.add((k,), 0, RAT(ell - k, ell))
    return f


def _corner_sets(d: int, k: int):
    """A_j: points of {0,...,k-1}^d with exactly j coordinates equal to k-1."""
    side = k - 1
    sets = {j: [] for j in range(d + 1)}
    for x in product(range(k), repeat=d):
        j = sum(1 for c in x if c == side)
        sets[j].append(x)
    return sets


def _accumulate_shell(flow: Flow, k: int, d: int, sign: int = 1) -> None:
    """Add the stage construction of the shell flow U_{Lambda_k} -> U_{Lambda_{k-1}}.

    Stage j spreads the accumulated mass sitting on A_j (own mass plus
    everything received from A_d ... A_{j+1}) from each of its points
    equally (m/j per segment) down the j adjacent segments of A_{j-1},
    using the 1-d flux profile along each segment.
    """
    side = k - 1
    kd = k**d
    seg = k - 1  # segment length
    strides = [flow.box ** (d - 1 - a) for a in range(d)]
    # |A_j| = C(d, j) * (k-1)^(d-j); cumulative mass above and including stage j
    sizes = [math.comb(d, j) * (k - 1) ** (d - j) for j in range(d + 1)]
    for j in range(d, 0, -1):
        mass_upto = sum(sizes[i] for i in range(j, d + 1))  # * (1/k^d)
        m = RAT(sign * mass_upto, kd * sizes[j])  # per-point mass at stage j
        share = m / j
        # per-edge weights of one point-to-segment spread: stored on the
        # positive orientation (u, u+e_axis), mass moves toward low corner
        seg_w = [-(share * RAT(seg - t, seg)) for t in range(seg)]
        for full_axes in combinations(range(d), j):
            free_axes = [a for a in range(d) if a not in full_axes]
            for free_vals in product(range(k - 1), repeat=d - j):
                x = [side] * d
                for a, v in zip(free_axes, free_vals):
                    x[a] = v
                base = flow._flat(tuple(x))
                for c in full_axes:
                    stride = strides[c]
                    for t in range(seg):
                        key = (base - (t + 1) * stride) * d + c
                        w = flow._w.get(key)
                        w = seg_w[t] if w is None else w + seg_w[t]
                        if w == 0:
                            flow._w.pop(key, None)
                        else:
                            flow._w[key] = w


def shell_flow(k: int, d: int) -> Flow:
    """Flow from U_{Lambda_k} to U_{Lambda_{k-1}}, per-edge weight <= d (2/k)^d."""
    if k < 2:
        raise ValueError("shell index must be >= 2")
    if d < 2:
        raise ValueError("shell flows are defined for dimension >= 2")
    f = Flow(d, k)
    _accumulate_shell(f, k, d)
    return f


def box_flow(ell: int, d: int) -> Flow:
    """Flow from the point mass at the zero corner to U on {0,...,ell-1}^d.

    d = 1 delegates to the 1-d flux profile (segment length ell-1 scaled by
    (ell-1)/ell); d >= 2 sums the negated shell flows for k = 2..ell.
    """
    if ell < 1:
        raise ValueError("box size must be >= 1")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    f = Flow(d, max(ell, 1))
    if ell == 1:
        return f
    if d == 1:
        base = flow_1d(ell - 1)
        f.add_scaled(base, RAT(ell - 1, ell))
        return f
    for k in range(2, ell + 1):
        _accumulate_shell(f, k, d, sign=-1)
    return f


def box_flow_cost_table(d: int, ell_grid) -> list[tuple[int, object]]:
    """Exact single-orientation costs of box_flow(ell, d) for each ell in the grid.

    Shares the shell accumulation across grid points (the box flow at ell
    is the partial sum of shells up to ell).
    """
    grid = sorted(set(int(x) for x in ell_grid))
    if not grid or grid[0] < 1:
        raise ValueError("grid entries must be >= 1")
    out = []
    if d == 1:
        for ell in grid:
            out.append((ell, box_flow(ell, 1).cost_exact()))
        return out
    acc = Flow(d, grid[-1])
    k = 2
    for ell in grid:
        while k <= ell:
            _accumulate_shell(acc, k, d, sign=-1)
            k += 1
        out.append((ell, acc.cost_exact()))
    return out


def uniform_kernel(ell: int, d: int) -> Kernel:
    """Uniform probability kernel on {0,...,ell-1}^d."""
    if ell < 1:
        raise ValueError("box size must be >= 1")
    w = RAT(1, ell**d)
    return Kernel(d, {x: w for x in product(range(ell), repeat=d)})


def pyramid_kernel(ell: int, d: int) -> Kernel:
    """Self-convolution of the uniform kernel; supported in {0,...,2ell-2}^d.

    Product structure: the d-dim convolution is the product of 1-d triangle
    profiles t(m) = (ell - |m - (ell-1)|)/ell^2.
    """
    if ell < 1:
        raise ValueError("box size must be >= 1")
    tri = [RAT(ell - abs(m - (ell - 1)), ell * ell) for m in range(2 * ell - 1)]
    weights = {}
    for x in product(range(2 * ell - 1), repeat=d):
        w = RAT(1)
        for c in x:
            w = w * tri[c]
        weights[x] = w
    return Kernel(d, weights)


def pyramid_flow(ell: int, d: int) -> Flow:
    """Flow from the point mass at 0 to the pyramid kernel q_ell.

    psi = phi + sum_y p(y) (phi translated by y), with phi the zero-anchored
    box flow; support stays inside {0,...,2ell-2}^d.
    """
    if ell < 1:
        raise ValueError("box size must be >= 1")
    phi = box_flow(ell, d)
    psi = Flow(d, max(2 * ell - 1, 2))
    psi.add_scaled(phi, RAT(1))
    p = RAT(1, ell**d)
    for y in product(range(ell), repeat=d):
        psi.add_scaled(phi, p, offset=y)
    return psi


def telescope_check(config, x: int, ell: int, rho) -> object:
    """Exact residual of the pyramid-flow telescoping identity at site x.

    Evaluates etabar_x - (etabar * reflected q_ell)_x
    - sum_j sum_y psi_{y,y+e_j} (etabar_{x+y} - etabar_{x+y+e_j})
    on the torus; the contract is a residual of exactly zero whenever the
    torus is large enough that the pyramid support does not wrap (n > 2l+1).
    """
    g = config.geometry
    if g.n <= 2 * ell + 1:
        raise ValueError(
            f"torus side {g.n} too small for box size {ell} (need n > 2l+1)"
        )
    r = exact_rational(rho)
    if not (0 < r < 1):
        raise ValueError("density must lie in (0,1)")
    occ = config.occupancy

    def etabar(site):
        return int(occ[site]) - r

    q = pyramid_kernel(ell, g.d)
    conv = RAT(0)
    for y, w in q.weights.items():
        conv += w * etabar(g.shift(x, y))
    psi = pyramid_flow(ell, g.d)
    transport = RAT(0)
    for y, axis, w in psi.edges():
        site = g.shift(x, y)
        step = [0] * g.d
        step[axis] = 1
        site_next = g.shift(site, step)
        transport += w * (etabar(site) - etabar(site_next))
    return etabar(x) - conv - transport
