"""Second-order cone towers for geometric means and the cone K3_p.

K3_p = {(u, v, t) >= 0 : v^{p/(p-2)} <= t * u^{2/(p-2)}} for rational p > 2.
With 1/p = a/b this reads v^b <= u^{2a} t^{b-2a}, which is a geometric-mean
inequality over 2^k copies of (u, t, v) and hence a binary tree of rotated
second-order cones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .tensor import RationalExponent, as_exponent
from .utils.cache import cache
from .utils.errors import ValidationError


class RotatedPair(NamedTuple):
    """‖(w, (x - y)/2)‖₂ <= (x + y)/2, i.e. w² <= x·y with x, y >= 0."""

    w: int
    x: int
    y: int


class LinearLe(NamedTuple):
    """w <= x"""

    w: int
    x: int


class Nonneg(NamedTuple):
    w: int


@dataclass(frozen=True)
class ConeBlock:
    """A relocatable set of cone constraints.

    Constraints refer to local handles: ``0 .. len(externals) - 1`` stand for
    the bound external variables, the rest for ``num_aux`` auxiliary variables
    allocated when the block is added to a program.
    """

    externals: tuple
    num_aux: int
    aux_names: tuple
    constraints: tuple

    def rebind(self, externals):
        externals = tuple(externals)
        if len(externals) != len(self.externals):
            raise ValidationError(
                f"block expects {len(self.externals)} external handles, got {len(externals)}"
            )
        return ConeBlock(externals, self.num_aux, self.aux_names, self.constraints)

    def resolve(self, aux_handles):
        """Constraints with local handles replaced by program handles."""
        table = list(self.externals) + list(aux_handles)
        out = []
        for con in self.constraints:
            out.append(type(con)(*(table[h] for h in con)))
        return out

    def counts(self):
        tally = {"soc": 0, "linear": 0, "nonneg": 0}
        for con in self.constraints:
            if isinstance(con, RotatedPair):
                tally["soc"] += 1
            elif isinstance(con, LinearLe):
                tally["linear"] += 1
            else:
                tally["nonneg"] += 1
        return tally


def rational_decompose(p):
    """(a, b, k) with 1/p = a/b in lowest terms and k = ⌈log₂(b+1)⌉."""
    r = RationalExponent.parse(p).require_above_two()
    # 2^k >= b + 1 > 2^(k-1)
    k = r.b.bit_length()
    return r.a, r.b, k


def theta(p):
    p = as_exponent(p)
    if not p > 2:
        raise ValidationError("p must exceed 2 and be rational")
    return (2 / p) ** (2 / (p - 2)) - (2 / p) ** (p / (p - 2))


def _tree(num_externals, root, k, leaf):
    """Geometric-mean tree of depth k over local handles.

    ``root`` is the local handle bounded by the mean and ``leaf(w, j)`` emits
    the constraint tying the j-th (1-based) deepest node ``w`` to the inputs.
    """
    sizes = [2**i for i in range(1, k)]
    offsets = []
    next_handle = num_externals
    for size in sizes:
        offsets.append(next_handle)
        next_handle += size

    def z(i, j):
        # z^i_j, 1-based like the displayed system
        return offsets[i - 1] + j - 1

    names = tuple(f"z{i}_{j}" for i in range(1, k) for j in range(1, 2**i + 1))
    constraints = [Nonneg(h) for h in range(num_externals, next_handle)]

    if k == 1:
        constraints.append(leaf(root, 1))
        return len(names), names, constraints

    constraints.append(RotatedPair(root, z(1, 1), z(1, 2)))
    for i in range(1, k - 1):
        for j in range(1, 2**i + 1):
            constraints.append(RotatedPair(z(i, j), z(i + 1, 2 * j - 1), z(i + 1, 2 * j)))
    for j in range(1, 2 ** (k - 1) + 1):
        constraints.append(leaf(z(k - 1, j), j))

    return len(names), names, constraints


def geo_mean_block(x_handles, y_handle):
    """y <= (∏ x_i)^{1/2^k} for 2^k handles x."""
    x_handles = tuple(x_handles)
    count = len(x_handles)
    if count < 2 or count & (count - 1):
        raise ValidationError(f"geo_mean_block needs a power of two (>= 2) inputs, got {count}")
    k = count.bit_length() - 1

    externals = x_handles + (y_handle,)
    root = count

    def leaf(w, j):
        left, right = 2 * j - 2, 2 * j - 1
        if x_handles[left] == x_handles[right]:
            return LinearLe(w, left)
        return RotatedPair(w, left, right)

    num_aux, names, constraints = _tree(len(externals), root, k, leaf)
    return ConeBlock(externals, num_aux, names, tuple(constraints))


@cache(maxsize=32)
def k3p_template(p):
    a, b, k = rational_decompose(p)
    U, V, T = 0, 1, 2
    half_down, half_up = b // 2, (b + 1) // 2

    def leaf(w, j):
        if j <= a:
            return LinearLe(w, U)
        if j <= half_down:
            return LinearLe(w, T)
        if j <= half_up:
            # only reached for odd b
            return RotatedPair(w, T, V)
        return LinearLe(w, V)

    num_aux, names, constraints = _tree(3, V, k, leaf)
    constraints = [Nonneg(U), Nonneg(V), Nonneg(T)] + constraints
    return ConeBlock((U, V, T), num_aux, names, tuple(constraints))


def k3p_block(u_handle, v_handle, t_handle, p):
    """(u, v, t) ∈ K3_p as a block; the template is cached per exponent."""
    return k3p_template(str(RationalExponent.parse(p))).rebind((u_handle, v_handle, t_handle))


def k3p_gap(u, v, t, p):
    """t·u^{2/(p-2)} - v^{p/(p-2)}; nonnegative exactly on K3_p for u, v, t >= 0."""
    p = as_exponent(p)
    return t * u ** (2 / (p - 2)) - v ** (p / (p - 2))


def tree_shape(k):
    """Expected (leaves, internal, root) constraint counts for a depth-k tree."""
    if k == 1:
        return 1, 0, 0
    return 2 ** (k - 1), sum(2**i for i in range(1, k - 1)), 1


__all__ = [
    "ConeBlock",
    "LinearLe",
    "Nonneg",
    "RotatedPair",
    "geo_mean_block",
    "k3p_block",
    "k3p_gap",
    "k3p_template",
    "rational_decompose",
    "theta",
    "tree_shape",
]
