"""Dense tensors and the multilinear algebra the norm algorithms run on.

Modes are numbered from 0. Data is stored row-major (last index fastest) and
every multi-index enumeration in this module follows that order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from pathlib import Path

import numpy as np

from .utils.errors import ValidationError

MAX_DENOMINATOR = 64


@dataclass(frozen=True)
class RationalExponent:
    """An exponent p stored through 1/p = a/b in lowest terms."""

    a: int
    b: int

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValidationError("p must be a positive rational b/a")
        if math.gcd(self.a, self.b) != 1:
            raise ValidationError(f"{self.b}/{self.a} is not in lowest terms")

    @classmethod
    def from_fraction(cls, frac):
        frac = Fraction(frac)
        if frac <= 0:
            raise ValidationError("p must be a positive rational b/a")
        inv = 1 / frac
        return cls(inv.numerator, inv.denominator)

    @classmethod
    def parse(cls, value):
        """Parse ``"b/a"``, an integer, a decimal string or a float.

        Decimals are accepted only when they are exactly a fraction with
        denominator at most 64; anything else is ambiguous and rejected.
        """
        if isinstance(value, RationalExponent):
            return value
        if isinstance(value, Fraction):
            return cls.from_fraction(value)
        if isinstance(value, int):
            return cls.from_fraction(Fraction(value))

        try:
            exact = Fraction(str(value).strip()) if isinstance(value, str) else Fraction(value)
        except (ValueError, ZeroDivisionError, OverflowError):
            raise ValidationError(f"could not read p from {value!r}; use b/a or a decimal") from None

        if exact.denominator <= MAX_DENOMINATOR:
            return cls.from_fraction(exact)

        near = exact.limit_denominator(MAX_DENOMINATOR)
        if abs(float(near) - float(exact)) <= 1e-12:
            return cls.from_fraction(near)

        raise ValidationError(
            f"p = {value} is not an exact fraction with denominator <= {MAX_DENOMINATOR}; "
            "p must be rational, write it as b/a"
        )

    @property
    def fraction(self):
        return Fraction(self.b, self.a)

    @property
    def value(self):
        return self.b / self.a

    @property
    def conjugate(self):
        # 1/q = 1 - a/b
        if self.b == self.a:
            return math.inf
        return self.b / (self.b - self.a)

    def require_above_two(self):
        if not self.b > 2 * self.a:
            raise ValidationError("p must exceed 2 and be rational")
        return self

    def __str__(self):
        return str(self.b) if self.a == 1 else f"{self.b}/{self.a}"


def as_exponent(p):
    """Float value of ``p`` given as a RationalExponent, number, or string."""
    if isinstance(p, RationalExponent):
        return p.value
    if isinstance(p, str):
        if p.strip().lower() in ("inf", "infinity"):
            return math.inf
        return RationalExponent.parse(p).value
    return float(p)


def conjugate(p):
    p = as_exponent(p)
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1)


@dataclass(frozen=True)
class ModePartition:
    row_modes: tuple
    col_modes: tuple

    def __post_init__(self):
        object.__setattr__(self, "row_modes", tuple(int(k) for k in self.row_modes))
        object.__setattr__(self, "col_modes", tuple(int(k) for k in self.col_modes))

    def validate(self, order):
        rows, cols = set(self.row_modes), set(self.col_modes)
        if not rows or not cols:
            raise ValidationError("both sides of a mode partition must be nonempty")
        if len(rows) != len(self.row_modes) or len(cols) != len(self.col_modes):
            raise ValidationError("a mode partition may not repeat a mode")
        if rows & cols:
            raise ValidationError("row and column modes must be disjoint")
        if rows | cols != set(range(order)):
            raise ValidationError(f"row and column modes must cover modes 0..{order - 1}")
        return self


class DenseTensor:
    """An immutable order-d real tensor."""

    __slots__ = ("shape", "data")

    def __init__(self, shape, data):
        shape = tuple(int(n) for n in shape)
        if len(shape) < 1:
            raise ValidationError("a tensor needs at least one mode")
        if any(n < 1 for n in shape):
            raise ValidationError(f"every dimension must be positive, got {shape}")

        data = np.array(data, dtype=np.float64).ravel()
        if data.size != math.prod(shape):
            raise ValidationError(
                f"shape {shape} needs {math.prod(shape)} entries, got {data.size}"
            )
        data.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)

    def __setattr__(self, name, value):
        raise AttributeError("DenseTensor is immutable")

    @classmethod
    def from_array(cls, array):
        array = np.asarray(array, dtype=np.float64)
        return cls(array.shape, array.ravel())

    @property
    def order(self):
        return len(self.shape)

    @property
    def array(self):
        return self.data.reshape(self.shape)

    def frobenius(self):
        return float(np.linalg.norm(self.data))

    def permuted(self, axes):
        return DenseTensor.from_array(np.transpose(self.array, axes))

    def __eq__(self, other):
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))

    def __repr__(self):
        return f"<DenseTensor shape={self.shape}>"

    # serialization

    def to_dict(self):
        return {"shape": list(self.shape), "data": self.data.tolist()}

    @classmethod
    def from_dict(cls, payload):
        try:
            return cls(payload["shape"], payload["data"])
        except (KeyError, TypeError):
            raise ValidationError("a tensor document needs 'shape' and 'data'") from None

    def to_bytes(self):
        # <u4 order, <u4 dims..., <f8 data
        header = np.array([self.order, *self.shape], dtype="<u4")
        return header.tobytes() + self.data.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, raw):
        if len(raw) < 4:
            raise ValidationError("truncated tensor header")
        order = int(np.frombuffer(raw, dtype="<u4", count=1)[0])
        head = 4 * (order + 1)
        if len(raw) < head:
            raise ValidationError("truncated tensor header")
        shape = tuple(int(n) for n in np.frombuffer(raw, dtype="<u4", count=order, offset=4))
        body = np.frombuffer(raw, dtype="<f8", offset=head)
        return cls(shape, body)

    def save(self, path):
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(json.dumps(self.to_dict()), encoding="utf-8")
        else:
            path.write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.suffix == ".json":
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        return cls.from_bytes(path.read_bytes())


def as_tensor(obj):
    if isinstance(obj, DenseTensor):
        return obj
    return DenseTensor.from_array(obj)


def lp_norm(x, p):
    """(Σ|x_i|^p)^{1/p}, or max|x_i| for p = inf."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValidationError("lp_norm of an empty vector")
    p = as_exponent(p)
    if p < 1:
        raise ValidationError(f"lp_norm needs p >= 1, got {p}")

    a = np.abs(x)
    top = a.max()
    if math.isinf(p) or top == 0:
        return float(top)
    return float(top * np.sum((a / top) ** p) ** (1.0 / p))


def lp_normalize(x, p):
    x = np.asarray(x, dtype=np.float64)
    norm = lp_norm(x, p)
    if norm == 0:
        raise ValidationError("cannot normalize the zero vector")
    return x / norm


def mode_product(T, k, x):
    """Σ_i x_i T^{(k)}_i, an order d-1 tensor (a float when T is a vector)."""
    T = as_tensor(T)
    x = np.asarray(x, dtype=np.float64).ravel()
    if not 0 <= k < T.order:
        raise ValidationError(f"mode {k} out of range for order {T.order}")
    if x.size != T.shape[k]:
        raise ValidationError(f"mode {k} has dimension {T.shape[k]}, vector has {x.size}")

    out = np.tensordot(T.array, x, axes=([k], [0]))
    if T.order == 1:
        return float(out)
    return DenseTensor.from_array(out)


def contract_leading(array, xs):
    """Contract the leading ``len(xs)`` modes of a raw array with ``xs``."""
    out = np.asarray(array)
    for x in xs:
        out = np.tensordot(np.asarray(x, dtype=np.float64), out, axes=([0], [0]))
    return out


def multilinear_form(T, xs):
    T = as_tensor(T)
    if len(xs) != T.order:
        raise ValidationError(f"need {T.order} vectors, got {len(xs)}")
    for k, x in enumerate(xs):
        if np.asarray(x).size != T.shape[k]:
            raise ValidationError(
                f"mode {k} has dimension {T.shape[k]}, vector has {np.asarray(x).size}"
            )
    return float(contract_leading(T.array, xs))


def unfold(T, part):
    T = as_tensor(T)
    part.validate(T.order)
    rows = math.prod(T.shape[k] for k in part.row_modes)
    cols = math.prod(T.shape[k] for k in part.col_modes)
    axes = part.row_modes + part.col_modes
    return np.transpose(T.array, axes).reshape(rows, cols)


def fold(matrix, shape, part):
    """Inverse of :func:`unfold`."""
    part.validate(len(shape))
    axes = part.row_modes + part.col_modes
    permuted = np.asarray(matrix).reshape([shape[k] for k in axes])
    return DenseTensor.from_array(np.transpose(permuted, np.argsort(axes)))


def slice_partition(T, i, j):
    """Matrices T[..., :, ..., :, ...] over modes (i, j), fixed indices row-major."""
    T = as_tensor(T)
    if i == j:
        raise ValidationError("slice modes must differ")
    for k in (i, j):
        if not 0 <= k < T.order:
            raise ValidationError(f"mode {k} out of range for order {T.order}")

    others = [k for k in range(T.order) if k not in (i, j)]
    stacked = np.transpose(T.array, others + [i, j]).reshape(-1, T.shape[i], T.shape[j])
    return list(stacked)


def outer(*vectors):
    return reduce(np.multiply.outer, [np.asarray(v, dtype=np.float64) for v in vectors])


def kron(x, y):
    return np.kron(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))


def append(x, y):
    return np.concatenate([np.asarray(x, dtype=np.float64).ravel(), np.asarray(y, dtype=np.float64).ravel()])


def dedupe_rows(vectors):
    """Drop exact duplicate rows, keeping first occurrences in order."""
    vectors = np.asarray(vectors, dtype=np.float64)
    seen = set()
    keep = []
    for index, row in enumerate(vectors + 0.0):  # folds -0.0 into 0.0
        key = row.tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(index)
    return vectors[keep]


def _pairwise(op, xs, ys):
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    return dedupe_rows([op(x, y) for x in xs for y in ys])


def kron_set(xs, ys):
    return _pairwise(kron, xs, ys)


def append_set(xs, ys):
    return _pairwise(append, xs, ys)
