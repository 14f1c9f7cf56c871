"""Hitting sets of the unit ℓp-sphere.

A finite set H ⊂ S_p^n has hitting ratio τ when every x on the dual sphere
S_q^n has max_{v ∈ H} vᵀx >= τ. The builders below return sets together with
the ratio their construction certifies.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import hadamard
from scipy.special import gammaincinv

from .tensor import RationalExponent, as_exponent, conjugate, dedupe_rows, lp_norm
from .utils.errors import ValidationError

log = logging.getLogger("pnorms.covering")

DEFAULT_CAP = 10**6
NORM_TOL = 1e-12

# maximises the H_H ratio at p = 3 with beta = alpha + 1
EXPERIMENT_ALPHA = (5 + math.sqrt(33)) / 2


@dataclass(frozen=True)
class CoveringConstants:
    """Universal constants of the randomized construction.

    Only the structure of the bounds is known; the values are configuration.
    ``delta1`` enters the existence argument and is kept for provenance.
    """

    delta0: float = 1.0
    delta1: float = 1.0
    delta2: float = 0.1
    delta3: float = 20.0

    def to_dict(self):
        return {"delta0": self.delta0, "delta1": self.delta1, "delta2": self.delta2, "delta3": self.delta3}


def _p_label(p):
    try:
        return str(RationalExponent.parse(p))
    except ValidationError:
        return float(p)


@dataclass(frozen=True, eq=False)
class HittingSet:
    p: float
    n: int
    vectors: np.ndarray
    tau: float
    construction: dict
    probabilistic: bool = False
    confidence: float = None
    cardinality_bound: float = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] != self.n:
            raise ValidationError(f"hitting set vectors must be rows of length {self.n}")
        if vectors.shape[0] == 0:
            raise ValidationError("a hitting set needs at least one vector")
        if not 0 <= self.tau <= 1:
            raise ValidationError(f"hitting ratio must lie in [0, 1], got {self.tau}")

        p = as_exponent(self.p)
        norms = np.array([lp_norm(v, p) for v in vectors])
        worst = float(np.max(np.abs(norms - 1)))
        if worst > NORM_TOL:
            raise ValidationError(f"hitting set vectors must be unit in l{p} (off by {worst:.2e})")

        vectors.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "vectors", vectors)

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def cardinality(self):
        return self.vectors.shape[0]

    @property
    def q(self):
        return conjugate(self.p)

    @property
    def kind(self):
        return self.construction.get("kind")

    def __repr__(self):
        return f"<HittingSet {self.kind} n={self.n} p={_p_label(self.p)} m={len(self)} tau={self.tau:.4g}>"

    def to_dict(self):
        return {
            "p": _p_label(self.p),
            "n": self.n,
            "tau": self.tau,
            "construction": self.construction,
            "probabilistic": self.probabilistic,
            "confidence": self.confidence,
            "cardinality_bound": self.cardinality_bound,
            "vectors": self.vectors.tolist(),
        }

    @classmethod
    def from_dict(cls, payload):
        try:
            return cls(
                p=as_exponent(payload["p"]),
                n=int(payload["n"]),
                vectors=np.array(payload["vectors"], dtype=np.float64).reshape(-1, int(payload["n"])),
                tau=float(payload["tau"]),
                construction=payload["construction"],
                probabilistic=payload.get("probabilistic", False),
                confidence=payload.get("confidence"),
                cardinality_bound=payload.get("cardinality_bound"),
            )
        except KeyError as e:
            raise ValidationError(f"hitting set document is missing {e}") from None

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _normalized(vectors, p):
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.array([lp_norm(v, p) for v in vectors])
    return vectors / norms[:, None]


def _announce(H):
    log.info(f"built {H.kind} over R^{H.n}: {len(H)} vectors, tau={H.tau:.6g}")
    return H


def _check_p(p, lower=1.0, closed=False):
    p = as_exponent(p)
    if math.isinf(p) or p < lower or (p == lower and not closed):
        bracket = "[" if closed else "("
        raise ValidationError(f"p must lie in {bracket}{lower:g}, inf) here, got {p}")
    return p


# alpha-beta ratio family (H_B, H_H)


def mu(alpha, beta, p):
    p = as_exponent(p)
    return (alpha / (beta * (alpha + 1))) ** (1 / p) * (1 - 1 / alpha)


def nu(alpha, beta):
    gap = beta - alpha - 1
    tail = 1.0 if gap == 0 else ((beta - 1) / gap) ** (gap / (beta - 1))
    return (
        2 ** ((beta + alpha - 1) / (beta - 1))
        * alpha ** (-alpha / (beta - 1))
        * beta ** (alpha * beta / (beta - 1) ** 2)
        * tail
    )


def _check_alpha_beta(alpha, beta):
    if alpha < 1:
        raise ValidationError(f"alpha must be at least 1, got {alpha}")
    if beta < alpha + 1:
        raise ValidationError(f"beta must be at least alpha + 1, got alpha={alpha}, beta={beta}")


def hh_block_sizes(n, alpha, beta):
    """Block sizes (|I_1|, ..., |I_m|) of the partition pattern."""
    m = max(1, math.ceil(math.log(alpha * n) / math.log(beta) - 1e-12))
    rest = [math.floor(alpha * n / beta ** (j - 1) + 1e-12) for j in range(2, m + 1)]
    return [n - sum(rest)] + rest


def _count_level_patterns(n, sizes):
    # level-j coordinates (j >= 2) must fit in block j; level 1 fits anywhere
    ways = {n: 1}
    for cap in sizes[1:]:
        nxt = {}
        for remaining, count in ways.items():
            for c in range(min(cap, remaining) + 1):
                nxt[remaining - c] = nxt.get(remaining - c, 0) + count * math.comb(remaining, c)
        ways = nxt
    return sum(ways.values())


def _level_patterns(n, sizes):
    caps = [None] + list(sizes[1:])
    m = len(sizes)

    def walk(prefix, used):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for level in range(1, m + 1):
            if level > 1 and used[level - 1] >= caps[level - 1]:
                continue
            used[level - 1] += 1
            prefix.append(level)
            yield from walk(prefix, used)
            prefix.pop()
            used[level - 1] -= 1

    yield from walk([], [0] * m)


def build_HH(n, p, alpha=EXPERIMENT_ALPHA, beta=None, *, cap=DEFAULT_CAP):
    """Ω(1)-hitting set from levelled sign vectors over all admissible partitions."""
    p = _check_p(p)
    beta = alpha + 1 if beta is None else beta
    _check_alpha_beta(alpha, beta)
    if n < 1:
        raise ValidationError("dimension must be positive")

    sizes = hh_block_sizes(n, alpha, beta)
    projected = _count_level_patterns(n, sizes) * 2**n
    if projected > cap:
        raise ValidationError(
            f"H_H over R^{n} would enumerate {projected} vectors, above the cap of {cap}"
        )

    # vectors whose levels differ by a constant shift normalize to the same point
    canonical = sorted({tuple(l - min(pattern) + 1 for l in pattern) for pattern in _level_patterns(n, sizes)})
    magnitudes = np.array([[beta ** ((l - 1) / p) for l in pattern] for pattern in canonical])
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
    raw = (magnitudes[:, None, :] * signs[None, :, :]).reshape(-1, n)
    vectors = dedupe_rows(_normalized(raw, p))

    tau = mu(alpha, beta, p)
    if tau == 0:
        log.warning("alpha = 1 gives hitting ratio 0; the set is valid but certifies nothing")

    return _announce(
        HittingSet(
            p,
            n,
            vectors,
            tau,
            {"kind": "HH", "alpha": alpha, "beta": beta},
            cardinality_bound=hh_cardinality_bound(n, alpha, beta),
            extra={"block_sizes": sizes},
        )
    )


def hh_cardinality_bound(n, alpha, beta):
    return nu(alpha, beta) ** n


# grid constructions


def _primitive(z):
    """Integer rows whose entries have gcd 1."""
    g = np.gcd.reduce(np.abs(z).astype(np.int64), axis=1)
    return z[g == 1]


def hb_cardinality_bound(n, p, gamma):
    p = as_exponent(p)
    return (math.exp(p / 12) * (2 * gamma + 1) * max(1.0, math.sqrt(2 * math.pi / p))) ** n


def build_HB(n, p, gamma, *, cap=DEFAULT_CAP):
    """Normalized integer points of the ℓp-ball of radius γ n^{1/p}."""
    p = _check_p(p)
    if gamma <= 1:
        raise ValidationError(f"gamma must exceed 1, got {gamma}")

    radius = gamma * n ** (1 / p)
    reach = math.floor(radius + 1e-12)
    projected = (2 * reach + 1) ** n
    if projected > cap:
        raise ValidationError(f"H_B over R^{n} would scan {projected} grid points, above the cap of {cap}")

    grid = np.array(list(itertools.product(range(-reach, reach + 1), repeat=n)), dtype=np.int64)
    norms = np.sum(np.abs(grid).astype(np.float64) ** p, axis=1) ** (1 / p)
    inside = grid[(norms > 0) & (norms <= radius * (1 + 1e-12))]
    vectors = dedupe_rows(_normalized(_primitive(inside), p))

    return _announce(
        HittingSet(
            p,
            n,
            vectors,
            1 - 1 / gamma,
            {"kind": "HB", "gamma": gamma},
            cardinality_bound=hb_cardinality_bound(n, p, gamma),
        )
    )


def build_HG(n, p, m, *, cap=DEFAULT_CAP):
    """Normalized nonzero grid vectors with coordinates in {0, ±1/m, ..., ±1}; uncertified."""
    p = _check_p(p)
    if m < 1:
        raise ValidationError("grid resolution m must be a positive integer")
    projected = (2 * m + 1) ** n
    if projected > cap:
        raise ValidationError(f"H_G over R^{n} would scan {projected} grid points, above the cap of {cap}")

    grid = np.array(list(itertools.product(range(-m, m + 1), repeat=n)), dtype=np.int64)
    grid = grid[np.any(grid != 0, axis=1)]
    vectors = dedupe_rows(_normalized(_primitive(grid), p))
    return _announce(
        HittingSet(p, n, vectors, 0.0, {"kind": "HG", "m": m}, cardinality_bound=float(projected))
    )


def grid_round(x, m):
    """Round away from zero onto the 1/m grid: ⌈m x_i⌉/m for x_i >= 0, ⌊m x_i⌋/m otherwise."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, np.ceil(m * x), np.floor(m * x)) / m


# combinators


def _kron_vectors(vectors, n2):
    eye = np.eye(n2)
    return np.vstack([np.kron(eye[j], vectors) for j in range(n2)])


def lift_kron(H, n2):
    """E^{n2} ⊠ H; ratio τ/n2^{1/q}, cardinality m·n2."""
    if n2 < 1:
        raise ValidationError("lift size must be positive")
    vectors = _kron_vectors(H.vectors, n2)
    return HittingSet(
        H.p,
        H.n * n2,
        vectors,
        H.tau / n2 ** (1 / H.q),
        {"kind": "derived", "op": "kron", "n2": n2, "parent": H.construction},
        probabilistic=H.probabilistic,
        confidence=H.confidence,
    )


def _same_p(H1, H2):
    if abs(H1.p - H2.p) > 1e-12:
        raise ValidationError(f"hitting sets live on different spheres (p={H1.p} and p={H2.p})")


def _append_vectors(left, right):
    n1, n2 = left.shape[1], right.shape[1]
    top = np.hstack([left, np.zeros((left.shape[0], n2))])
    bottom = np.hstack([np.zeros((right.shape[0], n1)), right])
    return np.vstack([top, bottom])


def combine_append(H1, H2):
    """(H1 ∨ 0) ∪ (0 ∨ H2); ratio τ1τ2/(τ1^q + τ2^q)^{1/q}."""
    _same_p(H1, H2)
    if H1.tau <= 0 or H2.tau <= 0:
        raise ValidationError("combine_append needs two sets with positive hitting ratio")
    q = H1.q
    tau = H1.tau * H2.tau / (H1.tau**q + H2.tau**q) ** (1 / q)
    return HittingSet(
        H1.p,
        H1.n + H2.n,
        _append_vectors(H1.vectors, H2.vectors),
        tau,
        {"kind": "derived", "op": "append", "parents": [H1.construction, H2.construction]},
    )


def build_H1(n, p, alpha=EXPERIMENT_ALPHA, beta=None, *, cap=DEFAULT_CAP):
    """Ω((ln n/n)^{1/q})-hitting set for any p in (1, inf)."""
    p = _check_p(p)
    beta = alpha + 1 if beta is None else beta
    if n < 2:
        raise ValidationError("H_1 needs n >= 2")

    n1 = math.ceil(math.log(n))
    n2 = n // n1
    n3 = n - n1 * n2

    head = _kron_vectors(build_HH(n1, p, alpha, beta, cap=cap).vectors, n2)
    if n3:
        vectors = _append_vectors(head, build_HH(n3, p, alpha, beta, cap=cap).vectors)
    else:
        vectors = head

    q = conjugate(p)
    ln = math.log(n)
    nu_ = nu(alpha, beta)
    return _announce(
        HittingSet(
            p,
            n,
            dedupe_rows(vectors),
            mu(alpha, beta, p) * (ln / (n + ln)) ** (1 / q),
            {"kind": "H1", "alpha": alpha, "beta": beta},
            cardinality_bound=n ** math.log(nu_) * (nu_ * n / ln + 1),
            extra={"n1": n1, "n2": n2, "n3": n3},
        )
    )


@dataclass(frozen=True)
class ExtendedHadamard:
    """I_{m,k} = [[1, 1], [1, -1]] ⊠ I_{m,k-1}, I_{m,0} = I_m, applied as a fast transform."""

    m: int
    k: int

    def __post_init__(self):
        if self.m < 1 or self.k < 0:
            raise ValidationError("extended Hadamard needs m >= 1 and k >= 0")

    @property
    def size(self):
        return 2**self.k * self.m

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.size:
            raise ValidationError(f"vector length {x.shape[-1]} does not match I_m,k of size {self.size}")
        lead = x.shape[:-1]
        y = x.reshape(-1, 2**self.k, self.m)
        batch = y.shape[0]
        h = 1
        while h < 2**self.k:
            y = y.reshape(batch, -1, 2, h, self.m)
            a, b = y[:, :, 0], y[:, :, 1]
            y = np.stack([a + b, a - b], axis=2)
            h *= 2
        return y.reshape(*lead, self.size)

    def matrix(self):
        return np.kron(hadamard(2**self.k), np.eye(self.m))


def hadamard_apply(h, x):
    return h.apply(x)


def lift_hadamard(H, k):
    """2^{-k/p} I_{m,k}(E^{2^k} ⊠ H); ratio 2^{-k/2} m^{1/2-1/q} τ."""
    _check_p(H.p, lower=2.0, closed=True)
    vectors = _hadamard_vectors(H.vectors, k, H.p)
    m = H.n
    return HittingSet(
        H.p,
        2**k * m,
        vectors,
        2 ** (-k / 2) * m ** (0.5 - 1 / H.q) * H.tau,
        {"kind": "derived", "op": "hadamard", "k": k, "parent": H.construction},
        probabilistic=H.probabilistic,
        confidence=H.confidence,
    )


def _hadamard_vectors(vectors, k, p):
    transform = ExtendedHadamard(vectors.shape[1], k)
    return dedupe_rows(transform.apply(_kron_vectors(vectors, 2**k)) * 2 ** (-k / p))


def _cut_vectors(vectors, n1, p):
    prefix = vectors[:, :n1]
    prefix = prefix[np.any(prefix != 0, axis=1)]
    if prefix.shape[0] == 0:
        raise ValidationError(f"every vector vanishes on the first {n1} coordinates; nothing left after cutting")
    return dedupe_rows(_normalized(prefix, p))


def cut(H, n1):
    """Keep the first n1 coordinates; the ratio carries over."""
    if not 1 <= n1 <= H.n:
        raise ValidationError(f"can only cut to 1..{H.n} coordinates, got {n1}")
    if H.tau <= 0:
        raise ValidationError("cutting needs a set with positive hitting ratio")
    if n1 == H.n:
        return H
    return HittingSet(
        H.p,
        n1,
        _cut_vectors(H.vectors, n1, H.p),
        H.tau,
        {"kind": "derived", "op": "cut", "n1": n1, "parent": H.construction},
        probabilistic=H.probabilistic,
        confidence=H.confidence,
    )


def h2_parameters(n):
    """(k, m) with k = ⌊log₂(n/ln n)⌋ and m = ⌈n/2^k⌉."""
    k = math.floor(math.log2(n / math.log(n)))
    return k, -(-n // 2**k)


def build_H2(n, p, alpha=EXPERIMENT_ALPHA, beta=None, *, cap=DEFAULT_CAP):
    """Ω((ln n)^{1/p}/√n)-hitting set for p in [2, inf)."""
    p = _check_p(p, lower=2.0, closed=True)
    beta = alpha + 1 if beta is None else beta
    if n < 2:
        raise ValidationError("H_2 needs n >= 2")

    k, m = h2_parameters(n)
    base = build_HH(m, p, alpha, beta, cap=cap)
    vectors = _hadamard_vectors(base.vectors, k, p)
    if vectors.shape[1] > n:
        vectors = _cut_vectors(vectors, n, p)

    nu_ = nu(alpha, beta)
    ln = math.log(n)
    return _announce(
        HittingSet(
            p,
            n,
            vectors,
            mu(alpha, beta, p) * ln ** (1 / p) / math.sqrt(2 * n),
            {"kind": "H2", "alpha": alpha, "beta": beta},
            cardinality_bound=nu_ * n ** (2 * math.log(nu_) + 1) / ln,
            extra={"k": k, "m": m},
        )
    )


# randomized construction


def sample_even_lp(n, p, rng, size=None, *, raw=False):
    """Draw from the density ∝ exp(-Σ|x_i|^p), then normalize onto S_p^n.

    |x_i|^p is Gamma(1/p, 1); it is drawn by inverse transform through the
    regularized incomplete gamma function. ``raw=True`` skips normalization.
    """
    p = as_exponent(p)
    shape = (n,) if size is None else (size, n)
    if math.isinf(p):
        x = rng.uniform(-1.0, 1.0, shape)
    else:
        power = gammaincinv(1 / p, rng.random(shape))
        sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
        x = sign * power ** (1 / p)
    if raw:
        return x
    if size is None:
        return x / lp_norm(x, p)
    return _normalized(x, p)


def h3_cardinality(n, p, eps, constants=None):
    constants = constants or CoveringConstants()
    q = conjugate(p)
    body = (0.5 + 1 / q) * n * math.log(n) + math.log(1 / eps)
    return math.ceil(constants.delta3 * n**constants.delta2 * body)


def build_H3(n, p, eps, constants=None, rng=None, *, seed=None, cap=DEFAULT_CAP):
    """Randomized Ω(√(ln n/n))-hitting set, valid with probability 1 - eps."""
    p = _check_p(p)
    if not 0 < eps < 1:
        raise ValidationError(f"failure probability must lie in (0, 1), got {eps}")
    constants = constants or CoveringConstants()
    if rng is None:
        rng = np.random.default_rng(seed)

    count = h3_cardinality(n, p, eps, constants)
    if count > cap:
        raise ValidationError(f"H_3 over R^{n} needs {count} samples, above the cap of {cap}")

    vectors = sample_even_lp(n, p, rng, size=count)
    tau = min(1.0, math.sqrt(constants.delta0 * math.log(n) / (2 * n)))
    return _announce(
        HittingSet(
            p,
            n,
            vectors,
            tau,
            {"kind": "H3", "eps": eps, "seed": seed, **constants.to_dict()},
            probabilistic=True,
            confidence=1 - eps,
            cardinality_bound=float(count),
        )
    )


# empirical validation


def _probe_family(H, q, num_probes, rng, mode):
    n = H.n
    probes = [sample_even_lp(n, q, rng, size=num_probes)] if num_probes else []
    if mode == "adversarial":
        eye = np.eye(n)
        flat = np.ones((1, n)) / lp_norm(np.ones(n), q)
        signs = np.sign(H.vectors)
        signs = signs[np.any(signs != 0, axis=1)]
        signs = signs / np.array([lp_norm(s, q) for s in signs])[:, None]
        probes += [eye, -eye, flat, -flat, signs, -signs]
    elif mode != "random":
        raise ValidationError(f"probe mode must be random or adversarial, got {mode!r}")
    if not probes:
        raise ValidationError("random probing needs at least one probe")
    return np.vstack(probes)


def probe_hitting_ratio(H, num_probes=10_000, rng=None, mode="random", *, chunk=2048):
    """min over probes x ∈ S_q^n of max_{v ∈ H} vᵀx.

    An upper estimate of the true ratio; a certified τ above it is wrong.
    """
    if len(H) == 0:
        raise ValidationError("cannot probe an empty hitting set")
    rng = rng if rng is not None else np.random.default_rng()
    probes = _probe_family(H, H.q, num_probes, rng, mode)

    worst = math.inf
    for start in range(0, probes.shape[0], chunk):
        block = probes[start : start + chunk] @ H.vectors.T
        worst = min(worst, float(block.max(axis=1).min()))
    return worst


def cardinality_curve(alphas):
    """Per-dimension cardinality bounds of H_B and H_H(α, α+1) at p = 6 for matched ratios."""
    rows = []
    for alpha in alphas:
        ratio = (1 - 1 / alpha) * (alpha / (alpha + 1) ** 2) ** (1 / 6)
        rows.append(
            {
                "alpha": alpha,
                "ratio": ratio,
                "hb_bound": math.sqrt(math.e * math.pi / 3) * (2 / (1 - ratio) + 1),
                "hh_bound": 4 * (alpha + 1) ** ((alpha + 1) / alpha) / alpha,
            }
        )
    return rows


BUILDERS = {
    "hh": build_HH,
    "hb": build_HB,
    "h1": build_H1,
    "h2": build_H2,
    "hg": build_HG,
    "h3": build_H3,
}
