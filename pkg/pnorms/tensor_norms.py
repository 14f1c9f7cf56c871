"""Approximations of tensor spectral and nuclear p-norms.

All algorithms work on a mode-sorted copy: modes ordered by dimension
(ties by index), the d-2 smallest covered by hitting sets and the two
largest left to the matrix relaxation. Certificates are returned in the
caller's mode order.
"""

from __future__ import annotations

import itertools
import logging
import math

import numpy as np

from .conic import DEFAULT_TOL, ConicProgram, solve
from .covering import CoveringConstants, build_H3, probe_hitting_ratio
from .matrix import DELTA_G, NormEstimate, add_pv_system, budget_terms, matrix_pu, matrix_pv
from .tensor import (
    DenseTensor,
    ModePartition,
    RationalExponent,
    as_exponent,
    as_tensor,
    conjugate,
    contract_leading,
    fold,
    lp_norm,
    lp_normalize,
    outer,
    slice_partition,
    unfold,
)
from .utils.errors import ValidationError
from .utils.stopwatch import StopWatch

log = logging.getLogger("pnorms.tensor_norms")

DEFAULT_TUPLE_CAP = 10**4
DEFAULT_PROGRAM_BUDGET = 50_000
SCALES = ("certified", "probed")


def mode_order(shape):
    """Modes sorted by dimension, ties by index."""
    return sorted(range(len(shape)), key=lambda k: (shape[k], k))


def _exponent(p):
    return RationalExponent.parse(p).require_above_two()


def _check_hitsets(shape, perm, hitsets, p):
    covered = perm[:-2]
    hitsets = list(hitsets)
    if len(hitsets) != len(covered):
        raise ValidationError(
            f"an order-{len(shape)} tensor needs {len(covered)} hitting sets, got {len(hitsets)}"
        )
    for mode, H in zip(covered, hitsets):
        if H.n != shape[mode]:
            raise ValidationError(
                f"hitting set for mode {mode} must live in R^{shape[mode]}, got R^{H.n}"
            )
        if not math.isclose(H.p, as_exponent(p), rel_tol=1e-12):
            raise ValidationError(f"hitting set for mode {mode} is over l{H.p:g}, not l{as_exponent(p):g}")
    return hitsets


def _tau_product(taus):
    return math.prod(taus) if taus else 1.0


def _widen(value, factor):
    if factor == 0:
        return math.inf
    return value * factor


# vector norm bounds


def vector_bounds(T, p):
    """(‖T‖_p, Σ over fibres of the largest mode of ‖fibre‖_p).

    The first is a lower bound on the nuclear p-norm and the second an upper one.
    """
    T = as_tensor(T)
    last = mode_order(T.shape)[-1]
    fibres = np.moveaxis(T.array, last, -1).reshape(-1, T.shape[last])
    lower = lp_norm(T.data, p)
    upper = float(sum(lp_norm(f, p) for f in fibres))
    return lower, upper


def vector_estimate(T, p):
    lower, upper = vector_bounds(T, p)
    return NormEstimate(lower, lower, upper, "vector")


# spectral norm


def alg2_spectral(T, p, hitsets, *, tol=DEFAULT_TOL, solver=None, tuple_cap=DEFAULT_TUPLE_CAP):
    """max over hitting-set tuples x of ‖T ×_1 x_1 ... ×_{d-2} x_{d-2}‖_pv, over δ_G.

    Never exceeds the spectral p-norm and is within ∏τ/δ_G of it.
    """
    T = as_tensor(T)
    p = _exponent(p)
    if T.order < 2:
        raise ValidationError("spectral relaxation needs a tensor of order >= 2")
    perm = mode_order(T.shape)
    hitsets = _check_hitsets(T.shape, perm, hitsets, p)

    count = math.prod(len(H) for H in hitsets)
    if count > tuple_cap:
        raise ValidationError(f"{count} hitting-set tuples exceed the cap of {tuple_cap}")

    array = T.permuted(perm).array
    watch = StopWatch()
    watch.start()
    best, best_tuple, solves = 0.0, None, 0
    for xs in itertools.product(*(H.vectors for H in hitsets)):
        value = matrix_pv(contract_leading(array, xs), p, tol=tol, solver=solver).value
        solves += 1
        if best_tuple is None or value > best:
            best, best_tuple = value, xs

    taus = tuple(H.tau for H in hitsets)
    value = best / DELTA_G
    probabilistic = any(H.probabilistic for H in hitsets)
    stats = {
        "tuples": count,
        "solves": solves,
        "elapsed_s": watch.stop(),
        "argmax": {int(mode): list(map(float, x)) for mode, x in zip(perm[:-2], best_tuple or ())},
    }
    log.info(f"alg2 on shape {T.shape}: {solves} matrix programs, value {value:.6g}")
    return NormEstimate(
        value,
        value,
        _widen(value, DELTA_G / _tau_product(taus)),
        "spectral",
        taus=taus,
        probabilistic=probabilistic,
        stats=stats,
    )


# nuclear norm


def alg3_unfold_nuclear(T, p, partition=None, *, tol=DEFAULT_TOL, solver=None, certify=True):
    """‖·‖_pu of a matrix unfolding.

    The default unfolding keeps the largest mode as columns. The bracket
    widens by δ_G and by n_k^{1/q} for every mode beyond the largest row and
    column modes.
    """
    T = as_tensor(T)
    p = _exponent(p)
    if T.order < 2:
        raise ValidationError("unfolding needs a tensor of order >= 2")
    if partition is None:
        perm = mode_order(T.shape)
        partition = ModePartition(sorted(perm[:-1]), [perm[-1]])
    partition.validate(T.order)

    est = matrix_pu(unfold(T, partition), p, tol=tol, solver=solver, certify=certify)
    q = conjugate(p)
    keep = {
        max(partition.row_modes, key=lambda k: T.shape[k]),
        max(partition.col_modes, key=lambda k: T.shape[k]),
    }
    factor = math.prod(T.shape[k] ** (1 / q) for k in range(T.order) if k not in keep)

    certificate = fold(est.certificate, T.shape, partition).array
    stats = dict(est.stats, partition=[list(partition.row_modes), list(partition.col_modes)])
    return NormEstimate(
        est.value, est.value, DELTA_G * factor * est.value, "unfold", certificate=certificate, stats=stats
    )


def alg4_partition_nuclear(T, p, *, tol=DEFAULT_TOL, solver=None):
    """ℓp norm of the ‖·‖_pu values of the slices over the two largest modes."""
    T = as_tensor(T)
    p = _exponent(p)
    if T.order < 2:
        raise ValidationError("partitioning needs a tensor of order >= 2")
    perm = mode_order(T.shape)
    i, j = perm[-2], perm[-1]

    watch = StopWatch()
    watch.start()
    values = [matrix_pu(S, p, tol=tol, solver=solver, certify=False).value for S in slice_partition(T, i, j)]
    value = lp_norm(values, p)

    q = conjugate(p)
    factor = math.prod(T.shape[k] ** (1 / q) for k in perm[:-2])
    stats = {"slices": len(values), "slice_modes": [i, j], "elapsed_s": watch.stop()}
    return NormEstimate(value, value, DELTA_G * factor * value, "partition", stats=stats)


def cover_program(array, p, hitsets, *, budget=DEFAULT_PROGRAM_BUDGET):
    """max ⟨T, Z⟩ s.t. ‖Z ×_1 x_1 ... ×_{d-2} x_{d-2}‖_pv <= 1 for every hitting-set tuple.

    ``array`` is already mode-sorted with the covered modes leading. Returns
    the program and Z's handle array.
    """
    shape = array.shape
    n1, n2 = shape[-2], shape[-1]
    covered = math.prod(shape[:-2])
    count = math.prod(len(H) for H in hitsets)
    size = count * (n1 + n2)
    if size > budget:
        raise ValidationError(
            f"covering program needs {count} pv systems of side {n1 + n2} ({size} cone blocks), "
            f"above the budget of {budget}"
        )

    prog = ConicProgram("max")
    Z = np.array(prog.add_vars(covered * n1 * n2, "Z")).reshape(covered, n1, n2)
    for xs in itertools.product(*(H.vectors for H in hitsets)):
        w = outer(*xs).ravel() if xs else np.ones(1)
        support = np.flatnonzero(w)
        off = {
            (i, j): {int(Z[c, i, j]): float(w[c]) for c in support}
            for i in range(n1)
            for j in range(n2)
        }
        u1, u2, t, _ = add_pv_system(prog, n1, n2, p, off)
        prog.add_linear(budget_terms(u1, u2, t, p), "<=", 1.0)

    flat = array.reshape(covered, n1, n2)
    prog.set_objective({int(h): float(c) for h, c in zip(Z.ravel(), flat.ravel()) if c != 0})
    return prog, Z.reshape(shape)


def alg6_cover_nuclear(
    T,
    p,
    hitsets,
    *,
    tol=DEFAULT_TOL,
    solver=None,
    budget=DEFAULT_PROGRAM_BUDGET,
    scale="certified",
    probes=10_000,
    rng=None,
    method="cover",
):
    """∏τ · max ⟨T, Z⟩ over Z whose hitting-set contractions all have ‖·‖_pv <= 1.

    The bracket is always [∏τ·u, δ_G·u] with the certified ratios τ of the
    sets. ``scale="certified"`` reports its lower end; ``"probed"`` reports
    u scaled by adversarial probe estimates of the ratios instead, which
    tracks the true norm more closely but is not itself a certified bound.
    """
    T = as_tensor(T)
    p = _exponent(p)
    if scale not in SCALES:
        raise ValidationError(f"scale must be one of {SCALES}, got {scale!r}")
    if T.order < 2:
        raise ValidationError("covering relaxation needs a tensor of order >= 2")
    perm = mode_order(T.shape)
    hitsets = _check_hitsets(T.shape, perm, hitsets, p)

    certified_taus = tuple(H.tau for H in hitsets)
    if scale == "certified":
        taus = certified_taus
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        taus = tuple(probe_hitting_ratio(H, probes, rng, mode="adversarial") for H in hitsets)
    certified_factor = _tau_product(certified_taus)
    factor = _tau_product(taus)

    probabilistic = any(H.probabilistic for H in hitsets)
    confidence = None
    if probabilistic:
        confidence = 1 - sum(1 - (H.confidence if H.confidence is not None else 1) for H in hitsets)

    stats = {
        "tuples": math.prod(len(H) for H in hitsets),
        "scale": scale,
        "cardinalities": [len(H) for H in hitsets],
        "certified_taus": list(certified_taus),
    }
    norm = T.frobenius()
    if norm == 0:
        return NormEstimate(
            0.0, 0.0, 0.0, method,
            certificate=np.zeros(T.shape), taus=taus, certified=scale == "certified",
            probabilistic=probabilistic, confidence=confidence, stats=stats,
        )

    sorted_array = T.permuted(perm).array
    prog, handles = cover_program(sorted_array / norm, p, hitsets, budget=budget)
    result = solve(prog, tol, solver=solver).require_optimal("covering program")
    stats.update(result.stats)

    u = result.objective * norm
    stats["relaxation"] = u
    # the certificate carries the certified scaling, so ⟨T, Z⟩ is the lower end
    Z = certified_factor * result.value(handles.ravel()).reshape(sorted_array.shape)
    certificate = np.transpose(Z, np.argsort(perm))

    lower = certified_factor * u
    value = factor * u
    log.info(f"{method} on shape {T.shape}: u={u:.6g} scaled by {factor:.6g} ({scale})")
    return NormEstimate(
        value,
        lower,
        DELTA_G * u,
        method,
        certificate=certificate,
        taus=taus,
        certified=scale == "certified",
        probabilistic=probabilistic,
        confidence=confidence,
        stats=stats,
    )


def alg5_cover_nuclear_order3(T, p, H, **kwargs):
    """The covering relaxation for order-3 tensors with one hitting set."""
    T = as_tensor(T)
    if T.order != 3:
        raise ValidationError(f"this relaxation is for order-3 tensors, got order {T.order}")
    kwargs.setdefault("method", "cover")
    return alg6_cover_nuclear(T, p, [H], **kwargs)


def alg7_randomized(T, p, eps=0.05, *, rng=None, seed=None, constants=None, **kwargs):
    """The covering relaxation over fresh H_3 samples, valid with probability 1 - eps.

    Each covered mode gets failure probability eps/(d-2).
    """
    T = as_tensor(T)
    if not 0 < eps < 1:
        raise ValidationError(f"failure probability must lie in (0, 1), got {eps}")
    if T.order < 3:
        raise ValidationError("the randomized relaxation needs a tensor of order >= 3")
    if rng is None:
        rng = np.random.default_rng(seed)
    constants = constants or CoveringConstants()

    perm = mode_order(T.shape)
    share = eps / (T.order - 2)
    hitsets = [build_H3(T.shape[k], p, share, constants, rng) for k in perm[:-2]]

    kwargs.setdefault("method", "random")
    est = alg6_cover_nuclear(T, p, hitsets, **kwargs)
    est.confidence = 1 - eps
    est.stats["seed"] = seed
    return est


# instances


def gen_identity_tensor(n, d):
    """The diagonal tensor with ones on the superdiagonal."""
    if n < 1 or d < 1:
        raise ValidationError("identity tensor needs n >= 1 and d >= 1")
    data = np.zeros((n,) * d)
    for i in range(n):
        data[(i,) * d] = 1.0
    return DenseTensor.from_array(data)


def identity_spectral_value(n, d, p):
    """Spectral p-norm of the order-d identity tensor, which is max(1, n^{1-d/p})."""
    return max(1.0, n ** (1 - d / as_exponent(p)))


def known_nuclear_tensor(lambdas, factors, d):
    """Σ λ_i x_i^{⊗d}; with λ >= 0 and unit x_i in ℓd its nuclear d-norm is Σ λ_i."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    factors = np.atleast_2d(np.asarray(factors, dtype=np.float64))
    if np.any(lambdas < 0):
        raise ValidationError("weights must be nonnegative")
    if len(lambdas) != len(factors):
        raise ValidationError("need one factor per weight")
    n = factors.shape[1]
    data = np.zeros((n,) * d)
    for lam, x in zip(lambdas, factors):
        data += lam * outer(*([x] * d))
    return DenseTensor.from_array(data)


def gen_known_nuclear_instance(n, d, r, rng, p=None):
    """A random nonnegative rank-r symmetric tensor and its nuclear d-norm."""
    if p is not None and as_exponent(p) != d:
        raise ValidationError(f"known-nuclear instances need p = d = {d}, got p = {p}")
    if d < 2 or r < 1 or n < 1:
        raise ValidationError("known-nuclear instances need d >= 2, r >= 1 and n >= 1")
    lambdas = rng.random(r)
    factors = np.vstack([lp_normalize(rng.random(n), d) for _ in range(r)])
    return known_nuclear_tensor(lambdas, factors, d), float(lambdas.sum())


# worst-case guarantees


def theoretical_bound(method, shape, p, taus=()):
    """Guaranteed lower ratio estimate/‖T‖_p* for a nuclear method on this shape."""
    q = conjugate(p)
    dims = sorted(shape)
    if method == "vector":
        return math.prod(n ** (-1 / q) for n in dims[:-1])
    if method in ("unfold", "partition"):
        return math.prod(n ** (-1 / q) for n in dims[:-2]) / DELTA_G
    if method in ("cover", "cover-h1", "cover-h2", "random"):
        return _tau_product(tuple(taus)) / DELTA_G
    raise ValidationError(f"no guarantee known for method {method!r}")


def asymptotic_bound(method, n, d, p):
    """Order of the guarantee for an n^d tensor, constants dropped."""
    q = conjugate(p)
    power = d - 2
    if method == "vector":
        return n ** (-(d - 1) / q)
    if method in ("unfold", "partition"):
        return n ** (-power / q)
    if method == "cover-h1":
        return (math.log(n) / n) ** (power / q)
    if method == "cover-h2":
        return (math.log(n) ** (1 / as_exponent(p)) / math.sqrt(n)) ** power
    if method == "random":
        return math.sqrt(math.log(n) / n) ** power
    raise ValidationError(f"no asymptotic rate known for method {method!r}")
