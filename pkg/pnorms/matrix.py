"""Matrix spectral and nuclear p-norms through their SDP relaxations.

For A ∈ R^{m×n} let B = [[0, A/2], [Aᵀ/2, 0]]. The relaxation

    ‖A‖_pv = min u1 + u2 + θ_p Σ t_i
             s.t. (u1, v_i, t_i) ∈ K3_p for row indices, (u2, v_i, t_i) ∈ K3_p
                  for column indices, D(v) ⪰ B

satisfies ‖A‖_pv/δ_G <= ‖A‖_pσ <= ‖A‖_pv, and its dual norm ‖A‖_pu brackets
the nuclear norm as ‖A‖_pu <= ‖A‖_p* <= δ_G ‖A‖_pu.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .conic import DEFAULT_TOL, ConicProgram, solve
from .covering import sample_even_lp
from .powercone import k3p_block, theta
from .tensor import DenseTensor, RationalExponent, as_exponent, conjugate, lp_norm
from .utils.errors import ValidationError

log = logging.getLogger("pnorms.matrix")

# upper bound on the real Grothendieck constant; keeps every bracket valid
DELTA_G = math.pi / (2 * math.log(1 + math.sqrt(2)))


@dataclass
class NormEstimate:
    value: float
    lower: float
    upper: float
    method: str
    certificate: np.ndarray = None
    delta_g: float = DELTA_G
    taus: tuple = ()
    certified: bool = True
    probabilistic: bool = False
    confidence: float = None
    stats: dict = field(default_factory=dict)

    def __repr__(self):
        return f"<NormEstimate {self.method} value={self.value:.6g} bracket=[{self.lower:.6g}, {self.upper:.6g}]>"

    def to_dict(self, *, with_certificate=False):
        payload = {
            "method": self.method,
            "value": self.value,
            "lower": self.lower,
            "upper": None if math.isinf(self.upper) else self.upper,
            "delta_g": self.delta_g,
            "taus": list(self.taus),
            "certified": self.certified,
            "probabilistic": self.probabilistic,
            "confidence": self.confidence,
            "stats": self.stats,
        }
        if with_certificate and self.certificate is not None:
            payload["certificate"] = {
                "shape": list(np.shape(self.certificate)),
                "data": np.ravel(self.certificate).tolist(),
            }
        return payload


def _as_matrix(A):
    if isinstance(A, DenseTensor):
        A = A.array
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValidationError(f"expected a matrix, got an array of order {A.ndim}")
    return A


def _exponent(p):
    return RationalExponent.parse(p).require_above_two()


def add_pv_system(prog, m, n, p, off_diagonal):
    """Variables (u1, u2, t, v) with K3_p blocks and D(v) ⪰ [[0, M/2], [Mᵀ/2, 0]].

    ``off_diagonal`` is either a constant m×n matrix M or a mapping
    ``(i, j) -> {handle: coef}`` giving M as an affine expression.
    Returns ``(u1, u2, t, v)`` handles.
    """
    u1 = prog.add_var("u1")
    u2 = prog.add_var("u2")
    t = prog.add_vars(m + n, "t")
    v = prog.add_vars(m + n, "v")
    for i in range(m + n):
        prog.add_block(k3p_block(u1 if i < m else u2, v[i], t[i], p))

    terms = {(i, i): {v[i]: 1.0} for i in range(m + n)}
    constant = None
    if isinstance(off_diagonal, np.ndarray):
        constant = np.zeros((m + n, m + n))
        constant[:m, m:] = -off_diagonal / 2
        constant[m:, :m] = -off_diagonal.T / 2
    else:
        for (i, j), coeffs in off_diagonal.items():
            terms[(i, m + j)] = {h: -c / 2 for h, c in coeffs.items()}

    prog.psd_embed(m + n, terms, constant)
    return u1, u2, t, v


def budget_terms(u1, u2, t, p):
    """u1 + u2 + θ_p Σ t_i as a coefficient map."""
    th = theta(p)
    coeffs = {u1: 1.0, u2: 1.0}
    coeffs.update({h: th for h in t})
    return coeffs


def pv_program(A, p):
    A = _as_matrix(A)
    p = _exponent(p)
    m, n = A.shape
    prog = ConicProgram("min")
    u1, u2, t, _ = add_pv_system(prog, m, n, p, A)
    prog.set_objective(budget_terms(u1, u2, t, p))
    return prog


def matrix_pv(A, p, *, tol=DEFAULT_TOL, solver=None):
    """‖A‖_pv, bracketing the spectral p-norm as [value/δ_G, value]."""
    A = _as_matrix(A)
    scale = float(np.linalg.norm(A))
    if scale == 0:
        return NormEstimate(0.0, 0.0, 0.0, "pv")

    result = solve(pv_program(A / scale, p), tol, solver=solver).require_optimal("pv program")
    value = result.objective * scale
    return NormEstimate(value, value / DELTA_G, value, "pv", stats=result.stats)


def pu_program(A, p):
    """max ⟨A, Z⟩ s.t. ‖Z‖_pv <= 1; returns the program and Z's handle matrix."""
    A = _as_matrix(A)
    p = _exponent(p)
    m, n = A.shape
    prog = ConicProgram("max")
    Z = np.array(prog.add_vars(m * n, "Z")).reshape(m, n)
    u1, u2, t, _ = add_pv_system(prog, m, n, p, {(i, j): {int(Z[i, j]): 1.0} for i in range(m) for j in range(n)})
    prog.add_linear(budget_terms(u1, u2, t, p), "<=", 1.0)
    prog.set_objective({int(Z[i, j]): A[i, j] for i in range(m) for j in range(n)})
    return prog, Z


def matrix_pu(A, p, *, tol=DEFAULT_TOL, solver=None, certify=True):
    """‖A‖_pu with certificate Z, bracketing the nuclear p-norm as [value, δ_G·value].

    With ``certify`` the certificate is rescaled so that ‖Z‖_pv <= 1 holds as
    computed, and the value recomputed as ⟨A, Z⟩.
    """
    A = _as_matrix(A)
    scale = float(np.linalg.norm(A))
    if scale == 0:
        return NormEstimate(0.0, 0.0, 0.0, "pu", certificate=np.zeros_like(A))

    prog, handles = pu_program(A / scale, p)
    result = solve(prog, tol, solver=solver).require_optimal("pu program")
    Z = result.value(handles.ravel()).reshape(A.shape)
    value = result.objective * scale
    stats = dict(result.stats)

    if certify:
        pv = matrix_pv(Z, p, tol=tol, solver=solver).value
        shrink = max(1.0, pv)
        Z = Z / shrink
        value = float(np.sum(A * Z))
        stats["certificate_pv"] = pv / shrink

    return NormEstimate(value, value, DELTA_G * value, "pu", certificate=Z, stats=stats)


def matrix_pv_primal(A, p, *, tol=DEFAULT_TOL, solver=None):
    """‖A‖_pv as max ⟨B, X⟩ over X ⪰ 0 with Σ_{i<=m}|x_ii|^{p/2} <= 1 and Σ_{i>m}|x_ii|^{p/2} <= 1.

    x^{p/2} <= s is (s, x, 1) ∈ K3_p, so the same cone blocks carry it.
    """
    A = _as_matrix(A)
    p = _exponent(p)
    m, n = A.shape
    scale = float(np.linalg.norm(A))
    if scale == 0:
        return NormEstimate(0.0, 0.0, 0.0, "pv-primal")

    prog = ConicProgram("max")
    X = prog.add_psd_variable(m + n)
    s = prog.add_vars(m + n, "s")
    one = prog.add_var("one")
    prog.add_linear({one: 1.0}, "==", 1.0)
    for i in range(m + n):
        prog.add_block(k3p_block(s[i], int(X[i, i]), one, p))
    prog.add_linear({h: 1.0 for h in s[:m]}, "<=", 1.0)
    prog.add_linear({h: 1.0 for h in s[m:]}, "<=", 1.0)

    coeffs = {}
    for i in range(m):
        for j in range(n):
            h = int(X[i, m + j])
            coeffs[h] = coeffs.get(h, 0.0) + A[i, j] / scale
    prog.set_objective(coeffs)

    result = solve(prog, tol, solver=solver).require_optimal("pv primal program")
    value = result.objective * scale
    certificate = result.value(X.ravel()).reshape(m + n, m + n)
    return NormEstimate(value, value / DELTA_G, value, "pv-primal", certificate=certificate, stats=result.stats)


def _dual_step(w, p):
    """The ℓp-unit x maximizing wᵀx, and that maximum ‖w‖_q."""
    q = conjugate(p)
    norm = lp_norm(w, q)
    if norm == 0:
        return None, 0.0
    x = np.sign(w) * np.abs(w / norm) ** (q - 1)
    return x / lp_norm(x, p), norm


def _contract_except(array, xs, k):
    out = array
    for j in reversed(range(array.ndim)):
        if j != k:
            out = np.tensordot(out, xs[j], axes=([j], [0]))
    return out


def _starts(shape, p, restarts, rng):
    yield [np.ones(n) / n ** (1 / p) for n in shape]
    for j in range(max(shape)):
        yield [np.eye(n)[min(j, n - 1)] for n in shape]
    for _ in range(restarts):
        yield [sample_even_lp(n, p, rng) for n in shape]


def spectral_pnorm_oracle(T, p, restarts=200, rng=None, *, tol=1e-12, max_iter=500, return_vectors=False):
    """Best multilinear form value over unit ℓp-spheres found by alternating maximization.

    Every returned value is attained, so it is a lower bound on the spectral
    p-norm. Works for matrices and tensors of any order.
    """
    array = T.array if isinstance(T, DenseTensor) else np.asarray(T, dtype=np.float64)
    p = as_exponent(p)
    if not 1 < p < math.inf:
        raise ValidationError(f"the spectral oracle needs 1 < p < inf, got {p}")
    rng = rng if rng is not None else np.random.default_rng(0)
    d = array.ndim

    if d == 1:
        x, value = _dual_step(array, p)
        return (value, [x]) if return_vectors else value

    best, best_xs = 0.0, None
    for xs in _starts(array.shape, p, restarts, rng):
        value = -math.inf
        for _ in range(max_iter):
            previous = value
            for k in range(d):
                x, value = _dual_step(_contract_except(array, xs, k), p)
                if x is None:
                    break
                xs[k] = x
            if x is None or value - previous <= tol * max(1.0, abs(value)):
                break
        value = max(value, 0.0)
        if value > best:
            best, best_xs = value, [x.copy() for x in xs]

    log.debug(f"spectral oracle on shape {array.shape}: {best:.10g}")
    if return_vectors:
        return best, best_xs
    return best
