"""A solver-agnostic conic program and its cvxpy adapter.

Handles are integer indices into the program's variable table. Constraints:

* linear rows ``Σ c_h x_h (<=|==|>=) rhs``
* rotated second-order pairs ``‖(w, (x - y)/2)‖₂ <= (x + y)/2``
* PSD constraints on a symmetric affine matrix, stored as its upper triangle
  ``{(i, j): ({handle: coef}, constant)}`` with ``i <= j`` and mirrored.

Serialized PSD data and certificates use the scaled upper-triangle vector
(:func:`svec`, off-diagonals times √2), so Frobenius products are dot products.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .powercone import LinearLe, Nonneg, RotatedPair
from .utils.errors import SolverFailure, ValidationError
from .utils.stopwatch import StopWatch

log = logging.getLogger("pnorms.conic")

DEFAULT_TOL = 1e-8
DEFAULT_SOLVER = "CLARABEL"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_TROUBLE = "numerical-trouble"

_OPS = ("<=", "==", ">=")


def svec(matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    rows, cols = np.triu_indices(matrix.shape[0])
    scale = np.where(rows == cols, 1.0, math.sqrt(2.0))
    return matrix[rows, cols] * scale


def smat(vector, side=None):
    vector = np.asarray(vector, dtype=np.float64)
    if side is None:
        side = int(round((math.sqrt(8 * vector.size + 1) - 1) / 2))
    if side * (side + 1) // 2 != vector.size:
        raise ValidationError(f"{vector.size} entries do not form a packed {side}x{side} matrix")
    rows, cols = np.triu_indices(side)
    scale = np.where(rows == cols, 1.0, 1 / math.sqrt(2.0))
    out = np.zeros((side, side))
    out[rows, cols] = vector * scale
    out[cols, rows] = vector * scale
    return out


@dataclass
class LinearRow:
    coeffs: dict
    op: str
    rhs: float
    tag: int = None


@dataclass
class PSDConstraint:
    side: int
    entries: dict
    tag: int = None


@dataclass
class SolveResult:
    status: str
    objective: float = None
    x: np.ndarray = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.objective is not None) != (self.status == OPTIMAL):
            raise ValueError("a solve result carries an objective exactly when it is optimal")

    @property
    def optimal(self):
        return self.status == OPTIMAL

    def value(self, handles):
        return self.x[np.asarray(handles, dtype=int)]

    def require_optimal(self, what="program"):
        if not self.optimal:
            raise SolverFailure(
                f"solver returned {self.status} for the {what}: {self.stats.get('message', 'no diagnostics')}",
                result=self,
            )
        return self


class ConicProgram:
    def __init__(self, sense="min"):
        if sense not in ("min", "max"):
            raise ValidationError(f"objective sense must be min or max, got {sense!r}")
        self.sense = sense
        self.names = []
        self.nonneg = []
        self.objective = {}
        self.objective_constant = 0.0
        self.linear = []
        self.soc = []
        self.psd = []
        self._next_tag = 0

    def __repr__(self):
        return (
            f"<ConicProgram vars={self.num_vars} linear={len(self.linear)} "
            f"soc={len(self.soc)} psd={len(self.psd)}>"
        )

    @property
    def num_vars(self):
        return len(self.names)

    # building

    def add_var(self, name=None, *, nonneg=False):
        handle = len(self.names)
        self.names.append(name or f"x{handle}")
        self.nonneg.append(bool(nonneg))
        return handle

    def add_vars(self, count, name="x", *, nonneg=False):
        return [self.add_var(f"{name}[{i}]", nonneg=nonneg) for i in range(count)]

    def _check(self, handles):
        for h in handles:
            if not 0 <= h < self.num_vars:
                raise ValidationError(f"variable handle {h} out of range (have {self.num_vars})")

    def set_objective(self, coeffs, sense=None, constant=0.0):
        self._check(coeffs)
        if sense is not None:
            if sense not in ("min", "max"):
                raise ValidationError(f"objective sense must be min or max, got {sense!r}")
            self.sense = sense
        self.objective = {int(h): float(c) for h, c in coeffs.items() if c != 0}
        self.objective_constant = float(constant)

    def add_linear(self, coeffs, op, rhs, *, tag=None):
        if op not in _OPS:
            raise ValidationError(f"linear constraint operator must be one of {_OPS}")
        self._check(coeffs)
        self.linear.append(LinearRow({int(h): float(c) for h, c in coeffs.items()}, op, float(rhs), tag))
        return len(self.linear) - 1

    def add_rotated_pair(self, w, x, y, *, tag=None):
        self._check((w, x, y))
        self.soc.append((int(w), int(x), int(y), tag))
        return len(self.soc) - 1

    def psd_embed(self, side, terms, constant=None, *, tag=None):
        """Require the symmetric affine matrix ``constant + Σ terms`` to be PSD.

        ``terms`` maps ``(i, j)`` to ``{handle: coef}``; an entry given below
        the diagonal is stored at its mirror.
        """
        entries = {}
        for (i, j), coeffs in terms.items():
            key = (min(i, j), max(i, j))
            if key[0] < 0 or key[1] >= side:
                raise ValidationError(f"PSD entry {key} outside a {side}x{side} matrix")
            self._check(coeffs)
            row, const = entries.get(key, ({}, 0.0))
            for h, c in coeffs.items():
                row[int(h)] = row.get(int(h), 0.0) + float(c)
            entries[key] = (row, const)

        if constant is not None:
            constant = np.asarray(constant, dtype=np.float64)
            if constant.shape != (side, side) or not np.allclose(constant, constant.T, atol=0):
                raise ValidationError("PSD constant must be a symmetric side x side matrix")
            for i, j in zip(*np.triu_indices(side)):
                if constant[i, j] != 0:
                    row, const = entries.get((int(i), int(j)), ({}, 0.0))
                    entries[(int(i), int(j))] = (row, const + float(constant[i, j]))

        self.psd.append(PSDConstraint(side, entries, tag))
        return len(self.psd) - 1

    def add_psd_variable(self, side, name="X"):
        """A symmetric matrix variable constrained PSD; returns its handle matrix."""
        handles = np.zeros((side, side), dtype=int)
        for i, j in zip(*np.triu_indices(side)):
            h = self.add_var(f"{name}[{i},{j}]")
            handles[i, j] = handles[j, i] = h
        self.psd_embed(side, {(int(i), int(j)): {int(handles[i, j]): 1.0} for i, j in zip(*np.triu_indices(side))})
        return handles

    def add_block(self, block):
        """Instantiate a ConeBlock; returns ``(tag, aux handles)``."""
        self._check(block.externals)
        tag = self._next_tag
        self._next_tag += 1
        aux = [self.add_var(f"b{tag}.{name}") for name in block.aux_names]
        for con in block.resolve(aux):
            if isinstance(con, RotatedPair):
                self.add_rotated_pair(con.w, con.x, con.y, tag=tag)
            elif isinstance(con, LinearLe):
                self.add_linear({con.w: 1.0, con.x: -1.0}, "<=", 0.0, tag=tag)
            elif isinstance(con, Nonneg):
                self.add_linear({con.w: 1.0}, ">=", 0.0, tag=tag)
        return tag, aux

    def remove_block(self, tag):
        """Drop every constraint a block added; its auxiliary variables stay, unconstrained."""
        self.linear = [row for row in self.linear if row.tag != tag]
        self.soc = [con for con in self.soc if con[3] != tag]
        self.psd = [con for con in self.psd if con.tag != tag]

    def summary(self):
        return {
            "vars": self.num_vars,
            "linear": len(self.linear),
            "soc": len(self.soc),
            "psd": len(self.psd),
            "psd_rows": sum(con.side for con in self.psd),
        }

    # serialization

    def to_dict(self):
        return {
            "format": "pnorms-conic/1",
            "sense": self.sense,
            "variables": [{"name": n, "nonneg": f} for n, f in zip(self.names, self.nonneg)],
            "objective": {"terms": sorted(self.objective.items()), "constant": self.objective_constant},
            "linear": [
                {"terms": sorted(row.coeffs.items()), "op": row.op, "rhs": row.rhs, "tag": row.tag}
                for row in self.linear
            ],
            "soc": [{"w": w, "x": x, "y": y, "tag": tag} for w, x, y, tag in self.soc],
            "psd": [
                {
                    "side": con.side,
                    "tag": con.tag,
                    "entries": [
                        {"i": i, "j": j, "terms": sorted(row.items()), "constant": const}
                        for (i, j), (row, const) in sorted(con.entries.items())
                    ],
                }
                for con in self.psd
            ],
            "next_tag": self._next_tag,
        }

    @classmethod
    def from_dict(cls, payload):
        try:
            prog = cls(payload["sense"])
            for var in payload["variables"]:
                prog.add_var(var["name"], nonneg=var["nonneg"])
            prog.objective = {int(h): float(c) for h, c in payload["objective"]["terms"]}
            prog.objective_constant = float(payload["objective"]["constant"])
            for row in payload["linear"]:
                prog.linear.append(
                    LinearRow({int(h): float(c) for h, c in row["terms"]}, row["op"], float(row["rhs"]), row["tag"])
                )
            for con in payload["soc"]:
                prog.soc.append((con["w"], con["x"], con["y"], con["tag"]))
            for con in payload["psd"]:
                entries = {
                    (e["i"], e["j"]): ({int(h): float(c) for h, c in e["terms"]}, float(e["constant"]))
                    for e in con["entries"]
                }
                prog.psd.append(PSDConstraint(con["side"], entries, con["tag"]))
            prog._next_tag = payload.get("next_tag", 0)
        except (KeyError, TypeError) as e:
            raise ValidationError(f"malformed conic program document: missing {e}") from None
        return prog

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def __eq__(self, other):
        if not isinstance(other, ConicProgram):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _selection(rows, num_vars, entries):
    """Sparse constant from ``(row, col, value)`` triples; duplicates add up."""
    if not entries:
        return cp.Constant(sp.csr_matrix((rows, num_vars)))
    r, c, v = zip(*entries)
    return cp.Constant(sp.csr_matrix((v, (r, c)), shape=(rows, num_vars)))


def _compile(prog):
    n = prog.num_vars
    x = cp.Variable(n)
    constraints = []

    flagged = [h for h, flag in enumerate(prog.nonneg) if flag]
    if flagged:
        constraints.append(x[flagged] >= 0)

    for op in _OPS:
        rows = [row for row in prog.linear if row.op == op]
        if not rows:
            continue
        A = _selection(len(rows), n, [(i, h, c) for i, row in enumerate(rows) for h, c in row.coeffs.items()])
        b = np.array([row.rhs for row in rows])
        if op == "<=":
            constraints.append(A @ x <= b)
        elif op == ">=":
            constraints.append(A @ x >= b)
        else:
            constraints.append(A @ x == b)

    if prog.soc:
        K = len(prog.soc)
        W = _selection(K, n, [(i, w, 1.0) for i, (w, _, _, _) in enumerate(prog.soc)])
        X = _selection(K, n, [(i, a, 1.0) for i, (_, a, _, _) in enumerate(prog.soc)])
        Y = _selection(K, n, [(i, b, 1.0) for i, (_, _, b, _) in enumerate(prog.soc)])
        bound = 0.5 * ((X + Y) @ x)
        body = cp.vstack([W @ x, 0.5 * ((X - Y) @ x)])
        constraints.append(cp.SOC(bound, body, axis=0))

    for con in prog.psd:
        s = con.side
        triples = []
        offset = np.zeros(s * s)
        for (i, j), (row, const) in con.entries.items():
            for h, c in row.items():
                triples.append((i * s + j, h, c))
                if i != j:
                    triples.append((j * s + i, h, c))
            offset[i * s + j] += const
            if i != j:
                offset[j * s + i] += const
        B = _selection(s * s, n, triples)
        matrix = cp.reshape(B @ x + offset, (s, s), order="C")
        constraints.append(matrix >> 0)

    c = np.zeros(n)
    for h, coef in prog.objective.items():
        c[h] = coef
    expr = c @ x + prog.objective_constant
    objective = cp.Minimize(expr) if prog.sense == "min" else cp.Maximize(expr)
    return cp.Problem(objective, constraints), x


def solver_threads():
    value = os.environ.get("PNORMS_SOLVER_THREADS")
    if not value:
        return None
    try:
        return max(1, int(value))
    except ValueError:
        log.warning(f"ignoring PNORMS_SOLVER_THREADS={value!r}, not an integer")
        return None


def _solver_options(solver, tol):
    threads = solver_threads()
    if solver == "CLARABEL":
        return {"tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol}
    if solver == "SCS":
        return {"eps_abs": tol, "eps_rel": tol, "max_iters": 100_000}
    if solver == "CVXOPT":
        return {"abstol": tol, "reltol": tol, "feastol": tol}
    if solver == "MOSEK":
        params = {
            "MSK_DPAR_INTPNT_CO_TOL_REL_GAP": tol,
            "MSK_DPAR_INTPNT_CO_TOL_PFEAS": tol,
            "MSK_DPAR_INTPNT_CO_TOL_DFEAS": tol,
        }
        if threads:
            params["MSK_IPAR_NUM_THREADS"] = threads
        return {"mosek_params": params}
    return {}


_solver_verbose = False


def set_solver_verbose(flag):
    global _solver_verbose
    _solver_verbose = bool(flag)


# reduced-accuracy statuses fall through to numerical-trouble
_STATUS = {
    cp.OPTIMAL: OPTIMAL,
    cp.INFEASIBLE: INFEASIBLE,
    cp.UNBOUNDED: UNBOUNDED,
}
_INACCURATE = (cp.OPTIMAL_INACCURATE, cp.INFEASIBLE_INACCURATE, cp.UNBOUNDED_INACCURATE)


def solve(prog, tol=DEFAULT_TOL, *, solver=None, verbose=None):
    """Solve ``prog``; a failed solve comes back as numerical-trouble, never a value.

    ``verbose`` defaults to the process-wide setting of :func:`set_solver_verbose`.
    """
    if verbose is None:
        verbose = _solver_verbose
    solver = (solver or DEFAULT_SOLVER).upper()
    problem, x = _compile(prog)
    stats = {"solver": solver, "size": prog.summary()}

    watch = StopWatch()
    watch.start()
    try:
        problem.solve(solver=solver, verbose=verbose, **_solver_options(solver, tol))
    except cp.error.SolverError as e:
        stats["solve_s"] = watch.stop()
        stats["message"] = str(e)
        log.warning(f"{solver} failed on {prog!r}: {e}")
        return SolveResult(NUMERICAL_TROUBLE, stats=stats)
    stats["solve_s"] = watch.stop()

    raw = problem.status
    status = _STATUS.get(raw, NUMERICAL_TROUBLE)
    solver_stats = problem.solver_stats
    stats["iterations"] = getattr(solver_stats, "num_iters", None)
    stats["raw_status"] = raw

    log.debug(
        f"{solver} {raw} on {prog!r} in {stats['solve_s']:.3f}s, {stats['iterations']} iterations"
    )

    if raw in _INACCURATE:
        stats["message"] = f"solver status {raw}: reduced accuracy, no value is reported at tol={tol:g}"
        log.warning(f"{solver} reached only reduced accuracy ({raw}) on {prog!r}")
        return SolveResult(NUMERICAL_TROUBLE, stats=stats)

    if status != OPTIMAL:
        stats["message"] = f"solver status {raw}"
        return SolveResult(status, stats=stats)

    if x.value is None or problem.value is None or not np.isfinite(problem.value):
        stats["message"] = "solver reported optimal without a finite solution"
        return SolveResult(NUMERICAL_TROUBLE, stats=stats)

    return SolveResult(OPTIMAL, float(problem.value), np.asarray(x.value, dtype=np.float64), stats)
