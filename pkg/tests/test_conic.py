import logging

import cvxpy as cp
import numpy as np
import pytest
from numpy.testing import assert_allclose

from pnorms.conic import (
    INFEASIBLE,
    NUMERICAL_TROUBLE,
    OPTIMAL,
    UNBOUNDED,
    ConicProgram,
    SolveResult,
    smat,
    solve,
    solver_threads,
    svec,
)
from pnorms.matrix import matrix_pv
from pnorms.powercone import geo_mean_block
from pnorms.utils.errors import SolverFailure, ValidationError


def test_linear_minimum():
    prog = ConicProgram("min")
    x = prog.add_var("x")
    prog.add_linear({x: 1.0}, ">=", 1.0)
    prog.set_objective({x: 1.0})
    result = solve(prog).require_optimal()
    assert result.objective == pytest.approx(1, abs=1e-7)
    assert result.value([x])[0] == pytest.approx(1, abs=1e-7)
    assert result.stats["solver"] == "CLARABEL"
    assert "solve_s" in result.stats


def test_rotated_pair():
    # w^2 <= x y with x = 4, y = 1
    prog = ConicProgram("max")
    w, x, y = prog.add_vars(3, "v")
    prog.add_linear({x: 1.0}, "==", 4.0)
    prog.add_linear({y: 1.0}, "==", 1.0)
    prog.add_rotated_pair(w, x, y)
    prog.set_objective({w: 1.0})
    assert solve(prog).require_optimal().objective == pytest.approx(2, rel=1e-7)


def test_geo_mean_block_program():
    prog = ConicProgram("max")
    x = prog.add_vars(2, "x")
    y = prog.add_var("y")
    prog.add_linear({x[0]: 1.0}, "==", 4.0)
    prog.add_linear({x[1]: 1.0}, "==", 1.0)
    prog.add_block(geo_mean_block(x, y))
    prog.set_objective({y: 1.0})
    assert solve(prog).require_optimal().objective == pytest.approx(2, rel=1e-7)


def test_psd_trace():
    # max tr X with X PSD and unit diagonal bound is attained at the identity
    prog = ConicProgram("max")
    X = prog.add_psd_variable(2)
    for i in range(2):
        prog.add_linear({int(X[i, i]): 1.0}, "<=", 1.0)
    prog.set_objective({int(X[0, 0]): 1.0, int(X[1, 1]): 1.0})
    result = solve(prog).require_optimal()
    assert result.objective == pytest.approx(2, rel=1e-7)
    assert X[0, 1] == X[1, 0]


def test_psd_embed_constant():
    # [[1, x], [x, 1]] is PSD exactly for |x| <= 1
    prog = ConicProgram("max")
    x = prog.add_var("x")
    prog.psd_embed(2, {(1, 0): {x: 1.0}}, constant=np.eye(2))
    prog.set_objective({x: 1.0})
    assert solve(prog).require_optimal().objective == pytest.approx(1, rel=1e-7)


def test_psd_embed_validation():
    prog = ConicProgram()
    x = prog.add_var()
    with pytest.raises(ValidationError):
        prog.psd_embed(2, {(0, 2): {x: 1.0}})
    with pytest.raises(ValidationError):
        prog.psd_embed(2, {}, constant=np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_infeasible_and_unbounded():
    prog = ConicProgram("min")
    x = prog.add_var("x")
    prog.add_linear({x: 1.0}, ">=", 1.0)
    prog.add_linear({x: 1.0}, "<=", 0.0)
    prog.set_objective({x: 1.0})
    result = solve(prog)
    assert result.status == INFEASIBLE
    assert result.objective is None
    with pytest.raises(SolverFailure, match="infeasible") as info:
        result.require_optimal("test program")
    assert info.value.result is result

    prog = ConicProgram("max")
    x = prog.add_var("x")
    prog.add_linear({x: 1.0}, ">=", 0.0)
    prog.set_objective({x: 1.0})
    assert solve(prog).status == UNBOUNDED


@pytest.fixture
def reduced_accuracy(monkeypatch):
    original = cp.Problem.solve

    def solve_inaccurately(self, *args, **kwargs):
        value = original(self, *args, **kwargs)
        self._status = cp.OPTIMAL_INACCURATE
        return value

    monkeypatch.setattr(cp.Problem, "solve", solve_inaccurately)


def test_reduced_accuracy_is_numerical_trouble(reduced_accuracy, caplog):
    prog = ConicProgram("min")
    x = prog.add_var("x")
    prog.add_linear({x: 1.0}, ">=", 1.0)
    prog.set_objective({x: 1.0})
    with caplog.at_level(logging.WARNING, logger="pnorms.conic"):
        result = solve(prog)
    assert result.status == NUMERICAL_TROUBLE
    assert result.objective is None
    assert result.stats["raw_status"] == cp.OPTIMAL_INACCURATE
    assert "reduced accuracy" in result.stats["message"]
    assert "reduced accuracy" in caplog.text
    with pytest.raises(SolverFailure, match="numerical-trouble"):
        result.require_optimal()


def test_reduced_accuracy_never_reaches_a_bracket(reduced_accuracy):
    with pytest.raises(SolverFailure):
        matrix_pv(np.eye(3), 3)


def test_handle_and_sense_checks():
    prog = ConicProgram()
    with pytest.raises(ValidationError):
        prog.add_linear({0: 1.0}, "<=", 1.0)
    x = prog.add_var()
    with pytest.raises(ValidationError):
        prog.add_linear({x: 1.0}, "<", 1.0)
    with pytest.raises(ValidationError):
        prog.set_objective({x: 1.0}, sense="maximize")
    with pytest.raises(ValidationError):
        ConicProgram("argmin")


def test_serialization_roundtrip(tmp_path):
    prog = ConicProgram("max")
    x = prog.add_vars(2, "x", nonneg=True)
    y = prog.add_var("y")
    prog.add_linear({x[0]: 1.0, x[1]: 2.0}, "<=", 3.0)
    prog.add_block(geo_mean_block(x, y))
    X = prog.add_psd_variable(2)
    prog.psd_embed(2, {(0, 1): {y: 1.0}}, constant=np.eye(2))
    prog.set_objective({y: 1.0, int(X[0, 0]): -1.0})

    copy = ConicProgram.from_dict(prog.to_dict())
    assert copy == prog
    assert copy.summary() == prog.summary()

    prog.save(tmp_path / "prog.json")
    loaded = ConicProgram.load(tmp_path / "prog.json")
    assert loaded == prog
    assert solve(loaded).require_optimal().objective == pytest.approx(solve(prog).objective, rel=1e-7)

    with pytest.raises(ValidationError, match="malformed"):
        ConicProgram.from_dict({"sense": "min"})


def test_remove_block():
    prog = ConicProgram("max")
    x = prog.add_vars(2, "x")
    y = prog.add_var("y")
    prog.add_linear({x[0]: 1.0}, "==", 4.0)
    prog.add_linear({x[1]: 1.0}, "==", 1.0)
    prog.add_linear({y: 1.0}, "<=", 10.0)
    tag, aux = prog.add_block(geo_mean_block(x, y))
    assert aux == []
    assert solve(prog).require_optimal().objective == pytest.approx(2, rel=1e-7)

    prog.remove_block(tag)
    assert prog.summary()["soc"] == 0
    assert solve(prog).require_optimal().objective == pytest.approx(10, rel=1e-7)


def test_svec_smat():
    rng = np.random.default_rng(30)
    A = rng.normal(size=(4, 4))
    A = A + A.T
    B = rng.normal(size=(4, 4))
    B = B + B.T
    assert svec(A).size == 10
    assert_allclose(smat(svec(A)), A, atol=1e-12)
    assert svec(A) @ svec(B) == pytest.approx(np.sum(A * B))
    with pytest.raises(ValidationError):
        smat(np.ones(5), side=3)


def test_solve_result_invariant():
    with pytest.raises(ValueError):
        SolveResult(OPTIMAL)
    with pytest.raises(ValueError):
        SolveResult(NUMERICAL_TROUBLE, objective=1.0)
    assert not SolveResult(NUMERICAL_TROUBLE).optimal


def test_solver_threads(monkeypatch, caplog):
    monkeypatch.delenv("PNORMS_SOLVER_THREADS", raising=False)
    assert solver_threads() is None
    monkeypatch.setenv("PNORMS_SOLVER_THREADS", "4")
    assert solver_threads() == 4
    monkeypatch.setenv("PNORMS_SOLVER_THREADS", "0")
    assert solver_threads() == 1
    monkeypatch.setenv("PNORMS_SOLVER_THREADS", "many")
    assert solver_threads() is None
    assert "not an integer" in caplog.text
