import enum
import logging
import os

import yaml

from pnorms.conic import DEFAULT_SOLVER, DEFAULT_TOL
from pnorms.covering import DEFAULT_CAP, CoveringConstants
from pnorms.tensor_norms import DEFAULT_PROGRAM_BUDGET, DEFAULT_TUPLE_CAP


# NOTE: This is not a config file
# This is only a helper class for the actual
# config file


class Verbosity(enum.IntEnum):
    """How much the library logs; each -v on the command line steps it up."""

    QUIET = 0
    INFO = 1
    DEBUG = 2

    def __str__(self):
        return self.name.lower()

    @classmethod
    def from_count(cls, count):
        return cls(min(max(count, 0), cls.DEBUG))

    @property
    def log_level(self):
        return {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}[int(self)]

    @property
    def solver_output(self):
        # cvxpy iteration logs only at the top level
        return self is Verbosity.DEBUG


class Config:
    """config.yml helper class"""

    def __init__(self, file_path=None, *, data=None):
        self._file_path = file_path

        if data is None:
            with open(file_path, "r") as config:
                data = yaml.safe_load(config) or {}
        self._data = data

        # Everything is optional, defaults match the library's
        # Conic solver passed to cvxpy
        self.solver = self._data.get("solver", DEFAULT_SOLVER)
        # Solver tolerance (gap and feasibility)
        self.tol = float(self._data.get("tol", DEFAULT_TOL))
        # Most vectors a hitting set builder may emit
        self.hitset_cap = int(self._data.get("hitset-cap", DEFAULT_CAP))
        # Most hitting-set tuples the spectral relaxation may enumerate
        self.tuple_cap = int(self._data.get("tuple-cap", DEFAULT_TUPLE_CAP))
        # Most cone blocks a covering program may carry
        self.program_budget = int(self._data.get("program-budget", DEFAULT_PROGRAM_BUDGET))
        # Constants of the randomized construction
        self.covering_constants = CoveringConstants(**self._data.get("covering-constants", {}))
        # 0: Warnings only | 1: Info logs | 2: Debug logs and solver output
        self.verbosity = Verbosity(self._data.get("verbosity", 0))
        # Rotating log file
        self.log_file = self._data.get("log-file", "pnorms.log")
        # Bench worker processes
        self.workers = int(self._data.get("workers", 1))

    @classmethod
    def default(cls):
        return cls(data={})

    @classmethod
    def from_env(cls):
        """The file named by PNORMS_CONFIG, else config.yml if present, else defaults."""
        path = os.environ.get("PNORMS_CONFIG")
        if path:
            return cls(path)
        if os.path.exists("config.yml"):
            return cls("config.yml")
        return cls.default()
