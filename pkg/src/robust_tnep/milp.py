"""Solver-agnostic MILP model building and solving.

Models are accumulated row by row (or in sparse blocks) inside a
:class:`ModelBuilder` and handed to a backend only at solve time. Constraint
right-hand sides may be affine in named *parameters*; this is what lets the
formulation layer dualize an LP symbolically in the uncertain quantities.

Two backends are available: the HiGHS Python bindings (default) and
``scipy.optimize.milp``. Select with ``SolverConfig.backend`` or the
``RTNEP_SOLVER`` environment variable.
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

INF = float("inf")

CONTINUOUS = 0
BINARY = 1
INTEGER = 2

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit"


class SolverError(RuntimeError):
    """Base class for failures raised by the solving layer."""


class BackendUnavailableError(SolverError):
    pass


class NumericalError(SolverError):
    """The backend failed without a trustworthy status."""


class StandardFormError(ValueError):
    pass


def _env_float(name, default):
    value = os.environ.get(name)
    return float(value) if value not in (None, "") else default


@dataclass
class SolverConfig:
    time_limit: float | None = None
    mip_rel_gap: float = 1e-9
    mip_abs_gap: float = 1e-9
    threads: int = 1
    seed: int = 0
    backend: str = "highs"
    verbose: bool = False
    # re-solve MIPs as LPs with integers fixed at their rounded values
    polish: bool = True
    # extra backend options passed through verbatim (HiGHS option names)
    options: dict = field(default_factory=dict)

    @classmethod
    def from_env(cls, **overrides):
        """Defaults overridden by ``RTNEP_*`` environment variables, then kwargs."""
        cfg = cls(
            time_limit=_env_float("RTNEP_TIME_LIMIT", None),
            mip_rel_gap=_env_float("RTNEP_MIP_GAP", 1e-9),
            threads=int(_env_float("RTNEP_THREADS", 1)),
            backend=os.environ.get("RTNEP_SOLVER", "highs"),
        )
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        return cfg


@dataclass
class SolveResult:
    status: str
    objective: float | None = None
    values: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == OPTIMAL

    def value(self, index):
        return self.values[index]


class ModelBuilder:
    """Accumulates variables, linear constraints and a linear objective.

    Rows are stored as ``lo <= a.x <= hi``; parameter terms shift both
    finite sides, so ``a.x >= rhs + P.p`` is kept in parametric form until
    solve time or until :func:`extract_standard_form` is called.
    """

    def __init__(self, name="model", sense="min"):
        if sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")
        self.name = name
        self.sense = sense
        self._lb = []
        self._ub = []
        self._vtype = []
        self._names = []
        self._obj = {}
        self.obj_constant = 0.0
        self._row_lo = []
        self._row_hi = []
        self._row_names = []
        self._coo_r = []
        self._coo_c = []
        self._coo_v = []
        self._param_values = []
        self._param_names = []
        self._prm_r = []
        self._prm_p = []
        self._prm_v = []

    # -- variables --------------------------------------------------------
    @property
    def num_vars(self):
        return len(self._lb)

    @property
    def num_rows(self):
        return len(self._row_lo)

    @property
    def num_params(self):
        return len(self._param_values)

    def add_var(self, lb=0.0, ub=INF, vtype=CONTINUOUS, name=""):
        if vtype == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ValueError(f"variable {name!r}: lb {lb} > ub {ub}")
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._vtype.append(vtype)
        self._names.append(name)
        return len(self._lb) - 1

    def add_vars(self, count, lb=0.0, ub=INF, vtype=CONTINUOUS, name=""):
        lbs = np.broadcast_to(np.asarray(lb, dtype=float), (count,))
        ubs = np.broadcast_to(np.asarray(ub, dtype=float), (count,))
        return np.array(
            [self.add_var(lbs[i], ubs[i], vtype, f"{name}[{i}]" if name else "") for i in range(count)],
            dtype=int,
        )

    def var_bounds(self, index):
        return self._lb[index], self._ub[index]

    def set_bounds(self, index, lb=None, ub=None):
        if lb is not None:
            self._lb[index] = float(lb)
        if ub is not None:
            self._ub[index] = float(ub)

    def var_type(self, index):
        return self._vtype[index]

    def var_name(self, index):
        return self._names[index]

    # -- parameters -------------------------------------------------------
    def add_param(self, value=0.0, name=""):
        self._param_values.append(float(value))
        self._param_names.append(name)
        return len(self._param_values) - 1

    def set_param(self, index, value):
        self._param_values[index] = float(value)

    @property
    def param_values(self):
        return np.array(self._param_values, dtype=float)

    # -- constraints ------------------------------------------------------
    def add_constraint(self, cols, coefs, sense, rhs, params=None, name=""):
        """Add ``sum(coefs*x[cols]) <sense> rhs + sum(c*p for p, c in params)``.

        ``sense`` is one of ``"<="``, ``">="``, ``"=="``.
        """
        if sense == ">=":
            lo, hi = rhs, INF
        elif sense == "<=":
            lo, hi = -INF, rhs
        elif sense == "==":
            lo = hi = rhs
        else:
            raise ValueError(f"unknown constraint sense {sense!r}")
        row = len(self._row_lo)
        n = self.num_vars
        for c in cols:
            if not 0 <= c < n:
                raise IndexError(f"constraint {name!r} references undeclared variable {c}")
        self._row_lo.append(float(lo))
        self._row_hi.append(float(hi))
        self._row_names.append(name)
        self._coo_r.append(np.full(len(cols), row, dtype=int))
        self._coo_c.append(np.asarray(cols, dtype=int))
        self._coo_v.append(np.asarray(coefs, dtype=float))
        if params:
            for p, c in params:
                self._prm_r.append(row)
                self._prm_p.append(p)
                self._prm_v.append(float(c))
        return row

    def add_constraint_block(self, matrix, cols, sense, rhs, name=""):
        """Add ``matrix @ x[cols] <sense> rhs`` for a sparse ``matrix``."""
        matrix = sp.coo_matrix(matrix)
        cols = np.asarray(cols, dtype=int)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (matrix.shape[0],))
        if matrix.shape[1] != len(cols):
            raise ValueError("block column count does not match variable list")
        if len(cols) and (cols.min() < 0 or cols.max() >= self.num_vars):
            raise IndexError("block references undeclared variables")
        first = len(self._row_lo)
        if sense == ">=":
            lo, hi = rhs, np.full_like(rhs, INF)
        elif sense == "<=":
            lo, hi = np.full_like(rhs, -INF), rhs
        elif sense == "==":
            lo, hi = rhs, rhs
        else:
            raise ValueError(f"unknown constraint sense {sense!r}")
        self._row_lo.extend(lo.tolist())
        self._row_hi.extend(hi.tolist())
        self._row_names.extend([name] * matrix.shape[0])
        self._coo_r.append(matrix.row + first)
        self._coo_c.append(cols[matrix.col])
        self._coo_v.append(matrix.data.astype(float))
        return np.arange(first, first + matrix.shape[0])

    # -- objective --------------------------------------------------------
    def set_objective(self, cols, coefs, constant=0.0, sense=None):
        self._obj = {}
        self.obj_constant = float(constant)
        if sense is not None:
            self.sense = sense
        self.add_objective_terms(cols, coefs)

    def add_objective_terms(self, cols, coefs):
        for c, v in zip(cols, coefs):
            self._obj[int(c)] = self._obj.get(int(c), 0.0) + float(v)

    # -- matrix views -----------------------------------------------------
    def objective_vector(self):
        c = np.zeros(self.num_vars)
        for k, v in self._obj.items():
            c[k] = v
        return c

    def matrix(self):
        if self._coo_r:
            r = np.concatenate(self._coo_r)
            c = np.concatenate(self._coo_c)
            v = np.concatenate(self._coo_v)
        else:
            r = c = np.zeros(0, dtype=int)
            v = np.zeros(0)
        return sp.csr_matrix((v, (r, c)), shape=(self.num_rows, self.num_vars))

    def param_matrix(self):
        return sp.csr_matrix(
            (self._prm_v, (self._prm_r, self._prm_p)),
            shape=(self.num_rows, self.num_params),
        )

    def row_bounds(self):
        """Row bounds with parameter terms evaluated at the current values."""
        lo = np.array(self._row_lo)
        hi = np.array(self._row_hi)
        if self._prm_r:
            shift = self.param_matrix() @ self.param_values
            lo = lo + shift
            hi = hi + shift
        return lo, hi

    def bounds(self):
        return np.array(self._lb), np.array(self._ub)

    def vtypes(self):
        return np.array(self._vtype, dtype=int)

    def is_mip(self):
        return any(t != CONTINUOUS for t in self._vtype)

    def evaluate(self, values):
        return float(self.objective_vector() @ values) + self.obj_constant

    def check_feasible(self, values, tol=1e-6):
        """Maximum violation of rows, bounds and integrality at ``values``."""
        values = np.asarray(values, dtype=float)
        lo, hi = self.row_bounds()
        act = self.matrix() @ values
        lb, ub = self.bounds()
        viol = [0.0]
        viol.append(float(np.max(np.maximum(lo - act, 0.0), initial=0.0)))
        viol.append(float(np.max(np.maximum(act - hi, 0.0), initial=0.0)))
        viol.append(float(np.max(np.maximum(lb - values, 0.0), initial=0.0)))
        viol.append(float(np.max(np.maximum(values - ub, 0.0), initial=0.0)))
        ints = self.vtypes() != CONTINUOUS
        if ints.any():
            viol.append(float(np.max(np.abs(values[ints] - np.round(values[ints])))))
        return max(viol)


def solve(model, config=None):
    """Solve ``model`` with the configured backend.

    With ``config.polish`` a MIP optimum is followed by an LP solve with every
    integer variable fixed at its rounded value, so reported values satisfy
    integrality exactly and big-M rows hold without tolerance slack.
    """
    config = config or SolverConfig()
    if config.backend == "highs":
        backend = _solve_highs
    elif config.backend == "scipy":
        backend = _solve_scipy
    else:
        raise BackendUnavailableError(f"unknown solver backend {config.backend!r}")
    lb, ub = model.bounds()
    kinds = model.vtypes()
    res = backend(model, config, lb, ub, kinds)
    if not (config.polish and res.optimal and (kinds != CONTINUOUS).any()):
        return res
    ints = kinds != CONTINUOUS
    fixed = np.round(res.values[ints])
    lb2, ub2 = lb.copy(), ub.copy()
    lb2[ints] = fixed
    ub2[ints] = fixed
    lp = backend(model, config, lb2, ub2, np.zeros_like(kinds))
    if not lp.optimal:
        return res
    lp.values[ints] = fixed
    lp.stats = {**res.stats, "time": res.stats["time"] + lp.stats["time"], "mip_objective": res.objective}
    return lp


def _solve_highs(model, config, lb, ub, kinds):
    try:
        import highspy
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise BackendUnavailableError("highspy is not installed") from exc

    h = highspy.Highs()
    h.setOptionValue("output_flag", bool(config.verbose))
    h.setOptionValue("random_seed", int(config.seed))
    h.setOptionValue("threads", int(config.threads))
    h.setOptionValue("mip_rel_gap", float(config.mip_rel_gap))
    h.setOptionValue("mip_abs_gap", float(config.mip_abs_gap))
    for key, value in config.options.items():
        h.setOptionValue(key, value)
    if config.time_limit:
        h.setOptionValue("time_limit", float(config.time_limit))

    n = model.num_vars
    lp = highspy.HighsLp()
    lp.num_col_ = n
    lp.num_row_ = model.num_rows
    lp.col_cost_ = model.objective_vector()
    lp.offset_ = model.obj_constant
    lp.col_lower_ = np.where(np.isinf(lb), -highspy.kHighsInf, lb)
    lp.col_upper_ = np.where(np.isinf(ub), highspy.kHighsInf, ub)
    lo, hi = model.row_bounds()
    lp.row_lower_ = np.where(np.isinf(lo), -highspy.kHighsInf, lo)
    lp.row_upper_ = np.where(np.isinf(hi), highspy.kHighsInf, hi)
    csc = model.matrix().tocsc()
    csc.sum_duplicates()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = csc.indptr
    lp.a_matrix_.index_ = csc.indices
    lp.a_matrix_.value_ = csc.data
    if model.sense == "max":
        lp.sense_ = highspy.ObjSense.kMaximize
    is_mip = bool((kinds != CONTINUOUS).any())
    if is_mip:
        lp.integrality_ = [
            highspy.HighsVarType.kContinuous if k == CONTINUOUS else highspy.HighsVarType.kInteger
            for k in kinds
        ]
    status = h.passModel(lp)
    if status == highspy.HighsStatus.kError:
        raise NumericalError(f"{model.name}: HiGHS rejected the model")
    start = time.perf_counter()
    h.run()
    elapsed = time.perf_counter() - start
    ms = h.getModelStatus()
    info = h.getInfo()
    stats = {"time": elapsed, "backend": "highs"}
    MS = highspy.HighsModelStatus
    if ms == MS.kOptimal:
        values = np.array(h.getSolution().col_value, dtype=float)
        if is_mip:
            stats["gap"] = float(info.mip_gap)
            stats["nodes"] = int(info.mip_node_count)
            stats["bound"] = float(info.mip_dual_bound)
        return SolveResult(OPTIMAL, float(info.objective_function_value), values, stats)
    if ms == MS.kInfeasible:
        return SolveResult(INFEASIBLE, stats=stats)
    if ms in (MS.kUnbounded, MS.kUnboundedOrInfeasible):
        return SolveResult(UNBOUNDED, stats=stats)
    if ms in (MS.kTimeLimit, MS.kIterationLimit, MS.kSolutionLimit, MS.kInterrupt):
        return SolveResult(LIMIT, stats=stats)
    raise NumericalError(f"{model.name}: HiGHS returned {h.modelStatusToString(ms)}")


def _solve_scipy(model, config, lb, ub, kinds):
    from scipy.optimize import Bounds, LinearConstraint, milp

    c = model.objective_vector()
    if model.sense == "max":
        c = -c
    lo, hi = model.row_bounds()
    constraints = [LinearConstraint(model.matrix(), lo, hi)] if model.num_rows else []
    integrality = (kinds != CONTINUOUS).astype(int)
    options = {"mip_rel_gap": config.mip_rel_gap, "disp": bool(config.verbose)}
    if config.time_limit:
        options["time_limit"] = config.time_limit
    start = time.perf_counter()
    res = milp(c, integrality=integrality, bounds=Bounds(lb, ub), constraints=constraints, options=options)
    stats = {"time": time.perf_counter() - start, "backend": "scipy"}
    if res.status == 0:
        obj = float(res.fun)
        if model.sense == "max":
            obj = -obj
        obj += model.obj_constant
        if getattr(res, "mip_gap", None) is not None:
            stats["gap"] = float(res.mip_gap)
        return SolveResult(OPTIMAL, obj, np.asarray(res.x, dtype=float), stats)
    if res.status == 2:
        return SolveResult(INFEASIBLE, stats=stats)
    if res.status == 3:
        return SolveResult(UNBOUNDED, stats=stats)
    if res.status == 1:
        return SolveResult(LIMIT, stats=stats)
    raise NumericalError(f"{model.name}: scipy.milp failed: {res.message}")


@dataclass
class StandardForm:
    """``min c.y  s.t.  E y = r0 + R p,  F y >= s0 + S p`` over free ``y``."""

    E: sp.csr_matrix
    r0: np.ndarray
    R: sp.csr_matrix
    F: sp.csr_matrix
    s0: np.ndarray
    S: sp.csr_matrix
    c: np.ndarray
    constant: float = 0.0

    def rhs(self, params):
        params = np.asarray(params, dtype=float)
        return self.r0 + self.R @ params, self.s0 + self.S @ params


def extract_standard_form(model):
    """Rewrite a continuous minimization model in equality/>= block form.

    Finite variable bounds become rows of the inequality block. A maximization
    is negated into a minimization.
    """
    if model.is_mip():
        bad = [model.var_name(i) or str(i) for i in np.flatnonzero(model.vtypes() != CONTINUOUS)]
        raise StandardFormError(f"unfixed discrete variables present: {bad[:5]}")
    A = model.matrix()
    P = model.param_matrix()
    lo = np.array(model._row_lo)
    hi = np.array(model._row_hi)
    n = model.num_vars

    eq = np.flatnonzero(lo == hi)
    ge = np.flatnonzero((lo != hi) & np.isfinite(lo))
    le = np.flatnonzero((lo != hi) & np.isfinite(hi))

    lb, ub = model.bounds()
    has_lb = np.flatnonzero(np.isfinite(lb))
    has_ub = np.flatnonzero(np.isfinite(ub))
    eye = sp.identity(n, format="csr")
    zeros_lb = sp.csr_matrix((len(has_lb), model.num_params))
    zeros_ub = sp.csr_matrix((len(has_ub), model.num_params))

    F = sp.vstack([A[ge], -A[le], eye[has_lb], -eye[has_ub]], format="csr")
    s0 = np.concatenate([lo[ge], -hi[le], lb[has_lb], -ub[has_ub]])
    S = sp.vstack([P[ge], -P[le], zeros_lb, zeros_ub], format="csr")
    c = model.objective_vector()
    constant = model.obj_constant
    if model.sense == "max":
        c, constant = -c, -constant
    return StandardForm(A[eq], lo[eq], P[eq], F, s0, S, c, constant)
