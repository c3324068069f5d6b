"""Linear-programming layer shared by placement, scheduling and evaluation.

Models are assembled block-wise (variables and constraints are added as
numpy index/coefficient arrays) so that formulations with tens of thousands
of routing variables can be built without Python-level loops per entry.

Two backends sit behind :func:`solve_lp`:

``"simplex"``
    A dense two-phase revised simplex written here, with Dantzig pricing and
    Bland's rule as the anti-cycling fallback. Adequate for desk-scale models.
``"highs"``
    ``scipy.optimize.linprog`` with the HiGHS solver, for larger models.

``"auto"`` picks the simplex for small models and HiGHS otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

__all__ = [
    "EPS_FEAS",
    "EPS_OPT",
    "LinearModel",
    "LpSolution",
    "ModelError",
    "SolverError",
    "solve_lp",
]

EPS_FEAS = 1e-7
EPS_OPT = 1e-6

# "auto" hands models above this size to HiGHS.
SIMPLEX_MAX_VARS = 400
SIMPLEX_MAX_ROWS = 300

_SENSES = {"<=": -1, "==": 0, ">=": 1}


class ModelError(ValueError):
    """The model itself is malformed (as opposed to infeasible)."""


class SolverError(RuntimeError):
    """The backend failed for numerical reasons."""


class LinearModel:
    """A linear program: bounded variables, linear constraints, linear objective.

    Examples
    --------
    >>> m = LinearModel(sense="max")
    >>> x = m.add_variable("x", 0.0, 3.0)
    >>> m.set_objective({x: 1.0})
    >>> solve_lp(m).objective_value
    3.0
    """

    def __init__(self, sense: str = "min"):
        if sense not in ("min", "max"):
            raise ModelError(f"objective sense must be 'min' or 'max', got {sense!r}")
        self.sense = sense
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._blocks: list[tuple[str, int, int, bool]] = []  # (name, start, count, scalar)
        self.n_vars = 0
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._senses: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self.n_cons = 0
        self._obj = np.zeros(0)
        self._version = 0  # bumped on every change; keys the assembly cache
        self._cache = None

    # -- variables -----------------------------------------------------
    def add_variables(self, count: int, lb=0.0, ub=np.inf, name: str = "x") -> np.ndarray:
        """Add ``count`` variables named ``name[i]``; returns their indices."""
        count = int(count)
        if count < 0:
            raise ModelError("variable count must be nonnegative")
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (count,)).copy()
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (count,)).copy()
        if np.isnan(lb).any() or np.isnan(ub).any():
            raise ModelError(f"NaN bound on variables {name!r}")
        if (lb > ub).any():
            raise ModelError(f"lower bound exceeds upper bound for variables {name!r}")
        if np.isposinf(lb).any() or np.isneginf(ub).any():
            raise ModelError(f"infinite bound on the wrong side for variables {name!r}")
        start = self.n_vars
        self._lb.append(lb)
        self._ub.append(ub)
        self._blocks.append((name, start, count, False))
        self.n_vars += count
        self._version += 1
        return np.arange(start, start + count)

    def add_variable(self, name: str, lb: float = 0.0, ub: float = np.inf) -> int:
        idx = self.add_variables(1, lb, ub, name=name)
        name_, start, count, _ = self._blocks[-1]
        self._blocks[-1] = (name_, start, count, True)
        return int(idx[0])

    def variable_name(self, index: int) -> str:
        for name, start, count, scalar in self._blocks:
            if start <= index < start + count:
                return name if scalar else f"{name}[{index - start}]"
        raise IndexError(index)

    def variable_names(self) -> list[str]:
        out = []
        for name, start, count, scalar in self._blocks:
            out.extend([name] if scalar else [f"{name}[{i}]" for i in range(count)])
        return out

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._lb:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(self._lb), np.concatenate(self._ub)

    # -- constraints ---------------------------------------------------
    def add_constraints(self, rows, cols, coefs, sense, rhs) -> np.ndarray:
        """Add a block of constraints given in coordinate form.

        ``rows`` are local to the block (``0..k-1`` where ``k = len(rhs)``);
        duplicate ``(row, col)`` entries are summed. ``sense`` is one of
        ``"<=", "==", ">="`` or an array of them.
        """
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        k = rhs.shape[0]
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        coefs = np.broadcast_to(np.asarray(coefs, dtype=float), rows.shape).copy()
        if not (rows.shape == cols.shape):
            raise ModelError("rows and cols must have the same length")
        if rows.size and (rows.min() < 0 or rows.max() >= k):
            raise ModelError("constraint row index outside the block")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_vars):
            raise ModelError("constraint references an undeclared variable")
        if not np.isfinite(coefs).all() or not np.isfinite(rhs).all():
            raise ModelError("constraint coefficients and right-hand sides must be finite")
        if isinstance(sense, str):
            if sense not in _SENSES:
                raise ModelError(f"unknown relation {sense!r}")
            senses = np.full(k, _SENSES[sense], dtype=np.int8)
        else:
            try:
                senses = np.array([_SENSES[s] for s in sense], dtype=np.int8)
            except KeyError as exc:
                raise ModelError(f"unknown relation {exc.args[0]!r}") from None
            if senses.shape[0] != k:
                raise ModelError("one relation per constraint is required")
        start = self.n_cons
        self._rows.append(rows + start)
        self._cols.append(cols)
        self._vals.append(coefs)
        self._senses.append(senses)
        self._rhs.append(rhs)
        self.n_cons += k
        self._version += 1
        return np.arange(start, start + k)

    def add_constraint(self, terms: dict, sense: str, rhs: float) -> int:
        cols = np.fromiter(terms.keys(), dtype=np.int64, count=len(terms))
        vals = np.fromiter(terms.values(), dtype=float, count=len(terms))
        return int(self.add_constraints(np.zeros(len(terms), dtype=np.int64), cols, vals, sense, [rhs])[0])

    # -- objective -----------------------------------------------------
    def set_objective(self, terms, coefs=None, sense: Optional[str] = None) -> None:
        """Set the objective from ``{index: coef}`` or parallel index/coef arrays."""
        if sense is not None:
            if sense not in ("min", "max"):
                raise ModelError(f"objective sense must be 'min' or 'max', got {sense!r}")
            self.sense = sense
        if isinstance(terms, dict):
            idx = np.fromiter(terms.keys(), dtype=np.int64, count=len(terms))
            coefs = np.fromiter(terms.values(), dtype=float, count=len(terms))
        else:
            idx = np.asarray(terms, dtype=np.int64).ravel()
            coefs = np.broadcast_to(np.asarray(coefs, dtype=float), idx.shape)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_vars):
            raise ModelError("objective references an undeclared variable")
        if not np.isfinite(coefs).all():
            raise ModelError("objective coefficients must be finite")
        obj = np.zeros(self.n_vars)
        np.add.at(obj, idx, coefs)
        self._obj = obj
        self._version += 1

    # -- assembly ------------------------------------------------------
    def matrices(self):
        """Return ``(c, A, senses, rhs, lb, ub)`` with ``A`` as CSR."""
        key = self._version
        if self._cache is not None and self._cache[0] == key:
            return self._cache[1]
        out = self._assemble()
        self._cache = (key, out)
        return out

    def _assemble(self):
        c = np.zeros(self.n_vars)
        c[: self._obj.size] = self._obj
        if self._rows:
            rows = np.concatenate(self._rows)
            cols = np.concatenate(self._cols)
            vals = np.concatenate(self._vals)
            senses = np.concatenate(self._senses)
            rhs = np.concatenate(self._rhs)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = rhs = np.zeros(0)
            senses = np.zeros(0, dtype=np.int8)
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_cons, self.n_vars))
        lb, ub = self.bounds
        return c, A, senses, rhs, lb, ub

    def to_lp_text(self) -> str:
        """Render the model in CPLEX LP text format for external cross-checks."""
        c, A, senses, rhs, lb, ub = self.matrices()
        names = [n.replace("[", "(").replace("]", ")") for n in self.variable_names()]

        def expr(idx, vals):
            parts = []
            for j, v in zip(idx, vals):
                if v == 0:
                    continue
                parts.append(f"{'-' if v < 0 else '+'} {abs(v):.12g} {names[j]}")
            return " ".join(parts) if parts else "0 " + (names[0] if names else "")

        lines = ["Maximize" if self.sense == "max" else "Minimize"]
        nz = np.flatnonzero(c)
        lines.append(" obj: " + expr(nz, c[nz]))
        lines.append("Subject To")
        rel = {-1: "<=", 0: "=", 1: ">="}
        for i in range(A.shape[0]):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            lines.append(f" c{i}: {expr(A.indices[lo:hi], A.data[lo:hi])} {rel[int(senses[i])]} {rhs[i]:.12g}")
        lines.append("Bounds")
        for j, name in enumerate(names):
            lo = "-inf" if np.isneginf(lb[j]) else f"{lb[j]:.12g}"
            hi = "+inf" if np.isposinf(ub[j]) else f"{ub[j]:.12g}"
            lines.append(f" {lo} <= {name} <= {hi}")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: str
    x: np.ndarray
    objective_value: float
    method: str = ""
    names: Sequence[str] = field(default=(), repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def values(self) -> dict:
        return dict(zip(self.names, self.x.tolist()))

    def __getitem__(self, idx):
        return self.x[idx]


def solve_lp(model: LinearModel, method: str = "auto", rhs=None) -> LpSolution:
    """Solve ``model``; infeasible and unbounded outcomes are reported in ``status``.

    ``rhs`` replaces the constraint right-hand sides for this solve only. The
    model is not mutated, so one instance may be solved repeatedly or from
    several threads.
    """
    if method not in ("auto", "simplex", "highs"):
        raise ModelError(f"unknown LP method {method!r}")
    c, A, senses, rhs0, lb, ub = model.matrices()
    if rhs is None:
        rhs = rhs0
    else:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != rhs0.shape or not np.isfinite(rhs).all():
            raise ModelError("rhs override must be finite with one entry per constraint")
    if model.n_vars == 0:
        raise ModelError("model has no variables")
    if method == "auto":
        small = model.n_vars <= SIMPLEX_MAX_VARS and model.n_cons <= SIMPLEX_MAX_ROWS
        method = "simplex" if small else "highs"
    sign = -1.0 if model.sense == "max" else 1.0
    if method == "simplex":
        status, x = _simplex(sign * c, A.toarray(), senses, rhs, lb, ub)
    else:
        status, x = _highs(sign * c, A, senses, rhs, lb, ub)
    obj = float(c @ x) if status == "optimal" else float("nan")
    names = _LazyNames(model)
    return LpSolution(status=status, x=x, objective_value=obj, method=method, names=names)


class _LazyNames(Sequence):
    def __init__(self, model):
        self._model = model
        self._cache = None

    def _names(self):
        if self._cache is None:
            self._cache = self._model.variable_names()
        return self._cache

    def __getitem__(self, i):
        return self._names()[i]

    def __len__(self):
        return self._model.n_vars


# ----------------------------------------------------------------------
# HiGHS adapter
# ----------------------------------------------------------------------
def _highs(c, A, senses, rhs, lb, ub):
    A = A.tocsr()
    le = senses == -1
    ge = senses == 1
    eq = senses == 0
    A_ub = sparse.vstack([A[le], -A[ge]]).tocsr() if (le.any() or ge.any()) else None
    b_ub = np.concatenate([rhs[le], -rhs[ge]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = rhs[eq] if eq.any() else None
    bounds = np.column_stack([np.where(np.isneginf(lb), -np.inf, lb), np.where(np.isposinf(ub), np.inf, ub)])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 0:
        return "optimal", np.asarray(res.x, dtype=float)
    if res.status == 2:
        return "infeasible", np.full(c.shape[0], np.nan)
    if res.status == 3:
        return "unbounded", np.full(c.shape[0], np.nan)
    raise SolverError(f"HiGHS failed: {res.message}")


# ----------------------------------------------------------------------
# dense revised simplex
# ----------------------------------------------------------------------
_PIV_TOL = 1e-9
_RC_TOL = 1e-9
_REFACTOR_EVERY = 50
_DEGENERATE_STREAK = 30


def _simplex(c, A, senses, rhs, lb, ub):
    """Minimize ``c @ x`` subject to ``A x (senses) rhs`` and ``lb <= x <= ub``."""
    m0, n0 = A.shape
    # Map every original variable onto nonnegative standard-form columns:
    # x = shift + sum(coef * y_col).
    cols = []  # (orig_index, coef)
    shift = np.zeros(n0)
    extra_rows = []  # (col_index, bound) for y_col <= bound
    for j in range(n0):
        lo, hi = lb[j], ub[j]
        if np.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ny = len(cols)
    M = np.zeros((m0 + len(extra_rows), ny))
    cy = np.zeros(ny)
    for k, (j, coef) in enumerate(cols):
        M[:m0, k] = coef * A[:, j]
        cy[k] = coef * c[j]
    b = np.concatenate([rhs - A @ shift, [bnd for _, bnd in extra_rows]])
    sns = np.concatenate([senses, -np.ones(len(extra_rows), dtype=np.int8)])
    for r, (k, _) in enumerate(extra_rows):
        M[m0 + r, k] = 1.0

    # Slack columns, then flip rows so that b >= 0.
    m = M.shape[0]
    slack_rows = np.flatnonzero(sns != 0)
    S = np.zeros((m, slack_rows.size))
    S[slack_rows, np.arange(slack_rows.size)] = np.where(sns[slack_rows] == -1, 1.0, -1.0)
    T = np.hstack([M, S])
    neg = b < 0
    T[neg] *= -1.0
    b = np.abs(b)
    n = T.shape[1]
    cost = np.concatenate([cy, np.zeros(slack_rows.size)])

    # Initial basis: a +1 slack where available, an artificial elsewhere.
    basis = np.full(m, -1, dtype=np.int64)
    for k, r in enumerate(slack_rows):
        if T[r, ny + k] > 0:
            basis[r] = ny + k
    art_rows = np.flatnonzero(basis < 0)
    n_art = art_rows.size
    if n_art:
        Art = np.zeros((m, n_art))
        Art[art_rows, np.arange(n_art)] = 1.0
        T = np.hstack([T, Art])
        basis[art_rows] = n + np.arange(n_art)
    ntot = T.shape[1]
    allowed = np.ones(ntot, dtype=bool)

    if n_art:
        c1 = np.zeros(ntot)
        c1[n:] = 1.0
        status, basis, xb = _revised(T, b, c1, basis, allowed)
        if status != "optimal":  # phase 1 is bounded below by zero
            raise SolverError("phase 1 failed")
        if c1[basis] @ xb > 1e-7 * max(1.0, np.abs(b).max()):
            return "infeasible", np.full(n0, np.nan)
        basis, T, b, keep = _drive_out_artificials(T, b, basis, n)
        allowed = np.zeros(T.shape[1], dtype=bool)
        allowed[:n] = True
    c2 = np.zeros(T.shape[1])
    c2[:n] = cost
    status, basis, xb = _revised(T, b, c2, basis, allowed)
    if status == "unbounded":
        return "unbounded", np.full(n0, np.nan)
    y = np.zeros(T.shape[1])
    y[basis] = xb
    y = np.maximum(y[:ny], 0.0)
    x = shift.copy()
    for k, (j, coef) in enumerate(cols):
        x[j] += coef * y[k]
    return "optimal", x


def _drive_out_artificials(T, b, basis, n):
    """Pivot zero-level artificials out of the basis; drop redundant rows."""
    m = T.shape[0]
    B_inv = np.linalg.inv(T[:, basis])
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] < n:
            continue
        row = B_inv[r] @ T[:, :n]
        row[basis[basis < n]] = 0.0
        cand = np.flatnonzero(np.abs(row) > 1e-7)
        if cand.size:
            j = cand[np.argmax(np.abs(row[cand]))]
            basis[r] = j
            B_inv = np.linalg.inv(T[:, basis])
        else:
            keep[r] = False
    if not keep.all():
        T = T[keep]
        b = b[keep]
        basis = basis[keep]
    return basis, T, b, keep


def _revised(T, b, cost, basis, allowed):
    m, ntot = T.shape
    basis = basis.copy()
    B_inv = np.linalg.inv(T[:, basis])
    xb = B_inv @ b
    it = 0
    degenerate = 0
    max_iter = 50 * (m + ntot) + 1000
    bland = False
    while it < max_iter:
        it += 1
        if it % _REFACTOR_EVERY == 0:
            B_inv = np.linalg.inv(T[:, basis])
            xb = B_inv @ b
            xb[np.abs(xb) < 1e-12] = 0.0
        y = cost[basis] @ B_inv
        rc = cost - y @ T
        rc[basis] = 0.0
        rc[~allowed] = 0.0
        cands = np.flatnonzero(rc < -_RC_TOL)
        if cands.size == 0:
            return "optimal", basis, xb
        q = int(cands[0]) if bland else int(cands[np.argmin(rc[cands])])
        d = B_inv @ T[:, q]
        pos = d > _PIV_TOL
        if not pos.any():
            return "unbounded", basis, xb
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(xb[pos], 0.0) / d[pos]
        theta = ratios.min()
        ties = np.flatnonzero(ratios <= theta + 1e-12)
        if bland:
            p = int(ties[np.argmin(basis[ties])])
        else:
            p = int(ties[np.argmax(d[ties])])
        degenerate = degenerate + 1 if theta <= 1e-12 else 0
        bland = degenerate >= _DEGENERATE_STREAK
        # rank-1 update of the basis inverse
        piv = d[p]
        xb = xb - theta * d
        xb[p] = theta
        B_inv[p] /= piv
        others = np.arange(m) != p
        B_inv[others] -= np.outer(d[others], B_inv[p])
        basis[p] = q
    raise SolverError("simplex iteration limit reached")
