"""Dense linear programming with primal/dual certificates.

The default backend is a two-phase revised simplex on a dense explicit basis
inverse.  Pricing is Dantzig's rule; after ``BLAND_AFTER`` consecutive
degenerate pivots it switches to Bland's smallest-index rule until the
objective moves again, which rules out cycling.  A ``"highs"`` backend (SciPy's
HiGHS) is available for callers that solve many mid-sized programs; both
backends return the same :class:`LPSolution` with certificates recomputed here
from the original data.

Dual values follow the sensitivity convention: ``duals[i]`` is the derivative of
the optimal objective with respect to ``b[i]``, in the program's own sense.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11
BLAND_AFTER = 500
MAX_PIVOTS = 1_000_000
REFACTOR_EVERY = 64


class MalformedProgramError(ValueError):
    pass


class NoConvergenceError(RuntimeError):
    pass


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    senses: list[str]
    b: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float)) if np.size(self.A) else np.zeros((0, n))
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.senses = [s.replace("==", "=") for s in self.senses]
        m = self.A.shape[0]
        if self.A.shape[1] != n or self.b.size != m or len(self.senses) != m:
            raise MalformedProgramError(
                f"inconsistent dimensions: c {n}, A {self.A.shape}, b {self.b.size}, senses {len(self.senses)}")
        if any(s not in ("<=", "=", ">=") for s in self.senses):
            raise MalformedProgramError(f"unknown constraint relation in {set(self.senses)}")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.lb.size != n or self.ub.size != n:
            raise MalformedProgramError("bound arrays must match the number of variables")
        for name, arr in (("c", self.c), ("A", self.A), ("b", self.b)):
            if not np.all(np.isfinite(arr)):
                raise MalformedProgramError(f"{name} contains NaN or infinite entries")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)) or np.any(self.lb == np.inf) \
                or np.any(self.ub == -np.inf) or np.any(self.lb > self.ub):
            raise MalformedProgramError("invalid variable bounds")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class LPSolution:
    status: str
    objective: float = float("nan")
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_objective: float = float("nan")
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    cs_residual: float = float("nan")
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def gap(self) -> float:
        return abs(self.objective - self.dual_objective)


# --- standard form -------------------------------------------------------------

@dataclass
class _StdForm:
    A: np.ndarray          # rows x cols; columns = structural, slack, (artificial appended later)
    b: np.ndarray
    c: np.ndarray
    T: np.ndarray          # original x = T @ x_std[:n_struct] + shift
    shift: np.ndarray
    n_struct: int
    row_sign: np.ndarray   # std row r = row_sign[r] * (original row)
    n_orig_rows: int
    slack_of_row: np.ndarray  # column index of a +1 slack usable as initial basis, or -1


def _standardize(lp: LinearProgram) -> _StdForm:
    n = lp.c.size
    cols, shift = [], np.zeros(n)
    ub_rows = []  # (std column, bound)
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(lo):
            shift[j] = lo
            cols.append(e)
            if np.isfinite(hi):
                ub_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append(-e)
        else:
            cols.append(e)
            cols.append(-e)
    T = np.array(cols).T if cols else np.zeros((n, 0))
    ns = T.shape[1]
    A_orig = lp.A @ T
    b_orig = lp.b - lp.A @ shift
    senses = list(lp.senses)
    rows = [A_orig[i] for i in range(A_orig.shape[0])]
    rhs = list(b_orig)
    for col, bound in ub_rows:
        r = np.zeros(ns)
        r[col] = 1.0
        rows.append(r)
        rhs.append(bound)
        senses.append("<=")
    m = len(rows)
    n_slack = sum(1 for s in senses if s != "=")
    A = np.zeros((m, ns + n_slack))
    if m:
        A[:, :ns] = np.array(rows)
    b = np.array(rhs, dtype=float)
    sign = np.ones(m)
    slack_of_row = np.full(m, -1, dtype=int)
    k = ns
    for r, s in enumerate(senses):
        if s == "<=":
            A[r, k] = 1.0
        elif s == ">=":
            A[r, k] = -1.0
        if b[r] < 0:
            A[r] *= -1.0
            b[r] *= -1.0
            sign[r] = -1.0
        if s != "=":
            if A[r, k] > 0:
                slack_of_row[r] = k
            k += 1
    c_obj = -lp.c if lp.maximize else lp.c
    c = np.zeros(A.shape[1])
    c[:ns] = T.T @ c_obj
    return _StdForm(A, b, c, T, shift, ns, sign, lp.A.shape[0], slack_of_row)


# --- revised simplex ---------------------------------------------------------------

class _Simplex:
    def __init__(self, A, b, basis, eligible):
        self.A = A
        self.b = b
        self.m, self.n = A.shape
        self.basis = np.array(basis, dtype=int)
        self.eligible = eligible
        self.pivots = 0
        self.refactor()

    def refactor(self):
        if self.m:
            self.Binv = np.linalg.inv(self.A[:, self.basis])
        else:
            self.Binv = np.zeros((0, 0))
        self.xB = self.Binv @ self.b
        self.xB[np.abs(self.xB) < 1e-14] = 0.0
        self.since_refactor = 0

    def run(self, c, art_mask=None):
        """Minimize ``c @ x``.  Returns ``"optimal"`` or ``"unbounded"``."""
        degenerate = 0
        while True:
            if self.pivots >= MAX_PIVOTS:
                raise NoConvergenceError(f"pivot cap {MAX_PIVOTS} exceeded")
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            d[self.basis] = 0.0
            cand = np.flatnonzero((d < -OPT_TOL) & self.eligible)
            if cand.size == 0:
                return "optimal"
            if degenerate >= BLAND_AFTER:
                j = int(cand[0])
            else:
                j = int(cand[np.argmin(d[cand])])
            u = self.Binv @ self.A[:, j]
            pos = u > PIVOT_TOL
            block = pos.copy()
            if art_mask is not None:
                # artificials stuck at zero must stay at zero
                on_art = art_mask[self.basis] & (np.abs(u) > PIVOT_TOL)
                block |= on_art
            if not block.any():
                return "unbounded"
            ratios = np.full(self.m, np.inf)
            ratios[pos] = np.maximum(self.xB[pos], 0.0) / u[pos]
            if art_mask is not None:
                ratios[on_art] = 0.0
            theta = ratios[block].min()
            ties = np.flatnonzero(block & (ratios <= theta + 1e-12))
            if degenerate >= BLAND_AFTER:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                # largest pivot among ties keeps the eta updates well conditioned
                r = int(ties[np.argmax(np.abs(u[ties]))])
            self._pivot(r, j, u)
            degenerate = degenerate + 1 if theta <= 1e-12 else 0

    def _pivot(self, r, j, u):
        piv = u[r]
        # same step length as the ratio test, which clamps roundoff negatives to zero
        theta = max(self.xB[r], 0.0) / piv if piv > 0 else self.xB[r] / piv
        self.xB -= theta * u
        self.xB[r] = theta
        row = self.Binv[r] / piv
        self.Binv -= np.outer(u, row)
        self.Binv[r] = row
        self.basis[r] = j
        self.pivots += 1
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.refactor()
        self.xB[np.abs(self.xB) < 1e-14] = 0.0


def _simplex_solve(lp: LinearProgram):
    sf = _standardize(lp)
    m, n = sf.A.shape
    art_rows = np.flatnonzero(sf.slack_of_row < 0)
    A = np.hstack([sf.A, np.zeros((m, art_rows.size))])
    for t, r in enumerate(art_rows):
        A[r, n + t] = 1.0
    basis = sf.slack_of_row.copy()
    basis[art_rows] = n + np.arange(art_rows.size)
    art_mask = np.zeros(A.shape[1], dtype=bool)
    art_mask[n:] = True
    scale = max(1.0, float(np.abs(sf.b).max(initial=0.0)))

    sx = _Simplex(A, sf.b, basis, eligible=np.ones(A.shape[1], dtype=bool))
    if art_rows.size:
        c1 = art_mask.astype(float)
        sx.run(c1)
        sx.refactor()
        infeas = float(c1[sx.basis] @ sx.xB)
        if infeas > FEAS_TOL * scale:
            return sf, "infeasible", None, None, sx.pivots
        # pivot zero-level artificials out of the basis where possible
        for r in range(m):
            if not art_mask[sx.basis[r]]:
                continue
            row = sx.Binv[r] @ A[:, :n]
            cand = np.flatnonzero(np.abs(row) > 1e-9)
            cand = cand[~np.isin(cand, sx.basis)]
            if cand.size:
                j = int(cand[np.argmax(np.abs(row[cand]))])
                sx._pivot(r, j, sx.Binv @ A[:, j])
        sx.refactor()
    sx.eligible = ~art_mask
    c2 = np.concatenate([sf.c, np.zeros(art_rows.size)])
    status = sx.run(c2, art_mask=art_mask)
    sx.refactor()
    if status == "optimal" and sx.xB.size and sx.xB.min() < -1e-7 * scale:
        raise NoConvergenceError(f"final basis is primal infeasible by {-sx.xB.min():.3g}")
    if status == "unbounded":
        return sf, "unbounded", None, None, sx.pivots
    x_std = np.zeros(A.shape[1])
    x_std[sx.basis] = sx.xB
    y_std = c2[sx.basis] @ sx.Binv
    return sf, "optimal", x_std, y_std, sx.pivots


def _highs_solve(lp: LinearProgram):
    from scipy.optimize import linprog

    c = -lp.c if lp.maximize else lp.c
    le = [i for i, s in enumerate(lp.senses) if s != "="]
    eq = [i for i, s in enumerate(lp.senses) if s == "="]
    flip = np.array([-1.0 if lp.senses[i] == ">=" else 1.0 for i in le])
    A_ub = lp.A[le] * flip[:, None] if le else None
    b_ub = lp.b[le] * flip if le else None
    A_eq = lp.A[eq] if eq else None
    b_eq = lp.b[eq] if eq else None
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
              for lo, hi in zip(lp.lb, lp.ub)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": FEAS_TOL,
                           "dual_feasibility_tolerance": OPT_TOL})
    if res.status == 2:
        return "infeasible", None, None
    if res.status == 3:
        return "unbounded", None, None
    if res.status != 0:
        raise NoConvergenceError(f"HiGHS failed: {res.message}")
    y = np.zeros(lp.A.shape[0])
    if le:
        y[le] = res.ineqlin.marginals * flip
    if eq:
        y[eq] = res.eqlin.marginals
    if lp.maximize:
        y = -y
    return "optimal", np.asarray(res.x, dtype=float), y


def _certify(lp: LinearProgram, x: np.ndarray, y: np.ndarray, pivots: int) -> LPSolution:
    """Residuals and dual objective, computed from the original data."""
    sgn = -1.0 if lp.maximize else 1.0          # work in minimization sense
    c = sgn * lp.c
    ym = sgn * y
    d = c - lp.A.T @ ym
    Ax = lp.A @ x
    slack = lp.b - Ax
    senses = np.array(lp.senses)
    viol = np.concatenate([
        np.maximum(-slack[senses == "<="], 0), np.maximum(slack[senses == ">="], 0),
        np.abs(slack[senses == "="]), np.maximum(lp.lb - x, 0), np.maximum(x - lp.ub, 0), [0.0]])
    dual_viol = np.concatenate([
        np.maximum(ym[senses == "<="], 0), np.maximum(-ym[senses == ">="], 0),
        np.maximum(-d[~np.isfinite(lp.ub)], 0), np.maximum(d[~np.isfinite(lp.lb)], 0), [0.0]])
    dpos, dneg = np.maximum(d, 0.0), np.minimum(d, 0.0)
    bound_term = np.where(dpos > 0, dpos * np.where(np.isfinite(lp.lb), lp.lb, 0.0), 0.0).sum() \
        + np.where(dneg < 0, dneg * np.where(np.isfinite(lp.ub), lp.ub, 0.0), 0.0).sum()
    dual_obj = sgn * float(lp.b @ ym + bound_term)
    gap_lb = np.where(np.isfinite(lp.lb), x - lp.lb, 0.0)
    gap_ub = np.where(np.isfinite(lp.ub), lp.ub - x, 0.0)
    cs = np.concatenate([np.abs(ym * slack), dpos * np.abs(gap_lb), -dneg * np.abs(gap_ub), [0.0]])
    return LPSolution(
        status="optimal", objective=float(lp.c @ x), x=x, duals=y, reduced_costs=sgn * d,
        dual_objective=dual_obj, primal_residual=float(viol.max()),
        dual_residual=float(dual_viol.max()), cs_residual=float(cs.max()), pivots=pivots)


def solve_lp(lp: LinearProgram, backend: str = "simplex") -> LPSolution:
    """Solve ``lp`` and attach duality certificates.

    Raises :class:`MalformedProgramError` on inconsistent input and
    :class:`NoConvergenceError` if the pivot cap is hit.
    """
    if not isinstance(lp, LinearProgram):
        raise MalformedProgramError("expected a LinearProgram")
    if backend == "highs":
        status, x, y = _highs_solve(lp)
        pivots = 0
    elif backend == "simplex":
        sf, status, x_std, y_std, pivots = _simplex_solve(lp)
        if status == "optimal":
            x = sf.T @ x_std[:sf.n_struct] + sf.shift
            y = np.zeros(sf.n_orig_rows)
            y[:] = (sf.row_sign * y_std)[:sf.n_orig_rows]
            if lp.maximize:
                y = -y
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if status != "optimal":
        return LPSolution(status=status, pivots=pivots)
    return _certify(lp, x, y, pivots)
