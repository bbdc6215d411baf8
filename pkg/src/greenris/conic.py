"""Small conic-program layer over a homogeneous interior-point backend.

Programs are built from named real scalars, a linear objective and three
constraint families (affine, second-order cone, exponential cone). Complex
quantities enter through an interleaved re/im expansion. The backend is the
Clarabel interior-point solver; everything else (standard-form assembly,
status mapping, independent feasibility checking, text dumps) lives here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import clarabel
import numpy as np
from scipy import sparse


class AffineExpr:
    """Linear combination of program variables plus a constant."""

    __slots__ = ("coef", "const")

    def __init__(self, coef: Optional[Dict[int, float]] = None, const: float = 0.0):
        self.coef = dict(coef) if coef else {}
        self.const = float(const)

    @staticmethod
    def constant(c: float) -> "AffineExpr":
        return AffineExpr(None, c)

    def copy(self) -> "AffineExpr":
        return AffineExpr(self.coef, self.const)

    def __add__(self, other) -> "AffineExpr":
        out = self.copy()
        if isinstance(other, AffineExpr):
            for i, c in other.coef.items():
                out.coef[i] = out.coef.get(i, 0.0) + c
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return AffineExpr({i: -c for i, c in self.coef.items()}, -self.const)

    def __sub__(self, other) -> "AffineExpr":
        return self + (-other if isinstance(other, AffineExpr) else -float(other))

    def __rsub__(self, other) -> "AffineExpr":
        return (-self) + float(other)

    def __mul__(self, scalar) -> "AffineExpr":
        s = float(scalar)
        return AffineExpr({i: s * c for i, c in self.coef.items()}, s * self.const)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        acc = self.const
        for i, c in self.coef.items():
            acc += c * x[i]
        return float(acc)

    def term_scale(self, x: np.ndarray) -> float:
        """Magnitude of the constituent terms, for relative residuals."""
        acc = abs(self.const)
        for i, c in self.coef.items():
            acc += abs(c * x[i])
        return float(acc)


@dataclass
class ComplexVector:
    """Handle for a complex vector stored as interleaved (re, im) scalars."""

    name: str
    start: int
    length: int

    def real_index(self, i: int) -> int:
        return self.start + 2 * i

    def imag_index(self, i: int) -> int:
        return self.start + 2 * i + 1

    def real_expr(self, i: int) -> AffineExpr:
        return AffineExpr({self.real_index(i): 1.0})

    def imag_expr(self, i: int) -> AffineExpr:
        return AffineExpr({self.imag_index(i): 1.0})


@dataclass
class SolveReport:
    """Outcome of one interior-point run."""

    status: str               # optimal | infeasible | unbounded | numerical-limit
    x: np.ndarray
    objective: float          # in the program's maximize sense
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    solve_time_s: float

    def value(self, expr: AffineExpr) -> float:
        return expr.value(self.x)

    def complex_value(self, vec: ComplexVector) -> np.ndarray:
        re = self.x[vec.start:vec.start + 2 * vec.length:2]
        im = self.x[vec.start + 1:vec.start + 2 * vec.length:2]
        return re + 1j * im


class ConicProgram:
    """Maximize a linear objective over affine + SOC + exp-cone constraints."""

    def __init__(self, name: str = "program"):
        self.name = name
        self.var_names: List[str] = []
        self.var_lb: List[Optional[float]] = []
        self.var_ub: List[Optional[float]] = []
        self.objective = AffineExpr()
        self.eqs: List[AffineExpr] = []            # expr == 0
        self.ineqs: List[AffineExpr] = []          # expr <= 0
        self.socs: List[Tuple[AffineExpr, List[AffineExpr]]] = []   # ||rows|| <= rhs
        self.expcones: List[Tuple[AffineExpr, AffineExpr, AffineExpr]] = []

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_constraints(self) -> int:
        bounds = sum(b is not None for b in self.var_lb) \
            + sum(b is not None for b in self.var_ub)
        return len(self.eqs) + len(self.ineqs) + bounds \
            + sum(1 + len(rows) for _, rows in self.socs) + 3 * len(self.expcones)

    def add_var(self, name: str, lb: Optional[float] = None,
                ub: Optional[float] = None) -> AffineExpr:
        if lb is not None and ub is not None and lb > ub:
            raise ValueError(f"empty bound interval for {name}")
        idx = len(self.var_names)
        self.var_names.append(name)
        self.var_lb.append(lb)
        self.var_ub.append(ub)
        return AffineExpr({idx: 1.0})

    def add_complex_vector(self, name: str, length: int) -> ComplexVector:
        """Register length complex entries as interleaved re/im scalars."""
        if length < 1:
            raise ValueError("complex vector needs positive length")
        start = len(self.var_names)
        for i in range(length):
            self.var_names.append(f"{name}.re[{i}]")
            self.var_lb.append(None)
            self.var_ub.append(None)
            self.var_names.append(f"{name}.im[{i}]")
            self.var_lb.append(None)
            self.var_ub.append(None)
        return ComplexVector(name=name, start=start, length=length)

    def set_objective_max(self, expr: AffineExpr) -> None:
        self.objective = expr.copy()

    def add_eq(self, lhs: AffineExpr, rhs=0.0) -> None:
        self.eqs.append(lhs - rhs)

    def add_ineq(self, lhs: AffineExpr, rhs=0.0) -> None:
        """lhs <= rhs."""
        self.ineqs.append(lhs - rhs)

    def add_soc(self, rows: Sequence[AffineExpr], rhs: AffineExpr) -> None:
        """||rows(x)||_2 <= rhs(x)."""
        if len(rows) == 0:
            raise ValueError("second-order cone needs at least one row")
        self.socs.append((rhs.copy(), [r.copy() for r in rows]))

    def add_expcone(self, x: AffineExpr, y: AffineExpr, z: AffineExpr) -> None:
        """y(x) * exp(x(x)/y(x)) <= z(x) with y > 0."""
        self.expcones.append((x.copy(), y.copy(), z.copy()))

    # -- complex helpers ---------------------------------------------------

    @staticmethod
    def re_inner(a: np.ndarray, vec: ComplexVector) -> AffineExpr:
        """Affine expression for Re(a^H z) with a a constant complex vector."""
        a = np.asarray(a, dtype=complex)
        if a.shape != (vec.length,):
            raise ValueError("inner-product length mismatch")
        coef: Dict[int, float] = {}
        for i in range(vec.length):
            coef[vec.real_index(i)] = float(a[i].real)
            coef[vec.imag_index(i)] = float(a[i].imag)
        return AffineExpr(coef)

    @staticmethod
    def matvec_rows(a: np.ndarray, vec: ComplexVector) -> List[AffineExpr]:
        """Real/imag rows of A z as affine expressions (re, im interleaved).

        The stacked Euclidean norm of the result equals ||A z||, so these
        rows feed second-order cones directly (the expansion is an isometry).
        """
        a = np.asarray(a, dtype=complex)
        if a.ndim != 2 or a.shape[1] != vec.length:
            raise ValueError("matrix/vector shape mismatch")
        rows: List[AffineExpr] = []
        for r in range(a.shape[0]):
            re_coef: Dict[int, float] = {}
            im_coef: Dict[int, float] = {}
            for j in range(vec.length):
                arj = a[r, j]
                if arj == 0:
                    continue
                re_coef[vec.real_index(j)] = float(arj.real)
                re_coef[vec.imag_index(j)] = float(-arj.imag)
                im_coef[vec.real_index(j)] = float(arj.imag)
                im_coef[vec.imag_index(j)] = float(arj.real)
            rows.append(AffineExpr(re_coef))
            rows.append(AffineExpr(im_coef))
        return rows

    @staticmethod
    def vector_rows(vec: ComplexVector) -> List[AffineExpr]:
        """Identity rows of z, for norms of the raw complex vector."""
        rows: List[AffineExpr] = []
        for i in range(vec.length):
            rows.append(vec.real_expr(i))
            rows.append(vec.imag_expr(i))
        return rows

    def sum_squares_le(self, rows: Sequence[AffineExpr], bound: AffineExpr) -> None:
        """sum rows(x)^2 <= bound(x) as one second-order cone."""
        stacked = [2.0 * r for r in rows] + [bound - 1.0]
        self.add_soc(stacked, bound + 1.0)


def encode_log_rate(prog: ConicProgram, u: AffineExpr, q: AffineExpr,
                    bandwidth: float = 1.0) -> None:
    """Constrain u <= bandwidth * log2(1 + q) with one exponential cone."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    ln2 = float(np.log(2.0))
    prog.add_expcone(u * (ln2 / bandwidth), AffineExpr.constant(1.0), q + 1.0)


def encode_sqrt_epigraph(prog: ConicProgram, t: AffineExpr, s: AffineExpr) -> None:
    """Constrain 0 <= t, t^2 <= s, so maximizing t yields sqrt(s)."""
    prog.add_ineq(-t)
    prog.sum_squares_le([t], s)


# -- lowering and solving --------------------------------------------------


_STATUS_MAP = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def _standard_form(prog: ConicProgram):
    """Assemble b - Ax in K with K = Zero x Nonneg x SOC... x Exp..."""
    n = prog.n_vars
    rows_i: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    b: List[float] = []
    cones = []
    r = 0

    def push(expr: AffineExpr, negate: bool) -> None:
        # negate=False encodes s_r = -expr(x) + ... : A row = coef, b = -const
        # negate=True  encodes s_r = +expr(x): A row = -coef, b = +const
        nonlocal r
        sign = -1.0 if negate else 1.0
        for i, c in expr.coef.items():
            if c != 0.0:
                rows_i.append(r)
                cols.append(i)
                vals.append(sign * c)
        b.append(-sign * expr.const)
        r += 1

    for e in prog.eqs:
        push(e, negate=False)
    if prog.eqs:
        cones.append(clarabel.ZeroConeT(len(prog.eqs)))

    n_nonneg = 0
    for e in prog.ineqs:            # e <= 0  ->  s = -e >= 0
        push(e, negate=False)
        n_nonneg += 1
    for i, lb in enumerate(prog.var_lb):
        if lb is not None:          # s = x_i - lb >= 0
            push(AffineExpr({i: 1.0}, -lb), negate=True)
            n_nonneg += 1
    for i, ub in enumerate(prog.var_ub):
        if ub is not None:          # s = ub - x_i >= 0
            push(AffineExpr({i: -1.0}, ub), negate=True)
            n_nonneg += 1
    if n_nonneg:
        cones.append(clarabel.NonnegativeConeT(n_nonneg))

    for rhs, soc_rows in prog.socs:
        push(rhs, negate=True)
        for row in soc_rows:
            push(row, negate=True)
        cones.append(clarabel.SecondOrderConeT(1 + len(soc_rows)))

    for x_e, y_e, z_e in prog.expcones:
        push(x_e, negate=True)
        push(y_e, negate=True)
        push(z_e, negate=True)
        cones.append(clarabel.ExponentialConeT())

    a_mat = sparse.csc_matrix(
        (vals, (rows_i, cols)), shape=(r, n), dtype=float)
    return a_mat, np.asarray(b), cones


def solve(prog: ConicProgram, tol_gap: float = 1e-8, tol_feas: float = 1e-8,
          max_iter: int = 200, verbose: bool = False) -> SolveReport:
    """Run the interior-point backend and map its termination status.

    optimal guarantees gap <= 1e-7 and feasibility residuals <= 1e-8;
    anything the backend cannot certify lands in numerical-limit with the
    best iterate attached.
    """
    n = prog.n_vars
    if n == 0:
        raise ValueError("program has no variables")
    a_mat, b, cones = _standard_form(prog)
    q = np.zeros(n)
    for i, c in prog.objective.coef.items():
        q[i] = -c                       # backend minimizes
    p_mat = sparse.csc_matrix((n, n))

    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.tol_gap_abs = tol_gap
    settings.tol_gap_rel = tol_gap
    settings.tol_feas = tol_feas
    settings.max_iter = max_iter
    solver = clarabel.DefaultSolver(p_mat, q, a_mat, b, cones, settings)
    sol = solver.solve()

    raw = str(sol.status)
    status = _STATUS_MAP.get(raw, "numerical-limit")
    x = np.asarray(sol.x, dtype=float)
    objective = -float(sol.obj_val) + prog.objective.const if np.isfinite(sol.obj_val) \
        else float("nan")
    gap = abs(float(sol.obj_val) - float(sol.obj_val_dual)) \
        if np.isfinite(sol.obj_val) and np.isfinite(sol.obj_val_dual) else float("inf")
    return SolveReport(
        status=status,
        x=x,
        objective=objective,
        gap=gap,
        primal_residual=float(sol.r_prim),
        dual_residual=float(sol.r_dual),
        iterations=int(sol.iterations),
        solve_time_s=float(sol.solve_time),
    )


# -- independent feasibility evaluation ------------------------------------


@dataclass
class ConstraintCheck:
    kind: str
    index: int
    violation: float       # absolute, 0 when satisfied
    relative: float        # violation / max(1, term magnitude)


def check_solution(prog: ConicProgram, x: np.ndarray) -> List[ConstraintCheck]:
    """Re-substitute x into every constraint; no solver data is reused."""
    x = np.asarray(x, dtype=float)
    out: List[ConstraintCheck] = []

    def rel(v: float, scale: float) -> float:
        return v / max(1.0, scale)

    for j, e in enumerate(prog.eqs):
        v = abs(e.value(x))
        out.append(ConstraintCheck("eq", j, v, rel(v, e.term_scale(x))))
    for j, e in enumerate(prog.ineqs):
        v = max(0.0, e.value(x))
        out.append(ConstraintCheck("ineq", j, v, rel(v, e.term_scale(x))))
    j = 0
    for i, lb in enumerate(prog.var_lb):
        if lb is not None:
            v = max(0.0, lb - x[i])
            out.append(ConstraintCheck("lb", j, v, rel(v, abs(lb) + abs(x[i]))))
            j += 1
    for i, ub in enumerate(prog.var_ub):
        if ub is not None:
            v = max(0.0, x[i] - ub)
            out.append(ConstraintCheck("ub", j, v, rel(v, abs(ub) + abs(x[i]))))
            j += 1
    for j, (rhs, rows) in enumerate(prog.socs):
        norm = float(np.sqrt(sum(r.value(x) ** 2 for r in rows)))
        v = max(0.0, norm - rhs.value(x))
        out.append(ConstraintCheck("soc", j, v, rel(v, norm + abs(rhs.value(x)))))
    for j, (x_e, y_e, z_e) in enumerate(prog.expcones):
        xv, yv, zv = x_e.value(x), y_e.value(x), z_e.value(x)
        if yv <= 0.0:
            # boundary case y -> 0: cone closure requires x <= 0, z >= 0
            v = max(0.0, xv) + max(0.0, -zv) + max(0.0, -yv)
        else:
            v = max(0.0, yv * np.exp(xv / yv) - zv)
        scale = abs(xv) + abs(yv) + abs(zv)
        out.append(ConstraintCheck("exp", j, v, rel(v, scale)))
    return out


def max_violation(checks: Iterable[ConstraintCheck], relative: bool = True) -> float:
    vals = [c.relative if relative else c.violation for c in checks]
    return max(vals) if vals else 0.0


def dump(prog: ConicProgram, path: str) -> None:
    """Write the program in a plain-text standard form for inspection."""

    def fmt(e: AffineExpr) -> str:
        parts = [f"{c:+.12g}*{prog.var_names[i]}" for i, c in sorted(e.coef.items())]
        if e.const or not parts:
            parts.append(f"{e.const:+.12g}")
        return " ".join(parts)

    lines = [f"program {prog.name}", f"vars {prog.n_vars}"]
    for i, name in enumerate(prog.var_names):
        lb = "-inf" if prog.var_lb[i] is None else f"{prog.var_lb[i]:.12g}"
        ub = "+inf" if prog.var_ub[i] is None else f"{prog.var_ub[i]:.12g}"
        lines.append(f"  x{i} {name} in [{lb}, {ub}]")
    lines.append(f"maximize {fmt(prog.objective)}")
    for e in prog.eqs:
        lines.append(f"eq {fmt(e)} == 0")
    for e in prog.ineqs:
        lines.append(f"ineq {fmt(e)} <= 0")
    for rhs, rows in prog.socs:
        lines.append("soc ||")
        for r in rows:
            lines.append(f"    {fmt(r)}")
        lines.append(f"  || <= {fmt(rhs)}")
    for x_e, y_e, z_e in prog.expcones:
        lines.append(f"exp ({fmt(x_e)} ; {fmt(y_e)} ; {fmt(z_e)})")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
