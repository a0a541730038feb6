"""A small geometric-programming solver.

Models posynomials over named positive variables, rewrites the program in
log coordinates (y = log x, posynomial -> log-sum-exp, hence convex), and
solves it with a log-barrier interior-point method: a phase-1 slack
minimization to find a strictly feasible point, then barrier centering with
damped Newton steps.  Gradients and Hessians of every log-sum-exp term are
analytic, with max-shifted exponentials for overflow safety.

Scope is deliberately narrow: minimize a posynomial subject to posynomial
constraints normalized to "<= 1".  That is exactly the per-iteration
subproblem of the power-allocation loop, plus enough generality for the
hand-checkable examples in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "GpError",
    "GpInfeasibleError",
    "GpUnboundedError",
    "GpConvergenceError",
    "Monomial",
    "Posynomial",
    "GpProblem",
    "GpSolution",
    "variable",
    "constant",
    "solve_gp",
    "kkt_residual",
]

MAX_NEWTON_ITERATIONS = 200

# |log x| beyond this means the iterates are running away: the program has
# a direction of unbounded improvement (or is hopelessly scaled).
_LOG_RUNAWAY = 200.0


class GpError(RuntimeError):
    """Base class for solver failures."""


class GpInfeasibleError(GpError):
    """Phase 1 proved there is no strictly feasible point."""


class GpUnboundedError(GpError):
    """The objective decreases without bound over the feasible set."""


class GpConvergenceError(GpError):
    """Newton iteration budget exhausted before reaching tolerance."""


@dataclass(frozen=True)
class Monomial:
    """``coefficient * prod(x_v ** exponents[v])`` with a positive coefficient."""

    coefficient: float
    exponents: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.coefficient > 0:
            raise ValueError(f"monomial coefficient must be positive, got {self.coefficient}")
        object.__setattr__(
            self,
            "exponents",
            {v: float(e) for v, e in self.exponents.items() if e != 0.0},
        )

    def __mul__(self, other):
        if isinstance(other, Monomial):
            exps = dict(self.exponents)
            for v, e in other.exponents.items():
                exps[v] = exps.get(v, 0.0) + e
            return Monomial(self.coefficient * other.coefficient, exps)
        if isinstance(other, (int, float)):
            return Monomial(self.coefficient * other, self.exponents)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Monomial):
            return self * other ** -1
        if isinstance(other, (int, float)):
            return Monomial(self.coefficient / other, self.exponents)
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, (int, float)):
            return self**-1 * other
        return NotImplemented

    def __pow__(self, power):
        return Monomial(
            self.coefficient**power,
            {v: e * power for v, e in self.exponents.items()},
        )

    def __add__(self, other):
        return Posynomial([self]) + other

    __radd__ = __add__

    def evaluate(self, point: Mapping[str, float]) -> float:
        value = self.coefficient
        for v, e in self.exponents.items():
            value *= point[v] ** e
        return value


def variable(name: str) -> Monomial:
    return Monomial(1.0, {name: 1.0})


def constant(value: float) -> Monomial:
    return Monomial(value)


@dataclass(frozen=True)
class Posynomial:
    """A sum of monomials; closed under addition and monomial scaling."""

    terms: Sequence[Monomial]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("a posynomial needs at least one term")
        object.__setattr__(self, "terms", terms)

    def __add__(self, other):
        if isinstance(other, Posynomial):
            return Posynomial(self.terms + other.terms)
        if isinstance(other, Monomial):
            return Posynomial(self.terms + (other,))
        if isinstance(other, (int, float)):
            return Posynomial(self.terms + (constant(float(other)),))
        return NotImplemented

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Monomial):
            return Posynomial(tuple(t * other for t in self.terms))
        if isinstance(other, (int, float)):
            return Posynomial(tuple(t * other for t in self.terms))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (Monomial, int, float)):
            return Posynomial(tuple(t / other for t in self.terms))
        return NotImplemented

    def evaluate(self, point: Mapping[str, float]) -> float:
        return sum(t.evaluate(point) for t in self.terms)

    def variables(self):
        seen = []
        for t in self.terms:
            for v in t.exponents:
                if v not in seen:
                    seen.append(v)
        return seen


def as_posynomial(expr) -> Posynomial:
    if isinstance(expr, Posynomial):
        return expr
    if isinstance(expr, Monomial):
        return Posynomial([expr])
    if isinstance(expr, (int, float)):
        return Posynomial([constant(float(expr))])
    raise TypeError(f"cannot interpret {type(expr).__name__} as a posynomial")


@dataclass(frozen=True)
class GpProblem:
    """Minimize a posynomial subject to posynomial constraints ``g_i <= 1``."""

    objective: Posynomial
    constraints: Sequence[Posynomial] = ()
    variables: Sequence[str] = ()

    def __post_init__(self):
        objective = as_posynomial(self.objective)
        constraints = tuple(as_posynomial(c) for c in self.constraints)
        names = list(self.variables)
        for posy in (objective, *constraints):
            for v in posy.variables():
                if v not in names:
                    names.append(v)
        object.__setattr__(self, "objective", objective)
        object.__setattr__(self, "constraints", constraints)
        object.__setattr__(self, "variables", tuple(names))


@dataclass(frozen=True)
class GpSolution:
    values: dict
    objective_value: float
    kkt_residual: float
    n_newton_iterations: int


class _LogSumExp:
    """log of a posynomial as a function of y = log x, with derivatives."""

    def __init__(self, posy: Posynomial, names: Sequence[str]):
        index = {v: j for j, v in enumerate(names)}
        self.a = np.zeros((len(posy.terms), len(names)))
        self.b = np.empty(len(posy.terms))
        for i, term in enumerate(posy.terms):
            self.b[i] = np.log(term.coefficient)
            for v, e in term.exponents.items():
                self.a[i, index[v]] = e

    def value(self, y: np.ndarray) -> float:
        z = self.a @ y + self.b
        zmax = z.max()
        return float(zmax + np.log(np.exp(z - zmax).sum()))

    def value_grad(self, y: np.ndarray):
        z = self.a @ y + self.b
        zmax = z.max()
        w = np.exp(z - zmax)
        total = w.sum()
        value = float(zmax + np.log(total))
        w /= total
        return value, self.a.T @ w

    def value_grad_hess(self, y: np.ndarray):
        z = self.a @ y + self.b
        zmax = z.max()
        w = np.exp(z - zmax)
        total = w.sum()
        value = float(zmax + np.log(total))
        w /= total
        grad = self.a.T @ w
        aw = self.a * w[:, None]
        hess = self.a.T @ aw - np.outer(grad, grad)
        return value, grad, hess


class _Compiled:
    def __init__(self, problem: GpProblem):
        self.names = list(problem.variables)
        self.objective = _LogSumExp(problem.objective, self.names)
        self.constraints = [_LogSumExp(c, self.names) for c in problem.constraints]

    def constraint_values(self, y: np.ndarray) -> np.ndarray:
        return np.array([c.value(y) for c in self.constraints])


class _NewtonBudget:
    def __init__(self):
        self.used = 0

    def spend(self):
        self.used += 1
        if self.used > MAX_NEWTON_ITERATIONS:
            raise GpConvergenceError(
                f"no convergence within {MAX_NEWTON_ITERATIONS} Newton iterations"
            )


def _check_runaway(y: np.ndarray):
    if np.abs(y).max() > _LOG_RUNAWAY:
        raise GpUnboundedError(
            "iterates ran away (|log x| > 200): the program is unbounded "
            "below or lacks constraints keeping the variables finite"
        )


_STEP_CAP = 100.0


def _newton_solve(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    # LSE Hessians are PSD but can be singular: flat directions happen in
    # degenerate programs where only a combination of variables is pinned,
    # and phase-1 barriers are rank-deficient whenever constraints are pure
    # monomials.  A plain solve amplifies rounding noise along those
    # directions into absurd steps, while cutting them entirely (pseudo-
    # inverse) refuses genuine unbounded descent rays.  Levenberg damping
    # keeps zero-gradient flat directions still and follows real descent
    # rays with large but finite steps; the cap turns those into a bounded
    # walk that the caller's feasibility checks can interrupt.
    n = max(len(grad), 1)
    mu = 1e-10 * (np.trace(hess) / n + np.linalg.norm(grad)) + 1e-300
    try:
        step = np.linalg.solve(hess + mu * np.eye(n), -grad)
    except np.linalg.LinAlgError:
        step = -np.linalg.pinv(hess, rcond=1e-12, hermitian=True) @ grad
    largest = np.abs(step).max()
    if largest > _STEP_CAP:
        step *= _STEP_CAP / largest
    return step


def _center(comp, t, y, budget, tol):
    """Minimize t*f0(y) - sum log(-f_i(y)) by damped Newton from feasible y."""
    for _ in range(MAX_NEWTON_ITERATIONS):
        budget.spend()
        _check_runaway(y)
        f0, g0, h0 = comp.objective.value_grad_hess(y)
        grad = t * g0
        hess = t * h0
        fvals = []
        for con in comp.constraints:
            fi, gi, hi = con.value_grad_hess(y)
            if fi >= 0:
                raise GpError("internal: centering left the feasible region")
            fvals.append(fi)
            grad += gi / (-fi)
            hess += np.outer(gi, gi) / fi**2 + hi / (-fi)
        step = _newton_solve(hess, grad)
        decrement = float(-grad @ step)
        barrier = t * f0 - float(np.log(-np.array(fvals)).sum())
        # Below the rounding floor of the barrier value, progress is not
        # measurable: the point is as centered as float64 allows.
        noise_floor = 64.0 * np.finfo(float).eps * (1.0 + abs(barrier))
        if decrement / 2.0 <= max(tol, noise_floor):
            return y
        # Backtracking: stay strictly feasible, then Armijo on the barrier.
        alpha = 1.0
        while alpha > 1e-14:
            cand = y + alpha * step
            fv = comp.constraint_values(cand)
            if np.all(fv < 0):
                cf0 = comp.objective.value(cand)
                cand_barrier = t * cf0 - float(np.log(-fv).sum())
                if cand_barrier <= barrier - 0.01 * alpha * decrement:
                    break
            alpha *= 0.5
        else:
            return y  # step vanished: numerically centered
        y = cand
    raise GpConvergenceError(
        f"no convergence within {MAX_NEWTON_ITERATIONS} Newton iterations"
    )


def _phase1(comp: _Compiled, y0: np.ndarray, budget: _NewtonBudget) -> np.ndarray:
    """Find strictly feasible y by minimizing the worst constraint slack."""
    if not comp.constraints:
        return y0
    y = y0.copy()
    s = float(comp.constraint_values(y).max()) + 1.0
    t = 1.0
    for _ in range(60):
        # Newton on (y, s) for: min t*s - sum log(s - f_i(y)).
        for _ in range(MAX_NEWTON_ITERATIONS):
            fv = comp.constraint_values(y)
            if fv.max() < -1e-3:
                return y
            budget.spend()
            _check_runaway(y)
            n = len(y)
            grad = np.zeros(n + 1)
            hess = np.zeros((n + 1, n + 1))
            grad[n] = t
            for con in comp.constraints:
                fi, gi, hi = con.value_grad_hess(y)
                gap = s - fi
                grad[:n] += gi / gap
                grad[n] -= 1.0 / gap
                gfull = np.concatenate([-gi, [1.0]])
                hess += np.outer(gfull, gfull) / gap**2
                hess[:n, :n] += hi / gap
            step = _newton_solve(hess, grad)
            decrement = float(-grad @ step)
            if decrement / 2.0 <= 1e-10:
                break
            barrier = t * s - float(np.log(s - comp.constraint_values(y)).sum())
            alpha = 1.0
            while alpha > 1e-14:
                ycand = y + alpha * step[:n]
                scand = s + alpha * step[n]
                gaps = scand - comp.constraint_values(ycand)
                if np.all(gaps > 0):
                    cand_barrier = t * scand - float(np.log(gaps).sum())
                    if cand_barrier <= barrier - 0.01 * alpha * decrement:
                        break
                alpha *= 0.5
            else:
                break
            y, s = ycand, scand
        if len(comp.constraints) / t < 1e-9:
            break
        t *= 20.0
    worst = float(comp.constraint_values(y).max())
    if worst < 0:
        return y
    raise GpInfeasibleError(
        "infeasible: no strictly feasible point exists "
        f"(phase-1 minimum constraint slack {worst:.3e} >= 0)"
    )


def solve_gp(problem: GpProblem, tol: float = 1e-8, initial: Mapping[str, float] | None = None) -> GpSolution:
    """Solve a geometric program to the given log-domain KKT tolerance.

    ``initial``, when given, is a strictly positive starting point; if it is
    already strictly feasible the phase-1 search is skipped entirely.
    Raises :class:`GpInfeasibleError`, :class:`GpUnboundedError`, or
    :class:`GpConvergenceError`; never returns a silent best-effort point.
    """
    comp = _Compiled(problem)
    n = len(comp.names)
    if n == 0:
        raise GpError("problem has no variables")
    budget = _NewtonBudget()

    if initial is not None:
        y = np.array([np.log(float(initial[v])) for v in comp.names])
    else:
        y = np.zeros(n)
    if comp.constraints and comp.constraint_values(y).max() >= 0:
        y = _phase1(comp, y, budget)

    # Follow the central path until the duality gap m/t is under tol.  The
    # KKT residual reported to callers uses duals recovered from the active
    # set, whose complementarity scales like 1/t, already far below tol by
    # then.  Intermediate stages only need loose centering; the path is
    # re-centered at every stage anyway and tight Newton tolerances there
    # just burn the iteration budget.  Only the final stage is polished.
    m = max(len(comp.constraints), 1)
    t = 1.0
    while True:
        final_stage = m / t <= tol
        y = _center(
            comp, t, y, budget, tol=min(tol, 1e-9) if final_stage else 1e-6
        )
        if final_stage:
            break
        t *= 50.0

    values = {v: float(np.exp(yv)) for v, yv in zip(comp.names, y)}
    return GpSolution(
        values=values,
        objective_value=problem.objective.evaluate(values),
        kkt_residual=kkt_residual(problem, values),
        n_newton_iterations=budget.used,
    )


def kkt_residual(problem: GpProblem, point: Mapping[str, float]) -> float:
    """Log-domain KKT residual of a positive point: 0 at the optimum.

    Combines primal feasibility, stationarity with least-squares duals
    recovered on the active set, and complementary slackness.  Working in
    log coordinates makes the measure invariant to positive rescaling of
    the objective.
    """
    comp = _Compiled(problem)
    y = np.array([np.log(float(point[v])) for v in comp.names])
    _, g0 = comp.objective.value_grad(y)

    fvals, grads = [], []
    for con in comp.constraints:
        fi, gi = con.value_grad(y)
        fvals.append(fi)
        grads.append(gi)
    fvals = np.array(fvals) if fvals else np.zeros(0)

    feasibility = float(np.maximum(fvals, 0.0).sum())

    active = np.nonzero(fvals > -1e-6)[0]
    duals = np.zeros(len(fvals))
    if active.size:
        jt = np.stack([grads[i] for i in active], axis=1)
        lam, *_ = np.linalg.lstsq(jt, -g0, rcond=None)
        duals[active] = np.maximum(lam, 0.0)
    stationarity_vec = g0.copy()
    for i, lam in enumerate(duals):
        if lam:
            stationarity_vec += lam * grads[i]
    scale = max(1.0, float(np.linalg.norm(g0)))
    stationarity = float(np.linalg.norm(stationarity_vec)) / scale
    complementarity = float(np.abs(duals * fvals).max()) if len(fvals) else 0.0
    return stationarity + complementarity + feasibility
