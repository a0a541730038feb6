"""Geometric-program modelling layer and interior-point solver.

Toy problems small enough to solve on paper pin the solver; the modelling
tests pin the operator algebra the allocation code leans on.
"""
import numpy as np
import pytest

from twrelay.gp import (
    GpInfeasibleError,
    GpProblem,
    GpUnboundedError,
    Monomial,
    Posynomial,
    constant,
    kkt_residual,
    solve_gp,
    variable,
)


def test_monomial_algebra():
    x, y = variable("x"), variable("y")
    m = 3 * x * y**2 / x
    assert m.coefficient == 3
    assert m.exponents == {"y": 2.0}
    point = {"x": 5.0, "y": 2.0}
    assert m.evaluate(point) == 12.0
    assert (1 / x).evaluate(point) == pytest.approx(0.2)
    assert (x / 4).evaluate(point) == pytest.approx(1.25)
    assert (x**-0.5).evaluate({"x": 4.0}) == pytest.approx(0.5)


def test_monomial_rejects_nonpositive_coefficient():
    with pytest.raises(ValueError):
        Monomial(0.0)
    with pytest.raises(ValueError):
        Monomial(-2.0, {"x": 1.0})


def test_posynomial_addition_and_scaling():
    x, y = variable("x"), variable("y")
    p = 1 + x + 2 * y
    assert isinstance(p, Posynomial)
    assert p.evaluate({"x": 3.0, "y": 0.5}) == 5.0
    q = p * 2
    assert q.evaluate({"x": 3.0, "y": 0.5}) == 10.0
    r = (x + y) / x
    assert r.evaluate({"x": 2.0, "y": 6.0}) == 4.0
    assert sorted(p.variables()) == ["x", "y"]


def test_posynomial_needs_terms():
    with pytest.raises(ValueError):
        Posynomial([])


def test_problem_collects_variables():
    x, y, z = variable("x"), variable("y"), variable("z")
    prob = GpProblem(objective=x + y, constraints=[z / y])
    assert set(prob.variables) == {"x", "y", "z"}


def test_minimal_perimeter_box():
    # min x + y subject to xy >= 4; the square x = y = 2 wins.
    x, y = variable("x"), variable("y")
    sol = solve_gp(GpProblem(objective=x + y, constraints=[4 / (x * y)]))
    assert sol.objective_value == pytest.approx(4.0, rel=1e-6)
    assert sol.values["x"] == pytest.approx(2.0, rel=1e-6)
    assert sol.values["y"] == pytest.approx(2.0, rel=1e-6)
    assert sol.kkt_residual < 1e-8


def test_max_area_under_perimeter():
    # Maximizing xy under 2x + 2y <= 1 in GP form: minimize (xy)^-1.
    x, y = variable("x"), variable("y")
    sol = solve_gp(GpProblem(objective=1 / (x * y), constraints=[2 * x + 2 * y]))
    assert sol.values["x"] == pytest.approx(0.25, rel=1e-6)
    assert sol.values["y"] == pytest.approx(0.25, rel=1e-6)
    assert sol.objective_value == pytest.approx(16.0, rel=1e-6)


def test_three_variable_posynomial_optimum():
    # min 1/(xyz) with x + y <= 1 and z <= 2: push z to its cap and split
    # the budget evenly, so the optimum is x = y = 1/2, z = 2, value 2.
    x, y, z = variable("x"), variable("y"), variable("z")
    prob = GpProblem(
        objective=1 / (x * y * z),
        constraints=[x + y, z / 2],
    )
    sol = solve_gp(prob)
    assert sol.values["x"] == pytest.approx(0.5, rel=1e-5)
    assert sol.values["y"] == pytest.approx(0.5, rel=1e-5)
    assert sol.values["z"] == pytest.approx(2.0, rel=1e-6)
    assert sol.objective_value == pytest.approx(2.0, rel=1e-6)


def test_degenerate_constraint_ray():
    # Along xy = 4 the objective xy is flat, so the optimizer walks a ray of
    # equally good points; it must still return one with value 4.
    x, y = variable("x"), variable("y")
    sol = solve_gp(GpProblem(objective=x * y, constraints=[4 / (x * y)]))
    assert sol.objective_value == pytest.approx(4.0, rel=1e-6)


def test_solution_is_scale_invariant():
    x, y = variable("x"), variable("y")
    base = solve_gp(GpProblem(objective=x + y, constraints=[4 / (x * y)]))
    scaled = solve_gp(GpProblem(objective=1000 * (x + y), constraints=[4 / (x * y)]))
    assert scaled.values["x"] == pytest.approx(base.values["x"], rel=1e-6)
    assert scaled.objective_value == pytest.approx(1000 * base.objective_value, rel=1e-6)


def test_infeasible_problem_is_reported():
    x = variable("x")
    prob = GpProblem(objective=x, constraints=[x / 1.0, 2 / x])  # x <= 1 and x >= 2
    with pytest.raises(GpInfeasibleError):
        solve_gp(prob)


def test_unconstrained_descent_is_reported():
    with pytest.raises(GpUnboundedError):
        solve_gp(GpProblem(objective=variable("x")))


def test_initial_point_is_respected():
    x, y = variable("x"), variable("y")
    prob = GpProblem(objective=x + y, constraints=[4 / (x * y)])
    sol = solve_gp(prob, initial={"x": 3.0, "y": 7.0})
    assert sol.objective_value == pytest.approx(4.0, rel=1e-6)


def test_kkt_residual_flags_suboptimal_points():
    x, y = variable("x"), variable("y")
    prob = GpProblem(objective=x + y, constraints=[4 / (x * y)])
    assert kkt_residual(prob, {"x": 2.0, "y": 2.0}) < 1e-9
    assert kkt_residual(prob, {"x": 8.0, "y": 1.0}) > 0.1


def test_tight_budget_constraint_is_active():
    # Power-allocation-shaped instance: maximize a product of rate-like
    # terms under a total-power cap; the cap must bind at the optimum.
    p1, p2 = variable("p1"), variable("p2")
    prob = GpProblem(
        objective=(1 / p1) * (1 / p2) ** 2,
        constraints=[(p1 + p2) / 10.0],
    )
    sol = solve_gp(prob)
    assert sol.values["p1"] + sol.values["p2"] == pytest.approx(10.0, rel=1e-6)
    # Lagrange conditions give p2 = 2 p1 for exponents (1, 2).
    assert sol.values["p2"] == pytest.approx(2 * sol.values["p1"], rel=1e-5)


def test_constant_helper():
    c = constant(2.5)
    assert c.evaluate({}) == 2.5
    assert (c * variable("x")).evaluate({"x": 2.0}) == 5.0
