import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strip_homog.cell import (decomposition_residual, dirichlet_constant, extract_cell_constant, neumann_constant,
                              solve_cell_problem, solve_hole_flux_problem, z0)
from strip_homog.errors import CompatibilityError, DomainError, SingularityError
from strip_homog.geometry import hole_flux_field_circle


def test_closed_form_constants():
    assert dirichlet_constant(0.1) == pytest.approx(1.49286, abs=1e-5)
    assert neumann_constant(0.3) == pytest.approx(0.092949, abs=1e-6)


def test_z0_reference_values():
    # far field: Z0 ~ |xi2| since ln|2 sin(w)| ~ |Im w| for large |Im w|
    assert z0([0.0, 30.0]) == pytest.approx(30.0, abs=1e-12)
    assert z0([1.5, 0.0]) == pytest.approx(3 / math.pi * math.log(2), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.4, 1.4), st.floats(0.05, 5.0), st.integers(-3, 3))
def test_z0_periodic_and_even(x1, x2, k):
    assert z0([x1 + 3 * k, x2]) == pytest.approx(z0([x1, x2]), abs=1e-9)
    assert z0([x1, -x2]) == pytest.approx(z0([x1, x2]), abs=1e-12)


def test_z0_singular_at_lattice():
    with pytest.raises(SingularityError):
        z0([3.0, 0.0])


@pytest.mark.parametrize("eta", [0.2, 0.1, 0.05])
def test_dirichlet_constant(eta):
    sol = solve_cell_problem(eta, "D")
    cp, cm = extract_cell_constant(sol)
    assert cp == pytest.approx(dirichlet_constant(eta), rel=0.02)
    assert abs(cp - cm) <= 2 * max(sol.std_plus, sol.std_minus)


@pytest.mark.parametrize("eta", [0.3, 0.2])
def test_neumann_constant(eta):
    cp, cm = extract_cell_constant(solve_cell_problem(eta, "N"))
    assert cp == pytest.approx(neumann_constant(eta), rel=0.05)
    assert cm == pytest.approx(-cp, rel=1e-6)


def test_robin_constants_symmetric():
    sol = solve_cell_problem(0.2, "R")
    assert abs(sol.c_plus - sol.c_minus) <= 2 * max(sol.std_plus, sol.std_minus)


def test_robin_compatibility():
    with pytest.raises(CompatibilityError):
        solve_cell_problem(0.2, "R", hole_flux=1.0)
    with pytest.raises(CompatibilityError):
        solve_cell_problem(0.2, "N", hole_flux=1.0)


def test_taller_cell_same_constant():
    a = solve_cell_problem(0.1, "D", H=4.0).c_plus
    b = solve_cell_problem(0.1, "D", H=5.0).c_plus
    assert abs(a - b) <= 1e-3 * abs(a)


@pytest.mark.slow
def test_decomposition_ratio_stable():
    ratios = []
    for eta in (0.2, 0.1, 0.05):
        sol = solve_cell_problem(eta, "D", grading=0.03, nseg=400)
        ratios.append(decomposition_residual(sol) / eta)
    assert max(ratios) / min(ratios) <= 2.0, ratios


def test_cell_domain_guards():
    with pytest.raises(DomainError):
        solve_cell_problem(0.6, "D")
    with pytest.raises(DomainError):
        solve_cell_problem(0.1, "D", H=3.0)
    with pytest.raises(ValueError):
        solve_cell_problem(0.1, "Q")


@pytest.fixture(scope="module")
def flux_solution():
    return solve_hole_flux_problem(h=0.02)


def test_hole_flux_circle_matches_closed_form(flux_solution):
    sol = flux_solution
    r = np.linalg.norm(sol.mesh.nodes, axis=1)
    sel = r < 1.25
    exact = hole_flux_field_circle(sol.mesh.nodes[sel])
    err = np.abs(sol.X[sel] - exact).max() / np.abs(exact).max()
    assert err <= 0.01


@pytest.mark.parametrize("r", [1.1, 1.2, 1.3])
def test_hole_flux_through_circles(flux_solution, r):
    assert flux_solution.flux_through_circle(r) == pytest.approx(2 * math.pi, rel=1e-3)


def test_hole_flux_incompatible_data():
    with pytest.raises(CompatibilityError):
        solve_hole_flux_problem(phi=11 / 8, h=0.1)


def test_hole_flux_hole_too_large():
    square = np.array([[-1.5, -1.5], [1.5, -1.5], [1.5, 1.5], [-1.5, 1.5]])
    with pytest.raises(DomainError):
        solve_hole_flux_problem(square, h=0.1)
