import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strip_homog.assembly import (Coefficients, Field, assemble_homogenized, assemble_perturbed, difference_norm,
                                  discretize, evaluate, interpolate, l2_error, load_vector, mass_matrix,
                                  solve_resolvent, stiffness_matrix, system_digest)
from strip_homog.errors import (EllipticityError, MeshMismatchError, PointLocationError, TagError)
from strip_homog.geometry import BetaFunction, CurveSpec, StripGeometry
from strip_homog.manufactured import model_reference
from strip_homog.mesh import (TAG_GAMMA, TAG_HOLE_R, Mesh, generate_homogenized_mesh, generate_rectangle_mesh)


@pytest.fixture(scope="module")
def hmesh():
    return generate_homogenized_mesh(StripGeometry(), CurveSpec.line(), 0.1)


def test_laplacian_rows_sum_to_zero(hmesh):
    sys = assemble_perturbed(generate_rectangle_mesh(-3, 3, 0, math.pi, 30))
    K = sys.K.toarray()
    free = sys.free
    np.testing.assert_allclose(K[free].sum(axis=1), 0.0, atol=1e-12)
    assert (abs(sys.K - stiffness_matrix(sys.mesh))).max() == 0


def test_robin_constant_field_gives_perimeter(robin_pair):
    _, pair = robin_pair
    P = pair.perforated
    sys = assemble_perturbed(P, Coefficients(a=1.0))
    base = assemble_perturbed(P, Coefficients(a=0.0))
    ones = np.ones(P.n_nodes)
    perimeter = P.edge_lengths(P.edges_of(TAG_HOLE_R)).sum()
    assert (sys.form_value(ones) - base.form_value(ones)).real == pytest.approx(perimeter, rel=1e-10)


def test_symmetry_real_coefficients(pair_02):
    A = lambda p: np.stack([np.stack([2 + np.sin(p[:, 0]), 0.3 * np.ones(len(p))], -1),
                            np.stack([0.3 * np.ones(len(p)), 1.5 + 0 * p[:, 1]], -1)], 1)
    c = Coefficients(A=A, Aj=lambda p: np.stack([np.cos(p[:, 1]), p[:, 0]], -1), A0=lambda p: 1 + p[:, 0] ** 2)
    K = assemble_perturbed(pair_02.perforated, c).K
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()


def test_constant_convection_is_boundary_only():
    m = generate_rectangle_mesh(0, 1, 0, 1, 12)
    c = Coefficients(A=np.zeros((2, 2)) + 1e-300 * np.eye(2), Aj=np.array([0.7, -1.3]))
    K = assemble_perturbed(m, c).K - 1e-300 * stiffness_matrix(m)
    interior = np.setdiff1d(np.arange(m.n_nodes), m.nodes_on([1, 5]))
    sym = (K + K.T).toarray()[np.ix_(interior, interior)]
    assert np.abs(sym).max() <= 1e-12 * abs(K).max()


def test_ellipticity_error():
    m = generate_rectangle_mesh(0, 1, 0, 1, 4)
    with pytest.raises(EllipticityError):
        assemble_perturbed(m, Coefficients(A=-np.eye(2)))


def test_unknown_tag_rejected():
    m = generate_rectangle_mesh(0, 1, 0, 1, 4)
    bad = Mesh(m.nodes, m.triangles, m.bedges, np.where(m.bedge_tags == 1, 9, m.bedge_tags), m.node_tags)
    with pytest.raises(TagError):
        assemble_perturbed(bad)


def test_missing_gamma_rejected():
    m = generate_rectangle_mesh(0, 1, 0, 1, 4)
    with pytest.raises(TagError):
        assemble_homogenized(m, bc="dirichlet")


def test_delta_zero_equals_none(hmesh):
    a = assemble_homogenized(hmesh, bc="delta", beta=BetaFunction.constant(0.0))
    b = assemble_homogenized(hmesh, bc="none")
    assert abs(a.K - b.K).max() == 0


def test_delta_line_mass(hmesh):
    beta = 2 * math.pi / 3
    a = assemble_homogenized(hmesh, bc="delta", beta=BetaFunction.constant(beta))
    b = assemble_homogenized(hmesh, bc="none")
    ones = np.ones(hmesh.n_nodes)
    length = hmesh.edge_lengths(hmesh.edges_of(TAG_GAMMA)).sum()
    assert (a.form_value(ones) - b.form_value(ones)).real == pytest.approx(beta * length, rel=1e-12)


def test_dirichlet_on_gamma_zero(hmesh):
    sys = assemble_homogenized(hmesh, bc="dirichlet")
    u = solve_resolvent(sys, model_reference("delta").f)
    assert np.all(u.values[hmesh.nodes_on(TAG_GAMMA)] == 0)


def test_zero_source(hmesh):
    u = solve_resolvent(assemble_homogenized(hmesh), Field(hmesh, np.zeros(hmesh.n_nodes)))
    assert np.all(u.values == 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_resolvent_bound(seed):
    m = _small_mesh()
    sys = assemble_perturbed(m)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(m.n_nodes) + 1j * rng.standard_normal(m.n_nodes)
    f[sys.constrained] = 0
    u = solve_resolvent(sys, Field(m, f))
    M = mass_matrix(m)
    assert np.sqrt(np.vdot(u.values, M @ u.values).real) <= np.sqrt(np.vdot(f, M @ f).real) * (1 + 1e-12)


_SMALL = {}


def _small_mesh():
    if "m" not in _SMALL:
        _SMALL["m"] = generate_rectangle_mesh(-3, 3, 0, math.pi, 16)
    return _SMALL["m"]


def test_residual_contract(hmesh):
    sys = assemble_homogenized(hmesh, bc="none")
    f = discretize(hmesh, model_reference("none").f)
    u = solve_resolvent(sys, f)
    L = sys.K - 1j * sys.M
    r = (L @ u.values - sys.M @ f.values)[sys.free]
    assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm((sys.M @ f.values)[sys.free])


def test_manufactured_second_order():
    ref = model_reference("dirichlet")
    errs = []
    for h in (0.1, 0.05, 0.025):
        m = generate_homogenized_mesh(StripGeometry(), CurveSpec.line(), h)
        u = solve_resolvent(assemble_homogenized(m, bc="dirichlet"), ref.f)
        errs.append(l2_error(u, ref.u0))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(3.2 <= r <= 4.8 for r in ratios), ratios


def test_interpolation_exact_for_linear(pair_02):
    F, P = pair_02.filled, pair_02.perforated
    lin = Field(F, F.nodes[:, 0] + 2 * F.nodes[:, 1])
    out = interpolate(lin, P)
    np.testing.assert_allclose(out.values, P.nodes[:, 0] + 2 * P.nodes[:, 1], atol=1e-12)
    const = interpolate(Field(F, np.full(F.n_nodes, 3.5)), P)
    np.testing.assert_allclose(const.values, 3.5, atol=1e-12)
    same = interpolate(lin, F)
    np.testing.assert_array_equal(same.values, lin.values)


def test_point_outside_reports_index(pair_02):
    u = Field(pair_02.filled, np.zeros(pair_02.filled.n_nodes))
    with pytest.raises(PointLocationError) as exc:
        evaluate(u, np.array([[0.0, 1.0], [10.0, 1.0]]))
    assert exc.value.index == 1


def test_difference_norms():
    m = generate_rectangle_mesh(0, 1, 0, 1, 8)
    u = Field(m, np.sin(m.nodes[:, 0]))
    assert difference_norm(u, u) == 0
    c = Field(m, np.full(m.n_nodes, 2.0))
    assert difference_norm(c, Field(m, np.zeros(m.n_nodes))) == pytest.approx(2.0, rel=1e-12)
    l2, semi, h1 = (difference_norm(u, None, k) for k in ("L2", "H1SEMI", "H1"))
    assert h1 ** 2 == pytest.approx(l2 ** 2 + semi ** 2, rel=1e-12)
    with pytest.raises(MeshMismatchError):
        difference_norm(u, Field(generate_rectangle_mesh(0, 1, 0, 1, 4), np.zeros(25)))


def test_load_vector_integrates_constants():
    m = generate_rectangle_mesh(0, 2, 0, 1, 6)
    assert load_vector(m, lambda p: np.full(len(p), 3.0)).sum() == pytest.approx(6.0, rel=1e-12)


def test_field_csv_and_coo_export(tmp_path):
    m = generate_rectangle_mesh(0, 1, 0, 1, 3)
    Field(m, m.nodes[:, 0] + 1j).to_csv(tmp_path / "f.csv")
    head = (tmp_path / "f.csv").read_text().splitlines()
    assert head[0] == "node_id,x,y,re,im" and len(head) == m.n_nodes + 1
    sys = assemble_perturbed(m)
    sys.export_coo(tmp_path / "k.txt")
    assert (tmp_path / "k.txt").read_text().startswith("row col re im")


def test_deterministic_assembly(pair_02):
    a = assemble_perturbed(pair_02.perforated, Coefficients(A0=1.0, name="shifted"))
    b = assemble_perturbed(pair_02.perforated, Coefficients(A0=1.0, name="shifted"))
    assert system_digest(a) == system_digest(b)
    assert a.metadata["coefficient_id"] == "shifted"
