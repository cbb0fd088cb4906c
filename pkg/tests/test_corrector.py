import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strip_homog.assembly import Coefficients
from strip_homog.corrector import corrected_field, corrector_field, evaluate_W, q_matrices
from strip_homog.errors import DomainError
from strip_homog.geometry import model_domain


@pytest.fixture(scope="module")
def fam():
    return q_matrices(None, model_domain(0.1, 0.01))


def test_identity_q(fam):
    np.testing.assert_allclose(fam.Q, np.broadcast_to(np.eye(2), fam.Q.shape), atol=1e-14)


def test_anisotropic_q():
    f = q_matrices(Coefficients(A=np.diag([4.0, 1.0])), model_domain(0.1, 0.01))
    np.testing.assert_allclose(f.Q[0], np.diag([0.5, 1.0]), atol=1e-14)


def test_default_r5(fam):
    assert fam.R5 == pytest.approx(0.99 * 1.25 / 2)
    assert fam.R5 == pytest.approx(0.61875)
    assert fam.outer_inclusion and fam.disjoint
    assert not fam.inner_inclusion


def test_w_reference_values(fam):
    y = fam.centers[3]
    assert evaluate_W(fam, y) == 1.0
    assert evaluate_W(fam, y + [0.5 * fam.eps * 3, 0.0]) == 0.0
    r_half = fam.R5 * fam.eps * math.sqrt(fam.eta)
    assert evaluate_W(fam, y + [0.0, r_half]) == pytest.approx(0.5, abs=1e-12)
    assert evaluate_W(fam, y + [fam.R5 * fam.eps * (1 + 1e-9), 0.0]) == 0.0


def test_w_continuous_at_outer_edge(fam):
    y = fam.centers[0]
    r = fam.R5 * fam.eps
    assert evaluate_W(fam, y + [r * (1 - 1e-9), 0]) < 1e-8


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(0, math.pi))
def test_w_range(x1, x2):
    f = q_matrices(None, model_domain(0.1, 0.01))
    assert 0.0 <= evaluate_W(f, np.array([x1, x2])) <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.06), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_w_circular_level_sets(r, t1, t2):
    f = q_matrices(None, model_domain(0.1, 0.01))
    y = f.centers[5]
    a = evaluate_W(f, y + r * np.array([math.cos(t1), math.sin(t1)]))
    b = evaluate_W(f, y + r * np.array([math.cos(t2), math.sin(t2)]))
    assert a == pytest.approx(b, abs=1e-12)


def test_corrected_field_zero_near_centers(pair_02):
    dom = model_domain(0.2, 0.5)
    f = q_matrices(None, dom)
    m = pair_02.filled
    out = corrected_field(lambda p: np.ones(len(p)), f, m)
    W = corrector_field(f, m).values
    np.testing.assert_allclose(out.values, 1 - W)
    near = np.min(np.linalg.norm(m.nodes[:, None] - f.centers[None], axis=2), axis=1) <= 1e-12
    assert np.all(out.values[near] == 0)


def test_eta_one_rejected():
    f = q_matrices(None, model_domain(0.2, 1.0))
    with pytest.raises(DomainError):
        evaluate_W(f, np.zeros(2))
