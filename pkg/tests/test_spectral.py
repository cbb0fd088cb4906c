import math

import numpy as np
import pytest
from scipy.optimize import brentq

from strip_homog.assembly import assemble_homogenized, assemble_perturbed
from strip_homog.geometry import BetaFunction, CurveSpec, StripGeometry
from strip_homog.mesh import generate_homogenized_mesh, generate_rectangle_mesh
from strip_homog.spectral import (SpectrumReport, compare_spectra, lowest_eigenvalues, strip_oracle,
                                  transverse_oracle)


def _secular_nu1(beta):
    """Symmetric mode sin(kx): tan(k pi/2) = -2k/beta with k in (1, 2)."""
    g = lambda k: 2 * k * math.cos(k * math.pi / 2) + beta * math.sin(k * math.pi / 2)
    return brentq(g, 1.0, 2.0, xtol=1e-14) ** 2


def test_square_dirichlet_eigenvalues():
    m = generate_rectangle_mesh(0, math.pi, 0, math.pi, 48)
    lam = lowest_eigenvalues(assemble_homogenized(m, bc="none"), 3)
    np.testing.assert_allclose(lam, [2.0, 5.0, 5.0], rtol=0.01)


def test_sparse_path_matches_dense(monkeypatch):
    import strip_homog.spectral as spectral

    m = generate_rectangle_mesh(0, math.pi, 0, math.pi, 24)
    sys = assemble_homogenized(m, bc="none")
    dense = lowest_eigenvalues(sys, 3)
    monkeypatch.setattr(spectral, "DENSE_LIMIT", 0)
    np.testing.assert_allclose(lowest_eigenvalues(sys, 3), dense, rtol=1e-9)


def test_holes_raise_eigenvalues(pair_02):
    lam_p = lowest_eigenvalues(assemble_perturbed(pair_02.perforated), 3)
    lam_f = lowest_eigenvalues(assemble_perturbed(pair_02.filled), 3)
    assert np.all(lam_p >= lam_f - 1e-10)


def test_filled_perturbed_equals_homogenized_none(pair_02):
    a = lowest_eigenvalues(assemble_perturbed(pair_02.filled), 3)
    b = lowest_eigenvalues(assemble_homogenized(pair_02.filled, bc="none"), 3)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_transverse_oracle_values():
    np.testing.assert_allclose(transverse_oracle("none", 4), [1, 4, 9, 16], rtol=1e-10)
    np.testing.assert_allclose(transverse_oracle("dirichlet", 4), [4, 4, 16, 16], rtol=1e-10)
    np.testing.assert_allclose(transverse_oracle("delta", 4, 0.0), transverse_oracle("none", 4), rtol=1e-10)


@pytest.mark.parametrize("beta", [2 * math.pi / 3, 1.0, 10.0])
def test_delta_oracle_against_secular_equation(beta):
    assert transverse_oracle("delta", 1, beta)[0] == pytest.approx(_secular_nu1(beta), rel=1e-9)


def test_delta_oracle_trend_to_dirichlet():
    nus = [transverse_oracle("delta", 1, b)[0] for b in (0.0, 1.0, 10.0, 100.0)]
    assert nus[0] == pytest.approx(1.0, rel=1e-10)
    assert all(a < b < 4.0 for a, b in zip(nus, nus[1:]))
    assert 4.0 - nus[-1] < 0.1


def test_lateral_additivity():
    m = generate_homogenized_mesh(StripGeometry(), CurveSpec.line(), 0.08)
    for bc, beta in (("none", 0.0), ("delta", 2 * math.pi / 3)):
        b = BetaFunction.constant(beta) if bc == "delta" else None
        lam = lowest_eigenvalues(assemble_homogenized(m, bc=bc, beta=b), 2)
        np.testing.assert_allclose(lam, strip_oracle(bc, 2, 3.0, beta), rtol=0.01)


def test_report_roundtrip(tmp_path):
    rep = compare_spectra([0.4, 0.2], "dirichlet", 2, h_far=0.15)
    back = SpectrumReport.from_json(rep.to_json())
    assert back == rep
    rep.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("eps,eta,perturbed_1") and len(lines) == 4
    assert lines[-1].startswith("monotone_first_gap")
