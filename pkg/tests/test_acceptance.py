"""Acceptance criteria at full scale; each test prints one PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from strip_homog.assembly import (Coefficients, Field, assemble_homogenized, assemble_perturbed, l2_error,
                                  mass_matrix, solve_resolvent)
from strip_homog.cell import dirichlet_constant, neumann_constant, solve_cell_problem, solve_hole_flux_problem
from strip_homog.corrector import evaluate_W, q_matrices
from strip_homog.errors import CompatibilityError
from strip_homog.geometry import (CurveSpec, EtaLaw, StripGeometry, compute_alpha_eps, estimate_kappa,
                                  hole_flux_field_circle, model_domain)
from strip_homog.manufactured import model_reference
from strip_homog.mesh import generate_homogenized_mesh, generate_mesh_pair, read_mesh, write_mesh
from strip_homog.spectral import compare_spectra, transverse_oracle
from strip_homog.study import StudyConfig, run_convergence_study

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def _report(label, ok, detail, started):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail} ({time.perf_counter() - started:.1f}s)")
        return ok
    return _report


@pytest.mark.parametrize("eta", [0.2, 0.1, 0.05])
def test_c1_dirichlet_cell_constant(report, eta):
    t0 = time.perf_counter()
    sol = solve_cell_problem(eta, "D")
    expect = dirichlet_constant(eta)
    rel = abs(sol.c_plus - expect) / abs(expect)
    elapsed = time.perf_counter() - t0
    ok = rel <= 0.02 and elapsed < 30
    assert report(f"1 Dirichlet cell constant eta={eta}", ok,
                  f"c+={sol.c_plus:.6f} closed form={expect:.6f} rel={rel:.2e}", t0)


@pytest.mark.parametrize("eta", [0.3, 0.2])
def test_c2_neumann_cell_constant(report, eta):
    t0 = time.perf_counter()
    sol = solve_cell_problem(eta, "N")
    expect = neumann_constant(eta)
    rel = abs(sol.c_plus - expect) / abs(expect)
    elapsed = time.perf_counter() - t0
    ok = rel <= 0.05 and elapsed < 30
    assert report(f"2 Neumann cell constant eta={eta}", ok,
                  f"c+={sol.c_plus:.6f} closed form={expect:.6f} rel={rel:.2e}", t0)


def test_c3_hole_flux(report):
    t0 = time.perf_counter()
    sol = solve_hole_flux_problem(h=0.02)
    pts = sol.mesh.nodes
    exact = hole_flux_field_circle(pts)
    err = np.abs(sol.X - exact).max() / np.abs(exact).max()
    try:
        solve_hole_flux_problem(phi=11 / 8, h=0.1)
        rejected = False
    except CompatibilityError:
        rejected = True
    assert report("3 hole flux problem", err <= 0.01 and rejected,
                  f"relative Linf error {err:.2e}, incompatible data rejected={rejected}", t0)


def test_c4_manufactured_second_order(report):
    t0 = time.perf_counter()
    ref = model_reference("dirichlet")
    errs = []
    for h in (0.1, 0.05, 0.025, 0.0125):
        m = generate_homogenized_mesh(StripGeometry(), CurveSpec.line(), h)
        errs.append(l2_error(solve_resolvent(assemble_homogenized(m, bc="dirichlet"), ref.f), ref.u0))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    ok = all(3.2 <= r <= 4.8 for r in ratios) and time.perf_counter() - t0 < 120
    assert report("4 manufactured solution", ok, "L2 ratios " + ", ".join(f"{r:.2f}" for r in ratios), t0)


def test_c5_dirichlet_rate_and_sharpness(report):
    t0 = time.perf_counter()
    rep = run_convergence_study(StudyConfig("dirichlet", (0.2, 0.1, 0.05, 0.025)))
    fit = rep.fits["h1"]
    ratios = [r.sharpness_ratio for r in rep.records]
    ok = 0.4 <= fit.slope <= 0.7 and rep.sharpness_floor_held and time.perf_counter() - t0 < 600
    assert report("5 eta=1 Dirichlet holes", ok,
                  f"H1 slope {fit.slope:.3f}, sharpness ratios " + ", ".join(f"{x:.3f}" for x in ratios), t0)


def test_c6_no_condition_rate(report):
    t0 = time.perf_counter()
    rep = run_convergence_study(StudyConfig("none", (0.2, 0.1, 0.05, 0.025), EtaLaw("pow", 1.0)))
    fit = rep.fits["h1"]
    ok = fit.slope >= 1.3 and time.perf_counter() - t0 < 600
    assert report("6 a=0, eta=eps", ok, f"H1 slope {fit.slope:.3f}", t0)


def test_c7_delta_rate_and_corrector(report):
    t0 = time.perf_counter()
    cfg = StudyConfig("delta", (0.4, 0.2, 0.1, 0.05), EtaLaw("exp", 1.0), rho=1.0, corrected=True)
    rep = run_convergence_study(cfg)
    fit = rep.fits["l2"]
    last = rep.records[-1]
    ok = (fit.slope >= 0.4 and last.kappa == 0.0 and last.h1_error < last.h1_uncorrected
          and time.perf_counter() - t0 < 900)
    assert report("7 eta=exp(-1/eps)", ok,
                  f"L2 slope {fit.slope:.3f}; finest H1 corrected {last.h1_error:.3f} "
                  f"vs uncorrected {last.h1_uncorrected:.3f}", t0)


def test_c8_spectral_trend(report):
    t0 = time.perf_counter()
    dirichlet = compare_spectra([0.2, 0.1, 0.05, 0.025], "dirichlet", 2)
    delta = compare_spectra([0.4, 0.2, 0.1, 0.05], "delta", 2)
    nus = [transverse_oracle("delta", 1, b)[0] for b in (0.0, 1.0, 10.0, 100.0)]
    trend = abs(nus[0] - 1.0) < 1e-10 and all(a < b < 4.0 for a, b in zip(nus, nus[1:]))
    ok = dirichlet.monotone and delta.monotone and trend and time.perf_counter() - t0 < 600
    fmt = lambda g: ", ".join(f"{x:.3f}" for x in g)
    assert report("8 spectral trend", ok,
                  f"Dirichlet gaps {fmt(dirichlet.first_gaps)}; delta gaps {fmt(delta.first_gaps)}; "
                  f"nu1 {fmt(nus)}", t0)


def test_c9_invariants(report, tmp_path):
    t0 = time.perf_counter()
    checks = {}
    dom = model_domain(0.2, 0.5)
    pair = generate_mesh_pair(dom, dom.scale * 1.25 / 4, 0.1)
    P = pair.perforated

    A = lambda p: np.stack([np.stack([2 + np.sin(p[:, 0]), 0.3 + 0 * p[:, 0]], -1),
                            np.stack([0.3 + 0 * p[:, 0], 1.5 + 0 * p[:, 1]], -1)], 1)
    K = assemble_perturbed(P, Coefficients(A=A, A0=lambda p: 1 + p[:, 1] ** 2)).K
    checks["symmetry"] = abs(K - K.T).max() <= 1e-12 * abs(K).max()

    sys = assemble_perturbed(P)
    M = mass_matrix(P)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        f = rng.standard_normal(P.n_nodes) + 1j * rng.standard_normal(P.n_nodes)
        f[sys.constrained] = 0
        u = solve_resolvent(sys, Field(P, f)).values
        worst = max(worst, math.sqrt(np.vdot(u, M @ u).real / np.vdot(f, M @ f).real))
    checks["resolvent"] = worst <= 1 + 1e-12

    fam = q_matrices(None, model_domain(0.1, 0.01))
    pts = np.column_stack([rng.uniform(-3, 3, 20000), rng.uniform(0, math.pi, 20000)])
    W = evaluate_W(fam, pts)
    y = fam.centers[0]
    edge = evaluate_W(fam, y + [fam.R5 * fam.eps * (1 - 1e-9), 0.0])
    checks["W range/continuity"] = bool(np.all((W >= 0) & (W <= 1))) and edge < 1e-8

    ae = compute_alpha_eps(model_domain(0.1, 0.5), "dirichlet-delta")
    w = ae.windows[len(ae.values) // 2]
    checks["kappa=0"] = estimate_kappa(ae, float(ae.values[0]), w[0], 0.3) == 0.0

    write_mesh(P, tmp_path / "p.mesh")
    checks["mesh round-trip"] = read_mesh(tmp_path / "p.mesh") == P

    ok = all(checks.values()) and time.perf_counter() - t0 < 120
    assert report("9 invariant suite", ok,
                  ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
                  + f"; max |u|/|f| {worst:.4f}", t0)
