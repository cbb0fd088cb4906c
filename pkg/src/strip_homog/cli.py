"""Command-line entry point ``strip-homog``."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .errors import ConfigError, StripHomogError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ASSERT = 0, 2, 3, 4

DEFAULT_LAWS = {"dirichlet": "const:1", "delta": "exp:1,0", "robin": "const:0.5", "none": "pow:1"}
DEFAULT_EPS = {"dirichlet": "0.2,0.1,0.05,0.025", "delta": "0.4,0.2,0.1,0.05", "robin": "0.2,0.1,0.05",
               "none": "0.2,0.1,0.05,0.025"}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI file with a [study] section")
    p.add_argument("--case", choices=("dirichlet", "delta", "robin", "none"))
    p.add_argument("--eps", help="comma-separated eps values")
    p.add_argument("--eta-law", help="const:<c>, pow:<alpha> or exp:<rho>,<mu>")
    p.add_argument("--a", type=float, help="Robin coefficient on the holes")
    p.add_argument("--norm", help="comma-separated subset of l2,h1")
    p.add_argument("--corrected", action="store_true", default=None, help="use the (1-W) u0 comparator")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--deterministic", action="store_true", default=None)
    p.add_argument("--threads", type=int)
    p.add_argument("--assert", dest="check", action="store_true", help="exit 4 if the acceptance check fails")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strip-homog", description="Homogenization checks for a perforated strip")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("mesh", "mesh the perforated strip for one eps"),
                       ("solve", "solve perturbed and homogenized problems for one eps"),
                       ("study", "run an eps-sweep and fit rates"),
                       ("spectrum", "compare low eigenvalues over eps")):
        _common(sub.add_parser(name, help=text))
    cell = sub.add_parser("cell", help="periodic cell constants")
    cell.add_argument("--kind", choices=("D", "N", "R"), default="D")
    cell.add_argument("--eta", default="0.2,0.1,0.05", help="comma-separated eta values")
    cell.add_argument("--h", type=float, default=0.05)
    cell.add_argument("--out", default=".")
    cell.add_argument("--assert", dest="check", action="store_true")
    sub.choices["spectrum"].add_argument("--k", type=int, default=4)
    return parser


def _merged_values(args) -> dict:
    from .config import parse_eps_list, read_config_file

    values = read_config_file(args.config) if args.config else {}
    if args.case:
        values["case"] = args.case
    values.setdefault("case", "dirichlet")
    case = values["case"]
    if args.eps:
        values["eps"] = parse_eps_list(args.eps)
    values.setdefault("eps", parse_eps_list(DEFAULT_EPS.get(case, "0.2,0.1,0.05")))
    if args.eta_law:
        values["eta_law"] = args.eta_law
    values.setdefault("eta_law", DEFAULT_LAWS.get(case, "const:1"))
    if args.a is not None:
        values["a"] = args.a
    if args.norm:
        values["norms"] = tuple(n.strip() for n in args.norm.split(",") if n.strip())
    if args.corrected:
        values["corrected"] = True
    if args.deterministic:
        values["deterministic"] = True
    if args.threads is not None:
        values["threads"] = args.threads
        values.setdefault("deterministic", args.threads == 1)
    return values


def _single_domain(values):
    from .geometry import (CurveSpec, EtaLaw, HoleFamily, PerforationConfig, StripGeometry,
                           build_perforated_domain)

    law, rho, mu0 = EtaLaw.parse(values["eta_law"])
    eps = values["eps"][0]
    pc = PerforationConfig(eps, law, rho, mu0)
    X = values.get("half_length", 3.0)
    fam = HoleFamily.periodic(eps, X, dirichlet=values["case"] in ("dirichlet", "delta"))
    return build_perforated_domain(StripGeometry(math.pi, X), CurveSpec.line(math.pi / 2), fam, pc), pc


def _cmd_mesh(args) -> int:
    from .mesh import generate_mesh_pair, mesh_quality, write_mesh

    values = _merged_values(args)
    dom, _ = _single_domain(values)
    pair = generate_mesh_pair(dom, values.get("hole_factor", 0.25) * dom.scale * dom.family.R2,
                              values.get("h_far", 0.05), grading=values.get("grading", 0.3))
    os.makedirs(args.out, exist_ok=True)
    write_mesh(pair.perforated, os.path.join(args.out, "perforated.mesh"))
    write_mesh(pair.filled, os.path.join(args.out, "filled.mesh"))
    q = mesh_quality(pair.perforated)
    print(f"holes={dom.n_holes} nodes={pair.perforated.n_nodes} elements={q.n_elements} "
          f"min_angle={q.min_angle:.2f} h_min={q.h_min:.3g} h_max={q.h_max:.3g}")
    return EXIT_OK


def _cmd_solve(args) -> int:
    from .config import build_study_config
    from .study import solve_case

    values = _merged_values(args)
    eps = values["eps"][0]
    values["eps"] = (eps, eps / 2, eps / 4)  # a config holds a sweep; only its first entry is solved
    cfg = build_study_config(values)
    rec, fields = solve_case(cfg, eps)
    if not rec.ok:
        print(rec.status, file=sys.stderr)
        return EXIT_NUMERICAL
    os.makedirs(args.out, exist_ok=True)
    for name, fld in fields.items():
        fld.to_csv(os.path.join(args.out, f"{name}.csv"))
    print(f"eps={rec.eps:g} eta={rec.eta:.6g} L2={rec.l2_error:.6e} H1={rec.h1_error:.6e} "
          f"crosscheck={rec.crosscheck:.3e}")
    return EXIT_OK


def _cmd_study(args) -> int:
    from .config import build_study_config
    from .study import emit_report, run_convergence_study

    cfg = build_study_config(_merged_values(args))
    report = run_convergence_study(cfg)
    os.makedirs(args.out, exist_ok=True)
    emit_report(report, "csv", os.path.join(args.out, "report.csv"))
    emit_report(report, "json", os.path.join(args.out, "report.json"))
    for r in report.records:
        print(f"eps={r.eps:<8g} eta={r.eta:<12.6g} L2={r.l2_error:<12.5e} H1={r.h1_error:<12.5e} {r.status}")
    for norm, fit in report.fits.items():
        print(f"slope_{norm} = {fit.slope:.4f} +/- {fit.band:.4f}")
    norm, lo, hi = report.expected
    print(f"check: slope_{norm} in [{lo}, {hi}] -> {'PASS' if report.passed else 'FAIL'}")
    if any(not r.ok for r in report.records) and not report.fits:
        return EXIT_NUMERICAL
    if args.check and not report.passed:
        return EXIT_ASSERT
    return EXIT_OK


def _cmd_spectrum(args) -> int:
    from .geometry import EtaLaw
    from .spectral import compare_spectra

    values = _merged_values(args)
    case = values["case"]
    law, rho, mu0 = EtaLaw.parse(values["eta_law"])
    report = compare_spectra(values["eps"], case, args.k, eta_law=law, rho=rho or 1.0, mu0=mu0,
                             a=values.get("a", 0.0))
    os.makedirs(args.out, exist_ok=True)
    report.to_csv(os.path.join(args.out, "spectrum.csv"))
    report.to_json(os.path.join(args.out, "spectrum.json"))
    for r in report.rows:
        print(f"eps={r.eps:<8g} lambda1={r.perturbed[0]:.6f} hom={r.homogenized[0]:.6f} "
              f"oracle={r.oracle[0]:.6f} gap={r.gaps[0]:.3e}")
    print(f"monotone first gap: {report.monotone}")
    if args.check and not report.monotone:
        return EXIT_ASSERT
    return EXIT_OK


def _cmd_cell(args) -> int:
    from .cell import dirichlet_constant, extract_cell_constant, neumann_constant, solve_cell_problem
    from .config import parse_eps_list

    etas = parse_eps_list(args.eta)
    os.makedirs(args.out, exist_ok=True)
    rows, ok = [], True
    for eta in etas:
        sol = solve_cell_problem(eta, args.kind, h=args.h)
        cp, cm = extract_cell_constant(sol)
        ref = {"D": dirichlet_constant, "N": neumann_constant}.get(args.kind)
        expect = ref(eta) if ref else math.nan
        tol = {"D": 0.02, "N": 0.05}.get(args.kind, math.inf)
        good = not ref or abs(cp - expect) <= tol * abs(expect)
        ok &= good
        rows.append({"kind": args.kind, "eta": eta, "c_plus": cp, "c_minus": cm, "closed_form": expect})
        sol.Z.to_csv(os.path.join(args.out, f"cell_{args.kind}_{eta:g}.csv"))
        print(f"kind={args.kind} eta={eta:g} c+={cp:.6f} c-={cm:.6f} closed_form={expect:.6f}")
    with open(os.path.join(args.out, "cell_constants.json"), "w") as fh:
        json.dump(rows, fh, indent=2)
    if args.check and not ok:
        return EXIT_ASSERT
    return EXIT_OK


COMMANDS = {"mesh": _cmd_mesh, "solve": _cmd_solve, "study": _cmd_study, "spectrum": _cmd_spectrum,
            "cell": _cmd_cell}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StripHomogError, ArithmeticError, MemoryError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
