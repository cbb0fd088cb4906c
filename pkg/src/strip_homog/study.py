"""Convergence harness over a decreasing list of eps for the four regimes."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.stats import linregress

from .assembly import (Coefficients, Field, assemble_homogenized, assemble_perturbed, difference_norm, discretize,
                       l2_error, solve_resolvent)
from .corrector import corrected_field, q_matrices
from .errors import ConfigError, DegenerateFitError, StripHomogError
from .geometry import (CurveSpec, EtaLaw, HoleFamily, PerforationConfig, StripGeometry,
                       build_perforated_domain, compute_alpha_eps, compute_beta, estimate_kappa)
from .manufactured import CASES, ManufacturedReference, model_reference
from .mesh import generate_mesh_pair

__all__ = ["StudyConfig", "StudyRecord", "RateFit", "ConvergenceReport", "model_reference",
           "ManufacturedReference", "run_convergence_study", "solve_case", "fit_rate", "emit_report", "bound_value",
           "CSV_COLUMNS"]

CSV_COLUMNS = ("eps", "eta", "l2_error", "h1_error", "h1_uncorrected", "bound", "sharpness_ratio", "kappa", "mu",
               "crosscheck", "status")

# norm whose slope is judged, and the accepted window
EXPECTED = {
    "dirichlet": ("h1", 0.4, 0.7),
    "none": ("h1", 1.3, math.inf),
    "delta": ("l2", 0.4, math.inf),
    "robin": ("l2", 0.4, math.inf),
}


@dataclass(frozen=True)
class StudyConfig:
    """One eps-sweep.

    Mesh size near the holes is ``hole_factor * eps * eta * R2`` and grows
    linearly away from them up to ``h_far``.  ``comparator`` is ``"fem"``
    (homogenized solve on the filled mesh, restricted) or ``"exact"`` (the
    closed-form profile interpolated); the other one always feeds the
    ``crosscheck`` column.  ``odd_profile=None`` picks the odd profile for the
    ``none`` case only.
    """

    case: str
    eps: tuple
    eta_law: EtaLaw = EtaLaw()
    rho: float = 0.0
    mu0: float = 0.0
    a: float = 0.0
    half_length: float = 3.0
    hole_factor: float = 0.25
    h_far: float = 0.05
    grading: float = 0.3
    norms: tuple = ("l2", "h1")
    corrected: bool = False
    comparator: str = "fem"
    odd_profile: bool | None = None
    deterministic: bool = True
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        object.__setattr__(self, "norms", tuple(n.lower() for n in self.norms))
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; expected one of {CASES}")
        if len(self.eps) < 3:
            raise ConfigError("the eps list needs at least 3 entries")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])) or self.eps[-1] <= 0:
            raise ConfigError("the eps list must be positive and strictly decreasing")
        if self.comparator not in ("fem", "exact"):
            raise ConfigError(f"comparator must be 'fem' or 'exact', got {self.comparator!r}")
        if not set(self.norms) <= {"l2", "h1"} or not self.norms:
            raise ConfigError(f"norms must be a subset of l2,h1, got {self.norms}")
        if self.corrected and self.case not in ("dirichlet", "delta"):
            raise ConfigError("the corrected comparator needs Dirichlet holes")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        for e in self.eps:
            PerforationConfig(e, self.eta_law, self.rho, self.mu0)

    @property
    def use_odd_profile(self) -> bool:
        return self.case == "none" if self.odd_profile is None else bool(self.odd_profile)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eta_law"] = {"kind": self.eta_law.kind, "value": self.eta_law.value}
        d["eps"] = list(self.eps)
        d["norms"] = list(self.norms)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        d = dict(d)
        d["eta_law"] = EtaLaw(**d["eta_law"])
        d["eps"] = tuple(d["eps"])
        d["norms"] = tuple(d["norms"])
        return cls(**d)


@dataclass
class StudyRecord:
    eps: float
    eta: float
    l2_error: float = math.nan
    h1_error: float = math.nan
    h1_uncorrected: float = math.nan
    bound: float = math.nan
    sharpness_ratio: float = math.nan
    kappa: float = math.nan
    mu: float = math.nan
    crosscheck: float = math.nan
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class RateFit:
    slope: float
    intercept: float
    band: float

    @property
    def interval(self) -> tuple[float, float]:
        return self.slope - self.band, self.slope + self.band


@dataclass
class ConvergenceReport:
    config: dict
    records: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)

    @property
    def expected(self) -> tuple[str, float, float]:
        return EXPECTED[self.config["case"]]

    @property
    def passed(self) -> bool:
        norm, lo, hi = self.expected
        fit = self.fits.get(norm)
        return fit is not None and lo <= fit.slope <= hi

    @property
    def sharpness_floor_held(self) -> bool:
        """Every sharpness ratio stays above half of the coarsest one."""
        r = [rec.sharpness_ratio for rec in self.records if rec.ok]
        return len(r) >= 2 and all(x >= 0.5 * r[0] for x in r[1:])

    def to_json(self) -> str:
        return json.dumps({"config": self.config, "records": [asdict(r) for r in self.records],
                           "fits": {k: asdict(v) for k, v in self.fits.items()}}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ConvergenceReport":
        d = json.loads(text)
        return cls(d["config"], [StudyRecord(**r) for r in d["records"]],
                   {k: RateFit(**v) for k, v in d["fits"].items()})


# ---------------------------------------------------------------- rates and bounds

def fit_rate(records, norm: str = "h1") -> RateFit:
    """Least-squares slope of ``ln error`` against ``ln eps`` with a 95% band.

    ``records`` is a sequence of StudyRecord or of ``(eps, error)`` pairs.
    """
    pairs = [(r.eps, getattr(r, f"{norm}_error")) if isinstance(r, StudyRecord) else tuple(r) for r in records]
    if len(pairs) < 3:
        raise DegenerateFitError(f"need at least 3 records, got {len(pairs)}")
    x, y = np.asarray(pairs, dtype=float).T
    if not (np.all(np.isfinite(y)) and np.all(y > 0) and np.all(x > 0)):
        raise DegenerateFitError("errors must be positive and finite")
    fit = linregress(np.log(x), np.log(y))
    return RateFit(float(fit.slope), float(fit.intercept), float(1.96 * fit.stderr))


def bound_value(case: str, eps: float, eta: float, kappa: float = 0.0, mu: float = 0.0,
                corrected: bool = False) -> float:
    """Rate expression of the case without its unknown constant."""
    log_eta = abs(math.log(eta))
    root_eps = math.sqrt(eps)
    if case == "dirichlet":
        return root_eps * (math.sqrt(log_eta) + 1.0)
    if case == "none":
        return root_eps * eta * (math.sqrt(log_eta) + 1.0)
    if case == "robin":
        return root_eps + kappa
    if case == "delta":
        if corrected:
            return root_eps + math.sqrt(abs(mu)) + kappa
        return root_eps + kappa + abs(mu)
    raise ValueError(f"unknown case {case!r}")


# ---------------------------------------------------------------- one row

def _delta_data(cfg: StudyConfig, dom, pc: PerforationConfig):
    """Averaged window function, beta and kappa for the delta and Robin cases."""
    kind = "dirichlet-delta" if cfg.case == "delta" else "robin"
    alpha_eps = compute_alpha_eps(dom, kind)
    fam = dom.family
    spacing = round(float(fam.s[1] - fam.s[0]) / dom.eps, 12) if len(fam.s) > 1 else 3.0
    period = spacing * dom.eps
    # fraction of the curve covered by windows; rounding keeps the exact-cover case exact
    cover = min(1.0, round(2 * fam.b * fam.R2 / spacing, 12))
    vals = alpha_eps.values
    alpha = float(vals[0] if np.all(vals == vals[0]) else np.mean(vals)) * cover
    mid = len(alpha_eps.values) // 2
    kappa = estimate_kappa(alpha_eps, alpha, alpha_eps.windows[mid, 0], period)
    if cfg.case == "delta":
        beta = compute_beta(alpha, cfg.rho, pc.mu)
    else:
        beta = compute_beta(alpha, 0.0, 0.0, mode="robin", a=cfg.a)
    return alpha, beta, kappa


def solve_case(cfg: StudyConfig, eps: float) -> tuple[StudyRecord, dict]:
    """One study row plus the fields behind it (``u_eps``, ``comparator``, ``u0_fem``, ``u0_exact``).

    Stage errors are caught and recorded in ``status``; the field dict is
    then empty.
    """
    pc = PerforationConfig(eps, cfg.eta_law, cfg.rho, cfg.mu0)
    eta = pc.eta
    rec = StudyRecord(eps=float(eps), eta=float(eta))
    out: dict = {}
    try:
        mu = pc.mu
        strip = StripGeometry(math.pi, cfg.half_length)
        dirichlet_holes = cfg.case in ("dirichlet", "delta")
        fam = HoleFamily.periodic(eps, cfg.half_length, dirichlet=dirichlet_holes)
        dom = build_perforated_domain(strip, CurveSpec.line(math.pi / 2), fam, pc)
        kappa, beta = 0.0, None
        if cfg.case in ("delta", "robin"):
            _, beta, kappa = _delta_data(cfg, dom, pc)
        ref = model_reference(cfg.case, cfg.rho, mu, cfg.a, eta, neumann_odd=cfg.use_odd_profile)
        pair = generate_mesh_pair(dom, cfg.hole_factor * dom.scale * fam.R2, cfg.h_far, grading=cfg.grading)
        P, F = pair.perforated, pair.filled

        u_eps = solve_resolvent(assemble_perturbed(P, Coefficients(a=cfg.a)), ref.f)
        hbc = {"dirichlet": "dirichlet", "delta": "delta", "robin": "delta", "none": "none"}[cfg.case]
        u0_fem = solve_resolvent(assemble_homogenized(F, bc=hbc, beta=beta), ref.f)
        u0_exact = discretize(F, ref.u0)
        rec.crosscheck = l2_error(u0_fem, ref.u0)

        chosen = u0_fem if cfg.comparator == "fem" else u0_exact
        comp = Field(P, chosen.values[pair.node_map])
        rec.h1_uncorrected = difference_norm(u_eps, comp, "H1")
        if cfg.corrected:
            comp = corrected_field(comp, q_matrices(None, dom), P)
        rec.l2_error = difference_norm(u_eps, comp, "L2") if "l2" in cfg.norms else math.nan
        rec.h1_error = difference_norm(u_eps, comp, "H1")
        rec.kappa = float(kappa)
        rec.mu = float(mu)
        rec.bound = bound_value(cfg.case, eps, eta, kappa, mu, cfg.corrected)
        rec.sharpness_ratio = rec.h1_error ** 2 / (eps * (abs(math.log(eta)) + 1.0))
        if "h1" not in cfg.norms:
            rec.h1_error = math.nan
        out = {"u_eps": u_eps, "comparator": comp, "u0_fem": u0_fem, "u0_exact": u0_exact}
    except (StripHomogError, ValueError, ArithmeticError, MemoryError) as exc:
        rec.status = f"failed: {type(exc).__name__}: {exc}"
    return rec, out


def _run_row(cfg: StudyConfig, eps: float) -> StudyRecord:
    return solve_case(cfg, eps)[0]


def run_convergence_study(cfg: StudyConfig) -> ConvergenceReport:
    """Run every eps row, then fit slopes over the rows that succeeded."""
    if cfg.deterministic or cfg.threads == 1:
        records = [_run_row(cfg, e) for e in cfg.eps]
    else:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            records = list(pool.map(_run_row, [cfg] * len(cfg.eps), cfg.eps))
    records.sort(key=lambda r: -r.eps)
    report = ConvergenceReport(cfg.to_dict(), records)
    good = [r for r in records if r.ok]
    for norm in cfg.norms:
        try:
            report.fits[norm] = fit_rate(good, norm)
        except DegenerateFitError:
            pass
    return report


# ---------------------------------------------------------------- output

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, int, np.floating)) and not isinstance(v, bool) else str(v)


def emit_report(report: ConvergenceReport, fmt: str, path) -> None:
    """Write ``report`` as CSV (records, then one ``slope_<norm>`` footer row per fit) or JSON."""
    if fmt == "json":
        with open(path, "w") as fh:
            fh.write(report.to_json() + "\n")
        return
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    names = [f.name for f in fields(StudyRecord)]
    assert tuple(names) == CSV_COLUMNS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in report.records:
            w.writerow([_fmt(getattr(r, n)) for n in names])
        for norm, fit in report.fits.items():
            w.writerow([f"slope_{norm}", _fmt(fit.slope), _fmt(fit.intercept), _fmt(fit.band)])
