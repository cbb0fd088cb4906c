"""Low eigenvalues of the perforated and homogenized operators and a 1D oracle."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .assembly import AssembledSystem, assemble_homogenized, assemble_perturbed
from .errors import ConvergenceError
from .geometry import (BetaFunction, CurveSpec, EtaLaw, HoleFamily, PerforationConfig, StripGeometry,
                       build_perforated_domain)
from .mesh import generate_mesh_pair

DENSE_LIMIT = 500
EIG_RESIDUAL = 1e-8


def lowest_eigenvalues(system: AssembledSystem, k: int = 4, *, return_vectors: bool = False, seed: int = 0):
    """The ``k`` smallest eigenvalues of ``K u = lambda M u`` on the free nodes."""
    if k < 1:
        raise ValueError("k must be at least 1")
    free = system.free
    K = system.K[free][:, free]
    M = system.M[free][:, free]
    if np.iscomplexobj(K.data):
        if np.abs(K.data.imag).max(initial=0.0) > 0:
            raise ValueError("eigenvalues are computed for real symmetric forms only")
        K = K.real
    K = K.tocsc()
    M = M.tocsc()
    n = len(free)
    k = min(k, n)
    if n < DENSE_LIMIT:
        vals, vecs = sla.eigh(K.toarray(), M.toarray(), subset_by_index=[0, k - 1])
    else:
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            vals, vecs = spla.eigsh(K, k=k, M=M, sigma=0.0, which="LM", v0=v0, tol=1e-12, maxiter=2000)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"eigensolver did not converge: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    for j in range(k):
        u = vecs[:, j]
        Mu = M @ u
        res = np.linalg.norm(K @ u - vals[j] * Mu)
        if res > EIG_RESIDUAL * max(np.linalg.norm(Mu), 1e-300) * max(1.0, abs(vals[j])):
            raise ConvergenceError(f"eigenpair {j} residual {res:.3e} too large")
    if return_vectors:
        full = np.zeros((system.mesh.n_nodes, k))
        full[free] = vecs
        return vals, full
    return vals


# ---------------------------------------------------------------- 1D oracle

def _prufer_end(nu: float, beta: float | None, split: float = math.pi / 2, end: float = math.pi) -> float:
    """Prüfer angle at ``end`` for ``-phi'' = nu phi`` with ``phi(0) = 0``.

    ``beta`` adds the jump ``phi'(split+) - phi'(split-) = beta phi(split)``.
    """
    def rhs(_, th):
        return np.cos(th) ** 2 + nu * np.sin(th) ** 2

    opts = dict(method="DOP853", rtol=1e-12, atol=1e-13)
    th = solve_ivp(rhs, (0.0, split), [0.0], **opts).y[0, -1]
    if beta:
        n = math.floor(th / math.pi)
        frac = math.atan2(math.sin(th), math.cos(th) + beta * math.sin(th)) % math.pi
        th = n * math.pi + frac
    return float(solve_ivp(rhs, (split, end), [th], **opts).y[0, -1])


def _shoot(j: int, beta: float | None, end: float) -> float:
    """``j``-th eigenvalue: the ``nu`` with Prüfer angle ``j pi`` at ``end``."""
    target = j * math.pi
    lo, hi = 0.0, max(4.0, (j * math.pi / end) ** 2 * 4)
    while _prufer_end(hi, beta, end=end, split=min(math.pi / 2, end)) < target:
        lo, hi = hi, 2 * hi
        if hi > 1e9:
            raise ConvergenceError("eigenvalue bracket not found")
    f = lambda nu: _prufer_end(nu, beta, end=end, split=min(math.pi / 2, end)) - target
    if f(lo) > 0:
        raise ConvergenceError("eigenvalue bracket lost monotonicity")
    return brentq(f, lo, hi, xtol=1e-13, rtol=1e-14, maxiter=200)


def transverse_oracle(bc: str = "none", k: int = 4, beta: float = 0.0) -> np.ndarray:
    """Lowest ``k`` eigenvalues of ``-phi''`` on ``(0, pi)`` with zero end values.

    ``bc``: ``"none"`` (no condition at ``pi/2``), ``"dirichlet"`` (``phi(pi/2)
    = 0``), or ``"delta"`` (continuity and derivative jump ``beta phi``).
    Values come from Prüfer-angle shooting, not from a closed form.
    """
    if bc == "none":
        return np.array([_shoot(j, None, math.pi) for j in range(1, k + 1)])
    if bc == "delta":
        return np.array([_shoot(j, float(beta), math.pi) for j in range(1, k + 1)])
    if bc == "dirichlet":
        # two decoupled halves (0, pi/2) and (pi/2, pi) with the same spectrum
        half = [_shoot(j, None, math.pi / 2) for j in range(1, k // 2 + 2)]
        return np.sort(np.repeat(half, 2))[:k]
    raise ValueError(f"unknown bc {bc!r}")


def strip_oracle(bc: str, k: int, half_length: float, beta: float = 0.0) -> np.ndarray:
    """Lowest ``k`` values of ``nu_i + (m pi / (2X))^2`` for the truncated straight model."""
    nu = transverse_oracle(bc, k, beta)
    lat = (np.arange(1, k + 1) * math.pi / (2 * half_length)) ** 2
    return np.sort(np.add.outer(nu, lat).ravel())[:k]


# ---------------------------------------------------------------- comparison

@dataclass
class SpectrumRow:
    eps: float
    eta: float
    perturbed: list
    homogenized: list
    oracle: list
    gaps: list
    hole_threshold: float
    spurious_free: bool


@dataclass
class SpectrumReport:
    case: str
    k: int
    rows: list = field(default_factory=list)

    @property
    def first_gaps(self) -> list:
        return [r.gaps[0] for r in self.rows]

    @property
    def monotone(self) -> bool:
        g = self.first_gaps
        return all(b < a for a, b in zip(g, g[1:]))

    def to_json(self, path=None) -> str:
        text = json.dumps({"case": self.case, "k": self.k, "rows": [asdict(r) for r in self.rows]}, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, text: str) -> "SpectrumReport":
        data = json.loads(text)
        return cls(data["case"], data["k"], [SpectrumRow(**r) for r in data["rows"]])

    def to_csv(self, path):
        cols = ["eps", "eta"] + [f"{p}_{j + 1}" for p in ("perturbed", "homogenized", "oracle", "gap")
                                 for j in range(self.k)] + ["spurious_free"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([repr(r.eps), repr(r.eta)] + [repr(float(v)) for v in
                                                          r.perturbed + r.homogenized + r.oracle + r.gaps]
                           + [int(r.spurious_free)])
        if len(self.rows) >= 2:
            with open(path, "a", newline="") as fh:
                csv.writer(fh).writerow(["monotone_first_gap", int(self.monotone)])


def _case_setup(case: str, eps: float, eta: float, rho: float, a: float):
    if case == "dirichlet":
        return True, "dirichlet", None
    if case == "delta":
        return True, "delta", 2 * math.pi / 3 * rho
    if case == "robin":
        return False, "delta", 2 * math.pi * eta / 3 * a
    if case == "none":
        return False, "none", None
    raise ValueError(f"unknown case {case!r}")


def compare_spectra(eps_list, case: str = "dirichlet", k: int = 4, *, eta_law: EtaLaw | None = None,
                    rho: float = 1.0, mu0: float = 0.0, a: float = 0.0, half_length: float = 3.0,
                    h_far: float = 0.05, grading: float = 0.3) -> SpectrumReport:
    """Perturbed versus homogenized low eigenvalues over a list of ``eps``.

    The homogenized values are computed on the filled mesh that contains the
    perforated mesh, so both eigensolves share the discretization away from
    the holes; the transverse oracle plus lateral modes is reported alongside.
    """
    from .assembly import Coefficients

    if eta_law is None:
        eta_law = EtaLaw("exp", rho + mu0) if case == "delta" else EtaLaw("const", 1.0)
    report = SpectrumReport(case, k)
    strip = StripGeometry(math.pi, half_length)
    curve = CurveSpec.line(math.pi / 2)
    for eps in eps_list:
        cfg = PerforationConfig(eps, eta_law, rho, mu0)
        eta = cfg.eta
        dirichlet, hbc, beta = _case_setup(case, eps, eta, rho + mu0, a)
        fam = HoleFamily.periodic(eps, half_length, dirichlet=dirichlet)
        dom = build_perforated_domain(strip, curve, fam, cfg)
        pair = generate_mesh_pair(dom, dom.scale * fam.R2 / 4, h_far, grading=grading)
        coef = Coefficients(a=a)
        lam_eps = lowest_eigenvalues(assemble_perturbed(pair.perforated, coef), k)
        bfun = BetaFunction.constant(beta) if beta is not None else None
        lam_0 = lowest_eigenvalues(assemble_homogenized(pair.filled, bc=hbc, beta=bfun), k)
        orc = strip_oracle(hbc, k, half_length, beta or 0.0)
        threshold = 0.5 * math.pi ** 2 / (2 * dom.scale * fam.R2) ** 2
        report.rows.append(SpectrumRow(float(eps), float(eta), lam_eps.tolist(), lam_0.tolist(), orc.tolist(),
                                       np.abs(lam_eps - lam_0).tolist(), threshold,
                                       bool(np.all(lam_eps < threshold))))
    return report
