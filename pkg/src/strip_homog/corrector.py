"""Logarithmic boundary corrector around the Dirichlet holes."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .assembly import Coefficients, Field, interpolate
from .errors import DomainError, EllipticityError
from .geometry import MODEL_R2, PerforatedDomain
from .mesh import Mesh

SAFETY = 0.99


def _inverse_sqrt(A: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(A)
    if np.any(w <= 0):
        raise EllipticityError(f"coefficient matrix is not positive definite (eigenvalues {w})")
    return (V / np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)


@dataclass(frozen=True, eq=False)
class EllipseFamily:
    """Ellipses ``E_r^k = {|Q_k (x - y_k)| < eps r R5}`` around the Dirichlet holes."""

    centers: np.ndarray   # (n, 2)
    Q: np.ndarray         # (n, 2, 2)
    R5: float
    eps: float
    eta: float
    hole_reach: float     # max over holes of |Q_k z| / (eps eta) for hole points z
    outer_limit: float    # largest R5 with E_1 inside B(y_k, R2 eps / 2)
    ball_limit: float     # largest R5 with E_1 inside B(y_k, b R2 eps)

    def __post_init__(self):
        object.__setattr__(self, "_tree", cKDTree(self.centers) if len(self.centers) else None)

    @property
    def inner_inclusion(self) -> bool:
        """Each hole lies in its ellipse ``E_eta``."""
        return self.R5 >= self.hole_reach * (1 - 1e-12)

    @property
    def outer_inclusion(self) -> bool:
        """Each ``E_1`` lies in the ball of radius ``R2 eps / 2``."""
        return self.R5 <= self.outer_limit * (1 + 1e-12)

    @property
    def disjoint(self) -> bool:
        return self.R5 <= self.ball_limit * (1 + 1e-12)


def q_matrices(c: Coefficients | None, dom: PerforatedDomain, R5: float | None = None) -> EllipseFamily:
    """Matrices ``Q_k = A(y_k)^{-1/2}`` and the radius parameter ``R5``.

    Without an explicit ``R5`` the largest value keeping every ``E_1`` inside
    ``B(y_k, R2 eps / 2)`` is taken, shrunk by 1%.  For unit disks this is
    below 1, so ``E_eta`` does not cover the hole: ``inner_inclusion`` reports
    that, and ``W`` on the hole boundary is ``1 - ln(R5) / ln(eta)`` rather
    than exactly 1.
    """
    c = c or Coefficients.identity()
    mask = np.asarray(dom.dirichlet, dtype=bool)
    centers = dom.centers[mask]
    fam = dom.family
    if len(centers):
        A = c.matrix(centers)
        Q = _inverse_sqrt(A)
        smin = np.linalg.svd(Q, compute_uv=False).min(axis=1)
        reach = 0.0
        for j, k in enumerate(np.flatnonzero(mask)):
            poly = fam.reference_polygon(k, 256)
            reach = max(reach, float(np.linalg.norm(poly @ Q[j].T, axis=1).max()))
        outer = float(smin.min() * fam.R2 / 2)
        ball = float(smin.min() * fam.b * fam.R2)
    else:
        Q = np.zeros((0, 2, 2))
        reach, outer, ball = 0.0, math.inf, math.inf
    if R5 is None:
        R5 = SAFETY * outer if math.isfinite(outer) else SAFETY * MODEL_R2 / 2
    return EllipseFamily(centers, Q, float(R5), float(dom.eps), float(dom.eta), reach, outer, ball)


def evaluate_W(fam: EllipseFamily, x) -> np.ndarray:
    """Corrector values at points ``x`` (shape ``(n, 2)`` or ``(2,)``)."""
    if not fam.eta < 1:
        raise DomainError("the corrector needs eta < 1")
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros(len(pts))
    if fam._tree is None:
        return out if np.ndim(x) > 1 else out[0]
    k = min(4, len(fam.centers))
    _, idx = fam._tree.query(pts, k=k)
    idx = idx.reshape(len(pts), k)
    outer = fam.R5 * fam.eps
    log_eta = math.log(fam.eta)
    for j in range(k):
        zeta = pts - fam.centers[idx[:, j]]
        r = np.linalg.norm(np.einsum("nab,nb->na", fam.Q[idx[:, j]], zeta), axis=1)
        with np.errstate(divide="ignore"):
            w = np.where(r > 0, np.log(np.maximum(r, 1e-300) / outer) / log_eta, 1.0)
        w = np.where(r >= outer, 0.0, np.clip(w, 0.0, 1.0))
        out = np.maximum(out, w)
    return out if np.ndim(x) > 1 else out[0]


def corrected_field(u0, fam: EllipseFamily, target: Mesh) -> Field:
    """Node values ``(1 - W) u0`` on ``target``.

    ``u0`` may be a Field (on any mesh covering ``target``) or a callable of
    an ``(n, 2)`` point array.
    """
    if isinstance(u0, Field):
        base = u0.values if u0.mesh is target else interpolate(u0, target).values
    else:
        base = np.asarray(u0(target.nodes))
    W = evaluate_W(fam, target.nodes)
    return Field(target, (1.0 - W) * base)


def corrector_field(fam: EllipseFamily, mesh: Mesh) -> Field:
    return Field(mesh, evaluate_W(fam, mesh.nodes))
