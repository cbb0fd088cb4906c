"""P1 finite-element forms, resolvent solves, interpolation and norms."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .errors import (
    EllipticityError,
    MeshMismatchError,
    PointLocationError,
    ResidualError,
    SingularSystemError,
    TagError,
)
from .geometry import BetaFunction, CurveSpec
from .mesh import TAG_GAMMA, TAG_HOLE_D, TAG_HOLE_R, TAG_LATERAL, TAG_OUTER, Mesh

RESIDUAL_TOL = 1e-10

# mid-edge quadrature: barycentric coordinates of the three edge midpoints
_MID = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
_GAUSS2 = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass(frozen=True)
class Coefficients:
    """Real coefficients of the form.

    Each entry is a constant or a callable taking an ``(n, 2)`` array of
    points: ``A`` returns ``(n, 2, 2)`` symmetric matrices, ``Aj`` returns
    ``(n, 2)`` vectors, ``A0`` and ``a`` return ``(n,)`` scalars.
    """

    A: object = None
    Aj: object = None
    A0: object = 0.0
    a: object = 0.0
    name: str = "identity"

    @classmethod
    def identity(cls) -> "Coefficients":
        return cls()

    @property
    def is_laplacian(self) -> bool:
        return self.A is None and self.Aj is None and np.isscalar(self.A0) and self.A0 == 0

    @property
    def has_convection(self) -> bool:
        return self.Aj is not None

    def matrix(self, pts) -> np.ndarray:
        n = len(pts)
        if self.A is None:
            return np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
        A = self.A(pts) if callable(self.A) else np.broadcast_to(np.asarray(self.A, float), (n, 2, 2))
        A = np.asarray(A, dtype=float).reshape(n, 2, 2)
        if np.iscomplexobj(A):
            raise EllipticityError("coefficients must be real")
        if np.max(np.abs(A[:, 0, 1] - A[:, 1, 0]), initial=0.0) > 1e-14 * max(1.0, np.abs(A).max(initial=0.0)):
            raise EllipticityError("coefficient matrix is not symmetric")
        return A

    def vector(self, pts) -> np.ndarray | None:
        if self.Aj is None:
            return None
        n = len(pts)
        v = self.Aj(pts) if callable(self.Aj) else np.broadcast_to(np.asarray(self.Aj, float), (n, 2))
        return np.asarray(v, dtype=float).reshape(n, 2)

    @staticmethod
    def _scalar(value, pts) -> np.ndarray:
        n = len(pts)
        v = value(pts) if callable(value) else np.full(n, float(value))
        return np.asarray(v, dtype=float).reshape(n)

    def potential(self, pts) -> np.ndarray:
        return self._scalar(self.A0, pts)

    def robin(self, pts) -> np.ndarray:
        return self._scalar(self.a, pts)

    def ellipticity(self, pts) -> float:
        """Smallest eigenvalue of A over the given points; raises if not positive."""
        A = self.matrix(pts)
        c2 = float(np.linalg.eigvalsh(A).min()) if len(A) else 1.0
        if not c2 > 0:
            raise EllipticityError(f"smallest eigenvalue of A is {c2:.3g} (must be positive)")
        return c2

    def coefficient_id(self) -> str:
        return self.name


@dataclass(frozen=True, eq=False)
class Field:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or v.shape[0] != self.mesh.n_nodes:
            raise MeshMismatchError(f"field has {v.shape} values for {self.mesh.n_nodes} nodes")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, mesh: Mesh, fn: Callable) -> "Field":
        return cls(mesh, np.asarray(fn(mesh.nodes)))

    def to_csv(self, path):
        v = self.values.astype(complex)
        data = np.column_stack([np.arange(self.mesh.n_nodes), self.mesh.nodes, v.real, v.imag])
        np.savetxt(path, data, delimiter=",", header="node_id,x,y,re,im", comments="",
                   fmt=["%d", "%.17g", "%.17g", "%.17g", "%.17g"])


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    mesh: Mesh
    K: sp.csr_matrix
    M: sp.csr_matrix
    constrained: np.ndarray
    constrained_values: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.mesh.n_nodes, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)

    def form_value(self, u, v=None) -> complex:
        """Discrete form ``h(u, v) = v^H K u`` over all nodes, ignoring constraints."""
        u = np.asarray(u.values if isinstance(u, Field) else u)
        v = u if v is None else np.asarray(v.values if isinstance(v, Field) else v)
        return complex(np.vdot(v, self.K @ u))

    def export_coo(self, path):
        coo = self.K.tocoo()
        vals = coo.data.astype(complex)
        data = np.column_stack([coo.row, coo.col, vals.real, vals.imag])
        np.savetxt(path, data, delimiter=" ", header="row col re im", comments="",
                   fmt=["%d", "%d", "%.17g", "%.17g"])


# ---------------------------------------------------------------- element data

def _geometry(mesh: Mesh):
    if "p1" not in mesh._cache:
        p = mesh.nodes[mesh.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        area = 0.5 * det
        # gradients of the barycentric coordinates
        g = np.empty((len(p), 3, 2))
        g[:, 1, 0] = d2[:, 1] / det
        g[:, 1, 1] = -d2[:, 0] / det
        g[:, 2, 0] = -d1[:, 1] / det
        g[:, 2, 1] = d1[:, 0] / det
        g[:, 0] = -g[:, 1] - g[:, 2]
        mesh._cache["p1"] = (area, g)
    return mesh._cache["p1"]


def _composite_rule():
    """Degree-4 six-point rule applied on the four midpoint subtriangles (24 points)."""
    a, b = 0.445948490915965, 0.091576213509771
    w1, w2 = 0.223381589678011, 0.109951743655322
    base = np.array([[a, a, 1 - 2 * a], [a, 1 - 2 * a, a], [1 - 2 * a, a, a],
                     [b, b, 1 - 2 * b], [b, 1 - 2 * b, b], [1 - 2 * b, b, b]])
    wb = np.array([w1] * 3 + [w2] * 3)
    h = 0.5
    subs = [np.array([[1, 0, 0], [h, h, 0], [h, 0, h]]), np.array([[h, h, 0], [0, 1, 0], [0, h, h]]),
            np.array([[h, 0, h], [0, h, h], [0, 0, 1]]), np.array([[h, h, 0], [0, h, h], [h, 0, h]])]
    return np.concatenate([base @ s for s in subs]), np.concatenate([wb / 4] * 4)


_RULE_L, _RULE_W = _composite_rule()


def _rule_values(mesh: Mesh, fn: Callable):
    p = mesh.nodes[mesh.triangles]
    qp = np.einsum("qk,mkd->mqd", _RULE_L, p)
    return np.asarray(fn(qp.reshape(-1, 2))).reshape(mesh.n_triangles, len(_RULE_W))


def load_vector(mesh: Mesh, fn: Callable) -> np.ndarray:
    """Entries ``int f phi_i`` by a 24-point composite rule of degree 4 per triangle."""
    area, _ = _geometry(mesh)
    fv = _rule_values(mesh, fn)
    local = np.einsum("m,q,mq,qk->mk", area, _RULE_W, fv, _RULE_L)
    b = np.zeros(mesh.n_nodes, dtype=local.dtype)
    np.add.at(b, mesh.triangles.ravel(), local.ravel())
    return b


def l2_error(u: Field, fn: Callable) -> float:
    """L2 distance between the P1 field ``u`` and the function ``fn``, by the same composite rule."""
    mesh = u.mesh
    area, _ = _geometry(mesh)
    uh = np.einsum("qk,mk->mq", _RULE_L, u.values[mesh.triangles])
    diff = uh - _rule_values(mesh, fn)
    return float(np.sqrt(np.einsum("m,q,mq->", area, _RULE_W, np.abs(diff) ** 2)))


def _quad_points(mesh: Mesh):
    p = mesh.nodes[mesh.triangles]
    return np.einsum("qk,mkd->mqd", _MID, p)


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _edge_mass(mesh: Mesh, edges: np.ndarray, weight: Callable | None) -> sp.csr_matrix:
    """Matrix of the edge integral of ``w u v`` with 2-point Gauss quadrature."""
    n = mesh.n_nodes
    if len(edges) == 0:
        return sp.csr_matrix((n, n))
    a = mesh.nodes[edges[:, 0]]
    b = mesh.nodes[edges[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    local = np.zeros((len(edges), 2, 2))
    for t in _GAUSS2:
        pts = (1 - t) * a + t * b
        w = np.ones(len(edges)) if weight is None else weight(pts)
        phi = np.array([1 - t, t])
        local += 0.5 * (w * length)[:, None, None] * np.outer(phi, phi)[None]
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    if "M" not in mesh._cache:
        area, _ = _geometry(mesh)
        local = area[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None] / 12.0
        mesh._cache["M"] = _scatter(mesh, local)
    return mesh._cache["M"]


def stiffness_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Plain P1 Laplacian stiffness (A = identity)."""
    if "S" not in mesh._cache:
        area, g = _geometry(mesh)
        local = area[:, None, None] * np.einsum("mid,mjd->mij", g, g)
        mesh._cache["S"] = _scatter(mesh, local)
    return mesh._cache["S"]


def _interior_form(mesh: Mesh, c: Coefficients) -> sp.csr_matrix:
    if c.is_laplacian:
        return stiffness_matrix(mesh).copy()
    area, g = _geometry(mesh)
    qp = _quad_points(mesh)
    m = mesh.n_triangles
    flat = qp.reshape(-1, 2)
    A = c.matrix(flat).reshape(m, 3, 2, 2)
    c.ellipticity(flat)
    Abar = A.mean(axis=1)
    local = area[:, None, None] * np.einsum("mid,mde,mje->mij", g, Abar, g)
    v = c.vector(flat)
    if v is not None:
        v = v.reshape(m, 3, 2)
        # (A_j d_j u, v) + (u, A_j d_j v), exact for quadratic integrands
        adv = np.einsum("mqd,mjd->mqj", v, g)          # A . grad(phi_j) at each point
        w = area[:, None] / 3.0
        conv = np.einsum("mq,qi,mqj->mij", w, _MID, adv)
        local = local + conv + np.transpose(conv, (0, 2, 1))
    pot = c.potential(flat).reshape(m, 3)
    if np.any(pot != 0):
        w = area[:, None] / 3.0 * pot
        local = local + np.einsum("mq,qi,qj->mij", w, _MID, _MID)
    return _scatter(mesh, local)


def _constraints(mesh: Mesh, tags) -> np.ndarray:
    return mesh.nodes_on(tags).astype(np.int64)


def assemble_perturbed(mesh: Mesh, c: Coefficients | None = None) -> AssembledSystem:
    """Form of the perforated problem: Dirichlet on tags 1, 3, 5 and Robin term on tag 4."""
    c = c or Coefficients.identity()
    known = {TAG_OUTER, TAG_GAMMA, TAG_HOLE_D, TAG_HOLE_R, TAG_LATERAL}
    bad = set(np.unique(mesh.bedge_tags).tolist()) - known
    if bad:
        raise TagError(f"unknown edge tags {sorted(bad)}")
    K = _interior_form(mesh, c)
    robin_edges = mesh.edges_of(TAG_HOLE_R)
    if len(robin_edges):
        K = K + _edge_mass(mesh, robin_edges, c.robin)
    con = _constraints(mesh, [TAG_OUTER, TAG_HOLE_D, TAG_LATERAL])
    meta = {"mesh_id": mesh.mesh_id(), "coefficient_id": c.coefficient_id(), "bc": "perturbed"}
    return AssembledSystem(mesh, K.tocsr(), mass_matrix(mesh), con, np.zeros(len(con)), meta)


def assemble_homogenized(mesh: Mesh, c: Coefficients | None = None, bc="none", beta: BetaFunction | None = None,
                         curve: CurveSpec | None = None) -> AssembledSystem:
    """Homogenized form with ``bc`` one of ``"dirichlet"``, ``"delta"``, ``"none"``.

    For ``"delta"`` the line integral of ``beta u v`` along the tag-2 edges is
    added; ``beta`` is evaluated at the arclength of each quadrature point on
    ``curve`` (the straight line ``x2 = pi/2`` by default).
    """
    c = c or Coefficients.identity()
    bc = {"dirichlet-on-gamma": "dirichlet", "dirichlet-on-γ": "dirichlet"}.get(bc, bc)
    if bc not in ("dirichlet", "delta", "none"):
        raise ValueError(f"unknown homogenized boundary condition {bc!r}")
    gamma = mesh.edges_of(TAG_GAMMA)
    if bc != "none" and len(gamma) == 0:
        raise TagError("mesh has no curve edges (tag 2)")
    K = _interior_form(mesh, c)
    tags = [TAG_OUTER, TAG_LATERAL]
    if bc == "dirichlet":
        tags.append(TAG_GAMMA)
    elif bc == "delta":
        if beta is None:
            raise ValueError("delta condition requires beta")
        curve = curve or CurveSpec.line()

        def weight(pts):
            return np.asarray(beta(curve.arclength(pts)), dtype=float)

        K = K + _edge_mass(mesh, gamma, weight)
    con = _constraints(mesh, tags)
    meta = {"mesh_id": mesh.mesh_id(), "coefficient_id": c.coefficient_id(), "bc": bc}
    return AssembledSystem(mesh, K.tocsr(), mass_matrix(mesh), con, np.zeros(len(con)), meta)


def solve_resolvent(system: AssembledSystem, f, shift: complex = 1j) -> Field:
    """Solve ``(K - shift M) u = b`` on the free nodes with constrained values imposed.

    For a Field (or nodal array) ``f`` the load is ``b = M f``; for a callable
    ``f`` it is the quadrature load of :func:`load_vector`.
    """
    mesh = system.mesh
    if callable(f):
        rhs = load_vector(mesh, f)
    else:
        fv = np.asarray(f.values if isinstance(f, Field) else f)
        if isinstance(f, Field) and f.mesh is not mesh and f.mesh.mesh_id() != mesh.mesh_id():
            raise MeshMismatchError("right-hand side lives on a different mesh")
        if fv.shape != (mesh.n_nodes,):
            raise MeshMismatchError("right-hand side length does not match the mesh")
        rhs = system.M @ fv
    dtype = complex if (np.iscomplexobj(rhs) or np.iscomplex(shift) or np.iscomplexobj(system.K.data)) else float
    L = (system.K - shift * system.M).astype(dtype).tocsr()
    rhs = rhs.astype(dtype)
    u = np.zeros(mesh.n_nodes, dtype=dtype)
    u[system.constrained] = system.constrained_values
    free = system.free
    b = rhs[free] - L[free][:, system.constrained] @ u[system.constrained]
    Lff = L[free][:, free].tocsc()
    if np.linalg.norm(b) == 0:
        return Field(mesh, u)
    try:
        lu = spla.splu(Lff)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("factorization produced non-finite values")
    # a couple of refinement sweeps keep the residual well inside the contract
    ref = np.linalg.norm(b)
    for _ in range(3):
        r = b - Lff @ x
        if np.linalg.norm(r) <= 1e-2 * RESIDUAL_TOL * ref:
            break
        x = x + lu.solve(r)
    res = np.linalg.norm(b - Lff @ x)
    if res > RESIDUAL_TOL * max(np.linalg.norm(rhs[free]), ref):
        raise ResidualError(f"relative residual {res / ref:.3e} exceeds {RESIDUAL_TOL:g}")
    u[free] = x
    return Field(mesh, u)


# ---------------------------------------------------------------- interpolation

def _locator(mesh: Mesh):
    if "locator" not in mesh._cache:
        p = mesh.nodes[mesh.triangles]
        cen = p.mean(axis=1)
        radius = np.linalg.norm(p - cen[:, None], axis=2).max(axis=1)
        mesh._cache["locator"] = (cKDTree(cen), float(radius.max()))
    return mesh._cache["locator"]


def _barycentric(mesh: Mesh, tri_idx, pts):
    p = mesh.nodes[mesh.triangles[tri_idx]]
    v0 = p[..., 1, :] - p[..., 0, :]
    v1 = p[..., 2, :] - p[..., 0, :]
    w = pts - p[..., 0, :]
    det = v0[..., 0] * v1[..., 1] - v0[..., 1] * v1[..., 0]
    l1 = (w[..., 0] * v1[..., 1] - w[..., 1] * v1[..., 0]) / det
    l2 = (v0[..., 0] * w[..., 1] - v0[..., 1] * w[..., 0]) / det
    return np.stack([1 - l1 - l2, l1, l2], axis=-1)


def locate(mesh: Mesh, points, tol: float = 1e-10):
    """Containing triangle and barycentric coordinates for each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tree, rmax = _locator(mesh)
    tri = -np.ones(len(pts), dtype=np.int64)
    lam = np.zeros((len(pts), 3))
    todo = np.arange(len(pts))
    for k in (8, 32, 128):
        if len(todo) == 0:
            break
        k_eff = min(k, mesh.n_triangles)
        _, cand = tree.query(pts[todo], k=k_eff)
        cand = cand.reshape(len(todo), k_eff)
        bc = _barycentric(mesh, cand, pts[todo][:, None, :])
        ok = bc.min(axis=2) >= -tol
        hit = ok.any(axis=1)
        first = ok.argmax(axis=1)
        rows = np.flatnonzero(hit)
        tri[todo[rows]] = cand[rows, first[rows]]
        lam[todo[rows]] = bc[rows, first[rows]]
        todo = todo[~hit]
    for i in todo:
        cand = np.array(tree.query_ball_point(pts[i], rmax * (1 + 1e-9)), dtype=np.int64)
        if len(cand):
            bc = _barycentric(mesh, cand, pts[i][None, :])
            score = bc.min(axis=1)
            j = int(np.argmax(score))
            if score[j] >= -tol:
                tri[i] = cand[j]
                lam[i] = bc[j]
                continue
        raise PointLocationError(f"point {pts[i].tolist()} lies outside the source mesh", index=int(i))
    return tri, lam


def evaluate(u: Field, points) -> np.ndarray:
    tri, lam = locate(u.mesh, points)
    return np.einsum("nk,nk->n", lam, u.values[u.mesh.triangles[tri]])


def interpolate(u: Field, target: Mesh) -> Field:
    if target is u.mesh:
        return Field(target, u.values.copy())
    return Field(target, evaluate(u, target.nodes))


def difference_norm(u: Field, v: Field | None = None, kind: str = "L2") -> float:
    """L2 or H1 norm of ``u - v`` (``v`` may be omitted for the norm of ``u``)."""
    mesh = u.mesh
    if v is not None and v.mesh is not mesh and v.mesh.mesh_id() != mesh.mesh_id():
        raise MeshMismatchError("fields live on different meshes")
    e = u.values if v is None else u.values - v.values
    kind = kind.upper()
    val = np.vdot(e, mass_matrix(mesh) @ e).real
    if kind == "H1":
        val += np.vdot(e, stiffness_matrix(mesh) @ e).real
    elif kind == "H1SEMI":
        val = np.vdot(e, stiffness_matrix(mesh) @ e).real
    elif kind != "L2":
        raise ValueError(f"unknown norm {kind!r}")
    return float(np.sqrt(max(val, 0.0)))


def discretize(mesh: Mesh, fn: Callable) -> Field:
    return Field.from_function(mesh, fn)


def system_digest(system: AssembledSystem) -> str:
    h = hashlib.sha1()
    K = system.K.tocsr()
    for arr in (K.indptr, K.indices, K.data, system.constrained):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]
