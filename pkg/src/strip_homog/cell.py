"""Periodic cell problems around one hole and the reference hole-flux problem."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import Field, evaluate, mass_matrix, stiffness_matrix
from .errors import CellQualityError, CompatibilityError, DomainError, MeshError, SingularityError
from .mesh import TAG_HOLE_D, TAG_HOLE_R, TAG_LATERAL, TAG_OUTER, Mesh, _finalize, _run_triangle

PERIOD = 3.0
HALF_PERIOD = 1.5
KINDS = ("D", "R", "N")


# ---------------------------------------------------------------- closed form

def z0(xi) -> np.ndarray | float:
    """``(3/pi) Re ln(2 sin(pi (xi1 + i xi2) / 3))``, evaluated without overflow."""
    p = np.atleast_2d(np.asarray(xi, dtype=float))
    # reduce mod the period so lattice points hit sin(0) = 0 exactly
    t = p[:, 0] / 3
    x = math.pi * (t - np.round(t))
    y = np.abs(math.pi * p[:, 1] / 3)
    # 4 (sin^2 x + sinh^2 y) = e^{2y} (4 sin^2 x e^{-2y} + (1 - e^{-2y})^2)
    e = np.exp(-2 * y)
    inner = 4 * np.sin(x) ** 2 * e + (-np.expm1(-2 * y)) ** 2
    if np.any(inner <= 0):
        raise SingularityError("Z0 is singular at the lattice points (3k, 0)")
    val = 3 / (2 * math.pi) * (2 * y + np.log(inner))
    return val if np.ndim(xi) > 1 else float(val[0])


def dirichlet_constant(eta: float) -> float:
    return -3 / math.pi * math.log(2 * math.pi * eta / 3)


def neumann_constant(eta: float) -> float:
    return eta ** 2 / (1 - math.pi ** 2 * eta ** 2 / 28)


# ---------------------------------------------------------------- cell mesh

def _graded_points(a, b, size_fn):
    """Points from ``a`` to ``b`` spaced by the size field, both ends included."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    length = float(np.linalg.norm(b - a))
    ts = [0.0]
    while True:
        step = float(size_fn((a + ts[-1] * (b - a))[None, :])[0]) / length
        if ts[-1] + step >= 1 - 1e-12:
            # avoid a sliver-short last interval
            if len(ts) > 1 and 1 - ts[-1] < 0.5 * step:
                ts.pop()
            break
        ts.append(ts[-1] + step)
    ts = np.array(ts + [1.0])
    return a + ts[:, None] * (b - a)


def periodic_cell_mesh(eta: float, H: float, h: float, *, hole: bool = True, nseg: int | None = None,
                       grading: float = 0.1, min_angle: float = 28.0) -> Mesh:
    """Mesh of ``{|xi1| < 3/2, |xi2| < H}`` minus the disk of radius ``eta``.

    A quarter is triangulated and reflected across both axes, so the mesh is
    symmetric in each coordinate and the lateral sides carry matching nodes.
    Tags: 1 top/bottom, 5 lateral sides, 3 hole.
    """
    if not 0 < eta < HALF_PERIOD:
        raise DomainError("hole radius must lie in (0, 3/2)")
    n_full = nseg or max(128, int(math.ceil(2 * math.pi * eta / h)))
    n_full += (-n_full) % 4
    h_hole = 2 * math.pi * eta / n_full

    def size_fn(pts):
        r = np.linalg.norm(pts, axis=1)
        return np.minimum(h, h_hole + grading * np.maximum(r - eta, 0.0))

    nq = n_full // 4
    th = np.linspace(0, math.pi / 2, nq + 1)
    arc = np.stack([eta * np.cos(th), eta * np.sin(th)], axis=1)
    chain = [arc]
    chain.append(_graded_points((0, eta), (0, H), size_fn)[1:])
    chain.append(_graded_points((0, H), (HALF_PERIOD, H), size_fn)[1:])
    chain.append(_graded_points((HALF_PERIOD, H), (HALF_PERIOD, 0), size_fn)[1:])
    chain.append(_graded_points((HALF_PERIOD, 0), (eta, 0), size_fn)[1:-1])
    verts = np.concatenate(chain)
    n = len(verts)
    segs = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    pslg = {"vertices": verts, "segments": segs}
    out = _run_triangle(pslg, min_angle, math.sqrt(3) / 4 * h * h, size_fn, extra="Y")
    qv = out["vertices"]
    qt = out["triangles"].astype(np.int64)

    nodes, tris = [], []
    offset = 0
    for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
        nodes.append(qv * [sx, sy])
        t = qt + offset
        tris.append(t if sx * sy > 0 else t[:, [0, 2, 1]])
        offset += len(qv)
    nodes = np.concatenate(nodes)
    tris = np.concatenate(tris)
    key = np.round(nodes, 12) + 0.0
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    nodes = nodes[first]
    tris = inverse.ravel()[tris]

    e = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    bd = uniq[counts == 1]
    mid = nodes[bd].mean(axis=1)
    tags = np.full(len(bd), TAG_HOLE_D if hole else TAG_HOLE_R)
    tags[np.abs(np.abs(mid[:, 1]) - H) < 1e-9] = TAG_OUTER
    tags[np.abs(np.abs(mid[:, 0]) - HALF_PERIOD) < 1e-9] = TAG_LATERAL
    return _finalize(nodes, tris, bd, tags)


def periodic_pairs(mesh: Mesh) -> np.ndarray:
    """Index pairs ``(right, left)`` of matching nodes on the lateral sides."""
    x = mesh.nodes
    right = np.flatnonzero(np.abs(x[:, 0] - HALF_PERIOD) < 1e-12)
    left = np.flatnonzero(np.abs(x[:, 0] + HALF_PERIOD) < 1e-12)
    order_r = right[np.argsort(x[right, 1])]
    order_l = left[np.argsort(x[left, 1])]
    if len(order_r) != len(order_l) or np.max(np.abs(x[order_r, 1] - x[order_l, 1]), initial=0) > 1e-12:
        raise MeshError("lateral nodes of the cell do not match")
    return np.stack([order_r, order_l], axis=1)


def _edge_load(mesh: Mesh, edges, value) -> np.ndarray:
    b = np.zeros(mesh.n_nodes)
    if len(edges):
        length = mesh.edge_lengths(edges)
        np.add.at(b, edges[:, 0], 0.5 * value * length)
        np.add.at(b, edges[:, 1], 0.5 * value * length)
    return b


# ---------------------------------------------------------------- cell problems

@dataclass(frozen=True, eq=False)
class CellSolution:
    kind: str
    eta: float
    H: float
    mesh: Mesh
    Z: Field
    pairs: np.ndarray
    c_plus: float = float("nan")
    c_minus: float = float("nan")
    std_plus: float = float("nan")
    std_minus: float = float("nan")

    @property
    def slopes(self) -> tuple[float, float]:
        """Far-field slopes in xi2 above and below the hole."""
        return (1.0, 1.0) if self.kind == "N" else (1.0, -1.0)


def solve_cell_problem(eta: float, kind: str, H: float = 4.0, h: float = 0.05, *, hole_flux: float | None = None,
                       check_quality: bool = True, **mesh_kw) -> CellSolution:
    """Harmonic periodic cell function with linear far field.

    ``kind`` is ``"D"`` (zero on the hole), ``"R"`` (normal derivative
    ``3/(pi eta)`` on the hole, directed away from it) or ``"N"`` (zero flux).
    The far field enters as ``dZ/dxi2 = +1`` at the top and ``-1`` at the
    bottom (``+1`` at both ends for ``"N"``).  For ``"R"`` and ``"N"`` the
    additive constant is fixed by a zero cell mean.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if not 0 < eta < 0.5:
        raise DomainError("cell problems need 0 < eta < 1/2")
    if H < 4:
        raise DomainError("cell half-height H must be at least 4")
    mesh = periodic_cell_mesh(eta, H, h, **mesh_kw)
    n = mesh.n_nodes
    pairs = periodic_pairs(mesh)

    rep = np.arange(n)
    rep[pairs[:, 0]] = pairs[:, 1]
    uniq, col = np.unique(rep, return_inverse=True)
    P = sp.csr_matrix((np.ones(n), (np.arange(n), col.ravel())), shape=(n, len(uniq)))

    S = stiffness_matrix(mesh)
    top = mesh.edges_of(TAG_OUTER)
    ymid = mesh.nodes[top].mean(axis=1)[:, 1]
    upper, lower = top[ymid > 0], top[ymid < 0]
    # outward normal derivative data: +1 at the top; at the bottom -dZ/dxi2
    lower_flux = -1.0 if kind == "N" else 1.0
    b = _edge_load(mesh, upper, 1.0) + _edge_load(mesh, lower, lower_flux)
    hole_edges = mesh.edges_of((TAG_HOLE_D, TAG_HOLE_R))

    if kind == "R":
        flux = 3 / (math.pi * eta) if hole_flux is None else float(hole_flux)
        imposed = flux * 2 * math.pi * eta
        expected = PERIOD * (1.0 + lower_flux)
        if abs(imposed - expected) > 1e-8 * expected:
            raise CompatibilityError(f"hole flux {imposed:.6g} does not balance the far-field flux {expected:.6g}")
        # rescale to the polygon perimeter so the discrete fluxes balance exactly
        perim = float(mesh.edge_lengths(hole_edges).sum())
        b += _edge_load(mesh, hole_edges, -expected / perim)
    elif kind == "N" and hole_flux not in (None, 0.0):
        raise CompatibilityError("the N problem carries zero flux on the hole")

    Kr = (P.T @ S @ P).tocsr()
    br = P.T @ b
    if kind == "D":
        hole_nodes = np.unique(col.ravel()[mesh.nodes_on(TAG_HOLE_D)])
        free = np.setdiff1d(np.arange(len(uniq)), hole_nodes)
        zr = np.zeros(len(uniq))
        zr[free] = spla.spsolve(Kr[free][:, free].tocsc(), br[free])
    else:
        if abs(br.sum()) > 1e-10 * np.abs(br).sum():
            raise CompatibilityError(f"net boundary flux {br.sum():.3e} is not zero")
        m = P.T @ (mass_matrix(mesh) @ np.ones(n))
        big = sp.bmat([[Kr, sp.csr_matrix(m[:, None])], [sp.csr_matrix(m[None, :]), None]], format="csc")
        sol = spla.spsolve(big, np.append(br, 0.0))
        zr = sol[:-1]
    Z = Field(mesh, P @ zr)
    sol = CellSolution(kind, eta, H, mesh, Z, pairs)
    cp, cm, sd_p, sd_m = _constants(sol)
    sol = CellSolution(kind, eta, H, mesh, Z, pairs, cp, cm, sd_p, sd_m)
    if check_quality:
        extract_cell_constant(sol)
    return sol


def _band_samples(H, sign, n1=31, n2=11):
    x1 = np.linspace(-HALF_PERIOD, HALF_PERIOD, n1 + 1)[:-1] + HALF_PERIOD / n1
    x2 = sign * np.linspace(0.8 * H, 0.9 * H, n2)
    X1, X2 = np.meshgrid(x1, x2)
    return np.stack([X1.ravel(), X2.ravel()], axis=1)


def _constants(sol: CellSolution):
    out = []
    for sign, slope in zip((1.0, -1.0), sol.slopes):
        pts = _band_samples(sol.H, sign)
        vals = evaluate(sol.Z, pts).real - slope * pts[:, 1]
        out.append((float(vals.mean()), float(vals.std())))
    return out[0][0], out[1][0], out[0][1], out[1][1]


def extract_cell_constant(sol: CellSolution) -> tuple[float, float]:
    """Far-field constants ``(c+, c-)`` sampled over ``0.8H < |xi2| < 0.9H``.

    Raises :class:`CellQualityError` when the spread of the samples exceeds
    1% of ``|c| + 1``, which signals that ``H`` is too small.
    """
    cp, cm, sp_, sm = _constants(sol)
    for c, s, side in ((cp, sp_, "+"), (cm, sm, "-")):
        if s > 0.01 * (abs(c) + 1):
            raise CellQualityError(f"c{side} = {c:.6g} has sample spread {s:.3g}; increase H")
    return cp, cm


def decomposition_residual(sol: CellSolution) -> float:
    """H1 norm over the cell of ``Z - Z0 - c_D`` for a ``"D"`` solution."""
    if sol.kind != "D":
        raise ValueError("the decomposition check applies to the D problem")
    diff = sol.Z.values - z0(sol.mesh.nodes) - dirichlet_constant(sol.eta)
    S = stiffness_matrix(sol.mesh)
    M = mass_matrix(sol.mesh)
    return float(np.sqrt(diff @ (S @ diff) + diff @ (M @ diff)))


# ---------------------------------------------------------------- hole flux problem

@dataclass(frozen=True, eq=False)
class HoleFluxSolution:
    mesh: Mesh
    V: Field
    X: np.ndarray          # recovered gradient at the nodes, (n, 2)
    outer_radius: float
    linf_bound: float

    def field_at(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([evaluate(Field(self.mesh, self.X[:, j]), pts) for j in range(2)], axis=1)

    def flux_through_circle(self, r: float, n: int = 720) -> float:
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        normal = np.stack([np.cos(th), np.sin(th)], axis=1)
        X = self.field_at(r * normal)
        return float(np.sum(X * normal) * 2 * np.pi * r / n)


def _recover_gradient(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Nodal gradients from quadratic least-squares fits over two-ring patches."""
    n = mesh.n_nodes
    e = np.concatenate([mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]])
    adj = sp.csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    adj = ((adj + adj.T) > 0).astype(float)
    ring2 = ((adj @ adj + adj) > 0).tocsr()
    grads = np.zeros((n, 2))
    x = mesh.nodes
    for i in range(n):
        nb = ring2.indices[ring2.indptr[i]:ring2.indptr[i + 1]]
        d = x[nb] - x[i]
        scale = np.abs(d).max()
        d = d / scale
        A = np.column_stack([np.ones(len(nb)), d[:, 0], d[:, 1], d[:, 0] ** 2, d[:, 0] * d[:, 1], d[:, 1] ** 2])
        coef, *_ = np.linalg.lstsq(A, values[nb], rcond=None)
        grads[i] = coef[1:3] / scale
    return grads


def solve_hole_flux_problem(shape="circle", phi=None, h: float = 0.02, *, outer_radius: float = 1.375,
                            perimeter: float | None = None, grading: float = 0.25) -> HoleFluxSolution:
    """Neumann potential ``V`` around a reference hole; returns ``X = grad V``.

    ``shape`` is ``"circle"`` (unit disk) or a counter-clockwise polygon in
    reference coordinates.  ``V`` is harmonic in the annulus up to
    ``outer_radius`` with outward normal derivative ``-1`` on the hole and
    ``phi`` on the outer circle (a constant or a callable of the polar angle).
    The data must satisfy ``integral of phi = hole perimeter`` to 1e-8.
    """
    if isinstance(shape, str):
        if shape != "circle":
            raise ValueError("shape must be 'circle' or a polygon")
        nh = max(32, int(math.ceil(2 * math.pi / h)))
        th = 2 * np.pi * np.arange(nh) / nh
        poly = np.stack([np.cos(th), np.sin(th)], axis=1)
        exact_perimeter = 2 * math.pi if perimeter is None else perimeter
        hole_r = 1.0
    else:
        poly = np.asarray(shape, dtype=float)
        closed = np.roll(poly, -1, axis=0) - poly
        exact_perimeter = float(np.linalg.norm(closed, axis=1).sum()) if perimeter is None else perimeter
        hole_r = float(np.linalg.norm(poly, axis=1).max())
    if hole_r >= outer_radius:
        raise DomainError("hole does not fit inside the outer circle")
    if phi is None:
        phi = exact_perimeter / (2 * math.pi * outer_radius)
    phi_fn = (lambda t: np.full_like(t, float(phi))) if np.isscalar(phi) else phi
    tq = 2 * np.pi * np.arange(4096) / 4096
    total = float(np.mean(phi_fn(tq)) * 2 * math.pi * outer_radius)
    if abs(total - exact_perimeter) > 1e-8 * exact_perimeter:
        raise CompatibilityError(f"outer flux {total:.10g} differs from the hole perimeter {exact_perimeter:.10g}")

    no = max(64, int(math.ceil(2 * math.pi * outer_radius / h)))
    tho = 2 * np.pi * np.arange(no) / no
    outer = outer_radius * np.stack([np.cos(tho), np.sin(tho)], axis=1)
    verts = np.concatenate([outer, poly])
    so = np.stack([np.arange(no), (np.arange(no) + 1) % no], axis=1)
    m = len(poly)
    sh = no + np.stack([np.arange(m), (np.arange(m) + 1) % m], axis=1)
    from shapely.geometry import Polygon

    anchor = Polygon(poly).representative_point()
    pslg = {"vertices": verts, "segments": np.concatenate([so, sh]),
            "segment_markers": np.concatenate([np.full(no, TAG_OUTER), np.full(m, TAG_HOLE_R)])[:, None],
            "holes": np.array([[anchor.x, anchor.y]])}
    h_hole = min(h, exact_perimeter / m)

    def size_fn(pts):
        r = np.linalg.norm(pts, axis=1)
        return np.minimum(h, h_hole + grading * np.maximum(r - hole_r, 0.0))

    out = _run_triangle(pslg, 28.0, math.sqrt(3) / 4 * h * h, size_fn)
    mesh = _finalize(out["vertices"], out["triangles"].astype(np.int64), out["segments"].astype(np.int64),
                     out["segment_markers"].ravel().astype(np.int64))

    n = mesh.n_nodes
    b = np.zeros(n)
    oe = mesh.edges_of(TAG_OUTER)
    a, c = mesh.nodes[oe[:, 0]], mesh.nodes[oe[:, 1]]
    length = np.linalg.norm(c - a, axis=1)
    for t in (0.5 - 0.5 / math.sqrt(3), 0.5 + 0.5 / math.sqrt(3)):
        p = (1 - t) * a + t * c
        val = phi_fn(np.arctan2(p[:, 1], p[:, 0]))
        np.add.at(b, oe[:, 0], 0.5 * length * val * (1 - t))
        np.add.at(b, oe[:, 1], 0.5 * length * val * t)
    he = mesh.edges_of(TAG_HOLE_R)
    # the polygons are shorter than the curves they inscribe; rescale the hole
    # data so the discrete fluxes balance exactly
    b += _edge_load(mesh, he, -b.sum() / float(mesh.edge_lengths(he).sum()))
    S = stiffness_matrix(mesh)
    mvec = mass_matrix(mesh) @ np.ones(n)
    big = sp.bmat([[S, sp.csr_matrix(mvec[:, None])], [sp.csr_matrix(mvec[None, :]), None]], format="csc")
    V = spla.spsolve(big, np.append(b, 0.0))[:-1]
    X = _recover_gradient(mesh, V)
    return HoleFluxSolution(mesh, Field(mesh, V), X, outer_radius, float(np.linalg.norm(X, axis=1).max()))
