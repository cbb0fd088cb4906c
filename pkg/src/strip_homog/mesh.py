"""Conforming triangular meshes of the truncated strip, with or without holes.

Boundary edge tags: 1 outer boundary, 2 curve (interior interface),
3 Dirichlet hole, 4 Robin hole, 5 lateral cut.  Node tags use the same codes
with 0 for interior nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import triangle

from .errors import (
    GeometryError,
    InfeasibleResolutionError,
    MeshInvariantError,
    MeshParseError,
    MeshQualityError,
)
from .geometry import CurveSpec, PerforatedDomain, StripGeometry

TAG_INTERIOR = 0
TAG_OUTER = 1
TAG_GAMMA = 2
TAG_HOLE_D = 3
TAG_HOLE_R = 4
TAG_LATERAL = 5
BOUNDARY_TAGS = (TAG_OUTER, TAG_HOLE_D, TAG_HOLE_R, TAG_LATERAL)
# when a node sits on several tagged edges the first listed tag wins
_NODE_TAG_PRIORITY = (TAG_LATERAL, TAG_OUTER, TAG_HOLE_D, TAG_HOLE_R, TAG_GAMMA)

HEADER = "strip-homog-mesh v1"
MIN_ANGLE_FLOOR = 20.0


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray        # (N, 2) float
    triangles: np.ndarray    # (M, 3) int, counter-clockwise
    bedges: np.ndarray       # (B, 2) int
    bedge_tags: np.ndarray   # (B,) int
    node_tags: np.ndarray    # (N,) int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.ascontiguousarray(self.nodes, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "bedges", np.ascontiguousarray(self.bedges, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "bedge_tags", np.ascontiguousarray(self.bedge_tags, dtype=np.int64).ravel())
        object.__setattr__(self, "node_tags", np.ascontiguousarray(self.node_tags, dtype=np.int64).ravel())

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def area(self) -> float:
        return float(np.sum(self.signed_areas()))

    def edges_of(self, tags) -> np.ndarray:
        tags = np.atleast_1d(tags)
        return self.bedges[np.isin(self.bedge_tags, tags)]

    def nodes_on(self, tags) -> np.ndarray:
        return np.unique(self.edges_of(tags).ravel())

    def edge_lengths(self, edges=None) -> np.ndarray:
        e = self.bedges if edges is None else edges
        return np.linalg.norm(self.nodes[e[:, 1]] - self.nodes[e[:, 0]], axis=1)

    def unique_edges(self):
        """All edges as sorted node pairs, with the number of triangles sharing each."""
        if "edges" not in self._cache:
            t = self.triangles
            e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            e.sort(axis=1)
            uniq, counts = np.unique(e, axis=0, return_counts=True)
            self._cache["edges"] = (uniq, counts)
        return self._cache["edges"]

    def mesh_id(self) -> str:
        if "id" not in self._cache:
            import hashlib

            h = hashlib.sha1()
            for arr in (self.nodes, self.triangles, self.bedges, self.bedge_tags):
                h.update(np.ascontiguousarray(arr).tobytes())
            self._cache["id"] = h.hexdigest()[:16]
        return self._cache["id"]

    def validate(self):
        """Raise :class:`MeshInvariantError` on a broken structural invariant."""
        n = self.n_nodes
        for name, arr in (("triangles", self.triangles), ("bedges", self.bedges)):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise MeshInvariantError(f"{name} reference a node index outside [0, {n})")
        if self.node_tags.shape != (n,):
            raise MeshInvariantError("node tag count does not match node count")
        areas = self.signed_areas()
        if np.any(areas <= 0):
            i = int(np.argmin(areas))
            raise MeshInvariantError(f"triangle {i} has non-positive signed area {areas[i]:.3g}")
        uniq, counts = self.unique_edges()
        if np.any(counts > 2):
            raise MeshInvariantError("edge shared by more than two triangles")
        boundary = {tuple(e) for e in uniq[counts == 1]}
        interior = {tuple(e) for e in uniq[counts == 2]}
        tagged = {}
        for (a, b), tag in zip(np.sort(self.bedges, axis=1), self.bedge_tags):
            tagged[(int(a), int(b))] = int(tag)
        for e in boundary:
            tag = tagged.get(e)
            if tag not in BOUNDARY_TAGS:
                raise MeshInvariantError(f"boundary edge {e} lacks a boundary tag")
        for e, tag in tagged.items():
            if tag == TAG_GAMMA:
                if e not in interior:
                    raise MeshInvariantError(f"curve edge {e} is not an interior edge")
            elif tag in BOUNDARY_TAGS:
                if e not in boundary:
                    raise MeshInvariantError(f"edge {e} tagged {tag} is not on the boundary")
            else:
                raise MeshInvariantError(f"unknown edge tag {tag}")
        bd = self.edges_of(BOUNDARY_TAGS)
        if bd.size:
            deg = np.bincount(bd.ravel(), minlength=n)
            if np.any(deg % 2):
                raise MeshInvariantError("boundary edges do not form closed loops")

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (np.array_equal(self.nodes, other.nodes) and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.bedges, other.bedges) and np.array_equal(self.bedge_tags, other.bedge_tags)
                and np.array_equal(self.node_tags, other.node_tags))

    __hash__ = object.__hash__


def _node_tags_from_edges(n, bedges, tags):
    node_tags = np.zeros(n, dtype=np.int64)
    for tag in reversed(_NODE_TAG_PRIORITY):
        node_tags[np.unique(bedges[tags == tag].ravel())] = tag
    return node_tags


def _finalize(vertices, tris, segs, seg_tags) -> Mesh:
    """Drop unreferenced vertices, orient counter-clockwise, derive node tags."""
    used = np.zeros(len(vertices), dtype=bool)
    used[tris.ravel()] = True
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(int(used.sum()))
    nodes = vertices[used]
    tris = remap[tris]
    segs = remap[segs]
    if np.any(segs < 0):
        raise MeshInvariantError("segment endpoint not part of any triangle")
    p = nodes[tris]
    area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    order = np.lexsort((segs[:, 1], segs[:, 0], seg_tags))
    segs, seg_tags = segs[order], seg_tags[order]
    return Mesh(nodes, tris, segs, seg_tags, _node_tags_from_edges(len(nodes), segs, seg_tags))


def _run_triangle(pslg, min_angle, max_area, size_fn=None, max_passes=40, extra=""):
    opts = f"pq{min_angle:g}a{max_area:.17g}Q{extra}"
    out = triangle.triangulate(pslg, opts)
    if size_fn is None:
        return out
    for _ in range(max_passes):
        pts = out["vertices"]
        tri = out["triangles"]
        cen = pts[tri].mean(axis=1)
        p = pts[tri]
        area = 0.5 * np.abs((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
        target = math.sqrt(3) / 4 * np.asarray(size_fn(cen), dtype=float) ** 2
        too_big = area > target
        if not np.any(too_big):
            break
        out = dict(out)
        out["triangle_max_area"] = np.where(too_big, target, -1.0)
        out = triangle.triangulate(out, f"rpq{min_angle:g}a{max_area:.17g}aQ{extra}")
    return out


def hole_segment_count(dom: PerforatedDomain, h: float) -> int:
    n = max(16, int(math.ceil(2 * math.pi * dom.scale * dom.family.R2 / h)))
    return n + (n % 2)


def _check_resolution(dom: PerforatedDomain, h: float):
    if dom.n_holes:
        hmax = dom.scale * dom.family.R2 / 4
        if h > hmax * (1 + 1e-9):
            raise InfeasibleResolutionError(f"h = {h:.4g} exceeds eps*eta*R2/4 = {hmax:.4g}")


def _perforated_pslg(dom: PerforatedDomain, h, h_far, grading, with_gamma, nseg, fill):
    strip = dom.strip
    X, d = strip.half_length, strip.width
    if with_gamma and dom.curve.kind != "line":
        raise GeometryError("with_gamma is only supported for the straight curve")
    nh = nseg if nseg is not None else (hole_segment_count(dom, h) if dom.n_holes else 0)
    if with_gamma and nh % 2:
        nh += 1

    verts, segs, tags, seeds = [], [], [], []

    def add_chain(points, tag, closed=False):
        base = len(verts)
        verts.extend(points)
        m = len(points)
        for i in range(m - 1 + int(closed)):
            segs.append((base + i, base + (i + 1) % m))
            tags.append(tag)
        return base

    y0 = dom.curve.height if with_gamma else None
    # bottom, right lateral, top, left lateral
    add_chain([(-X, 0.0), (X, 0.0)], TAG_OUTER)
    add_chain([(X, 0.0), (X, y0), (X, d)] if with_gamma else [(X, 0.0), (X, d)], TAG_LATERAL)
    add_chain([(X, d), (-X, d)], TAG_OUTER)
    add_chain([(-X, d), (-X, y0), (-X, 0.0)] if with_gamma else [(-X, d), (-X, 0.0)], TAG_LATERAL)

    hole_left, hole_right = [], []
    for i in range(dom.n_holes):
        poly = dom.hole_polygon(i, nh) if dom.shape_ids[i] == 0 else dom.hole_polygon(i)
        tag = TAG_HOLE_D if dom.dirichlet[i] else TAG_HOLE_R
        base = add_chain([tuple(p) for p in poly], tag, closed=True)
        if dom.shape_ids[i] == 0:
            seeds.append(tuple(dom.centers[i]))
            hole_right.append(base)
            hole_left.append(base + nh // 2)
        else:
            seeds.append(tuple(dom.centers[i] + dom.scale * dom.family.reference_anchor(i)))

    if with_gamma:
        if np.any(dom.shape_ids != 0):
            raise GeometryError("with_gamma requires circular holes")
        order = np.argsort(dom.centers[:, 0]) if dom.n_holes else []
        prev = None
        for i in order:
            a = (-X, y0) if prev is None else verts[hole_right[prev]]
            add_chain([a, verts[hole_left[i]]], TAG_GAMMA)
            if fill:
                # the curve continues through the filled hole as a diameter
                add_chain([verts[hole_left[i]], verts[hole_right[i]]], TAG_GAMMA)
            prev = i
        a = (-X, y0) if prev is None else verts[hole_right[prev]]
        add_chain([a, (X, y0)], TAG_GAMMA)

    vertices = np.array(verts, dtype=float)
    # merge duplicated chain endpoints
    _, first, inverse = np.unique(np.round(vertices, 14), axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    vertices = vertices[first]
    segs = inverse[np.array(segs)]
    tags = np.array(tags, dtype=np.int64)
    pslg = {"vertices": vertices, "segments": segs, "segment_markers": tags[:, None]}
    if seeds:
        if fill:
            # region attribute k + 1 marks the interior of hole k, 0 the perforated domain
            # a diameter splits each hole in two, so each half gets its own seed
            off = 0.5 * dom.scale * dom.family.R1 if with_gamma else 0.0
            regions = [[x, y + sgn * off, k + 1, 0.0] for k, (x, y) in enumerate(seeds) for sgn in (1, -1)]
            pslg["regions"] = np.array(regions)
        else:
            pslg["holes"] = np.array(seeds, dtype=float)

    size_fn = None
    if grading is not None and dom.n_holes:
        from scipy.spatial import cKDTree

        tree = cKDTree(dom.centers)
        radius = np.array([dom.hole_radius_bound(i) for i in range(dom.n_holes)])

        def size_fn(pts):
            dist, idx = tree.query(pts)
            return np.minimum(h_far, h + grading * np.maximum(dist - radius[idx], 0.0))

    return pslg, size_fn


def _triangulate(pslg, size_fn, h_far, min_angle, attributes=False):
    max_area = math.sqrt(3) / 4 * h_far ** 2
    angle = min_angle
    for _ in range(3):
        out = _run_triangle(pslg, angle, max_area, size_fn, extra="A" if attributes else "")
        q = _min_angle(out["vertices"], out["triangles"])
        if q >= MIN_ANGLE_FLOOR:
            return out
        angle = max(angle - 4.0, MIN_ANGLE_FLOOR + 1)
    raise MeshQualityError(f"min angle {q:.2f} below {MIN_ANGLE_FLOOR} after retries")


def _min_angle(vertices, tris):
    p = vertices[tris]
    best = 180.0
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cosang = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        best = min(best, float(np.degrees(np.arccos(np.clip(cosang, -1, 1))).min()))
    return best


def generate_mesh(dom: PerforatedDomain, h: float, h_far: float | None = None, *, grading: float | None = 0.3,
                  with_gamma: bool = False, nseg: int | None = None, min_angle: float = 28.0) -> Mesh:
    """Boundary-fitted triangulation of the truncated perforated strip.

    Parameters
    ----------
    h : float
        Target edge length at the holes; must not exceed ``eps * eta * R2 / 4``.
    h_far : float, optional
        Edge length away from the holes (default ``max(h, 0.05)``).
    grading : float or None
        Growth rate of the size field ``h + grading * dist`` away from the hole
        boundaries; ``None`` leaves the grading to the quality refinement.
    with_gamma : bool
        Also insert the straight curve as an edge path between the holes
        (tag 2), so curve line integrals and constraints are exact.
    """
    h_far = max(h, 0.05) if h_far is None else h_far
    _check_resolution(dom, h)
    pslg, size_fn = _perforated_pslg(dom, h, h_far, grading, with_gamma, nseg, fill=False)
    out = _triangulate(pslg, size_fn, h_far, min_angle)
    return _finalize(out["vertices"], out["triangles"].astype(np.int64), out["segments"].astype(np.int64),
                     out["segment_markers"].ravel().astype(np.int64))


@dataclass(frozen=True, eq=False)
class MeshPair:
    """A perforated mesh embedded node-for-node in a mesh of the whole strip.

    ``node_map[i]`` is the index in ``filled`` of node ``i`` of ``perforated``;
    the two meshes share every triangle outside the holes.
    """

    perforated: Mesh
    filled: Mesh
    node_map: np.ndarray


def generate_mesh_pair(dom: PerforatedDomain, h: float, h_far: float | None = None, *,
                       grading: float | None = 0.3, with_gamma: bool = True, nseg: int | None = None,
                       min_angle: float = 28.0) -> MeshPair:
    """Triangulate the whole strip with the hole polygons as internal constraints.

    The filled mesh carries tags 1, 2, 5 (the curve passes through the holes
    as diameters); the perforated mesh is its restriction to the triangles
    outside the holes, with hole loops tagged 3 or 4.  Solving the
    homogenized problem on ``filled`` and restricting through ``node_map``
    gives a comparator with the same discretization away from the holes.
    """
    h_far = max(h, 0.05) if h_far is None else h_far
    _check_resolution(dom, h)
    pslg, size_fn = _perforated_pslg(dom, h, h_far, grading, with_gamma, nseg, fill=True)
    out = _triangulate(pslg, size_fn, h_far, min_angle, attributes="regions" in pslg)
    verts = out["vertices"]
    tris = out["triangles"].astype(np.int64)
    segs = out["segments"].astype(np.int64)
    marks = out["segment_markers"].ravel().astype(np.int64)
    if "triangle_attributes" in out:
        attr = np.rint(out["triangle_attributes"].ravel()).astype(np.int64)
    else:
        attr = np.zeros(len(tris), dtype=np.int64)
    keep_filled = np.isin(marks, (TAG_OUTER, TAG_LATERAL, TAG_GAMMA))
    filled = _finalize(verts, tris, segs[keep_filled], marks[keep_filled])

    outside = attr == 0
    t_out = tris[outside]
    e = np.sort(np.concatenate([t_out[:, [0, 1]], t_out[:, [1, 2]], t_out[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    on_out = {tuple(x): c for x, c in zip(uniq.tolist(), counts.tolist())}
    ss = np.sort(segs, axis=1)
    keep = np.array([
        on_out.get(tuple(s), 0) == (2 if m == TAG_GAMMA else 1) for s, m in zip(ss.tolist(), marks.tolist())
    ], dtype=bool) if len(segs) else np.zeros(0, dtype=bool)
    perforated = _finalize(verts, t_out, segs[keep], marks[keep])

    # both meshes were compacted from the same vertex array; match by coordinates
    used_all = np.unique(tris.ravel())
    used_out = np.unique(t_out.ravel())
    node_map = np.searchsorted(used_all, used_out)
    return MeshPair(perforated, filled, node_map)


def generate_homogenized_mesh(strip: StripGeometry, curve: CurveSpec, h: float, *, structured: bool = True,
                              min_angle: float = 28.0) -> Mesh:
    """Triangulation of the full truncated strip with the curve as an edge path (tag 2).

    The straight curve uses a structured grid with alternating diagonals;
    a circle uses a quality Delaunay mesh with the inscribed polygon as an
    internal constraint.
    """
    X, d = strip.half_length, strip.width
    if curve.kind == "line" and structured:
        y0 = curve.height
        if not 0 < y0 < d:
            raise GeometryError("curve must lie strictly inside the strip")
        nx = max(2, int(math.ceil(2 * X / h)))
        ny0 = max(1, int(math.ceil(y0 / h)))
        ny1 = max(1, int(math.ceil((d - y0) / h)))
        xs = np.linspace(-X, X, nx + 1)
        ys = np.concatenate([np.linspace(0.0, y0, ny0 + 1), np.linspace(y0, d, ny1 + 1)[1:]])
        ys[ny0] = y0
        ny = ys.size - 1
        XX, YY = np.meshgrid(xs, ys, indexing="xy")
        nodes = np.stack([XX.ravel(), YY.ravel()], axis=1)
        idx = np.arange(nodes.shape[0]).reshape(ny + 1, nx + 1)
        a = idx[:-1, :-1].ravel()
        b = idx[:-1, 1:].ravel()
        c = idx[1:, 1:].ravel()
        dd = idx[1:, :-1].ravel()
        jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
        alt = ((ii + jj) % 2 == 0).ravel()
        t1 = np.where(alt[:, None], np.stack([a, b, c], 1), np.stack([a, b, dd], 1))
        t2 = np.where(alt[:, None], np.stack([a, c, dd], 1), np.stack([b, c, dd], 1))
        tris = np.concatenate([t1, t2])
        bottom = np.stack([idx[0, :-1], idx[0, 1:]], 1)
        top = np.stack([idx[-1, :-1], idx[-1, 1:]], 1)
        left = np.stack([idx[:-1, 0], idx[1:, 0]], 1)
        right = np.stack([idx[:-1, -1], idx[1:, -1]], 1)
        gamma = np.stack([idx[ny0, :-1], idx[ny0, 1:]], 1)
        segs = np.concatenate([bottom, top, left, right, gamma])
        tags = np.concatenate([np.full(len(bottom) + len(top), TAG_OUTER), np.full(len(left) + len(right), TAG_LATERAL),
                               np.full(len(gamma), TAG_GAMMA)])
        return _finalize(nodes, tris, segs, tags)

    if curve.kind == "line":
        y0 = curve.height
        verts = [(-X, 0.0), (X, 0.0), (X, y0), (X, d), (-X, d), (-X, y0)]
        segs = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (5, 2)]
        tags = [TAG_OUTER, TAG_LATERAL, TAG_LATERAL, TAG_OUTER, TAG_LATERAL, TAG_LATERAL, TAG_GAMMA]
    elif curve.kind == "circle":
        cx, cy = curve.center
        R = curve.radius
        if cx - R <= -X or cx + R >= X or cy - R <= 0 or cy + R >= d:
            raise GeometryError("circle curve must lie inside the truncated strip")
        verts = [(-X, 0.0), (X, 0.0), (X, d), (-X, d)]
        segs = [(0, 1), (1, 2), (2, 3), (3, 0)]
        tags = [TAG_OUTER, TAG_LATERAL, TAG_OUTER, TAG_LATERAL]
        n = max(16, int(math.ceil(2 * math.pi * R / h)))
        th = 2 * np.pi * np.arange(n) / n
        verts += [(cx + R * math.cos(t), cy + R * math.sin(t)) for t in th]
        segs += [(4 + i, 4 + (i + 1) % n) for i in range(n)]
        tags += [TAG_GAMMA] * n
    else:
        raise GeometryError("homogenized mesh supports straight-line or circle curves")
    pslg = {"vertices": np.array(verts), "segments": np.array(segs),
            "segment_markers": np.array(tags)[:, None]}
    out = _run_triangle(pslg, min_angle, math.sqrt(3) / 4 * h * h)
    return _finalize(out["vertices"], out["triangles"].astype(np.int64), out["segments"].astype(np.int64),
                     out["segment_markers"].ravel().astype(np.int64))


def generate_rectangle_mesh(x0, x1, y0, y1, n: int) -> Mesh:
    """Structured Dirichlet box used for operator sanity checks (all edges tag 1)."""
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    XX, YY = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.stack([XX.ravel(), YY.ravel()], axis=1)
    idx = np.arange(nodes.shape[0]).reshape(n + 1, n + 1)
    a, b, c, dd = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel(), idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    jj, ii = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    alt = ((ii + jj) % 2 == 0).ravel()
    t1 = np.where(alt[:, None], np.stack([a, b, c], 1), np.stack([a, b, dd], 1))
    t2 = np.where(alt[:, None], np.stack([a, c, dd], 1), np.stack([b, c, dd], 1))
    ring = np.concatenate([np.stack([idx[0, :-1], idx[0, 1:]], 1), np.stack([idx[-1, :-1], idx[-1, 1:]], 1),
                           np.stack([idx[:-1, 0], idx[1:, 0]], 1), np.stack([idx[:-1, -1], idx[1:, -1]], 1)])
    return _finalize(nodes, np.concatenate([t1, t2]), ring, np.full(len(ring), TAG_OUTER))


def write_mesh(mesh: Mesh, path):
    lines = [HEADER, f"nodes {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g} {t}" for (x, y), t in zip(mesh.nodes.tolist(), mesh.node_tags.tolist())]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"bedges {mesh.bedges.shape[0]}")
    lines += [f"{i} {j} {t}" for (i, j), t in zip(mesh.bedges.tolist(), mesh.bedge_tags.tolist())]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        raw = fh.read().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(raw) and not raw[pos].strip():
            pos += 1
        if pos >= len(raw):
            raise MeshParseError("unexpected end of file", line=pos + 1)
        pos += 1
        return pos, raw[pos - 1].split()

    def section(name):
        lineno, tok = next_line()
        if len(tok) != 2 or tok[0] != name:
            raise MeshParseError(f"expected '{name} <count>'", line=lineno)
        try:
            count = int(tok[1])
        except ValueError:
            raise MeshParseError(f"bad {name} count {tok[1]!r}", line=lineno) from None
        if count < 0:
            raise MeshParseError(f"negative {name} count", line=lineno)
        return count

    lineno, tok = next_line()
    if " ".join(tok) != HEADER:
        raise MeshParseError(f"expected header {HEADER!r}", line=lineno)

    n = section("nodes")
    nodes = np.empty((n, 2))
    node_tags = np.empty(n, dtype=np.int64)
    for i in range(n):
        lineno, tok = next_line()
        try:
            if len(tok) != 3:
                raise ValueError
            nodes[i] = float(tok[0]), float(tok[1])
            node_tags[i] = int(tok[2])
        except ValueError:
            raise MeshParseError("expected 'x y tag'", line=lineno) from None

    def index_rows(count, width, what):
        out = np.empty((count, width), dtype=np.int64)
        for r in range(count):
            lineno, tok = next_line()
            try:
                if len(tok) != width:
                    raise ValueError
                out[r] = [int(t) for t in tok]
            except ValueError:
                raise MeshParseError(f"expected {width} integers in {what}", line=lineno) from None
            idx = out[r, :3] if what == "triangles" else out[r, :2]
            if np.any(idx < 0) or np.any(idx >= n):
                raise MeshParseError(f"node index out of range in {what}", line=lineno)
        return out

    m = section("triangles")
    tris = index_rows(m, 3, "triangles")
    b = section("bedges")
    be = index_rows(b, 3, "bedges")
    mesh = Mesh(nodes, tris, be[:, :2], be[:, 2], node_tags)
    mesh.validate()
    return mesh


@dataclass(frozen=True)
class MeshQuality:
    min_angle: float
    max_aspect_ratio: float
    h_min: float
    h_max: float
    n_elements: int
    hole_area_deficit: float


def mesh_quality(mesh: Mesh) -> MeshQuality:
    """Angle, aspect and edge-length statistics.

    The aspect ratio is ``R / (2 r)`` (circumradius over twice the inradius),
    equal to 1 for an equilateral triangle.  ``hole_area_deficit`` is the area
    missing between each hole loop and the circle through its vertices.
    """
    p = mesh.nodes[mesh.triangles]
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)

    def angle(opp, s1, s2):
        return np.degrees(np.arccos(np.clip((s1 ** 2 + s2 ** 2 - opp ** 2) / (2 * s1 * s2), -1, 1)))

    angles = np.stack([angle(a, b, c), angle(b, c, a), angle(c, a, b)], axis=1)
    area = np.abs(mesh.signed_areas())
    s = 0.5 * (a + b + c)
    inradius = area / s
    circum = a * b * c / (4 * area)
    deficit = 0.0
    for tag in (TAG_HOLE_D, TAG_HOLE_R):
        for loop in _edge_loops(mesh.edges_of(tag)):
            pts = mesh.nodes[loop]
            cen = pts.mean(axis=0)
            r = np.mean(np.linalg.norm(pts - cen, axis=1))
            x, y = pts[:, 0], pts[:, 1]
            poly_area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
            deficit += math.pi * r * r - poly_area
    edges = np.concatenate([a, b, c])
    return MeshQuality(min_angle=float(angles.min()), max_aspect_ratio=float(np.max(circum / (2 * inradius))),
                       h_min=float(edges.min()), h_max=float(edges.max()), n_elements=mesh.n_triangles,
                       hole_area_deficit=float(deficit))


def _edge_loops(edges):
    """Split an edge set forming disjoint closed loops into ordered vertex lists."""
    if len(edges) == 0:
        return []
    adj = {}
    for a, b in edges.tolist():
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    seen = set()
    loops = []
    for start in adj:
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nxt = [v for v in adj[cur] if v != prev]
            if not nxt:
                break
            v = nxt[0]
            if v == start:
                break
            if v in seen:
                break
            loop.append(v)
            seen.add(v)
            prev, cur = cur, v
        loops.append(np.array(loop))
    return loops


def hole_loops(mesh: Mesh, tags=(TAG_HOLE_D, TAG_HOLE_R)):
    return _edge_loops(mesh.edges_of(tags))
