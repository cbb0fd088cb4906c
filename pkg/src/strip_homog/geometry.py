"""Strip, curve, hole family and the assumption checks on a perforated strip.

Coordinates: the strip is ``{0 < x2 < d}`` truncated to ``|x1| <= X``.  The
curve is parametrized by arclength ``s``; holes are placed at ``rho(s_k)``
and are the reference shapes scaled by ``eps * eta``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    EllipticityError,
    GeometryError,
    OverlapError,
    PartitionError,
)

# Reference constants of the straight-line model with unit-disk holes.
MODEL_R1 = 1.0
MODEL_R2 = 5.0 / 4.0
MODEL_B = 6.0 / 5.0
MODEL_L = 2.0 * math.pi
MODEL_SPACING = 3.0
CUT_CLEARANCE = 0.5


@dataclass(frozen=True)
class StripGeometry:
    width: float = math.pi
    half_length: float = 3.0

    def __post_init__(self):
        if not self.width > 0:
            raise GeometryError(f"strip width must be positive, got {self.width}")
        if not self.half_length > 0:
            raise GeometryError(f"truncation half-length must be positive, got {self.half_length}")

    @property
    def area(self) -> float:
        return 2.0 * self.half_length * self.width


@dataclass(frozen=True, eq=False)
class CurveSpec:
    """Curve carrying the perforation.

    Use the constructors :meth:`line`, :meth:`circle` and :meth:`sampled`.
    """

    kind: str
    height: float = math.pi / 2
    center: tuple = (0.0, math.pi / 2)
    radius: float = 1.0
    s_samples: np.ndarray | None = None
    points: np.ndarray | None = None
    tube_radius: float | None = None
    _spline: CubicSpline | None = field(default=None, repr=False)

    @classmethod
    def line(cls, height=math.pi / 2, tube_radius=None):
        return cls("line", height=float(height), tube_radius=tube_radius)

    @classmethod
    def circle(cls, center, radius, tube_radius=None):
        return cls("circle", center=(float(center[0]), float(center[1])),
                   radius=float(radius), tube_radius=tube_radius)

    @classmethod
    def sampled(cls, s, points, tube_radius=None, tol=1e-3):
        s = np.asarray(s, dtype=float)
        points = np.asarray(points, dtype=float)
        if s.ndim != 1 or points.shape != (s.size, 2) or s.size < 4:
            raise GeometryError("sampled curve needs >= 4 samples with matching (n, 2) points")
        if np.any(np.diff(s) <= 0):
            raise GeometryError("arclength samples must be strictly increasing")
        spline = CubicSpline(s, points, axis=0)
        speed = np.linalg.norm(spline(s, 1), axis=1)
        bad = np.abs(speed - 1.0) > tol
        if np.any(bad):
            i = int(np.argmax(np.abs(speed - 1.0)))
            raise GeometryError(
                f"sampled curve is not arclength-parametrized: |rho'| = {speed[i]:.6g} at s = {s[i]:.6g}")
        return cls("sampled", s_samples=s, points=points, tube_radius=tube_radius, _spline=spline)

    @property
    def closed(self) -> bool:
        return self.kind == "circle"

    @property
    def s_range(self) -> tuple[float, float]:
        if self.kind == "line":
            return (-math.inf, math.inf)
        if self.kind == "circle":
            return (-math.pi * self.radius, math.pi * self.radius)
        return (float(self.s_samples[0]), float(self.s_samples[-1]))

    @property
    def curvature_bound(self) -> float:
        if self.kind == "line":
            return 0.0
        if self.kind == "circle":
            return 1.0 / self.radius
        ss = np.linspace(*self.s_range, 20 * self.s_samples.size)
        return float(np.max(np.linalg.norm(self._spline(ss, 2), axis=1)))

    def point(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "line":
            return np.stack([s, np.full_like(s, self.height)], axis=-1)
        if self.kind == "circle":
            t = s / self.radius
            return np.stack([self.center[0] + self.radius * np.cos(t),
                             self.center[1] + self.radius * np.sin(t)], axis=-1)
        return self._spline(s)

    def tangent(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "line":
            return np.stack([np.ones_like(s), np.zeros_like(s)], axis=-1)
        if self.kind == "circle":
            t = s / self.radius
            return np.stack([-np.sin(t), np.cos(t)], axis=-1)
        d = self._spline(s, 1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def normal(self, s) -> np.ndarray:
        """Unit normal, the tangent rotated by +90 degrees."""
        t = self.tangent(s)
        return np.stack([-t[..., 1], t[..., 0]], axis=-1)

    def tube_point(self, s, tau) -> np.ndarray:
        """Point with local coordinates ``(s, tau)``."""
        s = np.asarray(s, dtype=float)
        tau = np.asarray(tau, dtype=float)
        return self.point(s) + tau[..., None] * self.normal(s)

    def arclength(self, points) -> np.ndarray:
        """Arclength coordinate of points lying on (or near) the curve."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "line":
            return points[:, 0].copy()
        if self.kind == "circle":
            ang = np.arctan2(points[:, 1] - self.center[1], points[:, 0] - self.center[0])
            return self.radius * ang
        ss = np.linspace(*self.s_range, 50 * self.s_samples.size)
        tree = cKDTree(self.point(ss))
        _, idx = tree.query(points)
        return ss[idx]

    def distance_to_strip_boundary(self, strip: StripGeometry) -> float:
        if self.kind == "line":
            y = np.array([self.height])
        elif self.kind == "circle":
            y = np.array([self.center[1] - self.radius, self.center[1] + self.radius])
        else:
            y = self.point(np.linspace(*self.s_range, 20 * self.s_samples.size))[:, 1]
        return float(min(np.min(y), np.min(strip.width - y)))

    def effective_tube_radius(self, strip: StripGeometry) -> float:
        if self.tube_radius is not None:
            return float(self.tube_radius)
        r = 0.5 * self.distance_to_strip_boundary(strip)
        kb = self.curvature_bound
        if kb > 0:
            r = min(r, 0.5 / kb)
        return r


@dataclass(frozen=True, eq=False)
class HoleFamily:
    """Hole positions along the curve and their reference shapes.

    ``shape_ids[k] == 0`` is the unit disk; ``shape_ids[k] == j > 0`` refers to
    ``polygons[j - 1]`` given in reference coordinates.
    """

    s: np.ndarray
    dirichlet: np.ndarray
    shape_ids: np.ndarray | None = None
    polygons: tuple = ()
    R1: float = MODEL_R1
    R2: float = MODEL_R2
    b: float = MODEL_B
    L: float = MODEL_L
    phi: float | None = None

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        object.__setattr__(self, "s", s)
        d = np.broadcast_to(np.asarray(self.dirichlet, dtype=bool), s.shape).copy()
        object.__setattr__(self, "dirichlet", d)
        ids = np.zeros(s.shape, dtype=int) if self.shape_ids is None else np.asarray(self.shape_ids, dtype=int)
        object.__setattr__(self, "shape_ids", ids)
        object.__setattr__(self, "polygons", tuple(np.asarray(p, dtype=float) for p in self.polygons))
        if np.any(np.diff(s) <= 0):
            raise GeometryError("hole positions s_k must be strictly increasing")
        if ids.shape != s.shape or np.any(ids < 0) or np.any(ids > len(self.polygons)):
            raise GeometryError("shape_ids must index the polygon list (0 = unit disk)")
        if not (0 < self.R1 < self.R2 and self.b > 1 and self.L > 0):
            raise GeometryError("need 0 < R1 < R2, b > 1, L > 0")

    @classmethod
    def periodic(cls, eps, half_length, spacing=MODEL_SPACING, dirichlet=True, **kw):
        """Holes at ``s_k = spacing * eps * k`` with ``|s_k| <= half_length``."""
        kmax = int(math.floor(half_length / (spacing * eps) + 1e-9))
        k = np.arange(-kmax, kmax + 1)
        return cls(s=spacing * eps * k, dirichlet=dirichlet, **kw)

    def __len__(self):
        return self.s.size

    def reference_polygon(self, k, nseg=64) -> np.ndarray:
        sid = int(self.shape_ids[k])
        if sid == 0:
            th = 2 * np.pi * np.arange(nseg) / nseg
            return np.stack([np.cos(th), np.sin(th)], axis=1)
        return self.polygons[sid - 1]

    def reference_perimeter(self, k) -> float:
        sid = int(self.shape_ids[k])
        if sid == 0:
            return 2 * math.pi
        p = self.polygons[sid - 1]
        return float(np.sum(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)))

    def reference_extent(self, k) -> float:
        """Radius of the smallest origin-centred disk containing the shape."""
        sid = int(self.shape_ids[k])
        if sid == 0:
            return 1.0
        return float(np.max(np.linalg.norm(self.polygons[sid - 1], axis=1)))

    def reference_anchor(self, k) -> np.ndarray:
        """Interior point ``x^k`` of the reference shape."""
        sid = int(self.shape_ids[k])
        if sid == 0:
            return np.zeros(2)
        from shapely.geometry import Polygon

        pt = Polygon(self.polygons[sid - 1]).representative_point()
        return np.array([pt.x, pt.y])

    def flux_constant(self, k) -> float:
        """Outer flux ``phi_k`` of the hole flux problem, constant on the outer circle."""
        if self.phi is not None:
            return float(self.phi)
        bstar = 0.5 * (self.b + 1.0)
        return self.reference_perimeter(k) / (2 * math.pi * bstar * self.R2)

    def subset(self, mask) -> "HoleFamily":
        mask = np.asarray(mask, dtype=bool)
        return HoleFamily(s=self.s[mask], dirichlet=self.dirichlet[mask], shape_ids=self.shape_ids[mask],
                          polygons=self.polygons, R1=self.R1, R2=self.R2, b=self.b, L=self.L, phi=self.phi)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s_k", "bc_flag", "shape_id"])
            for s, d, sid in zip(self.s, self.dirichlet, self.shape_ids):
                w.writerow([repr(float(s)), "D" if d else "R", int(sid)])

    @classmethod
    def from_csv(cls, path, polygons=(), **kw):
        s, flags, ids = [], [], []
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            header = next(rows)
            if [h.strip() for h in header] != ["s_k", "bc_flag", "shape_id"]:
                raise ConfigError(f"{path}: unexpected hole CSV header {header}")
            for lineno, row in enumerate(rows, start=2):
                try:
                    s.append(float(row[0]))
                    flag = row[1].strip().upper()
                    if flag not in ("D", "R"):
                        raise ValueError(flag)
                    flags.append(flag == "D")
                    ids.append(int(row[2]))
                except (ValueError, IndexError) as exc:
                    raise ConfigError(f"{path}:{lineno}: bad hole row {row}") from exc
        return cls(s=np.array(s), dirichlet=np.array(flags, dtype=bool), shape_ids=np.array(ids, dtype=int),
                   polygons=polygons, **kw)


@dataclass(frozen=True)
class EtaLaw:
    """Hole-size law ``eta(eps)``: ``const`` c, ``pow`` eps**alpha, or ``exp``."""

    kind: str = "const"
    value: float = 1.0

    @classmethod
    def parse(cls, text: str) -> tuple["EtaLaw", float, float]:
        """Parse ``const:<c>``, ``pow:<alpha>`` or ``exp:<rho>,<mu>``.

        Returns ``(law, rho, mu0)``; ``rho`` and ``mu0`` are 0 unless given by
        the exponential form.
        """
        try:
            kind, _, arg = text.partition(":")
            kind = kind.strip().lower()
            if kind == "const":
                return cls("const", float(arg)), 0.0, 0.0
            if kind == "pow":
                return cls("pow", float(arg)), 0.0, 0.0
            if kind == "exp":
                rho, _, mu = arg.partition(",")
                return cls("exp"), float(rho), float(mu or 0.0)
        except ValueError as exc:
            raise ConfigError(f"bad eta law {text!r}") from exc
        raise ConfigError(f"unknown eta law {text!r}; expected const:<c>, pow:<a> or exp:<rho>,<mu>")

    def __str__(self):
        return f"{self.kind}:{self.value:g}" if self.kind != "exp" else "exp"


@dataclass(frozen=True)
class PerforationConfig:
    eps: float
    eta_law: EtaLaw = EtaLaw()
    rho: float = 0.0
    mu0: float = 0.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        eta = self.eta
        if not (0 < eta <= 1):
            raise ConfigError(f"eta(eps) = {eta!r} outside (0, 1]")

    @property
    def eta(self) -> float:
        law = self.eta_law
        if law.kind == "const":
            return float(law.value)
        if law.kind == "pow":
            return float(self.eps ** law.value)
        if law.kind == "exp":
            rate = self.rho + self.mu0
            if rate <= 0:
                raise ConfigError("exponential eta law needs rho + mu0 > 0")
            return math.exp(-1.0 / (self.eps * rate))
        raise ConfigError(f"unknown eta law {law.kind!r}")

    @property
    def mu(self) -> float:
        """``mu(eps) = -1/(eps ln eta) - rho``; zero when ``eta == 1``."""
        eta = self.eta
        if eta >= 1.0:
            return 0.0
        return -1.0 / (self.eps * math.log(eta)) - self.rho


@dataclass(frozen=True, eq=False)
class PerforatedDomain:
    strip: StripGeometry
    curve: CurveSpec
    family: HoleFamily
    eps: float
    eta: float
    centers: np.ndarray
    s: np.ndarray
    dirichlet: np.ndarray
    shape_ids: np.ndarray

    @property
    def n_holes(self) -> int:
        return self.s.size

    @property
    def scale(self) -> float:
        return self.eps * self.eta

    def hole_polygon(self, i, nseg=64) -> np.ndarray:
        """Boundary vertices of hole ``i`` in physical coordinates (counter-clockwise)."""
        ref = self.family.reference_polygon(i, nseg)
        return self.centers[i] + self.scale * ref

    def hole_radius_bound(self, i) -> float:
        return self.scale * self.family.reference_extent(i)


def build_perforated_domain(strip: StripGeometry, curve: CurveSpec, holes: HoleFamily,
                            cfg: PerforationConfig) -> PerforatedDomain:
    """Materialize the holes of ``holes`` that fit inside the truncated strip."""
    eps, eta = cfg.eps, cfg.eta
    fam = holes
    dilated = fam.b * fam.R2 * eps
    tau0 = curve.effective_tube_radius(strip)
    if dilated >= tau0:
        raise GeometryError(f"eps*b*R2 = {dilated:.4g} is not below the tube radius {tau0:.4g}")
    lo, hi = curve.s_range
    if np.any(fam.s < lo) or np.any(fam.s > hi):
        raise GeometryError("hole position outside the curve parameter range")

    centers = curve.point(fam.s).reshape(-1, 2)
    extent = np.array([eps * eta * fam.reference_extent(k) for k in range(len(fam))])
    # a hole grazing the lateral cut would force sliver elements; demand a gap
    keep = np.abs(centers[:, 0]) + (1 + CUT_CLEARANCE) * extent <= strip.half_length
    if np.any((centers[:, 1] - extent <= 0) | (centers[:, 1] + extent >= strip.width)):
        raise GeometryError("a hole touches the strip boundary")
    sub = fam.subset(keep)
    centers = centers[keep]

    if sub.s.size > 1:
        tree = cKDTree(centers)
        pairs = tree.query_pairs(2 * dilated * (1 - 1e-12), output_type="ndarray")
        if pairs.size:
            i, j = pairs[0]
            raise OverlapError(f"dilated balls of holes {i} and {j} intersect "
                               f"(distance {np.linalg.norm(centers[i] - centers[j]):.6g} < {2 * dilated:.6g})")
    return PerforatedDomain(strip=strip, curve=curve, family=sub, eps=eps, eta=eta, centers=centers,
                            s=sub.s.copy(), dirichlet=sub.dirichlet.copy(), shape_ids=sub.shape_ids.copy())


def model_domain(eps, eta, half_length=3.0, dirichlet=True) -> PerforatedDomain:
    """Strip of width pi, straight curve at height pi/2, unit disks at ``s_k = 3 eps k``."""
    strip = StripGeometry(math.pi, half_length)
    curve = CurveSpec.line(math.pi / 2)
    fam = HoleFamily.periodic(eps, half_length, dirichlet=dirichlet)
    return build_perforated_domain(strip, curve, fam, PerforationConfig(eps, EtaLaw("const", eta)))


@dataclass(frozen=True)
class AssumptionReport:
    a1_disjoint: bool
    a1_margin: float
    a1_containment: bool
    a1_containment_margin: float
    a3_covering: bool
    a3_margin: float
    a3_holes_in_balls: bool
    a2_flux_bound: float | None

    @property
    def a1(self) -> bool:
        return self.a1_disjoint and self.a1_containment

    @property
    def a3(self) -> bool:
        return self.a3_covering and self.a3_holes_in_balls


def check_assumptions(dom: PerforatedDomain, R3: float) -> AssumptionReport:
    """Check disjointness/containment of the hole family and the Dirichlet covering condition.

    Tangent dilated balls count as disjoint (open balls).  The covering of the
    tube ``|tau| < eps b R2`` is checked on a grid of pitch ``eps b R2 / 16``
    over the arclength span of the Dirichlet holes.
    """
    fam, eps = dom.family, dom.eps
    dilated = fam.b * fam.R2 * eps
    tol = 1e-12 * max(1.0, dilated)

    if dom.n_holes > 1:
        tree = cKDTree(dom.centers)
        dist, _ = tree.query(dom.centers, k=2)
        a1_margin = float(np.min(dist[:, 1]) - 2 * dilated)
    else:
        a1_margin = math.inf
    a1_disjoint = a1_margin >= -tol

    cont_margin = math.inf
    for k in range(len(fam)):
        if fam.shape_ids[k] == 0:
            # unit disk: exact values rather than those of an inscribed polygon
            outer, inner, perim = fam.R2 - 1.0, 1.0 - fam.R1, fam.L - 2 * math.pi
        else:
            poly = fam.reference_polygon(k, 256)
            outer = fam.R2 - np.max(np.linalg.norm(poly, axis=1))
            inner = _polygon_clearance(poly, fam.reference_anchor(k)) - fam.R1
            perim = fam.L - fam.reference_perimeter(k)
        cont_margin = min(cont_margin, outer, inner + 1e-12, perim + 1e-12)
    a1_cont = len(fam) == 0 or cont_margin >= 0

    dmask = dom.dirichlet
    if np.any(dmask):
        dcent = dom.centers[dmask]
        pitch = dilated / 16
        s_lo, s_hi = dom.s[dmask].min(), dom.s[dmask].max()
        ns = max(2, int(math.ceil((s_hi - s_lo) / pitch)) + 1)
        nt = 33
        ss = np.linspace(s_lo, s_hi, ns)
        tt = np.linspace(-dilated, dilated, nt)[1:-1]
        S, T = np.meshgrid(ss, tt, indexing="ij")
        pts = dom.curve.tube_point(S.ravel(), T.ravel())
        dist, _ = cKDTree(dcent).query(pts)
        a3_margin = float(np.min(R3 * eps - dist))
        a3_cov = a3_margin > 0
        extents = np.array([dom.hole_radius_bound(k) for k in np.flatnonzero(dmask)])
        in_balls = bool(np.all(extents < R3 * eps))
    else:
        a3_margin, a3_cov, in_balls = -math.inf, False, False

    flux_bound = 1.0 if np.all(fam.shape_ids == 0) else None
    return AssumptionReport(a1_disjoint=bool(a1_disjoint), a1_margin=a1_margin, a1_containment=bool(a1_cont),
                            a1_containment_margin=float(cont_margin), a3_covering=bool(a3_cov),
                            a3_margin=a3_margin, a3_holes_in_balls=in_balls, a2_flux_bound=flux_bound)


def _polygon_clearance(poly, point) -> float:
    """Distance from ``point`` to the polygon boundary (negative if outside)."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    t = np.clip(np.einsum("ij,ij->i", point - a, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
    d = np.min(np.linalg.norm(a + t[:, None] * ab - point, axis=1))
    # even-odd rule
    x, y = point
    inside = False
    for (x1, y1), (x2, y2) in zip(a, b):
        if (y1 > y) != (y2 > y) and x < x1 + (y - y1) * (x2 - x1) / (y2 - y1):
            inside = not inside
    return float(d if inside else -d)


def hole_flux_field_circle(z) -> np.ndarray:
    """Analytic flux field ``z / |z|^2`` around the unit disk (``|z| >= 1``)."""
    z = np.asarray(z, dtype=float)
    r2 = np.sum(z * z, axis=-1, keepdims=True)
    if np.any(r2 < 1.0 - 1e-12):
        raise DomainError("flux field of the unit disk is defined for |z| >= 1 only")
    return z / r2


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Piecewise-linear function of arclength given by samples."""

    s: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.s, dtype=float))
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if s.shape != v.shape:
            raise ValueError("samples and values must have the same shape")
        if np.any(np.diff(s) <= 0):
            raise ValueError("sample positions must be strictly increasing")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value):
        return cls(np.array([0.0]), np.array([float(value)]))

    def __call__(self, s):
        return np.interp(np.asarray(s, dtype=float), self.s, self.values)

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[0]))


@dataclass(frozen=True, eq=False)
class AlphaFunction:
    """Piecewise-constant ``alpha^eps`` on open windows, plus an optional smooth limit."""

    windows: np.ndarray          # (n, 2) [start, end], sorted, non-overlapping
    values: np.ndarray           # (n,)
    limit: SampledFunction | None = None

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        if self.values.size == 0:
            return out
        starts, ends = self.windows[:, 0], self.windows[:, 1]
        idx = np.searchsorted(starts, s, side="right") - 1
        ok = idx >= 0
        j = np.where(ok, idx, 0)
        inside = ok & (s > starts[j]) & (s < ends[j])
        out[inside] = self.values[j[inside]]
        return out

    def shifted(self, delta) -> "AlphaFunction":
        return AlphaFunction(self.windows + delta, self.values.copy(), self.limit)

    def half_widths(self) -> np.ndarray:
        return 0.5 * (self.windows[:, 1] - self.windows[:, 0])


def compute_alpha_eps(dom: PerforatedDomain, case: str) -> AlphaFunction:
    """Window function ``alpha^eps`` for the delta (Dirichlet holes) or Robin regime."""
    fam = dom.family
    half = fam.b * fam.R2 * dom.eps
    if case == "dirichlet-delta":
        mask = dom.dirichlet
        if not np.any(mask):
            raise PartitionError("dirichlet-delta windows need at least one Dirichlet hole")
        vals = np.full(int(mask.sum()), math.pi / (fam.b * fam.R2))
    elif case == "robin":
        if np.any(dom.dirichlet):
            raise PartitionError("robin windows need an empty Dirichlet set")
        mask = np.ones(dom.n_holes, dtype=bool)
        vals = np.array([fam.reference_perimeter(k) * dom.eta / (2 * fam.b * fam.R2)
                         for k in range(dom.n_holes)])
    else:
        raise ValueError(f"unknown alpha case {case!r}")
    s = dom.s[mask]
    windows = np.stack([s - half, s + half], axis=1)
    return AlphaFunction(windows, vals)


def estimate_kappa(alpha_eps: AlphaFunction, alpha, start: float, length: float,
                   rel_tail: float = 0.01, q_max: int = 1 << 18) -> float:
    """Weighted negative-order Sobolev norm of ``alpha^eps - alpha`` on one window.

    Returns ``sqrt(sum_q (|q|+1)^-1 |c_q|^2)`` with
    ``c_q = int_n^{n+l} (alpha^eps - alpha)(s) exp(-2 pi i q (s-n)/l) ds``.
    The integrand is piecewise linear, so every ``c_q`` is integrated in closed
    form.  The sum is truncated at ``|q| <= Q`` once the Parseval tail bound
    ``(l ||g||^2 - sum_{|q|<=Q} |c_q|^2) / (Q + 2)`` falls below ``rel_tail``
    times the partial sum.
    """
    if length <= 0:
        raise ValueError("window length must be positive")
    if not isinstance(alpha, SampledFunction):
        alpha = SampledFunction.constant(alpha)
    a, b = float(start), float(start + length)

    brk = [a, b]
    if alpha_eps.values.size:
        w = alpha_eps.windows.ravel()
        brk.extend(w[(w > a) & (w < b)])
    brk.extend(alpha.s[(alpha.s > a) & (alpha.s < b)])
    brk = np.sort(np.asarray(brk))
    tol = 1e-12 * max(1.0, abs(a), abs(b))
    merged = [brk[0]]
    for x in brk[1:]:
        if x - merged[-1] > tol:
            merged.append(x)
    merged[-1] = b
    brk = np.asarray(merged)
    if brk.size < 2:
        return 0.0

    lo, hi = brk[:-1], brk[1:]
    mid = 0.5 * (lo + hi)
    ae = alpha_eps(mid)
    g_lo = ae - alpha(lo)
    g_hi = ae - alpha(hi)
    if not (np.any(g_lo) or np.any(g_hi)):
        return 0.0

    seg = hi - lo
    norm2 = float(np.sum(seg * (g_lo ** 2 + g_lo * g_hi + g_hi ** 2) / 3.0))
    parseval = length * norm2
    slope = (g_hi - g_lo) / seg
    t_lo, t_hi = lo - a, hi - a

    def coeffs(q):
        w = 2 * np.pi * q[:, None] / length
        c = np.empty(q.size, dtype=complex)
        zero = q == 0
        if np.any(zero):
            c[zero] = np.sum(seg * (g_lo + g_hi) / 2.0)
        if np.any(~zero):
            wn = w[~zero]
            e_lo = np.exp(-1j * wn * t_lo)
            e_hi = np.exp(-1j * wn * t_hi)
            base = (e_lo - e_hi) / (1j * wn)
            # int_{t_lo}^{t_hi} (t - t_lo) e^{-iwt} dt
            lin = seg * e_hi / (-1j * wn) + (e_hi - e_lo) / (wn ** 2)
            c[~zero] = np.sum(g_lo * base + slope * lin, axis=1)
        return c

    partial = float(abs(coeffs(np.array([0]))[0]) ** 2)
    plain = partial
    q_done = 0
    block = 256
    while True:
        q_new = np.arange(q_done + 1, q_done + block + 1)
        cp = coeffs(q_new)
        cm = coeffs(-q_new)
        mag = np.abs(cp) ** 2 + np.abs(cm) ** 2
        partial += float(np.sum(mag / (q_new + 1)))
        plain += float(np.sum(mag))
        q_done += block
        tail = max(parseval - plain, 0.0) / (q_done + 2)
        if tail <= rel_tail * partial:
            return math.sqrt(partial)
        if q_done >= q_max:
            raise ConvergenceError(f"kappa tail {tail:.3g} not below {rel_tail:.0%} of {partial:.3g} at Q={q_done}")
        block = min(2 * block, 1 << 14)


@dataclass(frozen=True, eq=False)
class BetaFunction:
    s: np.ndarray
    values: np.ndarray
    provenance: str

    def __call__(self, s):
        return np.interp(np.asarray(s, dtype=float), self.s, self.values)

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[0]))

    @classmethod
    def constant(cls, value, provenance="user-supplied"):
        return cls(np.array([0.0]), np.array([float(value)]), provenance)


def compute_beta(alpha, rho: float, mu: float, A_on_curve=None, mode: str = "full", a=None) -> BetaFunction:
    """Coefficient of the delta interaction on the curve.

    ``full``: alpha (rho + mu) / det A; ``principal``: alpha rho / det A;
    ``robin``: alpha * a.
    """
    if not isinstance(alpha, SampledFunction):
        alpha = SampledFunction.constant(alpha)
    s, av = alpha.s, alpha.values
    if mode == "robin":
        if a is None:
            raise ValueError("robin mode needs the Robin coefficient a")
        aval = a(s) if callable(a) else np.broadcast_to(np.asarray(a, dtype=float), s.shape)
        return BetaFunction(s.copy(), av * aval, "robin")
    if mode not in ("full", "principal"):
        raise ValueError(f"unknown beta mode {mode!r}")
    if A_on_curve is None:
        A = np.broadcast_to(np.eye(2), (s.size, 2, 2))
    else:
        A = np.asarray(A_on_curve, dtype=float)
        A = np.broadcast_to(A, (s.size, 2, 2)) if A.ndim == 2 else A
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] ** 2
    if np.any(det <= 0):
        i = int(np.argmin(det))
        raise EllipticityError(f"det A = {det[i]:.3g} <= 0 at s = {s[i]:.6g}")
    rate = rho + mu if mode == "full" else rho
    return BetaFunction(s.copy(), av * rate / det, "delta" if mode == "full" else "delta-principal")
