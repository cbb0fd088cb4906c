"""Closed-form manufactured data for the straight-line model problem.

``u0(x) = chi2(x1) U(x2)`` where ``U`` is linear with slopes ``h1-``/``h1+``
and value ``h0`` on the band ``|x2 - pi/2| <= pi/4`` and is joined to zero at
``x2 = 0`` and ``x2 = pi`` by quintics ``t^3 (a + b t + c t^2)``; the cubic
factor makes value, slope and curvature vanish at the strip boundary, and the
three coefficients match value, slope and zero curvature at the junction.
``chi2`` is the smooth step built from ``exp(-1/t)``: one on ``|x1| <= 1``,
zero on ``|x1| >= 2``.  The source is ``f = -(chi2'' U + chi2 U'') - i u0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HALF = math.pi / 2
JUNCTION = math.pi / 4

CASES = ("dirichlet", "delta", "robin", "none")


def _psi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _psi_derivs(t):
    t = np.asarray(t, dtype=float)
    p = _psi(t)
    safe = np.where(t > 0, t, 1.0)
    d1 = np.where(t > 0, p / safe ** 2, 0.0)
    d2 = np.where(t > 0, p * (1.0 / safe ** 4 - 2.0 / safe ** 3), 0.0)
    return p, d1, d2


def smooth_step(t):
    """``S(t) = psi(t) / (psi(t) + psi(1 - t))`` with its first two derivatives."""
    t = np.asarray(t, dtype=float)
    g, g1, g2 = _psi_derivs(t)
    k, k1, k2 = _psi_derivs(1.0 - t)
    k1 = -k1
    D = g + k
    D1 = g1 + k1
    S = g / D
    N = g1 * k - g * k1
    N1 = g2 * k - g * k2
    S1 = N / D ** 2
    S2 = N1 / D ** 2 - 2 * N * D1 / D ** 3
    return S, S1, S2


def chi2(x1):
    """Cut-off and its first two derivatives in x1."""
    x1 = np.asarray(x1, dtype=float)
    S, S1, S2 = smooth_step(2.0 - np.abs(x1))
    return S, -np.sign(x1) * S1, S2


def _blend_coefficients(value, slope):
    """Coefficients (a, b, c) of ``t^3 (a + b t + c t^2)`` with given value and slope, zero curvature, at t = pi/4."""
    T = JUNCTION
    mat = np.array([[T ** 3, T ** 4, T ** 5],
                    [3 * T ** 2, 4 * T ** 3, 5 * T ** 4],
                    [6 * T, 12 * T ** 2, 20 * T ** 3]])
    return np.linalg.solve(mat, [value, slope, 0.0])


@dataclass(frozen=True)
class ManufacturedReference:
    case: str
    h0: float
    h1_plus: float
    h1_minus: float

    def __post_init__(self):
        lo = _blend_coefficients(self.h0 - self.h1_minus * JUNCTION, self.h1_minus)
        # above the band the blend runs in t = pi - x2, so the slope flips sign
        hi = _blend_coefficients(self.h0 + self.h1_plus * JUNCTION, -self.h1_plus)
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)

    @property
    def jump(self) -> float:
        """Jump of dU/dx2 across the curve (upper minus lower)."""
        return self.h1_plus - self.h1_minus

    def profile(self, x2):
        """U, U' and U'' at the given heights."""
        x2 = np.asarray(x2, dtype=float)
        U = np.zeros_like(x2)
        U1 = np.zeros_like(x2)
        U2 = np.zeros_like(x2)
        up = x2 >= HALF
        lin = np.abs(x2 - HALF) <= JUNCTION
        slope = np.where(up, self.h1_plus, self.h1_minus)
        U[lin] = slope[lin] * (x2[lin] - HALF) + self.h0
        U1[lin] = slope[lin]
        for mask, t, coef, sign in ((~lin & ~up, x2, self._lo, 1.0), (~lin & up, math.pi - x2, self._hi, -1.0)):
            tt = np.clip(t[mask], 0.0, None)
            a, b, c = coef
            U[mask] = tt ** 3 * (a + b * tt + c * tt ** 2)
            U1[mask] = sign * (3 * a * tt ** 2 + 4 * b * tt ** 3 + 5 * c * tt ** 4)
            U2[mask] = 6 * a * tt + 12 * b * tt ** 2 + 20 * c * tt ** 3
        return U, U1, U2

    def u0(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c, _, _ = chi2(x[:, 0])
        U, _, _ = self.profile(x[:, 1])
        return c * U

    def grad_u0(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c, c1, _ = chi2(x[:, 0])
        U, U1, _ = self.profile(x[:, 1])
        return np.stack([c1 * U, c * U1], axis=1)

    def f(self, x) -> np.ndarray:
        """``(-Laplace - i) u0`` away from the curve."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c, _, c2 = chi2(x[:, 0])
        U, _, U2 = self.profile(x[:, 1])
        return -(c2 * U + c * U2) - 1j * c * U


def model_reference(case: str, rho: float = 1.0, mu: float = 0.0, a: float = 0.0, eta: float = 1.0,
                       neumann_odd: bool = False) -> ManufacturedReference:
    """Manufactured reference for one of the four regimes.

    ``neumann_odd`` selects the odd profile (``h0 = 0``, ``h1 = 1`` on both
    sides) for the ``none`` case, which exercises the Neumann cell problem.
    """
    if case == "dirichlet":
        return ManufacturedReference(case, 0.0, 1.0, -1.0)
    if case == "delta":
        k = math.pi / 3 * (rho + mu)
        return ManufacturedReference(case, 1.0, k, -k)
    if case == "robin":
        k = math.pi * a * eta / 3
        return ManufacturedReference(case, 1.0, k, -k)
    if case == "none":
        if neumann_odd:
            return ManufacturedReference(case, 0.0, 1.0, 1.0)
        return ManufacturedReference(case, 1.0, 0.0, 0.0)
    raise ValueError(f"unknown case {case!r}; expected one of {CASES}")
