"""Warped necks over axisymmetric spheres.

A sphere carries the conformally round metric h = a(theta)^2 (dtheta^2 +
sin^2 theta dpsi^2). Given a positive function phi on it, the product
h + phi^2 dt^2 on S^2 x [0, T] has scalar curvature

    R = 2 (K_h - Delta_h phi / phi).

With the stability potential W = K_h - lambda/2 and phi the first
eigenfunction of -Delta_h + W (eigenvalue mu_1), R = lambda + 2 mu_1, so
R >= lambda exactly when mu_1 >= 0.

Discretisation: finite volumes on the vertex grid theta_i = i pi / N.
Dual cells are clipped at the poles (half cells), which is where the
Neumann pole conditions come from. By conformal invariance the Dirichlet
energy is the round one, so the generalized problem is

    S phi + W M phi = mu M phi,   M = diag(a^2 vol),

and it is solved in the symmetric form M^{-1/2} S M^{-1/2} + diag(W).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import _textio
from .warped_geometry import WarpProfile

INVERSE_ITERATION_TOL = 1e-10
INVERSE_ITERATION_MAX = 500
DEFAULT_TOL_EIG = 1e-6


class NeckError(ValueError):
    pass


class NotConverged(NeckError):
    pass


class NonPositiveEigenfunction(NeckError):
    pass


class NonPositiveInput(NeckError):
    pass


class EigenInequalityViolated(NeckError):
    def __init__(self, theta: float, deficit: float):
        super().__init__(f"Delta phi exceeds (K - lambda/2) phi by {deficit:.3e} at theta={theta:.6g}")
        self.theta = theta
        self.deficit = deficit


# -- grid and stencil ---------------------------------------------------------------

def meridian_grid(n_cells: int) -> np.ndarray:
    return np.linspace(0.0, math.pi, n_cells + 1)


def _stencil(n_cells: int):
    """Dual-cell volumes and edge conductances of the round sphere (per 2 pi)."""
    h = math.pi / n_cells
    theta = meridian_grid(n_cells)
    half = np.clip(np.concatenate(([0.0], theta[:-1] + h / 2, [math.pi])), 0.0, math.pi)
    vol = np.cos(half[:-1]) - np.cos(half[1:])
    cond = np.sin(theta[:-1] + h / 2) / h
    return vol, cond


def round_laplacian(f: np.ndarray) -> np.ndarray:
    """Finite-volume Laplacian of the unit round sphere on axisymmetric data."""
    f = np.asarray(f, dtype=float)
    vol, cond = _stencil(len(f) - 1)
    flux = cond * np.diff(f)
    div = np.zeros_like(f)
    div[:-1] += flux
    div[1:] -= flux
    return div / vol


@dataclass(frozen=True, eq=False)
class AxisymSurface:
    """Sphere with metric a(theta)^2 times the round metric.

    ``lam`` is the scalar-curvature floor used in the default stability
    potential K - lam/2; ``potential`` overrides that potential.
    """

    a: np.ndarray
    lam: float = 0.0
    potential: np.ndarray | None = None
    pole_tol: float | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        object.__setattr__(self, "a", a)
        if a.ndim != 1 or len(a) < 5:
            raise NeckError("need at least 4 meridian cells")
        if np.any(~np.isfinite(a)) or np.any(a <= 0):
            raise NeckError("a(theta) must be positive")
        if self.potential is not None:
            w = np.asarray(self.potential, dtype=float)
            if w.shape != a.shape:
                raise NeckError("potential must live on the meridian grid")
            object.__setattr__(self, "potential", w)
        h = self.h
        tol = self.pole_tol if self.pole_tol is not None else 50 * h**2 * float(a.max()) + 1e-12
        # one-sided second-order slopes at both poles
        d0 = (-3 * a[0] + 4 * a[1] - a[2]) / (2 * h)
        d1 = (3 * a[-1] - 4 * a[-2] + a[-3]) / (2 * h)
        if max(abs(d0), abs(d1)) > tol:
            raise NeckError(f"a(theta) is not smooth at the poles (slopes {d0:.3e}, {d1:.3e})")

    @classmethod
    def round(cls, radius: float = 1.0, n_cells: int = 400, lam: float = 0.0, potential=None):
        return cls(np.full(n_cells + 1, float(radius)), lam, potential)

    @classmethod
    def perturbed(cls, coeffs, radius: float = 1.0, n_cells: int = 400, lam: float = 0.0):
        """a = radius * exp(sum_k c_k cos(k theta)), k = 1, 2, ..."""
        theta = meridian_grid(n_cells)
        log_a = np.zeros_like(theta)
        for k, c in enumerate(coeffs, start=1):
            log_a += c * np.cos(k * theta)
        return cls(radius * np.exp(log_a), lam)

    @property
    def n_cells(self) -> int:
        return len(self.a) - 1

    @property
    def h(self) -> float:
        return math.pi / self.n_cells

    @property
    def theta(self) -> np.ndarray:
        return meridian_grid(self.n_cells)

    @property
    def area_weights(self) -> np.ndarray:
        vol, _ = _stencil(self.n_cells)
        return self.a**2 * vol

    @property
    def area(self) -> float:
        return float(2 * math.pi * np.sum(self.area_weights))

    def laplacian(self, f) -> np.ndarray:
        """Delta_h = a^{-2} Delta_round."""
        return round_laplacian(f) / self.a**2

    @property
    def gauss_curvature(self) -> np.ndarray:
        """K = a^{-2} (1 - Delta_round log a)."""
        return (1.0 - round_laplacian(np.log(self.a))) / self.a**2

    @property
    def stability_potential(self) -> np.ndarray:
        if self.potential is not None:
            return self.potential
        return self.gauss_curvature - 0.5 * self.lam

    def to_dict(self) -> dict:
        data = {"a": self.a, "lam": self.lam}
        if self.potential is not None:
            data["potential"] = self.potential
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "AxisymSurface":
        pot = data.get("potential")
        return cls(np.asarray(data["a"], float), float(data.get("lam", 0.0)),
                   None if pot is None else np.asarray(pot, float))

    def to_text(self) -> str:
        return _textio.dumps(self.to_dict())


# -- eigenproblem -------------------------------------------------------------------

def stability_bands(s: AxisymSurface, potential=None):
    """Diagonal and off-diagonal of M^{-1/2} (S + W M) M^{-1/2}."""
    W = s.stability_potential if potential is None else np.asarray(potential, float)
    vol, cond = _stencil(s.n_cells)
    m = s.a**2 * vol
    diag = np.zeros(len(m))
    diag[:-1] += cond
    diag[1:] += cond
    diag = diag / m + W
    off = -cond / np.sqrt(m[:-1] * m[1:])
    return diag, off


def stability_matrix(s: AxisymSurface, potential=None) -> np.ndarray:
    """Dense symmetric form of the discrete stability operator."""
    diag, off = stability_bands(s, potential)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def rayleigh_quotient(s: AxisymSurface, f, potential=None) -> float:
    """(int |grad f|^2 + W f^2) / int f^2 in the discrete inner products."""
    f = np.asarray(f, dtype=float)
    W = s.stability_potential if potential is None else np.asarray(potential, float)
    vol, cond = _stencil(s.n_cells)
    m = s.a**2 * vol
    energy = np.sum(cond * np.diff(f) ** 2) + np.sum(W * m * f**2)
    return float(energy / np.sum(m * f**2))


def stability_first_eigen(
    s: AxisymSurface,
    potential=None,
    tol: float = INVERSE_ITERATION_TOL,
    max_iter: int = INVERSE_ITERATION_MAX,
):
    """Smallest eigenvalue and positive eigenfunction (max = 1) of -Delta_h + W.

    Sturm-sequence bisection brackets mu_1 from below starting at the
    Gershgorin bound; shifted inverse iteration on the symmetric
    tridiagonal form then converges in a few steps.
    """
    diag, off = stability_bands(s, potential)
    n = len(diag)
    radius = np.zeros(n)
    radius[:-1] += np.abs(off)
    radius[1:] += np.abs(off)
    lo = float(np.min(diag - radius))
    hi = float(np.max(diag + radius))
    scale = max(1.0, abs(lo), abs(hi))
    lo -= 1e-6 * scale
    for _ in range(200):
        if hi - lo <= 1e-7 * scale:
            break
        mid = 0.5 * (lo + hi)
        if _count_below(diag, off, mid) == 0:
            lo = mid
        else:
            hi = mid
    shift = lo
    bands = np.zeros((3, n))
    bands[0, 1:] = off
    bands[1] = diag - shift
    bands[2, :-1] = off

    vol, _ = _stencil(s.n_cells)
    sqrt_m = np.sqrt(s.a**2 * vol)
    psi = sqrt_m / np.linalg.norm(sqrt_m)
    mu = math.nan
    for _ in range(max_iter):
        nxt = solve_banded((1, 1), bands, psi)
        nxt /= np.linalg.norm(nxt)
        if nxt @ psi < 0:
            nxt = -nxt
        A_psi = diag * nxt
        A_psi[:-1] += off * nxt[1:]
        A_psi[1:] += off * nxt[:-1]
        mu = float(nxt @ A_psi)
        resid = float(np.linalg.norm(A_psi - mu * nxt))
        psi = nxt
        if resid <= tol * max(1.0, abs(mu)):
            break
    else:
        raise NotConverged(f"inverse iteration residual {resid:.3e} after {max_iter} iterations")
    # the shift sits within 1e-7 of mu_1, so one more solve gains ~7 digits
    psi = solve_banded((1, 1), bands, psi)
    psi /= np.linalg.norm(psi)
    A_psi = diag * psi
    A_psi[:-1] += off * psi[1:]
    A_psi[1:] += off * psi[:-1]
    mu = float(psi @ A_psi)
    phi = psi / sqrt_m
    phi = phi / phi[np.argmax(np.abs(phi))]
    if np.any(phi <= 0):
        raise NonPositiveEigenfunction("first eigenfunction changes sign")
    return mu, phi


def _count_below(diag, off, x) -> int:
    """Number of eigenvalues below x (negative pivots of T - x I)."""
    count, d = 0, 1.0
    tiny = np.finfo(float).tiny
    for i in range(len(diag)):
        d = diag[i] - x - (off[i - 1] ** 2 / d if i else 0.0)
        if d == 0.0:
            d = -tiny
        if d < 0:
            count += 1
    return count


# -- neck metric ----------------------------------------------------------------------

def warped_scalar_curvature(s: AxisymSurface, phi) -> np.ndarray:
    """R of h + phi^2 dt^2: 2 (K_h - Delta_h phi / phi)."""
    phi = np.asarray(phi, dtype=float)
    return 2.0 * (s.gauss_curvature - s.laplacian(phi) / phi)


@dataclass(frozen=True, eq=False)
class NeckMetric:
    surface: AxisymSurface
    phi: np.ndarray
    length: float
    lam: float
    R: np.ndarray
    tol_eig: float = DEFAULT_TOL_EIG
    notes: list = field(default_factory=list)

    @property
    def min_R(self) -> float:
        return float(np.min(self.R))

    def is_round(self, tol: float = 1e-12) -> bool:
        a = self.surface.a
        return bool(np.ptp(a) <= tol * a.max() and np.ptp(self.phi) <= tol * self.phi.max())

    def to_warp_profile(self, n: int = 1024) -> WarpProfile:
        """Round necks are cylinders dr^2 + a^2 g_{S^2} of the neck's length."""
        if not self.is_round():
            raise NeckError("only round necks convert to a warped profile")
        return WarpProfile.cylinder(a=float(self.surface.a[0]), r_min=0.0, r_max=self.length, n=n)

    def to_dict(self) -> dict:
        return {"surface": self.surface.to_dict(), "phi": self.phi, "length": self.length,
                "lam": self.lam, "R": self.R, "tol_eig": self.tol_eig}

    def to_text(self) -> str:
        return _textio.dumps(self.to_dict())


def build_neck(s: AxisymSurface, phi1, lam: float, T_len: float, tol_eig: float = DEFAULT_TOL_EIG) -> NeckMetric:
    """Warped neck h + phi1^2 dt^2 over s, certified to have R >= lam - tol_eig."""
    phi1 = np.asarray(phi1, dtype=float)
    if phi1.shape != s.a.shape:
        raise NeckError("phi1 must live on the meridian grid")
    if np.any(phi1 <= 0):
        raise NonPositiveEigenfunction("phi1 must be positive")
    if not T_len > 0:
        raise NonPositiveInput("neck length must be positive")
    scale = phi1 / np.max(phi1)
    deficit = s.laplacian(scale) - (s.gauss_curvature - 0.5 * lam) * scale
    k = int(np.argmax(deficit))
    if deficit[k] > tol_eig:
        raise EigenInequalityViolated(float(s.theta[k]), float(deficit[k]))
    R = warped_scalar_curvature(s, phi1)
    if R.min() < lam - tol_eig:
        k = int(np.argmin(R))
        raise EigenInequalityViolated(float(s.theta[k]), float(lam - R[k]))
    return NeckMetric(s, phi1, float(T_len), float(lam), R, tol_eig)


@dataclass(frozen=True)
class BarrierLength:
    length: float
    crossing_bound: float
    twice_area: float
    holds: bool
    exponent: int


def barrier_length(A0: float, c0: float, n: int = 2) -> BarrierLength:
    """Neck length 16 A0 / c0 and the crossing-area bound c0 * 2 floor(T/4).

    ``holds`` reports whether the bound exceeds 2 A0. ``n`` is the exponent
    of the area-density bound c0 r^n; it is recorded, the arithmetic above
    does not use it.
    """
    if not (A0 > 0 and c0 > 0):
        raise NonPositiveInput("A0 and c0 must be positive")
    T = 16.0 * A0 / c0
    bound = c0 * 2 * math.floor(T / 4)
    return BarrierLength(T, bound, 2.0 * A0, bound > 2.0 * A0, int(n))
