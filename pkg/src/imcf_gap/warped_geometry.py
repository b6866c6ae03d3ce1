"""Rotationally symmetric warped products dr^2 + phi(r)^2 g_{S^2}.

Every quantity here refers to the round slice {r = const}: its area, mean
curvature, Gauss curvature, the ambient scalar curvature at that radius,
the Willmore energy int H^2 and the Hawking mass. Lengths are
dimensionless (unit length 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import _textio

FOUR_PI = 4.0 * np.pi
SIXTEEN_PI = 16.0 * np.pi
PINCH_THRESHOLD = 1e-12
MIN_SAMPLED_KNOTS = 8

CLOSED_FORMS = ("flat", "round-sphere", "schwarzschild", "cylinder", "dumbbell")


class GeometryError(ValueError):
    pass


class OutOfRange(GeometryError):
    pass


class DegenerateProfile(GeometryError):
    pass


# -- Schwarzschild in arclength -------------------------------------------

def schwarzschild_arclength(s, m: float = 1.0):
    """Radial arclength from the horizon s = 2m to area radius ``s``."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 2 * m):
        raise OutOfRange("area radius below the horizon")
    root = np.sqrt(s * (s - 2 * m))
    return root + 2 * m * np.log((np.sqrt(s) + np.sqrt(s - 2 * m)) / np.sqrt(2 * m))


def schwarzschild_area_radius(r, m: float = 1.0):
    """Inverse of :func:`schwarzschild_arclength` (vectorised Newton)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise OutOfRange("negative arclength")
    # r(s) ~ s + m log s for large s; start to the right of the root
    s = np.maximum(r + 2 * m, 2 * m * (1 + 1e-12))
    for _ in range(100):
        f = schwarzschild_arclength(s, m) - r
        step = f * np.sqrt(1 - 2 * m / s)
        s_new = np.maximum(s - step, 2 * m + 0.5 * (s - 2 * m))
        if np.all(np.abs(s_new - s) <= 1e-15 * np.maximum(s, 1.0)):
            s = s_new
            break
        s = s_new
    return s


# -- closed forms ----------------------------------------------------------

def _closed_form_eval(kind: str, params: dict, r):
    r = np.asarray(r, dtype=float)
    if kind == "flat":
        return r.copy(), np.ones_like(r), np.zeros_like(r)
    if kind == "round-sphere":
        a = params.get("a", 1.0)
        return a * np.sin(r / a), np.cos(r / a), -np.sin(r / a) / a
    if kind == "cylinder":
        a = params.get("a", 1.0)
        return np.full_like(r, a), np.zeros_like(r), np.zeros_like(r)
    if kind == "schwarzschild":
        m = params.get("m", 1.0)
        s = schwarzschild_area_radius(r, m)
        return s, np.sqrt(1 - 2 * m / s), m / s**2
    if kind == "dumbbell":
        # b0 + beta r + alpha sin(omega r + theta): necks separated by bulges
        b0, beta = params["b0"], params["beta"]
        alpha, omega = params["alpha"], params["omega"]
        theta = params.get("theta", 0.0)
        arg = omega * r + theta
        return (
            b0 + beta * r + alpha * np.sin(arg),
            beta + alpha * omega * np.cos(arg),
            -alpha * omega**2 * np.sin(arg),
        )
    raise GeometryError(f"unknown closed-form profile {kind!r}")


def _second_derivative_weights(x: np.ndarray, x0: float) -> np.ndarray:
    """Lagrange weights of the second derivative at x0 through nodes x."""
    n = len(x)
    dx = x - x0
    vander = np.vander(dx, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[2] = 2.0
    return np.linalg.solve(vander, rhs)


def finite_differences(grid: np.ndarray, phi: np.ndarray):
    """Second-order phi' and phi'' on a (possibly non-uniform) grid.

    Centered three-point stencils in the interior, one-sided second-order
    stencils at the two boundary knots.
    """
    d1 = np.gradient(phi, grid, edge_order=2)
    d2 = np.empty_like(phi)
    h0 = grid[1:-1] - grid[:-2]
    h1 = grid[2:] - grid[1:-1]
    d2[1:-1] = 2 * (h0 * phi[2:] - (h0 + h1) * phi[1:-1] + h1 * phi[:-2]) / (h0 * h1 * (h0 + h1))
    d2[0] = _second_derivative_weights(grid[:4], grid[0]) @ phi[:4]
    d2[-1] = _second_derivative_weights(grid[-4:], grid[-1]) @ phi[-4:]
    return d1, d2


@dataclass(frozen=True, eq=False)
class WarpProfile:
    """Warping function phi(r) on an increasing arclength grid.

    ``kind`` is either ``"sampled"`` (phi known only at the knots; derivatives
    by finite differences, values between knots by linear interpolation) or
    one of :data:`CLOSED_FORMS`, evaluated analytically anywhere in range.
    """

    grid: np.ndarray
    phi: np.ndarray
    kind: str = "sampled"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "phi", phi)
        if grid.ndim != 1 or grid.shape != phi.shape:
            raise GeometryError("grid and phi must be 1-D arrays of equal length")
        if len(grid) < 2:
            raise GeometryError("a profile needs at least two knots")
        if np.any(np.diff(grid) <= 0):
            raise GeometryError("grid must be strictly increasing")
        if self.kind != "sampled" and self.kind not in CLOSED_FORMS:
            raise GeometryError(f"unknown profile kind {self.kind!r}")
        if np.any(~np.isfinite(phi)) or np.any(phi <= 0):
            raise DegenerateProfile("phi must be positive and finite at every knot")

    # constructors ---------------------------------------------------------

    @classmethod
    def closed_form(cls, kind: str, r_min: float, r_max: float, n: int, **params) -> "WarpProfile":
        grid = np.linspace(r_min, r_max, int(n))
        phi, _, _ = _closed_form_eval(kind, params, grid)
        return cls(grid, phi, kind, dict(params))

    @classmethod
    def flat(cls, r_min=1.0, r_max=20.0, n=4096):
        return cls.closed_form("flat", r_min, r_max, n)

    @classmethod
    def cylinder(cls, a=1.0, r_min=0.0, r_max=10.0, n=1024):
        return cls.closed_form("cylinder", r_min, r_max, n, a=a)

    @classmethod
    def round_sphere(cls, a=1.0, r_min=None, r_max=None, n=1024):
        r_min = 0.01 * a if r_min is None else r_min
        r_max = (np.pi - 0.01) * a if r_max is None else r_max
        return cls.closed_form("round-sphere", r_min, r_max, n, a=a)

    @classmethod
    def schwarzschild(cls, m=1.0, s_min=3.0, s_max=40.0, n=8192):
        """Arclength grid covering area radii [s_min, s_max]."""
        r0, r1 = schwarzschild_arclength([s_min, s_max], m)
        return cls.closed_form("schwarzschild", float(r0), float(r1), n, m=m)

    @classmethod
    def dumbbell(cls, b0, beta, alpha, omega, r_min, r_max, n=2048, theta=0.0):
        return cls.closed_form(
            "dumbbell", r_min, r_max, n, b0=b0, beta=beta, alpha=alpha, omega=omega, theta=theta
        )

    @classmethod
    def from_areas(cls, grid, areas) -> "WarpProfile":
        """Sampled profile whose knots carry the given slice areas."""
        return cls(np.asarray(grid, float), np.sqrt(np.asarray(areas, float) / FOUR_PI))

    def sampled(self) -> "WarpProfile":
        """Forget the closed form; keep only the knot values."""
        return WarpProfile(self.grid.copy(), self.phi.copy())

    # evaluation -----------------------------------------------------------

    @property
    def r_min(self) -> float:
        return float(self.grid[0])

    @property
    def r_max(self) -> float:
        return float(self.grid[-1])

    @property
    def is_closed_form(self) -> bool:
        return self.kind != "sampled"

    @property
    def spacing(self) -> float:
        return float(np.max(np.diff(self.grid)))

    def _check_range(self, r):
        r = np.asarray(r, dtype=float)
        slack = 1e-12 * max(1.0, abs(self.r_min), abs(self.r_max))
        if np.any(r < self.r_min - slack) or np.any(r > self.r_max + slack):
            raise OutOfRange(f"r outside [{self.r_min}, {self.r_max}]")
        return np.clip(r, self.r_min, self.r_max)

    def _knot_derivatives(self):
        cached = self.__dict__.get("_fd_cache")
        if cached is None:
            if len(self.grid) < MIN_SAMPLED_KNOTS:
                raise GeometryError(
                    f"sampled profile needs N >= {MIN_SAMPLED_KNOTS} knots for derivatives"
                )
            cached = finite_differences(self.grid, self.phi)
            object.__setattr__(self, "_fd_cache", cached)
        return cached

    def evaluate(self, r):
        """Return (phi, phi', phi'') at r (scalar or array)."""
        r = self._check_range(r)
        if self.is_closed_form:
            return _closed_form_eval(self.kind, self.params, r)
        d1, d2 = self._knot_derivatives()
        return (
            np.interp(r, self.grid, self.phi),
            np.interp(r, self.grid, d1),
            np.interp(r, self.grid, d2),
        )

    def phi_at(self, r):
        r = self._check_range(r)
        if self.is_closed_form:
            return _closed_form_eval(self.kind, self.params, r)[0]
        return np.interp(r, self.grid, self.phi)

    def knot_derivatives(self):
        """(phi', phi'') at the knots, analytic for closed forms."""
        if self.is_closed_form:
            _, d1, d2 = _closed_form_eval(self.kind, self.params, self.grid)
            return d1, d2
        return self._knot_derivatives()

    def areas(self) -> np.ndarray:
        return FOUR_PI * self.phi**2

    def scalar_curvature(self, r=None):
        """Ambient scalar curvature -4 phi''/phi + 2 (1 - phi'^2)/phi^2."""
        if r is None:
            phi = self.phi
            d1, d2 = self.knot_derivatives()
        else:
            phi, d1, d2 = self.evaluate(r)
        return scalar_curvature_from(phi, d1, d2)

    # serialisation ----------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        if self.is_closed_form:
            params = dict(self.params)
            params.update(r_min=self.r_min, r_max=self.r_max, n=len(self.grid))
            return {"kind": self.kind, "params": params}
        return {"kind": "sampled", "grid": self.grid, "phi": self.phi}

    @classmethod
    def from_dict(cls, data: dict) -> "WarpProfile":
        kind = data.get("kind", "sampled")
        if kind == "sampled":
            return cls(np.asarray(data["grid"], float), np.asarray(data["phi"], float))
        params = dict(data.get("params", {}))
        try:
            r_min, r_max, n = params.pop("r_min"), params.pop("r_max"), params.pop("n")
        except KeyError as exc:
            raise GeometryError(f"closed-form profile missing {exc.args[0]!r}") from None
        return cls.closed_form(kind, float(r_min), float(r_max), int(n), **params)

    def to_text(self) -> str:
        return _textio.dumps(self.to_dict())

    @classmethod
    def from_text(cls, text: str) -> "WarpProfile":
        return cls.from_dict(_textio.loads(text))


def scalar_curvature_from(phi, dphi, ddphi):
    return -4.0 * ddphi / phi + 2.0 * (1.0 - dphi**2) / phi**2


@dataclass(frozen=True)
class SliceGeometry:
    r: float
    area: float
    mean_curvature: float
    gauss_curvature: float
    scalar_curvature_ambient: float
    willmore: float
    hawking_mass: float
    # round slices are umbilic
    traceless_A_norm: float = 0.0


def hawking_mass(area, willmore):
    """sqrt(|S|/16 pi) (1 - int H^2 / 16 pi)."""
    return np.sqrt(area / SIXTEEN_PI) * (1.0 - willmore / SIXTEEN_PI)


def slice_area(p: WarpProfile, r: float) -> float:
    return float(FOUR_PI * p.phi_at(r) ** 2)


def slice_geometry(p: WarpProfile, r: float) -> SliceGeometry:
    phi, d1, d2 = (float(v) for v in p.evaluate(r))
    if phi < PINCH_THRESHOLD:
        raise DegenerateProfile(f"pinched slice at r={r!r} (phi={phi:.3e})")
    area = FOUR_PI * phi**2
    willmore = SIXTEEN_PI * d1**2
    return SliceGeometry(
        r=float(r),
        area=area,
        mean_curvature=2.0 * d1 / phi,
        gauss_curvature=1.0 / phi**2,
        scalar_curvature_ambient=float(scalar_curvature_from(phi, d1, d2)),
        willmore=willmore,
        hawking_mass=float(hawking_mass(area, willmore)),
    )
