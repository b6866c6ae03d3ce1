"""Seeded random model geometries used by tests, scripts and scenarios.

All draws go through SplitMix64 so a seed fixes the geometry bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ._rng import SplitMix64
from .tree_flow import TreeManifold, build_tree
from .warped_geometry import FOUR_PI, WarpProfile


@dataclass(frozen=True)
class DumbbellDraw:
    profile: WarpProfile
    r_start: float  # bottom of the first neck
    min_R: float


def psc_dumbbell(seed: int, n: int = 2048, min_R: float = 0.05, max_tries: int = 10_000) -> DumbbellDraw:
    """Random dumbbell b0 + beta r + alpha sin(omega r) with R > min_R.

    The profile starts at the bottom of a neck, crosses two or three
    bulges, and ends on an increasing stretch above every earlier area so
    the flow is proper.
    """
    rng = SplitMix64(seed)
    for _ in range(max_tries):
        b0 = rng.uniform(0.2, 0.5)
        beta = rng.uniform(0.02, 0.15)
        omega = rng.uniform(1.5, 4.0)
        alpha = rng.uniform(1.05, 2.0) * beta / omega
        # neck bottom: cos(omega r) = -beta / (alpha omega) with phi'' > 0
        r_neck = (2 * math.pi - math.acos(-beta / (alpha * omega))) / omega
        r_end = r_neck + rng.uniform(2.2, 3.5) * 2 * math.pi / omega
        p = WarpProfile.dumbbell(b0, beta, alpha, omega, r_neck, r_end, n=n)
        R = p.scalar_curvature()
        if R.min() <= min_R:
            continue
        d1 = p.knot_derivatives()[0]
        if d1[-1] <= 0 or p.phi[-1] <= p.phi[:-1].max():
            continue
        return DumbbellDraw(p, r_neck, float(R.min()))
    raise RuntimeError("no PSC dumbbell found")


def cone(q: float, slope: float, length: float, n: int) -> WarpProfile:
    """Closed-form phi = q + slope r on [0, length] (a dumbbell without wiggle)."""
    return WarpProfile.dumbbell(q, slope, 0.0, 1.0, 0.0, length, n=n)


def necked_segment(seed: int, ratio: float, n: int, max_tries: int = 10_000) -> WarpProfile:
    """PSC dumbbell segment from a neck bottom at r = 0 up to area ratio ``ratio``.

    The segment ends on the increasing stretch before the next bulge.
    """
    rng = SplitMix64(seed)
    target = math.sqrt(ratio)
    for _ in range(max_tries):
        beta = rng.uniform(0.05, 0.4)
        omega = rng.uniform(0.2, 1.5)
        kappa = rng.uniform(1.02, 1.5)
        alpha = kappa * beta / omega
        x = math.acos(-1.0 / kappa)
        b0 = alpha * math.sin(x) + rng.uniform(0.2, 2.0)
        params = dict(b0=b0, beta=beta, alpha=alpha, omega=omega, theta=-x)

        def phi(r):
            return b0 + beta * r + alpha * math.sin(omega * r - x)

        r_bulge = 2 * x / omega
        if phi(r_bulge) < target * phi(0.0) * 1.001:
            continue
        lo, hi = 0.0, r_bulge
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if phi(mid) < target * phi(0.0):
                lo = mid
            else:
                hi = mid
        p = WarpProfile.closed_form("dumbbell", 0.0, hi, n, **params)
        if p.scalar_curvature().min() > 0:
            return p
    raise RuntimeError("no PSC neck segment found")


def _branch_edges(end_phi: float, end_slope: float, ratios, growths, slope_fraction, n):
    """Cone branches glued to a junction with area balance and no W increase."""
    S = sum(ratios)
    edges = []
    for c, (ratio, growth) in enumerate(zip(ratios, growths)):
        w = ratio / S
        q = end_phi * math.sqrt(w)
        v = slope_fraction * end_slope * math.sqrt(w)
        length = q * (math.sqrt(growth) - 1.0) / v
        edges.append({"id": f"branch{c}", "tail": "v1", "head": f"b{c}", "profile": cone(q, v, length, n)})
    return edges


def junction_tree(
    entry_ratios,
    seed: int = 0,
    n: int = 512,
    growth: float = 4.0,
    slope_fraction: float = 0.8,
    systole_floor: bool = True,
) -> TreeManifold:
    """PSC trunk from a minimal sphere of area A0 to a k-way junction.

    Branch c starts with area entry_ratios[c] * A0 (each >= 1 for the
    floor) and grows by ``growth`` in area. Branch slopes satisfy
    sum phi_c'(0)^2 <= phi_trunk'(end)^2, so crossing the junction never
    raises the Willmore energy.
    """
    ratios = [float(x) for x in entry_ratios]
    trunk = necked_segment(seed, sum(ratios), n)
    A0 = float(FOUR_PI * trunk.phi[0] ** 2)
    end_phi = float(trunk.phi[-1])
    end_slope = float(trunk.evaluate(trunk.r_max)[1])
    # rescale entries so the junction balances against the actual end area
    scale = (end_phi**2) / (trunk.phi[0] ** 2 * sum(ratios))
    ratios = [x * scale for x in ratios]
    edges = [{"id": "trunk", "tail": "v0", "head": "v1", "profile": trunk}]
    edges += _branch_edges(end_phi, end_slope, ratios, [growth] * len(ratios), slope_fraction, n)
    vertices = ["v0", "v1"] + [f"b{c}" for c in range(len(ratios))]
    return build_tree({
        "vertices": vertices,
        "edges": edges,
        "root_edge": "trunk",
        "systole_floor": A0 if systole_floor else None,
        "epsilon_junction": 1e-9,
    })


def random_junction_tree(seed: int, k: int = 2, balanced: bool = True, n: int = 512) -> TreeManifold:
    rng = SplitMix64(seed ^ 0x5EED)
    ratios = [1.0] * k if balanced else [rng.uniform(1.0, 3.0) for _ in range(k)]
    return junction_tree(
        ratios,
        seed=seed,
        n=n,
        growth=rng.uniform(2.5, 5.0),
        slope_fraction=rng.uniform(0.3, 1.0),
    )


def necked_trunk_tree(seed: int, n: int = 1024) -> TreeManifold:
    """PSC dumbbell trunk (necks ahead of the front) ending in a Y-junction."""
    draw = psc_dumbbell(seed, n=n)
    trunk = draw.profile
    lo = WarpProfile.closed_form("dumbbell", draw.r_start, trunk.r_max, n, **trunk.params)
    end_phi = float(lo.phi[-1])
    end_slope = float(lo.evaluate(lo.r_max)[1])
    edges = [{"id": "trunk", "tail": "v0", "head": "v1", "profile": lo}]
    edges += _branch_edges(end_phi, end_slope, [1.0, 1.0], [3.0, 3.0], 0.7, n)
    return build_tree({"vertices": ["v0", "v1", "b0", "b1"], "edges": edges,
                       "root_edge": "trunk", "epsilon_junction": 1e-9})


def path_tree(profiles) -> TreeManifold:
    """Chain of edges joined at degree-2 vertices."""
    edges = [{"id": f"e{k}", "tail": f"v{k}", "head": f"v{k + 1}", "profile": p}
             for k, p in enumerate(profiles)]
    return build_tree({"vertices": [f"v{k}" for k in range(len(edges) + 1)],
                       "edges": edges, "root_edge": "e0"})
