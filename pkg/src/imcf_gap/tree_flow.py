"""Weak IMCF on a rooted tree of warped edges.

Each edge is a warped segment dr^2 + phi(r)^2 g_{S^2}; at an internal
vertex the terminal sphere of the incoming edge is glued to the initial
spheres of the outgoing edges (zero-thickness junction, area balanced).
The front is a cut of the tree, one round sphere per edge it meets, and
every sphere is a connected component.

Areas add over disjoint subtrees, so the least-area cut beyond a point
decomposes edge by edge. A bottom-up pass computes, for each knot, the
smallest total area of a cut at or beyond that knot:

    cut(e, i) = min( min_{j >= i} A_e(j),  sum_{c child of e} cut(c, 0) )

and a top-down pass turns it into arrival times. Component k is born at
tau_k and its area is cut_k(0) * exp(t - tau_k), so the total area is
exp(t) * A0 across jumps and junction crossings.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _textio
from .imcf_core import NonProperError, NonProperWarning, landing_slice
from .monotonicity_audit import FlowTrace
from .warped_geometry import (
    FOUR_PI,
    PINCH_THRESHOLD,
    SIXTEEN_PI,
    WarpProfile,
    hawking_mass,
    scalar_curvature_from,
)

DEFAULT_JUNCTION_TOLERANCE = 1e-6
MAX_EDGES = 32


class TreeSpecError(ValueError):
    pass


class NotATree(TreeSpecError):
    pass


class JunctionMismatch(TreeSpecError):
    def __init__(self, vertex, rel_error: float):
        super().__init__(f"junction at vertex {vertex!r}: relative area mismatch {rel_error:.6g}")
        self.vertex = vertex
        self.rel_error = rel_error


class SystoleFloorViolated(TreeSpecError):
    pass


class PinchedEdge(ValueError):
    pass


class SplittingBoundViolated(AssertionError):
    pass


@dataclass(frozen=True, eq=False)
class TreeEdge:
    id: str
    tail: str
    head: str
    profile: WarpProfile

    @property
    def length(self) -> float:
        return self.profile.r_max - self.profile.r_min

    @property
    def start_area(self) -> float:
        return float(FOUR_PI * self.profile.phi[0] ** 2)

    @property
    def end_area(self) -> float:
        return float(FOUR_PI * self.profile.phi[-1] ** 2)


@dataclass(frozen=True, eq=False)
class TreeManifold:
    """Rooted metric tree, edges oriented away from the root.

    The initial slice is the first knot of ``root_edge``. When
    ``systole_floor`` is set every slice area of the tree must be at
    least that value.
    """

    vertices: tuple
    edges: tuple
    root_edge: str
    junction_tolerance: float = DEFAULT_JUNCTION_TOLERANCE
    systole_floor: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))
        _validate(self)

    # topology ---------------------------------------------------------------

    def edge(self, edge_id: str) -> TreeEdge:
        return self._by_id()[edge_id]

    def _by_id(self) -> dict:
        cached = self.__dict__.get("_index")
        if cached is None:
            cached = {e.id: e for e in self.edges}
            object.__setattr__(self, "_index", cached)
        return cached

    def children(self, edge_id: str) -> list[str]:
        head = self.edge(edge_id).head
        return [e.id for e in self.edges if e.tail == head]

    def parent(self, edge_id: str) -> str | None:
        tail = self.edge(edge_id).tail
        for e in self.edges:
            if e.head == tail:
                return e.id
        return None

    def is_leaf(self, edge_id: str) -> bool:
        return not self.children(edge_id)

    def bfs_order(self) -> list[str]:
        order, queue = [], deque([self.root_edge])
        while queue:
            e = queue.popleft()
            order.append(e)
            queue.extend(self.children(e))
        return order

    # geometry ---------------------------------------------------------------

    @property
    def min_slice_area(self) -> float:
        return float(min(FOUR_PI * np.min(e.profile.phi) ** 2 for e in self.edges))

    @property
    def h(self) -> float:
        """Largest grid spacing over all edges."""
        return max(e.profile.spacing for e in self.edges)

    @property
    def initial_area(self) -> float:
        return self.edge(self.root_edge).start_area

    # serialisation ----------------------------------------------------------

    def to_dict(self) -> dict:
        data = {
            "vertices": list(self.vertices),
            "edges": [
                {"id": e.id, "tail": e.tail, "head": e.head, "length": e.length,
                 "profile": e.profile.to_dict()}
                for e in self.edges
            ],
            "root_edge": self.root_edge,
            "epsilon_junction": self.junction_tolerance,
        }
        if self.systole_floor is not None:
            data["systole_floor"] = self.systole_floor
        return data

    def to_text(self) -> str:
        return _textio.dumps(self.to_dict())


def _validate(tree: TreeManifold) -> None:
    ids = [e.id for e in tree.edges]
    if not tree.edges:
        raise NotATree("a tree needs at least one edge")
    if len(tree.edges) > MAX_EDGES:
        raise TreeSpecError(f"at most {MAX_EDGES} edges are supported")
    if len(set(ids)) != len(ids):
        raise TreeSpecError("duplicate edge ids")
    verts = set(tree.vertices)
    if len(verts) != len(tree.vertices):
        raise TreeSpecError("duplicate vertex ids")
    for e in tree.edges:
        if e.tail not in verts or e.head not in verts:
            raise TreeSpecError(f"edge {e.id!r} references an unknown vertex")
        if e.tail == e.head:
            raise NotATree(f"edge {e.id!r} is a loop")
    if tree.root_edge not in ids:
        raise TreeSpecError(f"root edge {tree.root_edge!r} not among the edges")
    used = {e.tail for e in tree.edges} | {e.head for e in tree.edges}
    if used != verts:
        raise TreeSpecError(f"vertices of degree 0: {sorted(map(str, verts - used))}")
    if len(tree.edges) != len(verts) - 1:
        raise NotATree(f"{len(tree.edges)} edges on {len(verts)} vertices: not a tree")
    root = tree._by_id()[tree.root_edge]
    incoming: dict = {}
    for e in tree.edges:
        incoming.setdefault(e.head, []).append(e.id)
    if any(len(v) > 1 for v in incoming.values()):
        raise NotATree("a vertex has two incoming edges (cycle or bad orientation)")
    if root.tail in incoming:
        raise NotATree("the root edge has an incoming edge")
    if sum(1 for e in tree.edges if e.tail == root.tail) != 1:
        raise NotATree("the root vertex must carry only the root edge")
    seen = set(tree.bfs_order())
    if seen != set(ids):
        raise NotATree("edges not reachable from the root edge")

    tol = tree.junction_tolerance
    for e in tree.edges:
        kids = [c for c in tree.edges if c.tail == e.head]
        if not kids:
            continue
        total = sum(c.start_area for c in kids)
        rel = abs(total - e.end_area) / e.end_area
        if rel > tol:
            raise JunctionMismatch(e.head, rel)
    if tree.systole_floor is not None:
        floor = float(tree.systole_floor)
        if floor <= 0:
            raise TreeSpecError("systole_floor must be positive")
        if tree.min_slice_area < floor * (1 - 1e-12):
            raise SystoleFloorViolated(
                f"min slice area {tree.min_slice_area:.6g} below the floor {floor:.6g}"
            )


def build_tree(spec: dict) -> TreeManifold:
    """Validated tree from a structured spec.

    ``spec`` has ``vertices``, ``edges`` (each with ``tail``, ``head``,
    ``profile`` and optionally ``id`` and ``length``), ``root_edge`` (id or
    index) and optional ``systole_floor`` and ``epsilon_junction``.
    """
    try:
        vertices = [str(v) for v in spec["vertices"]]
        raw_edges = spec["edges"]
    except (KeyError, TypeError) as exc:
        raise TreeSpecError(f"tree spec missing {exc}") from None
    edges = []
    for k, item in enumerate(raw_edges):
        try:
            profile = item["profile"]
            if not isinstance(profile, WarpProfile):
                profile = WarpProfile.from_dict(profile)
            edge = TreeEdge(str(item.get("id", f"e{k}")), str(item["tail"]), str(item["head"]), profile)
        except KeyError as exc:
            raise TreeSpecError(f"edge {k} missing {exc}") from None
        if "length" in item:
            stated = float(item["length"])
            if abs(stated - edge.length) > 1e-9 * max(1.0, stated):
                raise TreeSpecError(
                    f"edge {edge.id!r}: length {stated} disagrees with its grid ({edge.length})"
                )
        edges.append(edge)
    root = spec.get("root_edge", 0)
    if isinstance(root, int) and not isinstance(root, bool):
        if not 0 <= root < len(edges):
            raise TreeSpecError(f"root edge index {root} out of range")
        root = edges[root].id
    floor = spec.get("systole_floor")
    return TreeManifold(
        vertices=tuple(vertices),
        edges=tuple(edges),
        root_edge=str(root),
        junction_tolerance=float(spec.get("epsilon_junction", DEFAULT_JUNCTION_TOLERANCE)),
        systole_floor=None if floor is None else float(floor),
    )


# -- flow ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EdgeFlow:
    """Arrival times on one edge: u = tau + log(cut / cut[0])."""

    edge: str
    r: np.ndarray
    area: np.ndarray
    cut: np.ndarray  # least total area of a cut at or beyond each knot
    u: np.ndarray
    tau: float
    hosts_front: bool

    @property
    def exit_time(self) -> float:
        return float(self.u[-1])


@dataclass(frozen=True)
class TreeEvent:
    time: float
    kind: str  # "hull", "jump" or "junction"
    old_cut: tuple  # ((edge, r), ...)
    new_cut: tuple
    area_before: float
    area_after: float

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "kind": self.kind,
            "payload": {
                "old_cut": [list(p) for p in self.old_cut],
                "new_cut": [list(p) for p in self.new_cut],
                "area_before": self.area_before,
                "area_after": self.area_after,
            },
        }


@dataclass(frozen=True, eq=False)
class ComponentTrace:
    id: int
    birth: float
    parent: int | None
    t: np.ndarray
    area: np.ndarray
    willmore: np.ndarray
    positions: tuple  # (edge, r) per sample


@dataclass(frozen=True, eq=False)
class TreeFlowResult:
    tree: TreeManifold
    flows: dict
    A0: float
    t_end: float
    T_split: float
    traces: list
    jump_events: list
    trace: FlowTrace
    proper: bool = True
    notes: list = field(default_factory=list)

    @property
    def h(self) -> float:
        return self.tree.h

    def active_edges(self, t: float) -> list[str]:
        """Edges carrying a front sphere at time t (right-continuous)."""
        out = []
        for eid in self.tree.bfs_order():
            fl = self.flows[eid]
            if not fl.hosts_front or t < fl.tau:
                continue
            if t < fl.exit_time or (self.tree.is_leaf(eid) and t <= fl.exit_time):
                out.append(eid)
        return out

    def n_components(self, t: float) -> int:
        return len(self.active_edges(t))

    def chi(self, t: float) -> int:
        return 2 * self.n_components(t)

    def front(self, t: float) -> list[tuple[str, float]]:
        return [(eid, float(_positions(self.tree.edge(eid).profile, self.flows[eid], np.array([t]))[0]))
                for eid in self.active_edges(t)]

    def total_area(self, t: float) -> float:
        return float(sum(FOUR_PI * self.tree.edge(e).profile.phi_at(r) ** 2 for e, r in self.front(t)))

    def events_text(self) -> str:
        lines = [json.dumps(ev.to_dict(), sort_keys=True) for ev in self.jump_events]
        return "\n".join(lines) + ("\n" if lines else "")

    def components_csv(self) -> str:
        f = _textio.fmt_float
        rows = ["component,parent,birth,t,edge,r,area,willmore"]
        for c in self.traces:
            parent = "" if c.parent is None else str(c.parent)
            for k in range(len(c.t)):
                edge, r = c.positions[k]
                rows.append(",".join([str(c.id), parent, f(c.birth), f(c.t[k]), edge, f(r),
                                      f(c.area[k]), f(c.willmore[k])]))
        return "\n".join(rows) + "\n"


def _edge_flows(tree: TreeManifold) -> dict:
    order = tree.bfs_order()
    knots = {}
    for eid in order:
        p = tree.edge(eid).profile
        if np.min(p.phi) < PINCH_THRESHOLD:
            raise PinchedEdge(f"edge {eid!r} pinches (phi < {PINCH_THRESHOLD})")
        knots[eid] = (p.grid, FOUR_PI * p.phi**2)
    cut = {}
    for eid in reversed(order):
        _, A = knots[eid]
        B = A.copy()
        kids = tree.children(eid)
        if kids:
            B[-1] = min(A[-1], sum(cut[c][0] for c in kids))
        cut[eid] = np.minimum.accumulate(B[::-1])[::-1]
    flows, tau = {}, {tree.root_edge: 0.0}
    for eid in order:
        r, A = knots[eid]
        u = tau[eid] + np.log(cut[eid] / cut[eid][0])
        u[0] = tau[eid]
        hosts = bool(u[-1] > tau[eid]) or tree.is_leaf(eid)
        flows[eid] = EdgeFlow(eid, r, A, cut[eid], u, tau[eid], hosts)
        for c in tree.children(eid):
            tau[c] = float(u[-1])
    return flows


def _solve_phi(p: WarpProfile, lo, hi, phi_target, iters=64):
    """Vectorised bisection for phi(r) = phi_target with phi(lo) <= target <= phi(hi)."""
    lo, hi = lo.copy(), hi.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = p.phi_at(mid) < phi_target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _positions(p: WarpProfile, fl: EdgeFlow, ts: np.ndarray) -> np.ndarray:
    """Post-jump front radius on an edge at times ts, with exact slice area."""
    ts = np.asarray(ts, dtype=float)
    n = len(fl.r)
    i = np.clip(np.searchsorted(fl.u, ts, side="right") - 1, 0, n - 1)
    on_knot = fl.u[i] == ts
    out = np.empty_like(ts)
    for k in np.flatnonzero(on_knot):
        out[k] = landing_slice(p, fl.r, int(i[k]))
    rest = ~on_knot
    if np.any(rest):
        cell = np.clip(i[rest], 0, n - 2)
        target = np.sqrt(fl.cut[0] * np.exp(ts[rest] - fl.tau) / FOUR_PI)
        out[rest] = _cell_root(p, fl.r, cell, target)
    return out


def _cell_root(p: WarpProfile, r, cell, phi_target):
    """Point in cell [r_i, r_i+1] where phi equals phi_target."""
    lo, hi = r[cell], r[cell + 1]
    if p.is_closed_form:
        return _solve_phi(p, lo, hi, phi_target)
    # sampled: phi is linear between knots
    p0, p1 = p.phi[cell], p.phi[cell + 1]
    w = np.clip((phi_target - p0) / np.where(p1 == p0, 1.0, p1 - p0), 0.0, 1.0)
    return lo + w * (hi - lo)


def _pre_jump_position(p: WarpProfile, fl: EdgeFlow, t: float) -> float:
    """Front on the edge just before time t (boundary of {u < t})."""
    j = int(np.searchsorted(fl.u, t, side="left"))
    if j == 0:
        return float(fl.r[0])
    if j < len(fl.r) and fl.u[j] == t and fl.area[j] == fl.cut[j]:
        # the front reaches knot j exactly at time t
        return float(fl.r[j])
    cell = np.array([min(j - 1, len(fl.r) - 2)])
    target = np.array([math.sqrt(fl.cut[0] * math.exp(t - fl.tau) / FOUR_PI)])
    return float(_cell_root(p, fl.r, cell, target)[0])


def _successors(tree: TreeManifold, flows: dict, eid: str) -> list[str]:
    """Front-carrying edges that take over when the front leaves eid."""
    out = []
    for c in tree.children(eid):
        if flows[c].hosts_front:
            out.append(c)
        else:
            out.extend(_successors(tree, flows, c))
    return out


def _same_point(a: float, b: float, p: WarpProfile) -> bool:
    """Equal up to rounding of the junction balance (1e-9 of a grid cell)."""
    return abs(a - b) <= 1e-9 * p.spacing


def _slice_area(p: WarpProfile, r: float) -> float:
    return float(FOUR_PI * p.phi_at(r) ** 2)


def _events(tree: TreeManifold, flows: dict, t_end: float) -> list[TreeEvent]:
    events = []
    for eid in tree.bfs_order():
        fl = flows[eid]
        if not (fl.hosts_front or eid == tree.root_edge):
            continue
        p = tree.edge(eid).profile
        inside = fl.cut < fl.area
        # plateaus of the cut function strictly inside the edge
        k = 0
        while k < len(fl.r) - 1:
            if not inside[k]:
                k += 1
                continue
            j = k
            while j + 1 < len(fl.r) and inside[j + 1]:
                j += 1
            if j + 1 >= len(fl.r):
                break
            t = float(fl.u[j + 1])
            if t <= t_end:
                a = float(fl.r[0]) if k == 0 else _pre_jump_position(p, fl, t)
                b = landing_slice(p, fl.r, j + 1)
                kind = "hull" if (k == 0 and eid == tree.root_edge) else "jump"
                if k > 0 or eid == tree.root_edge:
                    events.append(TreeEvent(t, kind, ((eid, a),), ((eid, b),),
                                            _slice_area(p, a), _slice_area(p, b)))
            k = j + 1
        kids = tree.children(eid)
        if not kids or fl.exit_time > t_end:
            continue
        t = fl.exit_time
        a = _pre_jump_position(p, fl, t) if fl.hosts_front else float(fl.r[0])
        new = []
        for c in _successors(tree, flows, eid):
            cp = tree.edge(c).profile
            new.append((c, float(_positions(cp, flows[c], np.array([t]))[0])))
        at_vertex = _same_point(a, float(fl.r[-1]), p)
        entries = all(
            c in kids and _same_point(r, float(flows[c].r[0]), tree.edge(c).profile) for c, r in new
        )
        kind = "junction" if (at_vertex and entries) else "jump"
        after = sum(_slice_area(tree.edge(c).profile, r) for c, r in new)
        events.append(TreeEvent(t, kind, ((eid, a),), tuple(new), _slice_area(p, a), after))
    events.sort(key=lambda ev: (ev.time, ev.old_cut[0][0]))
    return events


def solve_tree_flow(tree: TreeManifold, t_max: float, strict: bool = False) -> TreeFlowResult:
    """Weak IMCF from the initial slice at the tail of the root edge up to t_max.

    The computed range ends early when a front reaches the end of a leaf
    edge. Leaves whose least cut stops growing at the grid end make the
    flow non-proper (warning, or NonProperError if ``strict``).
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    flows = _edge_flows(tree)
    leaves = [e for e in tree.bfs_order() if tree.is_leaf(e)]
    proper = all(flows[e].cut[-1] > flows[e].cut[-2] for e in leaves)
    notes = []
    if not proper:
        msg = "a leaf's least cut saturates: no proper solution on this tree"
        if strict:
            raise NonProperError(msg)
        warnings.warn(msg, NonProperWarning, stacklevel=2)
        notes.append(msg)
    t_end = min(float(t_max), min(flows[e].exit_time for e in leaves))
    A0 = float(flows[tree.root_edge].cut[0])

    hosting = [e for e in tree.bfs_order() if flows[e].hosts_front]
    times = np.unique(np.concatenate([[0.0]] + [flows[e].u for e in hosting] + [[t_end]]))
    times = times[times <= t_end]

    events = _events(tree, flows, t_end)
    event_times = np.array(sorted({ev.time for ev in events}))

    # component identity: one sphere per hosting edge; a lone successor
    # continues its predecessor's component
    comp_of, parent_of, birth_of = {}, {}, {}
    next_id = 0
    for eid in tree.bfs_order():
        if not flows[eid].hosts_front:
            continue
        anc = tree.parent(eid)
        while anc is not None and not flows[anc].hosts_front:
            anc = tree.parent(anc)
        if anc is None:
            comp_of[eid], parent_of[next_id], birth_of[next_id] = next_id, None, 0.0
            next_id += 1
            continue
        succ = _successors(tree, flows, anc)
        if len(succ) == 1:
            comp_of[eid] = comp_of[anc]
        else:
            comp_of[eid] = next_id
            parent_of[next_id] = comp_of[anc]
            birth_of[next_id] = flows[eid].tau
            next_id += 1

    n = len(times)
    area = np.zeros(n)
    willmore = np.zeros(n)
    int_R = np.zeros(n)
    count = np.zeros(n, dtype=int)
    per_comp: dict = {}
    for eid in hosting:
        fl = flows[eid]
        p = tree.edge(eid).profile
        end_ok = times <= fl.exit_time if tree.is_leaf(eid) else times < fl.exit_time
        mask = (times >= fl.tau) & end_ok
        if not np.any(mask):
            continue
        ts = times[mask]
        rs = _positions(p, fl, ts)
        phi, d1, d2 = p.evaluate(rs)
        a = FOUR_PI * phi**2
        w = SIXTEEN_PI * d1**2
        area[mask] += a
        willmore[mask] += w
        int_R[mask] += scalar_curvature_from(phi, d1, d2) * a
        count[mask] += 1
        bucket = per_comp.setdefault(comp_of[eid], [])
        bucket.extend(zip(ts, a, w, [(eid, float(r)) for r in rs]))

    # swept scalar-curvature floor: every knot with arrival time <= t
    u_all, R_all = [], []
    for eid in tree.bfs_order():
        fl = flows[eid]
        u_all.append(fl.u)
        R_all.append(tree.edge(eid).profile.scalar_curvature())
    u_all, R_all = np.concatenate(u_all), np.concatenate(R_all)
    order = np.argsort(u_all, kind="stable")
    u_sorted, R_cummin = u_all[order], np.minimum.accumulate(R_all[order])
    last = np.searchsorted(u_sorted, times, side="right") - 1
    min_R = R_cummin[np.maximum(last, 0)]

    is_jump = np.isin(times, event_times)
    trace = FlowTrace(
        t=times,
        total_area=area,
        chi=2 * count,
        willmore=willmore,
        min_R=min_R,
        hawking=hawking_mass(area, willmore),
        is_jump=is_jump,
        n_components=count,
        int_R=int_R,
    )
    traces = []
    for cid in sorted(per_comp):
        rows = sorted(per_comp[cid], key=lambda row: row[0])
        traces.append(ComponentTrace(
            id=cid,
            birth=birth_of[cid],
            parent=parent_of[cid],
            t=np.array([row[0] for row in rows]),
            area=np.array([row[1] for row in rows]),
            willmore=np.array([row[2] for row in rows]),
            positions=tuple(row[3] for row in rows),
        ))
    split = np.flatnonzero(count >= 2)
    T_split = float(times[split[0]]) if split.size else math.inf
    notes.append("chi is right-continuous: at a junction crossing it takes the post-crossing count")
    return TreeFlowResult(
        tree=tree,
        flows=flows,
        A0=A0,
        t_end=float(t_end),
        T_split=T_split,
        traces=traces,
        jump_events=events,
        trace=trace,
        proper=proper,
        notes=notes,
    )


def splitting_time(result: TreeFlowResult) -> float:
    """First time the front has at least two components (inf if never).

    With a systole floor every component has area >= floor, so at the split
    exp(T) * A0 >= k * floor for the k components born there.
    """
    T = result.T_split
    floor = result.tree.systole_floor
    if floor is not None and math.isfinite(T):
        k = result.n_components(T)
        bound = math.log(k * floor / result.A0) - 2 * result.h
        if T < bound:
            raise SplittingBoundViolated(f"T_split={T:.12g} below the area bound {bound:.12g}")
    return T


def chi_of(result: TreeFlowResult, t: float) -> int:
    """Euler characteristic 2 * (number of components) at time t."""
    if not (0.0 <= t <= result.t_end):
        raise ValueError(f"t={t} outside the computed range [0, {result.t_end}]")
    return result.chi(t)
