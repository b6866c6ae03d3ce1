import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import brute_min_cut

from imcf_gap.generators import cone, junction_tree, necked_trunk_tree, path_tree, random_junction_tree
from imcf_gap.imcf_core import NonProperError, NonProperWarning, solve_weak_imcf
from imcf_gap.tree_flow import (
    JunctionMismatch,
    NotATree,
    SystoleFloorViolated,
    TreeSpecError,
    build_tree,
    chi_of,
    solve_tree_flow,
    splitting_time,
)
from imcf_gap.warped_geometry import WarpProfile


@st.composite
def sampled_trees(draw):
    """Small random trees of sampled edges with balanced junctions."""
    n = draw(st.integers(8, 12))
    area = st.floats(1.0, 50.0)
    vertices, edges = ["v0", "v1"], []

    def add_edge(eid, tail, head, first_area):
        A = np.array(draw(st.lists(area, min_size=n, max_size=n)))
        if first_area is not None:
            A[0] = first_area
        grid = np.linspace(0.0, 1.0, n)
        edges.append({"id": eid, "tail": tail, "head": head, "profile": WarpProfile.from_areas(grid, A)})
        return A

    def children(parent_id, head, end_area, depth):
        k = draw(st.integers(0 if depth > 0 else 1, 2))
        if k == 0:
            return
        w = np.array(draw(st.lists(st.floats(0.2, 1.0), min_size=k, max_size=k)))
        w /= w.sum()
        for c in range(k):
            cid, vid = f"{parent_id}.{c}", f"{head}.{c}"
            vertices.append(vid)
            A = add_edge(cid, head, vid, end_area * w[c])
            if depth == 0:
                children(cid, vid, A[-1], depth + 1)

    A_root = add_edge("root", "v0", "v1", None)
    children("root", "v1", A_root[-1], 0)
    return build_tree({"vertices": vertices, "edges": edges, "root_edge": "root"})


def _solve(tree, t_max=50.0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonProperWarning)
        return solve_tree_flow(tree, t_max)


@given(sampled_trees())
def test_least_cut_matches_enumeration(tree):
    res = _solve(tree)
    for eid in tree.bfs_order():
        cut = res.flows[eid].cut
        for i in range(0, len(cut), 3):
            assert cut[i] == pytest.approx(brute_min_cut(tree, eid, i), rel=1e-14)


@given(sampled_trees())
def test_tree_arrival_times_are_monotone_and_continuous(tree):
    res = _solve(tree)
    for eid in tree.bfs_order():
        fl = res.flows[eid]
        assert np.all(np.diff(fl.u) >= 0)
        for c in tree.children(eid):
            assert res.flows[c].tau == fl.u[-1]
    assert res.trace.n_components.min() >= 1


def test_single_edge_tree_matches_line_flow():
    p = WarpProfile.dumbbell(0.4, 0.08, 0.05, 2.5, 0.0, 14.0, n=800)
    res = _solve(path_tree([p]), t_max=100.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonProperWarning)
        sol = solve_weak_imcf(p, 0.0)
    assert np.array_equal(res.flows["e0"].u, sol.u)


@pytest.mark.parametrize("k", [2, 3, 4])
@pytest.mark.parametrize("seed", [0, 7])
def test_balanced_split_happens_at_log_k(k, seed):
    tree = random_junction_tree(seed, k=k, balanced=True)
    res = solve_tree_flow(tree, 10.0)
    assert res.T_split == pytest.approx(math.log(k), abs=1e-12)
    assert splitting_time(res) == res.T_split
    assert res.n_components(res.T_split) == k
    assert chi_of(res, res.T_split) == 2 * k
    assert chi_of(res, 0.5 * res.T_split) == 2


@pytest.mark.parametrize("seed", range(4))
def test_area_law_and_components_on_junction_trees(seed):
    tree = random_junction_tree(seed, k=2, balanced=False)
    res = solve_tree_flow(tree, 10.0)
    tr = res.trace
    assert np.max(np.abs(tr.total_area / (res.A0 * np.exp(tr.t)) - 1)) <= 2 * res.h
    trunk = [c for c in res.traces if c.parent is None]
    kids = [c for c in res.traces if c.parent is not None]
    assert len(trunk) == 1 and len(kids) == 2
    assert all(c.parent == trunk[0].id and c.birth == pytest.approx(res.T_split) for c in kids)
    for t in (0.1, 0.5 * (res.T_split + res.t_end)):
        assert res.total_area(t) == pytest.approx(res.A0 * math.exp(t), rel=2 * res.h)


def test_necked_trunk_records_jumps_and_a_junction():
    res = solve_tree_flow(necked_trunk_tree(1), 10.0)
    kinds = [ev.kind for ev in res.jump_events]
    assert "jump" in kinds and kinds[-1] == "junction"
    for ev in res.jump_events:
        assert ev.area_after == pytest.approx(ev.area_before, rel=2 * res.h)
    lines = res.events_text().splitlines()
    assert len(lines) == len(kinds)


def test_outputs_are_deterministic():
    a = solve_tree_flow(random_junction_tree(2, k=3), 10.0)
    b = solve_tree_flow(random_junction_tree(2, k=3), 10.0)
    assert a.trace.to_csv() == b.trace.to_csv()
    assert a.components_csv() == b.components_csv()
    assert a.events_text() == b.events_text()


def _flat(r0, r1, n=32):
    return WarpProfile.flat(r0, r1, n=n)


def test_malformed_trees_rejected():
    e = lambda i, t, h: {"id": i, "tail": t, "head": h, "profile": _flat(1, 2)}
    with pytest.raises(NotATree):
        build_tree({"vertices": ["a", "b"], "edges": [e("x", "a", "b"), e("y", "b", "a")], "root_edge": "x"})
    with pytest.raises(NotATree):
        build_tree({"vertices": ["a", "b", "c"], "edges": [e("x", "a", "b"), e("y", "b", "c"), e("z", "c", "b")],
                    "root_edge": "x"})
    with pytest.raises(NotATree):
        build_tree({"vertices": ["a"], "edges": [e("x", "a", "a")], "root_edge": "x"})
    with pytest.raises(TreeSpecError):
        build_tree({"vertices": ["a", "b"], "edges": [e("x", "a", "b")], "root_edge": "nope"})
    with pytest.raises(TreeSpecError):
        build_tree({"vertices": ["a", "b"], "edges": [{**e("x", "a", "b"), "length": 5.0}], "root_edge": "x"})


def test_junction_mismatch_and_floor():
    trunk = cone(1.0, 0.5, 2.0, 32)
    end_phi = float(trunk.phi[-1])
    good = end_phi / math.sqrt(2)
    spec = lambda q: {
        "vertices": ["a", "b", "c", "d"],
        "edges": [
            {"id": "t", "tail": "a", "head": "b", "profile": trunk},
            {"id": "l", "tail": "b", "head": "c", "profile": cone(q, 0.3, 1.0, 32)},
            {"id": "r", "tail": "b", "head": "d", "profile": cone(good, 0.3, 1.0, 32)},
        ],
        "root_edge": "t",
    }
    build_tree(spec(good))
    with pytest.raises(JunctionMismatch) as info:
        build_tree(spec(good * 1.01))
    assert info.value.vertex == "b"
    with pytest.raises(SystoleFloorViolated):
        build_tree({**spec(good), "systole_floor": 4 * math.pi * end_phi**2})


def test_non_proper_tree():
    up = cone(1.0, 0.5, 2.0, 32)
    down = WarpProfile.dumbbell(2.0, -0.5, 0.0, 1.0, 0.0, 1.0, n=32)
    tree = path_tree([up, down])
    with pytest.warns(NonProperWarning):
        res = solve_tree_flow(tree, 10.0)
    assert not res.proper
    with pytest.raises(NonProperError):
        solve_tree_flow(tree, 10.0, strict=True)


def test_chi_outside_range():
    res = solve_tree_flow(junction_tree([1.0, 1.0]), 1.0)
    assert res.t_end == pytest.approx(1.0)
    with pytest.raises(ValueError):
        chi_of(res, 1.5)
    with pytest.raises(ValueError):
        solve_tree_flow(junction_tree([1.0, 1.0]), 0.0)
