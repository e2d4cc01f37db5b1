import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from safedrive.metric_map import (
    Edge,
    MapError,
    MetricGraph,
    advance,
    compute_junctions,
    distance,
    routes_disjoint,
)

from . import oracles


def chain():
    return MetricGraph(["a", "b", "c"], [Edge("e1", "a", "b", 50.0), Edge("e2", "b", "c", 30.0)])


def diamond():
    return MetricGraph(
        ["s", "l", "r", "t"],
        [
            Edge("sl", "s", "l", 20.0),
            Edge("lt", "l", "t", 20.0),
            Edge("sr", "s", "r", 25.0),
            Edge("rt", "r", "t", 30.0),
        ],
    )


def crossing():
    """Two roads crossing at their midpoints, each road a -> j -> b."""
    return MetricGraph(
        ["a1", "j1", "b1", "a2", "j2", "b2"],
        [
            Edge("x0", "a1", "j1", 100.0),
            Edge("x1", "j1", "b1", 20.0),
            Edge("y0", "a2", "j2", 100.0),
            Edge("y1", "j2", "b2", 20.0),
        ],
        [(("x1", 10.0), ("y1", 10.0))],
    )


# ------------------------------------------------------------------------ structure
def test_zero_length_edge_rejected():
    with pytest.raises(MapError):
        MetricGraph(["a", "b"], [Edge("e", "a", "b", 0.0)])


def test_self_crossing_rejected():
    with pytest.raises(MapError):
        MetricGraph(["a", "b"], [Edge("e", "a", "b", 10.0)], [(("e", 2.0), ("e", 5.0))])


def test_shared_offset_must_be_interior():
    with pytest.raises(MapError):
        MetricGraph(
            ["a", "b", "c", "d"],
            [Edge("e", "a", "b", 10.0), Edge("f", "c", "d", 10.0)],
            [(("e", 10.0), ("f", 5.0))],
        )


def test_endpoints_normalize_to_vertices():
    g = chain()
    assert g.same(g.position("e1", 50.0), g.position("e2", 0.0))
    assert g.same(g.position("e1", 0.0), g.vertex("a"))
    assert not g.same(g.position("e1", 10.0), g.position("e1", 10.1))


def test_shared_positions_compare_equal():
    g = crossing()
    assert g.same(g.position("x1", 10.0), g.position("y1", 10.0))


def test_offset_outside_edge_rejected():
    with pytest.raises(MapError):
        chain().position("e1", 50.5)


# ------------------------------------------------------------------------ junctions
def test_common_target_forms_junction():
    g = MetricGraph(
        ["a", "b", "u"], [Edge("e1", "a", "u", 10.0), Edge("e2", "b", "u", 10.0)]
    )
    assert frozenset({"e1", "e2"}) in compute_junctions(g)


def test_chain_edges_are_singletons():
    classes = compute_junctions(chain())
    assert sorted(classes, key=sorted) == [frozenset({"e1"}), frozenset({"e2"})]
    assert not chain().is_junction_edge("e1")


def test_crossing_then_common_target_closes_transitively():
    g = MetricGraph(
        ["a", "b", "c", "d", "u", "w"],
        [
            Edge("e1", "a", "b", 20.0),
            Edge("e2", "c", "u", 20.0),
            Edge("e3", "d", "u", 20.0),
            Edge("e4", "u", "w", 5.0),
        ],
        [(("e1", 10.0), ("e2", 10.0))],
    )
    assert frozenset({"e1", "e2", "e3"}) in compute_junctions(g)


@st.composite
def random_maps(draw):
    n = draw(st.integers(3, 6))
    verts = [f"v{i}" for i in range(n)]
    m = draw(st.integers(2, 8))
    edges = []
    for i in range(m):
        s = draw(st.sampled_from(verts))
        t = draw(st.sampled_from([v for v in verts if v != s]))
        edges.append(Edge(f"e{i}", s, t, float(draw(st.integers(4, 60)))))
    shared = []
    for _ in range(draw(st.integers(0, 3))):
        a, b = draw(st.lists(st.sampled_from(range(m)), min_size=2, max_size=2, unique=True))
        oa = float(draw(st.integers(1, int(edges[a].length) - 1)))
        ob = float(draw(st.integers(1, int(edges[b].length) - 1)))
        shared.append(((f"e{a}", oa), (f"e{b}", ob)))
    return verts, edges, shared


def build(verts, edges, shared):
    try:
        return MetricGraph(verts, edges, shared)
    except MapError:
        assume(False)


@settings(max_examples=150, deadline=None)
@given(random_maps())
def test_junctions_match_union_find_oracle(m):
    verts, edges, shared = m
    g = build(verts, edges, shared)
    expected = oracles.junction_classes(
        [(e.id, e.source, e.target) for e in edges], [(a[0], b[0]) for a, b in shared]
    )
    assert compute_junctions(g) == expected


@settings(max_examples=50, deadline=None)
@given(random_maps(), st.randoms(use_true_random=False))
def test_junctions_independent_of_enumeration_order(m, rnd):
    verts, edges, shared = m
    g = build(verts, edges, shared)
    shuffled = list(edges)
    rnd.shuffle(shuffled)
    g2 = MetricGraph(list(reversed(verts)), shuffled, list(reversed(shared)))
    assert compute_junctions(g) == compute_junctions(g2)
    assert compute_junctions(g) == sorted(set(compute_junctions(g)), key=sorted)


# ------------------------------------------------------------------------- distance
def test_distance_same_position_is_zero():
    g = chain()
    assert distance(g, g.position("e1", 10.0), g.position("e1", 10.0)) == 0.0


def test_distance_along_chain():
    g = chain()
    assert distance(g, g.position("e1", 10.0), g.position("e2", 20.0)) == pytest.approx(60.0)


def test_distance_picks_shorter_diamond_branch():
    g = diamond()
    assert distance(g, g.vertex("s"), g.vertex("t")) == pytest.approx(40.0)


def test_distance_unreachable_is_infinite():
    g = chain()
    assert math.isinf(distance(g, g.position("e2", 5.0), g.position("e1", 5.0)))


def test_distance_through_crossing_point():
    g = crossing()
    # from x1 before the crossing to y1 after it, switching roads at the shared point
    assert distance(g, g.position("x1", 4.0), g.position("y1", 15.0)) == pytest.approx(11.0)


@settings(max_examples=120, deadline=None)
@given(random_maps(), st.data())
def test_distance_matches_floyd_warshall_oracle(m, data):
    verts, edges, shared = m
    g = build(verts, edges, shared)
    e1 = data.draw(st.sampled_from(edges))
    e2 = data.draw(st.sampled_from(edges))
    o1 = float(data.draw(st.integers(1, int(e1.length) - 1)))
    o2 = float(data.draw(st.integers(1, int(e2.length) - 1)))
    table = {e.id: (e.source, e.target, e.length) for e in edges}
    expected = oracles.distance(table, shared, (e1.id, o1), (e2.id, o2))
    got = distance(g, g.position(e1.id, o1), g.position(e2.id, o2))
    if math.isinf(expected):
        assert math.isinf(got)
    else:
        assert got == pytest.approx(expected, abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(random_maps(), st.data())
def test_distance_triangle_inequality(m, data):
    verts, edges, shared = m
    g = build(verts, edges, shared)
    pts = []
    for _ in range(3):
        e = data.draw(st.sampled_from(edges))
        pts.append(g.position(e.id, float(data.draw(st.integers(0, int(e.length))))))
    a, b, c = pts
    assert distance(g, a, c) <= distance(g, a, b) + distance(g, b, c) + 1e-9


# -------------------------------------------------------------------------- advance
def test_advance_zero_is_identity():
    g = chain()
    r = g.route(["e1", "e2"])
    p = g.position("e1", 45.0)
    assert g.same(advance(g, p, r, 0.0), p)


def test_advance_crosses_a_vertex():
    g = chain()
    r = g.route(["e1", "e2"])
    q = advance(g, g.position("e1", 45.0), r, 10.0)
    assert (q.edge, q.offset) == ("e2", pytest.approx(5.0))


def test_advance_to_route_end():
    g = chain()
    r = g.route(["e1", "e2"], 5.0, 25.0)
    q = advance(g, r.start, r, r.length)
    assert g.same(q, g.position("e2", 25.0))
    assert r.length == pytest.approx(70.0)


def test_advance_past_route_end_fails():
    g = chain()
    r = g.route(["e1", "e2"])
    with pytest.raises(MapError):
        advance(g, g.position("e2", 10.0), r, 25.0)


def test_route_must_chain():
    with pytest.raises(MapError):
        diamond().route(["sl", "rt"])


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(5, 80), min_size=1, max_size=5),
    st.floats(0, 1),
    st.floats(0, 1),
    st.floats(0, 1),
)
def test_advance_matches_walk_oracle_and_is_additive(lengths, f0, fa, fb):
    n = len(lengths)
    g = MetricGraph(
        [f"u{i}" for i in range(n + 1)],
        [Edge(f"e{i}", f"u{i}", f"u{i + 1}", float(x)) for i, x in enumerate(lengths)],
    )
    r = g.route([f"e{i}" for i in range(n)])
    s0 = f0 * r.length
    p = g.position_on_route(r, s0)
    rest = r.length - s0
    a, b = fa * rest, fb * (rest - fa * rest)
    q = advance(g, p, r, a)
    # oracle: walk from the first element containing s0
    i, acc = 0, 0.0
    while acc + lengths[i] < s0 and i < n - 1:
        acc += lengths[i]
        i += 1
    e, off = oracles.walk(r.elements, i, s0 - acc, a)
    assert g.same(q, g.position(e, min(off, g.length(e))))
    assert g.same(advance(g, q, r, b), advance(g, p, r, a + b))


# --------------------------------------------------------------------- disjointness
def test_unconnected_routes_are_disjoint():
    g = MetricGraph(
        ["a", "b", "c", "d"], [Edge("e", "a", "b", 10.0), Edge("f", "c", "d", 10.0)]
    )
    assert routes_disjoint(g, g.route(["e"]), g.route(["f"]))


def test_routes_through_one_junction_are_not_disjoint():
    g = crossing()
    # pieces before the crossing point, on distinct edges of one junction
    assert not routes_disjoint(g, g.route(["x1"], 0.0, 5.0), g.route(["y1"], 0.0, 5.0))


def test_routes_meeting_at_common_endpoint_are_disjoint():
    g = chain()
    assert routes_disjoint(g, g.route(["e1"], 0.0, 50.0), g.route(["e2"], 0.0, 30.0))


def test_overlapping_pieces_on_one_edge_intersect():
    g = chain()
    assert not routes_disjoint(g, g.route(["e1"], 0.0, 30.0), g.route(["e1"], 20.0, 50.0))
    assert routes_disjoint(g, g.route(["e1"], 0.0, 20.0), g.route(["e1"], 30.0, 50.0))


@settings(max_examples=100, deadline=None)
@given(st.floats(1, 49), st.floats(0, 1), st.floats(0, 1))
def test_interior_position_blocks_disjointness(q, fa, fb):
    g = chain()
    r = g.route(["e1", "e2"])
    lo, hi = q * fa, q + (80 - q) * fb
    other = g.route(["e1", "e2"], lo, hi - 50.0 if hi > 50.0 else None) if hi > 50.0 else g.route(["e1"], lo, hi)
    assume(other.length > 1e-6 and lo < q < hi)
    assert not routes_disjoint(g, r, other)
