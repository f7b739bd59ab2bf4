import itertools
import math
import random

import networkx as nx
import pytest

from streetnav.errors import EmptyGraphError, NoRouteError, UndefinedBearingError
from streetnav.geometry import MapPoint, MetricPoint
from streetnav.mapgraph import (
    IntersectionGraph,
    MapNode,
    START_NODE_ID,
    bearing_deg,
    insert_start,
    shortest_path,
    wrap_angle_deg,
)


def _line_graph():
    nodes = [
        MapNode(1, "corner", MapPoint(0, 0)),
        MapNode(2, "poi", MapPoint(100, 0), "End"),
    ]
    return IntersectionGraph(nodes, [(1, 2, "sidewalk", None)], pixels_per_meter=10.0)


def _random_graph(seed: int, n_nodes: int, extra_edges: int):
    """Connected random geometric graph; edge lengths are euclidean."""
    rng = random.Random(seed)
    nodes = []
    for i in range(n_nodes):
        kind = "poi" if i == n_nodes - 1 else "corner"
        name = f"P{i}" if kind == "poi" else None
        nodes.append(
            MapNode(i, kind, MapPoint(rng.uniform(0, 1000), rng.uniform(0, 1000)), name)
        )
    edges = set()
    order = list(range(n_nodes))
    rng.shuffle(order)
    for a, b in zip(order, order[1:]):  # spanning tree keeps it connected
        edges.add((min(a, b), max(a, b)))
    while len(edges) < n_nodes - 1 + extra_edges:
        a, b = rng.sample(range(n_nodes), 2)
        edges.add((min(a, b), max(a, b)))
    graph = IntersectionGraph(
        nodes, [(a, b, "sidewalk", None) for a, b in edges], pixels_per_meter=10.0
    )
    return graph


def _to_networkx(graph: IntersectionGraph) -> nx.Graph:
    g = nx.Graph()
    for edge in graph.edges:
        g.add_edge(edge.node_a, edge.node_b, weight=edge.length_m)
    return g


# -- bearings ------------------------------------------------------------------


def test_bearing_compass_convention():
    origin = MetricPoint(0, 0)
    assert bearing_deg(origin, MetricPoint(0, -1)) == pytest.approx(0.0)    # north
    assert bearing_deg(origin, MetricPoint(1, 0)) == pytest.approx(90.0)    # east
    assert bearing_deg(origin, MetricPoint(0, 1)) == pytest.approx(180.0)   # south
    assert bearing_deg(origin, MetricPoint(-1, 0)) == pytest.approx(270.0)  # west
    with pytest.raises(UndefinedBearingError):
        bearing_deg(origin, MetricPoint(0, 0))


def test_wrap_angle():
    assert wrap_angle_deg(190) == -170
    assert wrap_angle_deg(-190) == 170
    assert wrap_angle_deg(180) == 180
    assert wrap_angle_deg(540) == 180


# -- insert_start ---------------------------------------------------------------


def test_insert_on_node_collapses():
    graph = _line_graph()
    overlay = insert_start(graph, MetricPoint(0, 0))
    assert overlay.anchor_node == 1
    assert overlay.connectors == []


def test_insert_at_midpoint_splits_equally():
    graph = _line_graph()
    overlay = insert_start(graph, MetricPoint(5.0, 0.0))
    assert overlay.anchor_node is None
    lengths = sorted(l for _, l in overlay.connectors)
    assert lengths == [pytest.approx(5.0), pytest.approx(5.0)]


def test_insert_off_edge_matches_dense_sampling_oracle():
    rng = random.Random(77)
    for _ in range(20):
        graph = _random_graph(rng.randint(0, 10**6), 8, 4)
        user = MetricPoint(rng.uniform(0, 100), rng.uniform(0, 100))
        overlay = insert_start(graph, user)
        # oracle: densely sample every edge for the true nearest point
        best = math.inf
        for edge in graph.edges:
            a = graph.metric_position(edge.node_a)
            b = graph.metric_position(edge.node_b)
            for i in range(2001):
                t = i / 2000
                q = MetricPoint(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
                best = min(best, user.distance_to(q))
        assert user.distance_to(overlay.position) <= best + 1e-6


def test_insert_start_empty_graph():
    graph = IntersectionGraph([MapNode(1, "corner", MapPoint(0, 0))], [], 10.0)
    with pytest.raises(EmptyGraphError):
        insert_start(graph, MetricPoint(1, 1))


# -- shortest paths ---------------------------------------------------------------


def test_single_edge_route():
    graph = _line_graph()
    overlay = insert_start(graph, MetricPoint(0, 0))
    route = shortest_path(overlay, 2)
    assert route.nodes == (1, 2)
    assert route.total_length_m == pytest.approx(10.0)
    assert route.legs[0].bearing_deg == pytest.approx(90.0)


def test_four_corner_grid_uses_single_crossing(routes_scenario):
    graph = routes_scenario.build_graph()
    # start at the NE corner, destination across the street (Library)
    overlay = insert_start(graph, graph.metric_position(2))
    route = shortest_path(overlay, 11)
    crossings = [leg for leg in route.legs if leg.kind == "crosswalk"]
    assert len(crossings) == 1
    # oracle: networkx dijkstra on the same weights
    g = _to_networkx(graph)
    want = nx.dijkstra_path_length(g, 2, 11)
    assert route.total_length_m == pytest.approx(want)


def test_astar_equals_bruteforce_100_seeds():
    for seed in range(100):
        graph = _random_graph(seed, 12 if seed % 2 else 7, 6)
        overlay = insert_start(graph, MetricPoint(500, 500))
        dest = max(graph.nodes)
        try:
            route = shortest_path(overlay, dest)
        except NoRouteError:
            pytest.fail("random graphs are connected by construction")
        # oracle: exhaustive simple-path enumeration from both connector ends
        g = _to_networkx(graph)
        start_costs = (
            {overlay.anchor_node: 0.0}
            if overlay.anchor_node is not None
            else dict(overlay.connectors)
        )
        best = math.inf
        for first, head in start_costs.items():
            if first == dest:
                best = min(best, head)
                continue
            for path in nx.all_simple_paths(g, first, dest):
                cost = head + sum(
                    g[a][b]["weight"] for a, b in zip(path, path[1:])
                )
                best = min(best, cost)
        assert route.total_length_m == pytest.approx(best, abs=1e-9), f"seed {seed}"


def test_astar_equals_dijkstra_1000_seeds():
    for seed in range(1000):
        n = 10 + (seed % 41)  # up to 50 nodes
        graph = _random_graph(10_000 + seed, n, n // 2)
        overlay = insert_start(graph, MetricPoint(500, 500))
        dest = max(graph.nodes)
        route = shortest_path(overlay, dest)
        g = _to_networkx(graph)
        if overlay.anchor_node is not None:
            want = nx.dijkstra_path_length(g, overlay.anchor_node, dest)
        else:
            want = min(
                head + nx.dijkstra_path_length(g, first, dest)
                for first, head in overlay.connectors
            )
        assert route.total_length_m == pytest.approx(want, abs=1e-9), f"seed {seed}"


def test_unreachable_destination():
    nodes = [
        MapNode(1, "corner", MapPoint(0, 0)),
        MapNode(2, "corner", MapPoint(10, 0)),
        MapNode(3, "poi", MapPoint(1000, 1000), "Island"),
        MapNode(4, "poi", MapPoint(1010, 1000), "Island2"),
    ]
    graph = IntersectionGraph(
        nodes, [(1, 2, "sidewalk", None), (3, 4, "sidewalk", None)], 10.0
    )
    overlay = insert_start(graph, MetricPoint(0, 0))
    with pytest.raises(NoRouteError):
        shortest_path(overlay, 3)


def test_route_leg_bearing_consistency():
    # walking each leg's bearing for its length lands on the leg end
    for seed in range(30):
        graph = _random_graph(seed + 500, 9, 5)
        overlay = insert_start(graph, MetricPoint(250, 250))
        route = shortest_path(overlay, max(graph.nodes))
        for leg in route.legs:
            rad = math.radians(leg.bearing_deg)
            end = MetricPoint(
                leg.from_pos.x + leg.length_m * math.sin(rad),
                leg.from_pos.y - leg.length_m * math.cos(rad),
            )
            assert end.distance_to(leg.to_pos) < 1e-9


# -- POI listing -------------------------------------------------------------------


def test_list_pois_ordering(routes_scenario):
    graph = routes_scenario.build_graph()
    user = graph.metric_position(1)  # NW corner
    pois = graph.list_pois(user)
    names = [node.name for node, _ in pois]
    dists = [d for _, d in pois]
    assert dists == sorted(dists)
    assert names[0] == "Cafe"  # 12 m away, nearest from the NW corner


def test_list_pois_empty_and_ties():
    graph = IntersectionGraph(
        [
            MapNode(1, "corner", MapPoint(0, 0)),
            MapNode(2, "corner", MapPoint(10, 0)),
        ],
        [(1, 2, "sidewalk", None)],
        10.0,
    )
    assert graph.list_pois(MetricPoint(0, 0)) == []
    tie_graph = IntersectionGraph(
        [
            MapNode(5, "poi", MapPoint(10, 0), "B"),
            MapNode(3, "poi", MapPoint(-10, 0), "A"),
            MapNode(1, "corner", MapPoint(0, 0)),
        ],
        [(3, 1, "sidewalk", None), (1, 5, "sidewalk", None)],
        10.0,
    )
    pois = tie_graph.list_pois(MetricPoint(0, 0))
    assert [n.node_id for n, _ in pois] == [3, 5]  # equidistant: by node id


def test_insert_start_cost_never_worse_than_geometric_nearest():
    # routing from the overlay start costs no more than inserting at the
    # true geometric nearest point found by dense sampling
    for seed in range(10):
        graph = _random_graph(900 + seed, 10, 5)
        rng = random.Random(seed)
        user = MetricPoint(rng.uniform(0, 1000), rng.uniform(0, 1000))
        overlay = insert_start(graph, user)
        dest = max(graph.nodes)
        route = shortest_path(overlay, dest)

        # oracle: densely sample all edges for the geometric nearest point,
        # then route from it through its host edge's endpoints
        g = _to_networkx(graph)
        nearest = None
        for edge in graph.edges:
            a = graph.metric_position(edge.node_a)
            b = graph.metric_position(edge.node_b)
            for i in range(2001):
                t = i / 2000
                q = MetricPoint(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
                d = user.distance_to(q)
                if nearest is None or d < nearest[0]:
                    nearest = (d, q, edge)
        _, q_star, host = nearest
        oracle_cost = min(
            q_star.distance_to(graph.metric_position(end))
            + nx.dijkstra_path_length(g, end, dest)
            for end in (host.node_a, host.node_b)
        )
        assert route.total_length_m <= oracle_cost + 1e-6
