"""Intersection routing graph: POIs, sidewalk corners, crosswalk edges.

Node positions are map pixels; edge lengths and all returned distances are
meters (map pixels divided by pixels_per_meter). Bearings are degrees in
the map frame: 0 = map north (-y), clockwise positive, range [0, 360).

The authored graph is immutable after load. Route queries that need the
user's position as a start node work on a per-query overlay
(:class:`StartOverlay`), so concurrent queries never mutate shared state.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyGraphError, NoRouteError, UndefinedBearingError
from .geometry import MapPoint, MetricPoint
from .kernels import point_in_polygon

START_NODE_ID = -1
COORD_EPS_M = 1e-9

CORNER_WORDS = {
    "NW": "northwest",
    "NE": "northeast",
    "SW": "southwest",
    "SE": "southeast",
}


def bearing_deg(a: MetricPoint, b: MetricPoint) -> float:
    """Map-frame bearing from a to b: 0 = north (-y), clockwise positive."""
    dx = b.x - a.x
    dy = b.y - a.y
    if abs(dx) < COORD_EPS_M and abs(dy) < COORD_EPS_M:
        raise UndefinedBearingError("bearing between coincident points")
    return math.degrees(math.atan2(dx, -dy)) % 360.0


def wrap_angle_deg(angle: float) -> float:
    """Wrap any angle into (-180, 180]."""
    a = angle % 360.0
    if a > 180.0:
        a -= 360.0
    return a


@dataclass(frozen=True)
class MapNode:
    node_id: int
    kind: str  # poi | corner
    position: MapPoint
    name: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("poi", "corner"):
            raise ValueError(f"bad node kind {self.kind!r}")
        if self.kind == "poi" and not self.name:
            raise ValueError(f"poi node {self.node_id} needs a name")


@dataclass(frozen=True)
class MapEdge:
    node_a: int
    node_b: int
    kind: str  # sidewalk | crosswalk
    length_m: float
    signal_id: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("sidewalk", "crosswalk"):
            raise ValueError(f"bad edge kind {self.kind!r}")
        if self.kind == "crosswalk" and not self.signal_id:
            raise ValueError(f"crosswalk {self.node_a}-{self.node_b} needs a signal_id")
        if self.length_m <= 0:
            raise ValueError("edge length must be > 0")

    def other(self, node_id: int) -> int:
        return self.node_b if node_id == self.node_a else self.node_a


@dataclass(frozen=True)
class RouteLeg:
    from_node: int
    to_node: int
    kind: str
    length_m: float
    bearing_deg: float
    signal_id: Optional[str]
    to_label: str
    from_pos: MetricPoint
    to_pos: MetricPoint


@dataclass(frozen=True)
class Route:
    nodes: tuple[int, ...]
    legs: tuple[RouteLeg, ...]
    total_length_m: float
    destination: int
    destination_name: str


@dataclass(frozen=True)
class CornerRegion:
    label: str
    polygon_px: np.ndarray  # (K,2) map pixels

    def contains(self, p: MapPoint) -> bool:
        return point_in_polygon(p.x, p.y, self.polygon_px)

    def centroid_px(self) -> MapPoint:
        c = self.polygon_px.mean(axis=0)
        return MapPoint(float(c[0]), float(c[1]))


class IntersectionGraph:
    """Undirected routing graph over an intersection map."""

    def __init__(
        self,
        nodes: list[MapNode],
        edges: list[tuple[int, int, str, Optional[str]]],
        pixels_per_meter: float,
        corner_regions: Optional[list[CornerRegion]] = None,
    ):
        self.pixels_per_meter = pixels_per_meter
        self.nodes: dict[int, MapNode] = {}
        for n in nodes:
            if n.node_id in self.nodes:
                raise ValueError(f"duplicate node id {n.node_id}")
            self.nodes[n.node_id] = n
        self.adjacency: dict[int, list[MapEdge]] = {nid: [] for nid in self.nodes}
        self.edges: list[MapEdge] = []
        for a, b, kind, signal_id in edges:
            if a not in self.nodes or b not in self.nodes:
                raise ValueError(f"edge {a}-{b} references unknown node")
            length = self.metric_position(a).distance_to(self.metric_position(b))
            edge = MapEdge(a, b, kind, length, signal_id)
            self.edges.append(edge)
            self.adjacency[a].append(edge)
            self.adjacency[b].append(edge)
        self.corner_regions = list(corner_regions or [])

    def metric_position(self, node_id: int) -> MetricPoint:
        p = self.nodes[node_id].position
        return MetricPoint(p.x / self.pixels_per_meter, p.y / self.pixels_per_meter)

    def node_label(self, node_id: int) -> str:
        node = self.nodes[node_id]
        if node.kind == "poi":
            return node.name or f"poi {node_id}"
        label = self.corner_label(node.position)
        if label in CORNER_WORDS:
            return f"the {CORNER_WORDS[label]} corner"
        return "the corner"

    def corner_label(self, p: MapPoint) -> Optional[str]:
        """Containing corner region's label, else the nearest one by centroid."""
        if not self.corner_regions:
            return None
        for region in self.corner_regions:
            if region.contains(p):
                return region.label
        best = min(
            self.corner_regions,
            key=lambda r: (
                (r.centroid_px().x - p.x) ** 2 + (r.centroid_px().y - p.y) ** 2,
                r.label,
            ),
        )
        return best.label

    def corner_region(self, label: str) -> Optional[CornerRegion]:
        for region in self.corner_regions:
            if region.label == label:
                return region
        return None

    def pois(self) -> list[MapNode]:
        return sorted(
            (n for n in self.nodes.values() if n.kind == "poi"),
            key=lambda n: n.node_id,
        )

    def list_pois(self, user: MetricPoint) -> list[tuple[MapNode, float]]:
        """POIs with straight-line metric distance from the user, nearest first.

        Equidistant POIs are ordered by node_id.
        """
        out = [(n, self.metric_position(n.node_id).distance_to(user)) for n in self.pois()]
        out.sort(key=lambda item: (item[1], item[0].node_id))
        return out


@dataclass
class StartOverlay:
    """A temporary start node projected onto the nearest graph edge.

    The underlying graph is untouched; connectors exist only in this object.
    """

    graph: IntersectionGraph
    position: MetricPoint
    anchor_node: Optional[int]  # set when the start collapses onto a real node
    connectors: list[tuple[int, float]] = field(default_factory=list)
    host_edge: Optional[MapEdge] = None

    @property
    def start_id(self) -> int:
        return self.anchor_node if self.anchor_node is not None else START_NODE_ID


def _project_to_segment(p: MetricPoint, a: MetricPoint, b: MetricPoint):
    """Nearest point to p on segment ab; returns (point, t, distance)."""
    ax, ay = a.x, a.y
    vx, vy = b.x - a.x, b.y - a.y
    seg_len2 = vx * vx + vy * vy
    if seg_len2 <= 0:
        return a, 0.0, p.distance_to(a)
    t = ((p.x - ax) * vx + (p.y - ay) * vy) / seg_len2
    t = min(1.0, max(0.0, t))
    q = MetricPoint(ax + t * vx, ay + t * vy)
    return q, t, p.distance_to(q)


def insert_start(graph: IntersectionGraph, user: MetricPoint) -> StartOverlay:
    """Project the user onto the nearest edge and return the start overlay.

    The foot of the perpendicular is clamped to the segment; the temporary
    node connects to that edge's two endpoints with split lengths. When the
    projection lands on an existing node (within 1e-9 m) the overlay
    collapses onto that node and adds no connectors.
    """
    if not math.isfinite(user.x) or not math.isfinite(user.y):
        raise ValueError("user position must be finite")
    if not graph.edges:
        raise EmptyGraphError("graph has no edges")

    best = None
    for edge in graph.edges:
        a = graph.metric_position(edge.node_a)
        b = graph.metric_position(edge.node_b)
        q, t, d = _project_to_segment(user, a, b)
        key = (d, min(edge.node_a, edge.node_b), max(edge.node_a, edge.node_b))
        if best is None or key < best[0]:
            best = (key, edge, q, t)
    _, edge, q, t = best

    a = graph.metric_position(edge.node_a)
    b = graph.metric_position(edge.node_b)
    if q.distance_to(a) <= COORD_EPS_M:
        return StartOverlay(graph, a, anchor_node=edge.node_a, host_edge=edge)
    if q.distance_to(b) <= COORD_EPS_M:
        return StartOverlay(graph, b, anchor_node=edge.node_b, host_edge=edge)

    split_a = q.distance_to(a)
    split_b = q.distance_to(b)
    return StartOverlay(
        graph,
        q,
        anchor_node=None,
        connectors=[(edge.node_a, split_a), (edge.node_b, split_b)],
        host_edge=edge,
    )


def _neighbors(overlay: StartOverlay, node_id: int):
    """(neighbor_id, length, edge-or-None) pairs, connectors included."""
    graph = overlay.graph
    if node_id == START_NODE_ID:
        for nid, length in overlay.connectors:
            yield nid, length, None
        return
    for edge in graph.adjacency[node_id]:
        yield edge.other(node_id), edge.length_m, edge
    if overlay.anchor_node is None:
        for nid, length in overlay.connectors:
            if nid == node_id:
                yield START_NODE_ID, length, None


def _node_pos(overlay: StartOverlay, node_id: int) -> MetricPoint:
    if node_id == START_NODE_ID:
        return overlay.position
    return overlay.graph.metric_position(node_id)


def shortest_path(overlay: StartOverlay, dest: int) -> Route:
    """A* from the overlay's start to a POI node, Euclidean heuristic.

    The heuristic is admissible (edge length >= straight-line distance), so
    the returned cost is minimal. Ties break toward the lowest node id.
    """
    graph = overlay.graph
    if dest not in graph.nodes:
        raise NoRouteError(f"unknown destination node {dest}")
    start = overlay.start_id
    dest_pos = graph.metric_position(dest)

    counter = itertools.count()
    g_cost = {start: 0.0}
    parent: dict[int, Optional[int]] = {start: None}
    closed: set[int] = set()
    h0 = _node_pos(overlay, start).distance_to(dest_pos)
    heap = [(h0, start, next(counter))]
    while heap:
        f, node, _ = heapq.heappop(heap)
        if node in closed:
            continue
        if node == dest:
            break
        closed.add(node)
        base = g_cost[node]
        for nbr, length, _edge in sorted(
            _neighbors(overlay, node), key=lambda item: item[0]
        ):
            if nbr in closed:
                continue
            cand = base + length
            if cand < g_cost.get(nbr, math.inf) - 1e-15:
                g_cost[nbr] = cand
                parent[nbr] = node
                h = _node_pos(overlay, nbr).distance_to(dest_pos)
                heapq.heappush(heap, (cand + h, nbr, next(counter)))
    else:
        if start != dest:
            raise NoRouteError(f"node {dest} unreachable from start")

    if dest not in parent and start != dest:
        raise NoRouteError(f"node {dest} unreachable from start")

    order = [dest]
    while parent.get(order[-1]) is not None:
        order.append(parent[order[-1]])
    order.reverse()
    if order[0] != start:
        raise NoRouteError(f"node {dest} unreachable from start")

    legs = []
    for a, b in zip(order, order[1:]):
        pa = _node_pos(overlay, a)
        pb = _node_pos(overlay, b)
        edge = _find_edge(overlay, a, b)
        kind = edge.kind if edge else "sidewalk"
        signal_id = edge.signal_id if edge else None
        legs.append(
            RouteLeg(
                from_node=a,
                to_node=b,
                kind=kind,
                length_m=pa.distance_to(pb),
                bearing_deg=bearing_deg(pa, pb),
                signal_id=signal_id,
                to_label=graph.node_label(b),
                from_pos=pa,
                to_pos=pb,
            )
        )
    dest_node = graph.nodes[dest]
    return Route(
        nodes=tuple(order),
        legs=tuple(legs),
        total_length_m=sum(leg.length_m for leg in legs),
        destination=dest,
        destination_name=dest_node.name or graph.node_label(dest),
    )


def _find_edge(overlay: StartOverlay, a: int, b: int) -> Optional[MapEdge]:
    if START_NODE_ID in (a, b):
        # connector inherits the host edge's kind so crosswalk gating still
        # applies when the user starts mid-crosswalk
        return overlay.host_edge if overlay.host_edge and overlay.host_edge.kind == "crosswalk" else None
    for edge in overlay.graph.adjacency[a]:
        if edge.other(a) == b:
            return edge
    return None
