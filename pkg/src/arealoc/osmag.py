"""osmAG map model: polygon areas and passages stored as tagged OSM XML.

The schema subset understood here:

* ``<node id= lat= lon=>`` with optional ``<tag>`` children.  A node tagged
  ``osmAG:origin=yes`` defines the projection origin of the file (first node
  otherwise).
* ``<way>`` tagged ``osmAG:type=area`` is a closed polygon.  Recognized tags:
  ``osmAG:areaType`` (room | corridor | structure), ``level`` (int),
  ``osmAG:parent`` (way id of the enclosing area), ``name``, ``height``.
* ``<way>`` tagged ``osmAG:type=passage`` with exactly two ``<nd>`` refs is a
  passage; ``osmAG:passageType`` is door (default) or transparent.

Unknown tags are kept on the raw elements but have no meaning here.
Geodetic coordinates are projected to a local metric frame with an
equirectangular projection about the file origin.
"""

from dataclasses import dataclass, field
from xml.etree import ElementTree

import numpy as np

from .errors import (
    LevelNotFoundError,
    MapFormatError,
    MapReferenceError,
    MapValidationError,
    ProjectionRangeError,
)

EARTH_RADIUS_M = 6378137.0
SNAP_TOL_M = 0.01          # passage endpoints must sit this close to an area edge
BOUNDARY_EPS = 1e-9

AREA_TYPES = ("room", "corridor", "structure")
PASSAGE_KINDS = ("door", "transparent")


@dataclass
class GeoNode:
    id: int
    lat: float
    lon: float
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise MapValidationError(f"node {self.id}: lat {self.lat} out of [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise MapValidationError(f"node {self.id}: lon {self.lon} out of [-180, 180]")


@dataclass
class RawWay:
    id: int
    node_refs: list
    tags: dict = field(default_factory=dict)


@dataclass
class RawOsm:
    """Parsed file content before any semantic interpretation."""

    nodes: dict            # id -> GeoNode
    ways: dict             # id -> RawWay
    origin: tuple          # (lat, lon)


@dataclass
class Area:
    id: int
    polygon: np.ndarray    # (V, 2) metric CCW vertices, closing vertex not stored
    area_type: str = "room"
    level: int = 0
    name: str = None
    parent: int = None

    def centroid(self):
        return self.polygon.mean(axis=0)


@dataclass
class Passage:
    id: int
    endpoints: np.ndarray  # (2, 2) metric
    kind: str = "door"
    connects: tuple = ()   # 1 or 2 area ids


@dataclass
class AreaGraph:
    areas: list            # sorted by id
    passages: list
    origin: tuple          # (lat, lon)
    level_loaded: int

    def __post_init__(self):
        self._by_id = {a.id: a for a in self.areas}

    def area(self, area_id):
        return self._by_id[area_id]

    def area_ids(self):
        return [a.id for a in self.areas]


# ---------------------------------------------------------------------------
# parsing / serialization

def parse_osmag(xml_bytes):
    """Parse osmAG XML into a RawOsm. Raises MapFormatError / MapReferenceError."""
    if isinstance(xml_bytes, str):
        xml_bytes = xml_bytes.encode()
    try:
        root = ElementTree.fromstring(xml_bytes)
    except ElementTree.ParseError as exc:
        line, col = exc.position
        raise MapFormatError(f"XML parse error at line {line}, column {col}: {exc.msg}") from exc
    if root.tag != "osm":
        raise MapFormatError(f"expected <osm> root element, got <{root.tag}>")

    nodes, ways = {}, {}
    origin = None
    for child in root:
        tags = {t.get("k"): t.get("v") for t in child if t.tag == "tag"}
        if child.tag == "node":
            try:
                node = GeoNode(
                    id=int(child.get("id")),
                    lat=float(child.get("lat")),
                    lon=float(child.get("lon")),
                    tags=tags,
                )
            except (TypeError, ValueError) as exc:
                raise MapFormatError(f"bad node attributes: {child.attrib}") from exc
            if node.id in nodes:
                raise MapValidationError(f"duplicate node id {node.id}")
            nodes[node.id] = node
            if origin is None:
                origin = (node.lat, node.lon)
            if tags.get("osmAG:origin") == "yes":
                origin = (node.lat, node.lon)
        elif child.tag == "way":
            refs = [int(nd.get("ref")) for nd in child if nd.tag == "nd"]
            way = RawWay(id=int(child.get("id")), node_refs=refs, tags=tags)
            if way.id in ways:
                raise MapValidationError(f"duplicate way id {way.id}")
            ways[way.id] = way

    for way in ways.values():
        for ref in way.node_refs:
            if ref not in nodes:
                raise MapReferenceError(f"way {way.id} references missing node {ref}")
    if origin is None:
        raise MapFormatError("file contains no nodes")
    return RawOsm(nodes=nodes, ways=ways, origin=origin)


def serialize_osmag(raw):
    """Emit the RawOsm back as osmAG XML bytes (stable ordering, full precision)."""
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', '<osm version="0.6">']
    for node in sorted(raw.nodes.values(), key=lambda n: n.id):
        attrs = f'id="{node.id}" lat="{node.lat!r}" lon="{node.lon!r}"'
        if node.tags:
            lines.append(f"  <node {attrs}>")
            for k in sorted(node.tags):
                lines.append(f'    <tag k="{_esc(k)}" v="{_esc(node.tags[k])}"/>')
            lines.append("  </node>")
        else:
            lines.append(f"  <node {attrs}/>")
    for way in sorted(raw.ways.values(), key=lambda w: w.id):
        lines.append(f'  <way id="{way.id}">')
        for ref in way.node_refs:
            lines.append(f'    <nd ref="{ref}"/>')
        for k in sorted(way.tags):
            lines.append(f'    <tag k="{_esc(k)}" v="{_esc(way.tags[k])}"/>')
        lines.append("  </way>")
    lines.append("</osm>")
    return ("\n".join(lines) + "\n").encode()


def _esc(text):
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


# ---------------------------------------------------------------------------
# projection

def to_local_frame(lat, lon, origin):
    """Equirectangular projection of (lat, lon) about origin, in meters.

    Valid only near the origin; |lat - origin_lat| must stay below 0.1 deg.
    """
    olat, olon = origin
    if abs(lat - olat) >= 0.1:
        raise ProjectionRangeError(
            f"latitude {lat} too far from origin {olat} for the local tangent plane"
        )
    x = EARTH_RADIUS_M * np.cos(np.radians(olat)) * np.radians(lon - olon)
    y = EARTH_RADIUS_M * np.radians(lat - olat)
    return float(x), float(y)


def from_local_frame(x, y, origin):
    """Inverse of to_local_frame."""
    olat, olon = origin
    lat = olat + np.degrees(y / EARTH_RADIUS_M)
    lon = olon + np.degrees(x / (EARTH_RADIUS_M * np.cos(np.radians(olat))))
    return float(lat), float(lon)


# ---------------------------------------------------------------------------
# floor loading

def load_floor(raw, level):
    """Build the AreaGraph of one floor: leaf areas of `level` plus their passages.

    Leaf areas are areas that no other area names as its parent.  Passages are
    attached to the areas whose boundary they sit on (within SNAP_TOL_M); their
    `connects` tuple is derived geometrically.
    """
    area_ways = {
        wid: w for wid, w in raw.ways.items() if w.tags.get("osmAG:type") == "area"
    }
    parent_ids = {
        int(w.tags["osmAG:parent"]) for w in area_ways.values() if "osmAG:parent" in w.tags
    }

    areas = []
    for wid in sorted(area_ways):
        way = area_ways[wid]
        if int(way.tags.get("level", "0")) != level or wid in parent_ids:
            continue
        refs = way.node_refs
        if len(refs) >= 2 and refs[0] == refs[-1]:
            refs = refs[:-1]  # closing ref is optional on input
        poly = np.array(
            [to_local_frame(raw.nodes[r].lat, raw.nodes[r].lon, raw.origin) for r in refs]
        )
        poly = _dedupe_vertices(poly)
        if len(poly) < 3:
            raise MapValidationError(f"area way {wid} has fewer than 3 distinct vertices")
        if _signed_area(poly) < 0:
            poly = poly[::-1].copy()  # normalize to CCW
        atype = way.tags.get("osmAG:areaType", "room")
        if atype not in AREA_TYPES:
            raise MapValidationError(f"area way {wid}: unknown areaType {atype!r}")
        parent = int(way.tags["osmAG:parent"]) if "osmAG:parent" in way.tags else None
        areas.append(
            Area(
                id=wid,
                polygon=poly,
                area_type=atype,
                level=level,
                name=way.tags.get("name"),
                parent=parent,
            )
        )
    if not areas:
        raise LevelNotFoundError(f"no leaf areas on level {level}")

    passages = []
    for wid in sorted(raw.ways):
        way = raw.ways[wid]
        if way.tags.get("osmAG:type") != "passage":
            continue
        if len(way.node_refs) != 2:
            raise MapValidationError(f"passage way {wid} must reference exactly 2 nodes")
        pts = np.array(
            [
                to_local_frame(raw.nodes[r].lat, raw.nodes[r].lon, raw.origin)
                for r in way.node_refs
            ]
        )
        kind = way.tags.get("osmAG:passageType", "door")
        if kind not in PASSAGE_KINDS:
            raise MapValidationError(f"passage way {wid}: unknown passageType {kind!r}")
        connects = tuple(
            a.id for a in areas if _on_boundary(a.polygon, pts[0]) and _on_boundary(a.polygon, pts[1])
        )
        if not connects:
            continue  # passage of another floor, or dangling (caught by validation)
        passages.append(Passage(id=wid, endpoints=pts, kind=kind, connects=connects[:2]))

    return AreaGraph(areas=areas, passages=passages, origin=raw.origin, level_loaded=level)


def _dedupe_vertices(poly):
    keep = [poly[0]]
    for p in poly[1:]:
        if np.linalg.norm(p - keep[-1]) > 1e-12:
            keep.append(p)
    if len(keep) > 1 and np.linalg.norm(keep[0] - keep[-1]) <= 1e-12:
        keep.pop()
    return np.array(keep)


def _on_boundary(poly, p, tol=SNAP_TOL_M):
    return boundary_distance(poly, p) <= tol


# ---------------------------------------------------------------------------
# polygon queries

def _signed_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def point_segment_distance(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    s = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + s * ab)))


def boundary_distance(poly, p):
    """Distance from p to the closest polygon edge."""
    p = np.asarray(p, dtype=float)
    d = np.inf
    n = len(poly)
    for i in range(n):
        d = min(d, point_segment_distance(p, poly[i], poly[(i + 1) % n]))
    return d


def point_in_polygon(poly, p, boundary_eps=BOUNDARY_EPS):
    """Even-odd containment test; points within boundary_eps of an edge count as inside."""
    x, y = float(p[0]), float(p[1])
    if boundary_distance(poly, p) <= boundary_eps:
        return True
    inside = False
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if xi > x:
                inside = not inside
    return inside


def locate_area(graph, p):
    """Id of the leaf area containing p, or None.

    Boundary points resolve to the containing area with the smallest id.
    """
    for area in graph.areas:  # sorted by id
        if point_in_polygon(area.polygon, p):
            return area.id
    return None


# ---------------------------------------------------------------------------
# validation

def polygon_is_simple(poly):
    """True when no two non-adjacent edges intersect."""
    n = len(poly)
    segs = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j - i) % n == 1 or (i - j) % n == 1:
                continue
            if _segments_cross(*segs[i], *segs[j]):
                return False
    return True


def _segments_cross(a, b, c, d):
    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        if abs(v) < 1e-12:
            return 0
        return 1 if v > 0 else -1

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    if o1 != o2 and o3 != o4:
        return True
    return False


def validate_graph(graph):
    """Run the structural checks; returns a list of violation strings (empty = valid)."""
    violations = []
    for area in graph.areas:
        if len(area.polygon) < 3:
            violations.append(f"area {area.id}: fewer than 3 vertices")
            continue
        if _signed_area(area.polygon) <= 0:
            violations.append(f"area {area.id}: not counter-clockwise / zero area")
        if not polygon_is_simple(area.polygon):
            violations.append(f"area {area.id}: polygon is self-intersecting")
        if area.level != graph.level_loaded:
            violations.append(f"area {area.id}: level {area.level} != loaded {graph.level_loaded}")
    ids = graph.area_ids()
    if len(set(ids)) != len(ids):
        violations.append("duplicate area ids")
    for psg in graph.passages:
        if np.linalg.norm(psg.endpoints[0] - psg.endpoints[1]) <= 1e-9:
            violations.append(f"passage {psg.id}: endpoints coincide")
        if not psg.connects:
            violations.append(f"passage {psg.id}: connects no area")
        for aid in psg.connects:
            if aid not in graph._by_id:
                violations.append(f"passage {psg.id}: unknown area {aid}")
                continue
            poly = graph.area(aid).polygon
            for k in range(2):
                if not _on_boundary(poly, psg.endpoints[k]):
                    violations.append(
                        f"passage {psg.id}: endpoint {k} is {boundary_distance(poly, psg.endpoints[k]):.3f} m "
                        f"from the boundary of area {aid} (tolerance {SNAP_TOL_M} m)"
                    )
    return violations


def validate_file(path, level=None):
    """Parse + load + validate a map file.  Returns (graph_or_None, violations)."""
    with open(path, "rb") as fh:
        raw = parse_osmag(fh.read())
    if level is None:
        levels = sorted(
            {
                int(w.tags.get("level", "0"))
                for w in raw.ways.values()
                if w.tags.get("osmAG:type") == "area"
            }
        )
        level = levels[0] if levels else 0
    graph = load_floor(raw, level)
    # dangling passages never make it into the graph; surface them here
    violations = validate_graph(graph)
    loaded = {p.id for p in graph.passages}
    for wid in sorted(raw.ways):
        way = raw.ways[wid]
        if way.tags.get("osmAG:type") == "passage" and wid not in loaded:
            pts = np.array(
                [
                    to_local_frame(raw.nodes[r].lat, raw.nodes[r].lon, raw.origin)
                    for r in way.node_refs
                ]
            )
            dists = [
                max(boundary_distance(a.polygon, pts[0]), boundary_distance(a.polygon, pts[1]))
                for a in graph.areas
            ]
            violations.append(
                f"passage {wid}: endpoints not on any area boundary "
                f"(closest {min(dists):.3f} m, tolerance {SNAP_TOL_M} m)"
            )
    return graph, violations


def graphs_equal(a, b, tol=1e-9):
    """Structural equality of two loaded graphs (used by round-trip checks)."""
    if a.level_loaded != b.level_loaded or a.area_ids() != b.area_ids():
        return False
    for aa, ab in zip(a.areas, b.areas):
        if aa.area_type != ab.area_type or aa.name != ab.name or aa.parent != ab.parent:
            return False
        if aa.polygon.shape != ab.polygon.shape:
            return False
        if not np.allclose(aa.polygon, ab.polygon, atol=tol):
            return False
    if len(a.passages) != len(b.passages):
        return False
    for pa, pb in zip(a.passages, b.passages):
        if pa.id != pb.id or pa.kind != pb.kind or pa.connects != pb.connects:
            return False
        if not np.allclose(pa.endpoints, pb.endpoints, atol=tol):
            return False
    return True
