"""Floorplans, beacons, and propagation-path classification.

A floorplan is an axis-aligned W x L rectangle containing axis-aligned
shelving stacks and corridor strips.  Each receiver/beacon pair is
assigned one geometric element describing what sits between them:

* FREE_SPACE   direct line of sight, no stack crossed
* ONE_STACK    the sight line passes through one stack
* TWO_STACK    the sight line passes through two or more stacks
* CORRIDOR     the receiver stands in a corridor strip

Corridor placement wins over crossing counts because the dominant
effect there is waveguiding along the strip, not shelf attenuation.
Crossing counts use the open interior of each stack, so a sight line
that merely grazes a stack face (including one leaving a beacon mounted
on that face) crosses nothing.
"""

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, OutOfBoundsError

SCHEMA_LAYOUT = "layout_v1"


class GeometricElement(enum.Enum):
    """Propagation-path category for a receiver/beacon pair."""

    FREE_SPACE = "F_S"
    ONE_STACK = "ONE_S"
    TWO_STACK = "TWO_S"
    CORRIDOR = "C"

    @property
    def code(self) -> int:
        """Stable integer code used by the numeric kernels."""
        return _ELEMENT_CODE[self]


_ELEMENT_CODE = {
    GeometricElement.FREE_SPACE: 0,
    GeometricElement.ONE_STACK: 1,
    GeometricElement.TWO_STACK: 2,
    GeometricElement.CORRIDOR: 3,
}

ELEMENT_ORDER = (
    GeometricElement.FREE_SPACE,
    GeometricElement.ONE_STACK,
    GeometricElement.TWO_STACK,
    GeometricElement.CORRIDOR,
)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle given by its lower-left corner and size."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidInputError(f"rect {name} must be finite, got {v!r}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidInputError(
                f"rect sides must be positive, got w={self.w} h={self.h}"
            )

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def contains(self, px: float, py: float) -> bool:
        # closed containment: standing on the edge counts as inside
        return self.x <= px <= self.x2 and self.y <= py <= self.y2


@dataclass(frozen=True)
class Beacon:
    """A fixed BLE transmitter."""

    id: str
    x: float
    y: float
    rate_hz: float = 10.0
    power_dbm: float = -15.0
    known: bool = True

    def __post_init__(self):
        if not self.id:
            raise InvalidInputError("beacon id must be a non-empty string")
        for name in ("x", "y", "rate_hz", "power_dbm"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidInputError(
                    f"beacon {self.id}: {name} must be finite, got {v!r}"
                )
        if self.rate_hz <= 0:
            raise InvalidInputError(
                f"beacon {self.id}: rate_hz must be positive, got {self.rate_hz}"
            )

    @property
    def position(self) -> tuple:
        return (self.x, self.y)


@dataclass(frozen=True)
class Layout:
    """A floorplan with its stacks, corridors, and beacons."""

    width: float
    length: float
    stacks: tuple = ()
    corridors: tuple = ()
    beacons: tuple = ()

    def __post_init__(self):
        if not (math.isfinite(self.width) and math.isfinite(self.length)):
            raise InvalidInputError("floorplan dimensions must be finite")
        if self.width <= 0 or self.length <= 0:
            raise InvalidInputError(
                f"floorplan sides must be positive, got {self.width} x {self.length}"
            )
        object.__setattr__(self, "stacks", tuple(self.stacks))
        object.__setattr__(self, "corridors", tuple(self.corridors))
        object.__setattr__(self, "beacons", tuple(self.beacons))
        for kind, rects in (("stack", self.stacks), ("corridor", self.corridors)):
            for r in rects:
                if r.x < 0 or r.y < 0 or r.x2 > self.width or r.y2 > self.length:
                    raise InvalidInputError(
                        f"{kind} {r} extends beyond the {self.width} x {self.length} floorplan"
                    )
        seen = set()
        for b in self.beacons:
            if b.id in seen:
                raise InvalidInputError(f"duplicate beacon id {b.id!r}")
            seen.add(b.id)
            if not (0 <= b.x <= self.width and 0 <= b.y <= self.length):
                raise OutOfBoundsError(
                    f"beacon {b.id} at ({b.x}, {b.y}) lies outside the floorplan"
                )

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.length)

    def beacon_ids(self) -> list:
        return [b.id for b in self.beacons]

    def beacon_by_id(self, beacon_id: str) -> Beacon:
        for b in self.beacons:
            if b.id == beacon_id:
                return b
        raise KeyError(beacon_id)

    def contains(self, px: float, py: float) -> bool:
        return 0 <= px <= self.width and 0 <= py <= self.length


def distance(p, q) -> float:
    """Euclidean distance between two finite 2-D points."""
    px, py = float(p[0]), float(p[1])
    qx, qy = float(q[0]), float(q[1])
    if not all(map(math.isfinite, (px, py, qx, qy))):
        raise InvalidInputError("distance arguments must be finite points")
    return math.hypot(qx - px, qy - py)


def _rect_array(rects) -> np.ndarray:
    out = np.empty((len(rects), 4), dtype=np.float64)
    for i, r in enumerate(rects):
        out[i] = (r.x, r.y, r.x2, r.y2)
    return out


def stack_array(layout: Layout) -> np.ndarray:
    """Stacks as an (n, 4) array of (xlo, ylo, xhi, yhi) rows."""
    return _rect_array(layout.stacks)


def corridor_array(layout: Layout) -> np.ndarray:
    """Corridors as an (n, 4) array of (xlo, ylo, xhi, yhi) rows."""
    return _rect_array(layout.corridors)


def segment_crossings(p, q, rects) -> int:
    """Number of rectangles whose open interior the segment p-q enters.

    Uses slab clipping with strict inequalities: the parameter interval
    where the segment is strictly inside the rectangle must have
    positive width.  Touching an edge or corner, or running along a
    face, therefore counts as no crossing.
    """
    px, py = float(p[0]), float(p[1])
    qx, qy = float(q[0]), float(q[1])
    n = 0
    for r in rects:
        if _crosses_open_rect(px, py, qx, qy, r.x, r.y, r.x2, r.y2):
            n += 1
    return n


def _crosses_open_rect(px, py, qx, qy, xlo, ylo, xhi, yhi) -> bool:
    t_lo, t_hi = 0.0, 1.0
    for p0, d, lo, hi in ((px, qx - px, xlo, xhi), (py, qy - py, ylo, yhi)):
        if d == 0.0:
            if not (lo < p0 < hi):
                return False
        else:
            ta = (lo - p0) / d
            tb = (hi - p0) / d
            if ta > tb:
                ta, tb = tb, ta
            t_lo = max(t_lo, ta)
            t_hi = min(t_hi, tb)
            if t_hi <= t_lo:
                return False
    return t_hi > t_lo


def classify_element(receiver, beacon_pos, layout: Layout) -> GeometricElement:
    """Geometric element for a receiver position and a beacon position.

    The receiver is the first argument; corridor membership is decided
    by where the receiver stands, never by the beacon.
    """
    rx, ry = float(receiver[0]), float(receiver[1])
    if not (math.isfinite(rx) and math.isfinite(ry)):
        raise InvalidInputError("receiver position must be finite")
    for c in layout.corridors:
        if c.contains(rx, ry):
            return GeometricElement.CORRIDOR
    n = segment_crossings(receiver, beacon_pos, layout.stacks)
    if n == 0:
        return GeometricElement.FREE_SPACE
    if n == 1:
        return GeometricElement.ONE_STACK
    return GeometricElement.TWO_STACK


def element_map(receiver, layout: Layout) -> dict:
    """Element assignment for every beacon, keyed by beacon id."""
    return {
        b.id: classify_element(receiver, b.position, layout) for b in layout.beacons
    }


def layout_to_json(layout: Layout) -> dict:
    return {
        "schema": SCHEMA_LAYOUT,
        "width": float(layout.width),
        "length": float(layout.length),
        "stacks": [
            {"x": float(r.x), "y": float(r.y), "w": float(r.w), "h": float(r.h)}
            for r in layout.stacks
        ],
        "corridors": [
            {"x": float(r.x), "y": float(r.y), "w": float(r.w), "h": float(r.h)}
            for r in layout.corridors
        ],
        "beacons": [
            {
                "id": b.id,
                "x": float(b.x),
                "y": float(b.y),
                "rate_hz": float(b.rate_hz),
                "power_dbm": float(b.power_dbm),
                "known": bool(b.known),
            }
            for b in layout.beacons
        ],
    }


def _rect_from_obj(obj, what: str) -> Rect:
    try:
        return Rect(float(obj["x"]), float(obj["y"]), float(obj["w"]), float(obj["h"]))
    except KeyError as e:
        raise InvalidInputError(f"{what} entry missing field {e.args[0]!r}") from e


def layout_from_json(obj: dict) -> Layout:
    if not isinstance(obj, dict):
        raise InvalidInputError("layout document must be a JSON object")
    schema = obj.get("schema", SCHEMA_LAYOUT)
    if schema != SCHEMA_LAYOUT:
        raise InvalidInputError(f"unsupported layout schema {schema!r}")
    try:
        width = float(obj["width"])
        length = float(obj["length"])
    except KeyError as e:
        raise InvalidInputError(f"layout missing field {e.args[0]!r}") from e
    stacks = tuple(_rect_from_obj(o, "stack") for o in obj.get("stacks", []))
    # Desk strips behave like corridors for classification purposes, so
    # an optional "desks" list is folded into the corridor set.
    corridors = tuple(
        _rect_from_obj(o, "corridor") for o in obj.get("corridors", [])
    ) + tuple(_rect_from_obj(o, "desk") for o in obj.get("desks", []))
    beacons = []
    for o in obj.get("beacons", []):
        try:
            beacons.append(
                Beacon(
                    id=str(o["id"]),
                    x=float(o["x"]),
                    y=float(o["y"]),
                    rate_hz=float(o.get("rate_hz", 10.0)),
                    power_dbm=float(o.get("power_dbm", -15.0)),
                    known=bool(o.get("known", True)),
                )
            )
        except KeyError as e:
            raise InvalidInputError(f"beacon entry missing field {e.args[0]!r}") from e
    return Layout(
        width=width,
        length=length,
        stacks=stacks,
        corridors=corridors,
        beacons=tuple(beacons),
    )


def load_layout(path) -> Layout:
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path}: not valid JSON ({e})") from e
    return layout_from_json(obj)


def save_layout(layout: Layout, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(layout_to_json(layout), f, indent=2, sort_keys=True)
        f.write("\n")
