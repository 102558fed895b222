"""Built-in desk-scale scenarios.

Two floorplans with matching ground-truth models:

* ``library``  14 x 8 m room, three long shelving stacks with 0.7 m
               aisles, side corridors, 60 shelf-face beacons at 0.91 m
               spacing, 12 training spots
* ``retail``   10 x 10 m room, three steel stacks with 1.8 m aisles
               plus one cross stack, 38 beacons at 1 m spacing, 9
               training spots

The true links are quadratics in raw distance with per-element
intercept offsets: reception is nearly flat inside a couple of meters
(counts say little about range there), falls off steeply in the
mid-to-far field (counts say a lot), shelving costs roughly one to two
logits per stack, and corridors decay noticeably slower.  The true
RSSI world is log-distance path loss with per-packet noise and a
decode threshold; both worlds drive the same simulator.
"""

from dataclasses import dataclass, replace

import numpy as np

from .baselines import RssiPathModel
from .errors import InvalidInputError
from .geometry import Beacon, GeometricElement, Layout, Rect
from .prp_model import LinkParams, PrpModel, Standardization

DEFAULT_RATE_HZ = 10.0
DEFAULT_POWER_DBM = -15.0


@dataclass(frozen=True)
class Preset:
    """A named scenario: floorplan, truth, and where people stand."""

    name: str
    layout: Layout
    true_model: PrpModel
    training_spots: tuple
    eval_waypoints: tuple
    delta: float = 10.0
    train_window: float = 60.0


def _quad_link(intercept: float, slope: float, curve: float) -> LinkParams:
    # power enters linearly so the -15 dBm default contributes -1.2 logits
    return LinkParams(
        w0=intercept + 1.2,
        w=(slope, 0.0, 0.08),
        w_pair=(curve, 0.0, 0.0, 0.0, 0.0, 0.0),
    )


def _true_model(offsets: dict, corridor_curve: float) -> PrpModel:
    slope, curve = -0.10, -0.030
    return PrpModel(
        elements={
            GeometricElement.FREE_SPACE: _quad_link(offsets["F_S"], slope, curve),
            GeometricElement.ONE_STACK: _quad_link(offsets["ONE_S"], slope, curve),
            GeometricElement.TWO_STACK: _quad_link(offsets["TWO_S"], slope, curve),
            GeometricElement.CORRIDOR: _quad_link(offsets["C"], slope, corridor_curve),
        },
        standardization=Standardization.identity(),
        prior_sigma=10.0,
        rssi=RssiPathModel(
            p_ref=-60.0, path_exponent=2.0, noise_sigma=4.0, decode_threshold=-95.0
        ),
    )


def _beacons(points, rate_hz=DEFAULT_RATE_HZ, power_dbm=DEFAULT_POWER_DBM) -> tuple:
    return tuple(
        Beacon(id=f"b{i:02d}", x=px, y=py, rate_hz=rate_hz, power_dbm=power_dbm)
        for i, (px, py) in enumerate(points)
    )


def _library() -> Preset:
    stacks = (
        Rect(1.5, 2.55, 11.0, 0.5),
        Rect(1.5, 3.75, 11.0, 0.5),
        Rect(1.5, 4.95, 11.0, 0.5),
    )
    corridors = (Rect(0.0, 0.0, 1.2, 8.0), Rect(12.8, 0.0, 1.2, 8.0))
    faces = []
    for r in stacks:
        faces.append(r.y)
        faces.append(r.y2)
    points = []
    for fy in faces:
        for i in range(10):
            points.append((2.905 + 0.91 * i, fy))
    layout = Layout(
        width=14.0,
        length=8.0,
        stacks=stacks,
        corridors=corridors,
        beacons=_beacons(points),
    )
    spots = (
        (2.0, 1.2),
        (7.0, 1.5),
        (12.0, 1.0),
        (3.5, 3.4),
        (9.0, 3.45),
        (5.5, 4.6),
        (11.0, 4.55),
        (2.5, 6.2),
        (8.0, 6.5),
        (13.0, 7.0),
        (0.6, 2.0),
        (13.4, 4.3),
    )
    route = (
        (0.6, 1.0),
        (3.0, 1.2),
        (11.0, 1.5),
        (13.4, 3.0),
        (11.0, 3.4),
        (3.0, 3.45),
        (0.6, 3.5),
        (0.6, 4.5),
        (3.0, 4.6),
        (11.0, 4.65),
        (13.4, 4.65),
        (13.4, 6.0),
        (11.0, 6.3),
        (3.0, 6.6),
        (0.6, 7.2),
    )
    model = _true_model(
        {"F_S": 3.0, "ONE_S": 1.8, "TWO_S": 0.5, "C": 2.5}, corridor_curve=-0.018
    )
    return Preset(
        name="library",
        layout=layout,
        true_model=model,
        training_spots=spots,
        eval_waypoints=route,
    )


def _retail() -> Preset:
    stacks = (
        Rect(0.5, 1.0, 7.5, 1.27),
        Rect(0.5, 4.07, 7.5, 1.27),
        Rect(0.5, 7.14, 7.5, 1.27),
        Rect(8.6, 2.0, 1.27, 6.0),
    )
    corridors = (Rect(0.0, 0.0, 0.45, 10.0),)
    points = []
    for r in stacks[:3]:
        for fy in (r.y, r.y2):
            for i in range(5):
                points.append((2.25 + 1.0 * i, fy))
    v = stacks[3]
    for fx in (v.x, v.x2):
        for i in range(4):
            points.append((fx, 3.5 + 1.0 * i))
    layout = Layout(
        width=10.0,
        length=10.0,
        stacks=stacks,
        corridors=corridors,
        beacons=_beacons(points),
    )
    spots = (
        (1.0, 0.5),
        (5.0, 3.2),
        (8.3, 0.7),
        (2.5, 6.2),
        (7.0, 6.3),
        (4.0, 9.2),
        (9.3, 9.0),
        (0.2, 5.0),
        (6.0, 0.6),
    )
    route = (
        (0.2, 0.5),
        (4.0, 0.6),
        (8.2, 0.7),
        (8.2, 3.2),
        (5.0, 3.2),
        (1.0, 3.0),
        (0.2, 3.5),
        (0.2, 5.0),
        (1.0, 6.2),
        (7.0, 6.3),
        (8.2, 6.3),
        (8.2, 9.2),
        (4.0, 9.3),
        (0.2, 9.5),
    )
    # steel shelving attenuates harder than library wood
    model = _true_model(
        {"F_S": 3.0, "ONE_S": 1.2, "TWO_S": -0.8, "C": 2.5}, corridor_curve=-0.018
    )
    return Preset(
        name="retail",
        layout=layout,
        true_model=model,
        training_spots=spots,
        eval_waypoints=route,
    )


_BUILDERS = {"library": _library, "retail": _retail}

PRESET_NAMES = tuple(sorted(_BUILDERS))


def get_preset(name: str) -> Preset:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        ) from None
    return builder()


def _even_indices(n_total: int, n_keep: int) -> list:
    if not 1 <= n_keep <= n_total:
        raise InvalidInputError(f"cannot keep {n_keep} of {n_total}")
    idx = np.round(np.linspace(0, n_total - 1, n_keep)).astype(int)
    return sorted(set(int(i) for i in idx))


def select_beacons(layout: Layout, n_keep: int) -> Layout:
    """Layout with an evenly spaced subset of the beacons."""
    idx = _even_indices(len(layout.beacons), n_keep)
    return replace(layout, beacons=tuple(layout.beacons[i] for i in idx))


def with_known_beacons(layout: Layout, n_known: int) -> Layout:
    """Mark an evenly spaced subset of beacons as surveyed.

    The remaining beacons keep their coordinates for simulation but are
    flagged unknown, so training has to recover them.
    """
    idx = set(_even_indices(len(layout.beacons), n_known))
    beacons = tuple(
        replace(b, known=(i in idx)) for i, b in enumerate(layout.beacons)
    )
    return replace(layout, beacons=beacons)


def select_spots(spots, n_keep: int) -> tuple:
    """Evenly spaced subset of training spots."""
    idx = _even_indices(len(spots), n_keep)
    return tuple(spots[i] for i in idx)
