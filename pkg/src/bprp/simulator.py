"""Synthetic packet logs from a floorplan, a trajectory, and a model.

Packets are simulated one at a time: a beacon with rate R emits its
k-th packet of a window at ``window_start + k / R``, the receiver
position is interpolated to that instant, and the decode succeeds with
the reception probability of the (element, distance, rate, power)
tuple.  Signal strength is only generated for decoded packets, drawn
from the path-loss model truncated at the decode threshold, which is
exactly the selection effect that biases naive RSSI averages upward on
weak links.

All randomness flows through labeled substreams of the run seed, one
per (receiver, window, beacon), so logs are byte-stable under re-runs
and under changes to the order in which windows are generated.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import _kernels
from .errors import DataMismatchError, InvalidInputError, OutOfBoundsError
from .geometry import Layout, corridor_array, stack_array
from .prp_model import ObservationWindow, PrpModel, packets_sent
from .rng import substream

PACKET_LOG_HEADER = (
    "receiver_id",
    "window_start",
    "beacon_id",
    "packets_received",
    "t_first",
    "t_last",
    "mean_rssi",
)

TRAJECTORY_HEADER = ("t", "x", "y", "speed")

_TINY = 5e-324


@dataclass(frozen=True)
class SimConfig:
    """Knobs of the packet simulator.

    ``delta`` is the aggregation window in seconds; only windows that
    fit entirely inside the trajectory's time span are emitted.
    """

    seed: int
    delta: float = 10.0
    tick: float = 0.1

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInputError("seed must fit in an unsigned 64-bit integer")
        if self.delta <= 0 or not math.isfinite(self.delta):
            raise InvalidInputError(f"delta must be positive, got {self.delta}")
        if self.tick <= 0 or not math.isfinite(self.tick):
            raise InvalidInputError(f"tick must be positive, got {self.tick}")


@dataclass(frozen=True)
class Trajectory:
    """Receiver path sampled at increasing times.

    ``speed[i]`` is the walking speed on the segment from ``t[i]`` to
    ``t[i+1]``; the last entry describes no segment and is conventionally
    zero.  Positions between samples are linear interpolations.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    speed: np.ndarray

    def __post_init__(self):
        for name in ("t", "x", "y", "speed"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=np.float64)
            )
        n = self.t.shape[0]
        if n < 2:
            raise InvalidInputError("trajectory needs at least two samples")
        for name in ("t", "x", "y", "speed"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise InvalidInputError("trajectory columns must have equal length")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"trajectory column {name} must be finite")
        if not np.all(np.diff(self.t) > 0):
            raise InvalidInputError("trajectory times must be strictly increasing")
        if np.any(self.speed < 0):
            raise InvalidInputError("speeds must be non-negative")
        dt = np.diff(self.t)
        step = np.hypot(np.diff(self.x), np.diff(self.y))
        bound = self.speed[:-1] * dt
        if np.any(step > bound * (1 + 1e-9) + 1e-9):
            raise InvalidInputError(
                "trajectory step exceeds its segment speed times duration"
            )

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def position_at(self, times) -> tuple:
        times = np.asarray(times, dtype=np.float64)
        return np.interp(times, self.t, self.x), np.interp(times, self.t, self.y)


def stationary_trajectory(position, duration: float, t0: float = 0.0) -> Trajectory:
    """A receiver that stands still at one spot for a duration."""
    if duration <= 0:
        raise InvalidInputError("duration must be positive")
    px, py = float(position[0]), float(position[1])
    return Trajectory(
        t=np.array([t0, t0 + duration]),
        x=np.array([px, px]),
        y=np.array([py, py]),
        speed=np.zeros(2),
    )


def generate_trajectory(
    waypoints,
    walk_speed: float = 0.5,
    dwell: float = 10.0,
    t0: float = 0.0,
) -> Trajectory:
    """Dwell at each waypoint, then walk straight to the next.

    Deterministic: no sampling is involved, so the same waypoints give
    the same trajectory.  Dwell applies at every waypoint including the
    last.
    """
    if walk_speed <= 0:
        raise InvalidInputError("walk_speed must be positive")
    if dwell <= 0:
        raise InvalidInputError("dwell must be positive")
    pts = [(float(p[0]), float(p[1])) for p in waypoints]
    if not pts:
        raise InvalidInputError("need at least one waypoint")
    ts, xs, ys, ss = [], [], [], []
    now = t0
    for i, (px, py) in enumerate(pts):
        ts.append(now)
        xs.append(px)
        ys.append(py)
        ss.append(0.0)
        now += dwell
        ts.append(now)
        xs.append(px)
        ys.append(py)
        if i + 1 < len(pts):
            nx, ny = pts[i + 1]
            gap = math.hypot(nx - px, ny - py)
            if gap == 0.0:
                raise InvalidInputError(f"consecutive waypoints {i} and {i + 1} coincide")
            ss.append(walk_speed)
            now += gap / walk_speed
        else:
            ss.append(0.0)
    return Trajectory(t=np.array(ts), x=np.array(xs), y=np.array(ys), speed=np.array(ss))


def _truncnorm_upper(mu, sigma: float, alpha: float, u) -> np.ndarray:
    """Inverse-CDF draws of Normal(mu, sigma) conditioned on >= alpha.

    When the surviving tail underflows entirely, the conditional law
    degenerates onto the threshold and the draw is alpha itself.
    """
    mu = np.asarray(mu, dtype=np.float64)
    z = (alpha - mu) / sigma
    tail = 0.5 * np.vectorize(math.erfc)(z / math.sqrt(2.0))
    r = np.maximum(np.asarray(u) * tail, _TINY)
    return np.maximum(alpha, mu - sigma * ndtri(r))


def simulate_truncated_rssi(
    mu: float, sigma: float, alpha: float, size: int, rng
) -> np.ndarray:
    """Sample RSSI readings that survive the decode threshold."""
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    return _truncnorm_upper(np.full(size, float(mu)), sigma, alpha, rng.random(size))


def simulate_packets(
    layout: Layout,
    trajectory: Trajectory,
    model: PrpModel,
    config: SimConfig,
    receiver_id: str = "r0",
) -> list:
    """Packet-log rows for one receiver following a trajectory.

    Returns one ObservationWindow per (window, beacon), including
    zero-count rows; rows are ordered by window start, then by the
    layout's beacon order.
    """
    if not layout.beacons:
        raise InvalidInputError("layout has no beacons")
    if not receiver_id:
        raise InvalidInputError("receiver_id must be non-empty")
    xs, ys = trajectory.x, trajectory.y
    if np.any(xs < 0) or np.any(xs > layout.width) or np.any(ys < 0) or np.any(
        ys > layout.length
    ):
        raise OutOfBoundsError("trajectory leaves the floorplan")
    stacks = stack_array(layout)
    corridors = corridor_array(layout)
    coef = model.coef_table()
    sm = model.standardization.mean_array()
    ss = model.standardization.sd_array()
    span = trajectory.t_end - trajectory.t_start
    n_win = int(math.floor(span / config.delta + 1e-9))
    if n_win < 1:
        raise InvalidInputError(
            f"trajectory span {span:.3g} s is shorter than one window of {config.delta} s"
        )
    rows = []
    for w in range(n_win):
        ws = trajectory.t_start + w * config.delta
        for b in layout.beacons:
            n_pkt = packets_sent(b.rate_hz, config.delta)
            tk = ws + np.arange(n_pkt) / b.rate_hz
            px, py = trajectory.position_at(tk)
            d = np.hypot(px - b.x, py - b.y)
            still = px[0] == px[-1] and py[0] == py[-1] and np.all(px == px[0]) and np.all(py == py[0])
            if still:
                codes = np.full(
                    n_pkt,
                    _kernels.classify_point(px[0], py[0], b.x, b.y, stacks, corridors),
                    dtype=np.int64,
                )
            else:
                codes = np.array(
                    [
                        _kernels.classify_point(px[k], py[k], b.x, b.y, stacks, corridors)
                        for k in range(n_pkt)
                    ],
                    dtype=np.int64,
                )
            z1 = (d - sm[0]) / ss[0]
            z2 = (b.rate_hz - sm[1]) / ss[1]
            z3 = (b.power_dbm - sm[2]) / ss[2]
            eta = _kernels._eta_np(coef[codes], z1, z2, z3)
            g = 1.0 / (1.0 + np.exp(-eta))
            rng = substream(config.seed, "packets", receiver_id, w, b.id)
            hit = rng.random(n_pkt) < g
            c = int(np.count_nonzero(hit))
            if c == 0:
                rows.append(
                    ObservationWindow(
                        receiver_id=receiver_id,
                        window_start=float(ws),
                        beacon_id=b.id,
                        packets_received=0,
                    )
                )
                continue
            t_hit = tk[hit]
            mean_rssi = None
            if model.rssi is not None:
                dc = np.maximum(d[hit], 1e-9)
                mu = model.rssi.p_ref - 10.0 * model.rssi.path_exponent * np.log10(dc)
                readings = _truncnorm_upper(
                    mu,
                    model.rssi.noise_sigma,
                    model.rssi.decode_threshold,
                    rng.random(c),
                )
                mean_rssi = float(np.mean(readings))
            rows.append(
                ObservationWindow(
                    receiver_id=receiver_id,
                    window_start=float(ws),
                    beacon_id=b.id,
                    packets_received=c,
                    t_first=float(t_hit[0]),
                    t_last=float(t_hit[-1]),
                    mean_rssi=mean_rssi,
                )
            )
    return rows


# ---------------------------------------------------------------------------
# file formats


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def write_packet_log(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(PACKET_LOG_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r.receiver_id,
                    _fmt(r.window_start),
                    r.beacon_id,
                    str(r.packets_received),
                    _fmt(r.t_first),
                    _fmt(r.t_last),
                    _fmt(r.mean_rssi),
                ]
            )


def read_packet_log(path, window_length: float = None) -> list:
    """Parse a packet log, optionally checking rows against a window length."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != PACKET_LOG_HEADER:
            raise InvalidInputError(
                f"{path}: expected packet-log header {','.join(PACKET_LOG_HEADER)}"
            )
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(PACKET_LOG_HEADER):
                raise InvalidInputError(f"{path}:{lineno}: wrong field count")
            try:
                row = ObservationWindow(
                    receiver_id=rec[0],
                    window_start=float(rec[1]),
                    beacon_id=rec[2],
                    packets_received=int(rec[3]),
                    t_first=float(rec[4]) if rec[4] else None,
                    t_last=float(rec[5]) if rec[5] else None,
                    mean_rssi=float(rec[6]) if rec[6] else None,
                )
            except (ValueError, InvalidInputError) as e:
                raise InvalidInputError(f"{path}:{lineno}: {e}") from e
            if (
                window_length is not None
                and row.t_last is not None
                and row.t_last > row.window_start + window_length + 1e-9
            ):
                raise DataMismatchError(
                    f"{path}:{lineno}: t_last outside its {window_length} s window"
                )
            rows.append(row)
    return rows


def write_trajectory(traj: Trajectory, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRAJECTORY_HEADER)
        for i in range(traj.t.shape[0]):
            writer.writerow(
                [
                    _fmt(traj.t[i]),
                    _fmt(traj.x[i]),
                    _fmt(traj.y[i]),
                    _fmt(traj.speed[i]),
                ]
            )


def read_trajectory(path) -> Trajectory:
    cols = {name: [] for name in TRAJECTORY_HEADER}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != TRAJECTORY_HEADER:
            raise InvalidInputError(
                f"{path}: expected trajectory header {','.join(TRAJECTORY_HEADER)}"
            )
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise InvalidInputError(f"{path}:{lineno}: wrong field count")
            try:
                for name, val in zip(TRAJECTORY_HEADER, rec):
                    cols[name].append(float(val))
            except ValueError as e:
                raise InvalidInputError(f"{path}:{lineno}: {e}") from e
    try:
        return Trajectory(
            t=np.array(cols["t"]),
            x=np.array(cols["x"]),
            y=np.array(cols["y"]),
            speed=np.array(cols["speed"]),
        )
    except InvalidInputError as e:
        raise InvalidInputError(f"{path}: {e}") from e
