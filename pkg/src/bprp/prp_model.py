"""Packet-reception observation model.

The chance that a receiver decodes a packet from a beacon is

    g = sigmoid(eta),    eta = w0 + w . z + sum_{i<=j} w_ij z_i z_j

where z is the z-scored feature triple (distance, advertising rate,
transmit power) and each geometric element carries its own coefficient
set.  Over a window in which the beacon sent N packets the decoded
count is Binomial(N, g).

The module also carries the two window-summary estimators the rest of
the package builds on: the empirical reception-probability estimate
from a packet count and first/last decode times, and the mean of
threshold-truncated RSSI readings, which quantifies how badly a naive
RSSI average flatters weak links (readings below the decode threshold
never make it into the log).
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InsufficientDataError, InvalidInputError, SaturationError
from .geometry import ELEMENT_ORDER, GeometricElement

SCHEMA_MODEL = "model_v1"

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def logit(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"logit argument must be in (0, 1), got {p}")
    return math.log(p) - math.log1p(-p)


@dataclass(frozen=True)
class ObservationWindow:
    """One (receiver, window, beacon) row of a packet log.

    ``t_first``/``t_last`` are the decode times of the first and last
    packet received in the window; all three optional fields must be
    absent when no packet was decoded.  A receiver may decode packets
    without logging signal strength, so ``mean_rssi`` stays optional
    even for positive counts.
    """

    receiver_id: str
    window_start: float
    beacon_id: str
    packets_received: int
    t_first: float = None
    t_last: float = None
    mean_rssi: float = None

    def __post_init__(self):
        if not self.receiver_id or not self.beacon_id:
            raise InvalidInputError("receiver_id and beacon_id must be non-empty")
        if not math.isfinite(self.window_start):
            raise InvalidInputError("window_start must be finite")
        c = self.packets_received
        if not isinstance(c, (int, np.integer)) or c < 0:
            raise InvalidInputError(
                f"packets_received must be a non-negative integer, got {c!r}"
            )
        if c == 0:
            for name in ("t_first", "t_last", "mean_rssi"):
                if getattr(self, name) is not None:
                    raise InvalidInputError(
                        f"{name} must be absent when no packet was received"
                    )
            return
        if self.t_first is None or self.t_last is None:
            raise InvalidInputError("decode times are required for a positive count")
        if not (math.isfinite(self.t_first) and math.isfinite(self.t_last)):
            raise InvalidInputError("decode times must be finite")
        if self.t_first < self.window_start:
            raise InvalidInputError("t_first precedes the window start")
        if self.t_last < self.t_first:
            raise InvalidInputError("t_last precedes t_first")
        if c == 1 and self.t_last != self.t_first:
            raise InvalidInputError("a single decode must have t_first == t_last")
        if self.mean_rssi is not None and not math.isfinite(self.mean_rssi):
            raise InvalidInputError("mean_rssi must be finite when present")


@dataclass(frozen=True)
class LinkParams:
    """Coefficients of the reception-probability link for one element.

    ``w`` holds the linear terms in feature order (distance, rate,
    power); ``w_pair`` the pairwise terms in order (dd, dR, dp, RR, Rp,
    pp).
    """

    w0: float
    w: tuple
    w_pair: tuple

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(float(v) for v in self.w))
        object.__setattr__(self, "w_pair", tuple(float(v) for v in self.w_pair))
        if len(self.w) != 3 or len(self.w_pair) != 6:
            raise InvalidInputError(
                "link needs 3 linear and 6 pairwise coefficients, got "
                f"{len(self.w)} and {len(self.w_pair)}"
            )
        for v in (self.w0,) + self.w + self.w_pair:
            if not math.isfinite(v):
                raise InvalidInputError("link coefficients must be finite")

    def as_row(self) -> np.ndarray:
        return np.array((self.w0,) + self.w + self.w_pair, dtype=np.float64)

    @classmethod
    def from_row(cls, row) -> "LinkParams":
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (10,):
            raise InvalidInputError(f"coefficient row must have 10 entries, got {row.shape}")
        return cls(float(row[0]), tuple(row[1:4]), tuple(row[4:10]))


def link_eta(params: LinkParams, z1: float, z2: float, z3: float) -> float:
    """Linear predictor on already-standardized features."""
    w = params.w
    q = params.w_pair
    return (
        params.w0
        + w[0] * z1
        + w[1] * z2
        + w[2] * z3
        + q[0] * z1 * z1
        + q[1] * z1 * z2
        + q[2] * z1 * z3
        + q[3] * z2 * z2
        + q[4] * z2 * z3
        + q[5] * z3 * z3
    )


def link_g(params: LinkParams, z1: float, z2: float, z3: float) -> float:
    """Reception probability on already-standardized features."""
    return sigmoid(link_eta(params, z1, z2, z3))


@dataclass(frozen=True)
class Standardization:
    """Per-feature z-scoring constants in order (distance, rate, power)."""

    mean: tuple
    sd: tuple

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "sd", tuple(float(v) for v in self.sd))
        if len(self.mean) != 3 or len(self.sd) != 3:
            raise InvalidInputError("standardization needs 3 means and 3 sds")
        for v in self.mean + self.sd:
            if not math.isfinite(v):
                raise InvalidInputError("standardization constants must be finite")
        if any(s <= 0 for s in self.sd):
            raise InvalidInputError("standardization sds must be positive")

    @classmethod
    def identity(cls) -> "Standardization":
        return cls(mean=(0.0, 0.0, 0.0), sd=(1.0, 1.0, 1.0))

    def zscore(self, d: float, rate: float, power: float) -> tuple:
        m, s = self.mean, self.sd
        return ((d - m[0]) / s[0], (rate - m[1]) / s[1], (power - m[2]) / s[2])

    def mean_array(self) -> np.ndarray:
        return np.asarray(self.mean, dtype=np.float64)

    def sd_array(self) -> np.ndarray:
        return np.asarray(self.sd, dtype=np.float64)


def rebase_link_params(
    params: LinkParams, old: Standardization, new: Standardization
) -> LinkParams:
    """Re-express a link under a different standardization.

    The returned coefficients give the same eta for every raw feature
    triple: with z = (x - m)/s and z' = (x - m')/s' we have
    z = a + B z' where a = (m' - m)/s and B = diag(s'/s), and the
    quadratic form is pushed through that affine map exactly.
    """
    a = (new.mean_array() - old.mean_array()) / old.sd_array()
    bdiag = new.sd_array() / old.sd_array()
    w = np.asarray(params.w)
    q = params.w_pair
    amat = np.array(
        [
            [q[0], q[1] / 2.0, q[2] / 2.0],
            [q[1] / 2.0, q[3], q[4] / 2.0],
            [q[2] / 2.0, q[4] / 2.0, q[5]],
        ]
    )
    bmat = np.diag(bdiag)
    w0_new = params.w0 + float(w @ a) + float(a @ amat @ a)
    w_new = bmat @ w + 2.0 * (bmat @ amat @ a)
    a_new = bmat @ amat @ bmat
    q_new = (
        a_new[0, 0],
        2.0 * a_new[0, 1],
        2.0 * a_new[0, 2],
        a_new[1, 1],
        2.0 * a_new[1, 2],
        a_new[2, 2],
    )
    return LinkParams(w0=w0_new, w=tuple(w_new), w_pair=q_new)


@dataclass(frozen=True)
class PrpModel:
    """Reception-probability model: one link per geometric element."""

    elements: dict
    standardization: Standardization
    prior_sigma: float = 10.0
    rssi: object = None

    def __post_init__(self):
        missing = [e.value for e in ELEMENT_ORDER if e not in self.elements]
        if missing:
            raise InvalidInputError(f"model missing elements: {missing}")
        extra = set(self.elements) - set(ELEMENT_ORDER)
        if extra:
            raise InvalidInputError(f"unknown elements in model: {sorted(extra)}")
        if not (math.isfinite(self.prior_sigma) and self.prior_sigma > 0):
            raise InvalidInputError("prior_sigma must be positive and finite")

    def coef_table(self) -> np.ndarray:
        """(4, 10) coefficient array in element-code order."""
        return np.stack([self.elements[e].as_row() for e in ELEMENT_ORDER])

    def eta(self, element: GeometricElement, d: float, rate: float, power: float) -> float:
        z1, z2, z3 = self.standardization.zscore(d, rate, power)
        return link_eta(self.elements[element], z1, z2, z3)

    def prp(self, element: GeometricElement, d: float, rate: float, power: float) -> float:
        return sigmoid(self.eta(element, d, rate, power))

    def with_rssi(self, rssi) -> "PrpModel":
        return replace(self, rssi=rssi)


def packets_sent(rate_hz: float, duration: float) -> int:
    """Number of advertising packets a beacon emits over a duration."""
    if rate_hz <= 0 or duration <= 0:
        raise InvalidInputError("rate and duration must be positive")
    return max(1, round(rate_hz * duration))


def estimate_prp(window: ObservationWindow, rate_hz: float) -> float:
    """Empirical reception probability from one observation window.

    count / (rate * (t_last - t_first)), clamped into (0, 1].  Needs at
    least two decoded packets; with fewer the span is undefined.
    """
    if rate_hz <= 0:
        raise InvalidInputError(f"rate_hz must be positive, got {rate_hz}")
    if window.packets_received < 2:
        raise InsufficientDataError(
            "reception-probability estimate needs at least two decoded packets"
        )
    span = window.t_last - window.t_first
    if span <= 0.0:
        # all decodes collapsed onto one timestamp: saturated link
        return 1.0
    return min(1.0, window.packets_received / (rate_hz * span))


def count_log_likelihood(count: int, n_sent: int, prp: float) -> float:
    """Binomial log-pmf of a decoded-packet count."""
    if not isinstance(count, (int, np.integer)) or not isinstance(
        n_sent, (int, np.integer)
    ):
        raise InvalidInputError("count and n_sent must be integers")
    if n_sent < 1 or count < 0 or count > n_sent:
        raise InvalidInputError(f"need 0 <= count <= n_sent, got {count}/{n_sent}")
    if not 0.0 <= prp <= 1.0:
        raise InvalidInputError(f"prp must be in [0, 1], got {prp}")
    log_c = (
        math.lgamma(n_sent + 1) - math.lgamma(count + 1) - math.lgamma(n_sent - count + 1)
    )
    if prp == 0.0:
        return 0.0 if count == 0 else _neg_inf()
    if prp == 1.0:
        return 0.0 if count == n_sent else _neg_inf()
    return log_c + count * math.log(prp) + (n_sent - count) * math.log1p(-prp)


def _neg_inf() -> float:
    return float("-inf")


def truncated_rssi_mean(mu: float, sigma: float, alpha: float) -> float:
    """Mean of Normal(mu, sigma) readings conditioned on reading >= alpha.

    This is what a log of decoded packets averages to when the radio
    only decodes above the threshold alpha:

        mu + sigma * phi(z) / (1 - Phi(z)),   z = (alpha - mu) / sigma.

    Raises SaturationError when the surviving tail mass underflows to
    an exact zero, i.e. the threshold sits so far above mu that the
    conditional mean is not representable.
    """
    if sigma <= 0 or not math.isfinite(sigma):
        raise InvalidInputError(f"sigma must be positive and finite, got {sigma}")
    if not (math.isfinite(mu) and math.isfinite(alpha)):
        raise InvalidInputError("mu and alpha must be finite")
    z = (alpha - mu) / sigma
    tail = 0.5 * math.erfc(z / _SQRT2)
    if tail == 0.0:
        raise SaturationError(
            f"truncation tail underflowed at z={z:.3g}; threshold too far above mean"
        )
    phi = math.exp(-0.5 * z * z) / _SQRT_2PI
    return mu + sigma * phi / tail


def sampling_bias(mu: float, sigma: float, alpha: float) -> float:
    """How much threshold truncation inflates an observed RSSI mean."""
    return truncated_rssi_mean(mu, sigma, alpha) - mu


# ---------------------------------------------------------------------------
# serialization


def model_to_json(model: PrpModel) -> dict:
    obj = {
        "schema": SCHEMA_MODEL,
        "elements": {
            e.value: {
                "w0": float(model.elements[e].w0),
                "w": [float(v) for v in model.elements[e].w],
                "w_pair": [float(v) for v in model.elements[e].w_pair],
            }
            for e in ELEMENT_ORDER
        },
        "standardization": {
            "mean": [float(v) for v in model.standardization.mean],
            "sd": [float(v) for v in model.standardization.sd],
        },
        "prior_sigma": float(model.prior_sigma),
    }
    if model.rssi is not None:
        r = model.rssi
        obj["rssi"] = {
            "p_ref": float(r.p_ref),
            "path_exponent": float(r.path_exponent),
            "noise_sigma": float(r.noise_sigma),
            "alpha": float(r.decode_threshold),
        }
    return obj


def model_from_json(obj: dict) -> PrpModel:
    if not isinstance(obj, dict):
        raise InvalidInputError("model document must be a JSON object")
    schema = obj.get("schema", SCHEMA_MODEL)
    if schema != SCHEMA_MODEL:
        raise InvalidInputError(f"unsupported model schema {schema!r}")
    try:
        raw_elems = obj["elements"]
        elements = {}
        for e in ELEMENT_ORDER:
            entry = raw_elems[e.value]
            elements[e] = LinkParams(
                w0=float(entry["w0"]),
                w=tuple(float(v) for v in entry["w"]),
                w_pair=tuple(float(v) for v in entry["w_pair"]),
            )
        std_obj = obj["standardization"]
        std = Standardization(
            mean=tuple(float(v) for v in std_obj["mean"]),
            sd=tuple(float(v) for v in std_obj["sd"]),
        )
    except KeyError as e:
        raise InvalidInputError(f"model document missing field {e.args[0]!r}") from e
    rssi = None
    if "rssi" in obj:
        from .baselines import RssiPathModel

        r = obj["rssi"]
        try:
            rssi = RssiPathModel(
                p_ref=float(r["p_ref"]),
                path_exponent=float(r["path_exponent"]),
                noise_sigma=float(r["noise_sigma"]),
                decode_threshold=float(r["alpha"]),
            )
        except KeyError as e:
            raise InvalidInputError(f"rssi block missing field {e.args[0]!r}") from e
    return PrpModel(
        elements=elements,
        standardization=std,
        prior_sigma=float(obj.get("prior_sigma", 10.0)),
        rssi=rssi,
    )


def load_model(path) -> PrpModel:
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path}: not valid JSON ({e})") from e
    return model_from_json(obj)


def save_model(model: PrpModel, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_json(model), f, indent=2, sort_keys=True)
        f.write("\n")
